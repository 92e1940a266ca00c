"""Desk-scale infrared tracker components.

Masked cross-attention (IMC/STEN), dual-branch spatial and channel fusion
(DSFAM/DCFAM), target-aware contextual attention distillation (TCAKD), and
the single-object-tracking metric suite, backed by the C++ core.
"""

from ._siamdff import *  # noqa: F401,F403
from ._siamdff import __doc__ as _core_doc  # noqa: F401

"""Smoke tests for the Python bindings. Plain asserts, no test framework."""

import math
import sys

import numpy as np

import siamdff


def test_primitives():
    rows = siamdff.softmax_rows(np.array([[2.0, 1.0, -1.0]]))
    assert abs(rows.sum() - 1.0) < 1e-9
    assert abs(rows[0, 0] - 0.7054) < 1e-3

    assert siamdff.sigmoid(np.array([0.0]))[0] == 0.5

    eye = np.eye(3)
    m = np.arange(9, dtype=float).reshape(3, 3)
    assert np.array_equal(siamdff.matmul(eye, m), m)

    # 3x3 centered delta kernel is the identity under same-padding.
    x = np.random.default_rng(0).normal(size=(2, 5, 5))
    k = np.zeros((2, 2, 3, 3))
    k[0, 0, 1, 1] = 1.0
    k[1, 1, 1, 1] = 1.0
    assert np.allclose(siamdff.conv2d(x, k, 1), x)

    v = np.array([1.0, 2.0, 3.0])
    assert np.allclose(siamdff.conv1d_channels(v, np.array([1.0, 1.0, 1.0])), [3, 6, 5])

    pooled = siamdff.pool_over_channels(x, "avg")
    assert pooled.shape == (1, 5, 5)
    assert np.allclose(pooled[0], x.mean(axis=0))


def test_attention():
    rng = np.random.default_rng(1)
    q, k, v = rng.normal(size=(3, 4)), rng.normal(size=(5, 4)), rng.normal(size=(5, 4))
    full = siamdff.cross_attention(q, k, v)
    masked = siamdff.imc(q, k, v, 1.0)
    assert np.abs(full - masked).max() < 1e-9

    mask, cutoffs = siamdff.imc_mask(np.array([[2.0, 1.0, -1.0]]), 0.7)
    assert mask.tolist() == [[1.0, 0.0, 0.0]]
    assert cutoffs[0] == 2.0

    params = siamdff.StenParams.seeded(16, 4, 7)
    out = siamdff.sten_block(rng.normal(size=(6, 16)), rng.normal(size=(4, 16)), params)
    assert out.shape == (6, 16)
    assert np.isfinite(out).all()


def test_fusion():
    rng = np.random.default_rng(2)
    f_t, f_c = rng.normal(size=(4, 5, 5)), rng.normal(size=(4, 5, 5))
    fused = siamdff.dsfam_fuse(f_t, f_c, siamdff.DsfamParams.seeded(4, 11))
    assert fused.shape == (4, 5, 5)
    assert np.all(np.abs(fused) <= np.abs(f_t) + np.abs(f_c) + 1e-12)

    t_m, t_o = rng.normal(size=8), rng.normal(size=8)
    gates = siamdff.dcfam_fuse(t_m, t_o, siamdff.DcfamParams.seeded(3, 13))
    assert gates.shape == (8,)

    summed = siamdff.fuse_baseline(f_t, f_c, "sum")
    assert np.allclose(summed, f_t + f_c)
    stacked = siamdff.fuse_baseline(f_t, f_c, "concat")
    assert stacked.shape == (8, 5, 5)


def test_distill():
    rng = np.random.default_rng(3)
    f_z, f_x = rng.normal(size=(2, 3, 3)), rng.normal(size=(2, 4, 4))
    mask = np.zeros((3, 3))
    mask[1, 1] = 1.0
    attention = siamdff.target_attention_map(f_z, f_x, mask)
    assert attention.shape == (4, 4)
    assert (attention > 0).all() and (attention < 1).all()

    assert siamdff.tcakd_loss(attention, attention) == 0.0
    other = np.clip(attention + 0.05, 0, 1)
    assert siamdff.tcakd_loss(attention, other) > 0


def test_metrics():
    assert siamdff.iou((0, 0, 2, 2), (1, 1, 2, 2)) == 1 / 7
    assert siamdff.center_error((4, 4, 2, 2), (7, 8, 2, 2)) == 5.0
    assert abs(siamdff.normalized_center_error((3, 4, 3, 4), (0, 0, 3, 4)) - math.sqrt(2)) < 1e-12

    annos = [(0, (0.0, 0.0, 2.0, 4.0), True), (1, None, False)]
    preds = [(0.0, 0.0, 2.0, 2.0), None]
    assert siamdff.state_accuracy(preds, annos) == 0.75  # (0.5 + 1) / 2

    curve = siamdff.success_curve([(0.0, 0.0, 2.0, 2.0)], [annos[0]])
    assert abs(siamdff.auc(curve["thresholds"], curve["values"]) - 10 / 21) < 1e-12

    assert siamdff.msa([0.2, 0.8]) == 0.5


def test_generator():
    frames_a, annos_a = siamdff.generate_sequence(seed=5, frames=3, image_size=32, target_max=12)
    frames_b, annos_b = siamdff.generate_sequence(seed=5, frames=3, image_size=32, target_max=12)
    assert len(frames_a) == 3 and len(annos_a) == 3
    for fa, fb in zip(frames_a, frames_b):
        assert np.array_equal(fa, fb)
    for (idx, box, visible) in annos_a:
        assert visible and box is not None
        x, y, w, h = box
        assert 0 <= x and x + w <= 32 and 0 <= y and y + h <= 32


def main():
    tests = [
        test_primitives,
        test_attention,
        test_fusion,
        test_distill,
        test_metrics,
        test_generator,
    ]
    for test in tests:
        test()
        print(f"ok {test.__name__}")
    print(f"{len(tests)} python smoke tests passed")
    return 0


if __name__ == "__main__":
    sys.exit(main())

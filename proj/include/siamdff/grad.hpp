#pragma once

#include <functional>

#include "siamdff/params.hpp"

namespace siamdff {

using ScalarFn = std::function<real_t(const ParamSet&)>;
using GradFn = std::function<ParamSet(const ParamSet&)>;

/// Central finite differences against an analytic gradient. Returns the max
/// over all parameter entries of
///   |analytic - central| / max(1, |central|).
/// Throws if f evaluates to a non-finite value at any perturbed point.
real_t grad_check(const ScalarFn& f, const GradFn& analytic_grad, const ParamSet& params,
                  real_t h);

/// Central-difference gradient by itself, for tests that want the raw oracle.
ParamSet finite_difference_grad(const ScalarFn& f, const ParamSet& params, real_t h);

}  // namespace siamdff

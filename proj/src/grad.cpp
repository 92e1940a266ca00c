#include "siamdff/grad.hpp"

#include <cmath>
#include <stdexcept>

namespace siamdff {

namespace {

real_t eval_finite(const ScalarFn& f, const ParamSet& params) {
    const real_t v = f(params);
    if (!std::isfinite(v)) {
        throw std::runtime_error("grad_check: objective is non-finite at a perturbed point");
    }
    return v;
}

}  // namespace

ParamSet finite_difference_grad(const ScalarFn& f, const ParamSet& params, real_t h) {
    if (h <= real_t{0}) throw std::invalid_argument("finite_difference_grad: h must be > 0");
    ParamSet grad = params.zeros_like();
    ParamSet work = params;
    for (auto& [name, tensor] : work) {
        Tensor& g = grad.get(name);
        for (std::size_t i = 0; i < tensor.size(); ++i) {
            const real_t saved = tensor.at(i);
            tensor.at(i) = saved + h;
            const real_t up = eval_finite(f, work);
            tensor.at(i) = saved - h;
            const real_t down = eval_finite(f, work);
            tensor.at(i) = saved;
            g.at(i) = (up - down) / (real_t{2} * h);
        }
    }
    return grad;
}

real_t grad_check(const ScalarFn& f, const GradFn& analytic_grad, const ParamSet& params,
                  real_t h) {
    const ParamSet analytic = analytic_grad(params);
    const ParamSet numeric = finite_difference_grad(f, params, h);
    real_t worst = 0;
    for (const auto& [name, num] : numeric) {
        const Tensor& ana = analytic.get(name);
        if (!ana.same_shape(num)) {
            throw std::invalid_argument("grad_check: gradient shape mismatch for '" + name +
                                        "': " + shape_str(ana.shape()) + " vs " +
                                        shape_str(num.shape()));
        }
        for (std::size_t i = 0; i < num.size(); ++i) {
            const real_t denom = std::max(real_t{1}, std::abs(num.at(i)));
            worst = std::max(worst, std::abs(ana.at(i) - num.at(i)) / denom);
        }
    }
    return worst;
}

}  // namespace siamdff

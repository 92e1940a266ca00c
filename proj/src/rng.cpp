#include "siamdff/rng.hpp"

#include <cmath>

namespace siamdff {

Tensor random_uniform(Rng& rng, std::vector<std::size_t> shape, real_t lo, real_t hi) {
    Tensor t(std::move(shape));
    for (std::size_t i = 0; i < t.size(); ++i) {
        t.at(i) = static_cast<real_t>(rng.uniform(lo, hi));
    }
    return t;
}

Tensor random_normal(Rng& rng, std::vector<std::size_t> shape) {
    Tensor t(std::move(shape));
    for (std::size_t i = 0; i < t.size(); ++i) {
        t.at(i) = static_cast<real_t>(rng.normal());
    }
    return t;
}

Tensor fan_in_init(Rng& rng, std::vector<std::size_t> shape, std::size_t fan_in) {
    const real_t bound = static_cast<real_t>(1.0 / std::sqrt(static_cast<double>(fan_in)));
    return random_uniform(rng, std::move(shape), -bound, bound);
}

}  // namespace siamdff

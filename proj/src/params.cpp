#include "siamdff/params.hpp"

#include <stdexcept>

namespace siamdff {

const Tensor& ParamSet::get(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) {
        throw std::invalid_argument("no parameter named '" + name + "'");
    }
    return it->second;
}

Tensor& ParamSet::get(const std::string& name) {
    auto it = params_.find(name);
    if (it == params_.end()) {
        throw std::invalid_argument("no parameter named '" + name + "'");
    }
    return it->second;
}

ParamSet ParamSet::zeros_like() const {
    ParamSet out;
    for (const auto& [name, tensor] : params_) {
        out.set(name, Tensor::zeros(tensor.shape()));
    }
    return out;
}

}  // namespace siamdff

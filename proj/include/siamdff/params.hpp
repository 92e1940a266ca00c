#pragma once

#include <map>
#include <string>

#include "siamdff/tensor.hpp"

namespace siamdff {

/// Named parameter bundle. Backed by std::map so iteration order is the
/// identifier order, which keeps serialization and gradient sweeps stable.
class ParamSet {
public:
    using Map = std::map<std::string, Tensor>;

    ParamSet() = default;

    void set(const std::string& name, Tensor value) { params_[name] = std::move(value); }
    bool has(const std::string& name) const { return params_.count(name) != 0; }
    const Tensor& get(const std::string& name) const;
    Tensor& get(const std::string& name);

    std::size_t count() const { return params_.size(); }
    Map::const_iterator begin() const { return params_.begin(); }
    Map::const_iterator end() const { return params_.end(); }
    Map::iterator begin() { return params_.begin(); }
    Map::iterator end() { return params_.end(); }

    /// Zero tensors with the same names and shapes, for gradient accumulation.
    ParamSet zeros_like() const;

private:
    Map params_;
};

}  // namespace siamdff

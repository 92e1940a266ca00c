#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace siamdff {

#ifdef SIAMDFF_FAST_F32
using real_t = float;
#else
using real_t = double;
#endif

std::string shape_str(const std::vector<std::size_t>& shape);

/// Dense row-major tensor of real values. Operations in this library treat
/// tensors as immutable values and return fresh ones; element mutation is
/// only meant for construction.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<std::size_t> shape);
    Tensor(std::vector<std::size_t> shape, std::vector<real_t> data);

    static Tensor zeros(std::vector<std::size_t> shape);
    static Tensor full(std::vector<std::size_t> shape, real_t value);
    static Tensor scalar(real_t value);
    static Tensor from_vector(std::vector<real_t> values);
    static Tensor from_rows(const std::vector<std::vector<real_t>>& rows);
    static Tensor identity(std::size_t n);

    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t size() const { return data_.size(); }
    std::size_t extent(std::size_t axis) const;

    real_t* data() { return data_.data(); }
    const real_t* data() const { return data_.data(); }
    std::vector<real_t>& values() { return data_; }
    const std::vector<real_t>& values() const { return data_; }

    real_t& at(std::size_t flat);
    real_t at(std::size_t flat) const;

    real_t& operator()(std::size_t i, std::size_t j);
    real_t operator()(std::size_t i, std::size_t j) const;
    real_t& operator()(std::size_t c, std::size_t h, std::size_t w);
    real_t operator()(std::size_t c, std::size_t h, std::size_t w) const;
    real_t& operator()(std::size_t a, std::size_t b, std::size_t c, std::size_t d);
    real_t operator()(std::size_t a, std::size_t b, std::size_t c, std::size_t d) const;

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
    bool all_finite() const;

private:
    std::size_t flat_index2(std::size_t i, std::size_t j) const;
    std::size_t flat_index3(std::size_t c, std::size_t h, std::size_t w) const;
    std::size_t flat_index4(std::size_t a, std::size_t b, std::size_t c, std::size_t d) const;

    std::vector<std::size_t> shape_;
    std::vector<real_t> data_;
};

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor hadamard(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, real_t s);
real_t sum(const Tensor& a);
real_t max_abs(const Tensor& a);
real_t max_abs_diff(const Tensor& a, const Tensor& b);

}  // namespace siamdff

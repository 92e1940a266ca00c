#include "siamdff/tensor.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

namespace siamdff {

std::string shape_str(const std::vector<std::size_t>& shape) {
    std::string out = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i > 0) out += ",";
        out += std::to_string(shape[i]);
    }
    return out + "]";
}

namespace {

std::size_t checked_product(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (std::size_t e : shape) {
        if (e == 0) {
            throw std::invalid_argument("tensor shape has zero extent: " + shape_str(shape));
        }
        n *= e;
    }
    return n;
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape)
    : shape_(std::move(shape)), data_(checked_product(shape_), real_t{0}) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<real_t> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
    if (checked_product(shape_) != data_.size()) {
        throw std::invalid_argument("tensor data length " + std::to_string(data_.size()) +
                                    " does not match shape " + shape_str(shape_));
    }
}

Tensor Tensor::zeros(std::vector<std::size_t> shape) { return Tensor(std::move(shape)); }

Tensor Tensor::full(std::vector<std::size_t> shape, real_t value) {
    Tensor t(std::move(shape));
    for (auto& v : t.data_) v = value;
    return t;
}

Tensor Tensor::scalar(real_t value) { return Tensor({}, {value}); }

Tensor Tensor::from_vector(std::vector<real_t> values) {
    std::size_t n = values.size();
    return Tensor({n}, std::move(values));
}

Tensor Tensor::from_rows(const std::vector<std::vector<real_t>>& rows) {
    if (rows.empty()) {
        throw std::invalid_argument("from_rows: no rows given");
    }
    std::size_t m = rows.size();
    std::size_t n = rows.front().size();
    std::vector<real_t> data;
    data.reserve(m * n);
    for (const auto& row : rows) {
        if (row.size() != n) {
            throw std::invalid_argument("from_rows: ragged rows");
        }
        data.insert(data.end(), row.begin(), row.end());
    }
    return Tensor({m, n}, std::move(data));
}

Tensor Tensor::identity(std::size_t n) {
    Tensor t({n, n});
    for (std::size_t i = 0; i < n; ++i) t(i, i) = real_t{1};
    return t;
}

std::size_t Tensor::extent(std::size_t axis) const {
    if (axis >= shape_.size()) {
        throw std::invalid_argument("axis " + std::to_string(axis) + " out of range for shape " +
                                    shape_str(shape_));
    }
    return shape_[axis];
}

real_t& Tensor::at(std::size_t flat) {
    if (flat >= data_.size()) throw std::out_of_range("tensor index out of range");
    return data_[flat];
}

real_t Tensor::at(std::size_t flat) const {
    if (flat >= data_.size()) throw std::out_of_range("tensor index out of range");
    return data_[flat];
}

std::size_t Tensor::flat_index2(std::size_t i, std::size_t j) const {
    return i * shape_[1] + j;
}

std::size_t Tensor::flat_index3(std::size_t c, std::size_t h, std::size_t w) const {
    return (c * shape_[1] + h) * shape_[2] + w;
}

std::size_t Tensor::flat_index4(std::size_t a, std::size_t b, std::size_t c, std::size_t d) const {
    return ((a * shape_[1] + b) * shape_[2] + c) * shape_[3] + d;
}

real_t& Tensor::operator()(std::size_t i, std::size_t j) { return data_[flat_index2(i, j)]; }
real_t Tensor::operator()(std::size_t i, std::size_t j) const { return data_[flat_index2(i, j)]; }

real_t& Tensor::operator()(std::size_t c, std::size_t h, std::size_t w) {
    return data_[flat_index3(c, h, w)];
}
real_t Tensor::operator()(std::size_t c, std::size_t h, std::size_t w) const {
    return data_[flat_index3(c, h, w)];
}

real_t& Tensor::operator()(std::size_t a, std::size_t b, std::size_t c, std::size_t d) {
    return data_[flat_index4(a, b, c, d)];
}
real_t Tensor::operator()(std::size_t a, std::size_t b, std::size_t c, std::size_t d) const {
    return data_[flat_index4(a, b, c, d)];
}

bool Tensor::all_finite() const {
    for (real_t v : data_) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (!a.same_shape(b)) {
        throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                                    " vs " + shape_str(b.shape()));
    }
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add");
    Tensor out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out.at(i) += b.at(i);
    return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "sub");
    Tensor out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out.at(i) -= b.at(i);
    return out;
}

Tensor hadamard(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "hadamard");
    Tensor out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out.at(i) *= b.at(i);
    return out;
}

Tensor scale(const Tensor& a, real_t s) {
    Tensor out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out.at(i) *= s;
    return out;
}

real_t sum(const Tensor& a) {
    real_t acc = 0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a.at(i);
    return acc;
}

real_t max_abs(const Tensor& a) {
    real_t m = 0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.at(i)));
    return m;
}

real_t max_abs_diff(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "max_abs_diff");
    real_t m = 0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.at(i) - b.at(i)));
    return m;
}

}  // namespace siamdff

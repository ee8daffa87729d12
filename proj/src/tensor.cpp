#include "stgcn/tensor.hpp"

#include <cmath>
#include <sstream>

#include "stgcn/error.hpp"

namespace stgcn {

int64_t shape_size(const Shape& s) {
    int64_t n = 1;
    for (int64_t e : s) n *= e;
    return n;
}

std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << '(';
    for (size_t i = 0; i < s.size(); ++i) {
        if (i) os << 'x';
        os << s[i];
    }
    os << ')';
    return os.str();
}

Shape row_major_strides(const Shape& s) {
    Shape strides(s.size(), 1);
    for (int i = static_cast<int>(s.size()) - 2; i >= 0; --i)
        strides[i] = strides[i + 1] * s[i + 1];
    return strides;
}

Tensor::Tensor(Shape shape, std::vector<double> values)
    : Tensor(with_storage(std::move(shape),
                          std::make_shared<const std::vector<double>>(std::move(values)))) {}

Tensor Tensor::with_storage(Shape shape, std::shared_ptr<const std::vector<double>> storage) {
    for (int64_t e : shape)
        if (e <= 0) throw ShapeError("tensor: nonpositive extent in shape " + shape_str(shape));
    if (shape_size(shape) != static_cast<int64_t>(storage->size()))
        throw ShapeError("tensor: shape " + shape_str(shape) + " does not match " +
                         std::to_string(storage->size()) + " values");
    Tensor t;
    t.shape_ = std::move(shape);
    t.storage_ = std::move(storage);
    return t;
}

Tensor Tensor::zeros(Shape shape) { return full(std::move(shape), 0.0); }

Tensor Tensor::ones(Shape shape) { return full(std::move(shape), 1.0); }

Tensor Tensor::full(Shape shape, double value) {
    auto n = shape_size(shape);
    return Tensor(std::move(shape), std::vector<double>(static_cast<size_t>(n), value));
}

Tensor Tensor::eye(int64_t n) {
    std::vector<double> v(static_cast<size_t>(n * n), 0.0);
    for (int64_t i = 0; i < n; ++i) v[static_cast<size_t>(i * n + i)] = 1.0;
    return Tensor({n, n}, std::move(v));
}

Tensor Tensor::scalar(double value) { return Tensor({1}, std::vector<double>{value}); }

int64_t Tensor::size() const { return shape_size(shape_); }

int64_t Tensor::extent(int axis) const {
    int nd = ndim();
    if (axis < 0) axis += nd;
    if (axis < 0 || axis >= nd)
        throw ShapeError("tensor: axis " + std::to_string(axis) + " out of range for " +
                         shape_str(shape_));
    return shape_[axis];
}

double Tensor::value() const {
    if (size() != 1)
        throw ValueError("tensor: value() needs a scalar, got shape " + shape_str(shape_));
    return (*storage_)[0];
}

double Tensor::at(std::initializer_list<int64_t> index) const {
    if (static_cast<int>(index.size()) != ndim())
        throw ShapeError("tensor: index rank " + std::to_string(index.size()) +
                         " does not match shape " + shape_str(shape_));
    const Shape strides = row_major_strides(shape_);
    int64_t flat = 0;
    int d = 0;
    for (int64_t i : index) {
        if (i < 0 || i >= shape_[d])
            throw ValueError("tensor: index out of bounds at axis " + std::to_string(d));
        flat += i * strides[d];
        ++d;
    }
    return (*storage_)[static_cast<size_t>(flat)];
}

void check_finite(const std::vector<double>& values, const char* op) {
    for (double v : values)
        if (!std::isfinite(v))
            throw NumericError(std::string(op) + ": produced a non-finite value");
}

}  // namespace stgcn

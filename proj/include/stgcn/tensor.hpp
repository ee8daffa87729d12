#pragma once

#include <cstdint>
#include <initializer_list>
#include <memory>
#include <string>
#include <vector>

namespace stgcn {

using Shape = std::vector<int64_t>;

int64_t shape_size(const Shape& s);
std::string shape_str(const Shape& s);
Shape row_major_strides(const Shape& s);

class Tape;

// Immutable dense row-major array of 64-bit floats. Copies share storage and
// are cheap. A tensor produced by an op whose inputs live on a Tape carries
// the id of its tape node; plain tensors are constants.
class Tensor {
public:
    Tensor() = default;
    Tensor(Shape shape, std::vector<double> values);
    static Tensor with_storage(Shape shape, std::shared_ptr<const std::vector<double>> storage);

    static Tensor zeros(Shape shape);
    static Tensor ones(Shape shape);
    static Tensor full(Shape shape, double value);
    static Tensor eye(int64_t n);
    static Tensor scalar(double value);

    const Shape& shape() const { return shape_; }
    int ndim() const { return static_cast<int>(shape_.size()); }
    int64_t size() const;
    int64_t extent(int axis) const;  // negative axis counts from the back

    bool defined() const { return storage_ != nullptr; }
    const std::vector<double>& data() const { return *storage_; }
    std::shared_ptr<const std::vector<double>> storage() const { return storage_; }

    double value() const;  // scalar extraction, errors on size != 1
    double at(std::initializer_list<int64_t> index) const;

    bool on_tape() const { return node_ >= 0; }
    Tape* tape() const { return tape_; }
    int node() const { return node_; }

private:
    friend class Tape;
    Shape shape_;
    std::shared_ptr<const std::vector<double>> storage_;
    Tape* tape_ = nullptr;
    int node_ = -1;
};

// Throws NumericError when any element is NaN or infinite.
void check_finite(const std::vector<double>& values, const char* op);

}  // namespace stgcn

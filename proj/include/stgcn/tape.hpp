#pragma once

#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "stgcn/tensor.hpp"

namespace stgcn {

class Tape;

// Result of a reverse sweep: one gradient buffer per reached tape node.
// Nodes the loss never reaches read back as exact zeros.
class Gradients {
public:
    Tensor of(const Tensor& t) const;
    const std::vector<double>* raw(const Tensor& t) const;  // nullptr when unreached

private:
    friend class Tape;
    const Tape* tape_ = nullptr;
    std::vector<std::optional<std::vector<double>>> by_node_;
};

// Records every primitive applied to tensors that require gradients and
// replays them backward in strict reverse order. Gradient contributions
// accumulate in that fixed order, so two sweeps over identical inputs are
// bit-identical.
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    // Registers a constant as a differentiable leaf on this tape.
    Tensor leaf(const Tensor& value);

    // Reverse sweep from a scalar loss recorded on this tape.
    Gradients backward(const Tensor& loss) const;

    int node_count() const { return static_cast<int>(nodes_.size()); }

    // -- recording interface used by the op layer --
    // parent_grads[i] is the pre-zeroed accumulation buffer of parents[i];
    // a pull rule adds this node's contribution into them.
    using PullFn =
        std::function<void(const double* grad_out, const std::vector<double*>& parent_grads)>;

    Tensor record(Shape shape, std::shared_ptr<const std::vector<double>> data,
                  std::vector<int> parents, PullFn pull);

    const Shape& node_shape(int id) const { return nodes_[static_cast<size_t>(id)].shape; }

private:
    struct Node {
        Shape shape;
        std::vector<int> parents;
        PullFn pull;
    };
    std::vector<Node> nodes_;
};

// -- finite-difference verification ---------------------------------------

struct ParamRef {
    std::string name;
    Tensor* value = nullptr;
};

struct FiniteDiffReport {
    double max_rel_err = 0.0;
    std::string worst_param;
    int64_t worst_index = -1;
    double analytic = 0.0;
    double numeric = 0.0;
};

// Central-difference check of tape gradients. `build_loss` receives either a
// live tape plus bound leaves (one per param, in order) or, for the value
// probes, null and plain constants; it must return a scalar. Relative error
// uses a 1e-12 denominator floor.
using LossBuilder = std::function<Tensor(Tape*, std::span<const Tensor> bound)>;

FiniteDiffReport finite_diff_check(std::span<const ParamRef> params, const LossBuilder& build_loss,
                                   double eps);

}  // namespace stgcn

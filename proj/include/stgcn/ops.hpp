#pragma once

#include <vector>

#include "stgcn/tape.hpp"
#include "stgcn/tensor.hpp"

namespace stgcn {

// Dense primitives with recorded gradient rules. Every op validates shapes,
// checks its output for NaN/Inf, and records itself when any input lives on
// a tape. Binary elementwise ops demand exactly equal shapes; the *_bc
// variants broadcast their second argument (extents of 1 stretch).

// unary
Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor rsqrt_safe(const Tensor& x);  // x > 0 ? 1/sqrt(x) : 0
Tensor scale(const Tensor& x, double factor);
Tensor add_scalar(const Tensor& x, double constant);

// binary, equal shapes
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);

// broadcasting binary: b must have a's rank, each extent either matching or 1
Tensor add_bc(const Tensor& a, const Tensor& b);
Tensor mul_bc(const Tensor& a, const Tensor& b);

// bias add over the last axis (bias is 1-D)
Tensor add_bias(const Tensor& x, const Tensor& bias);

// matrix product; a is [..., m, k]. b may be [k, n], or [..., k, n] with
// leading extents equal to a's (broadcast by equality only).
Tensor matmul(const Tensor& a, const Tensor& b);

// numerically stable softmax along `axis`; lane sums are accumulated in
// value-sorted order so permuting the lane permutes the output bit-exactly
Tensor softmax(const Tensor& x, int axis);

// shape ops
Tensor reshape(const Tensor& x, Shape shape);
Tensor permute(const Tensor& x, const std::vector<int>& perm);
Tensor slice(const Tensor& x, int axis, int64_t start, int64_t length);
Tensor concat(const std::vector<Tensor>& parts, int axis);
Tensor pad(const Tensor& x, int axis, int64_t before, int64_t after);

// reductions
Tensor reduce_sum(const Tensor& x, std::vector<int> axes, bool keepdims);
Tensor reduce_mean(const Tensor& x, std::vector<int> axes, bool keepdims);

// joint sliding-window contraction over the trailing (T, K, C_i) axes with a
// kernel [K_t, K_s, C_i, C_o]; output trailing axes (T-K_t+1, K-K_s+1, C_o)
Tensor window_contract(const Tensor& x, const Tensor& kernel);

// layer normalization over the last axis with learned gain/bias
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-5);

// mean squared error over all elements
Tensor mse_loss(const Tensor& predicted, const Tensor& target);

// spec-facing pointwise dispatcher
enum class EwOp { add, sub, mul, sigmoid, relu, exp };
Tensor elementwise(EwOp op, const Tensor& a, const Tensor* b = nullptr);

}  // namespace stgcn

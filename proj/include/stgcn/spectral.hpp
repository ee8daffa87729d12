#pragma once

#include <vector>

#include "stgcn/graph.hpp"
#include "stgcn/tensor.hpp"

namespace stgcn {

// --- dense symmetric eigensolver (cyclic Jacobi) ---------------------------

struct EigenSym {
    std::vector<double> values;  // ascending
    Tensor vectors;              // columns are eigenvectors, a = V diag(values) V^T
};

EigenSym symmetric_eig(const Tensor& a, double tol = 1e-13, int max_sweeps = 64);

double lambda_max_exact(const Tensor& sym);
double lambda_max_power(const Tensor& sym, double tol = 1e-6, int max_iters = 1000);

// --- differentiable spectral pipeline --------------------------------------

// L = I - D^{-1/2} A D^{-1/2} with D the row-sum degree matrix. Rows of
// isolated nodes collapse to identity rows. Validation enforces the static
// contract (symmetric, nonnegative); the learned-mask path disables it since
// an unconstrained mask may leave the symmetric cone while training.
Tensor normalized_laplacian(const Tensor& adjacency, bool validate = true);

// L_tilde = (2/lambda_max) L - I
Tensor scaled_laplacian(const Tensor& laplacian, double lambda_max);

// [T_0, ..., T_{order-1}] via T_k = 2 L_tilde T_{k-1} - T_{k-2}
std::vector<Tensor> chebyshev_polynomials(const Tensor& l_tilde, int order);

// A' = W_mask (.) A; zeros of A stay zero for any mask
Tensor apply_mask(const Tensor& w_mask, const Tensor& adjacency);

// --- static spectral objects -----------------------------------------------

enum class LambdaMaxMode {
    Exact,      // symmetric eigensolve (desk scale)
    Power,      // power iteration, tol 1e-6, cap 1000 iterations
    FixedTwo,   // the Chebyshev-approximation convention; used by the model
};

struct SpectralStack {
    Tensor laplacian;   // N x N
    double lambda_max;  // estimate used for scaling
    Tensor scaled;      // N x N
    int order;          // K
    Tensor stack;       // K x N x N, concatenated Chebyshev polynomials
};

SpectralStack build_spectral_stack(const TrafficGraph& g, int order,
                                   LambdaMaxMode mode = LambdaMaxMode::Exact);

}  // namespace stgcn

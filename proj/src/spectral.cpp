#include "stgcn/spectral.hpp"

#include <algorithm>
#include <cmath>

#include "stgcn/error.hpp"
#include "stgcn/ops.hpp"

namespace stgcn {

namespace {

void require_square(const Tensor& a, const char* op) {
    if (a.ndim() != 2 || a.extent(0) != a.extent(1))
        throw ShapeError(std::string(op) + ": needs a square matrix, got " + shape_str(a.shape()));
}

}  // namespace

EigenSym symmetric_eig(const Tensor& a, double tol, int max_sweeps) {
    require_square(a, "symmetric_eig");
    const int64_t n = a.extent(0);
    std::vector<double> m = a.data();
    for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 0; j < n; ++j)
            if (std::fabs(m[static_cast<size_t>(i * n + j)] - m[static_cast<size_t>(j * n + i)]) > 1e-12)
                throw ValueError("symmetric_eig: matrix is not symmetric");

    std::vector<double> v(static_cast<size_t>(n * n), 0.0);
    for (int64_t i = 0; i < n; ++i) v[static_cast<size_t>(i * n + i)] = 1.0;

    auto off_norm = [&]() {
        double s = 0.0;
        for (int64_t i = 0; i < n; ++i)
            for (int64_t j = i + 1; j < n; ++j) {
                const double x = m[static_cast<size_t>(i * n + j)];
                s += x * x;
            }
        return std::sqrt(2.0 * s);
    };

    for (int sweep = 0; sweep < max_sweeps && off_norm() > tol; ++sweep) {
        for (int64_t p = 0; p < n - 1; ++p) {
            for (int64_t q = p + 1; q < n; ++q) {
                const double apq = m[static_cast<size_t>(p * n + q)];
                if (apq == 0.0) continue;
                const double app = m[static_cast<size_t>(p * n + p)];
                const double aqq = m[static_cast<size_t>(q * n + q)];
                const double theta = (aqq - app) / (2.0 * apq);
                const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                                 (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (int64_t k = 0; k < n; ++k) {
                    const double mkp = m[static_cast<size_t>(k * n + p)];
                    const double mkq = m[static_cast<size_t>(k * n + q)];
                    m[static_cast<size_t>(k * n + p)] = c * mkp - s * mkq;
                    m[static_cast<size_t>(k * n + q)] = s * mkp + c * mkq;
                }
                for (int64_t k = 0; k < n; ++k) {
                    const double mpk = m[static_cast<size_t>(p * n + k)];
                    const double mqk = m[static_cast<size_t>(q * n + k)];
                    m[static_cast<size_t>(p * n + k)] = c * mpk - s * mqk;
                    m[static_cast<size_t>(q * n + k)] = s * mpk + c * mqk;
                }
                for (int64_t k = 0; k < n; ++k) {
                    const double vkp = v[static_cast<size_t>(k * n + p)];
                    const double vkq = v[static_cast<size_t>(k * n + q)];
                    v[static_cast<size_t>(k * n + p)] = c * vkp - s * vkq;
                    v[static_cast<size_t>(k * n + q)] = s * vkp + c * vkq;
                }
            }
        }
    }

    // sort ascending by eigenvalue, reordering columns
    std::vector<int64_t> order(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;
    std::stable_sort(order.begin(), order.end(), [&](int64_t x, int64_t y) {
        return m[static_cast<size_t>(x * n + x)] < m[static_cast<size_t>(y * n + y)];
    });

    EigenSym out;
    out.values.resize(static_cast<size_t>(n));
    std::vector<double> vec(static_cast<size_t>(n * n));
    for (int64_t c = 0; c < n; ++c) {
        const int64_t src = order[static_cast<size_t>(c)];
        out.values[static_cast<size_t>(c)] = m[static_cast<size_t>(src * n + src)];
        for (int64_t r = 0; r < n; ++r)
            vec[static_cast<size_t>(r * n + c)] = v[static_cast<size_t>(r * n + src)];
    }
    out.vectors = Tensor({n, n}, std::move(vec));
    return out;
}

double lambda_max_exact(const Tensor& sym) {
    const EigenSym eig = symmetric_eig(sym);
    return eig.values.back();
}

double lambda_max_power(const Tensor& sym, double tol, int max_iters) {
    require_square(sym, "lambda_max_power");
    const int64_t n = sym.extent(0);
    const auto& a = sym.data();
    // fixed deterministic start vector, nonzero in every coordinate
    std::vector<double> x(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) x[static_cast<size_t>(i)] = 1.0 + 0.01 * std::sin(static_cast<double>(i + 1));
    double norm = 0.0;
    for (double v : x) norm += v * v;
    norm = std::sqrt(norm);
    for (double& v : x) v /= norm;

    double lambda = 0.0;
    std::vector<double> y(static_cast<size_t>(n));
    for (int it = 0; it < max_iters; ++it) {
        for (int64_t i = 0; i < n; ++i) {
            double acc = 0.0;
            const double* row = a.data() + i * n;
            for (int64_t j = 0; j < n; ++j) acc += row[j] * x[static_cast<size_t>(j)];
            y[static_cast<size_t>(i)] = acc;
        }
        double next = 0.0;
        for (int64_t i = 0; i < n; ++i) next += x[static_cast<size_t>(i)] * y[static_cast<size_t>(i)];
        double ynorm = 0.0;
        for (double v : y) ynorm += v * v;
        ynorm = std::sqrt(ynorm);
        if (ynorm == 0.0) return 0.0;  // zero matrix
        for (int64_t i = 0; i < n; ++i) x[static_cast<size_t>(i)] = y[static_cast<size_t>(i)] / ynorm;
        if (it > 0 && std::fabs(next - lambda) <= tol * std::max(1.0, std::fabs(next)))
            return next;
        lambda = next;
    }
    return lambda;
}

Tensor normalized_laplacian(const Tensor& adjacency, bool validate) {
    require_square(adjacency, "normalized_laplacian");
    const int64_t n = adjacency.extent(0);
    if (validate && !adjacency.on_tape()) {
        const auto& a = adjacency.data();
        for (int64_t i = 0; i < n; ++i)
            for (int64_t j = 0; j < n; ++j) {
                const double v = a[static_cast<size_t>(i * n + j)];
                if (v < 0.0)
                    throw ValueError("normalized_laplacian: negative entry at (" +
                                     std::to_string(i) + ", " + std::to_string(j) + ")");
                if (v != a[static_cast<size_t>(j * n + i)])
                    throw ValueError("normalized_laplacian: matrix is not symmetric at (" +
                                     std::to_string(i) + ", " + std::to_string(j) + ")");
            }
    }
    // rsqrt_safe maps zero degrees to zero scale, which turns isolated rows of
    // the product into zero and thus leaves identity rows in L
    Tensor degree = reduce_sum(adjacency, {1}, false);            // [n]
    Tensor inv_root = rsqrt_safe(degree);                         // [n]
    Tensor row_scale = reshape(inv_root, {n, 1});
    Tensor col_scale = reshape(inv_root, {1, n});
    Tensor sym = mul_bc(mul_bc(adjacency, row_scale), col_scale);
    return sub(Tensor::eye(n), sym);
}

Tensor scaled_laplacian(const Tensor& laplacian, double lambda_max) {
    require_square(laplacian, "scaled_laplacian");
    if (!(lambda_max > 0.0))
        throw ValueError("scaled_laplacian: lambda_max must be positive");
    return sub(scale(laplacian, 2.0 / lambda_max), Tensor::eye(laplacian.extent(0)));
}

std::vector<Tensor> chebyshev_polynomials(const Tensor& l_tilde, int order) {
    require_square(l_tilde, "chebyshev_polynomials");
    if (order < 1) throw ValueError("chebyshev_polynomials: order must be >= 1");
    const int64_t n = l_tilde.extent(0);
    std::vector<Tensor> t;
    t.reserve(static_cast<size_t>(order));
    t.push_back(Tensor::eye(n));
    if (order >= 2) t.push_back(l_tilde);
    for (int k = 2; k < order; ++k)
        t.push_back(sub(scale(matmul(l_tilde, t[static_cast<size_t>(k - 1)]), 2.0),
                        t[static_cast<size_t>(k - 2)]));
    return t;
}

Tensor apply_mask(const Tensor& w_mask, const Tensor& adjacency) {
    return mul(w_mask, adjacency);
}

SpectralStack build_spectral_stack(const TrafficGraph& g, int order, LambdaMaxMode mode) {
    SpectralStack s;
    s.laplacian = normalized_laplacian(g.adjacency);
    switch (mode) {
        case LambdaMaxMode::Exact: s.lambda_max = lambda_max_exact(s.laplacian); break;
        case LambdaMaxMode::Power: s.lambda_max = lambda_max_power(s.laplacian); break;
        case LambdaMaxMode::FixedTwo: s.lambda_max = 2.0; break;
    }
    if (s.lambda_max <= 0.0) s.lambda_max = 2.0;  // edgeless graph: L = I, any scale works
    s.scaled = scaled_laplacian(s.laplacian, s.lambda_max);
    s.order = order;
    const auto polys = chebyshev_polynomials(s.scaled, order);
    std::vector<Tensor> views;
    views.reserve(polys.size());
    for (const Tensor& p : polys) views.push_back(reshape(p, {1, g.n, g.n}));
    s.stack = concat(views, 0);
    return s;
}

}  // namespace stgcn

#include "stgcn/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>

#include "stgcn/error.hpp"

namespace stgcn {

namespace {

using DataPtr = std::shared_ptr<const std::vector<double>>;

Tape* tape_of(std::initializer_list<const Tensor*> inputs) {
    Tape* tape = nullptr;
    for (const Tensor* t : inputs) {
        if (!t->on_tape()) continue;
        if (tape && tape != t->tape())
            throw ValueError("op: inputs recorded on different tapes");
        tape = t->tape();
    }
    return tape;
}

// Registers the result when any input is on a tape; plain constant otherwise.
// `slots` receives, per input, its index into the parent list or -1.
Tensor finish(Tape* tape, Shape shape, DataPtr data,
              std::initializer_list<const Tensor*> inputs, std::vector<int>& slots,
              const std::function<Tape::PullFn()>& make_pull) {
    slots.assign(inputs.size(), -1);
    if (!tape) return Tensor::with_storage(std::move(shape), std::move(data));
    std::vector<int> parents;
    int i = 0;
    for (const Tensor* t : inputs) {
        if (t->on_tape()) {
            slots[static_cast<size_t>(i)] = static_cast<int>(parents.size());
            parents.push_back(t->node());
        }
        ++i;
    }
    return tape->record(std::move(shape), std::move(data), std::move(parents), make_pull());
}

int normalize_axis(int axis, int ndim, const char* op) {
    if (axis < 0) axis += ndim;
    if (axis < 0 || axis >= ndim)
        throw ShapeError(std::string(op) + ": axis out of range");
    return axis;
}

// Incremental row-major counter that tracks a second offset computed with
// caller-supplied strides (zero stride on broadcast/reduced axes).
struct StridedCursor {
    explicit StridedCursor(const Shape& shape, Shape strides)
        : shape_(shape), strides_(std::move(strides)), index_(shape.size(), 0) {}

    int64_t offset = 0;

    void advance() {
        for (int d = static_cast<int>(shape_.size()) - 1; d >= 0; --d) {
            offset += strides_[d];
            if (++index_[d] < shape_[d]) return;
            index_[d] = 0;
            offset -= strides_[d] * shape_[d];
        }
    }

private:
    const Shape& shape_;
    Shape strides_;
    std::vector<int64_t> index_;
};

Shape broadcast_strides(const Shape& full, const Shape& small, const char* op) {
    if (full.size() != small.size())
        throw ShapeError(std::string(op) + ": rank mismatch: " + shape_str(full) + " vs " +
                         shape_str(small));
    Shape strides = row_major_strides(small);
    for (size_t d = 0; d < full.size(); ++d) {
        if (small[d] == full[d]) continue;
        if (small[d] == 1)
            strides[d] = 0;
        else
            throw ShapeError(std::string(op) + ": cannot broadcast " + shape_str(small) +
                             " into " + shape_str(full));
    }
    return strides;
}

}  // namespace

// --- unary ----------------------------------------------------------------

Tensor relu(const Tensor& x) {
    const auto& xv = x.data();
    auto out = std::make_shared<std::vector<double>>(xv.size());
    for (size_t i = 0; i < xv.size(); ++i) (*out)[i] = xv[i] > 0.0 ? xv[i] : 0.0;
    check_finite(*out, "relu");
    std::vector<int> slots;
    return finish(tape_of({&x}), x.shape(), out, {&x}, slots, [&] {
        auto xs = x.storage();
        return Tape::PullFn([xs](const double* gy, const std::vector<double*>& pg) {
            const auto& xr = *xs;
            for (size_t i = 0; i < xr.size(); ++i)
                if (xr[i] > 0.0) pg[0][i] += gy[i];
        });
    });
}

Tensor sigmoid(const Tensor& x) {
    const auto& xv = x.data();
    auto out = std::make_shared<std::vector<double>>(xv.size());
    for (size_t i = 0; i < xv.size(); ++i) {
        const double v = xv[i];
        if (v >= 0.0) {
            (*out)[i] = 1.0 / (1.0 + std::exp(-v));
        } else {
            const double e = std::exp(v);
            (*out)[i] = e / (1.0 + e);
        }
    }
    check_finite(*out, "sigmoid");
    std::vector<int> slots;
    return finish(tape_of({&x}), x.shape(), out, {&x}, slots, [&] {
        return Tape::PullFn([out](const double* gy, const std::vector<double*>& pg) {
            const auto& yr = *out;
            for (size_t i = 0; i < yr.size(); ++i) pg[0][i] += gy[i] * yr[i] * (1.0 - yr[i]);
        });
    });
}

Tensor exp(const Tensor& x) {
    const auto& xv = x.data();
    auto out = std::make_shared<std::vector<double>>(xv.size());
    for (size_t i = 0; i < xv.size(); ++i) (*out)[i] = std::exp(xv[i]);
    check_finite(*out, "exp");
    std::vector<int> slots;
    return finish(tape_of({&x}), x.shape(), out, {&x}, slots, [&] {
        return Tape::PullFn([out](const double* gy, const std::vector<double*>& pg) {
            const auto& yr = *out;
            for (size_t i = 0; i < yr.size(); ++i) pg[0][i] += gy[i] * yr[i];
        });
    });
}

Tensor rsqrt_safe(const Tensor& x) {
    const auto& xv = x.data();
    auto out = std::make_shared<std::vector<double>>(xv.size());
    for (size_t i = 0; i < xv.size(); ++i) (*out)[i] = xv[i] > 0.0 ? 1.0 / std::sqrt(xv[i]) : 0.0;
    check_finite(*out, "rsqrt_safe");
    std::vector<int> slots;
    return finish(tape_of({&x}), x.shape(), out, {&x}, slots, [&] {
        auto xs = x.storage();
        return Tape::PullFn([xs, out](const double* gy, const std::vector<double*>& pg) {
            const auto& xr = *xs;
            const auto& yr = *out;
            for (size_t i = 0; i < xr.size(); ++i)
                if (xr[i] > 0.0) pg[0][i] += gy[i] * (-0.5 * yr[i] / xr[i]);
        });
    });
}

Tensor scale(const Tensor& x, double factor) {
    const auto& xv = x.data();
    auto out = std::make_shared<std::vector<double>>(xv.size());
    for (size_t i = 0; i < xv.size(); ++i) (*out)[i] = factor * xv[i];
    check_finite(*out, "scale");
    std::vector<int> slots;
    return finish(tape_of({&x}), x.shape(), out, {&x}, slots, [&] {
        const size_t n = xv.size();
        return Tape::PullFn([factor, n](const double* gy, const std::vector<double*>& pg) {
            for (size_t i = 0; i < n; ++i) pg[0][i] += factor * gy[i];
        });
    });
}

Tensor add_scalar(const Tensor& x, double constant) {
    const auto& xv = x.data();
    auto out = std::make_shared<std::vector<double>>(xv.size());
    for (size_t i = 0; i < xv.size(); ++i) (*out)[i] = xv[i] + constant;
    check_finite(*out, "add_scalar");
    std::vector<int> slots;
    return finish(tape_of({&x}), x.shape(), out, {&x}, slots, [&] {
        const size_t n = xv.size();
        return Tape::PullFn([n](const double* gy, const std::vector<double*>& pg) {
            for (size_t i = 0; i < n; ++i) pg[0][i] += gy[i];
        });
    });
}

// --- binary, equal shapes ---------------------------------------------------

namespace {

void require_equal_shapes(const char* op, const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape())
        throw ShapeError(std::string(op) + ": shapes differ: " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    require_equal_shapes("add", a, b);
    const auto& av = a.data();
    const auto& bv = b.data();
    auto out = std::make_shared<std::vector<double>>(av.size());
    for (size_t i = 0; i < av.size(); ++i) (*out)[i] = av[i] + bv[i];
    check_finite(*out, "add");
    std::vector<int> slots;
    return finish(tape_of({&a, &b}), a.shape(), out, {&a, &b}, slots, [&] {
        const int sa = slots[0], sb = slots[1];
        const size_t n = av.size();
        return Tape::PullFn([sa, sb, n](const double* gy, const std::vector<double*>& pg) {
            if (sa >= 0)
                for (size_t i = 0; i < n; ++i) pg[static_cast<size_t>(sa)][i] += gy[i];
            if (sb >= 0)
                for (size_t i = 0; i < n; ++i) pg[static_cast<size_t>(sb)][i] += gy[i];
        });
    });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    require_equal_shapes("sub", a, b);
    const auto& av = a.data();
    const auto& bv = b.data();
    auto out = std::make_shared<std::vector<double>>(av.size());
    for (size_t i = 0; i < av.size(); ++i) (*out)[i] = av[i] - bv[i];
    check_finite(*out, "sub");
    std::vector<int> slots;
    return finish(tape_of({&a, &b}), a.shape(), out, {&a, &b}, slots, [&] {
        const int sa = slots[0], sb = slots[1];
        const size_t n = av.size();
        return Tape::PullFn([sa, sb, n](const double* gy, const std::vector<double*>& pg) {
            if (sa >= 0)
                for (size_t i = 0; i < n; ++i) pg[static_cast<size_t>(sa)][i] += gy[i];
            if (sb >= 0)
                for (size_t i = 0; i < n; ++i) pg[static_cast<size_t>(sb)][i] -= gy[i];
        });
    });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    require_equal_shapes("mul", a, b);
    const auto& av = a.data();
    const auto& bv = b.data();
    auto out = std::make_shared<std::vector<double>>(av.size());
    for (size_t i = 0; i < av.size(); ++i) (*out)[i] = av[i] * bv[i];
    check_finite(*out, "mul");
    std::vector<int> slots;
    return finish(tape_of({&a, &b}), a.shape(), out, {&a, &b}, slots, [&] {
        const int sa = slots[0], sb = slots[1];
        auto as = a.storage();
        auto bs = b.storage();
        return Tape::PullFn([sa, sb, as, bs](const double* gy, const std::vector<double*>& pg) {
            const auto& ar = *as;
            const auto& br = *bs;
            if (sa >= 0)
                for (size_t i = 0; i < ar.size(); ++i) pg[static_cast<size_t>(sa)][i] += gy[i] * br[i];
            if (sb >= 0)
                for (size_t i = 0; i < br.size(); ++i) pg[static_cast<size_t>(sb)][i] += gy[i] * ar[i];
        });
    });
}

// --- broadcasting binary ----------------------------------------------------

namespace {

enum class BcKind { Add, Mul };

Tensor binary_bc(const char* name, BcKind kind, const Tensor& a, const Tensor& b) {
    const Shape bstrides = broadcast_strides(a.shape(), b.shape(), name);
    const auto& av = a.data();
    const auto& bv = b.data();
    auto out = std::make_shared<std::vector<double>>(av.size());
    {
        StridedCursor cur(a.shape(), bstrides);
        for (size_t i = 0; i < av.size(); ++i, cur.advance()) {
            const double rhs = bv[static_cast<size_t>(cur.offset)];
            (*out)[i] = kind == BcKind::Add ? av[i] + rhs : av[i] * rhs;
        }
    }
    check_finite(*out, name);
    std::vector<int> slots;
    const Shape ashape = a.shape();
    return finish(tape_of({&a, &b}), a.shape(), out, {&a, &b}, slots, [&] {
        const int sa = slots[0], sb = slots[1];
        auto as = a.storage();
        auto bs = b.storage();
        return Tape::PullFn(
            [name = std::string(name), kind, sa, sb, as, bs, ashape, bstrides](
                const double* gy, const std::vector<double*>& pg) {
                const auto& ar = *as;
                const auto& br = *bs;
                if (kind == BcKind::Add) {
                    if (sa >= 0)
                        for (size_t i = 0; i < ar.size(); ++i) pg[static_cast<size_t>(sa)][i] += gy[i];
                    if (sb >= 0) {
                        StridedCursor cur(ashape, bstrides);
                        for (size_t i = 0; i < ar.size(); ++i, cur.advance())
                            pg[static_cast<size_t>(sb)][static_cast<size_t>(cur.offset)] += gy[i];
                    }
                } else {
                    if (sa >= 0) {
                        StridedCursor cur(ashape, bstrides);
                        for (size_t i = 0; i < ar.size(); ++i, cur.advance())
                            pg[static_cast<size_t>(sa)][i] +=
                                gy[i] * br[static_cast<size_t>(cur.offset)];
                    }
                    if (sb >= 0) {
                        StridedCursor cur(ashape, bstrides);
                        for (size_t i = 0; i < ar.size(); ++i, cur.advance())
                            pg[static_cast<size_t>(sb)][static_cast<size_t>(cur.offset)] +=
                                gy[i] * ar[i];
                    }
                }
            });
    });
}

}  // namespace

Tensor add_bc(const Tensor& a, const Tensor& b) { return binary_bc("add_bc", BcKind::Add, a, b); }

Tensor mul_bc(const Tensor& a, const Tensor& b) { return binary_bc("mul_bc", BcKind::Mul, a, b); }

Tensor add_bias(const Tensor& x, const Tensor& bias) {
    if (bias.ndim() != 1 || bias.extent(0) != x.extent(-1))
        throw ShapeError("add_bias: bias " + shape_str(bias.shape()) +
                         " does not match last axis of " + shape_str(x.shape()));
    Shape bshape(static_cast<size_t>(x.ndim()), 1);
    bshape.back() = bias.extent(0);
    return add_bc(x, reshape(bias, bshape));
}

// --- matmul -----------------------------------------------------------------

namespace {

void matmul_core(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n) {
    for (int64_t i = 0; i < m; ++i) {
        double* crow = c + i * n;
        const double* arow = a + i * k;
        for (int64_t p = 0; p < k; ++p) {
            const double av = arow[p];
            if (av == 0.0) continue;
            const double* brow = b + p * n;
            for (int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

// ga += gy * b^T
void matmul_grad_a(const double* gy, const double* b, double* ga, int64_t m, int64_t k, int64_t n) {
    for (int64_t i = 0; i < m; ++i) {
        const double* gyrow = gy + i * n;
        double* garow = ga + i * k;
        for (int64_t p = 0; p < k; ++p) {
            const double* brow = b + p * n;
            double acc = 0.0;
            for (int64_t j = 0; j < n; ++j) acc += gyrow[j] * brow[j];
            garow[p] += acc;
        }
    }
}

// gb += a^T * gy
void matmul_grad_b(const double* a, const double* gy, double* gb, int64_t m, int64_t k, int64_t n) {
    for (int64_t i = 0; i < m; ++i) {
        const double* arow = a + i * k;
        const double* gyrow = gy + i * n;
        for (int64_t p = 0; p < k; ++p) {
            const double av = arow[p];
            if (av == 0.0) continue;
            double* gbrow = gb + p * n;
            for (int64_t j = 0; j < n; ++j) gbrow[j] += av * gyrow[j];
        }
    }
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.ndim() < 2 || b.ndim() < 2)
        throw ShapeError("matmul: operands need rank >= 2, got " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
    const int64_t m = a.extent(-2);
    const int64_t k = a.extent(-1);
    const int64_t kb = b.extent(-2);
    const int64_t n = b.extent(-1);
    if (k != kb)
        throw ShapeError("matmul: inner extents differ: " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));

    const bool b_is_matrix = b.ndim() == 2;
    int64_t batches = 1;
    if (!b_is_matrix) {
        if (a.ndim() != b.ndim())
            throw ShapeError("matmul: leading dimensions must match exactly: " +
                             shape_str(a.shape()) + " vs " + shape_str(b.shape()));
        for (int d = 0; d < a.ndim() - 2; ++d) {
            if (a.shape()[static_cast<size_t>(d)] != b.shape()[static_cast<size_t>(d)])
                throw ShapeError("matmul: leading dimensions must match exactly: " +
                                 shape_str(a.shape()) + " vs " + shape_str(b.shape()));
            batches *= a.shape()[static_cast<size_t>(d)];
        }
    } else {
        for (int d = 0; d < a.ndim() - 2; ++d) batches *= a.shape()[static_cast<size_t>(d)];
    }

    Shape out_shape(a.shape());
    out_shape.back() = n;

    const auto& av = a.data();
    const auto& bv = b.data();
    auto out = std::make_shared<std::vector<double>>(static_cast<size_t>(batches * m * n), 0.0);
    for (int64_t t = 0; t < batches; ++t)
        matmul_core(av.data() + t * m * k, b_is_matrix ? bv.data() : bv.data() + t * k * n,
                    out->data() + t * m * n, m, k, n);
    check_finite(*out, "matmul");

    std::vector<int> slots;
    return finish(tape_of({&a, &b}), std::move(out_shape), out, {&a, &b}, slots, [&] {
        const int sa = slots[0], sb = slots[1];
        auto as = a.storage();
        auto bs = b.storage();
        return Tape::PullFn([sa, sb, as, bs, b_is_matrix, batches, m, k, n](
                                const double* gy, const std::vector<double*>& pg) {
            const double* ad = as->data();
            const double* bd = bs->data();
            for (int64_t t = 0; t < batches; ++t) {
                const double* gyt = gy + t * m * n;
                const double* bt = b_is_matrix ? bd : bd + t * k * n;
                if (sa >= 0) matmul_grad_a(gyt, bt, pg[static_cast<size_t>(sa)] + t * m * k, m, k, n);
                if (sb >= 0)
                    matmul_grad_b(ad + t * m * k, gyt,
                                  b_is_matrix ? pg[static_cast<size_t>(sb)]
                                              : pg[static_cast<size_t>(sb)] + t * k * n,
                                  m, k, n);
            }
        });
    });
}

// --- softmax ----------------------------------------------------------------

Tensor softmax(const Tensor& x, int axis) {
    const int ax = normalize_axis(axis, x.ndim(), "softmax");
    const int64_t len = x.shape()[static_cast<size_t>(ax)];
    int64_t inner = 1, outer = 1;
    for (int d = ax + 1; d < x.ndim(); ++d) inner *= x.shape()[static_cast<size_t>(d)];
    for (int d = 0; d < ax; ++d) outer *= x.shape()[static_cast<size_t>(d)];

    const auto& xv = x.data();
    auto out = std::make_shared<std::vector<double>>(xv.size());
    std::vector<double> lane(static_cast<size_t>(len));
    for (int64_t o = 0; o < outer; ++o) {
        for (int64_t i = 0; i < inner; ++i) {
            const int64_t base = o * len * inner + i;
            double mx = xv[static_cast<size_t>(base)];
            for (int64_t j = 1; j < len; ++j)
                mx = std::max(mx, xv[static_cast<size_t>(base + j * inner)]);
            for (int64_t j = 0; j < len; ++j)
                lane[static_cast<size_t>(j)] = std::exp(xv[static_cast<size_t>(base + j * inner)] - mx);
            // value-sorted accumulation: the denominator is invariant under
            // permutations of the lane, keeping branch reorderings bit-exact
            std::vector<double> sorted(lane.begin(), lane.end());
            std::sort(sorted.begin(), sorted.end());
            double denom = 0.0;
            for (double v : sorted) denom += v;
            for (int64_t j = 0; j < len; ++j)
                (*out)[static_cast<size_t>(base + j * inner)] = lane[static_cast<size_t>(j)] / denom;
        }
    }
    check_finite(*out, "softmax");

    std::vector<int> slots;
    return finish(tape_of({&x}), x.shape(), out, {&x}, slots, [&] {
        return Tape::PullFn([out, len, inner, outer](const double* gy,
                                                     const std::vector<double*>& pg) {
            const auto& yr = *out;
            for (int64_t o = 0; o < outer; ++o) {
                for (int64_t i = 0; i < inner; ++i) {
                    const int64_t base = o * len * inner + i;
                    double dot = 0.0;
                    for (int64_t j = 0; j < len; ++j) {
                        const size_t p = static_cast<size_t>(base + j * inner);
                        dot += yr[p] * gy[p];
                    }
                    for (int64_t j = 0; j < len; ++j) {
                        const size_t p = static_cast<size_t>(base + j * inner);
                        pg[0][p] += yr[p] * (gy[p] - dot);
                    }
                }
            }
        });
    });
}

// --- shape ops ----------------------------------------------------------------

Tensor reshape(const Tensor& x, Shape shape) {
    if (shape_size(shape) != x.size())
        throw ShapeError("reshape: cannot view " + shape_str(x.shape()) + " as " +
                         shape_str(shape));
    std::vector<int> slots;
    return finish(tape_of({&x}), std::move(shape), x.storage(), {&x}, slots, [&] {
        const size_t n = static_cast<size_t>(x.size());
        return Tape::PullFn([n](const double* gy, const std::vector<double*>& pg) {
            for (size_t i = 0; i < n; ++i) pg[0][i] += gy[i];
        });
    });
}

Tensor permute(const Tensor& x, const std::vector<int>& perm) {
    const int nd = x.ndim();
    if (static_cast<int>(perm.size()) != nd)
        throw ShapeError("permute: permutation rank mismatch for " + shape_str(x.shape()));
    std::vector<bool> seen(static_cast<size_t>(nd), false);
    for (int p : perm) {
        if (p < 0 || p >= nd || seen[static_cast<size_t>(p)])
            throw ShapeError("permute: invalid permutation");
        seen[static_cast<size_t>(p)] = true;
    }

    Shape out_shape(static_cast<size_t>(nd));
    for (int d = 0; d < nd; ++d) out_shape[static_cast<size_t>(d)] = x.shape()[static_cast<size_t>(perm[static_cast<size_t>(d)])];

    // walk the output in order; the matching input offset uses permuted strides
    const Shape in_strides = row_major_strides(x.shape());
    Shape walk(static_cast<size_t>(nd));
    for (int d = 0; d < nd; ++d) walk[static_cast<size_t>(d)] = in_strides[static_cast<size_t>(perm[static_cast<size_t>(d)])];

    const auto& xv = x.data();
    auto out = std::make_shared<std::vector<double>>(xv.size());
    {
        StridedCursor cur(out_shape, walk);
        for (size_t i = 0; i < xv.size(); ++i, cur.advance())
            (*out)[i] = xv[static_cast<size_t>(cur.offset)];
    }

    std::vector<int> slots;
    return finish(tape_of({&x}), out_shape, out, {&x}, slots, [&] {
        const size_t n = xv.size();
        return Tape::PullFn([out_shape, walk, n](const double* gy, const std::vector<double*>& pg) {
            StridedCursor cur(out_shape, walk);
            for (size_t i = 0; i < n; ++i, cur.advance())
                pg[0][static_cast<size_t>(cur.offset)] += gy[i];
        });
    });
}

Tensor slice(const Tensor& x, int axis, int64_t start, int64_t length) {
    const int ax = normalize_axis(axis, x.ndim(), "slice");
    const int64_t extent = x.shape()[static_cast<size_t>(ax)];
    if (start < 0 || length <= 0 || start + length > extent)
        throw ShapeError("slice: range [" + std::to_string(start) + ", " +
                         std::to_string(start + length) + ") out of bounds for axis " +
                         std::to_string(ax) + " of " + shape_str(x.shape()));

    int64_t inner = 1, outer = 1;
    for (int d = ax + 1; d < x.ndim(); ++d) inner *= x.shape()[static_cast<size_t>(d)];
    for (int d = 0; d < ax; ++d) outer *= x.shape()[static_cast<size_t>(d)];

    Shape out_shape(x.shape());
    out_shape[static_cast<size_t>(ax)] = length;

    const auto& xv = x.data();
    auto out = std::make_shared<std::vector<double>>(static_cast<size_t>(outer * length * inner));
    for (int64_t o = 0; o < outer; ++o)
        std::memcpy(out->data() + o * length * inner, xv.data() + (o * extent + start) * inner,
                    static_cast<size_t>(length * inner) * sizeof(double));

    std::vector<int> slots;
    return finish(tape_of({&x}), std::move(out_shape), out, {&x}, slots, [&] {
        return Tape::PullFn(
            [outer, inner, extent, start, length](const double* gy, const std::vector<double*>& pg) {
                for (int64_t o = 0; o < outer; ++o) {
                    double* dst = pg[0] + (o * extent + start) * inner;
                    const double* src = gy + o * length * inner;
                    for (int64_t i = 0; i < length * inner; ++i) dst[i] += src[i];
                }
            });
    });
}

Tensor concat(const std::vector<Tensor>& parts, int axis) {
    if (parts.empty()) throw ValueError("concat: needs at least one input");
    const int ax = normalize_axis(axis, parts[0].ndim(), "concat");
    int64_t total = 0;
    for (const Tensor& p : parts) {
        if (p.ndim() != parts[0].ndim())
            throw ShapeError("concat: rank mismatch: " + shape_str(parts[0].shape()) + " vs " +
                             shape_str(p.shape()));
        for (int d = 0; d < p.ndim(); ++d)
            if (d != ax && p.shape()[static_cast<size_t>(d)] != parts[0].shape()[static_cast<size_t>(d)])
                throw ShapeError("concat: shapes disagree off-axis: " + shape_str(parts[0].shape()) +
                                 " vs " + shape_str(p.shape()));
        total += p.shape()[static_cast<size_t>(ax)];
    }

    int64_t inner = 1, outer = 1;
    for (int d = ax + 1; d < parts[0].ndim(); ++d) inner *= parts[0].shape()[static_cast<size_t>(d)];
    for (int d = 0; d < ax; ++d) outer *= parts[0].shape()[static_cast<size_t>(d)];

    Shape out_shape(parts[0].shape());
    out_shape[static_cast<size_t>(ax)] = total;

    auto out = std::make_shared<std::vector<double>>(static_cast<size_t>(outer * total * inner));
    std::vector<int64_t> lens;
    int64_t off = 0;
    for (const Tensor& p : parts) {
        const int64_t len = p.shape()[static_cast<size_t>(ax)];
        lens.push_back(len);
        const auto& pv = p.data();
        for (int64_t o = 0; o < outer; ++o)
            std::memcpy(out->data() + (o * total + off) * inner, pv.data() + o * len * inner,
                        static_cast<size_t>(len * inner) * sizeof(double));
        off += len;
    }

    Tape* tape = nullptr;
    for (const Tensor& p : parts) {
        if (!p.on_tape()) continue;
        if (tape && tape != p.tape()) throw ValueError("concat: inputs recorded on different tapes");
        tape = p.tape();
    }
    if (!tape) return Tensor::with_storage(std::move(out_shape), out);

    std::vector<int> parents;
    std::vector<int> slot_of(parts.size(), -1);
    for (size_t i = 0; i < parts.size(); ++i)
        if (parts[i].on_tape()) {
            slot_of[i] = static_cast<int>(parents.size());
            parents.push_back(parts[i].node());
        }

    return tape->record(
        std::move(out_shape), out, std::move(parents),
        [slot_of, lens, outer, inner, total](const double* gy, const std::vector<double*>& pg) {
            int64_t off2 = 0;
            for (size_t i = 0; i < lens.size(); ++i) {
                const int64_t len = lens[i];
                if (slot_of[i] >= 0) {
                    double* dst = pg[static_cast<size_t>(slot_of[i])];
                    for (int64_t o = 0; o < outer; ++o) {
                        const double* src = gy + (o * total + off2) * inner;
                        double* drow = dst + o * len * inner;
                        for (int64_t j = 0; j < len * inner; ++j) drow[j] += src[j];
                    }
                }
                off2 += len;
            }
        });
}

Tensor pad(const Tensor& x, int axis, int64_t before, int64_t after) {
    const int ax = normalize_axis(axis, x.ndim(), "pad");
    if (before < 0 || after < 0) throw ShapeError("pad: negative padding");
    if (before == 0 && after == 0) return x;
    const int64_t extent = x.shape()[static_cast<size_t>(ax)];
    const int64_t padded = extent + before + after;

    int64_t inner = 1, outer = 1;
    for (int d = ax + 1; d < x.ndim(); ++d) inner *= x.shape()[static_cast<size_t>(d)];
    for (int d = 0; d < ax; ++d) outer *= x.shape()[static_cast<size_t>(d)];

    Shape out_shape(x.shape());
    out_shape[static_cast<size_t>(ax)] = padded;

    const auto& xv = x.data();
    auto out = std::make_shared<std::vector<double>>(static_cast<size_t>(outer * padded * inner), 0.0);
    for (int64_t o = 0; o < outer; ++o)
        std::memcpy(out->data() + (o * padded + before) * inner, xv.data() + o * extent * inner,
                    static_cast<size_t>(extent * inner) * sizeof(double));

    std::vector<int> slots;
    return finish(tape_of({&x}), std::move(out_shape), out, {&x}, slots, [&] {
        return Tape::PullFn(
            [outer, inner, extent, before, padded](const double* gy, const std::vector<double*>& pg) {
                for (int64_t o = 0; o < outer; ++o) {
                    const double* src = gy + (o * padded + before) * inner;
                    double* dst = pg[0] + o * extent * inner;
                    for (int64_t i = 0; i < extent * inner; ++i) dst[i] += src[i];
                }
            });
    });
}

// --- reductions ---------------------------------------------------------------

namespace {

Tensor reduce_impl(const char* name, const Tensor& x, std::vector<int> axes, bool keepdims,
                   bool mean) {
    if (axes.empty()) {
        axes.resize(static_cast<size_t>(x.ndim()));
        std::iota(axes.begin(), axes.end(), 0);
    }
    for (int& a : axes) a = normalize_axis(a, x.ndim(), name);
    std::sort(axes.begin(), axes.end());
    axes.erase(std::unique(axes.begin(), axes.end()), axes.end());

    std::vector<bool> reduced(static_cast<size_t>(x.ndim()), false);
    int64_t count = 1;
    for (int a : axes) {
        reduced[static_cast<size_t>(a)] = true;
        count *= x.shape()[static_cast<size_t>(a)];
    }

    Shape out_shape;
    for (int d = 0; d < x.ndim(); ++d) {
        if (!reduced[static_cast<size_t>(d)])
            out_shape.push_back(x.shape()[static_cast<size_t>(d)]);
        else if (keepdims)
            out_shape.push_back(1);
    }
    if (out_shape.empty()) out_shape.push_back(1);

    // strides into the output, zeroed on reduced axes
    Shape kept_shape;
    for (int d = 0; d < x.ndim(); ++d)
        kept_shape.push_back(reduced[static_cast<size_t>(d)] ? 1 : x.shape()[static_cast<size_t>(d)]);
    Shape out_strides = row_major_strides(kept_shape);
    for (int d = 0; d < x.ndim(); ++d)
        if (reduced[static_cast<size_t>(d)]) out_strides[static_cast<size_t>(d)] = 0;

    const auto& xv = x.data();
    auto out = std::make_shared<std::vector<double>>(static_cast<size_t>(shape_size(out_shape)), 0.0);
    {
        StridedCursor cur(x.shape(), out_strides);
        for (size_t i = 0; i < xv.size(); ++i, cur.advance())
            (*out)[static_cast<size_t>(cur.offset)] += xv[i];
    }
    if (mean)
        for (double& v : *out) v /= static_cast<double>(count);
    check_finite(*out, name);

    std::vector<int> slots;
    const Shape xshape = x.shape();
    return finish(tape_of({&x}), std::move(out_shape), out, {&x}, slots, [&] {
        const double factor = mean ? 1.0 / static_cast<double>(count) : 1.0;
        const size_t n = xv.size();
        return Tape::PullFn(
            [xshape, out_strides, factor, n](const double* gy, const std::vector<double*>& pg) {
                StridedCursor cur(xshape, out_strides);
                for (size_t i = 0; i < n; ++i, cur.advance())
                    pg[0][i] += factor * gy[static_cast<size_t>(cur.offset)];
            });
    });
}

}  // namespace

Tensor reduce_sum(const Tensor& x, std::vector<int> axes, bool keepdims) {
    return reduce_impl("reduce_sum", x, std::move(axes), keepdims, false);
}

Tensor reduce_mean(const Tensor& x, std::vector<int> axes, bool keepdims) {
    return reduce_impl("reduce_mean", x, std::move(axes), keepdims, true);
}

// --- window contraction ---------------------------------------------------------

Tensor window_contract(const Tensor& x, const Tensor& kernel) {
    if (x.ndim() < 3)
        throw ShapeError("window_contract: input needs rank >= 3, got " + shape_str(x.shape()));
    if (kernel.ndim() != 4)
        throw ShapeError("window_contract: kernel must be rank 4, got " +
                         shape_str(kernel.shape()));
    const int64_t t_in = x.extent(-3);
    const int64_t k_in = x.extent(-2);
    const int64_t ci = x.extent(-1);
    const int64_t kt = kernel.extent(0);
    const int64_t ks = kernel.extent(1);
    const int64_t co = kernel.extent(3);
    if (kernel.extent(2) != ci)
        throw ShapeError("window_contract: channel extents differ: " + shape_str(x.shape()) +
                         " vs kernel " + shape_str(kernel.shape()));
    if (kt > t_in || ks > k_in)
        throw ConfigError("window_contract: kernel " + shape_str(kernel.shape()) +
                          " exceeds window " + shape_str(x.shape()));

    int64_t lead = 1;
    for (int d = 0; d < x.ndim() - 3; ++d) lead *= x.shape()[static_cast<size_t>(d)];
    const int64_t t_out = t_in - kt + 1;
    const int64_t k_out = k_in - ks + 1;

    Shape out_shape(x.shape());
    out_shape[static_cast<size_t>(x.ndim() - 3)] = t_out;
    out_shape[static_cast<size_t>(x.ndim() - 2)] = k_out;
    out_shape[static_cast<size_t>(x.ndim() - 1)] = co;

    const auto& xv = x.data();
    const auto& wv = kernel.data();
    auto out =
        std::make_shared<std::vector<double>>(static_cast<size_t>(lead * t_out * k_out * co), 0.0);

    for (int64_t l = 0; l < lead; ++l) {
        const double* xl = xv.data() + l * t_in * k_in * ci;
        double* ol = out->data() + l * t_out * k_out * co;
        for (int64_t t = 0; t < t_out; ++t) {
            for (int64_t k = 0; k < k_out; ++k) {
                double* orow = ol + (t * k_out + k) * co;
                for (int64_t dt = 0; dt < kt; ++dt) {
                    for (int64_t dk = 0; dk < ks; ++dk) {
                        const double* xrow = xl + ((t + dt) * k_in + (k + dk)) * ci;
                        const double* wbase = wv.data() + (dt * ks + dk) * ci * co;
                        for (int64_t c = 0; c < ci; ++c) {
                            const double xval = xrow[c];
                            if (xval == 0.0) continue;
                            const double* wrow = wbase + c * co;
                            for (int64_t o = 0; o < co; ++o) orow[o] += xval * wrow[o];
                        }
                    }
                }
            }
        }
    }
    check_finite(*out, "window_contract");

    std::vector<int> slots;
    return finish(tape_of({&x, &kernel}), std::move(out_shape), out, {&x, &kernel}, slots, [&] {
        const int sx = slots[0], sw = slots[1];
        auto xs = x.storage();
        auto wsv = kernel.storage();
        return Tape::PullFn([sx, sw, xs, wsv, lead, t_in, k_in, ci, kt, ks, co, t_out, k_out](
                                const double* gy, const std::vector<double*>& pg) {
            const double* xd = xs->data();
            const double* wd = wsv->data();
            for (int64_t l = 0; l < lead; ++l) {
                const double* xl = xd + l * t_in * k_in * ci;
                const double* gl = gy + l * t_out * k_out * co;
                double* gxl = sx >= 0 ? pg[static_cast<size_t>(sx)] + l * t_in * k_in * ci : nullptr;
                for (int64_t t = 0; t < t_out; ++t) {
                    for (int64_t k = 0; k < k_out; ++k) {
                        const double* grow = gl + (t * k_out + k) * co;
                        for (int64_t dt = 0; dt < kt; ++dt) {
                            for (int64_t dk = 0; dk < ks; ++dk) {
                                const int64_t xoff = ((t + dt) * k_in + (k + dk)) * ci;
                                const double* wbase = wd + (dt * ks + dk) * ci * co;
                                if (sw >= 0) {
                                    double* gwbase =
                                        pg[static_cast<size_t>(sw)] + (dt * ks + dk) * ci * co;
                                    const double* xrow = xl + xoff;
                                    for (int64_t c = 0; c < ci; ++c) {
                                        const double xval = xrow[c];
                                        if (xval == 0.0) continue;
                                        double* gwrow = gwbase + c * co;
                                        for (int64_t o = 0; o < co; ++o)
                                            gwrow[o] += xval * grow[o];
                                    }
                                }
                                if (gxl) {
                                    double* gxrow = gxl + xoff;
                                    for (int64_t c = 0; c < ci; ++c) {
                                        const double* wrow = wbase + c * co;
                                        double acc = 0.0;
                                        for (int64_t o = 0; o < co; ++o)
                                            acc += wrow[o] * grow[o];
                                        gxrow[c] += acc;
                                    }
                                }
                            }
                        }
                    }
                }
            }
        });
    });
}

// --- layer normalization --------------------------------------------------------

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
    const int64_t c = x.extent(-1);
    if (gain.ndim() != 1 || bias.ndim() != 1 || gain.extent(0) != c || bias.extent(0) != c)
        throw ShapeError("layer_norm: gain/bias must be 1-D of extent " + std::to_string(c));
    const int64_t rows = x.size() / c;

    const auto& xv = x.data();
    const auto& gv = gain.data();
    const auto& bv = bias.data();
    auto out = std::make_shared<std::vector<double>>(xv.size());
    auto xhat = std::make_shared<std::vector<double>>(xv.size());
    auto inv_std = std::make_shared<std::vector<double>>(static_cast<size_t>(rows));

    for (int64_t r = 0; r < rows; ++r) {
        const double* row = xv.data() + r * c;
        double mean = 0.0;
        for (int64_t j = 0; j < c; ++j) mean += row[j];
        mean /= static_cast<double>(c);
        double var = 0.0;
        for (int64_t j = 0; j < c; ++j) {
            const double d = row[j] - mean;
            var += d * d;
        }
        var /= static_cast<double>(c);
        const double istd = 1.0 / std::sqrt(var + eps);
        (*inv_std)[static_cast<size_t>(r)] = istd;
        for (int64_t j = 0; j < c; ++j) {
            const double h = (row[j] - mean) * istd;
            (*xhat)[static_cast<size_t>(r * c + j)] = h;
            (*out)[static_cast<size_t>(r * c + j)] = gv[static_cast<size_t>(j)] * h + bv[static_cast<size_t>(j)];
        }
    }
    check_finite(*out, "layer_norm");

    std::vector<int> slots;
    return finish(tape_of({&x, &gain, &bias}), x.shape(), out, {&x, &gain, &bias}, slots, [&] {
        const int sx = slots[0], sg = slots[1], sb = slots[2];
        auto gs = gain.storage();
        return Tape::PullFn([sx, sg, sb, gs, xhat, inv_std, rows, c](
                                const double* gy, const std::vector<double*>& pg) {
            const auto& gr = *gs;
            const auto& hr = *xhat;
            for (int64_t r = 0; r < rows; ++r) {
                const double* gyr = gy + r * c;
                const double* hrow = hr.data() + r * c;
                if (sg >= 0)
                    for (int64_t j = 0; j < c; ++j)
                        pg[static_cast<size_t>(sg)][static_cast<size_t>(j)] += gyr[j] * hrow[j];
                if (sb >= 0)
                    for (int64_t j = 0; j < c; ++j)
                        pg[static_cast<size_t>(sb)][static_cast<size_t>(j)] += gyr[j];
                if (sx >= 0) {
                    double mean_dyg = 0.0, mean_dyg_h = 0.0;
                    for (int64_t j = 0; j < c; ++j) {
                        const double dyg = gyr[j] * gr[static_cast<size_t>(j)];
                        mean_dyg += dyg;
                        mean_dyg_h += dyg * hrow[j];
                    }
                    mean_dyg /= static_cast<double>(c);
                    mean_dyg_h /= static_cast<double>(c);
                    const double istd = (*inv_std)[static_cast<size_t>(r)];
                    double* gxr = pg[static_cast<size_t>(sx)] + r * c;
                    for (int64_t j = 0; j < c; ++j) {
                        const double dyg = gyr[j] * gr[static_cast<size_t>(j)];
                        gxr[j] += istd * (dyg - mean_dyg - hrow[j] * mean_dyg_h);
                    }
                }
            }
        });
    });
}

Tensor mse_loss(const Tensor& predicted, const Tensor& target) {
    require_equal_shapes("mse_loss", predicted, target);
    Tensor diff = sub(predicted, target);
    return reduce_mean(mul(diff, diff), {}, false);
}

Tensor elementwise(EwOp op, const Tensor& a, const Tensor* b) {
    const bool binary = op == EwOp::add || op == EwOp::sub || op == EwOp::mul;
    if (binary && !b) throw ValueError("elementwise: binary op needs a second operand");
    if (!binary && b) throw ValueError("elementwise: unary op takes one operand");
    switch (op) {
        case EwOp::add: return add(a, *b);
        case EwOp::sub: return sub(a, *b);
        case EwOp::mul: return mul(a, *b);
        case EwOp::sigmoid: return sigmoid(a);
        case EwOp::relu: return relu(a);
        case EwOp::exp: return exp(a);
    }
    throw ValueError("elementwise: unknown op");
}

}  // namespace stgcn

#include "stgcn/data.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>

#include "stgcn/error.hpp"
#include "stgcn/rng.hpp"

namespace stgcn {

NormBounds compute_bounds(const Tensor& series) {
    return compute_bounds(series, 0, series.extent(0));
}

NormBounds compute_bounds(const Tensor& series, int64_t t_begin, int64_t t_end) {
    if (series.ndim() < 1) throw ShapeError("bounds: empty tensor");
    if (t_begin < 0 || t_end <= t_begin || t_end > series.extent(0))
        throw ValueError("bounds: bad time range");
    const int64_t stride = series.size() / series.extent(0);
    const auto& v = series.data();
    double lo = v[static_cast<size_t>(t_begin * stride)];
    double hi = lo;
    for (int64_t i = t_begin * stride; i < t_end * stride; ++i) {
        lo = std::min(lo, v[static_cast<size_t>(i)]);
        hi = std::max(hi, v[static_cast<size_t>(i)]);
    }
    if (hi == lo)
        throw ValueError("normalize: constant series (max == min == " + std::to_string(lo) + ")");
    return NormBounds{lo, hi};
}

Tensor normalize_series(const Tensor& series, const NormBounds& bounds) {
    if (bounds.hi <= bounds.lo) throw ValueError("normalize: bounds must satisfy max > min");
    const double span = bounds.hi - bounds.lo;
    std::vector<double> out(series.data());
    for (double& x : out) x = (x - bounds.lo) / span;
    return Tensor(series.shape(), std::move(out));
}

Tensor denormalize(const Tensor& normalized, const NormBounds& bounds) {
    const double span = bounds.hi - bounds.lo;
    std::vector<double> out(normalized.data());
    for (double& x : out) x = x * span + bounds.lo;
    return Tensor(normalized.shape(), std::move(out));
}

SeriesWindows make_windows(const Tensor& raw_series, int input_steps, int horizon,
                           std::array<int, 3> ratios) {
    if (raw_series.ndim() != 3)
        throw ShapeError("make_windows: series must be [time, nodes, channels], got " +
                         shape_str(raw_series.shape()));
    if (input_steps < 1 || horizon < 1)
        throw ValueError("make_windows: input_steps and horizon must be positive");
    const int64_t total = raw_series.extent(0);
    const int64_t window = static_cast<int64_t>(input_steps) + horizon;
    if (total < window)
        throw ValueError("make_windows: series length " + std::to_string(total) +
                         " is shorter than one window of " + std::to_string(window));
    int sum = 0;
    for (int r : ratios) {
        if (r < 0) throw ValueError("make_windows: negative split ratio");
        sum += r;
    }
    if (sum <= 0 || ratios[0] <= 0)
        throw ValueError("make_windows: training split ratio must be positive");

    SeriesWindows w;
    w.input_steps = input_steps;
    w.horizon = horizon;

    std::array<int64_t, 3> len{};
    int64_t used = 0;
    for (int i = 0; i < 3; ++i) {
        len[static_cast<size_t>(i)] = total * ratios[static_cast<size_t>(i)] / sum;
        used += len[static_cast<size_t>(i)];
    }
    len[0] += total - used;  // leftover steps go to the training region

    w.region_len = len;
    w.region_begin = {0, len[0], len[0] + len[1]};

    w.bounds = compute_bounds(raw_series, 0, len[0]);
    w.series = normalize_series(raw_series, w.bounds);

    // flag when training bounds fail to cover the held-out regions
    const int64_t stride = w.series.size() / total;
    const auto& v = w.series.data();
    for (int64_t i = len[0] * stride; i < total * stride; ++i) {
        if (v[static_cast<size_t>(i)] < 0.0 || v[static_cast<size_t>(i)] > 1.0) {
            w.test_exceeds_unit = true;
            break;
        }
    }
    if (w.test_exceeds_unit)
        std::cerr << "warning: held-out values exceed the training normalization range [0,1]\n";

    for (int s = 0; s < 3; ++s) {
        const int64_t begin = w.region_begin[static_cast<size_t>(s)];
        const int64_t count = w.region_len[static_cast<size_t>(s)] - window + 1;
        for (int64_t i = 0; i < count; ++i) w.starts[static_cast<size_t>(s)].push_back(begin + i);
    }
    return w;
}

namespace {

Tensor gather(const SeriesWindows& w, std::span<const int64_t> starts, int64_t offset,
              int64_t length) {
    if (starts.empty()) throw ValueError("gather: empty batch");
    const int64_t n = w.nodes();
    const int64_t c = w.channels();
    const int64_t b = static_cast<int64_t>(starts.size());
    const auto& v = w.series.data();
    std::vector<double> out(static_cast<size_t>(b * n * length * c));
    for (int64_t bi = 0; bi < b; ++bi) {
        const int64_t t0 = starts[static_cast<size_t>(bi)] + offset;
        if (t0 < 0 || t0 + length > w.series.extent(0))
            throw ValueError("gather: window out of range");
        for (int64_t ni = 0; ni < n; ++ni)
            for (int64_t ti = 0; ti < length; ++ti)
                for (int64_t ci = 0; ci < c; ++ci)
                    out[static_cast<size_t>(((bi * n + ni) * length + ti) * c + ci)] =
                        v[static_cast<size_t>(((t0 + ti) * n + ni) * c + ci)];
    }
    return Tensor({b, n, length, c}, std::move(out));
}

}  // namespace

Tensor gather_inputs(const SeriesWindows& w, std::span<const int64_t> starts) {
    return gather(w, starts, 0, w.input_steps);
}

Tensor gather_targets(const SeriesWindows& w, std::span<const int64_t> starts) {
    return gather(w, starts, w.input_steps, w.horizon);
}

Tensor ring_lag_series(int nodes, int steps, int period, double spatial_coef, double noise_sigma,
                       uint64_t seed) {
    if (nodes < 1 || steps < 1 || period < 1) throw ValueError("ring_lag_series: bad sizes");
    Rng rng(seed);
    const int burn = 8 * period;  // multiple of the period keeps phases aligned
    const int total = burn + steps;
    std::vector<double> x(static_cast<size_t>(total) * static_cast<size_t>(nodes), 0.0);
    const double omega = 2.0 * M_PI / static_cast<double>(period);
    for (int t = 0; t < total; ++t) {
        for (int i = 0; i < nodes; ++i) {
            const int prev = (i + nodes - 1) % nodes;
            const double lag =
                t >= 2 ? x[static_cast<size_t>((t - 2) * nodes + prev)] : 0.0;
            x[static_cast<size_t>(t * nodes + i)] =
                std::sin(omega * static_cast<double>(t)) + spatial_coef * lag +
                rng.normal(0.0, noise_sigma);
        }
    }
    std::vector<double> out(static_cast<size_t>(steps) * static_cast<size_t>(nodes));
    std::copy(x.begin() + static_cast<long>(burn) * nodes, x.end(), out.begin());
    return Tensor({steps, nodes, 1}, std::move(out));
}

}  // namespace stgcn

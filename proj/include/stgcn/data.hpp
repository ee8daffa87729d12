#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "stgcn/tensor.hpp"

namespace stgcn {

struct NormBounds {
    double lo = 0.0;
    double hi = 1.0;
};

// Global min-max normalization; errors on a constant series.
NormBounds compute_bounds(const Tensor& series);
NormBounds compute_bounds(const Tensor& series, int64_t t_begin, int64_t t_end);
Tensor normalize_series(const Tensor& series, const NormBounds& bounds);
Tensor denormalize(const Tensor& normalized, const NormBounds& bounds);

enum class Split { Train = 0, Val = 1, Test = 2 };

// Chronologically split series with stride-1 sliding windows inside each
// region; no window spans a region boundary. Bounds come from the training
// region only.
struct SeriesWindows {
    Tensor series;  // [time, N, C], normalized
    NormBounds bounds;
    int input_steps = 0;  // T
    int horizon = 0;      // M
    std::array<int64_t, 3> region_begin{};
    std::array<int64_t, 3> region_len{};
    std::array<std::vector<int64_t>, 3> starts;  // window X-start indices per region
    bool test_exceeds_unit = false;  // train-split bounds pushed val/test outside [0,1]

    const std::vector<int64_t>& window_starts(Split s) const {
        return starts[static_cast<size_t>(s)];
    }
    int64_t nodes() const { return series.extent(1); }
    int64_t channels() const { return series.extent(2); }
};

SeriesWindows make_windows(const Tensor& raw_series, int input_steps, int horizon,
                           std::array<int, 3> ratios);

// Materializes a batch for the model: inputs [B, N, T, C], targets [B, N, M, C].
Tensor gather_inputs(const SeriesWindows& w, std::span<const int64_t> starts);
Tensor gather_targets(const SeriesWindows& w, std::span<const int64_t> starts);

// Synthetic benchmark series [steps, nodes, 1]: a shared daily sinusoid plus a
// lagged spatial term from the previous ring neighbour and white noise. A
// period-aligned burn-in reaches the stationary regime before sampling.
Tensor ring_lag_series(int nodes, int steps, int period, double spatial_coef, double noise_sigma,
                       uint64_t seed);

}  // namespace stgcn

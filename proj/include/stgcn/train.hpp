#pragma once

#include <map>
#include <string>
#include <vector>

#include "stgcn/config.hpp"
#include "stgcn/data.hpp"
#include "stgcn/model.hpp"

namespace stgcn {

// --- metrics ----------------------------------------------------------------

struct HorizonMetrics {
    std::vector<double> mae;   // per horizon step
    std::vector<double> rmse;  // per horizon step
    double mae_mean = 0.0;     // mean over horizon steps
    double rmse_mean = 0.0;
};

// MAE/RMSE per horizon step of already-denormalized forecasts [B, N, M, C].
HorizonMetrics metrics_from_forecasts(const Tensor& predicted, const Tensor& target);

// Denormalizes predictions and targets, then reports MAE/RMSE per horizon
// step and averaged.
HorizonMetrics evaluate_model(const Model& model, const SeriesWindows& data, Split split,
                              int batch_size = 64);

// Historical average: the mean of the training-region observations at the
// same within-period slot, evaluated over the same windows as the model.
HorizonMetrics evaluate_ha(const SeriesWindows& data, Split split, int period);

// Mean attention scores over a split, one [N x branches] table per block.
std::vector<Tensor> mean_attention(const Model& model, const SeriesWindows& data, Split split,
                                   int batch_size = 64);

// --- optimization -------------------------------------------------------------

// Adaptive moment estimation with per-parameter state and optional global
// gradient-norm clipping.
class AdamOptimizer {
public:
    explicit AdamOptimizer(double lr, double beta1 = 0.9, double beta2 = 0.999,
                           double eps = 1e-8);

    void step(std::vector<std::pair<std::string, Tensor*>>& params,
              const std::map<std::string, const std::vector<double>*>& grads, double clip_norm);

private:
    struct Slot {
        std::vector<double> m, v;
        int64_t t = 0;
    };
    double lr_, beta1_, beta2_, eps_;
    std::map<std::string, Slot> slots_;
};

// --- training loop --------------------------------------------------------------

struct TrainResult {
    std::vector<double> train_mse;  // one entry per epoch
    std::vector<double> val_mse;    // NaN when the validation split is empty
};

TrainResult train_model(Model& model, const SeriesWindows& data, const TrainConfig& cfg);

}  // namespace stgcn

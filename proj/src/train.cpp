#include "stgcn/train.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "stgcn/error.hpp"
#include "stgcn/rng.hpp"

namespace stgcn {

// --- metrics -----------------------------------------------------------------

namespace {

struct ErrorAccum {
    std::vector<double> abs_sum, sq_sum;
    int64_t per_step_count = 0;

    explicit ErrorAccum(int horizon) : abs_sum(static_cast<size_t>(horizon), 0.0), sq_sum(static_cast<size_t>(horizon), 0.0) {}

    void add(const Tensor& pred, const Tensor& target, int horizon) {
        // both [B, N, M, C]
        const auto& p = pred.data();
        const auto& t = target.data();
        const int64_t b = pred.extent(0);
        const int64_t n = pred.extent(1);
        const int64_t c = pred.extent(3);
        for (int64_t bi = 0; bi < b; ++bi)
            for (int64_t ni = 0; ni < n; ++ni)
                for (int64_t m = 0; m < horizon; ++m)
                    for (int64_t ci = 0; ci < c; ++ci) {
                        const size_t idx = static_cast<size_t>(((bi * n + ni) * horizon + m) * c + ci);
                        const double e = p[idx] - t[idx];
                        abs_sum[static_cast<size_t>(m)] += std::fabs(e);
                        sq_sum[static_cast<size_t>(m)] += e * e;
                    }
        per_step_count += b * n * c;
    }

    HorizonMetrics finish(int horizon) const {
        if (per_step_count == 0) throw ValueError("metrics: empty split");
        HorizonMetrics out;
        out.mae.resize(static_cast<size_t>(horizon));
        out.rmse.resize(static_cast<size_t>(horizon));
        for (int m = 0; m < horizon; ++m) {
            out.mae[static_cast<size_t>(m)] = abs_sum[static_cast<size_t>(m)] / static_cast<double>(per_step_count);
            out.rmse[static_cast<size_t>(m)] =
                std::sqrt(sq_sum[static_cast<size_t>(m)] / static_cast<double>(per_step_count));
        }
        out.mae_mean = std::accumulate(out.mae.begin(), out.mae.end(), 0.0) / horizon;
        out.rmse_mean = std::accumulate(out.rmse.begin(), out.rmse.end(), 0.0) / horizon;
        return out;
    }
};

std::vector<std::span<const int64_t>> batches_of(const std::vector<int64_t>& starts,
                                                 int batch_size) {
    std::vector<std::span<const int64_t>> out;
    for (size_t i = 0; i < starts.size(); i += static_cast<size_t>(batch_size)) {
        const size_t len = std::min(static_cast<size_t>(batch_size), starts.size() - i);
        out.emplace_back(starts.data() + i, len);
    }
    return out;
}

}  // namespace

HorizonMetrics metrics_from_forecasts(const Tensor& predicted, const Tensor& target) {
    if (predicted.shape() != target.shape() || predicted.ndim() != 4)
        throw ShapeError("metrics: forecasts must share shape [batch, nodes, horizon, channels]");
    const int horizon = static_cast<int>(predicted.extent(2));
    ErrorAccum acc(horizon);
    acc.add(predicted, target, horizon);
    return acc.finish(horizon);
}

HorizonMetrics evaluate_model(const Model& model, const SeriesWindows& data, Split split,
                              int batch_size) {
    const auto& starts = data.window_starts(split);
    if (starts.empty()) throw ValueError("evaluate: split has no windows");
    ErrorAccum acc(data.horizon);
    for (const auto batch : batches_of(starts, batch_size)) {
        const Tensor x = gather_inputs(data, batch);
        const Tensor y = gather_targets(data, batch);
        const Model::Output out = model.forward(nullptr, x);
        acc.add(denormalize(out.fused, data.bounds), denormalize(y, data.bounds), data.horizon);
    }
    return acc.finish(data.horizon);
}

HorizonMetrics evaluate_ha(const SeriesWindows& data, Split split, int period) {
    const auto& starts = data.window_starts(split);
    if (starts.empty()) throw ValueError("historical-average: split has no windows");
    const int64_t train_len = data.region_len[0];
    if (period < 1 || train_len < period || train_len % period != 0)
        throw ValueError("historical-average: training history of " + std::to_string(train_len) +
                         " steps is not a whole number of periods of " + std::to_string(period));

    const int64_t n = data.nodes();
    const int64_t c = data.channels();
    const auto& v = data.series.data();
    // per-slot per-node per-channel means over the training region
    std::vector<double> slot_mean(static_cast<size_t>(period * n * c), 0.0);
    const int64_t cycles = train_len / period;
    for (int64_t t = 0; t < train_len; ++t) {
        const int64_t slot = t % period;
        for (int64_t i = 0; i < n * c; ++i)
            slot_mean[static_cast<size_t>(slot * n * c + i)] += v[static_cast<size_t>(t * n * c + i)];
    }
    for (double& x : slot_mean) x /= static_cast<double>(cycles);

    ErrorAccum acc(data.horizon);
    const int64_t m = data.horizon;
    for (int64_t s : starts) {
        std::vector<double> pred(static_cast<size_t>(n * m * c));
        std::vector<double> target(static_cast<size_t>(n * m * c));
        for (int64_t mi = 0; mi < m; ++mi) {
            const int64_t t_abs = s + data.input_steps + mi;
            const int64_t slot = t_abs % period;
            for (int64_t ni = 0; ni < n; ++ni)
                for (int64_t ci = 0; ci < c; ++ci) {
                    pred[static_cast<size_t>((ni * m + mi) * c + ci)] =
                        slot_mean[static_cast<size_t>((slot * n + ni) * c + ci)];
                    target[static_cast<size_t>((ni * m + mi) * c + ci)] =
                        v[static_cast<size_t>((t_abs * n + ni) * c + ci)];
                }
        }
        const Tensor p({1, n, m, c}, std::move(pred));
        const Tensor t({1, n, m, c}, std::move(target));
        acc.add(denormalize(p, data.bounds), denormalize(t, data.bounds), data.horizon);
    }
    return acc.finish(data.horizon);
}

std::vector<Tensor> mean_attention(const Model& model, const SeriesWindows& data, Split split,
                                   int batch_size) {
    const auto& starts = data.window_starts(split);
    if (starts.empty()) throw ValueError("attention report: split has no windows");
    const int64_t n = data.nodes();
    const int64_t branches = model.config().branch_count();
    std::vector<std::vector<double>> sums(
        static_cast<size_t>(model.config().blocks),
        std::vector<double>(static_cast<size_t>(n * branches), 0.0));
    int64_t count = 0;
    for (const auto batch : batches_of(starts, batch_size)) {
        const Tensor x = gather_inputs(data, batch);
        const Model::Output out = model.forward(nullptr, x, LossMode::FcOnly, true);
        const int64_t b = x.extent(0);
        for (size_t l = 0; l < out.attention.size(); ++l) {
            const auto& a = out.attention[l].data();
            for (int64_t bi = 0; bi < b; ++bi)
                for (int64_t i = 0; i < n * branches; ++i)
                    sums[l][static_cast<size_t>(i)] += a[static_cast<size_t>(bi * n * branches + i)];
        }
        count += b;
    }
    std::vector<Tensor> out;
    for (auto& s : sums) {
        for (double& x : s) x /= static_cast<double>(count);
        out.emplace_back(Shape{n, branches}, std::move(s));
    }
    return out;
}

// --- Adam ------------------------------------------------------------------

AdamOptimizer::AdamOptimizer(double lr, double beta1, double beta2, double eps)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

void AdamOptimizer::step(std::vector<std::pair<std::string, Tensor*>>& params,
                         const std::map<std::string, const std::vector<double>*>& grads,
                         double clip_norm) {
    double sq = 0.0;
    for (auto& [name, _] : params) {
        auto it = grads.find(name);
        if (it == grads.end() || !it->second) continue;
        for (double g : *it->second) sq += g * g;
    }
    const double norm = std::sqrt(sq);
    const double factor = (clip_norm > 0.0 && norm > clip_norm) ? clip_norm / norm : 1.0;

    for (auto& [name, tensor] : params) {
        auto it = grads.find(name);
        if (it == grads.end() || !it->second) continue;
        const std::vector<double>& g = *it->second;
        Slot& slot = slots_[name];
        if (slot.m.empty()) {
            slot.m.assign(g.size(), 0.0);
            slot.v.assign(g.size(), 0.0);
        }
        slot.t += 1;
        const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(slot.t));
        const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(slot.t));
        std::vector<double> next(tensor->data());
        for (size_t i = 0; i < g.size(); ++i) {
            const double gi = factor * g[i];
            slot.m[i] = beta1_ * slot.m[i] + (1.0 - beta1_) * gi;
            slot.v[i] = beta2_ * slot.v[i] + (1.0 - beta2_) * gi * gi;
            const double mhat = slot.m[i] / bc1;
            const double vhat = slot.v[i] / bc2;
            next[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
        }
        *tensor = Tensor(tensor->shape(), std::move(next));
    }
}

// --- training loop ------------------------------------------------------------

namespace {

double epoch_loss(const Model& model, const SeriesWindows& data, Split split, LossMode mode,
                  int batch_size) {
    const auto& starts = data.window_starts(split);
    if (starts.empty()) return std::numeric_limits<double>::quiet_NaN();
    double total = 0.0;
    int64_t count = 0;
    for (const auto batch : batches_of(starts, batch_size)) {
        const Tensor x = gather_inputs(data, batch);
        const Tensor y = gather_targets(data, batch);
        const Model::Bound bound = model.bind(nullptr);
        total += model.loss(bound, x, y, mode).value() * static_cast<double>(batch.size());
        count += static_cast<int64_t>(batch.size());
    }
    return total / static_cast<double>(count);
}

}  // namespace

TrainResult train_model(Model& model, const SeriesWindows& data, const TrainConfig& cfg) {
    const auto& train_starts = data.window_starts(Split::Train);
    if (train_starts.empty()) throw ValueError("train: no training windows");

    Rng shuffle_rng(cfg.seed);
    AdamOptimizer adam(cfg.learning_rate);
    TrainResult result;

    const int phase1_epochs = cfg.two_phase ? cfg.epochs / 2 : 0;

    std::vector<int64_t> order(train_starts);
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const LossMode mode = epoch < phase1_epochs ? LossMode::FcOnly : LossMode::Joint;
        const std::vector<std::string> active = model.trainable(mode);

        shuffle_rng.shuffle(order.begin(), order.end());
        double loss_sum = 0.0;
        int64_t seen = 0;
        int batch_index = 0;
        for (const auto batch : batches_of(order, cfg.batch_size)) {
            Tape tape;
            const Model::Bound bound = model.bind(&tape);
            const Tensor x = gather_inputs(data, batch);
            const Tensor y = gather_targets(data, batch);
            double batch_loss = 0.0;
            try {
                const Tensor loss = model.loss(bound, x, y, mode);
                batch_loss = loss.value();
                const Gradients grads = tape.backward(loss);

                std::map<std::string, const std::vector<double>*> by_name;
                for (const auto& [name, bound_tensor] : bound.named)
                    by_name[name] = grads.raw(bound_tensor);

                std::vector<std::pair<std::string, Tensor*>> slots;
                std::map<std::string, Tensor*> param_ptr;
                model.params().visit(
                    [&](const std::string& name, Tensor& t) { param_ptr[name] = &t; });
                for (const std::string& name : active) slots.emplace_back(name, param_ptr.at(name));
                adam.step(slots, by_name, cfg.clip_norm);
            } catch (const NumericError& e) {
                throw Error("training aborted at epoch " + std::to_string(epoch + 1) + " batch " +
                            std::to_string(batch_index + 1) + ": " + e.what());
            }
            loss_sum += batch_loss * static_cast<double>(batch.size());
            seen += static_cast<int64_t>(batch.size());
            ++batch_index;
        }
        result.train_mse.push_back(loss_sum / static_cast<double>(seen));
        result.val_mse.push_back(epoch_loss(model, data, Split::Val, mode, cfg.batch_size));
    }
    return result;
}

}  // namespace stgcn

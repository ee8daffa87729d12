#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "stgcn/graph.hpp"
#include "stgcn/ops.hpp"
#include "stgcn/tape.hpp"
#include "stgcn/tensor.hpp"

namespace stgcn {

struct KernelSize {
    int kt = 1;  // temporal extent
    int ks = 1;  // spatial-hop extent
};

struct ModelConfig {
    int blocks = 2;                                                    // stacked encoder blocks
    std::vector<KernelSize> kernels = {{3, 1}, {1, 3}, {5, 2}, {3, 2}, {2, 3}};
    int cheb_order = 6;        // K, furthest spatial receptive field
    int branch_channels = 16;  // C_o, shared by every branch
    int embed_dim = 10;        // node embedding width
    int se_reduction = 4;
    int fc_hidden = 64;
    bool use_mask = true;
    bool use_attention = true;
    bool key_transform = false;  // optional learned key map
    bool ts_light = false;       // feature-buffer recursion instead of re-encoding

    int branch_count() const { return static_cast<int>(kernels.size()); }
};

// --- learnable state ----------------------------------------------------------

struct BranchParams {
    Tensor weight;  // [kt, ks, ci, co]
    Tensor bias;    // [co]
};

struct BlockParams {
    std::vector<BranchParams> branches;
    Tensor node_embed;  // [n, d]
    Tensor query_w;     // [d, co]
    Tensor key_w;       // [co, co], used only with key_transform
    Tensor mix_w;       // [K, co*B, co*B]
    Tensor out_w;       // [co*B, co]
    Tensor se_w1, se_b1, se_w2, se_b2;
    Tensor res_proj;    // [ci, co] when ci != co, otherwise undefined
    Tensor ln_gain, ln_bias;  // [co]
};

struct ModelParams {
    std::vector<BlockParams> blocks;
    Tensor mask_w;  // [n, n]
    Tensor fc_w1, fc_b1, fc_w2, fc_b2;
    Tensor ts_head_w, ts_head_b;
    Tensor ts_embed_w, ts_embed_b;  // light-mode frame embedding
    Tensor gate_raw;                // [n, M]

    // Enumerates every defined parameter in a fixed order.
    template <class F>
    void visit(F&& f) {
        for (size_t l = 0; l < blocks.size(); ++l) {
            auto& blk = blocks[l];
            const std::string p = "block" + std::to_string(l) + ".";
            for (size_t b = 0; b < blk.branches.size(); ++b) {
                f(p + "branch" + std::to_string(b) + ".weight", blk.branches[b].weight);
                f(p + "branch" + std::to_string(b) + ".bias", blk.branches[b].bias);
            }
            f(p + "node_embed", blk.node_embed);
            f(p + "query_w", blk.query_w);
            f(p + "key_w", blk.key_w);
            f(p + "mix_w", blk.mix_w);
            f(p + "out_w", blk.out_w);
            f(p + "se_w1", blk.se_w1);
            f(p + "se_b1", blk.se_b1);
            f(p + "se_w2", blk.se_w2);
            f(p + "se_b2", blk.se_b2);
            if (blk.res_proj.defined()) f(p + "res_proj", blk.res_proj);
            f(p + "ln_gain", blk.ln_gain);
            f(p + "ln_bias", blk.ln_bias);
        }
        f("mask_w", mask_w);
        f("fc.w1", fc_w1);
        f("fc.b1", fc_b1);
        f("fc.w2", fc_w2);
        f("fc.b2", fc_b2);
        f("ts.head_w", ts_head_w);
        f("ts.head_b", ts_head_b);
        f("ts.embed_w", ts_embed_w);
        f("ts.embed_b", ts_embed_b);
        f("fusion.gate_raw", gate_raw);
    }

    int64_t count() const;
};

// --- forward pieces (exposed for tests) ----------------------------------------

// x [*, N, T, C] lifted against the per-hop mixing matrices: out[..., k, :] =
// cheb[k] applied over the node axis. Returns [*, N, T, K, C].
Tensor lift_signal(const Tensor& x, const std::vector<Tensor>& cheb);

// Joint sliding contraction of the lifted signal [*, T, K, Ci] (trailing axes)
// with one branch kernel; padding keeps the (T, K) extents, the extra cell of
// even kernels landing on the trailing side.
Tensor st_conv(const Tensor& lifted, const Tensor& kernel, const Tensor& bias, bool padded);

// Key of one branch: sum of its output over the time and hop axes.
Tensor global_pool(const Tensor& branch_out);

// Per-node softmax scores over branches from embedding queries and pooled
// keys. keys[b] is [*, N, Co]; the result is [*, N, B].
Tensor branch_attention(const std::vector<Tensor>& keys, const Tensor& node_embed,
                        const Tensor& query_w, const Tensor* key_w);

// Scales every branch by its per-node score and concatenates along channels.
Tensor attention_concat(const std::vector<Tensor>& branch_outs, const Tensor& scores);

// Output layer of one block: mixes the attention-weighted concatenation over
// the (hop, channel) axes, applies channel attention, projects back to Co,
// adds the (projected) residual and layer-normalizes.
Tensor block_output(const Tensor& ao, const BlockParams& blk, const Tensor& x_in, int cheb_order);

// Convex blend of the two decoder outputs under a sigmoid gate [N, M].
Tensor fuse_forecasts(const Tensor& fc_out, const Tensor& ts_out, const Tensor& gate_raw);

// --- the model ------------------------------------------------------------------

enum class LossMode { Joint, FcOnly };

class Model {
public:
    Model(TrafficGraph graph, ModelConfig cfg, int input_steps, int horizon, int channels,
          uint64_t seed);

    struct Output {
        Tensor fc;     // [B, N, M, C]
        Tensor ts;     // [B, N, M, C]
        Tensor fused;  // [B, N, M, C]
        std::vector<Tensor> attention;  // per block, [B, N, branches]
    };

    // Bound view of the parameters; replaces the mask with ones when disabled.
    struct Bound {
        ModelParams p;                                      // tensors living on the tape
        std::vector<std::pair<std::string, Tensor>> named;  // same tensors, for gradient lookup
    };
    Bound bind(Tape* tape) const;

    Tensor encode(const Bound& bound, const Tensor& x,
                  std::vector<Tensor>* attention_out = nullptr) const;
    Output forward(const Bound& bound, const Tensor& x, LossMode mode = LossMode::Joint,
                   bool want_attention = false) const;
    Output forward(Tape* tape, const Tensor& x, LossMode mode = LossMode::Joint,
                   bool want_attention = false) const;
    Tensor loss(const Bound& bound, const Tensor& x, const Tensor& y,
                LossMode mode = LossMode::Joint) const;

    // Direct decoder: both affine layers applied per node to the flattened
    // encoder features, all horizon steps at once.
    Tensor decode_fc(const Bound& bound, const Tensor& h) const;
    // Iterative decoder; `steps` defaults to the model horizon. h0 is the
    // encoding of x, reused for the first step.
    Tensor decode_ts(const Bound& bound, const Tensor& x, const Tensor& h0, int steps = 0) const;

    ModelParams& params() { return params_; }
    const ModelParams& params() const { return params_; }
    const ModelConfig& config() const { return cfg_; }
    const TrafficGraph& graph() const { return graph_; }
    int input_steps() const { return t_; }
    int horizon() const { return m_; }
    int channels() const { return c_; }
    int64_t parameter_count() const { return params_.count(); }

    // Names of the parameters trained under the given flags and phase.
    std::vector<std::string> trainable(LossMode mode) const;

private:
    std::vector<Tensor> chebyshev_for_forward(const Bound& bound) const;

    TrafficGraph graph_;
    ModelConfig cfg_;
    int t_, m_, c_;
    ModelParams params_;
    std::vector<Tensor> static_cheb_;  // mask-free stack, fixed lambda_max = 2
};

}  // namespace stgcn

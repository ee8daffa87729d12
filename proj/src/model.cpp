#include "stgcn/model.hpp"

#include <algorithm>
#include <cmath>

#include "stgcn/error.hpp"
#include "stgcn/rng.hpp"
#include "stgcn/spectral.hpp"

namespace stgcn {

namespace {

Tensor uniform_init(Rng& rng, Shape shape, int64_t fan_in) {
    const double bound = std::sqrt(1.0 / static_cast<double>(fan_in));
    std::vector<double> v(static_cast<size_t>(shape_size(shape)));
    for (double& x : v) x = rng.uniform(-bound, bound);
    return Tensor(std::move(shape), std::move(v));
}

Tensor normal_init(Rng& rng, Shape shape, double stddev) {
    std::vector<double> v(static_cast<size_t>(shape_size(shape)));
    for (double& x : v) x = rng.normal(0.0, stddev);
    return Tensor(std::move(shape), std::move(v));
}

}  // namespace

int64_t ModelParams::count() const {
    int64_t n = 0;
    const_cast<ModelParams*>(this)->visit([&](const std::string&, Tensor& t) { n += t.size(); });
    return n;
}

// --- forward pieces ---------------------------------------------------------

Tensor lift_signal(const Tensor& x, const std::vector<Tensor>& cheb) {
    if (x.ndim() < 3)
        throw ShapeError("lift_signal: input needs rank >= 3, got " + shape_str(x.shape()));
    const int nd = x.ndim();
    const int64_t n = x.extent(nd - 3);
    if (cheb.empty()) throw ValueError("lift_signal: empty polynomial stack");
    for (const Tensor& t : cheb)
        if (t.ndim() != 2 || t.extent(0) != n || t.extent(1) != n)
            throw ShapeError("lift_signal: mixing matrix " + shape_str(t.shape()) +
                             " does not match " + std::to_string(n) + " nodes");

    // bring the node axis to the front, collapse the rest, mix, restore
    std::vector<int> to_front(static_cast<size_t>(nd));
    to_front[0] = nd - 3;
    int w = 1;
    for (int d = 0; d < nd; ++d)
        if (d != nd - 3) to_front[static_cast<size_t>(w++)] = d;
    std::vector<int> back(static_cast<size_t>(nd));
    for (int d = 0; d < nd; ++d) back[static_cast<size_t>(to_front[static_cast<size_t>(d)])] = d;

    const Tensor xf = permute(x, to_front);               // [N, ..., T, C]
    const int64_t rest = xf.size() / n;
    const Tensor x2 = reshape(xf, {n, rest});

    Shape slice_shape(x.shape());
    slice_shape.insert(slice_shape.end() - 1, 1);  // [..., N, T, 1, C]

    std::vector<Tensor> hops;
    hops.reserve(cheb.size());
    for (const Tensor& tk : cheb) {
        Tensor mixed = matmul(tk, x2);                            // [N, rest]
        mixed = permute(reshape(mixed, xf.shape()), back);        // [..., N, T, C]
        hops.push_back(reshape(mixed, slice_shape));
    }
    return concat(hops, nd - 1);  // hop axis sits before the channel axis
}

Tensor st_conv(const Tensor& lifted, const Tensor& kernel, const Tensor& bias, bool padded) {
    if (kernel.ndim() != 4)
        throw ShapeError("st_conv: kernel must be [kt, ks, ci, co], got " +
                         shape_str(kernel.shape()));
    Tensor x = lifted;
    if (padded) {
        const int64_t kt = kernel.extent(0);
        const int64_t ks = kernel.extent(1);
        const int64_t t_before = (kt - 1) / 2;
        const int64_t k_before = (ks - 1) / 2;
        if (kt > 1) x = pad(x, x.ndim() - 3, t_before, kt - 1 - t_before);
        if (ks > 1) x = pad(x, x.ndim() - 2, k_before, ks - 1 - k_before);
    }
    Tensor out = window_contract(x, kernel);
    if (bias.defined()) out = add_bias(out, bias);
    return out;
}

Tensor global_pool(const Tensor& branch_out) {
    if (branch_out.ndim() < 3)
        throw ShapeError("global_pool: input needs rank >= 3, got " +
                         shape_str(branch_out.shape()));
    const int nd = branch_out.ndim();
    return reduce_sum(branch_out, {nd - 3, nd - 2}, false);
}

Tensor branch_attention(const std::vector<Tensor>& keys, const Tensor& node_embed,
                        const Tensor& query_w, const Tensor* key_w) {
    if (keys.empty()) throw ValueError("branch_attention: needs at least one branch");
    const int64_t n = node_embed.extent(0);
    const int64_t co = query_w.extent(1);
    Tensor q = matmul(node_embed, query_w);  // [N, Co]
    Shape qshape(static_cast<size_t>(keys[0].ndim()), 1);
    qshape[static_cast<size_t>(keys[0].ndim() - 2)] = n;
    qshape.back() = co;
    const Tensor qb = reshape(q, qshape);

    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(co));
    std::vector<Tensor> cols;
    cols.reserve(keys.size());
    for (const Tensor& key : keys) {
        Tensor k = key_w ? matmul(key, *key_w) : key;
        Tensor s = scale(reduce_sum(mul_bc(k, qb), {-1}, true), inv_sqrt);  // [*, N, 1]
        cols.push_back(s);
    }
    return softmax(concat(cols, -1), -1);  // [*, N, B]
}

Tensor attention_concat(const std::vector<Tensor>& branch_outs, const Tensor& scores) {
    if (branch_outs.empty()) throw ValueError("attention_concat: needs at least one branch");
    const int64_t b = scores.extent(-1);
    if (static_cast<int64_t>(branch_outs.size()) != b)
        throw ShapeError("attention_concat: " + std::to_string(branch_outs.size()) +
                         " branches but " + std::to_string(b) + " score columns");
    const Shape& fshape = branch_outs[0].shape();
    for (const Tensor& f : branch_outs)
        if (f.shape() != fshape)
            throw ShapeError("attention_concat: branch shapes differ: " + shape_str(fshape) +
                             " vs " + shape_str(f.shape()));

    // per-branch score column [*, N, 1] stretched over the (T, K, Co) axes
    Shape sshape = scores.shape();
    sshape.back() = 1;
    sshape.push_back(1);
    sshape.push_back(1);
    if (sshape.size() != fshape.size())
        throw ShapeError("attention_concat: scores " + shape_str(scores.shape()) +
                         " do not match branches " + shape_str(fshape));

    std::vector<Tensor> scaled;
    scaled.reserve(branch_outs.size());
    for (int64_t i = 0; i < b; ++i) {
        Tensor col = slice(scores, -1, i, 1);  // [*, N, 1]
        scaled.push_back(mul_bc(branch_outs[static_cast<size_t>(i)], reshape(col, sshape)));
    }
    return concat(scaled, -1);
}

Tensor block_output(const Tensor& ao, const BlockParams& blk, const Tensor& x_in, int cheb_order) {
    if (ao.ndim() != 5)
        throw ShapeError("block_output: expected [batch, nodes, time, hops, channels], got " +
                         shape_str(ao.shape()));
    const int64_t batch = ao.extent(0);
    const int64_t n = ao.extent(1);
    const int64_t t = ao.extent(2);
    const int64_t cb = ao.extent(4);
    Tensor z = matmul(reshape(ao, {batch, n, t, cheb_order * cb}),
                      reshape(blk.mix_w, {cheb_order * cb, cb}));  // [B, N, T, cb]
    Tensor squeeze = reduce_mean(z, {1, 2}, false);                // [B, cb]
    Tensor gate = sigmoid(add_bias(
        matmul(relu(add_bias(matmul(squeeze, blk.se_w1), blk.se_b1)), blk.se_w2), blk.se_b2));
    z = mul_bc(z, reshape(gate, {batch, 1, 1, cb}));
    Tensor out = matmul(z, blk.out_w);  // [B, N, T, Co]
    const Tensor res = blk.res_proj.defined() ? matmul(x_in, blk.res_proj) : x_in;
    return layer_norm(add(out, res), blk.ln_gain, blk.ln_bias);
}

Tensor fuse_forecasts(const Tensor& fc_out, const Tensor& ts_out, const Tensor& gate_raw) {
    if (fc_out.shape() != ts_out.shape())
        throw ShapeError("fuse_forecasts: decoder shapes differ: " + shape_str(fc_out.shape()) +
                         " vs " + shape_str(ts_out.shape()));
    const int nd = fc_out.ndim();
    if (gate_raw.ndim() != 2 || gate_raw.extent(0) != fc_out.extent(nd - 3) ||
        gate_raw.extent(1) != fc_out.extent(nd - 2))
        throw ShapeError("fuse_forecasts: gate " + shape_str(gate_raw.shape()) +
                         " does not match forecasts " + shape_str(fc_out.shape()));
    Shape gshape(static_cast<size_t>(nd), 1);
    gshape[static_cast<size_t>(nd - 3)] = gate_raw.extent(0);
    gshape[static_cast<size_t>(nd - 2)] = gate_raw.extent(1);
    const Tensor gate = reshape(sigmoid(gate_raw), gshape);
    const Tensor complement = add_scalar(scale(gate, -1.0), 1.0);
    return add(mul_bc(fc_out, gate), mul_bc(ts_out, complement));
}

// --- Model ------------------------------------------------------------------

Model::Model(TrafficGraph graph, ModelConfig cfg, int input_steps, int horizon, int channels,
             uint64_t seed)
    : graph_(std::move(graph)), cfg_(std::move(cfg)), t_(input_steps), m_(horizon), c_(channels) {
    if (cfg_.blocks < 1) throw ConfigError("model: needs at least one block");
    if (cfg_.kernels.empty()) throw ConfigError("model: needs at least one branch kernel");
    if (cfg_.cheb_order < 1) throw ConfigError("model: cheb_order must be >= 1");
    if (t_ < 1 || m_ < 1 || c_ < 1) throw ConfigError("model: input_steps, horizon and channels must be positive");
    for (const KernelSize& k : cfg_.kernels) {
        if (k.kt < 1 || k.kt > t_)
            throw ConfigError("model: kernel temporal extent " + std::to_string(k.kt) +
                              " outside [1, " + std::to_string(t_) + "]");
        if (k.ks < 1 || k.ks > cfg_.cheb_order)
            throw ConfigError("model: kernel spatial extent " + std::to_string(k.ks) +
                              " exceeds cheb_order " + std::to_string(cfg_.cheb_order));
    }

    const int64_t n = graph_.n;
    const int64_t co = cfg_.branch_channels;
    const int64_t bcount = cfg_.branch_count();
    const int64_t cb = co * bcount;
    const int64_t bottleneck = std::max<int64_t>(1, cb / cfg_.se_reduction);
    const int64_t d = cfg_.embed_dim;
    const int64_t hidden = cfg_.fc_hidden;

    Rng rng(seed);
    params_.blocks.resize(static_cast<size_t>(cfg_.blocks));
    int64_t ci = c_;
    for (int l = 0; l < cfg_.blocks; ++l) {
        BlockParams& blk = params_.blocks[static_cast<size_t>(l)];
        for (const KernelSize& k : cfg_.kernels) {
            BranchParams br;
            br.weight = uniform_init(rng, {k.kt, k.ks, ci, co}, k.kt * k.ks * ci);
            br.bias = Tensor::zeros({co});
            blk.branches.push_back(std::move(br));
        }
        blk.node_embed = normal_init(rng, {n, d}, 0.1);
        blk.query_w = uniform_init(rng, {d, co}, d);
        blk.key_w = uniform_init(rng, {co, co}, co);
        blk.mix_w = uniform_init(rng, {cfg_.cheb_order, cb, cb}, cfg_.cheb_order * cb);
        blk.out_w = uniform_init(rng, {cb, co}, cb);
        blk.se_w1 = uniform_init(rng, {cb, bottleneck}, cb);
        blk.se_b1 = Tensor::zeros({bottleneck});
        blk.se_w2 = uniform_init(rng, {bottleneck, cb}, bottleneck);
        blk.se_b2 = Tensor::zeros({cb});
        if (ci != co) blk.res_proj = uniform_init(rng, {ci, co}, ci);
        blk.ln_gain = Tensor::ones({co});
        blk.ln_bias = Tensor::zeros({co});
        ci = co;
    }
    params_.mask_w = Tensor::ones({n, n});
    const int64_t flat = static_cast<int64_t>(t_) * co;
    params_.fc_w1 = uniform_init(rng, {flat, hidden}, flat);
    params_.fc_b1 = Tensor::zeros({hidden});
    params_.fc_w2 = uniform_init(rng, {hidden, static_cast<int64_t>(m_) * c_}, hidden);
    params_.fc_b2 = Tensor::zeros({static_cast<int64_t>(m_) * c_});
    params_.ts_head_w = uniform_init(rng, {flat, c_}, flat);
    params_.ts_head_b = Tensor::zeros({c_});
    params_.ts_embed_w = uniform_init(rng, {c_, co}, c_);
    params_.ts_embed_b = Tensor::zeros({co});
    params_.gate_raw = Tensor::zeros({n, m_});

    // mask-free spectral stack, same pipeline and lambda_max convention as the
    // masked path so enabling a mask of ones is bit-identical
    static_cheb_ = chebyshev_polynomials(
        scaled_laplacian(normalized_laplacian(graph_.adjacency, false), 2.0), cfg_.cheb_order);
}

Model::Bound Model::bind(Tape* tape) const {
    Bound bound;
    bound.p = params_;
    if (tape) {
        bound.p.visit([&](const std::string& name, Tensor& t) {
            t = tape->leaf(t);
            bound.named.emplace_back(name, t);
        });
    } else {
        bound.p.visit([&](const std::string& name, Tensor& t) { bound.named.emplace_back(name, t); });
    }
    if (!cfg_.use_mask) bound.p.mask_w = Tensor::ones({graph_.n, graph_.n});
    return bound;
}

std::vector<Tensor> Model::chebyshev_for_forward(const Bound& bound) const {
    if (!cfg_.use_mask) return static_cheb_;
    const Tensor masked = apply_mask(bound.p.mask_w, graph_.adjacency);
    return chebyshev_polynomials(scaled_laplacian(normalized_laplacian(masked, false), 2.0),
                                 cfg_.cheb_order);
}

Tensor Model::encode(const Bound& bound, const Tensor& x,
                     std::vector<Tensor>* attention_out) const {
    if (x.ndim() != 4)
        throw ShapeError("encode: input must be [batch, nodes, time, channels], got " +
                         shape_str(x.shape()));
    const int64_t batch = x.extent(0);
    const int64_t n = x.extent(1);
    if (n != graph_.n || x.extent(2) != t_ || x.extent(3) != c_)
        throw ShapeError("encode: input " + shape_str(x.shape()) + " does not match model (" +
                         std::to_string(graph_.n) + " nodes, " + std::to_string(t_) + " steps, " +
                         std::to_string(c_) + " channels)");

    const std::vector<Tensor> cheb = chebyshev_for_forward(bound);
    const int64_t bcount = cfg_.branch_count();

    Tensor h = x;
    for (int l = 0; l < cfg_.blocks; ++l) {
        const BlockParams& blk = bound.p.blocks[static_cast<size_t>(l)];
        const Tensor lifted = lift_signal(h, cheb);  // [B, N, T, K, Ci]

        std::vector<Tensor> branch_outs, keys;
        branch_outs.reserve(static_cast<size_t>(bcount));
        keys.reserve(static_cast<size_t>(bcount));
        for (int64_t b = 0; b < bcount; ++b) {
            Tensor f = st_conv(lifted, blk.branches[static_cast<size_t>(b)].weight,
                               blk.branches[static_cast<size_t>(b)].bias, /*padded=*/true);
            keys.push_back(global_pool(f));
            branch_outs.push_back(std::move(f));
        }

        Tensor scores;
        if (cfg_.use_attention) {
            scores = branch_attention(keys, blk.node_embed, blk.query_w,
                                      cfg_.key_transform ? &blk.key_w : nullptr);
        } else {
            scores = Tensor::full({batch, n, bcount}, 1.0 / static_cast<double>(bcount));
        }
        if (attention_out) attention_out->push_back(scores);

        const Tensor ao = attention_concat(branch_outs, scores);  // [B, N, T, K, Co*B]
        h = block_output(ao, blk, h, cfg_.cheb_order);
    }
    return h;  // [B, N, T, Co]
}

Tensor Model::decode_fc(const Bound& bound, const Tensor& h) const {
    const int64_t batch = h.extent(0);
    const int64_t n = h.extent(1);
    const int64_t flat = h.extent(2) * h.extent(3);
    Tensor z = relu(add_bias(matmul(reshape(h, {batch, n, flat}), bound.p.fc_w1), bound.p.fc_b1));
    Tensor out = add_bias(matmul(z, bound.p.fc_w2), bound.p.fc_b2);
    return reshape(out, {batch, n, m_, c_});
}

Tensor Model::decode_ts(const Bound& bound, const Tensor& x, const Tensor& h0, int steps) const {
    if (steps <= 0) steps = m_;
    const int64_t batch = x.extent(0);
    const int64_t n = x.extent(1);
    const int64_t co = cfg_.branch_channels;
    const int64_t flat = static_cast<int64_t>(t_) * co;

    auto head = [&](const Tensor& h) {
        return add_bias(matmul(reshape(h, {batch, n, flat}), bound.p.ts_head_w),
                        bound.p.ts_head_b);  // [B, N, C]
    };

    std::vector<Tensor> frames;
    frames.reserve(static_cast<size_t>(steps));
    if (cfg_.ts_light) {
        // recurse over the feature buffer: shift time, append the embedded frame
        Tensor hbuf = h0;
        for (int step = 0; step < steps; ++step) {
            Tensor frame = head(hbuf);
            frames.push_back(reshape(frame, {batch, n, 1, c_}));
            if (step + 1 < steps) {
                Tensor emb = add_bias(matmul(frame, bound.p.ts_embed_w), bound.p.ts_embed_b);
                hbuf = concat({slice(hbuf, 2, 1, t_ - 1), reshape(emb, {batch, n, 1, co})}, 2);
            }
        }
    } else {
        // faithful iterative forecasting: feed each predicted frame back into
        // the observation window and re-encode
        Tensor buffer = x;
        for (int step = 0; step < steps; ++step) {
            const Tensor h = step == 0 ? h0 : encode(bound, buffer);
            Tensor frame = head(h);
            frames.push_back(reshape(frame, {batch, n, 1, c_}));
            if (step + 1 < steps)
                buffer = concat({slice(buffer, 2, 1, t_ - 1), reshape(frame, {batch, n, 1, c_})}, 2);
        }
    }
    return concat(frames, 2);  // [B, N, M, C]
}

Model::Output Model::forward(const Bound& bound, const Tensor& x, LossMode mode,
                             bool want_attention) const {
    Output out;
    std::vector<Tensor> atts;
    const Tensor h = encode(bound, x, want_attention ? &atts : nullptr);
    out.attention = std::move(atts);
    out.fc = decode_fc(bound, h);
    if (mode == LossMode::FcOnly) {
        out.fused = out.fc;
        return out;
    }
    out.ts = decode_ts(bound, x, h);
    out.fused = fuse_forecasts(out.fc, out.ts, bound.p.gate_raw);
    return out;
}

Model::Output Model::forward(Tape* tape, const Tensor& x, LossMode mode,
                             bool want_attention) const {
    const Bound bound = bind(tape);
    return forward(bound, x, mode, want_attention);
}

Tensor Model::loss(const Bound& bound, const Tensor& x, const Tensor& y,
                   LossMode mode) const {
    const Output out = forward(bound, x, mode, false);
    return mse_loss(out.fused, y);
}

std::vector<std::string> Model::trainable(LossMode mode) const {
    std::vector<std::string> names;
    const_cast<ModelParams&>(params_).visit([&](const std::string& name, Tensor&) {
        if (name == "mask_w" && !cfg_.use_mask) return;
        const bool attention_param =
            name.find("node_embed") != std::string::npos || name.find("query_w") != std::string::npos ||
            name.find("key_w") != std::string::npos;
        if (attention_param && !cfg_.use_attention) return;
        if (name.find("key_w") != std::string::npos && !cfg_.key_transform) return;
        if (name.rfind("ts.embed", 0) == 0 && !cfg_.ts_light) return;
        if (mode == LossMode::FcOnly &&
            (name.rfind("ts.", 0) == 0 || name.rfind("fusion.", 0) == 0))
            return;
        names.push_back(name);
    });
    return names;
}

}  // namespace stgcn

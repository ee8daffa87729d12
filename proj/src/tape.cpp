#include "stgcn/tape.hpp"

#include <cmath>

#include "stgcn/error.hpp"

namespace stgcn {

Tensor Gradients::of(const Tensor& t) const {
    if (!t.on_tape() || t.tape() != tape_)
        throw ValueError("gradients: tensor was not recorded on this tape");
    const auto& slot = by_node_[static_cast<size_t>(t.node())];
    if (!slot) return Tensor::zeros(t.shape());
    return Tensor(t.shape(), *slot);
}

const std::vector<double>* Gradients::raw(const Tensor& t) const {
    if (!t.on_tape() || t.tape() != tape_)
        throw ValueError("gradients: tensor was not recorded on this tape");
    const auto& slot = by_node_[static_cast<size_t>(t.node())];
    return slot ? &*slot : nullptr;
}

Tensor Tape::leaf(const Tensor& value) {
    if (!value.defined()) throw ValueError("tape: cannot watch an empty tensor");
    return record(value.shape(), value.storage(), {}, nullptr);
}

Tensor Tape::record(Shape shape, std::shared_ptr<const std::vector<double>> data,
                    std::vector<int> parents, PullFn pull) {
    nodes_.push_back(Node{shape, std::move(parents), std::move(pull)});
    Tensor t = Tensor::with_storage(std::move(shape), std::move(data));
    t.tape_ = this;
    t.node_ = static_cast<int>(nodes_.size()) - 1;
    return t;
}

Gradients Tape::backward(const Tensor& loss) const {
    if (!loss.on_tape() || loss.tape() != this)
        throw ValueError("backward: loss is not recorded on this tape");
    if (loss.size() != 1)
        throw ValueError("backward: loss must be a scalar, got shape " + shape_str(loss.shape()));

    std::vector<std::optional<std::vector<double>>> grads(nodes_.size());
    grads[static_cast<size_t>(loss.node())] = std::vector<double>{1.0};

    std::vector<double*> parent_bufs;
    for (int i = loss.node(); i >= 0; --i) {
        auto& gi = grads[static_cast<size_t>(i)];
        if (!gi) continue;  // unreached branch
        const Node& node = nodes_[static_cast<size_t>(i)];
        if (node.parents.empty()) continue;  // leaf keeps its gradient

        parent_bufs.clear();
        for (int p : node.parents) {
            auto& gp = grads[static_cast<size_t>(p)];
            if (!gp)
                gp = std::vector<double>(
                    static_cast<size_t>(shape_size(nodes_[static_cast<size_t>(p)].shape)), 0.0);
            parent_bufs.push_back(gp->data());
        }
        node.pull(gi->data(), parent_bufs);
    }

    Gradients out;
    out.tape_ = this;
    out.by_node_ = std::move(grads);
    return out;
}

FiniteDiffReport finite_diff_check(std::span<const ParamRef> params, const LossBuilder& build_loss,
                                   double eps) {
    if (!(eps > 0.0 && eps <= 1e-3))
        throw ValueError("finite_diff_check: eps must lie in (0, 1e-3]");

    // analytic gradients from one taped evaluation
    Tape tape;
    std::vector<Tensor> bound;
    bound.reserve(params.size());
    for (const auto& p : params) bound.push_back(tape.leaf(*p.value));
    Tensor loss = build_loss(&tape, bound);
    if (loss.size() != 1)
        throw ValueError("finite_diff_check: loss must be a scalar");
    if (!std::isfinite(loss.value()))
        throw NumericError("finite_diff_check: loss evaluated non-finite");
    Gradients grads = tape.backward(loss);

    auto probe = [&](std::span<const Tensor> values) {
        Tensor v = build_loss(nullptr, values);
        double x = v.value();
        if (!std::isfinite(x)) throw NumericError("finite_diff_check: loss evaluated non-finite");
        return x;
    };

    FiniteDiffReport report;
    std::vector<Tensor> values(params.size());
    for (size_t i = 0; i < params.size(); ++i) values[i] = *params[i].value;

    // The difference quotient cannot resolve gradients below roughly
    // ulp(loss)/eps, so the denominator floor also carries the oracle's own
    // resolution; 1e-12 remains the hard minimum.
    const double resolution = 1e-5 * std::max(1.0, std::fabs(loss.value()));
    const double floor = std::max(1e-12, resolution);

    for (size_t i = 0; i < params.size(); ++i) {
        const Tensor analytic = grads.of(bound[i]);
        const Tensor original = values[i];
        const auto& base = original.data();
        for (int64_t j = 0; j < original.size(); ++j) {
            std::vector<double> bumped = base;
            bumped[static_cast<size_t>(j)] = base[static_cast<size_t>(j)] + eps;
            values[i] = Tensor(original.shape(), std::move(bumped));
            const double up = probe(values);

            bumped = base;
            bumped[static_cast<size_t>(j)] = base[static_cast<size_t>(j)] - eps;
            values[i] = Tensor(original.shape(), std::move(bumped));
            const double down = probe(values);

            const double numeric = (up - down) / (2.0 * eps);
            const double a = analytic.data()[static_cast<size_t>(j)];
            const double denom = std::max({std::fabs(a), std::fabs(numeric), floor});
            const double rel = std::fabs(a - numeric) / denom;
            if (rel > report.max_rel_err) {
                report.max_rel_err = rel;
                report.worst_param = params[i].name;
                report.worst_index = j;
                report.analytic = a;
                report.numeric = numeric;
            }
        }
        values[i] = original;
    }
    return report;
}

}  // namespace stgcn

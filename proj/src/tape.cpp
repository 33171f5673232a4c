#include "ganlab/tape.hpp"

#include <atomic>

#include "ganlab/adam.hpp"

namespace ganlab {

namespace {

std::atomic<uint64_t> g_tape_counter{1};
thread_local Tape* t_active = nullptr;

}  // namespace

Tape::Tape() : id_(g_tape_counter.fetch_add(1)) {}

TapeScope::TapeScope(Tape& tape) : prev_(t_active) { t_active = &tape; }
TapeScope::~TapeScope() { t_active = prev_; }

Tape* active_tape() { return t_active; }

int Tape::fresh_node(const Tensor& t) {
    const int id = static_cast<int>(nodes_.size());
    nodes_.push_back({t.size(), t.impl()->param});
    t.impl()->tape_id = id_;
    t.impl()->node = id;
    return id;
}

int Tape::input_node(const Tensor& t) {
    if (!t.requires_grad()) return -1;
    if (t.impl()->tape_id == id_ && t.impl()->node >= 0) return t.impl()->node;
    // Parameters become fresh leaves; values recorded on some other tape are
    // treated as constants here, which is the detach-across-tapes rule.
    if (t.impl()->param != nullptr) return fresh_node(t);
    if (t.impl()->tape_id == 0) return fresh_node(t);
    return -1;
}

void Tape::record(Tensor& out, BackFn fn) {
    if (consumed_)
        throw Error("tape already consumed by backward; records are final");
    out.impl()->requires_grad = true;
    const int id = fresh_node(out);
    records_.push_back({id, std::move(fn)});
}

real_t* Tape::grad_accum(int node) {
    if (node < 0) return nullptr;
    auto& buf = grads_[static_cast<size_t>(node)];
    if (buf.empty()) buf.assign(static_cast<size_t>(nodes_[node].size), real_t(0));
    return buf.data();
}

void Tape::backward(const Tensor& loss, std::span<Parameter* const> params) {
    if (consumed_)
        throw Error("backward called twice on the same tape");
    if (loss.size() != 1)
        throw ShapeError("backward requires a scalar loss, got " +
                         shape_str(loss.shape()));
    consumed_ = true;
    grads_.assign(nodes_.size(), {});

    const bool on_tape =
        loss.impl()->tape_id == id_ && loss.impl()->node >= 0;
    if (on_tape) {
        grads_[loss.impl()->node].assign(1, real_t(1));
        for (size_t i = records_.size(); i-- > 0;) {
            Record& rec = records_[i];
            auto& gout = grads_[rec.out];
            if (!gout.empty()) rec.fn(*this, gout.data());
            std::vector<real_t>().swap(gout);
            rec.fn = nullptr;  // releases saved forward values early
        }
        for (size_t i = 0; i < nodes_.size(); ++i) {
            if (nodes_[i].param && !grads_[i].empty())
                nodes_[i].param->accumulate_grad(grads_[i].data(),
                                                 nodes_[i].size);
        }
    }
    for (Parameter* p : params) {
        if (!p->has_grad) {
            p->grad.assign(static_cast<size_t>(p->value.size()), real_t(0));
            p->has_grad = true;
        }
    }
    records_.clear();
    grads_.clear();
}

}  // namespace ganlab

#pragma once

#include <functional>
#include <span>
#include <vector>

#include "ganlab/tensor.hpp"

namespace ganlab {

struct Parameter;

// Reverse-mode record of one training step. Ops append records in execution
// order while a TapeScope is active; backward() replays them once in reverse
// and is the only consumer. Records always satisfy the topological property
// that a record's operands were registered before it.
class Tape {
public:
    using BackFn = std::function<void(Tape&, const real_t*)>;

    Tape();
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    bool consumed() const { return consumed_; }
    size_t record_count() const { return records_.size(); }
    uint64_t id() const { return id_; }

    // Accumulates d(loss)/d(p) into every parameter reachable from `loss`;
    // parameters in `params` that the loss does not reach receive an explicit
    // zero gradient. The tape is consumed.
    void backward(const Tensor& loss, std::span<Parameter* const> params);
    void backward(const Tensor& loss) { backward(loss, {}); }

    // Recording interface used by the primitives.
    // Node id for an input: existing node, fresh leaf for parameters, or -1
    // when no gradient flows through it (constants, foreign-tape values).
    int input_node(const Tensor& t);
    // Registers `out` as the product of the newest record.
    void record(Tensor& out, BackFn fn);
    // Gradient buffer for a node, allocated zeroed on first use. Null when
    // node < 0, so callers can skip dead branches.
    real_t* grad_accum(int node);

private:
    struct NodeInfo {
        int64_t size;
        Parameter* param;
    };
    struct Record {
        int out;
        BackFn fn;
    };

    int fresh_node(const Tensor& t);

    std::vector<NodeInfo> nodes_;
    std::vector<Record> records_;
    std::vector<std::vector<real_t>> grads_;
    bool consumed_ = false;
    uint64_t id_;
};

// Installs a tape as the active recording target for the current thread.
class TapeScope {
public:
    explicit TapeScope(Tape& tape);
    ~TapeScope();
    TapeScope(const TapeScope&) = delete;
    TapeScope& operator=(const TapeScope&) = delete;

private:
    Tape* prev_;
};

// Tape the current thread records onto, or null outside any TapeScope.
Tape* active_tape();

}  // namespace ganlab

#pragma once

#include "ganlab/ops.hpp"

namespace ganlab {

// Non-saturating binary cross-entropy pieces over raw logits. The "fake"
// side evaluates log(1 - sigmoid(x)) as log(sigmoid(-x)), which is the same
// value computed without cancellation.

// -mean log sigmoid(logits); the positive-class term.
inline Tensor adversarial_real(const Tensor& logits) {
    return scale(mean_all(log_op(sigmoid(logits))), -1);
}

// -mean log(1 - sigmoid(logits)); the negative-class term.
inline Tensor adversarial_fake(const Tensor& logits) {
    return scale(mean_all(log_op(sigmoid(scale(logits, -1)))), -1);
}

}  // namespace ganlab

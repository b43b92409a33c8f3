#pragma once

#include "tkit/rnnt_loss.hpp"
#include "tkit/tensor.hpp"

namespace tkit {

/// Per-frame label distributions from a CTC branch, T x |V|.
struct CtcPosterior {
    Matrix probs;

    std::size_t frames() const { return probs.rows; }
    std::size_t vocab_size() const { return probs.cols; }
};

struct CtcLossResult {
    double loss = 0.0;
    Matrix grad;
};

/// True when `target` can be emitted in `frames` frames (one extra blank
/// frame is needed between repeated labels).
bool ctc_feasible(std::size_t frames, const TargetSeq &target);

/// CTC negative log-likelihood over T x |V| logits (blank at column
/// target.blank_id) with its gradient w.r.t. the logits. Throws when the
/// target cannot be emitted in T frames.
CtcLossResult ctc_loss(const Matrix &logits, const TargetSeq &target);

/// Sums the probability of every frame-label string that collapses to the
/// target. Requires |V|^T <= 10^6.
double ctc_loss_bruteforce(const Matrix &logits, const TargetSeq &target);

/// Row-wise softmax.
CtcPosterior ctc_posterior(const Matrix &logits);

/// Central finite-difference check of ctc_loss, as for grad_check.
double ctc_grad_check(const Matrix &logits, const TargetSeq &target, double epsilon);

} // namespace tkit

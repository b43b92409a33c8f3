#pragma once

#include <cstddef>
#include <vector>

#include "tkit/tensor.hpp"

namespace tkit {

/// Target label sequence y_1..y_U. No label may equal the blank id.
struct TargetSeq {
    std::vector<int> labels;
    int blank_id = 0;

    std::size_t size() const { return labels.size(); }
};

struct TransducerLossResult {
    double loss = 0.0;
    /// d loss / d logit, same layout as the input lattice.
    LogitBuffer grad;
};

/// Negative log-likelihood of `target` under the transducer lattice, summed
/// over every monotonic alignment, with its exact gradient w.r.t. the logits.
///
/// Full-vocabulary lattices normalize each (t, u) row over all L labels.
/// Lattices carrying a label_map normalize over the sampled labels only, so
/// the same routine computes the sampled-softmax objective.
TransducerLossResult transducer_loss(const LogitLattice &lattice, const TargetSeq &target);

/// Reference value by explicit enumeration of all C(T+U-1, U) alignments,
/// with probabilities evaluated by plain exp/sum. Requires T + U <= 16.
double transducer_loss_bruteforce(const LogitLattice &lattice, const TargetSeq &target);

/// Number of alignments the brute-force oracle visits for a (T, U) lattice.
std::size_t enumerate_alignment_count(std::size_t frames, std::size_t target_length);

/// Max relative error between the analytic gradient and central finite
/// differences of transducer_loss with step `epsilon`.
double grad_check(const LogitLattice &lattice, const TargetSeq &target, double epsilon);

} // namespace tkit

#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tkit/ctc.hpp"
#include "tkit/numerics.hpp"
#include "tkit/rnnt_loss.hpp"

namespace tkit {

enum class SamplingStrategy { batched, example_wise };

enum class DistributionSource { uniform, joint_ctc, intermediate_ctc, self_conditioned_ctc };

std::string to_string(SamplingStrategy s);
std::string to_string(DistributionSource s);

/// Distribution over the vocabulary used to draw negatives. Zero on the
/// positive set it was built against.
struct SamplingDistribution {
    std::vector<double> weights;
    DistributionSource source = DistributionSource::uniform;
};

/// Positive labels (blank first) plus sampled negatives, with the
/// vocabulary-id <-> compact-index mapping used by a sampled logit lattice.
class SampledVocab {
public:
    SampledVocab(std::vector<int> positive, std::vector<int> negative, SamplingStrategy strategy);

    const std::vector<int> &positive() const { return positive_; }
    const std::vector<int> &negative() const { return negative_; }
    SamplingStrategy strategy() const { return strategy_; }
    std::size_t size() const { return label_map_.size(); }

    /// Compact index -> vocabulary id. Positives first, blank at 0.
    const std::vector<int> &label_map() const { return label_map_; }
    std::optional<std::size_t> to_compact(int id) const;

private:
    std::vector<int> positive_;
    std::vector<int> negative_;
    SamplingStrategy strategy_;
    std::vector<int> label_map_;
    std::map<int, std::size_t> to_compact_;
};

/// {blank} plus the distinct target labels: blank first, then ascending ids.
std::vector<int> build_positive_set(const TargetSeq &target);
/// Union over a minibatch (batched sampling). All targets must share a blank.
std::vector<int> build_positive_set(std::span<const TargetSeq> targets);

/// Uniform over V minus `positive`. Throws when the positives cover V.
SamplingDistribution make_uniform_distribution(std::size_t vocab_size,
                                               std::span<const int> positive);

/// Frame-averaged posterior, zeroed on `positive` and renormalised. Falls
/// back to uniform over the complement when no mass is left.
SamplingDistribution make_ctc_distribution(const CtcPosterior &posterior,
                                           std::span<const int> positive,
                                           DistributionSource source = DistributionSource::joint_ctc);
/// Minibatch variant: mean of the per-example frame averages.
SamplingDistribution make_ctc_distribution(std::span<const CtcPosterior> posteriors,
                                           std::span<const int> positive,
                                           DistributionSource source = DistributionSource::joint_ctc);

/// Draws total_size - |positive| negatives from `dist` without replacement.
/// Throws when total_size < |positive|; the size is never clamped.
SampledVocab sample_vocab(std::span<const int> positive, const SamplingDistribution &dist,
                          std::size_t total_size, SeededRng &rng, SamplingStrategy strategy);

/// One shared vocabulary for the whole minibatch.
SampledVocab sample_batched(std::span<const TargetSeq> targets, const SamplingDistribution &dist,
                            std::size_t total_size, SeededRng &rng);

/// One vocabulary per example, each drawn from its own distribution with the
/// RNG stream (seed, stream_ids[i]).
std::vector<SampledVocab> sample_example_wise(std::span<const TargetSeq> targets,
                                              std::span<const SamplingDistribution> dists,
                                              std::size_t total_size, std::uint64_t seed,
                                              std::span<const std::uint64_t> stream_ids);

/// Stream id for example `index` of epoch `epoch`.
std::uint64_t example_stream_id(std::uint64_t epoch, std::uint64_t index);

} // namespace tkit

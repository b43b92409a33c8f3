#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "tkit/ctc.hpp"
#include "tkit/model.hpp"

namespace tkit {

/// At most this many consecutive label emissions per frame before a blank
/// is forced; keeps decoding finite for untrained models.
inline constexpr std::size_t kMaxEmissionsPerFrame = 10;

struct Hypothesis {
    std::vector<int> labels;
    double score = 0.0; // log-probability of the emission path
    std::vector<double> pred_state;
};

/// Vocabulary subset the decoder may emit. Always contains the blank.
struct DecodeConstraint {
    std::vector<int> allowed; // ascending
    std::optional<std::size_t> k;

    bool allows(int id) const;
};

/// Full-vocabulary log-probabilities at decoder state (t, prediction state),
/// with the encoder-side projection of every frame precomputed.
class JointScorer {
public:
    JointScorer(const ToyModel &model, const EncoderOutput &enc);

    std::size_t frames() const { return enc_proj_.rows; }
    std::vector<double> log_probs(std::size_t t, std::span<const double> pred_state) const;

private:
    const ToyModel &model_;
    Matrix enc_proj_;
};

/// Top-k non-blank labels of the frame-averaged posterior, plus the blank.
/// Ties at the cut are broken toward the smaller id.
DecodeConstraint build_ctc_constraint(const CtcPosterior &posterior, std::size_t k,
                                      int blank_id = 0);

/// Greedy transducer decoding: argmax over the allowed labels at each
/// (t, u) state, smaller id on ties.
Hypothesis greedy_decode(const ToyModel &model, const EncoderOutput &enc,
                         const DecodeConstraint *constraint = nullptr);
std::vector<int> greedy_decode(const ToyModel &model, const Matrix &features,
                               const DecodeConstraint *constraint = nullptr);

/// Path beam search synchronous in emitted symbols. Keeps the `beam` best
/// partial paths per step and the greedy path as the initial incumbent, so
/// beam = 1 reproduces greedy decoding and larger beams never score worse.
Hypothesis beam_search(const ToyModel &model, const EncoderOutput &enc, std::size_t beam,
                       const DecodeConstraint *constraint = nullptr);
Hypothesis beam_search(const ToyModel &model, const Matrix &features, std::size_t beam,
                       const DecodeConstraint *constraint = nullptr);

} // namespace tkit

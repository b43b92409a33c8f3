#pragma once

#include <vector>

#include "tkit/decode.hpp"

namespace tkit::testing {

/// Highest-scoring emission path by exhaustive depth-first search, under the
/// same per-frame emission cap as the decoders. Exponential; tiny inputs only.
inline Hypothesis exhaustive_best_path(const ToyModel &model, const EncoderOutput &enc,
                                       const DecodeConstraint *constraint = nullptr) {
    const JointScorer scorer(model, enc);
    const std::size_t T = scorer.frames();
    Hypothesis best;
    bool found = false;
    std::vector<int> labels;

    auto visit = [&](auto &&self, std::size_t t, std::size_t emitted, const std::vector<double> &state,
                     double score) -> void {
        if (t == T) {
            if (!found || score > best.score) {
                best.labels = labels;
                best.score = score;
                best.pred_state = state;
                found = true;
            }
            return;
        }
        // Scores only decrease along a path.
        if (found && score <= best.score) {
            return;
        }
        const auto lp = scorer.log_probs(t, state);
        self(self, t + 1, 0, state, score + lp[0]);
        if (emitted >= kMaxEmissionsPerFrame) {
            return;
        }
        for (int v = 1; v < static_cast<int>(lp.size()); ++v) {
            if (constraint != nullptr && !constraint->allows(v)) {
                continue;
            }
            labels.push_back(v);
            self(self, t, emitted + 1, predict_step(model, state, v),
                 score + lp[static_cast<std::size_t>(v)]);
            labels.pop_back();
        }
    };
    const auto &start = model.params[Param::pred_start].data;
    visit(visit, 0, 0, std::vector<double>(start.begin(), start.end()), 0.0);
    return best;
}

} // namespace tkit::testing

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tkit/config.hpp"
#include "tkit/dataio.hpp"
#include "tkit/decode.hpp"
#include "tkit/model.hpp"
#include "tkit/sampler.hpp"

namespace tkit {

enum class SoftmaxMode { full, batched, example_wise };
enum class DecodeMode { greedy, beam };

struct DecodeOptions {
    DecodeMode mode = DecodeMode::greedy;
    std::size_t beam = 4;
    std::size_t ctc_top_k = 0; // 0 disables the CTC constraint

    static DecodeOptions from(const Config &cfg);
};

struct TrainConfig {
    // model.*
    std::size_t hidden = 32;
    bool self_condition = false;
    // optim.*
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    double clip_norm = 5.0;
    // train.*
    std::size_t epochs = 10;
    std::size_t batch_size = 8;
    std::uint64_t seed = 1;
    std::size_t workers = 1;
    // sampling.*
    SoftmaxMode softmax = SoftmaxMode::full;
    DistributionSource distribution = DistributionSource::joint_ctc;
    std::size_t total_size = 0;
    // loss.*
    LossWeights weights;
    // decode.*
    DecodeOptions decode;

    static TrainConfig from(const Config &cfg);
    void validate(std::size_t vocab_size) const;
};

struct StepResult {
    double transducer = 0.0; // batch sums
    double ctc = 0.0;
    double inter = 0.0;
    std::size_t ctc_skipped = 0;
    std::size_t peak_logit_bytes = 0;
    std::vector<double> example_transducer;
    ParamSet grads; // mean over the batch, before clipping
};

struct EpochLog {
    std::size_t epoch = 0;
    double loss_transducer = 0.0;
    double loss_ctc = 0.0;
    double loss_inter = 0.0;
    std::optional<double> dev_ter;
    std::size_t peak_logit_bytes = 0;
    std::size_t ctc_skipped = 0;

    /// Single key=value line, fixed precision, no timing.
    std::string to_line() const;
};

class Trainer {
public:
    Trainer(const TrainConfig &cfg, const ModelDims &dims);
    Trainer(const TrainConfig &cfg, ToyModel model);

    const ToyModel &model() const { return model_; }
    const TrainConfig &config() const { return cfg_; }

    /// Forward/backward over one minibatch without touching the parameters.
    /// `indices` are the examples' positions in the epoch's dataset and key
    /// their sampling RNG streams.
    StepResult compute_step(std::span<const Utterance *const> batch,
                            std::span<const std::size_t> indices, std::size_t epoch) const;

    /// Clip to the configured global norm and take one Adam step.
    void apply(const ParamSet &grads);

    EpochLog run_epoch(const Dataset &train, const Dataset *dev, std::size_t epoch);

    /// Per-step mean transducer losses recorded by run_epoch.
    const std::vector<double> &step_losses() const { return step_losses_; }

private:
    TrainConfig cfg_;
    ToyModel model_;
    std::vector<double> adam_m_;
    std::vector<double> adam_v_;
    std::size_t adam_t_ = 0;
    std::vector<double> step_losses_;
};

/// Weighted objective of a single utterance, l_t L_t + l_c L_CTC + l_i L_Inter,
/// with the transducer term over `vocab` when given. Unreachable CTC targets
/// contribute zero. Accumulates the gradient into `grads` when non-null.
double example_objective(const ToyModel &model, const Utterance &utt, const LossWeights &weights,
                         const SampledVocab *vocab = nullptr, ParamSet *grads = nullptr);

struct EvalResult {
    ErrorRate error;
    std::vector<std::vector<int>> hypotheses;
};

EvalResult evaluate(const ToyModel &model, const Dataset &data, const DecodeOptions &opts,
                    std::size_t workers = 1);

/// Runs `fn(i)` for i in [0, n) on up to `workers` threads. Each index is
/// processed exactly once; callers write only to per-index slots.
void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)> &fn);

} // namespace tkit

#include "tkit/trainer.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <mutex>
#include <numeric>
#include <set>
#include <stdexcept>
#include <thread>

#include "tkit/ctc.hpp"
#include "tkit/rnnt_loss.hpp"

namespace tkit {

namespace {

constexpr std::uint64_t kShuffleSalt = 0x53485546464c45ULL;
constexpr std::uint64_t kSamplingSalt = 0x53414d504c45ULL;

const std::set<std::string> kKnownKeys = {
    "model.hidden",      "model.self_condition", "optim.lr",          "optim.beta1",
    "optim.beta2",       "optim.eps",            "optim.clip_norm",   "train.epochs",
    "train.batch_size",  "train.seed",           "train.workers",     "sampling.strategy",
    "sampling.distribution", "sampling.total_size", "loss.transducer", "loss.ctc",
    "loss.inter",        "decode.mode",          "decode.beam",       "decode.ctc_top_k",
};

const std::set<std::string> kCheckedSections = {"model", "optim", "train", "sampling", "loss",
                                                "decode"};

void reject_unknown_keys(const Config &cfg) {
    for (const auto &[key, value] : cfg.entries()) {
        const auto dot = key.find('.');
        const auto section = key.substr(0, dot);
        if (kCheckedSections.count(section) != 0 && kKnownKeys.count(key) == 0) {
            throw std::invalid_argument("unknown config key '" + key + "'");
        }
    }
}

SoftmaxMode parse_softmax(const std::string &s) {
    if (s == "full") {
        return SoftmaxMode::full;
    }
    if (s == "batched") {
        return SoftmaxMode::batched;
    }
    if (s == "example-wise") {
        return SoftmaxMode::example_wise;
    }
    throw std::invalid_argument("key 'sampling.strategy': expected full, batched or example-wise, got '" +
                                s + "'");
}

DistributionSource parse_distribution(const std::string &s) {
    for (auto d : {DistributionSource::uniform, DistributionSource::joint_ctc,
                   DistributionSource::intermediate_ctc, DistributionSource::self_conditioned_ctc}) {
        if (to_string(d) == s) {
            return d;
        }
    }
    throw std::invalid_argument(
        "key 'sampling.distribution': expected uniform, joint-ctc, inter-ctc or sc-ctc, got '" + s +
        "'");
}

double checked_weight(const Config &cfg, const std::string &key, double fallback) {
    const double w = cfg.get_double(key, fallback);
    if (w < 0.0) {
        throw std::invalid_argument("key '" + key + "': weight must be non-negative");
    }
    return w;
}

/// Negative-sampling distribution for `positive`; all zero when nothing is
/// left to sample.
SamplingDistribution negative_distribution(std::size_t vocab, std::span<const int> positive,
                                           DistributionSource source,
                                           std::span<const CtcPosterior> posteriors) {
    if (positive.size() >= vocab) {
        return {std::vector<double>(vocab, 0.0), source};
    }
    if (source == DistributionSource::uniform) {
        return make_uniform_distribution(vocab, positive);
    }
    return make_ctc_distribution(posteriors, positive, source);
}

const Matrix &distribution_logits(const EncoderOutput &enc, DistributionSource src) {
    return src == DistributionSource::joint_ctc ? enc.ctc_logits : enc.inter_logits;
}

void require_finite(double v, const char *what, const Utterance &utt) {
    if (!std::isfinite(v)) {
        throw std::runtime_error(std::string("non-finite ") + what + " loss on utterance '" +
                                 utt.id + "'");
    }
}

std::string fmt6(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

} // namespace

DecodeOptions DecodeOptions::from(const Config &cfg) {
    DecodeOptions o;
    const auto mode = cfg.get_string("decode.mode", "greedy");
    if (mode == "greedy") {
        o.mode = DecodeMode::greedy;
    } else if (mode == "beam") {
        o.mode = DecodeMode::beam;
    } else {
        throw std::invalid_argument("key 'decode.mode': expected greedy or beam, got '" + mode + "'");
    }
    o.beam = cfg.get_size("decode.beam", o.beam);
    if (o.beam == 0) {
        throw std::invalid_argument("key 'decode.beam': must be at least 1");
    }
    o.ctc_top_k = cfg.get_size("decode.ctc_top_k", o.ctc_top_k);
    return o;
}

TrainConfig TrainConfig::from(const Config &cfg) {
    reject_unknown_keys(cfg);
    TrainConfig c;
    c.hidden = cfg.get_size("model.hidden", c.hidden);
    c.self_condition = cfg.get_bool("model.self_condition", c.self_condition);
    c.lr = cfg.get_double("optim.lr", c.lr);
    c.beta1 = cfg.get_double("optim.beta1", c.beta1);
    c.beta2 = cfg.get_double("optim.beta2", c.beta2);
    c.adam_eps = cfg.get_double("optim.eps", c.adam_eps);
    c.clip_norm = cfg.get_double("optim.clip_norm", c.clip_norm);
    c.epochs = cfg.get_size("train.epochs", c.epochs);
    c.batch_size = cfg.get_size("train.batch_size", c.batch_size);
    c.seed = cfg.get_u64("train.seed", c.seed);
    c.workers = cfg.get_size("train.workers", c.workers);
    c.softmax = parse_softmax(cfg.get_string("sampling.strategy", "full"));
    c.distribution = parse_distribution(cfg.get_string("sampling.distribution", "joint-ctc"));
    c.total_size = cfg.get_size("sampling.total_size", c.total_size);
    c.weights.transducer = checked_weight(cfg, "loss.transducer", c.weights.transducer);
    c.weights.ctc = checked_weight(cfg, "loss.ctc", c.weights.ctc);
    c.weights.inter = checked_weight(cfg, "loss.inter", c.weights.inter);
    c.decode = DecodeOptions::from(cfg);
    return c;
}

void TrainConfig::validate(std::size_t vocab_size) const {
    if (hidden == 0) {
        throw std::invalid_argument("key 'model.hidden': must be at least 1");
    }
    if (!(lr > 0.0)) {
        throw std::invalid_argument("key 'optim.lr': must be positive");
    }
    if (!(beta1 >= 0.0 && beta1 < 1.0)) {
        throw std::invalid_argument("key 'optim.beta1': must lie in [0, 1)");
    }
    if (!(beta2 >= 0.0 && beta2 < 1.0)) {
        throw std::invalid_argument("key 'optim.beta2': must lie in [0, 1)");
    }
    if (!(adam_eps > 0.0)) {
        throw std::invalid_argument("key 'optim.eps': must be positive");
    }
    if (!(clip_norm >= 0.0)) {
        throw std::invalid_argument("key 'optim.clip_norm': must be non-negative");
    }
    if (batch_size == 0) {
        throw std::invalid_argument("key 'train.batch_size': must be at least 1");
    }
    if (workers == 0) {
        throw std::invalid_argument("key 'train.workers': must be at least 1");
    }
    if (vocab_size < 2) {
        throw std::invalid_argument("vocab_size: need the blank plus at least one label");
    }
    if (softmax != SoftmaxMode::full) {
        if (total_size == 0) {
            throw std::invalid_argument("key 'sampling.total_size': required for sampled softmax");
        }
        if (total_size > vocab_size) {
            throw std::invalid_argument("key 'sampling.total_size': " + std::to_string(total_size) +
                                        " exceeds the vocabulary size " +
                                        std::to_string(vocab_size));
        }
        if (distribution == DistributionSource::self_conditioned_ctc && !self_condition) {
            throw std::invalid_argument(
                "key 'sampling.distribution': sc-ctc requires model.self_condition=true");
        }
    }
    if (decode.ctc_top_k >= vocab_size) {
        throw std::invalid_argument("key 'decode.ctc_top_k': must be below the vocabulary size");
    }
}

std::string EpochLog::to_line() const {
    std::string line = "epoch=" + std::to_string(epoch) +
                       " loss_transducer=" + fmt6(loss_transducer) + " loss_ctc=" + fmt6(loss_ctc) +
                       " loss_inter=" + fmt6(loss_inter);
    if (dev_ter) {
        line += " dev_ter=" + fmt6(*dev_ter);
    }
    line += " peak_logit_bytes=" + std::to_string(peak_logit_bytes);
    line += " ctc_skipped=" + std::to_string(ctc_skipped);
    return line;
}

Trainer::Trainer(const TrainConfig &cfg, const ModelDims &dims)
    : Trainer(cfg, ToyModel::initialize(dims, cfg.self_condition, cfg.seed)) {}

Trainer::Trainer(const TrainConfig &cfg, ToyModel model) : cfg_(cfg), model_(std::move(model)) {
    cfg_.validate(model_.dims.vocab);
    if (cfg_.self_condition != model_.self_condition) {
        throw std::invalid_argument("key 'model.self_condition': does not match the model");
    }
    adam_m_.assign(model_.params.total_size(), 0.0);
    adam_v_.assign(model_.params.total_size(), 0.0);
}

StepResult Trainer::compute_step(std::span<const Utterance *const> batch,
                                 std::span<const std::size_t> indices, std::size_t epoch) const {
    const std::size_t B = batch.size();
    if (B == 0) {
        throw std::invalid_argument("compute_step: empty batch");
    }
    if (indices.size() != B) {
        throw std::invalid_argument("compute_step: indices and batch differ in size");
    }

    struct Example {
        ForwardCache cache;
        CtcLossResult ctc;
        CtcLossResult inter;
        bool ctc_ok = false;
        std::optional<LogitLattice> lattice;
        TransducerLossResult transducer;
        ParamSet grads;
    };
    std::vector<Example> ex(B);

    const std::size_t base_bytes = LogitBufferMeter::current();
    LogitBufferMeter::reset_peak();

    // Encoder and the two CTC terms.
    parallel_for(B, cfg_.workers, [&](std::size_t i) {
        const Utterance &utt = *batch[i];
        auto &e = ex[i];
        e.cache.enc = encode(model_, utt.features, model_.self_condition);
        e.cache.history = utt.target.labels;
        e.ctc_ok = ctc_feasible(utt.features.rows, utt.target);
        if (e.ctc_ok) {
            if (cfg_.weights.ctc != 0.0) {
                e.ctc = ctc_loss(e.cache.enc.ctc_logits, utt.target);
            }
            if (cfg_.weights.inter != 0.0) {
                e.inter = ctc_loss(e.cache.enc.inter_logits, utt.target);
            }
        }
    });

    // Sampled vocabularies.
    std::vector<SampledVocab> vocabs;
    if (cfg_.softmax != SoftmaxMode::full) {
        std::vector<TargetSeq> targets;
        targets.reserve(B);
        for (const auto *utt : batch) {
            targets.push_back(utt->target);
        }
        const bool uniform = cfg_.distribution == DistributionSource::uniform;
        const std::uint64_t sampling_seed = cfg_.seed ^ kSamplingSalt;
        if (cfg_.softmax == SoftmaxMode::example_wise) {
            std::vector<SamplingDistribution> dists;
            std::vector<std::uint64_t> streams;
            for (std::size_t i = 0; i < B; ++i) {
                const auto positive = build_positive_set(targets[i]);
                std::vector<CtcPosterior> post;
                if (!uniform) {
                    post.push_back(
                        ctc_posterior(distribution_logits(ex[i].cache.enc, cfg_.distribution)));
                }
                dists.push_back(
                    negative_distribution(model_.dims.vocab, positive, cfg_.distribution, post));
                streams.push_back(example_stream_id(epoch, indices[i]));
            }
            vocabs = sample_example_wise(targets, dists, cfg_.total_size, sampling_seed, streams);
        } else {
            const auto positive = build_positive_set(std::span<const TargetSeq>(targets));
            std::vector<CtcPosterior> posts;
            if (!uniform) {
                for (const auto &e : ex) {
                    posts.push_back(ctc_posterior(distribution_logits(e.cache.enc, cfg_.distribution)));
                }
            }
            const auto dist =
                negative_distribution(model_.dims.vocab, positive, cfg_.distribution, posts);
            SeededRng rng(sampling_seed, example_stream_id(epoch, indices[0]));
            vocabs.push_back(sample_batched(targets, dist, cfg_.total_size, rng));
        }
    }

    // Predictor, joint and transducer loss; every lattice stays alive.
    parallel_for(B, cfg_.workers, [&](std::size_t i) {
        auto &e = ex[i];
        e.cache.h_pre = predict(model_, e.cache.history);
        if (vocabs.empty()) {
            e.lattice.emplace(joint_logits(model_, e.cache.enc.h_enc, e.cache.h_pre, std::nullopt,
                                           &e.cache.joint));
        } else {
            const auto &vocab = vocabs.size() == 1 ? vocabs[0] : vocabs[i];
            e.lattice.emplace(
                joint_logits(model_, e.cache.enc.h_enc, e.cache.h_pre, vocab, &e.cache.joint));
        }
        e.transducer = transducer_loss(*e.lattice, batch[i]->target);
    });

    // Backward, one gradient set per example.
    parallel_for(B, cfg_.workers, [&](std::size_t i) {
        auto &e = ex[i];
        e.grads = ParamSet(model_.dims);
        e.grads.zero();
        UpstreamGrads up;
        up.lattice = &e.transducer.grad;
        if (e.ctc_ok && cfg_.weights.ctc != 0.0) {
            up.ctc = &e.ctc.grad;
        }
        if (e.ctc_ok && cfg_.weights.inter != 0.0) {
            up.inter = &e.inter.grad;
        }
        backward(model_, e.cache, up, cfg_.weights, e.grads);
    });

    StepResult result;
    result.peak_logit_bytes = LogitBufferMeter::peak() - base_bytes;
    result.grads = ParamSet(model_.dims);
    result.grads.zero();
    const double scale = 1.0 / static_cast<double>(B);
    for (std::size_t i = 0; i < B; ++i) {
        const auto &e = ex[i];
        require_finite(e.transducer.loss, "transducer", *batch[i]);
        result.transducer += e.transducer.loss;
        result.example_transducer.push_back(e.transducer.loss);
        if (e.ctc_ok) {
            require_finite(e.ctc.loss, "CTC", *batch[i]);
            require_finite(e.inter.loss, "intermediate CTC", *batch[i]);
            result.ctc += e.ctc.loss;
            result.inter += e.inter.loss;
        } else {
            ++result.ctc_skipped;
        }
        result.grads.add_scaled(e.grads, scale);
    }
    return result;
}

void Trainer::apply(const ParamSet &grads) {
    if (grads.total_size() != adam_m_.size()) {
        throw std::invalid_argument("apply: gradient shape does not match the model");
    }
    const double norm = std::sqrt(grads.squared_norm());
    if (!std::isfinite(norm)) {
        throw std::runtime_error("non-finite gradient norm");
    }
    const double clip = cfg_.clip_norm > 0.0 && norm > cfg_.clip_norm ? cfg_.clip_norm / norm : 1.0;
    ++adam_t_;
    const double t = static_cast<double>(adam_t_);
    const double c1 = 1.0 - std::pow(cfg_.beta1, t);
    const double c2 = 1.0 - std::pow(cfg_.beta2, t);
    std::size_t k = 0;
    for (std::size_t p = 0; p < kParamCount; ++p) {
        auto &w = model_.params.all()[p].data;
        const auto &g = grads.all()[p].data;
        for (std::size_t j = 0; j < w.size(); ++j, ++k) {
            const double gj = g[j] * clip;
            adam_m_[k] = cfg_.beta1 * adam_m_[k] + (1.0 - cfg_.beta1) * gj;
            adam_v_[k] = cfg_.beta2 * adam_v_[k] + (1.0 - cfg_.beta2) * gj * gj;
            w[j] -= cfg_.lr * (adam_m_[k] / c1) / (std::sqrt(adam_v_[k] / c2) + cfg_.adam_eps);
        }
    }
}

EpochLog Trainer::run_epoch(const Dataset &train, const Dataset *dev, std::size_t epoch) {
    if (train.vocab_size != model_.dims.vocab || train.feature_dim != model_.dims.input_dim) {
        throw std::invalid_argument("training data does not match the model dimensions");
    }
    const std::size_t N = train.size();
    std::vector<std::size_t> order(N);
    std::iota(order.begin(), order.end(), 0);
    SeededRng shuffle(cfg_.seed ^ kShuffleSalt, epoch);
    for (std::size_t i = N; i > 1; --i) {
        std::swap(order[i - 1], order[shuffle.uniform_index(i)]);
    }

    EpochLog log;
    log.epoch = epoch;
    std::vector<const Utterance *> batch;
    std::vector<std::size_t> idx;
    for (std::size_t start = 0; start < N; start += cfg_.batch_size) {
        const std::size_t end = std::min(N, start + cfg_.batch_size);
        batch.clear();
        idx.clear();
        for (std::size_t j = start; j < end; ++j) {
            batch.push_back(&train.utterances[order[j]]);
            idx.push_back(order[j]);
        }
        const auto step = compute_step(batch, idx, epoch);
        apply(step.grads);
        log.loss_transducer += step.transducer;
        log.loss_ctc += step.ctc;
        log.loss_inter += step.inter;
        log.ctc_skipped += step.ctc_skipped;
        log.peak_logit_bytes = std::max(log.peak_logit_bytes, step.peak_logit_bytes);
        step_losses_.push_back(step.transducer / static_cast<double>(batch.size()));
    }
    if (N > 0) {
        log.loss_transducer /= static_cast<double>(N);
        const std::size_t ctc_n = N - log.ctc_skipped;
        if (ctc_n > 0) {
            log.loss_ctc /= static_cast<double>(ctc_n);
            log.loss_inter /= static_cast<double>(ctc_n);
        }
    }
    if (dev != nullptr) {
        DecodeOptions greedy;
        log.dev_ter = evaluate(model_, *dev, greedy, cfg_.workers).error.rate();
    }
    return log;
}

double example_objective(const ToyModel &model, const Utterance &utt, const LossWeights &weights,
                         const SampledVocab *vocab, ParamSet *grads) {
    ForwardCache cache;
    cache.enc = encode(model, utt.features, model.self_condition);
    cache.history = utt.target.labels;
    const bool ctc_ok = ctc_feasible(utt.features.rows, utt.target);
    CtcLossResult ctc;
    CtcLossResult inter;
    if (ctc_ok) {
        ctc = ctc_loss(cache.enc.ctc_logits, utt.target);
        inter = ctc_loss(cache.enc.inter_logits, utt.target);
    }
    cache.h_pre = predict(model, cache.history);
    const auto lattice =
        vocab != nullptr
            ? joint_logits(model, cache.enc.h_enc, cache.h_pre, *vocab, &cache.joint)
            : joint_logits(model, cache.enc.h_enc, cache.h_pre, std::nullopt, &cache.joint);
    const auto transducer = transducer_loss(lattice, utt.target);
    if (grads != nullptr) {
        UpstreamGrads up;
        up.lattice = &transducer.grad;
        if (ctc_ok) {
            up.ctc = &ctc.grad;
            up.inter = &inter.grad;
        }
        backward(model, cache, up, weights, *grads);
    }
    return weights.transducer * transducer.loss + weights.ctc * ctc.loss +
           weights.inter * inter.loss;
}

EvalResult evaluate(const ToyModel &model, const Dataset &data, const DecodeOptions &opts,
                    std::size_t workers) {
    if (data.size() > 0 &&
        (data.vocab_size != model.dims.vocab || data.feature_dim != model.dims.input_dim)) {
        throw std::invalid_argument("evaluation data does not match the model dimensions");
    }
    EvalResult result;
    result.hypotheses.resize(data.size());
    parallel_for(data.size(), workers, [&](std::size_t i) {
        const auto enc = encode(model, data.utterances[i].features);
        std::optional<DecodeConstraint> constraint;
        if (opts.ctc_top_k > 0) {
            constraint = build_ctc_constraint(ctc_posterior(enc.ctc_logits), opts.ctc_top_k);
        }
        const DecodeConstraint *c = constraint ? &*constraint : nullptr;
        result.hypotheses[i] = opts.mode == DecodeMode::beam
                                   ? beam_search(model, enc, opts.beam, c).labels
                                   : greedy_decode(model, enc, c).labels;
    });
    for (std::size_t i = 0; i < data.size(); ++i) {
        result.error.add(data.utterances[i].target.labels, result.hypotheses[i]);
    }
    return result;
}

void parallel_for(std::size_t n, std::size_t workers,
                  const std::function<void(std::size_t)> &fn) {
    if (workers <= 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) {
            fn(i);
        }
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    {
        std::vector<std::jthread> pool;
        const std::size_t count = std::min(workers, n);
        for (std::size_t w = 0; w < count; ++w) {
            pool.emplace_back([&] {
                for (std::size_t i = next++; i < n; i = next++) {
                    try {
                        fn(i);
                    } catch (...) {
                        std::lock_guard lock(error_mutex);
                        if (!error) {
                            error = std::current_exception();
                        }
                        next = n;
                    }
                }
            });
        }
    }
    if (error) {
        std::rethrow_exception(error);
    }
}

} // namespace tkit

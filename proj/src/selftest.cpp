#include "tkit/selftest.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <stdexcept>

#include "tkit/decode.hpp"
#include "tkit/memory_model.hpp"

namespace tkit {

namespace {

double relative(double a, double b) {
    const double scale = std::max(std::abs(a), std::abs(b));
    return scale == 0.0 ? 0.0 : std::abs(a - b) / scale;
}

std::vector<int> random_labels(SeededRng &rng, std::size_t length, std::size_t vocab) {
    std::vector<int> labels(length);
    for (auto &y : labels) {
        y = static_cast<int>(rng.uniform_int(1, static_cast<std::int64_t>(vocab) - 1));
    }
    return labels;
}

Utterance random_utterance(SeededRng &rng, std::size_t frames, std::size_t target_length,
                           const ModelDims &dims) {
    Utterance utt;
    utt.id = "rand";
    utt.features = Matrix(frames, dims.input_dim);
    for (auto &x : utt.features.data) {
        x = rng.normal();
    }
    // Distinct neighbours keep the CTC term reachable when frames >= U.
    while (true) {
        utt.target.labels = random_labels(rng, target_length, dims.vocab);
        if (ctc_feasible(frames, utt.target)) {
            break;
        }
    }
    return utt;
}

CheckResult bound_check(std::string name, double value, double tolerance, std::string detail = {}) {
    CheckResult c;
    c.name = std::move(name);
    c.value = value;
    c.tolerance = tolerance;
    c.passed = std::isfinite(value) && value <= tolerance;
    c.detail = std::move(detail);
    return c;
}

CheckResult transducer_oracle(SeededRng &rng) {
    double worst = 0.0;
    for (int i = 0; i < 200; ++i) {
        const auto inst = random_transducer_instance(rng, 4, 3, 5);
        worst = std::max(worst, relative(transducer_loss(inst.lattice, inst.target).loss,
                                         transducer_loss_bruteforce(inst.lattice, inst.target)));
    }
    return bound_check("transducer-oracle", worst, 1e-9, "200 instances, T<=4 U<=3 |V|<=5");
}

CheckResult ctc_oracle(SeededRng &rng) {
    double worst = 0.0;
    for (int i = 0; i < 200; ++i) {
        const auto inst = random_ctc_instance(rng, 6, 6, 1e5);
        worst = std::max(worst, relative(ctc_loss(inst.logits, inst.target).loss,
                                         ctc_loss_bruteforce(inst.logits, inst.target)));
    }
    return bound_check("ctc-oracle", worst, 1e-9, "200 instances, |V|^T<=1e5");
}

SampledVocab random_vocab(SeededRng &rng, const TargetSeq &target, std::size_t vocab,
                          std::size_t extra) {
    const auto positive = build_positive_set(target);
    if (positive.size() == vocab) {
        return SampledVocab(positive, {}, SamplingStrategy::example_wise);
    }
    const auto dist = make_uniform_distribution(vocab, positive);
    const std::size_t total = std::min(vocab, positive.size() + extra);
    return sample_vocab(positive, dist, total, rng, SamplingStrategy::example_wise);
}

CheckResult grad_transducer(SeededRng &rng, bool sampled, Fault fault) {
    double worst = 0.0;
    for (int i = 0; i < 20; ++i) {
        const auto inst = random_transducer_instance(rng, 4, 3, 6, 1.0);
        if (sampled) {
            const auto vocab = random_vocab(rng, inst.target, inst.lattice.labels(), 1);
            const auto lattice = restrict_lattice(inst.lattice, vocab.label_map());
            worst = std::max(worst, transducer_grad_error(lattice, inst.target, 1e-5, fault));
        } else {
            worst = std::max(worst, transducer_grad_error(inst.lattice, inst.target, 1e-5, fault));
        }
    }
    return bound_check(sampled ? "grad-transducer-sampled" : "grad-transducer-full", worst, 1e-4,
                       "20 instances, eps=1e-5");
}

CheckResult grad_ctc(SeededRng &rng, Fault fault) {
    double worst = 0.0;
    for (int i = 0; i < 20; ++i) {
        const auto inst = random_ctc_instance(rng, 6, 6, 1e6, 1.0);
        worst = std::max(worst, ctc_grad_error(inst.logits, inst.target, 1e-5, fault));
    }
    return bound_check("grad-ctc", worst, 1e-4, "20 instances, eps=1e-5");
}

CheckResult grad_model(SeededRng &rng, Fault fault) {
    double worst = 0.0;
    const ModelDims dims{3, 4, 6};
    for (bool sc : {false, true}) {
        const auto model = ToyModel::initialize(dims, sc, rng.next_u64());
        const auto utt = random_utterance(rng, 4, 2, dims);
        worst = std::max(worst, model_grad_error(model, utt, LossWeights{}, 1e-5, nullptr, fault));
        const auto vocab = random_vocab(rng, utt.target, dims.vocab, 1);
        worst = std::max(worst, model_grad_error(model, utt, LossWeights{}, 1e-5, &vocab, fault));
    }
    return bound_check("grad-model", worst, 1e-3, "full and sampled, with and without self-cond");
}

CheckResult sampled_equals_full(SeededRng &rng) {
    double worst = 0.0;
    std::size_t violations = 0;
    for (int i = 0; i < 100; ++i) {
        const auto inst = random_transducer_instance(rng, 5, 4, 8);
        const std::size_t V = inst.lattice.labels();
        const auto positive = build_positive_set(inst.target);
        const double full = transducer_loss(inst.lattice, inst.target).loss;
        if (positive.size() == V) {
            const auto same = restrict_lattice(inst.lattice, positive);
            worst = std::max(worst, relative(transducer_loss(same, inst.target).loss, full));
            continue;
        }

        const auto dist = make_uniform_distribution(V, positive);
        const auto everything =
            sample_vocab(positive, dist, V, rng, SamplingStrategy::example_wise);
        const auto same = restrict_lattice(inst.lattice, everything.label_map());
        worst = std::max(worst, relative(transducer_loss(same, inst.target).loss, full));

        if (positive.size() < V) {
            const auto total = static_cast<std::size_t>(rng.uniform_int(
                static_cast<std::int64_t>(positive.size()), static_cast<std::int64_t>(V) - 1));
            const auto subset = sample_vocab(positive, dist, total, rng, SamplingStrategy::example_wise);
            const auto smaller = restrict_lattice(inst.lattice, subset.label_map());
            if (transducer_loss(smaller, inst.target).loss > full) {
                ++violations;
            }
        }
    }
    auto c = bound_check("sampled-equals-full", worst, 1e-12, "100 instances");
    if (violations > 0) {
        c.passed = false;
        c.detail = std::to_string(violations) + " strict subsets exceeded the full loss";
    }
    return c;
}

CheckResult sampler_properties(SeededRng &rng) {
    std::size_t violations = 0;
    const std::size_t V = 20;
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<TargetSeq> targets(4);
        for (auto &t : targets) {
            t.labels = random_labels(rng, static_cast<std::size_t>(rng.uniform_int(0, 4)), V);
        }
        const auto batched_pos = build_positive_set(std::span<const TargetSeq>(targets));
        std::vector<SamplingDistribution> dists;
        std::vector<std::uint64_t> streams;
        for (std::size_t i = 0; i < targets.size(); ++i) {
            const auto pos = build_positive_set(targets[i]);
            if (pos.empty() || pos[0] != 0) {
                ++violations;
            }
            for (int y : pos) {
                if (!std::binary_search(batched_pos.begin() + 1, batched_pos.end(), y) && y != 0) {
                    ++violations;
                }
            }
            Matrix probs(3, V);
            for (auto &p : probs.data) {
                p = rng.uniform() < 0.3 ? 0.0 : rng.uniform();
            }
            dists.push_back(make_ctc_distribution(CtcPosterior{probs}, pos));
            streams.push_back(example_stream_id(static_cast<std::uint64_t>(trial), i));
        }
        const std::uint64_t seed = rng.next_u64();
        const auto a = sample_example_wise(targets, dists, 12, seed, streams);
        const auto b = sample_example_wise(targets, dists, 12, seed, streams);
        for (std::size_t i = 0; i < a.size(); ++i) {
            if (a[i].label_map() != b[i].label_map()) {
                ++violations;
            }
            std::set<int> pos(a[i].positive().begin(), a[i].positive().end());
            if (pos.count(0) == 0) {
                ++violations;
            }
            for (int y : a[i].negative()) {
                if (pos.count(y) != 0 || dists[i].weights[static_cast<std::size_t>(y)] == 0.0) {
                    ++violations;
                }
            }
        }
    }
    return bound_check("sampler-properties", static_cast<double>(violations), 0.0,
                       "blank positive, disjoint, zero weights excluded, subset, seeded");
}

struct DecodeTrial {
    ToyModel model;
    EncoderOutput enc;
};

DecodeTrial random_decode_trial(SeededRng &rng) {
    const ModelDims dims{3, 4, static_cast<std::size_t>(rng.uniform_int(2, 8))};
    auto model = ToyModel::initialize(dims, rng.uniform() < 0.5, rng.next_u64());
    // Larger weights than the default init give peaky, varied decisions.
    for (auto &m : model.params.all()) {
        for (auto &w : m.data) {
            w *= 3.0;
        }
    }
    Matrix features(static_cast<std::size_t>(rng.uniform_int(1, 6)), dims.input_dim);
    for (auto &x : features.data) {
        x = rng.normal();
    }
    auto enc = encode(model, features);
    return {std::move(model), std::move(enc)};
}

std::vector<CheckResult> decoding_checks(SeededRng &rng) {
    std::size_t all_allowed = 0;
    std::size_t beam_one = 0;
    std::size_t disallowed = 0;
    const int trials = 1000;
    for (int i = 0; i < trials; ++i) {
        const auto trial = random_decode_trial(rng);
        const auto V = trial.model.dims.vocab;
        const auto post = ctc_posterior(trial.enc.ctc_logits);
        const auto free = greedy_decode(trial.model, trial.enc);
        const auto full = build_ctc_constraint(post, V - 1);
        if (greedy_decode(trial.model, trial.enc, &full).labels != free.labels) {
            ++all_allowed;
        }
        if (beam_search(trial.model, trial.enc, 1).labels != free.labels) {
            ++beam_one;
        }
        const auto k = static_cast<std::size_t>(rng.uniform_int(1, static_cast<std::int64_t>(V) - 1));
        const auto c = build_ctc_constraint(post, k);
        for (const auto &hyp : {greedy_decode(trial.model, trial.enc, &c),
                                beam_search(trial.model, trial.enc, 3, &c)}) {
            for (int y : hyp.labels) {
                if (!c.allows(y)) {
                    ++disallowed;
                }
            }
        }
    }
    const std::string detail = std::to_string(trials) + " random models";
    return {bound_check("constraint-all-labels", static_cast<double>(all_allowed), 0.0, detail),
            bound_check("beam1-equals-greedy", static_cast<double>(beam_one), 0.0, detail),
            bound_check("constraint-respected", static_cast<double>(disallowed), 0.0, detail)};
}

CheckResult logit_memory(SeededRng &rng) {
    const ModelDims dims{3, 4, 12};
    const std::size_t B = 3;
    const std::size_t T = 5;
    const std::size_t U = 2;
    std::vector<Utterance> utts;
    for (std::size_t i = 0; i < B; ++i) {
        utts.push_back(random_utterance(rng, T, U, dims));
    }
    std::vector<const Utterance *> batch;
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < B; ++i) {
        batch.push_back(&utts[i]);
        idx.push_back(i);
    }
    double worst = 0.0;
    for (bool sampled : {false, true}) {
        TrainConfig cfg;
        cfg.hidden = dims.hidden;
        if (sampled) {
            cfg.softmax = SoftmaxMode::example_wise;
            cfg.total_size = 6;
        }
        Trainer trainer(cfg, ToyModel::initialize(dims, false, 3));
        const auto step = trainer.compute_step(batch, idx, 0);
        MemConfig mem;
        mem.frames = T;
        mem.target_length = U;
        mem.vocab_size = dims.vocab;
        if (sampled) {
            mem.sampled_size = cfg.total_size;
        }
        mem.batch = B;
        mem.hidden = dims.hidden;
        mem.input_dim = dims.input_dim;
        mem.element_bytes = sizeof(double);
        const double formula = static_cast<double>(logit_tensor_bytes(mem));
        worst = std::max(worst, std::abs(static_cast<double>(step.peak_logit_bytes) - formula) / formula);
    }
    return bound_check("logit-memory", worst, 0.01, "instrumented peak vs. formula, full and sampled");
}

} // namespace

TransducerInstance random_transducer_instance(SeededRng &rng, std::size_t max_frames,
                                              std::size_t max_target, std::size_t max_vocab,
                                              double scale) {
    const auto T = static_cast<std::size_t>(rng.uniform_int(1, static_cast<std::int64_t>(max_frames)));
    const auto U = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(max_target)));
    const auto V = static_cast<std::size_t>(rng.uniform_int(2, static_cast<std::int64_t>(max_vocab)));
    TransducerInstance inst{LogitLattice(T, U, V), TargetSeq{random_labels(rng, U, V)}};
    for (auto &s : inst.lattice.data()) {
        s = scale * rng.normal();
    }
    return inst;
}

LogitLattice restrict_lattice(const LogitLattice &full, std::vector<int> label_map) {
    if (full.label_map()) {
        throw std::invalid_argument("restrict_lattice: source lattice is already compact");
    }
    const std::size_t L = label_map.size();
    LogitLattice out(full.frames(), full.target_length(), L, label_map);
    for (std::size_t t = 0; t < full.frames(); ++t) {
        for (std::size_t u = 0; u <= full.target_length(); ++u) {
            const auto src = full.at(t, u);
            auto dst = out.at(t, u);
            for (std::size_t i = 0; i < L; ++i) {
                dst[i] = src[static_cast<std::size_t>(label_map[i])];
            }
        }
    }
    return out;
}

CtcInstance random_ctc_instance(SeededRng &rng, std::size_t max_frames, std::size_t max_vocab,
                                double max_strings, double scale) {
    while (true) {
        const auto T = static_cast<std::size_t>(rng.uniform_int(1, static_cast<std::int64_t>(max_frames)));
        const auto V = static_cast<std::size_t>(rng.uniform_int(2, static_cast<std::int64_t>(max_vocab)));
        if (std::pow(static_cast<double>(V), static_cast<double>(T)) > max_strings) {
            continue;
        }
        const auto U = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(T)));
        TargetSeq target{random_labels(rng, U, V)};
        if (!ctc_feasible(T, target)) {
            continue;
        }
        CtcInstance inst{Matrix(T, V), std::move(target)};
        for (auto &x : inst.logits.data) {
            x = scale * rng.normal();
        }
        return inst;
    }
}

double transducer_grad_error(const LogitLattice &lattice, const TargetSeq &target, double epsilon,
                             Fault fault) {
    const auto analytic = transducer_loss(lattice, target);
    std::vector<double> a(analytic.grad.begin(), analytic.grad.end());
    if (fault == Fault::grad_sign) {
        for (auto &g : a) {
            g = -g;
        }
    }
    LogitLattice probe = lattice;
    std::vector<double> numeric(a.size());
    for (std::size_t i = 0; i < numeric.size(); ++i) {
        const double orig = probe.data()[i];
        probe.data()[i] = orig + epsilon;
        const double up = transducer_loss(probe, target).loss;
        probe.data()[i] = orig - epsilon;
        const double down = transducer_loss(probe, target).loss;
        probe.data()[i] = orig;
        numeric[i] = (up - down) / (2.0 * epsilon);
    }
    return max_relative_error(a, numeric);
}

double ctc_grad_error(const Matrix &logits, const TargetSeq &target, double epsilon, Fault fault) {
    auto a = ctc_loss(logits, target).grad.data;
    if (fault == Fault::grad_sign) {
        for (auto &g : a) {
            g = -g;
        }
    }
    Matrix probe = logits;
    std::vector<double> numeric(a.size());
    for (std::size_t i = 0; i < numeric.size(); ++i) {
        const double orig = probe.data[i];
        probe.data[i] = orig + epsilon;
        const double up = ctc_loss(probe, target).loss;
        probe.data[i] = orig - epsilon;
        const double down = ctc_loss(probe, target).loss;
        probe.data[i] = orig;
        numeric[i] = (up - down) / (2.0 * epsilon);
    }
    return max_relative_error(a, numeric);
}

double model_grad_error(const ToyModel &model, const Utterance &utt, const LossWeights &weights,
                        double epsilon, const SampledVocab *vocab, Fault fault) {
    ParamSet grads(model.dims);
    grads.zero();
    example_objective(model, utt, weights, vocab, &grads);
    std::vector<double> analytic;
    std::vector<double> numeric;
    ToyModel probe = model;
    for (std::size_t p = 0; p < kParamCount; ++p) {
        auto &w = probe.params.all()[p].data;
        const auto &g = grads.all()[p].data;
        for (std::size_t j = 0; j < w.size(); ++j) {
            const double orig = w[j];
            w[j] = orig + epsilon;
            const double up = example_objective(probe, utt, weights, vocab);
            w[j] = orig - epsilon;
            const double down = example_objective(probe, utt, weights, vocab);
            w[j] = orig;
            numeric.push_back((up - down) / (2.0 * epsilon));
            analytic.push_back(fault == Fault::grad_sign ? -g[j] : g[j]);
        }
    }
    return max_relative_error(analytic, numeric);
}

std::vector<CheckResult> run_selftest(Fault fault) {
    SeededRng rng(20240601, 0);
    std::vector<CheckResult> checks;
    checks.push_back(transducer_oracle(rng));
    checks.push_back(ctc_oracle(rng));
    checks.push_back(grad_transducer(rng, false, fault));
    checks.push_back(grad_transducer(rng, true, fault));
    checks.push_back(grad_ctc(rng, fault));
    checks.push_back(grad_model(rng, fault));
    checks.push_back(sampled_equals_full(rng));
    checks.push_back(sampler_properties(rng));
    for (auto &c : decoding_checks(rng)) {
        checks.push_back(std::move(c));
    }
    checks.push_back(logit_memory(rng));
    return checks;
}

void print_selftest(std::ostream &os, const std::vector<CheckResult> &checks) {
    char line[256];
    std::snprintf(line, sizeof line, "%-26s %-6s %12s %12s  %s\n", "check", "result", "value",
                  "tolerance", "detail");
    os << line;
    std::size_t passed = 0;
    for (const auto &c : checks) {
        std::snprintf(line, sizeof line, "%-26s %-6s %12.3e %12.3e  %s\n", c.name.c_str(),
                      c.passed ? "PASS" : "FAIL", c.value, c.tolerance, c.detail.c_str());
        os << line;
        passed += c.passed ? 1 : 0;
    }
    os << passed << "/" << checks.size() << " checks passed\n";
}

bool all_passed(const std::vector<CheckResult> &checks) {
    return std::all_of(checks.begin(), checks.end(), [](const CheckResult &c) { return c.passed; });
}

} // namespace tkit

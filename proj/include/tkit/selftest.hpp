#pragma once

#include <cstddef>
#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "tkit/ctc.hpp"
#include "tkit/model.hpp"
#include "tkit/numerics.hpp"
#include "tkit/rnnt_loss.hpp"
#include "tkit/sampler.hpp"
#include "tkit/trainer.hpp"

namespace tkit {

// ─── Random instances ───────────────────────────────────────────────────────

struct TransducerInstance {
    LogitLattice lattice; // full vocabulary
    TargetSeq target;
};

/// T in [1, max_frames], U in [0, max_target], |V| in [2, max_vocab], logits
/// drawn N(0, scale^2).
TransducerInstance random_transducer_instance(SeededRng &rng, std::size_t max_frames,
                                              std::size_t max_target, std::size_t max_vocab,
                                              double scale = 2.0);

/// Copy of the full-vocabulary lattice onto the compact axis `label_map`.
LogitLattice restrict_lattice(const LogitLattice &full, std::vector<int> label_map);

struct CtcInstance {
    Matrix logits;
    TargetSeq target;
};

/// Feasible CTC instance with |V|^T <= max_strings.
CtcInstance random_ctc_instance(SeededRng &rng, std::size_t max_frames, std::size_t max_vocab,
                                double max_strings, double scale = 2.0);

// ─── Gradient checks ────────────────────────────────────────────────────────

enum class Fault { none, grad_sign };

/// Max relative error between the analytic gradient (negated under
/// Fault::grad_sign) and central finite differences.
double transducer_grad_error(const LogitLattice &lattice, const TargetSeq &target, double epsilon,
                             Fault fault = Fault::none);
double ctc_grad_error(const Matrix &logits, const TargetSeq &target, double epsilon,
                      Fault fault = Fault::none);
/// End-to-end over every model parameter of example_objective.
double model_grad_error(const ToyModel &model, const Utterance &utt, const LossWeights &weights,
                        double epsilon, const SampledVocab *vocab = nullptr,
                        Fault fault = Fault::none);

// ─── Self-test ──────────────────────────────────────────────────────────────

struct CheckResult {
    std::string name;
    bool passed = false;
    double value = 0.0;     // measured statistic
    double tolerance = 0.0; // pass bound for `value`
    std::string detail;
};

std::vector<CheckResult> run_selftest(Fault fault = Fault::none);

/// Fixed-width table, one row per check, then a summary line.
void print_selftest(std::ostream &os, const std::vector<CheckResult> &checks);

bool all_passed(const std::vector<CheckResult> &checks);

} // namespace tkit

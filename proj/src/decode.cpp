#include "tkit/decode.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

#include "tkit/numerics.hpp"

namespace tkit {

namespace {

constexpr int kBlank = 0;

// Labels the decoder may emit besides blank, ascending.
std::vector<int> emittable_labels(const ToyModel &model, const DecodeConstraint *constraint) {
    std::vector<int> out;
    if (constraint) {
        for (int id : constraint->allowed) {
            if (id != kBlank) {
                out.push_back(id);
            }
        }
        return out;
    }
    out.resize(model.dims.vocab - 1);
    std::iota(out.begin(), out.end(), 1);
    return out;
}

std::vector<double> start_state(const ToyModel &model) {
    const auto &s = model.params[Param::pred_start].data;
    return {s.begin(), s.end()};
}

} // namespace

bool DecodeConstraint::allows(int id) const {
    return std::binary_search(allowed.begin(), allowed.end(), id);
}

JointScorer::JointScorer(const ToyModel &model, const EncoderOutput &enc)
    : model_(model), enc_proj_(enc.frames(), model.dims.hidden) {
    const auto &w = model.params[Param::joint_enc];
    const auto H = model.dims.hidden;
    for (std::size_t t = 0; t < enc.frames(); ++t) {
        for (std::size_t r = 0; r < H; ++r) {
            double acc = 0.0;
            for (std::size_t c = 0; c < H; ++c) {
                acc += w(r, c) * enc.h_enc(t, c);
            }
            enc_proj_(t, r) = acc;
        }
    }
}

std::vector<double> JointScorer::log_probs(std::size_t t, std::span<const double> pred_state) const {
    const auto &P = model_.params;
    const auto H = model_.dims.hidden, V = model_.dims.vocab;
    const auto &wp = P[Param::joint_pred];
    std::vector<double> a(H);
    for (std::size_t r = 0; r < H; ++r) {
        double acc = P[Param::joint_bias].data[r];
        for (std::size_t c = 0; c < H; ++c) {
            acc += wp(r, c) * pred_state[c];
        }
        a[r] = std::tanh(enc_proj_(t, r) + acc);
    }
    std::vector<double> logits(V);
    const auto &out = P[Param::joint_out];
    for (std::size_t v = 0; v < V; ++v) {
        double acc = 0.0;
        for (std::size_t h = 0; h < H; ++h) {
            acc += out(v, h) * a[h];
        }
        logits[v] = acc;
    }
    return log_softmax(logits);
}

DecodeConstraint build_ctc_constraint(const CtcPosterior &posterior, std::size_t k, int blank_id) {
    const std::size_t V = posterior.vocab_size();
    if (k < 1 || k + 1 > V) {
        throw std::invalid_argument("build_ctc_constraint: k=" + std::to_string(k) +
                                    " outside [1, |V|-1]");
    }
    if (posterior.frames() == 0) {
        throw std::invalid_argument("build_ctc_constraint: empty posterior");
    }
    std::vector<double> mean(V, 0.0);
    for (std::size_t t = 0; t < posterior.frames(); ++t) {
        for (std::size_t v = 0; v < V; ++v) {
            mean[v] += posterior.probs(t, v);
        }
    }
    std::vector<int> ids;
    for (std::size_t v = 0; v < V; ++v) {
        if (static_cast<int>(v) != blank_id) {
            ids.push_back(static_cast<int>(v));
        }
    }
    std::stable_sort(ids.begin(), ids.end(), [&](int a, int b) {
        return mean[static_cast<std::size_t>(a)] > mean[static_cast<std::size_t>(b)];
    });
    DecodeConstraint c;
    c.k = k;
    c.allowed.assign(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(k));
    c.allowed.push_back(blank_id);
    std::sort(c.allowed.begin(), c.allowed.end());
    return c;
}

// ─── Greedy ─────────────────────────────────────────────────────────────────

Hypothesis greedy_decode(const ToyModel &model, const EncoderOutput &enc,
                         const DecodeConstraint *constraint) {
    const JointScorer scorer(model, enc);
    const auto labels = emittable_labels(model, constraint);
    Hypothesis hyp;
    hyp.pred_state = start_state(model);
    for (std::size_t t = 0; t < scorer.frames(); ++t) {
        for (std::size_t emitted = 0;; ++emitted) {
            const auto lp = scorer.log_probs(t, hyp.pred_state);
            int best = kBlank;
            if (emitted < kMaxEmissionsPerFrame) {
                for (int v : labels) {
                    if (lp[static_cast<std::size_t>(v)] > lp[static_cast<std::size_t>(best)]) {
                        best = v;
                    }
                }
            }
            hyp.score += lp[static_cast<std::size_t>(best)];
            if (best == kBlank) {
                break;
            }
            hyp.labels.push_back(best);
            hyp.pred_state = predict_step(model, hyp.pred_state, best);
        }
    }
    return hyp;
}

std::vector<int> greedy_decode(const ToyModel &model, const Matrix &features,
                               const DecodeConstraint *constraint) {
    return greedy_decode(model, encode(model, features), constraint).labels;
}

// ─── Beam search ────────────────────────────────────────────────────────────

namespace {

struct Partial {
    std::vector<int> labels;
    double score = 0.0;
    std::vector<double> state;
    int pending = -1; // label whose prediction step has not been applied yet
    std::size_t t = 0;
    std::size_t emitted = 0;
};

bool better(const Partial &a, const Partial &b) {
    if (a.score != b.score) {
        return a.score > b.score;
    }
    if (a.labels != b.labels) {
        return a.labels < b.labels;
    }
    if (a.t != b.t) {
        return a.t < b.t;
    }
    return a.emitted < b.emitted;
}

} // namespace

Hypothesis beam_search(const ToyModel &model, const EncoderOutput &enc, std::size_t beam,
                       const DecodeConstraint *constraint) {
    if (beam < 1) {
        throw std::invalid_argument("beam_search: beam must be at least 1");
    }
    Hypothesis best = greedy_decode(model, enc, constraint);
    const JointScorer scorer(model, enc);
    const std::size_t T = scorer.frames();
    const auto labels = emittable_labels(model, constraint);

    std::vector<Partial> pool(1);
    pool[0].state = start_state(model);
    while (!pool.empty()) {
        std::vector<Partial> next;
        for (auto &hyp : pool) {
            if (hyp.pending >= 0) {
                hyp.state = predict_step(model, hyp.state, hyp.pending);
                hyp.pending = -1;
            }
            const auto lp = scorer.log_probs(hyp.t, hyp.state);

            Partial blank = hyp;
            blank.score += lp[kBlank];
            blank.t += 1;
            blank.emitted = 0;
            if (blank.score > best.score) {
                next.push_back(std::move(blank));
            }
            if (hyp.emitted >= kMaxEmissionsPerFrame) {
                continue;
            }
            for (int v : labels) {
                const double score = hyp.score + lp[static_cast<std::size_t>(v)];
                if (score <= best.score) {
                    continue;
                }
                Partial ext;
                ext.labels = hyp.labels;
                ext.labels.push_back(v);
                ext.score = score;
                ext.state = hyp.state;
                ext.pending = v;
                ext.t = hyp.t;
                ext.emitted = hyp.emitted + 1;
                next.push_back(std::move(ext));
            }
        }
        // Completed paths compete for beam slots with the open ones.
        std::sort(next.begin(), next.end(), better);
        if (next.size() > beam) {
            next.resize(beam);
        }
        pool.clear();
        for (auto &p : next) {
            if (p.t < T) {
                pool.push_back(std::move(p));
            } else if (p.score > best.score) {
                best.labels = std::move(p.labels);
                best.score = p.score;
                best.pred_state = std::move(p.state);
            }
        }
        std::erase_if(pool, [&](const Partial &p) { return p.score <= best.score; });
    }
    return best;
}

Hypothesis beam_search(const ToyModel &model, const Matrix &features, std::size_t beam,
                       const DecodeConstraint *constraint) {
    return beam_search(model, encode(model, features), beam, constraint);
}

} // namespace tkit

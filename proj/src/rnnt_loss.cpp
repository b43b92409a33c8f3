#include "tkit/rnnt_loss.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>

#include "tkit/numerics.hpp"

namespace tkit {

namespace {

struct Columns {
    std::size_t blank = 0;
    std::vector<std::size_t> labels;
};

// Maps the blank and every target label onto the lattice label axis.
Columns resolve_columns(const LogitLattice &lattice, const TargetSeq &target) {
    if (lattice.frames() == 0) {
        throw std::invalid_argument("transducer_loss: T = 0 admits no alignment");
    }
    if (lattice.target_length() != target.size()) {
        throw std::invalid_argument("transducer_loss: lattice U-axis " +
                                    std::to_string(lattice.target_length() + 1) +
                                    " does not match target length " +
                                    std::to_string(target.size()) + " + 1");
    }
    Columns cols;
    cols.labels.reserve(target.size());
    const auto &map = lattice.label_map();
    if (!map) {
        const auto labels = lattice.labels();
        if (target.blank_id < 0 || static_cast<std::size_t>(target.blank_id) >= labels) {
            throw std::invalid_argument("transducer_loss: blank id outside label axis");
        }
        cols.blank = static_cast<std::size_t>(target.blank_id);
        for (int y : target.labels) {
            if (y == target.blank_id) {
                throw std::invalid_argument("transducer_loss: target contains the blank id");
            }
            if (y < 0 || static_cast<std::size_t>(y) >= labels) {
                throw std::invalid_argument("transducer_loss: target label " + std::to_string(y) +
                                            " outside label axis");
            }
            cols.labels.push_back(static_cast<std::size_t>(y));
        }
        return cols;
    }
    if ((*map)[0] != target.blank_id) {
        throw std::invalid_argument("transducer_loss: label_map must place blank at index 0");
    }
    for (int y : target.labels) {
        if (y == target.blank_id) {
            throw std::invalid_argument("transducer_loss: target contains the blank id");
        }
        auto it = std::find(map->begin(), map->end(), y);
        if (it == map->end()) {
            throw std::invalid_argument("transducer_loss: target label " + std::to_string(y) +
                                        " not in label_map");
        }
        cols.labels.push_back(static_cast<std::size_t>(it - map->begin()));
    }
    return cols;
}

} // namespace

TransducerLossResult transducer_loss(const LogitLattice &lattice, const TargetSeq &target) {
    const Columns cols = resolve_columns(lattice, target);
    const std::size_t T = lattice.frames();
    const std::size_t U = target.size();
    const std::size_t W = U + 1;
    const std::size_t L = lattice.labels();
    auto node = [W](std::size_t t, std::size_t u) { return t * W + u; };

    std::vector<double> norm(T * W);
    std::vector<double> lp_blank(T * W);
    std::vector<double> lp_emit(T * W, kLogZero);
    for (std::size_t t = 0; t < T; ++t) {
        for (std::size_t u = 0; u <= U; ++u) {
            const auto row = lattice.at(t, u);
            for (double s : row) {
                if (!std::isfinite(s)) {
                    throw std::invalid_argument("transducer_loss: non-finite logit");
                }
            }
            const double z = log_sum_exp(row);
            norm[node(t, u)] = z;
            lp_blank[node(t, u)] = row[cols.blank] - z;
            if (u < U) {
                lp_emit[node(t, u)] = row[cols.labels[u]] - z;
            }
        }
    }

    // alpha(t,u): log-prob of reaching node (t,u), emissions at (t,u) excluded.
    std::vector<double> alpha(T * W, kLogZero);
    alpha[0] = 0.0;
    for (std::size_t t = 0; t < T; ++t) {
        for (std::size_t u = 0; u <= U; ++u) {
            if (t == 0 && u == 0) {
                continue;
            }
            double a = kLogZero;
            if (t > 0) {
                a = alpha[node(t - 1, u)] + lp_blank[node(t - 1, u)];
            }
            if (u > 0) {
                a = log_add(a, alpha[node(t, u - 1)] + lp_emit[node(t, u - 1)]);
            }
            alpha[node(t, u)] = a;
        }
    }

    // beta(t,u): log-prob of finishing from node (t,u), including the final blank.
    std::vector<double> beta(T * W, kLogZero);
    for (std::size_t t = T; t-- > 0;) {
        for (std::size_t u = W; u-- > 0;) {
            double b = kLogZero;
            if (t == T - 1 && u == U) {
                b = lp_blank[node(t, u)];
            } else {
                if (t + 1 < T) {
                    b = beta[node(t + 1, u)] + lp_blank[node(t, u)];
                }
                if (u < U) {
                    b = log_add(b, beta[node(t, u + 1)] + lp_emit[node(t, u)]);
                }
            }
            beta[node(t, u)] = b;
        }
    }

    const double log_likelihood = beta[0];
    TransducerLossResult result;
    result.loss = -log_likelihood;
    result.grad.assign(lattice.element_count(), 0.0);

    for (std::size_t t = 0; t < T; ++t) {
        for (std::size_t u = 0; u <= U; ++u) {
            const std::size_t n = node(t, u);
            const double occupancy = std::exp(alpha[n] + beta[n] - log_likelihood);
            const double next_blank = (t + 1 < T) ? beta[node(t + 1, u)] : (u == U ? 0.0 : kLogZero);
            const double blank_flow =
                next_blank <= kLogZero
                    ? 0.0
                    : std::exp(alpha[n] + lp_blank[n] + next_blank - log_likelihood);
            const double emit_flow =
                u < U ? std::exp(alpha[n] + lp_emit[n] + beta[node(t, u + 1)] - log_likelihood)
                      : 0.0;

            const auto row = lattice.at(t, u);
            double *g = result.grad.data() + lattice.offset(t, u);
            for (std::size_t v = 0; v < L; ++v) {
                g[v] = occupancy * std::exp(row[v] - norm[n]);
            }
            g[cols.blank] -= blank_flow;
            if (u < U) {
                g[cols.labels[u]] -= emit_flow;
            }
        }
    }
    return result;
}

// ─── Brute-force oracle ─────────────────────────────────────────────────────

namespace {

constexpr std::size_t kMaxEnumeration = 16;

// Walks every alignment: U label moves interleaved with T-1 blank moves,
// followed by the terminating blank at (T-1, U).
void walk_alignments(std::size_t T, std::size_t U,
                     const std::function<double(std::size_t, std::size_t, bool)> &step_prob,
                     std::size_t t, std::size_t u, double prob, double &total,
                     std::size_t &paths) {
    if (t == T - 1 && u == U) {
        total += prob * step_prob(t, u, true);
        ++paths;
        return;
    }
    if (u < U) {
        walk_alignments(T, U, step_prob, t, u + 1, prob * step_prob(t, u, false), total, paths);
    }
    if (t + 1 < T) {
        walk_alignments(T, U, step_prob, t + 1, u, prob * step_prob(t, u, true), total, paths);
    }
}

void check_enumerable(std::size_t T, std::size_t U) {
    if (T == 0) {
        throw std::invalid_argument("transducer_loss_bruteforce: T = 0 admits no alignment");
    }
    if (T + U > kMaxEnumeration) {
        throw std::invalid_argument("transducer_loss_bruteforce: T + U = " +
                                    std::to_string(T + U) + " exceeds enumeration limit " +
                                    std::to_string(kMaxEnumeration));
    }
}

} // namespace

double transducer_loss_bruteforce(const LogitLattice &lattice, const TargetSeq &target) {
    check_enumerable(lattice.frames(), target.size());
    const Columns cols = resolve_columns(lattice, target);

    auto prob = [&](std::size_t t, std::size_t u, bool blank) {
        const auto row = lattice.at(t, u);
        double denom = 0.0;
        for (double s : row) {
            denom += std::exp(s);
        }
        const std::size_t col = blank ? cols.blank : cols.labels[u];
        return std::exp(row[col]) / denom;
    };
    double total = 0.0;
    std::size_t paths = 0;
    walk_alignments(lattice.frames(), target.size(), prob, 0, 0, 1.0, total, paths);
    return -std::log(total);
}

std::size_t enumerate_alignment_count(std::size_t frames, std::size_t target_length) {
    check_enumerable(frames, target_length);
    double total = 0.0;
    std::size_t paths = 0;
    walk_alignments(
        frames, target_length, [](std::size_t, std::size_t, bool) { return 1.0; }, 0, 0, 1.0,
        total, paths);
    return paths;
}

double grad_check(const LogitLattice &lattice, const TargetSeq &target, double epsilon) {
    if (!(epsilon > 0.0)) {
        throw std::invalid_argument("grad_check: epsilon must be positive");
    }
    const auto analytic = transducer_loss(lattice, target);
    LogitLattice probe = lattice;
    std::vector<double> numeric(lattice.element_count());
    for (std::size_t i = 0; i < numeric.size(); ++i) {
        const double orig = probe.data()[i];
        probe.data()[i] = orig + epsilon;
        const double up = transducer_loss(probe, target).loss;
        probe.data()[i] = orig - epsilon;
        const double down = transducer_loss(probe, target).loss;
        probe.data()[i] = orig;
        numeric[i] = (up - down) / (2.0 * epsilon);
    }
    return max_relative_error({analytic.grad.data(), analytic.grad.size()}, numeric);
}

} // namespace tkit

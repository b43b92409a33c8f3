#include "tkit/ctc.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "tkit/numerics.hpp"

namespace tkit {

namespace {

void validate(const Matrix &logits, const TargetSeq &target) {
    if (logits.rows == 0) {
        throw std::invalid_argument("ctc_loss: T must be at least 1");
    }
    const auto V = logits.cols;
    if (target.blank_id < 0 || static_cast<std::size_t>(target.blank_id) >= V) {
        throw std::invalid_argument("ctc_loss: blank id outside vocabulary");
    }
    for (int y : target.labels) {
        if (y == target.blank_id) {
            throw std::invalid_argument("ctc_loss: target contains the blank id");
        }
        if (y < 0 || static_cast<std::size_t>(y) >= V) {
            throw std::invalid_argument("ctc_loss: target label " + std::to_string(y) +
                                        " outside vocabulary");
        }
    }
    for (double s : logits.data) {
        if (!std::isfinite(s)) {
            throw std::invalid_argument("ctc_loss: non-finite logit");
        }
    }
    if (!ctc_feasible(logits.rows, target)) {
        throw std::invalid_argument("ctc_loss: target of length " + std::to_string(target.size()) +
                                    " cannot be emitted in " + std::to_string(logits.rows) +
                                    " frames");
    }
}

} // namespace

bool ctc_feasible(std::size_t frames, const TargetSeq &target) {
    std::size_t required = target.size();
    for (std::size_t i = 1; i < target.size(); ++i) {
        if (target.labels[i] == target.labels[i - 1]) {
            ++required;
        }
    }
    return required <= frames;
}

CtcLossResult ctc_loss(const Matrix &logits, const TargetSeq &target) {
    validate(logits, target);
    const std::size_t T = logits.rows;
    const std::size_t V = logits.cols;

    // Extended sequence: blank, y1, blank, y2, ..., yU, blank.
    const std::size_t S = 2 * target.size() + 1;
    std::vector<int> ext(S, target.blank_id);
    for (std::size_t i = 0; i < target.size(); ++i) {
        ext[2 * i + 1] = target.labels[i];
    }
    auto can_skip = [&](std::size_t s) {
        return s >= 2 && ext[s] != target.blank_id && ext[s] != ext[s - 2];
    };

    Matrix logp(T, V);
    for (std::size_t t = 0; t < T; ++t) {
        const auto lp = log_softmax(logits.row(t));
        std::copy(lp.begin(), lp.end(), logp.row(t).begin());
    }

    // alpha and beta both include the emission at frame t.
    Matrix alpha(T, S, kLogZero);
    Matrix beta(T, S, kLogZero);
    alpha(0, 0) = logp(0, ext[0]);
    if (S > 1) {
        alpha(0, 1) = logp(0, ext[1]);
    }
    for (std::size_t t = 1; t < T; ++t) {
        for (std::size_t s = 0; s < S; ++s) {
            double a = alpha(t - 1, s);
            if (s >= 1) {
                a = log_add(a, alpha(t - 1, s - 1));
            }
            if (can_skip(s)) {
                a = log_add(a, alpha(t - 1, s - 2));
            }
            alpha(t, s) = a <= kLogZero ? kLogZero : a + logp(t, ext[s]);
        }
    }
    beta(T - 1, S - 1) = logp(T - 1, ext[S - 1]);
    if (S > 1) {
        beta(T - 1, S - 2) = logp(T - 1, ext[S - 2]);
    }
    for (std::size_t t = T - 1; t-- > 0;) {
        for (std::size_t s = 0; s < S; ++s) {
            double b = beta(t + 1, s);
            if (s + 1 < S) {
                b = log_add(b, beta(t + 1, s + 1));
            }
            if (s + 2 < S && can_skip(s + 2)) {
                b = log_add(b, beta(t + 1, s + 2));
            }
            beta(t, s) = b <= kLogZero ? kLogZero : b + logp(t, ext[s]);
        }
    }

    double log_likelihood = alpha(T - 1, S - 1);
    if (S > 1) {
        log_likelihood = log_add(log_likelihood, alpha(T - 1, S - 2));
    }

    CtcLossResult result;
    result.loss = -log_likelihood;
    result.grad = Matrix(T, V);
    std::vector<double> occupancy(V);
    for (std::size_t t = 0; t < T; ++t) {
        std::fill(occupancy.begin(), occupancy.end(), kLogZero);
        for (std::size_t s = 0; s < S; ++s) {
            const double ab = alpha(t, s) + beta(t, s) - logp(t, ext[s]);
            auto &slot = occupancy[static_cast<std::size_t>(ext[s])];
            slot = log_add(slot, ab);
        }
        for (std::size_t v = 0; v < V; ++v) {
            const double post = occupancy[v] <= kLogZero
                                    ? 0.0
                                    : std::exp(occupancy[v] - log_likelihood);
            result.grad(t, v) = std::exp(logp(t, v)) - post;
        }
    }
    return result;
}

double ctc_loss_bruteforce(const Matrix &logits, const TargetSeq &target) {
    validate(logits, target);
    const std::size_t T = logits.rows;
    const std::size_t V = logits.cols;
    double strings = 1.0;
    for (std::size_t t = 0; t < T; ++t) {
        strings *= static_cast<double>(V);
    }
    if (strings > 1e6) {
        throw std::invalid_argument("ctc_loss_bruteforce: |V|^T exceeds 10^6");
    }

    Matrix probs(T, V);
    for (std::size_t t = 0; t < T; ++t) {
        double denom = 0.0;
        for (std::size_t v = 0; v < V; ++v) {
            denom += std::exp(logits(t, v));
        }
        for (std::size_t v = 0; v < V; ++v) {
            probs(t, v) = std::exp(logits(t, v)) / denom;
        }
    }

    std::vector<std::size_t> digits(T, 0);
    std::vector<int> collapsed;
    double total = 0.0;
    for (;;) {
        collapsed.clear();
        double p = 1.0;
        int prev = -1;
        for (std::size_t t = 0; t < T; ++t) {
            const int v = static_cast<int>(digits[t]);
            p *= probs(t, digits[t]);
            if (v != prev && v != target.blank_id) {
                collapsed.push_back(v);
            }
            prev = v;
        }
        if (collapsed == target.labels) {
            total += p;
        }
        std::size_t i = 0;
        while (i < T && ++digits[i] == V) {
            digits[i++] = 0;
        }
        if (i == T) {
            break;
        }
    }
    return -std::log(total);
}

CtcPosterior ctc_posterior(const Matrix &logits) {
    CtcPosterior post{Matrix(logits.rows, logits.cols)};
    for (std::size_t t = 0; t < logits.rows; ++t) {
        const auto p = softmax(logits.row(t));
        std::copy(p.begin(), p.end(), post.probs.row(t).begin());
    }
    return post;
}

double ctc_grad_check(const Matrix &logits, const TargetSeq &target, double epsilon) {
    if (!(epsilon > 0.0)) {
        throw std::invalid_argument("ctc_grad_check: epsilon must be positive");
    }
    const auto analytic = ctc_loss(logits, target);
    Matrix probe = logits;
    std::vector<double> numeric(logits.size());
    for (std::size_t i = 0; i < numeric.size(); ++i) {
        const double orig = probe.data[i];
        probe.data[i] = orig + epsilon;
        const double up = ctc_loss(probe, target).loss;
        probe.data[i] = orig - epsilon;
        const double down = ctc_loss(probe, target).loss;
        probe.data[i] = orig;
        numeric[i] = (up - down) / (2.0 * epsilon);
    }
    return max_relative_error(analytic.grad.data, numeric);
}

} // namespace tkit

#include "tkit/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <stdexcept>
#include <string>

namespace tkit {

double log_sum_exp(std::span<const double> values) {
    if (values.empty()) {
        throw std::invalid_argument("log_sum_exp: empty input");
    }
    const double max = *std::max_element(values.begin(), values.end());
    if (max <= kLogZero) {
        return max;
    }
    double sum = 0.0;
    for (double v : values) {
        sum += std::exp(v - max);
    }
    return max + std::log(sum);
}

double log_add(double a, double b) {
    if (a < b) {
        std::swap(a, b);
    }
    if (a <= kLogZero) {
        return a;
    }
    return a + std::log1p(std::exp(b - a));
}

std::vector<double> log_softmax(std::span<const double> logits) {
    if (logits.empty()) {
        throw std::invalid_argument("softmax: empty input");
    }
    for (double v : logits) {
        if (std::isnan(v)) {
            throw std::invalid_argument("softmax: NaN in input");
        }
    }
    const double norm = log_sum_exp(logits);
    std::vector<double> out(logits.size());
    for (std::size_t i = 0; i < logits.size(); ++i) {
        out[i] = logits[i] - norm;
    }
    return out;
}

std::vector<double> softmax(std::span<const double> logits) {
    if (logits.empty()) {
        throw std::invalid_argument("softmax: empty input");
    }
    for (double v : logits) {
        if (std::isnan(v)) {
            throw std::invalid_argument("softmax: NaN in input");
        }
    }
    const double max = *std::max_element(logits.begin(), logits.end());
    std::vector<double> out(logits.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        out[i] = std::exp(logits[i] - max);
        sum += out[i];
    }
    for (double &p : out) {
        p /= sum;
    }
    return out;
}

// ─── SeededRng ──────────────────────────────────────────────────────────────

namespace {

std::mt19937_64 make_engine(std::uint64_t seed, std::uint64_t stream) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream),
                      static_cast<std::uint32_t>(stream >> 32)};
    return std::mt19937_64(seq);
}

} // namespace

SeededRng::SeededRng(std::uint64_t seed, std::uint64_t stream)
    : seed_(seed), stream_(stream), engine_(make_engine(seed, stream)) {}

double SeededRng::uniform() {
    // 53 random mantissa bits, shifted by half an ulp to stay off 0.
    return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53;
}

double SeededRng::normal() {
    const double u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

double SeededRng::gumbel() { return -std::log(-std::log(uniform())); }

std::size_t SeededRng::uniform_index(std::size_t n) {
    if (n == 0) {
        throw std::invalid_argument("uniform_index: empty range");
    }
    const auto idx = static_cast<std::size_t>(uniform() * static_cast<double>(n));
    return std::min(idx, n - 1);
}

std::int64_t SeededRng::uniform_int(std::int64_t lo, std::int64_t hi) {
    if (hi < lo) {
        throw std::invalid_argument("uniform_int: hi < lo");
    }
    return lo + static_cast<std::int64_t>(uniform_index(static_cast<std::size_t>(hi - lo + 1)));
}

// ─── Sampling ───────────────────────────────────────────────────────────────

std::vector<std::size_t> sample_without_replacement(std::span<const double> weights,
                                                    std::size_t k, SeededRng &rng) {
    std::size_t support = 0;
    for (double w : weights) {
        if (!(w >= 0.0) || std::isinf(w)) {
            throw std::invalid_argument("sample_without_replacement: weights must be finite and "
                                        "non-negative");
        }
        if (w > 0.0) {
            ++support;
        }
    }
    if (k > support) {
        throw std::invalid_argument("sample_without_replacement: k=" + std::to_string(k) +
                                    " exceeds positive-weight support " +
                                    std::to_string(support));
    }

    struct Key {
        double value;
        std::size_t index;
    };
    std::vector<Key> keys;
    keys.reserve(support);
    // Noise is drawn for every index, zero weights included, so the stream
    // position after a call depends only on the weight vector length.
    for (std::size_t i = 0; i < weights.size(); ++i) {
        const double g = rng.gumbel();
        if (weights[i] > 0.0) {
            keys.push_back({std::log(weights[i]) + g, i});
        }
    }
    auto by_key = [](const Key &a, const Key &b) {
        return a.value != b.value ? a.value > b.value : a.index < b.index;
    };
    std::partial_sort(keys.begin(), keys.begin() + static_cast<std::ptrdiff_t>(k), keys.end(),
                      by_key);

    std::vector<std::size_t> out(k);
    for (std::size_t i = 0; i < k; ++i) {
        out[i] = keys[i].index;
    }
    std::sort(out.begin(), out.end());
    return out;
}

double max_relative_error(std::span<const double> a, std::span<const double> b, double floor) {
    if (a.size() != b.size()) {
        throw std::invalid_argument("max_relative_error: size mismatch");
    }
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double denom = std::max({std::abs(a[i]), std::abs(b[i]), floor});
        worst = std::max(worst, std::abs(a[i] - b[i]) / denom);
    }
    return worst;
}

} // namespace tkit

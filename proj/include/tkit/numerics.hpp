#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace tkit {

// Log-space zero. Any value at or below this sentinel is treated as a
// probability of exactly zero; log_sum_exp returns it unchanged when every
// input is zero, so the sentinel is absorbing through the lattice DP.
inline constexpr double kLogZero = -1.0e300;

/// Numerically stable log(sum(exp(values))). Throws on an empty span.
double log_sum_exp(std::span<const double> values);

/// Two-argument log-add, the hot path of every forward/backward recursion.
double log_add(double a, double b);

/// exp(logits - logsumexp(logits)). Throws on empty input or NaN.
std::vector<double> softmax(std::span<const double> logits);
std::vector<double> log_softmax(std::span<const double> logits);

/// Deterministic random stream keyed by (seed, stream id).
///
/// Draws are produced from raw 64-bit engine output rather than the standard
/// distribution classes, whose algorithms are implementation-defined, so a
/// given (seed, stream) yields the same sequence on every platform.
class SeededRng {
public:
    SeededRng(std::uint64_t seed, std::uint64_t stream = 0);

    std::uint64_t seed() const { return seed_; }
    std::uint64_t stream() const { return stream_; }

    std::uint64_t next_u64() { return engine_(); }
    /// Uniform on the open interval (0, 1).
    double uniform();
    /// Standard normal via Box-Muller.
    double normal();
    /// Standard Gumbel(0, 1).
    double gumbel();
    /// Uniform integer in [0, n).
    std::size_t uniform_index(std::size_t n);
    /// Uniform integer in [lo, hi].
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);

private:
    std::uint64_t seed_;
    std::uint64_t stream_;
    std::mt19937_64 engine_;
};

/// Draws k distinct indices with probability proportional to `weights`
/// (sequential sampling without replacement) using Gumbel-top-k: perturb
/// log-weights with i.i.d. Gumbel noise and keep the k largest keys.
/// Zero-weight indices are never returned. Result is sorted ascending.
std::vector<std::size_t> sample_without_replacement(std::span<const double> weights,
                                                    std::size_t k, SeededRng &rng);

/// |a - b| / max(|a|, |b|, floor), maximised over components.
double max_relative_error(std::span<const double> a, std::span<const double> b,
                          double floor = 1e-4);

} // namespace tkit

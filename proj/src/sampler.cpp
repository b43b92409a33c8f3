#include "tkit/sampler.hpp"

#include <algorithm>
#include <set>
#include <stdexcept>

namespace tkit {

std::string to_string(SamplingStrategy s) {
    return s == SamplingStrategy::batched ? "batched" : "example-wise";
}

std::string to_string(DistributionSource s) {
    switch (s) {
    case DistributionSource::uniform:
        return "uniform";
    case DistributionSource::joint_ctc:
        return "joint-ctc";
    case DistributionSource::intermediate_ctc:
        return "inter-ctc";
    case DistributionSource::self_conditioned_ctc:
        return "sc-ctc";
    }
    return "unknown";
}

// ─── SampledVocab ───────────────────────────────────────────────────────────

SampledVocab::SampledVocab(std::vector<int> positive, std::vector<int> negative,
                           SamplingStrategy strategy)
    : positive_(std::move(positive)), negative_(std::move(negative)), strategy_(strategy) {
    if (positive_.empty()) {
        throw std::invalid_argument("SampledVocab: positive set must contain the blank");
    }
    label_map_.reserve(positive_.size() + negative_.size());
    label_map_.insert(label_map_.end(), positive_.begin(), positive_.end());
    label_map_.insert(label_map_.end(), negative_.begin(), negative_.end());
    for (std::size_t i = 0; i < label_map_.size(); ++i) {
        if (!to_compact_.emplace(label_map_[i], i).second) {
            throw std::invalid_argument("SampledVocab: label " + std::to_string(label_map_[i]) +
                                        " appears twice");
        }
    }
}

std::optional<std::size_t> SampledVocab::to_compact(int id) const {
    auto it = to_compact_.find(id);
    if (it == to_compact_.end()) {
        return std::nullopt;
    }
    return it->second;
}

// ─── Positive sets ──────────────────────────────────────────────────────────

std::vector<int> build_positive_set(const TargetSeq &target) {
    return build_positive_set(std::span<const TargetSeq>(&target, 1));
}

std::vector<int> build_positive_set(std::span<const TargetSeq> targets) {
    const int blank = targets.empty() ? 0 : targets.front().blank_id;
    std::set<int> labels;
    for (const auto &t : targets) {
        if (t.blank_id != blank) {
            throw std::invalid_argument("build_positive_set: targets disagree on blank id");
        }
        labels.insert(t.labels.begin(), t.labels.end());
    }
    labels.erase(blank);
    std::vector<int> out{blank};
    out.insert(out.end(), labels.begin(), labels.end());
    return out;
}

// ─── Distributions ──────────────────────────────────────────────────────────

namespace {

std::vector<char> positive_mask(std::size_t vocab_size, std::span<const int> positive) {
    std::vector<char> mask(vocab_size, 0);
    for (int id : positive) {
        if (id < 0 || static_cast<std::size_t>(id) >= vocab_size) {
            throw std::invalid_argument("positive label " + std::to_string(id) +
                                        " outside vocabulary");
        }
        mask[static_cast<std::size_t>(id)] = 1;
    }
    return mask;
}

SamplingDistribution zero_and_normalise(std::vector<double> mass, std::span<const int> positive,
                                        DistributionSource source) {
    const auto mask = positive_mask(mass.size(), positive);
    double total = 0.0;
    for (std::size_t v = 0; v < mass.size(); ++v) {
        if (mask[v]) {
            mass[v] = 0.0;
        }
        total += mass[v];
    }
    if (!(total > 0.0)) {
        auto uniform = make_uniform_distribution(mass.size(), positive);
        uniform.source = source;
        return uniform;
    }
    for (double &w : mass) {
        w /= total;
    }
    return {std::move(mass), source};
}

} // namespace

SamplingDistribution make_uniform_distribution(std::size_t vocab_size,
                                               std::span<const int> positive) {
    const auto mask = positive_mask(vocab_size, positive);
    const auto free = static_cast<std::size_t>(std::count(mask.begin(), mask.end(), 0));
    if (free == 0) {
        throw std::invalid_argument("make_uniform_distribution: positive set covers the entire "
                                    "vocabulary");
    }
    SamplingDistribution dist{std::vector<double>(vocab_size, 0.0), DistributionSource::uniform};
    for (std::size_t v = 0; v < vocab_size; ++v) {
        if (!mask[v]) {
            dist.weights[v] = 1.0 / static_cast<double>(free);
        }
    }
    return dist;
}

SamplingDistribution make_ctc_distribution(const CtcPosterior &posterior,
                                           std::span<const int> positive,
                                           DistributionSource source) {
    return make_ctc_distribution(std::span<const CtcPosterior>(&posterior, 1), positive, source);
}

SamplingDistribution make_ctc_distribution(std::span<const CtcPosterior> posteriors,
                                           std::span<const int> positive,
                                           DistributionSource source) {
    if (posteriors.empty()) {
        throw std::invalid_argument("make_ctc_distribution: no posteriors");
    }
    const std::size_t V = posteriors.front().vocab_size();
    std::vector<double> mass(V, 0.0);
    for (const auto &post : posteriors) {
        if (post.vocab_size() != V || post.frames() == 0) {
            throw std::invalid_argument("make_ctc_distribution: inconsistent posterior shapes");
        }
        std::vector<double> frame_mean(V, 0.0);
        for (std::size_t t = 0; t < post.frames(); ++t) {
            for (std::size_t v = 0; v < V; ++v) {
                frame_mean[v] += post.probs(t, v);
            }
        }
        for (std::size_t v = 0; v < V; ++v) {
            mass[v] += frame_mean[v] / static_cast<double>(post.frames());
        }
    }
    for (double &m : mass) {
        m /= static_cast<double>(posteriors.size());
    }
    return zero_and_normalise(std::move(mass), positive, source);
}

// ─── Sampling ───────────────────────────────────────────────────────────────

SampledVocab sample_vocab(std::span<const int> positive, const SamplingDistribution &dist,
                          std::size_t total_size, SeededRng &rng, SamplingStrategy strategy) {
    if (total_size < positive.size()) {
        throw std::invalid_argument("sample_vocab: total_size " + std::to_string(total_size) +
                                    " is smaller than the positive set (" +
                                    std::to_string(positive.size()) +
                                    " labels); raise sampling.total_size");
    }
    if (total_size > dist.weights.size()) {
        throw std::invalid_argument("sample_vocab: total_size " + std::to_string(total_size) +
                                    " exceeds vocabulary size " +
                                    std::to_string(dist.weights.size()));
    }
    // Positives are excluded even if a caller hands in a distribution that
    // still has mass on them.
    std::vector<double> weights = dist.weights;
    for (int id : positive) {
        weights.at(static_cast<std::size_t>(id)) = 0.0;
    }
    const auto picked = sample_without_replacement(weights, total_size - positive.size(), rng);
    std::vector<int> negative(picked.begin(), picked.end());
    return SampledVocab({positive.begin(), positive.end()}, std::move(negative), strategy);
}

SampledVocab sample_batched(std::span<const TargetSeq> targets, const SamplingDistribution &dist,
                            std::size_t total_size, SeededRng &rng) {
    const auto positive = build_positive_set(targets);
    return sample_vocab(positive, dist, total_size, rng, SamplingStrategy::batched);
}

std::vector<SampledVocab> sample_example_wise(std::span<const TargetSeq> targets,
                                              std::span<const SamplingDistribution> dists,
                                              std::size_t total_size, std::uint64_t seed,
                                              std::span<const std::uint64_t> stream_ids) {
    if (dists.size() != targets.size() || stream_ids.size() != targets.size()) {
        throw std::invalid_argument("sample_example_wise: one distribution and stream id per "
                                    "example required");
    }
    std::vector<SampledVocab> out;
    out.reserve(targets.size());
    for (std::size_t i = 0; i < targets.size(); ++i) {
        SeededRng rng(seed, stream_ids[i]);
        const auto positive = build_positive_set(targets[i]);
        out.push_back(
            sample_vocab(positive, dists[i], total_size, rng, SamplingStrategy::example_wise));
    }
    return out;
}

std::uint64_t example_stream_id(std::uint64_t epoch, std::uint64_t index) {
    return (epoch << 40) ^ index;
}

} // namespace tkit

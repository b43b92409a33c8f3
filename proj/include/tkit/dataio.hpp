#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "tkit/config.hpp"
#include "tkit/rnnt_loss.hpp"
#include "tkit/tensor.hpp"

namespace tkit {

struct Utterance {
    std::string id;
    Matrix features; // T x F
    TargetSeq target;

    friend bool operator==(const Utterance &a, const Utterance &b) {
        return a.id == b.id && a.features == b.features && a.target.labels == b.target.labels &&
               a.target.blank_id == b.target.blank_id;
    }
};

struct Dataset {
    std::size_t vocab_size = 0;
    std::size_t feature_dim = 0;
    std::vector<Utterance> utterances;

    std::size_t size() const { return utterances.size(); }
    friend bool operator==(const Dataset &, const Dataset &) = default;
};

/// Synthetic transduction task. Labels 1..V-1 are drawn Zipf(exponent) by
/// id rank; each label contributes its prototype feature vector for a
/// uniform number of frames in [min_frames, max_frames], plus Gaussian noise.
/// With `onset_channel`, the last feature dimension is 1 on the first frame
/// of every label segment and 0 elsewhere, which keeps repeated labels
/// separable.
struct SynthSpec {
    std::size_t vocab_size = 0;
    std::size_t feature_dim = 0;
    double zipf_exponent = 1.0;
    double mean_target_length = 5.0;
    std::size_t min_frames = 1;
    std::size_t max_frames = 4;
    double noise = 0.0;
    bool onset_channel = true;
    std::uint64_t seed = 0;

    void validate() const;
    /// synth.* keys; vocab_size and feature_dim are required.
    static SynthSpec from(const Config &cfg);
};

/// Utterances first .. first+n-1 of the task; utterance i draws from stream
/// i + 1, so disjoint ranges give disjoint splits of the same task.
Dataset generate(const SynthSpec &spec, std::size_t n, std::size_t first = 0);

/// Prototype vectors, one row per vocabulary id (row 0, the blank, is zero).
Matrix label_prototypes(const SynthSpec &spec);

/// Zipf pmf over the label ids 1..V-1 (index 0 holds the blank's zero mass).
std::vector<double> zipf_pmf(std::size_t vocab_size, double exponent);

/// JSON-Lines dataset file: a header object
///   {"format":"tkit-dataset","version":1,"vocab_size":V,"feature_dim":F,"count":N}
/// followed by N lines {"id":..., "target":[...], "features":[[...], ...]}.
/// A zero-byte file reads as an empty dataset.
void write_dataset(const std::filesystem::path &path, const Dataset &data);
Dataset read_dataset(const std::filesystem::path &path);

// ─── Metrics ────────────────────────────────────────────────────────────────

std::size_t edit_distance(std::span<const int> ref, std::span<const int> hyp);

struct ErrorRate {
    std::size_t errors = 0;
    std::size_t ref_tokens = 0;

    double rate() const {
        return ref_tokens == 0 ? 0.0 : static_cast<double>(errors) / static_cast<double>(ref_tokens);
    }
    void add(std::span<const int> ref, std::span<const int> hyp) {
        errors += edit_distance(ref, hyp);
        ref_tokens += ref.size();
    }
};

} // namespace tkit

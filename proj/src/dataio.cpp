#include "tkit/dataio.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include <json.hpp>

#include "tkit/numerics.hpp"

namespace tkit {

using nlohmann::json;

namespace {

constexpr const char *kFormat = "tkit-dataset";
constexpr int kVersion = 1;

std::size_t proto_dims(const SynthSpec &spec) {
    return spec.onset_channel ? spec.feature_dim - 1 : spec.feature_dim;
}

} // namespace

void SynthSpec::validate() const {
    if (vocab_size < 2) {
        throw std::invalid_argument("SynthSpec: vocab_size must be at least 2");
    }
    if (feature_dim < (onset_channel ? 2u : 1u)) {
        throw std::invalid_argument("SynthSpec: feature_dim too small");
    }
    if (!(mean_target_length >= 1.0)) {
        throw std::invalid_argument("SynthSpec: mean_target_length must be >= 1");
    }
    if (min_frames < 1 || max_frames < min_frames) {
        throw std::invalid_argument("SynthSpec: need 1 <= min_frames <= max_frames");
    }
    if (!(noise >= 0.0) || !(zipf_exponent >= 0.0)) {
        throw std::invalid_argument("SynthSpec: noise and zipf_exponent must be non-negative");
    }
}

SynthSpec SynthSpec::from(const Config &cfg) {
    SynthSpec s;
    s.vocab_size = cfg.require_size("synth.vocab_size");
    s.feature_dim = cfg.require_size("synth.feature_dim");
    s.zipf_exponent = cfg.get_double("synth.zipf_exponent", s.zipf_exponent);
    s.mean_target_length = cfg.get_double("synth.mean_target_length", s.mean_target_length);
    s.min_frames = cfg.get_size("synth.min_frames", s.min_frames);
    s.max_frames = cfg.get_size("synth.max_frames", s.max_frames);
    s.noise = cfg.get_double("synth.noise", s.noise);
    s.onset_channel = cfg.get_bool("synth.onset_channel", s.onset_channel);
    s.seed = cfg.get_u64("synth.seed", s.seed);
    s.validate();
    return s;
}

std::vector<double> zipf_pmf(std::size_t vocab_size, double exponent) {
    std::vector<double> pmf(vocab_size, 0.0);
    double total = 0.0;
    for (std::size_t k = 1; k < vocab_size; ++k) {
        pmf[k] = std::pow(static_cast<double>(k), -exponent);
        total += pmf[k];
    }
    for (double &p : pmf) {
        p /= total;
    }
    return pmf;
}

Matrix label_prototypes(const SynthSpec &spec) {
    spec.validate();
    SeededRng rng(spec.seed, 0);
    Matrix protos(spec.vocab_size, spec.feature_dim);
    const std::size_t dims = proto_dims(spec);
    for (std::size_t v = 1; v < spec.vocab_size; ++v) {
        for (std::size_t d = 0; d < dims; ++d) {
            protos(v, d) = rng.normal();
        }
    }
    return protos;
}

Dataset generate(const SynthSpec &spec, std::size_t n, std::size_t first) {
    spec.validate();
    const Matrix protos = label_prototypes(spec);
    const auto pmf = zipf_pmf(spec.vocab_size, spec.zipf_exponent);
    std::vector<double> cdf(pmf.size());
    std::partial_sum(pmf.begin(), pmf.end(), cdf.begin());
    const auto max_len = static_cast<std::int64_t>(std::llround(2.0 * spec.mean_target_length - 1.0));
    const std::size_t dims = proto_dims(spec);

    Dataset data;
    data.vocab_size = spec.vocab_size;
    data.feature_dim = spec.feature_dim;
    data.utterances.reserve(n);
    for (std::size_t i = first; i < first + n; ++i) {
        SeededRng rng(spec.seed, i + 1);
        Utterance utt;
        char id[32];
        std::snprintf(id, sizeof id, "utt%06zu", i);
        utt.id = id;

        const auto len = static_cast<std::size_t>(rng.uniform_int(1, std::max<std::int64_t>(1, max_len)));
        for (std::size_t j = 0; j < len; ++j) {
            const double u = rng.uniform();
            auto it = std::upper_bound(cdf.begin() + 1, cdf.end() - 1, u);
            utt.target.labels.push_back(static_cast<int>(it - cdf.begin()));
        }

        std::vector<std::vector<double>> frames;
        for (int label : utt.target.labels) {
            const auto reps = static_cast<std::size_t>(rng.uniform_int(
                static_cast<std::int64_t>(spec.min_frames), static_cast<std::int64_t>(spec.max_frames)));
            for (std::size_t r = 0; r < reps; ++r) {
                std::vector<double> f(spec.feature_dim, 0.0);
                for (std::size_t d = 0; d < dims; ++d) {
                    f[d] = protos(static_cast<std::size_t>(label), d);
                    if (spec.noise > 0.0) {
                        f[d] += spec.noise * rng.normal();
                    }
                }
                if (spec.onset_channel) {
                    f[dims] = r == 0 ? 1.0 : 0.0;
                }
                frames.push_back(std::move(f));
            }
        }
        utt.features = Matrix(frames.size(), spec.feature_dim);
        for (std::size_t t = 0; t < frames.size(); ++t) {
            std::copy(frames[t].begin(), frames[t].end(), utt.features.row(t).begin());
        }
        data.utterances.push_back(std::move(utt));
    }
    return data;
}

// ─── Files ──────────────────────────────────────────────────────────────────

void write_dataset(const std::filesystem::path &path, const Dataset &data) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) {
        throw std::runtime_error(path.string() + ": cannot open for writing");
    }
    json header = {{"format", kFormat},
                   {"version", kVersion},
                   {"vocab_size", data.vocab_size},
                   {"feature_dim", data.feature_dim},
                   {"count", data.size()}};
    os << header.dump() << '\n';
    for (const auto &utt : data.utterances) {
        json feats = json::array();
        for (std::size_t t = 0; t < utt.features.rows; ++t) {
            const auto row = utt.features.row(t);
            feats.push_back(std::vector<double>(row.begin(), row.end()));
        }
        json line = {{"id", utt.id}, {"target", utt.target.labels}, {"features", std::move(feats)}};
        os << line.dump() << '\n';
    }
    if (!os) {
        throw std::runtime_error(path.string() + ": write failed");
    }
}

Dataset read_dataset(const std::filesystem::path &path) {
    std::ifstream is(path);
    if (!is) {
        throw std::runtime_error(path.string() + ": cannot open dataset");
    }
    const std::string where = path.string();
    Dataset data;
    std::string line;
    std::size_t lineno = 0;
    if (!std::getline(is, line)) {
        return data;
    }
    ++lineno;

    auto fail = [&](const std::string &what) {
        return std::runtime_error(where + ":" + std::to_string(lineno) + ": " + what);
    };

    std::size_t count = 0;
    try {
        const json header = json::parse(line);
        if (!header.is_object() || header.value("format", "") != kFormat) {
            throw fail("bad magic: header 'format' must be \"" + std::string(kFormat) + "\"");
        }
        if (header.at("version").get<int>() != kVersion) {
            throw fail("unsupported version");
        }
        data.vocab_size = header.at("vocab_size").get<std::size_t>();
        data.feature_dim = header.at("feature_dim").get<std::size_t>();
        count = header.at("count").get<std::size_t>();
    } catch (const json::exception &e) {
        throw fail(std::string("malformed header: ") + e.what());
    }

    data.utterances.reserve(count);
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) {
            continue;
        }
        try {
            const json j = json::parse(line);
            Utterance utt;
            utt.id = j.at("id").get<std::string>();
            utt.target.labels = j.at("target").get<std::vector<int>>();
            const auto &feats = j.at("features");
            if (!feats.is_array() || feats.empty()) {
                throw fail("utterance '" + utt.id + "' has no feature frames");
            }
            utt.features = Matrix(feats.size(), data.feature_dim);
            for (std::size_t t = 0; t < feats.size(); ++t) {
                const auto row = feats[t].get<std::vector<double>>();
                if (row.size() != data.feature_dim) {
                    throw fail("utterance '" + utt.id + "' frame " + std::to_string(t) + " has " +
                               std::to_string(row.size()) + " values, expected feature_dim " +
                               std::to_string(data.feature_dim));
                }
                std::copy(row.begin(), row.end(), utt.features.row(t).begin());
            }
            for (int y : utt.target.labels) {
                if (y <= 0 || static_cast<std::size_t>(y) >= data.vocab_size) {
                    throw fail("utterance '" + utt.id + "' target label " + std::to_string(y) +
                               " outside [1, vocab_size)");
                }
            }
            data.utterances.push_back(std::move(utt));
        } catch (const json::exception &e) {
            throw fail(std::string("malformed utterance: ") + e.what());
        }
    }
    if (data.size() != count) {
        throw std::runtime_error(where + ": truncated, header declares " + std::to_string(count) +
                                 " utterances but " + std::to_string(data.size()) + " were read");
    }
    return data;
}

// ─── Metrics ────────────────────────────────────────────────────────────────

std::size_t edit_distance(std::span<const int> ref, std::span<const int> hyp) {
    std::vector<std::size_t> prev(hyp.size() + 1), cur(hyp.size() + 1);
    for (std::size_t j = 0; j <= hyp.size(); ++j) {
        prev[j] = j;
    }
    for (std::size_t i = 1; i <= ref.size(); ++i) {
        cur[0] = i;
        for (std::size_t j = 1; j <= hyp.size(); ++j) {
            const std::size_t sub = prev[j - 1] + (ref[i - 1] == hyp[j - 1] ? 0 : 1);
            cur[j] = std::min({sub, prev[j] + 1, cur[j - 1] + 1});
        }
        std::swap(prev, cur);
    }
    return prev[hyp.size()];
}

} // namespace tkit

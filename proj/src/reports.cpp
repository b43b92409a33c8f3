#include "tkit/reports.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "tkit/dataio.hpp"
#include "tkit/trainer.hpp"

namespace tkit {

std::vector<std::size_t> parse_size_list(const std::string &text, const std::string &key) {
    std::vector<std::size_t> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        const auto b = item.find_first_not_of(" \t");
        const auto e = item.find_last_not_of(" \t");
        if (b == std::string::npos) {
            throw std::invalid_argument("key '" + key + "': empty list entry");
        }
        const auto token = item.substr(b, e - b + 1);
        std::size_t used = 0;
        unsigned long long v = 0;
        try {
            if (token[0] == '-') {
                throw std::invalid_argument("negative");
            }
            v = std::stoull(token, &used);
        } catch (const std::exception &) {
            used = 0;
        }
        if (used != token.size()) {
            throw std::invalid_argument("key '" + key + "': expected a non-negative integer, got '" +
                                        token + "'");
        }
        out.push_back(static_cast<std::size_t>(v));
    }
    return out;
}

MemplotSpec MemplotSpec::from(const Config &cfg) {
    MemplotSpec s;
    auto &m = s.base;
    m.frames = cfg.require_size("memory.frames");
    m.target_length = cfg.require_size("memory.target_length");
    m.vocab_size = cfg.require_size("memory.vocab_size");
    m.batch = cfg.get_size("memory.batch", m.batch);
    m.hidden = cfg.require_size("memory.hidden");
    m.input_dim = cfg.require_size("memory.input_dim");
    m.element_bytes = cfg.get_size("memory.element_bytes", m.element_bytes);
    m.self_condition = cfg.get_bool("memory.self_condition", m.self_condition);
    m.count_gradients = cfg.get_bool("memory.count_gradients", m.count_gradients);
    try {
        m.validate();
    } catch (const std::invalid_argument &e) {
        throw std::invalid_argument(std::string("memory.*: ") + e.what());
    }
    if (cfg.has("memory.sweep")) {
        s.sweep = parse_size_list(cfg.require_string("memory.sweep"), "memory.sweep");
    }
    for (auto L : s.sweep) {
        if (L == 0 || L > m.vocab_size) {
            throw std::invalid_argument("key 'memory.sweep': sampled size " + std::to_string(L) +
                                        " outside [1, vocab_size]");
        }
    }
    return s;
}

void write_memplot_csv(std::ostream &os, const MemplotSpec &spec) {
    os << kMemplotHeader << "\n";
    auto emit = [&](const std::string &name, const MemConfig &cfg) {
        for (const auto &row : memory_report(cfg).rows()) {
            os << name << "," << cfg.label_axis() << "," << row.component << "," << row.bytes << "\n";
        }
    };
    emit("full", spec.base);
    for (auto L : spec.sweep) {
        MemConfig cfg = spec.base;
        cfg.sampled_size = L;
        emit("sampled", cfg);
    }
}

BenchSpec BenchSpec::from(const Config &cfg) {
    BenchSpec s;
    s.vocab_size = cfg.get_size("bench.vocab_size", s.vocab_size);
    if (cfg.has("bench.sampled_sizes")) {
        s.sampled_sizes = parse_size_list(cfg.require_string("bench.sampled_sizes"),
                                          "bench.sampled_sizes");
    }
    s.batch = cfg.get_size("bench.batch", s.batch);
    s.frames = cfg.get_size("bench.frames", s.frames);
    s.target_length = cfg.get_size("bench.target_length", s.target_length);
    s.hidden = cfg.get_size("bench.hidden", s.hidden);
    s.input_dim = cfg.get_size("bench.input_dim", s.input_dim);
    s.repeats = cfg.get_size("bench.repeats", s.repeats);
    s.seed = cfg.get_u64("bench.seed", s.seed);
    const auto dist = cfg.get_string("bench.distribution", to_string(s.distribution));
    bool found = false;
    for (auto d : {DistributionSource::uniform, DistributionSource::joint_ctc,
                   DistributionSource::intermediate_ctc}) {
        if (to_string(d) == dist) {
            s.distribution = d;
            found = true;
        }
    }
    if (!found) {
        throw std::invalid_argument("key 'bench.distribution': expected uniform, joint-ctc or "
                                    "inter-ctc, got '" + dist + "'");
    }
    if (s.vocab_size < 2) {
        throw std::invalid_argument("key 'bench.vocab_size': must be at least 2");
    }
    for (const auto &[key, v] : {std::pair{"bench.batch", s.batch}, {"bench.frames", s.frames},
                                 {"bench.hidden", s.hidden}, {"bench.input_dim", s.input_dim},
                                 {"bench.repeats", s.repeats}}) {
        if (v == 0) {
            throw std::invalid_argument(std::string("key '") + key + "': must be at least 1");
        }
    }
    for (auto L : s.sampled_sizes) {
        if (L == 0 || L > s.vocab_size) {
            throw std::invalid_argument("key 'bench.sampled_sizes': " + std::to_string(L) +
                                        " outside [1, vocab_size]");
        }
    }
    return s;
}

std::vector<BenchRow> run_bench(const BenchSpec &spec) {
    const ModelDims dims{spec.input_dim, spec.hidden, spec.vocab_size};
    SeededRng rng(spec.seed, 0xbe7c);
    std::vector<Utterance> utts(spec.batch);
    for (auto &u : utts) {
        u.features = Matrix(spec.frames, spec.input_dim);
        for (auto &x : u.features.data) {
            x = rng.normal();
        }
        u.target.labels.resize(spec.target_length);
        for (auto &y : u.target.labels) {
            y = static_cast<int>(rng.uniform_int(1, static_cast<std::int64_t>(spec.vocab_size) - 1));
        }
    }
    std::vector<const Utterance *> batch;
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < utts.size(); ++i) {
        batch.push_back(&utts[i]);
        idx.push_back(i);
    }
    const auto model = ToyModel::initialize(dims, false, spec.seed);

    auto measure = [&](const TrainConfig &cfg, std::optional<std::size_t> sampled) {
        Trainer trainer(cfg, model);
        BenchRow row;
        row.mode = sampled ? "sampled" : "full";
        row.vocab_size = spec.vocab_size;
        row.label_axis = sampled.value_or(spec.vocab_size);
        row.batch = spec.batch;
        row.frames = spec.frames;
        row.target_length = spec.target_length;
        row.step_ms = std::numeric_limits<double>::infinity();
        for (std::size_t r = 0; r < spec.repeats; ++r) {
            const auto start = std::chrono::steady_clock::now();
            const auto step = trainer.compute_step(batch, idx, 0);
            const std::chrono::duration<double, std::milli> took =
                std::chrono::steady_clock::now() - start;
            row.step_ms = std::min(row.step_ms, took.count());
            row.peak_logit_bytes = step.peak_logit_bytes;
            row.loss = step.transducer / static_cast<double>(spec.batch);
        }
        MemConfig mem;
        mem.frames = spec.frames;
        mem.target_length = spec.target_length;
        mem.vocab_size = spec.vocab_size;
        mem.sampled_size = sampled;
        mem.batch = spec.batch;
        mem.hidden = spec.hidden;
        mem.input_dim = spec.input_dim;
        mem.element_bytes = sizeof(double);
        row.formula_bytes = logit_tensor_bytes(mem);
        return row;
    };

    TrainConfig base;
    base.hidden = spec.hidden;
    base.seed = spec.seed;
    std::vector<BenchRow> rows;
    rows.push_back(measure(base, std::nullopt));
    for (auto L : spec.sampled_sizes) {
        TrainConfig cfg = base;
        cfg.softmax = SoftmaxMode::example_wise;
        cfg.distribution = spec.distribution;
        cfg.total_size = L;
        rows.push_back(measure(cfg, L));
    }
    return rows;
}

void write_bench_csv(std::ostream &os, const std::vector<BenchRow> &rows) {
    os << kBenchHeader << "\n";
    char buf[512];
    for (const auto &r : rows) {
        std::snprintf(buf, sizeof buf, "%s,%zu,%zu,%zu,%zu,%zu,%.3f,%zu,%zu,%.12g\n", r.mode.c_str(),
                      r.vocab_size, r.label_axis, r.batch, r.frames, r.target_length, r.step_ms,
                      r.peak_logit_bytes, r.formula_bytes, r.loss);
        os << buf;
    }
}

} // namespace tkit

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <stdexcept>
#include <string>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "tkit/config.hpp"
#include "tkit/dataio.hpp"
#include "tkit/model.hpp"
#include "tkit/reports.hpp"
#include "tkit/selftest.hpp"
#include "tkit/trainer.hpp"

using namespace tkit;

namespace {

void setup_logging() {
    auto logger = spdlog::stderr_color_mt("tkit");
    logger->set_pattern("%l %v");
    spdlog::set_default_logger(logger);
    const char *env = std::getenv("TKIT_LOG");
    const std::string level = env != nullptr ? env : "warn";
    const auto parsed = spdlog::level::from_str(level);
    if (parsed == spdlog::level::off && level != "off") {
        throw std::invalid_argument("TKIT_LOG: unknown level '" + level + "'");
    }
    spdlog::set_level(parsed);
}

/// Output stream for --out, or stdout when empty.
struct Output {
    std::ofstream file;
    std::ostream *os = &std::cout;

    explicit Output(const std::string &path) {
        if (!path.empty()) {
            file.open(path);
            if (!file) {
                throw std::invalid_argument(path + ": cannot open for writing");
            }
            os = &file;
        }
    }
};

std::string join(const std::vector<int> &v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) {
        s += (i ? " " : "") + std::to_string(v[i]);
    }
    return s;
}

} // namespace

int main(int argc, char **argv) {
    CLI::App app{"tkit: transducer training toolkit"};
    app.require_subcommand(1);

    std::string config_path;
    std::string data_path;
    std::string out_path;
    std::string dev_path;
    std::string checkpoint_path;
    std::string sweep;
    std::string fault;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> workers;
    std::size_t n = 0;
    std::size_t first = 0;

    auto *gen = app.add_subcommand("gen-data", "Generate a synthetic dataset");
    gen->add_option("--config", config_path, "synth.* spec file")->required();
    gen->add_option("--n", n, "Number of utterances")->required();
    gen->add_option("--first", first, "Index of the first utterance (for disjoint splits)");
    gen->add_option("--out", out_path, "Dataset file")->required();
    gen->add_option("--seed", seed, "Overrides synth.seed");

    auto *train = app.add_subcommand("train", "Train a model");
    train->add_option("--config", config_path, "Training config")->required();
    train->add_option("--data", data_path, "Training dataset")->required();
    train->add_option("--out", out_path, "Checkpoint path")->required();
    train->add_option("--dev", dev_path, "Dev dataset for per-epoch token error rate");
    train->add_option("--seed", seed, "Overrides train.seed");
    train->add_option("--workers", workers, "Overrides train.workers");

    auto *eval = app.add_subcommand("eval", "Decode a dataset and score it");
    eval->add_option("--checkpoint", checkpoint_path, "Model checkpoint")->required();
    eval->add_option("--data", data_path, "Dataset")->required();
    eval->add_option("--config", config_path, "decode.* settings");
    eval->add_option("--out", out_path, "Per-utterance CSV");
    eval->add_option("--workers", workers, "Decoding threads");

    auto *memplot = app.add_subcommand("memplot", "Memory accounting CSV");
    memplot->add_option("--config", config_path, "memory.* settings")->required();
    memplot->add_option("--sweep", sweep, "Comma-separated sampled sizes, overrides memory.sweep");
    memplot->add_option("--out", out_path, "CSV path");

    auto *bench = app.add_subcommand("bench", "Time full and sampled training steps");
    bench->add_option("--config", config_path, "bench.* settings");
    bench->add_option("--seed", seed, "Overrides bench.seed");
    bench->add_option("--out", out_path, "CSV path");

    auto *selftest = app.add_subcommand("selftest", "Run the oracle and invariant checks");
    selftest->add_option("--inject-fault", fault, "Deliberate defect: grad-sign")
        ->check(CLI::IsMember({"grad-sign"}));

    CLI11_PARSE(app, argc, argv);

    try {
        setup_logging();
        if (gen->parsed()) {
            auto spec = SynthSpec::from(Config::load(config_path));
            if (seed) {
                spec.seed = *seed;
            }
            const auto data = generate(spec, n, first);
            write_dataset(out_path, data);
            spdlog::info("wrote {} utterances to {}", data.size(), out_path);
        } else if (train->parsed()) {
            const auto cfg_file = Config::load(config_path);
            auto cfg = TrainConfig::from(cfg_file);
            if (seed) {
                cfg.seed = *seed;
            }
            if (workers) {
                cfg.workers = *workers;
            }
            const auto data = read_dataset(data_path);
            if (data.size() == 0) {
                throw std::invalid_argument(data_path + ": training set is empty");
            }
            std::optional<Dataset> dev;
            if (!dev_path.empty()) {
                dev = read_dataset(dev_path);
                if (dev->size() > 0 && (dev->vocab_size != data.vocab_size ||
                                        dev->feature_dim != data.feature_dim)) {
                    throw std::invalid_argument(dev_path +
                                                ": vocab_size/feature_dim differ from the training set");
                }
            }
            Trainer trainer(cfg, ModelDims{data.feature_dim, cfg.hidden, data.vocab_size});
            spdlog::info("training on {} utterances, vocab {}", data.size(), data.vocab_size);
            for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
                const auto log = trainer.run_epoch(data, dev ? &*dev : nullptr, epoch);
                std::cout << log.to_line() << std::endl;
            }
            write_checkpoint(out_path, trainer.model());
        } else if (eval->parsed()) {
            DecodeOptions opts;
            if (!config_path.empty()) {
                opts = DecodeOptions::from(Config::load(config_path));
            }
            const auto model = read_checkpoint(checkpoint_path);
            const auto data = read_dataset(data_path);
            if (opts.ctc_top_k >= model.dims.vocab) {
                throw std::invalid_argument("key 'decode.ctc_top_k': must be below the vocabulary size");
            }
            const auto result = evaluate(model, data, opts, workers.value_or(1));
            if (!out_path.empty()) {
                Output out(out_path);
                *out.os << "id,errors,ref_len,hyp\n";
                for (std::size_t i = 0; i < data.size(); ++i) {
                    const auto &u = data.utterances[i];
                    *out.os << u.id << "," << edit_distance(u.target.labels, result.hypotheses[i])
                            << "," << u.target.size() << "," << join(result.hypotheses[i]) << "\n";
                }
            }
            char ter[32];
            std::snprintf(ter, sizeof ter, "%.6f", result.error.rate());
            std::cout << "utterances=" << data.size() << " errors=" << result.error.errors
                      << " ref_tokens=" << result.error.ref_tokens << " ter=" << ter << std::endl;
        } else if (memplot->parsed()) {
            auto cfg = Config::load(config_path);
            if (!sweep.empty()) {
                cfg.set("memory.sweep", sweep);
            }
            const auto spec = MemplotSpec::from(cfg);
            Output out(out_path);
            write_memplot_csv(*out.os, spec);
        } else if (bench->parsed()) {
            auto spec = config_path.empty() ? BenchSpec{} : BenchSpec::from(Config::load(config_path));
            if (seed) {
                spec.seed = *seed;
            }
            const auto rows = run_bench(spec);
            Output out(out_path);
            write_bench_csv(*out.os, rows);
        } else if (selftest->parsed()) {
            const auto checks = run_selftest(fault == "grad-sign" ? Fault::grad_sign : Fault::none);
            print_selftest(std::cout, checks);
            return all_passed(checks) ? 0 : 1;
        }
    } catch (const std::exception &e) {
        std::cerr << "tkit: error: " << e.what() << std::endl;
        return 2;
    }
    return 0;
}

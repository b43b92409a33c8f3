#pragma once

#include <cstddef>
#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "tkit/config.hpp"
#include "tkit/memory_model.hpp"
#include "tkit/sampler.hpp"

namespace tkit {

/// Comma-separated non-negative integers, e.g. "50,100,200".
std::vector<std::size_t> parse_size_list(const std::string &text, const std::string &key);

// ─── memplot ────────────────────────────────────────────────────────────────

/// memory.* keys: frames, target_length, vocab_size, batch, hidden,
/// input_dim, element_bytes, self_condition, count_gradients, sweep.
struct MemplotSpec {
    MemConfig base; // sampled_size unset
    std::vector<std::size_t> sweep;

    static MemplotSpec from(const Config &cfg);
};

inline constexpr const char *kMemplotHeader = "config,label_axis,component,bytes";

/// The full-softmax rows, then one block per sweep entry, in sweep order.
void write_memplot_csv(std::ostream &os, const MemplotSpec &spec);

// ─── bench ──────────────────────────────────────────────────────────────────

/// bench.* keys: vocab_size, sampled_sizes, batch, frames, target_length,
/// hidden, input_dim, repeats, seed, distribution.
struct BenchSpec {
    std::size_t vocab_size = 200;
    std::vector<std::size_t> sampled_sizes{50, 100};
    std::size_t batch = 8;
    std::size_t frames = 40;
    std::size_t target_length = 8;
    std::size_t hidden = 32;
    std::size_t input_dim = 16;
    std::size_t repeats = 3;
    std::uint64_t seed = 1;
    DistributionSource distribution = DistributionSource::joint_ctc;

    static BenchSpec from(const Config &cfg);
};

struct BenchRow {
    std::string mode; // "full" or "sampled"
    std::size_t vocab_size = 0;
    std::size_t label_axis = 0;
    std::size_t batch = 0;
    std::size_t frames = 0;
    std::size_t target_length = 0;
    double step_ms = 0.0; // fastest of the repeats
    std::size_t peak_logit_bytes = 0;
    std::size_t formula_bytes = 0;
    double loss = 0.0; // mean transducer loss of the batch
};

inline constexpr const char *kBenchHeader =
    "mode,vocab_size,label_axis,batch,frames,target_len,step_ms,peak_logit_bytes,formula_bytes,loss";

/// One full-softmax row, then one example-wise sampled row per sampled size,
/// all on the same synthetic batch and initial model.
std::vector<BenchRow> run_bench(const BenchSpec &spec);

void write_bench_csv(std::ostream &os, const std::vector<BenchRow> &rows);

} // namespace tkit

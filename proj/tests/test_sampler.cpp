#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <set>

#include "tkit/sampler.hpp"

using namespace tkit;

namespace {

double sum(const std::vector<double> &w) { return std::accumulate(w.begin(), w.end(), 0.0); }

void check_vocab_invariants(const SampledVocab &sv) {
    REQUIRE_FALSE(sv.positive().empty());
    CHECK(sv.positive()[0] == 0);
    CHECK(sv.label_map()[0] == 0);
    std::set<int> pos(sv.positive().begin(), sv.positive().end());
    for (int y : sv.negative()) {
        CHECK(pos.count(y) == 0);
    }
    CHECK(sv.size() == sv.positive().size() + sv.negative().size());
    for (std::size_t i = 0; i < sv.size(); ++i) {
        CHECK(sv.to_compact(sv.label_map()[i]) == i);
    }
}

} // namespace

TEST_CASE("positive sets") {
    CHECK(build_positive_set(TargetSeq{}) == std::vector<int>{0});
    CHECK(build_positive_set(TargetSeq{{3, 5, 3}}) == std::vector<int>{0, 3, 5});
    const std::vector<TargetSeq> batch{TargetSeq{{1, 2}}, TargetSeq{{2, 4}}};
    CHECK(build_positive_set(std::span<const TargetSeq>(batch)) == std::vector<int>{0, 1, 2, 4});
}

TEST_CASE("uniform distribution") {
    const std::vector<int> blank{0};
    const auto a = make_uniform_distribution(4, blank);
    CHECK(a.weights == std::vector<double>{0.0, 1.0 / 3, 1.0 / 3, 1.0 / 3});
    const std::vector<int> three{0, 1, 2};
    CHECK(make_uniform_distribution(4, three).weights == std::vector<double>{0, 0, 0, 1});
    CHECK(sum(a.weights) == doctest::Approx(1.0).epsilon(1e-14));
    const std::vector<int> all{0, 1, 2, 3};
    CHECK_THROWS_AS(make_uniform_distribution(4, all), std::invalid_argument);
}

TEST_CASE("CTC distribution") {
    Matrix one(1, 3);
    one.data = {0.5, 0.25, 0.25};
    const std::vector<int> blank{0};
    const auto d = make_ctc_distribution(CtcPosterior{one}, blank);
    CHECK(d.weights[0] == 0.0);
    CHECK(d.weights[1] == doctest::Approx(0.5));
    CHECK(d.weights[2] == doctest::Approx(0.5));
    CHECK(d.source == DistributionSource::joint_ctc);

    Matrix two(2, 3);
    two.data = {1, 0, 0, 0, 0, 1};
    const std::vector<int> none{};
    const auto avg = make_ctc_distribution(CtcPosterior{two}, none);
    CHECK(avg.weights == std::vector<double>{0.5, 0.0, 0.5});

    SeededRng rng(1, 0);
    for (int i = 0; i < 50; ++i) {
        Matrix probs(4, 6);
        for (std::size_t t = 0; t < 4; ++t) {
            double z = 0.0;
            for (auto &p : probs.row(t)) {
                p = rng.uniform();
                z += p;
            }
            for (auto &p : probs.row(t)) {
                p /= z;
            }
        }
        const std::vector<int> pos{0, 2, 5};
        const auto w = make_ctc_distribution(CtcPosterior{probs}, pos, DistributionSource::intermediate_ctc);
        CHECK(std::abs(sum(w.weights) - 1.0) <= 1e-10);
        for (int p : pos) {
            CHECK(w.weights[static_cast<std::size_t>(p)] == 0.0);
        }
        CHECK(w.source == DistributionSource::intermediate_ctc);
    }
}

TEST_CASE("zero remaining mass falls back to uniform") {
    Matrix probs(2, 4);
    probs.data = {0.5, 0.5, 0, 0, 1, 0, 0, 0};
    const std::vector<int> pos{0, 1};
    const auto w = make_ctc_distribution(CtcPosterior{probs}, pos);
    CHECK(w.weights == std::vector<double>{0, 0, 0.5, 0.5});
}

TEST_CASE("batched distribution averages the per-example frame means") {
    Matrix a(1, 3);
    a.data = {0, 1, 0};
    Matrix b(2, 3);
    b.data = {0, 0, 1, 0, 0, 1};
    const std::vector<CtcPosterior> posts{CtcPosterior{a}, CtcPosterior{b}};
    const std::vector<int> blank{0};
    const auto w = make_ctc_distribution(std::span<const CtcPosterior>(posts), blank);
    CHECK(w.weights == std::vector<double>{0, 0.5, 0.5});
}

TEST_CASE("sample_vocab sizes") {
    SeededRng rng(2, 0);
    const std::vector<int> pos{0, 3};
    const auto dist = make_uniform_distribution(8, pos);
    const auto full = sample_vocab(pos, dist, 8, rng, SamplingStrategy::example_wise);
    check_vocab_invariants(full);
    CHECK(full.size() == 8);
    const auto only = sample_vocab(pos, dist, 2, rng, SamplingStrategy::batched);
    CHECK(only.negative().empty());
    CHECK(only.strategy() == SamplingStrategy::batched);
    CHECK_THROWS_AS(sample_vocab(pos, dist, 1, rng, SamplingStrategy::batched), std::invalid_argument);
    CHECK_THROWS_AS(sample_vocab(pos, dist, 9, rng, SamplingStrategy::batched), std::invalid_argument);
    const auto mid = sample_vocab(pos, dist, 5, rng, SamplingStrategy::example_wise);
    check_vocab_invariants(mid);
    CHECK(mid.negative().size() == 3);
    CHECK(mid.label_map() ==
          std::vector<int>{0, 3, mid.negative()[0], mid.negative()[1], mid.negative()[2]});
}

TEST_CASE("total_size below the positive set names the overflow") {
    SeededRng rng(3, 0);
    const std::vector<int> pos{0, 1, 2, 3};
    const auto dist = make_uniform_distribution(10, pos);
    try {
        sample_vocab(pos, dist, 3, rng, SamplingStrategy::example_wise);
        FAIL("expected an error");
    } catch (const std::invalid_argument &e) {
        CHECK(std::string(e.what()).find("total_size") != std::string::npos);
    }
}

TEST_CASE("example-wise sampling over a batch") {
    const std::vector<TargetSeq> targets{TargetSeq{{1, 2}}, TargetSeq{{2, 4}}, TargetSeq{{7}}};
    const auto batched_pos = build_positive_set(std::span<const TargetSeq>(targets));
    std::vector<SamplingDistribution> dists;
    std::vector<std::uint64_t> streams;
    for (std::size_t i = 0; i < targets.size(); ++i) {
        dists.push_back(make_uniform_distribution(12, build_positive_set(targets[i])));
        streams.push_back(example_stream_id(3, i));
    }
    const auto a = sample_example_wise(targets, dists, 6, 99, streams);
    REQUIRE(a.size() == targets.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        check_vocab_invariants(a[i]);
        CHECK(a[i].size() == 6);
        CHECK(a[i].positive() == build_positive_set(targets[i]));
        CHECK(a[i].positive().size() <= batched_pos.size());
        CHECK(std::includes(batched_pos.begin(), batched_pos.end(), a[i].positive().begin(),
                            a[i].positive().end()));
    }
    const auto b = sample_example_wise(targets, dists, 6, 99, streams);
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].label_map() == b[i].label_map());
    }

    // The draw for an example depends on its stream only, not its batch position.
    const std::vector<TargetSeq> reversed(targets.rbegin(), targets.rend());
    const std::vector<SamplingDistribution> rdists(dists.rbegin(), dists.rend());
    const std::vector<std::uint64_t> rstreams(streams.rbegin(), streams.rend());
    const auto c = sample_example_wise(reversed, rdists, 6, 99, rstreams);
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(c[a.size() - 1 - i].label_map() == a[i].label_map());
    }

    SeededRng rng(99, 0);
    const auto shared = sample_batched(targets,
                                       make_uniform_distribution(12, batched_pos), 8, rng);
    check_vocab_invariants(shared);
    CHECK(shared.positive() == batched_pos);
    CHECK(shared.strategy() == SamplingStrategy::batched);
}

TEST_CASE("zero-weight labels never become negatives") {
    SeededRng rng(4, 0);
    std::vector<double> w(10, 0.0);
    w[2] = 0.2;
    w[5] = 0.3;
    w[9] = 0.5;
    const SamplingDistribution dist{w, DistributionSource::joint_ctc};
    const std::vector<int> pos{0};
    for (int i = 0; i < 100; ++i) {
        const auto sv = sample_vocab(pos, dist, 4, rng, SamplingStrategy::example_wise);
        CHECK(sv.negative() == std::vector<int>{2, 5, 9});
    }
    CHECK_THROWS_AS(sample_vocab(pos, dist, 5, rng, SamplingStrategy::example_wise),
                    std::invalid_argument);
}

TEST_CASE("names") {
    CHECK(to_string(SamplingStrategy::example_wise) == "example-wise");
    CHECK(to_string(DistributionSource::self_conditioned_ctc) == "sc-ctc");
    CHECK(example_stream_id(1, 5) == ((std::uint64_t{1} << 40) ^ 5));
    CHECK_THROWS_AS(SampledVocab({0, 1}, {1}, SamplingStrategy::batched), std::invalid_argument);
}

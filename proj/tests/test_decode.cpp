#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "tkit/ctc.hpp"
#include "tkit/decode.hpp"

using namespace tkit;

namespace {

struct Trial {
    ToyModel model;
    Matrix features;
};

Trial random_trial(SeededRng &rng, std::size_t max_frames, std::size_t max_vocab, double gain) {
    const ModelDims dims{3, 4,
                         static_cast<std::size_t>(rng.uniform_int(2, static_cast<std::int64_t>(max_vocab)))};
    auto model = ToyModel::initialize(dims, rng.uniform() < 0.5, rng.next_u64());
    for (auto &m : model.params.all()) {
        for (auto &w : m.data) {
            w *= gain;
        }
    }
    Matrix x(static_cast<std::size_t>(rng.uniform_int(1, static_cast<std::int64_t>(max_frames))), 3);
    for (auto &v : x.data) {
        v = rng.normal();
    }
    return {std::move(model), std::move(x)};
}

} // namespace

TEST_CASE("blank-dominant joint emits nothing") {
    const ModelDims dims{3, 4, 5};
    auto model = ToyModel::initialize(dims, false, 1);
    auto &bias = model.params[Param::joint_bias].data;
    std::fill(bias.begin(), bias.end(), 50.0);
    auto &out = model.params[Param::joint_out];
    out.data.assign(out.data.size(), 0.0);
    for (std::size_t h = 0; h < dims.hidden; ++h) {
        out(0, h) = 1.0;
    }
    const Matrix x(6, 3, 0.1);
    const auto enc = encode(model, x);
    const auto hyp = greedy_decode(model, enc);
    CHECK(hyp.labels.empty());
    // exactly T blank steps, each of log-probability close to zero
    const JointScorer scorer(model, enc);
    double expected = 0.0;
    for (std::size_t t = 0; t < 6; ++t) {
        expected += scorer.log_probs(t, hyp.pred_state)[0];
    }
    CHECK(hyp.score == doctest::Approx(expected));
    CHECK(beam_search(model, x, 3).labels.empty());
}

TEST_CASE("emission cap bounds labels per frame") {
    const ModelDims dims{3, 4, 3};
    auto model = ToyModel::initialize(dims, false, 2);
    auto &out = model.params[Param::joint_out];
    out.data.assign(out.data.size(), 0.0);
    auto &bias = model.params[Param::joint_bias].data;
    std::fill(bias.begin(), bias.end(), 50.0);
    for (std::size_t h = 0; h < dims.hidden; ++h) {
        out(1, h) = 1.0; // label 1 always wins
    }
    const Matrix x(3, 3);
    const auto out_labels = greedy_decode(model, x);
    CHECK(out_labels.size() == 3 * kMaxEmissionsPerFrame);
    // Every path has the same blanks, so shorter ones score higher; the beam
    // may find one but never exceeds the cap.
    const auto hyp = beam_search(model, x, 2);
    CHECK(hyp.labels.size() <= 3 * kMaxEmissionsPerFrame);
    CHECK(hyp.score >= greedy_decode(model, encode(model, x)).score);
}

TEST_CASE("CTC constraint construction") {
    Matrix probs(1, 3);
    probs.data = {0.5, 0.3, 0.2};
    const auto c = build_ctc_constraint(CtcPosterior{probs}, 1);
    CHECK(c.allowed == std::vector<int>{0, 1});
    CHECK(c.k == 1u);
    CHECK(build_ctc_constraint(CtcPosterior{probs}, 2).allowed == std::vector<int>{0, 1, 2});

    Matrix tie(2, 5);
    tie.data = {0.4, 0.1, 0.2, 0.1, 0.2, 0.4, 0.1, 0.2, 0.1, 0.2};
    CHECK(build_ctc_constraint(CtcPosterior{tie}, 1).allowed == std::vector<int>{0, 2});
    CHECK(build_ctc_constraint(CtcPosterior{tie}, 3).allowed == std::vector<int>{0, 1, 2, 4});
    CHECK(build_ctc_constraint(CtcPosterior{tie}, 3).allowed.size() == 4);

    CHECK_THROWS_AS(build_ctc_constraint(CtcPosterior{probs}, 0), std::invalid_argument);
    CHECK_THROWS_AS(build_ctc_constraint(CtcPosterior{probs}, 3), std::invalid_argument);
    CHECK(c.allows(0));
    CHECK_FALSE(c.allows(2));
}

TEST_CASE("decoding identities on random models") {
    SeededRng rng(3, 0);
    for (int i = 0; i < 300; ++i) {
        const auto trial = random_trial(rng, 6, 8, 3.0);
        const auto enc = encode(trial.model, trial.features);
        const auto V = trial.model.dims.vocab;
        const auto post = ctc_posterior(enc.ctc_logits);
        const auto greedy = greedy_decode(trial.model, enc);
        const auto all = build_ctc_constraint(post, V - 1);
        REQUIRE(all.allowed.size() == V);
        CHECK(greedy_decode(trial.model, enc, &all).labels == greedy.labels);
        CHECK(beam_search(trial.model, enc, 4, &all).labels == beam_search(trial.model, enc, 4).labels);
        const auto b1 = beam_search(trial.model, enc, 1);
        CHECK(b1.labels == greedy.labels);
        CHECK(b1.score == greedy.score);
        const auto b4 = beam_search(trial.model, enc, 4);
        CHECK(b4.score >= greedy.score);
        CHECK(b4.score <= 0.0);
        for (int y : b4.labels) {
            CHECK(y != 0);
        }
        const auto k = static_cast<std::size_t>(rng.uniform_int(1, static_cast<std::int64_t>(V) - 1));
        const auto c = build_ctc_constraint(post, k);
        for (int y : greedy_decode(trial.model, enc, &c).labels) {
            CHECK(c.allows(y));
        }
        for (int y : beam_search(trial.model, enc, 3, &c).labels) {
            CHECK(c.allows(y));
        }
        CHECK(greedy_decode(trial.model, trial.features) == greedy.labels);
    }
}

TEST_CASE("wide beam recovers the exhaustive best path") {
    SeededRng rng(4, 0);
    for (int i = 0; i < 200; ++i) {
        // Moderate gain keeps label runs short so exhaustive search stays small.
        const auto trial = random_trial(rng, 3, 4, 1.5);
        const auto enc = encode(trial.model, trial.features);
        const auto V = trial.model.dims.vocab;
        const auto T = enc.frames();
        std::size_t beam = 1;
        for (std::size_t j = 0; j < T + 2; ++j) {
            beam *= V;
        }
        const auto oracle = testing::exhaustive_best_path(trial.model, enc);
        const auto found = beam_search(trial.model, enc, beam);
        CHECK(found.score == doctest::Approx(oracle.score).epsilon(1e-12));
        CHECK(found.labels == oracle.labels);
        CHECK(found.score >= greedy_decode(trial.model, enc).score);
    }
}

TEST_CASE("beam search is deterministic and validates its width") {
    SeededRng rng(5, 0);
    const auto trial = random_trial(rng, 5, 6, 2.0);
    const auto a = beam_search(trial.model, trial.features, 5);
    const auto b = beam_search(trial.model, trial.features, 5);
    CHECK(a.labels == b.labels);
    CHECK(a.score == b.score);
    CHECK_THROWS_AS(beam_search(trial.model, trial.features, 0), std::invalid_argument);
}

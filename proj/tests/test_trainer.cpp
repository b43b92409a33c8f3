#include <doctest.h>

#include <sstream>

#include "tkit/trainer.hpp"

using namespace tkit;

namespace {

Config parse(const std::string &text) {
    std::istringstream is(text);
    return Config::parse(is, "test.cfg");
}

SynthSpec task() {
    SynthSpec s;
    s.vocab_size = 9;
    s.feature_dim = 5;
    s.noise = 0.2;
    s.mean_target_length = 3;
    s.seed = 4;
    return s;
}

TrainConfig small_config() {
    TrainConfig c;
    c.hidden = 6;
    c.lr = 0.01;
    c.epochs = 2;
    c.batch_size = 4;
    c.seed = 7;
    return c;
}

ModelDims dims_of(const Dataset &d, const TrainConfig &c) { return {d.feature_dim, c.hidden, d.vocab_size}; }

} // namespace

TEST_CASE("config parsing") {
    const auto cfg = TrainConfig::from(parse("model.hidden=12\nsampling.strategy=batched\n"
                                             "sampling.distribution=uniform\nsampling.total_size=5\n"
                                             "loss.ctc=0\ndecode.mode=beam\ndecode.beam=3\n"));
    CHECK(cfg.hidden == 12);
    CHECK(cfg.softmax == SoftmaxMode::batched);
    CHECK(cfg.distribution == DistributionSource::uniform);
    CHECK(cfg.total_size == 5);
    CHECK(cfg.weights.ctc == 0.0);
    CHECK(cfg.weights.transducer == 1.0);
    CHECK(cfg.decode.mode == DecodeMode::beam);
    CHECK(cfg.decode.beam == 3);

    auto bad = [](const std::string &text, const std::string &needle) {
        CHECK_THROWS_WITH_AS(TrainConfig::from(parse(text)), doctest::Contains(needle.c_str()),
                             std::invalid_argument);
    };
    bad("model.hiden=3\n", "unknown config key 'model.hiden'");
    bad("sampling.strategy=random\n", "sampling.strategy");
    bad("sampling.distribution=zipf\n", "sampling.distribution");
    bad("optim.lr=abc\n", "optim.lr");
    CHECK_THROWS_WITH(TrainConfig::from(parse("optim.lr=0\n")).validate(10), doctest::Contains("optim.lr"));
    bad("loss.ctc=-1\n", "loss.ctc");
    bad("decode.mode=sample\n", "decode.mode");
    bad("decode.beam=0\n", "decode.beam");
    bad("model.self_condition=maybe\n", "model.self_condition");
    CHECK_THROWS_AS(parse("no equals sign\n"), std::invalid_argument);
}

TEST_CASE("config validation against the vocabulary") {
    auto c = small_config();
    c.softmax = SoftmaxMode::example_wise;
    CHECK_THROWS_WITH(c.validate(9), doctest::Contains("sampling.total_size"));
    c.total_size = 10;
    CHECK_THROWS_WITH(c.validate(9), doctest::Contains("sampling.total_size"));
    c.total_size = 9;
    CHECK_NOTHROW(c.validate(9));
    c.distribution = DistributionSource::self_conditioned_ctc;
    CHECK_THROWS_AS(c.validate(9), std::invalid_argument);
    c.self_condition = true;
    CHECK_NOTHROW(c.validate(9));
    c.decode.ctc_top_k = 9;
    CHECK_THROWS_WITH(c.validate(9), doctest::Contains("decode.ctc_top_k"));
}

TEST_CASE("zero epochs leave the initialisation untouched") {
    const auto data = generate(task(), 8);
    const auto cfg = small_config();
    Trainer trainer(cfg, dims_of(data, cfg));
    CHECK(trainer.model().params == ToyModel::initialize(dims_of(data, cfg), false, cfg.seed).params);
}

TEST_CASE("training lowers the loss and is reproducible") {
    const auto data = generate(task(), 32);
    auto cfg = small_config();
    auto run = [&](std::size_t workers) {
        cfg.workers = workers;
        Trainer t(cfg, dims_of(data, cfg));
        std::vector<std::string> lines;
        for (std::size_t e = 1; e <= 3; ++e) {
            lines.push_back(t.run_epoch(data, &data, e).to_line());
        }
        return std::pair{lines, t.model().params};
    };
    const auto a = run(1);
    const auto b = run(1);
    const auto c = run(3);
    CHECK(a.first == b.first);
    CHECK(a.second == b.second);
    CHECK(a.first == c.first);
    CHECK(a.second == c.second);
    CHECK(a.first[0].rfind("epoch=1 loss_transducer=", 0) == 0);
    CHECK(a.first[0].find(" dev_ter=") != std::string::npos);

    Trainer t(cfg, dims_of(data, cfg));
    const auto first = t.run_epoch(data, nullptr, 1);
    for (std::size_t e = 2; e <= 6; ++e) {
        t.run_epoch(data, nullptr, e);
    }
    const auto last = t.run_epoch(data, nullptr, 7);
    CHECK(last.loss_transducer < first.loss_transducer);
    CHECK_FALSE(first.dev_ter.has_value());
    CHECK(first.to_line().find("dev_ter") == std::string::npos);
}

TEST_CASE("sampled softmax over the whole vocabulary reproduces full training") {
    const auto data = generate(task(), 24);
    auto full_cfg = small_config();
    for (auto mode : {SoftmaxMode::example_wise, SoftmaxMode::batched}) {
        auto sampled_cfg = full_cfg;
        sampled_cfg.softmax = mode;
        sampled_cfg.total_size = data.vocab_size;
        Trainer full(full_cfg, dims_of(data, full_cfg));
        Trainer sampled(sampled_cfg, dims_of(data, sampled_cfg));
        for (std::size_t e = 1; e <= 2; ++e) {
            full.run_epoch(data, nullptr, e);
            sampled.run_epoch(data, nullptr, e);
        }
        REQUIRE(full.step_losses().size() == sampled.step_losses().size());
        for (std::size_t i = 0; i < full.step_losses().size(); ++i) {
            CHECK(std::abs(full.step_losses()[i] - sampled.step_losses()[i]) <= 1e-10);
        }
    }
}

TEST_CASE("sampled steps use a smaller logit buffer") {
    const auto data = generate(task(), 4);
    std::vector<const Utterance *> batch;
    std::vector<std::size_t> idx;
    std::size_t cells = 0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        batch.push_back(&data.utterances[i]);
        idx.push_back(i);
        cells += data.utterances[i].features.rows * (data.utterances[i].target.size() + 1);
    }
    auto cfg = small_config();
    const Trainer full(cfg, dims_of(data, cfg));
    // logits plus their gradient, float64
    CHECK(full.compute_step(batch, idx, 1).peak_logit_bytes == 2 * cells * data.vocab_size * 8);
    cfg.softmax = SoftmaxMode::example_wise;
    cfg.total_size = 5;
    const Trainer sampled(cfg, dims_of(data, cfg));
    const auto step = sampled.compute_step(batch, idx, 1);
    CHECK(step.peak_logit_bytes == 2 * cells * 5 * 8);
    CHECK(step.example_transducer.size() == 4);
    // Sampling with a fixed (epoch, index) key is repeatable.
    CHECK(sampled.compute_step(batch, idx, 1).transducer == step.transducer);
}

TEST_CASE("model and config must agree") {
    const auto data = generate(task(), 4);
    auto cfg = small_config();
    const auto model = ToyModel::initialize(dims_of(data, cfg), true, 1);
    CHECK_THROWS_WITH_AS(Trainer(cfg, model), doctest::Contains("model.self_condition"),
                         std::invalid_argument);
    auto other = task();
    other.vocab_size = 10;
    Trainer t(cfg, dims_of(data, cfg));
    CHECK_THROWS_AS(t.run_epoch(generate(other, 4), nullptr, 1), std::invalid_argument);
}

TEST_CASE("evaluation is independent of the worker count") {
    const auto data = generate(task(), 20);
    auto cfg = small_config();
    Trainer t(cfg, dims_of(data, cfg));
    t.run_epoch(data, nullptr, 1);
    DecodeOptions opts;
    opts.mode = DecodeMode::beam;
    opts.beam = 3;
    opts.ctc_top_k = 4;
    const auto a = evaluate(t.model(), data, opts, 1);
    const auto b = evaluate(t.model(), data, opts, 4);
    CHECK(a.hypotheses == b.hypotheses);
    CHECK(a.error.errors == b.error.errors);
    CHECK(a.error.ref_tokens > 0);
}

TEST_CASE("parallel_for visits each index once and rethrows") {
    std::vector<int> hits(100, 0);
    parallel_for(hits.size(), 4, [&](std::size_t i) { hits[i] += 1; });
    CHECK(std::all_of(hits.begin(), hits.end(), [](int h) { return h == 1; }));
    CHECK_THROWS_AS(parallel_for(10, 3,
                                 [](std::size_t i) {
                                     if (i == 5) {
                                         throw std::runtime_error("boom");
                                     }
                                 }),
                    std::runtime_error);
}

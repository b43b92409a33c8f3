#include <doctest.h>

#include <boost/math/distributions/chi_squared.hpp>

#include <filesystem>
#include <fstream>
#include <limits>

#include "tkit/dataio.hpp"

using namespace tkit;

namespace {

std::filesystem::path temp_path(const std::string &name) {
    return std::filesystem::temp_directory_path() / ("tkit_test_dataio_" + name);
}

SynthSpec small_spec() {
    SynthSpec s;
    s.vocab_size = 12;
    s.feature_dim = 6;
    s.noise = 0.2;
    s.seed = 9;
    return s;
}

} // namespace

TEST_CASE("noise-free single-frame data maps back to its targets") {
    auto spec = small_spec();
    spec.noise = 0.0;
    spec.min_frames = spec.max_frames = 1;
    const auto protos = label_prototypes(spec);
    const auto data = generate(spec, 200);
    const std::size_t dims = spec.feature_dim - 1;
    for (const auto &u : data.utterances) {
        REQUIRE(u.features.rows == u.target.size());
        for (std::size_t t = 0; t < u.features.rows; ++t) {
            CHECK(u.features(t, dims) == 1.0);
            int best = -1;
            double best_d = std::numeric_limits<double>::infinity();
            for (std::size_t v = 1; v < spec.vocab_size; ++v) {
                double d = 0.0;
                for (std::size_t k = 0; k < dims; ++k) {
                    d += std::pow(u.features(t, k) - protos(v, k), 2);
                }
                if (d < best_d) {
                    best_d = d;
                    best = static_cast<int>(v);
                }
            }
            CHECK(best == u.target.labels[t]);
        }
    }
}

TEST_CASE("labels follow the Zipf distribution") {
    SynthSpec spec;
    spec.vocab_size = 20;
    spec.feature_dim = 3;
    spec.zipf_exponent = 1.0;
    spec.mean_target_length = 10.0;
    spec.max_frames = 1;
    spec.seed = 21;
    const auto pmf = zipf_pmf(spec.vocab_size, spec.zipf_exponent);
    CHECK(pmf[0] == 0.0);
    CHECK(pmf[1] / pmf[2] == doctest::Approx(2.0));

    std::vector<double> counts(spec.vocab_size, 0.0);
    std::size_t draws = 0;
    for (std::size_t first = 0; draws < 100000; first += 1000) {
        for (const auto &u : generate(spec, 1000, first).utterances) {
            for (int y : u.target.labels) {
                counts[static_cast<std::size_t>(y)] += 1.0;
                ++draws;
            }
        }
    }
    double stat = 0.0;
    for (std::size_t v = 1; v < spec.vocab_size; ++v) {
        const double expected = pmf[v] * static_cast<double>(draws);
        stat += std::pow(counts[v] - expected, 2) / expected;
    }
    CHECK(counts[0] == 0.0);
    const boost::math::chi_squared dist(static_cast<double>(spec.vocab_size - 2));
    const double p = boost::math::cdf(boost::math::complement(dist, stat));
    CHECK(p > 0.01);
}

TEST_CASE("generation is deterministic and splits are disjoint slices") {
    const auto spec = small_spec();
    const auto a = generate(spec, 30);
    CHECK(a == generate(spec, 30));
    const auto tail = generate(spec, 10, 20);
    CHECK(tail.utterances.front().id == "utt000020");
    for (std::size_t i = 0; i < 10; ++i) {
        CHECK(tail.utterances[i] == a.utterances[20 + i]);
    }
    auto other = spec;
    other.seed = 10;
    CHECK_FALSE(generate(other, 30) == a);
    for (const auto &u : a.utterances) {
        CHECK(u.features.cols == spec.feature_dim);
        CHECK(u.target.size() >= 1);
        CHECK(u.target.size() <= 9);
        CHECK(u.features.rows >= u.target.size());
        CHECK(u.features.rows <= 4 * u.target.size());
    }
}

TEST_CASE("spec validation") {
    auto s = small_spec();
    s.vocab_size = 1;
    CHECK_THROWS_AS(generate(s, 1), std::invalid_argument);
    s = small_spec();
    s.min_frames = 3;
    s.max_frames = 2;
    CHECK_THROWS_AS(generate(s, 1), std::invalid_argument);
    s = small_spec();
    s.noise = -1;
    CHECK_THROWS_AS(generate(s, 1), std::invalid_argument);
}

TEST_CASE("dataset files round-trip exactly") {
    const auto data = generate(small_spec(), 25);
    const auto path = temp_path("roundtrip.jsonl");
    write_dataset(path, data);
    CHECK(read_dataset(path) == data);

    const Dataset empty{12, 6, {}};
    write_dataset(path, empty);
    CHECK(read_dataset(path) == empty);
    std::filesystem::remove(path);
}

TEST_CASE("zero-byte file is an empty dataset") {
    const auto path = temp_path("empty.jsonl");
    { std::ofstream os(path); }
    const auto data = read_dataset(path);
    CHECK(data.size() == 0);
    std::filesystem::remove(path);
}

TEST_CASE("corrupt files fail with a message naming the file") {
    const auto path = temp_path("bad.jsonl");
    const auto name = path.string();
    auto expect_error = [&](const std::string &content, const std::string &needle) {
        {
            std::ofstream os(path, std::ios::trunc);
            os << content;
        }
        try {
            (void)read_dataset(path);
            FAIL("no error for: " << content);
        } catch (const std::runtime_error &e) {
            const std::string what = e.what();
            CHECK(what.find(name) != std::string::npos);
            CHECK_MESSAGE(what.find(needle) != std::string::npos, what);
        }
    };
    const std::string header =
        R"({"format":"tkit-dataset","version":1,"vocab_size":4,"feature_dim":2,"count":2})";
    const std::string utt = R"({"id":"a","target":[1,2],"features":[[0.5,1],[1,2]]})";
    expect_error(R"({"format":"other","version":1})" "\n", "bad magic");
    expect_error("not json\n", "malformed header");
    expect_error(header + "\n" + utt + "\n", "truncated");
    expect_error(header + "\n" + utt + "\n" + R"({"id":"b","target":[1],"features":[[1]]})" + "\n",
                 "expected feature_dim 2");
    expect_error(header + "\n" + utt + "\n" + R"({"id":"b","target":[4],"features":[[1,1]]})" + "\n",
                 "target label 4");
    expect_error(header + "\n" + utt + "\n" + R"({"id":"b","target":[1],"features":[]})" + "\n",
                 "no feature frames");
    expect_error(header + "\n" + utt + "\n{\"id\":", "malformed utterance");
    std::filesystem::remove(path);
    CHECK_THROWS_WITH_AS(read_dataset(path), doctest::Contains(name.c_str()), std::runtime_error);
}

TEST_CASE("edit distance and error rate") {
    using V = std::vector<int>;
    CHECK(edit_distance(V{}, V{}) == 0);
    CHECK(edit_distance(V{1, 2, 3}, V{}) == 3);
    CHECK(edit_distance(V{}, V{4, 5}) == 2);
    CHECK(edit_distance(V{1, 2, 3}, V{1, 3}) == 1);
    CHECK(edit_distance(V{1, 2, 3}, V{1, 4, 3}) == 1);
    CHECK(edit_distance(V{1, 2, 3, 4}, V{2, 1, 3, 5, 4}) == 3);
    CHECK(edit_distance(V{7, 8}, V{8, 7}) == 2);
    ErrorRate er;
    CHECK(er.rate() == 0.0);
    er.add(V{1, 2, 3}, V{1, 2});
    er.add(V{4}, V{5, 4});
    CHECK(er.errors == 2);
    CHECK(er.ref_tokens == 4);
    CHECK(er.rate() == doctest::Approx(0.5));
}

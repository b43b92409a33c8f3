#include <doctest.h>

#include <cmath>

#include "tkit/ctc.hpp"
#include "tkit/numerics.hpp"
#include "tkit/selftest.hpp"

using namespace tkit;

namespace {

double relative(double a, double b) { return std::abs(a - b) / std::max(std::abs(a), std::abs(b)); }

} // namespace

TEST_CASE("single frame forces the label") {
    Matrix logits(1, 4);
    logits.data = {0.3, -1.0, 2.0, 0.5};
    const TargetSeq target{{2}};
    const auto lp = log_softmax(logits.row(0));
    CHECK(ctc_loss(logits, target).loss == doctest::Approx(-lp[2]).epsilon(1e-14));
    CHECK(ctc_loss_bruteforce(logits, target) == doctest::Approx(-lp[2]).epsilon(1e-14));
}

TEST_CASE("uniform T=2 |V|=2 gives ln(4/3)") {
    const Matrix logits(2, 2);
    const TargetSeq target{{1}};
    CHECK(ctc_loss(logits, target).loss == doctest::Approx(std::log(4.0 / 3.0)).epsilon(1e-14));
    CHECK(ctc_loss_bruteforce(logits, target) == doctest::Approx(std::log(4.0 / 3.0)).epsilon(1e-14));
}

TEST_CASE("forward-backward matches string enumeration") {
    SeededRng rng(7, 0);
    for (int i = 0; i < 100; ++i) {
        const auto inst = random_ctc_instance(rng, 5, 4, 1e6);
        CHECK(relative(ctc_loss(inst.logits, inst.target).loss,
                       ctc_loss_bruteforce(inst.logits, inst.target)) <= 1e-9);
    }
}

TEST_CASE("repeated labels need a separating blank") {
    const TargetSeq rep{{1, 1}};
    CHECK_FALSE(ctc_feasible(2, rep));
    CHECK(ctc_feasible(3, rep));
    CHECK(ctc_feasible(2, TargetSeq{{1, 2}}));
    CHECK_THROWS_AS(ctc_loss(Matrix(2, 3), rep), std::invalid_argument);
    Matrix three(3, 3);
    CHECK(relative(ctc_loss(three, rep).loss, ctc_loss_bruteforce(three, rep)) <= 1e-12);
}

TEST_CASE("gradient agrees with finite differences") {
    SeededRng rng(8, 0);
    for (int i = 0; i < 30; ++i) {
        const auto inst = random_ctc_instance(rng, 5, 5, 1e6, 1.0);
        CHECK(ctc_grad_check(inst.logits, inst.target, 1e-5) <= 1e-4);
    }
}

TEST_CASE("posterior") {
    const auto uniform = ctc_posterior(Matrix(3, 5, 0.7));
    for (double p : uniform.probs.data) {
        CHECK(p == doctest::Approx(0.2).epsilon(1e-14));
    }
    SeededRng rng(9, 0);
    Matrix logits(6, 7);
    for (auto &x : logits.data) {
        x = 3.0 * rng.normal();
    }
    const auto post = ctc_posterior(logits);
    for (std::size_t t = 0; t < post.frames(); ++t) {
        double sum = 0.0;
        for (double p : post.probs.row(t)) {
            sum += p;
        }
        CHECK(std::abs(sum - 1.0) <= 1e-10);
    }
    Matrix peaked(1, 4);
    peaked(0, 2) = 20.0;
    CHECK(ctc_posterior(peaked).probs(0, 2) >= 1.0 - 1e-8);
}

TEST_CASE("input validation") {
    CHECK_THROWS_AS(ctc_loss(Matrix(0, 3), TargetSeq{}), std::invalid_argument);
    CHECK_THROWS_AS(ctc_loss(Matrix(2, 3), TargetSeq{{0}}), std::invalid_argument);
    CHECK_THROWS_AS(ctc_loss(Matrix(2, 3), TargetSeq{{3}}), std::invalid_argument);
    CHECK_THROWS_AS(ctc_loss(Matrix(1, 3), TargetSeq{{1, 2}}), std::invalid_argument);
    CHECK_THROWS_AS(ctc_loss_bruteforce(Matrix(8, 10), TargetSeq{{1}}), std::invalid_argument);
}

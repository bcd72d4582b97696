#include <catch_amalgamated.hpp>

#include <cmath>

#include "cbma/bma.hpp"

using Catch::Approx;

namespace {

Eigen::VectorXd vec(std::initializer_list<double> v) {
    Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
    Eigen::Index i = 0;
    for (double x : v) out[i++] = x;
    return out;
}

} // namespace

TEST_CASE("single model gets posterior probability one") {
    const auto mp = cbma::model_posterior(vec({-12.3}), vec({1.0}));
    CHECK(mp.probs.size() == 1);
    CHECK(mp.probs[0] == Approx(1.0));
}

TEST_CASE("equal evidences and priors give uniform probabilities") {
    const auto mp = cbma::model_posterior(vec({-5.0, -5.0, -5.0}), vec({1.0, 1.0, 1.0}));
    for (Eigen::Index k = 0; k < 3; ++k) CHECK(mp.probs[k] == Approx(1.0 / 3.0));
}

TEST_CASE("evidence ratio 3:1 with equal priors gives 0.75 / 0.25") {
    const auto mp = cbma::model_posterior(vec({std::log(3.0), 0.0}), vec({0.5, 0.5}));
    CHECK(mp.probs[0] == Approx(0.75));
    CHECK(mp.probs[1] == Approx(0.25));
}

TEST_CASE("prior weights tilt the posterior") {
    const auto mp = cbma::model_posterior(vec({0.0, 0.0}), vec({2.0, 1.0}));
    CHECK(mp.probs[0] == Approx(2.0 / 3.0));
    CHECK(mp.probs[1] == Approx(1.0 / 3.0));
}

TEST_CASE("posterior is invariant to a common evidence shift") {
    const auto a = cbma::model_posterior(vec({-3.0, -7.0, -1.5}), vec({0.2, 0.3, 0.5}));
    const auto b = cbma::model_posterior(vec({-3.0 + 500.0, -7.0 + 500.0, -1.5 + 500.0}),
                                         vec({0.2, 0.3, 0.5}));
    CHECK((a.probs - b.probs).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("posterior survives extreme evidence gaps") {
    const auto mp = cbma::model_posterior(vec({0.0, -2000.0}), vec({0.5, 0.5}));
    CHECK(mp.probs[0] == Approx(1.0));
    CHECK(mp.probs[1] == 0.0);
    CHECK(mp.probs.sum() == Approx(1.0));
}

TEST_CASE("higher evidence never gets lower probability") {
    const auto mp = cbma::model_posterior(vec({-4.0, -2.0, -9.0}), vec({1.0, 1.0, 1.0}));
    CHECK(mp.probs[1] > mp.probs[0]);
    CHECK(mp.probs[0] > mp.probs[2]);
}

TEST_CASE("invalid posterior inputs are rejected") {
    CHECK_THROWS_AS(cbma::model_posterior(vec({0.0, 0.0}), vec({1.0})), cbma::config_error);
    CHECK_THROWS_AS(cbma::model_posterior(vec({0.0, 0.0}), vec({1.0, 0.0})), cbma::config_error);
    CHECK_THROWS_AS(cbma::model_posterior(vec({std::nan(""), 0.0}), vec({1.0, 1.0})),
                    cbma::numeric_error);
    CHECK_THROWS_AS(cbma::model_posterior(vec({cbma::kNegInf, cbma::kNegInf}), vec({1.0, 1.0})),
                    cbma::degenerate_evidence_error);
}

TEST_CASE("mixture predictive is the probability-weighted density") {
    const auto mp = cbma::model_posterior(vec({std::log(3.0), 0.0}), vec({0.5, 0.5}));
    // 0.75 * 0.1807 + 0.25 * 0.04 = 0.145525
    CHECK(cbma::bma_mixture_predictive(mp, vec({0.1807, 0.04})) == Approx(0.145525));
    CHECK(cbma::bma_mixture_predictive(mp, vec({0.0, 0.0})) == 0.0);
}

TEST_CASE("mixture predictive validates its inputs") {
    const auto mp = cbma::model_posterior(vec({0.0, 0.0}), vec({1.0, 1.0}));
    CHECK_THROWS_AS(cbma::bma_mixture_predictive(mp, vec({0.1})), cbma::config_error);
    CHECK_THROWS_AS(cbma::bma_mixture_predictive(mp, vec({-0.1, 0.2})), cbma::numeric_error);
}

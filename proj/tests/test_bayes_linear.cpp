#include <catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "cbma/basis.hpp"
#include "cbma/bayes_linear.hpp"
#include "cbma/metropolis.hpp"
#include "cbma/numeric.hpp"

using Catch::Approx;

namespace {

cbma::Dataset one_column(std::initializer_list<double> xs, std::initializer_list<double> ys) {
    cbma::Dataset d;
    d.x.resize(static_cast<Eigen::Index>(xs.size()), 1);
    d.y.resize(static_cast<Eigen::Index>(ys.size()));
    Eigen::Index i = 0;
    for (double v : xs) d.x(i++, 0) = v;
    i = 0;
    for (double v : ys) d.y[i++] = v;
    return d;
}

Eigen::VectorXd vec(std::initializer_list<double> v) {
    Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
    Eigen::Index i = 0;
    for (double x : v) out[i++] = x;
    return out;
}

} // namespace

TEST_CASE("log_sum_exp basics") {
    CHECK(cbma::log_sum_exp(std::log(2.0), std::log(3.0)) == Approx(std::log(5.0)));
    CHECK(cbma::log_sum_exp(vec({-1000.0, -1000.0})) == Approx(-1000.0 + std::log(2.0)));
    CHECK(cbma::log_sum_exp(vec({cbma::kNegInf, cbma::kNegInf})) == cbma::kNegInf);
    CHECK(cbma::log_sum_exp(vec({cbma::kNegInf, 0.0})) == Approx(0.0));
}

TEST_CASE("gaussian_logpdf matches the closed form") {
    CHECK(cbma::gaussian_logpdf(0.0, 0.0, 1.0) == Approx(-0.5 * cbma::kLogTwoPi));
    CHECK(std::exp(cbma::gaussian_logpdf(1.0, 0.0, 1.0)) ==
          Approx(std::exp(-0.5) / std::sqrt(2.0 * M_PI)));
}

TEST_CASE("split_seed is deterministic and spreads indices") {
    CHECK(cbma::split_seed(42, 0) == cbma::split_seed(42, 0));
    CHECK(cbma::split_seed(42, 0) != cbma::split_seed(42, 1));
    CHECK(cbma::split_seed(42, 0) != cbma::split_seed(43, 0));
}

TEST_CASE("summarize computes mean, se and quartiles") {
    const auto s = cbma::summarize({1.0, 2.0, 3.0, 4.0, 5.0});
    CHECK(s.mean == Approx(3.0));
    CHECK(s.median == Approx(3.0));
    CHECK(s.q1 == Approx(2.0));
    CHECK(s.q3 == Approx(4.0));
    CHECK(s.iqr == Approx(2.0));
    // sd = sqrt(2.5), se = sd / sqrt(5)
    CHECK(s.se == Approx(std::sqrt(2.5) / std::sqrt(5.0)));
}

TEST_CASE("polynomial basis expands powers of the first covariate") {
    const auto d = one_column({2.0, 3.0}, {0.0, 0.0});
    const auto design = cbma::expand_basis(d, cbma::BasisSpec::polynomial(2)).matrix;
    CHECK(design.rows() == 2);
    CHECK(design.cols() == 3);
    CHECK(design(0, 0) == 1.0);
    CHECK(design(0, 1) == 2.0);
    CHECK(design(0, 2) == 4.0);
    CHECK(design(1, 2) == 9.0);

    const auto sq = cbma::expand_basis(d, cbma::BasisSpec::powers({2})).matrix;
    CHECK(sq.cols() == 2);
    CHECK(sq(1, 0) == 1.0);
    CHECK(sq(1, 1) == 9.0);
}

TEST_CASE("hermite-weighted basis centers and damps by the training spread") {
    const auto d = one_column({0.0, 2.0}, {0.0, 0.0});
    const auto design = cbma::expand_basis(d, cbma::BasisSpec::hermite(2));
    // center 1, scale sqrt(2): centered values -1, 1; weight exp(-1/4).
    CHECK(design.stats.center == Approx(1.0));
    CHECK(design.stats.scale == Approx(std::sqrt(2.0)));
    const double w = std::exp(-0.25);
    CHECK(design.matrix(0, 0) == Approx(w));
    CHECK(design.matrix(0, 1) == Approx(-w));
    CHECK(design.matrix(1, 0) == Approx(w));
    CHECK(design.matrix(1, 1) == Approx(w));
}

TEST_CASE("hermite expansion reuses frozen training statistics at test time") {
    const auto train = one_column({0.0, 2.0}, {0.0, 0.0});
    const auto train_design = cbma::expand_basis(train, cbma::BasisSpec::hermite(2));
    const auto test = one_column({5.0}, {0.0});
    const auto test_design =
        cbma::expand_basis(test, cbma::BasisSpec::hermite(2), train_design.stats);
    // centered 4, weight exp(-16/4)
    CHECK(test_design.matrix(0, 0) == Approx(std::exp(-4.0)));
    CHECK(test_design.matrix(0, 1) == Approx(4.0 * std::exp(-4.0)));
}

TEST_CASE("constant covariate makes the hermite basis degenerate") {
    const auto d = one_column({1.0, 1.0, 1.0}, {0.0, 0.0, 0.0});
    CHECK_THROWS_AS(cbma::expand_basis(d, cbma::BasisSpec::hermite(2)),
                    cbma::degenerate_basis_error);
}

TEST_CASE("conjugate posterior matches the hand-computed one-point case") {
    // y = 2, unit design, prior N(0,1), noise sd 1:
    // precision 2, mean 1, variance 1/2.
    Eigen::MatrixXd design(1, 1);
    design << 1.0;
    const auto spec = cbma::ModelSpec::make("m", cbma::BasisSpec::raw({}, true), vec({0.0}),
                                            vec({1.0}), cbma::NoiseSpec::known_sd(1.0));
    const auto post = cbma::conjugate_posterior(design, vec({2.0}), spec);
    CHECK(post.mean[0] == Approx(1.0));
    CHECK(post.cov(0, 0) == Approx(0.5));
}

TEST_CASE("log marginal likelihood matches N(y; 0, 2) at one point") {
    Eigen::MatrixXd design(1, 1);
    design << 1.0;
    const auto spec = cbma::ModelSpec::make("m", cbma::BasisSpec::raw({}, true), vec({0.0}),
                                            vec({1.0}), cbma::NoiseSpec::known_sd(1.0));
    const double lm = cbma::log_marginal_likelihood_conjugate(design, vec({2.0}), spec);
    CHECK(lm == Approx(cbma::gaussian_logpdf(2.0, 0.0, std::sqrt(2.0))));
    CHECK(lm == Approx(-2.2655121234846456));
    // At y = 0 the marginal is N(0; 0, 2) = 1/sqrt(4 pi).
    CHECK(cbma::log_marginal_likelihood_conjugate(design, vec({0.0}), spec) ==
          Approx(std::log(1.0 / std::sqrt(4.0 * M_PI))));
}

TEST_CASE("log marginal of the empty dataset is zero") {
    Eigen::MatrixXd design(0, 1);
    const auto spec = cbma::ModelSpec::make("m", cbma::BasisSpec::raw({}, true), vec({0.0}),
                                            vec({1.0}), cbma::NoiseSpec::known_sd(1.0));
    CHECK(cbma::log_marginal_likelihood_conjugate(design, Eigen::VectorXd(), spec) == 0.0);
}

TEST_CASE("sequential evidence identity holds on random data") {
    std::mt19937_64 rng(2024);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (int trial = 0; trial < 20; ++trial) {
        const Eigen::Index n = 10;
        Eigen::MatrixXd design(n + 1, 2);
        Eigen::VectorXd y(n + 1);
        for (Eigen::Index i = 0; i <= n; ++i) {
            design(i, 0) = 1.0;
            design(i, 1) = normal(rng);
            y[i] = 0.5 + design(i, 1) + 0.3 * normal(rng);
        }
        const auto spec =
            cbma::ModelSpec::make("m", cbma::BasisSpec::raw({0}), vec({0.0, 0.0}),
                                  vec({2.0, 2.0}), cbma::NoiseSpec::known_sd(0.3));
        const double lm_n =
            cbma::log_marginal_likelihood_conjugate(design.topRows(n), y.head(n), spec);
        const double lm_n1 = cbma::log_marginal_likelihood_conjugate(design, y, spec);
        const auto post = cbma::conjugate_posterior(design.topRows(n), y.head(n), spec);
        const double pred = cbma::posterior_predictive_logdensity_exact(
            design.row(n).transpose(), y[n], post, 0.3);
        CHECK(lm_n1 == Approx(lm_n + pred).epsilon(0).margin(1e-9));
    }
}

TEST_CASE("ConjugateFit add_pair reproduces a refit on the extended data") {
    std::mt19937_64 rng(7);
    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::MatrixXd design(13, 2);
    Eigen::VectorXd y(13);
    for (Eigen::Index i = 0; i < 13; ++i) {
        design(i, 0) = 1.0;
        design(i, 1) = normal(rng);
        y[i] = 1.0 - design(i, 1) + 0.5 * normal(rng);
    }
    const auto spec = cbma::ModelSpec::make("m", cbma::BasisSpec::raw({0}), vec({0.0, 0.0}),
                                            vec({3.0, 3.0}), cbma::NoiseSpec::known_sd(0.5));
    const auto base = cbma::ConjugateFit::fit(design.topRows(12), y.head(12), spec);
    const auto updated = base.add_pair(design.row(12).transpose(), y[12]);
    const auto refit = cbma::ConjugateFit::fit(design, y, spec);
    CHECK(updated.log_evidence == Approx(refit.log_evidence).epsilon(0).margin(1e-9));
    CHECK((updated.post.mean - refit.post.mean).norm() < 1e-9);
    CHECK((updated.post.cov - refit.post.cov).norm() < 1e-9);
}

TEST_CASE("huge prior variance recovers least squares") {
    std::mt19937_64 rng(99);
    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::MatrixXd design(50, 2);
    Eigen::VectorXd y(50);
    for (Eigen::Index i = 0; i < 50; ++i) {
        design(i, 0) = 1.0;
        design(i, 1) = normal(rng);
        y[i] = 2.0 + 3.0 * design(i, 1) + 0.1 * normal(rng);
    }
    const auto spec = cbma::ModelSpec::make("m", cbma::BasisSpec::raw({0}), vec({0.0, 0.0}),
                                            vec({1e6, 1e6}), cbma::NoiseSpec::known_sd(0.1));
    const auto post = cbma::conjugate_posterior(design, y, spec);
    const Eigen::VectorXd ols = design.colPivHouseholderQr().solve(y);
    CHECK((post.mean - ols).norm() < 1e-6);
}

TEST_CASE("posterior predictive density integrates to one") {
    Eigen::MatrixXd design(1, 1);
    design << 1.0;
    const auto spec = cbma::ModelSpec::make("m", cbma::BasisSpec::raw({}, true), vec({0.0}),
                                            vec({1.0}), cbma::NoiseSpec::known_sd(1.0));
    const auto post = cbma::conjugate_posterior(design, vec({2.0}), spec);
    // With no data, mean 0, cov 1: predictive N(0, 2), density at 0 is 1/sqrt(4 pi).
    cbma::GaussianPosterior prior{vec({0.0}), Eigen::MatrixXd::Identity(1, 1)};
    CHECK(cbma::posterior_predictive_density_exact(vec({1.0}), 0.0, prior, 1.0) ==
          Approx(1.0 / std::sqrt(4.0 * M_PI)));

    double mass = 0.0;
    const double h = 0.01;
    for (double yv = -12.0; yv <= 12.0; yv += h)
        mass += h * cbma::posterior_predictive_density_exact(vec({1.0}), yv, post, 1.0);
    CHECK(mass == Approx(1.0).epsilon(1e-4));
}

TEST_CASE("conjugate sampling concentrates on the exact posterior") {
    Eigen::MatrixXd design(1, 1);
    design << 1.0;
    const auto spec = cbma::ModelSpec::make("m", cbma::BasisSpec::raw({}, true), vec({0.0}),
                                            vec({1.0}), cbma::NoiseSpec::known_sd(1.0));
    const auto draws = cbma::sample_posterior_conjugate(design, vec({2.0}), spec, 200000, 5);
    const double mean = draws.coefs.col(0).mean();
    const double var =
        (draws.coefs.col(0).array() - mean).square().sum() / (draws.coefs.rows() - 1.0);
    const double se = std::sqrt(0.5 / 200000.0);
    CHECK(std::abs(mean - 1.0) < 4.0 * se);
    CHECK(var == Approx(0.5).epsilon(0.02));
    CHECK(draws.noise_sd[0] == 1.0);
    CHECK(draws.log_marginal == Approx(-2.2655121234846456));
}

TEST_CASE("mh_accept follows the Metropolis rule") {
    CHECK(cbma::mh_accept(0.5, 0.999));
    CHECK(cbma::mh_accept(0.0, 0.999));
    CHECK(cbma::mh_accept(-1.0, std::exp(-2.0)));       // log u = -2 < -1
    CHECK_FALSE(cbma::mh_accept(-1.0, std::exp(-0.5))); // log u = -0.5 > -1
}

TEST_CASE("Laplace evidence is exact for the Gaussian (known sd) posterior") {
    std::mt19937_64 rng(31);
    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::MatrixXd design(20, 2);
    Eigen::VectorXd y(20);
    for (Eigen::Index i = 0; i < 20; ++i) {
        design(i, 0) = 1.0;
        design(i, 1) = normal(rng);
        y[i] = 0.3 + 0.8 * design(i, 1) + 0.4 * normal(rng);
    }
    const auto spec = cbma::ModelSpec::make("m", cbma::BasisSpec::raw({0}), vec({0.0, 0.0}),
                                            vec({2.0, 2.0}), cbma::NoiseSpec::known_sd(0.4));
    const double exact = cbma::log_marginal_likelihood_conjugate(design, y, spec);
    const double laplace = cbma::log_marginal_likelihood_laplace(design, y, spec);
    CHECK(laplace == Approx(exact).epsilon(0).margin(1e-5));
}

TEST_CASE("Metropolis sampling is deterministic under a fixed seed and roughly calibrated") {
    std::mt19937_64 rng(11);
    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::MatrixXd design(40, 2);
    Eigen::VectorXd y(40);
    for (Eigen::Index i = 0; i < 40; ++i) {
        design(i, 0) = 1.0;
        design(i, 1) = normal(rng);
        y[i] = 1.0 + 0.5 * design(i, 1) + 0.7 * normal(rng);
    }
    const auto spec = cbma::ModelSpec::iso("m", cbma::BasisSpec::raw({0}), 5.0,
                                           cbma::NoiseSpec::half_normal(1.0));
    const auto a = cbma::sample_posterior(design, y, spec, 2000, 123);
    const auto b = cbma::sample_posterior(design, y, spec, 2000, 123);
    CHECK(a.coefs == b.coefs);
    CHECK(a.noise_sd == b.noise_sd);
    CHECK(a.method == cbma::PosteriorDraws::Method::MetropolisLaplace);
    CHECK(a.acceptance_rate > 0.05);
    CHECK(a.acceptance_rate < 0.8);
    CHECK(a.warning.empty());
    // Posterior means should land near the generating values.
    CHECK(std::abs(a.coefs.col(0).mean() - 1.0) < 0.5);
    CHECK(std::abs(a.coefs.col(1).mean() - 0.5) < 0.5);
    CHECK(std::abs(a.noise_sd.mean() - 0.7) < 0.3);
}

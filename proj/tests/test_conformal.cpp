#include <catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "cbma/basis.hpp"
#include "cbma/conformal.hpp"
#include "cbma/engine.hpp"

using Catch::Approx;

namespace {

Eigen::VectorXd vec(std::initializer_list<double> v) {
    Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
    Eigen::Index i = 0;
    for (double x : v) out[i++] = x;
    return out;
}

struct Problem {
    Eigen::MatrixXd design;
    Eigen::VectorXd y;
    cbma::ModelSpec spec;
};

Problem make_problem(std::uint64_t seed, Eigen::Index n = 12) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    Problem p{Eigen::MatrixXd(n, 2), Eigen::VectorXd(n),
              cbma::ModelSpec::make("m", cbma::BasisSpec::raw({0}), vec({0.0, 0.0}),
                                    vec({2.0, 2.0}), cbma::NoiseSpec::known_sd(0.5))};
    for (Eigen::Index i = 0; i < n; ++i) {
        p.design(i, 0) = 1.0;
        p.design(i, 1) = normal(rng);
        p.y[i] = 0.5 + p.design(i, 1) + 0.5 * normal(rng);
    }
    return p;
}

} // namespace

TEST_CASE("conformal rank counts non-strictly and includes the candidate") {
    CHECK(cbma::conformal_rank(vec({1.0, 2.0, 3.0, 2.5})) == Approx(0.75));
    CHECK(cbma::conformal_rank(vec({2.0, 3.0, 1.0})) == Approx(1.0 / 3.0));
    CHECK(cbma::conformal_rank(vec({1.0, 1.0, 1.0, 1.0})) == Approx(1.0)); // all tied
    CHECK(cbma::conformal_rank(vec({9.0, 5.0})) == Approx(0.5));
    CHECK(cbma::conformal_rank(vec({5.0, 9.0})) == Approx(1.0));
    CHECK_THROWS_AS(cbma::conformal_rank(vec({1.0})), cbma::numeric_error);
}

TEST_CASE("rank is invariant under a strictly increasing score transform") {
    const auto scores = vec({0.3, 1.7, 0.9, 2.2, 1.1});
    Eigen::VectorXd transformed = scores.array().unaryExpr([](double s) {
        return std::log1p(s);
    });
    CHECK(cbma::conformal_rank(scores) == cbma::conformal_rank(transformed));
}

TEST_CASE("rank is invariant under permutation of the training scores") {
    std::mt19937_64 rng(5);
    Eigen::VectorXd scores(21);
    for (Eigen::Index i = 0; i < 21; ++i)
        scores[i] = std::generate_canonical<double, 53>(rng);
    const double base = cbma::conformal_rank(scores);
    std::vector<double> head(scores.data(), scores.data() + 20);
    for (int trial = 0; trial < 10; ++trial) {
        std::shuffle(head.begin(), head.end(), rng);
        Eigen::VectorXd permuted(21);
        for (size_t i = 0; i < head.size(); ++i) permuted[static_cast<Eigen::Index>(i)] = head[i];
        permuted[20] = scores[20];
        CHECK(cbma::conformal_rank(permuted) == base);
    }
}

TEST_CASE("set inclusion requires the rank strictly above alpha") {
    const auto grid = cbma::LabelGrid::uniform(0.0, 2.0, 3);
    const auto set = cbma::build_set({0.6, 0.5, 0.4}, 0.5, grid);
    CHECK(set.included == std::vector<std::uint8_t>{1, 0, 0});
    CHECK(set.count() == 1);
    CHECK(set.length() == Approx(1.0));
    CHECK_FALSE(set.empty_set);

    const auto empty = cbma::build_set({0.1, 0.2, 0.3}, 0.5, grid);
    CHECK(empty.empty_set);
    CHECK(empty.length() == 0.0);
}

TEST_CASE("degenerate grid points are excluded and counted") {
    const auto grid = cbma::LabelGrid::uniform(0.0, 2.0, 3);
    const auto set = cbma::build_set({0.9, 0.9, 0.9}, 0.5, grid, {0, 1, 0});
    CHECK(set.included == std::vector<std::uint8_t>{1, 0, 1});
    CHECK(set.degenerate_points == 1);
}

TEST_CASE("label grids are uniform and snap to the nearest point") {
    const auto grid = cbma::LabelGrid::uniform(-1.0, 1.0, 5);
    CHECK(grid.spacing == Approx(0.5));
    CHECK(grid.values[0] == -1.0);
    CHECK(grid.values[4] == 1.0);
    CHECK(grid.nearest(0.1) == 2);
    CHECK(grid.nearest(0.26) == 3);
    CHECK(grid.nearest(-100.0) == 0);
    CHECK(grid.nearest(100.0) == 4);

    const auto from_train = cbma::LabelGrid::from_training(vec({0.0, 1.0}), 0.5, 11);
    CHECK(from_train.values[0] == Approx(-0.5));
    CHECK(from_train.values[10] == Approx(1.5));

    CHECK_THROWS_AS(cbma::LabelGrid::uniform(0.0, 1.0, 1), cbma::config_error);
    CHECK_THROWS_AS(cbma::LabelGrid::uniform(1.0, 0.0, 5), cbma::config_error);
}

TEST_CASE("coverage is decided at the nearest grid point") {
    const auto grid = cbma::LabelGrid::uniform(0.0, 2.0, 3);
    auto set = cbma::build_set({0.9, 0.1, 0.9}, 0.5, grid);
    CHECK(set.covers(0.2));
    CHECK_FALSE(set.covers(1.1));
    CHECK(set.covers(1.9));
}

TEST_CASE("single-draw importance weights collapse to the plug-in likelihood") {
    cbma::PosteriorDraws draws;
    draws.coefs = Eigen::MatrixXd::Zero(1, 2);
    draws.coefs << 1.0, 2.0; // beta = (1, 2)
    draws.noise_sd = vec({0.5});
    Eigen::MatrixXd design(2, 2);
    design << 1.0, 0.0, 1.0, 1.0;
    const auto y_train = vec({1.1, 2.9});
    const auto scores =
        cbma::aoi_scores_one_model(draws, design, y_train, vec({1.0, 2.0}), 5.2);
    CHECK(scores[0] == Approx(std::exp(cbma::gaussian_logpdf(1.1, 1.0, 0.5))));
    CHECK(scores[1] == Approx(std::exp(cbma::gaussian_logpdf(2.9, 3.0, 0.5))));
    CHECK(scores[2] == Approx(std::exp(cbma::gaussian_logpdf(5.2, 5.0, 0.5))));
}

TEST_CASE("far-away candidates make every importance weight underflow") {
    cbma::PosteriorDraws draws;
    draws.coefs = Eigen::MatrixXd::Zero(3, 1);
    draws.noise_sd = vec({1.0, 1.0, 1.0});
    Eigen::MatrixXd design(2, 1);
    design << 1.0, 1.0;
    CHECK_THROWS_AS(
        cbma::aoi_scores_one_model(draws, design, vec({0.0, 0.1}), vec({1.0}), 1e6),
        cbma::degenerate_weight_error);
}

TEST_CASE("grid scores agree with the per-candidate path") {
    const auto p = make_problem(17);
    const auto draws =
        cbma::sample_posterior_conjugate(p.design, p.y, p.spec, 500, 3);
    const auto grid = cbma::LabelGrid::from_training(p.y, 0.5, 25);
    const auto test_row = vec({1.0, 0.4});
    const auto batched = cbma::aoi_scores_grid(draws, p.design, p.y, test_row, grid);
    for (Eigen::Index g = 0; g < grid.size(); g += 6) {
        const auto single =
            cbma::aoi_log_scores_one_model(draws, p.design, p.y, test_row, grid.values[g]);
        CHECK((batched.log_scores.col(g) - single.log_scores).cwiseAbs().maxCoeff() < 1e-9);
        CHECK(batched.log_mean_weight[g] ==
              Approx(single.log_mean_weight).epsilon(0).margin(1e-9));
    }
}

TEST_CASE("aggregation weights follow posterior times mean importance weight") {
    Eigen::MatrixXd scores(2, 2);
    scores << 1.0, 2.0, 1.0, 2.0;
    const auto agg = cbma::cbma_aggregate(scores, vec({0.5, 0.5}), vec({3.0, 1.0}));
    CHECK(agg.q[0] == Approx(0.75));
    CHECK(agg.q[1] == Approx(0.25));
    CHECK(agg.scores[0] == Approx(0.75 * 1.0 + 0.25 * 2.0));
    CHECK(agg.scores[1] == Approx(1.25));
}

TEST_CASE("aggregation weights always form a probability vector") {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 25; ++trial) {
        const Eigen::Index k = 1 + static_cast<Eigen::Index>(rng() % 5);
        Eigen::MatrixXd log_scores = Eigen::MatrixXd::Random(4, k) * 3.0;
        Eigen::VectorXd log_mp = Eigen::VectorXd::Random(k) * 2.0;
        Eigen::VectorXd log_mw = Eigen::VectorXd::Random(k) * 5.0;
        const auto agg = cbma::cbma_aggregate_log(log_scores, log_mp, log_mw);
        CHECK(agg.q.minCoeff() >= 0.0);
        CHECK(agg.q.sum() == Approx(1.0));
    }
}

TEST_CASE("one-model aggregation is the identity") {
    Eigen::MatrixXd log_scores(3, 1);
    log_scores << -1.0, -2.0, -0.5;
    const auto agg = cbma::cbma_aggregate_log(log_scores, vec({0.0}), vec({-4.2}));
    CHECK(agg.q[0] == Approx(1.0));
    CHECK((agg.log_scores - log_scores.col(0)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("duplicating a model does not change the aggregated scores") {
    Eigen::MatrixXd one(3, 1);
    one << -1.0, -2.0, -0.5;
    Eigen::MatrixXd two(3, 2);
    two << one, one;
    const auto a = cbma::cbma_aggregate_log(one, vec({std::log(1.0)}), vec({-4.2}));
    const auto b =
        cbma::cbma_aggregate_log(two, vec({std::log(0.5), std::log(0.5)}), vec({-4.2, -4.2}));
    CHECK((a.log_scores - b.log_scores).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(b.q[0] == Approx(0.5));
}

TEST_CASE("exact add-one-in scores match the closed-form oracle for one model") {
    const auto p = make_problem(23);
    cbma::ExactModelInput input{cbma::ConjugateFit::fit(p.design, p.y, p.spec), p.design,
                                vec({1.0, 0.7})};
    for (double y : {-1.0, 0.3, 1.8}) {
        const Eigen::VectorXd direct =
            cbma::exact_aoi_log_scores(input, p.y, y).array().exp();
        const Eigen::VectorXd oracle = cbma::exact_cbma_score_oracle(
            std::span<const cbma::ExactModelInput>(&input, 1), p.y, vec({1.0}), y);
        CHECK((direct - oracle).cwiseAbs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("sampled scores converge to the exact conjugate scores") {
    const auto p = make_problem(41);
    cbma::ExactModelInput input{cbma::ConjugateFit::fit(p.design, p.y, p.spec), p.design,
                                vec({1.0, 0.7})};
    const double y = 1.2;
    const Eigen::VectorXd exact = cbma::exact_aoi_log_scores(input, p.y, y);
    const auto draws = cbma::sample_posterior_conjugate(p.design, p.y, p.spec, 100000, 9);
    const auto sampled =
        cbma::aoi_log_scores_one_model(draws, p.design, p.y, vec({1.0, 0.7}), y);
    CHECK((sampled.log_scores - exact).cwiseAbs().maxCoeff() < 0.05);
}

TEST_CASE("full conformal construction is consistent across paths and models") {
    const auto a = make_problem(77, 16);
    auto spec2 = cbma::ModelSpec::make("m2", cbma::BasisSpec::raw({}, true), vec({0.0}),
                                       vec({2.0}), cbma::NoiseSpec::known_sd(0.5));
    Eigen::MatrixXd design2 = Eigen::MatrixXd::Ones(16, 1);

    std::vector<cbma::ExactModelInput> inputs;
    inputs.push_back({cbma::ConjugateFit::fit(a.design, a.y, a.spec), a.design, vec({1.0, 0.2})});
    inputs.push_back({cbma::ConjugateFit::fit(design2, a.y, spec2), design2, vec({1.0})});
    const auto mp = cbma::model_posterior(
        vec({inputs[0].fit.log_evidence, inputs[1].fit.log_evidence}), vec({0.5, 0.5}));
    const auto grid = cbma::LabelGrid::from_training(a.y, 0.5, 40);
    const auto exact = cbma::full_conformal_set_exact(inputs, a.y, mp, grid, 0.2);

    CHECK(exact.per_model.size() == 2);
    CHECK(exact.q.rows() == 40);
    for (Eigen::Index g = 0; g < 40; ++g) CHECK(exact.q.row(g).sum() == Approx(1.0));
    CHECK(exact.cbma.count() > 0);

    // The grid point nearest the training median should be included at alpha 0.2.
    std::vector<double> sorted(a.y.data(), a.y.data() + a.y.size());
    std::sort(sorted.begin(), sorted.end());
    CHECK(exact.cbma.covers(sorted[8]));

    // Lower alpha can only grow the set.
    const auto wide = cbma::full_conformal_set_exact(inputs, a.y, mp, grid, 0.05);
    for (size_t g = 0; g < wide.cbma.included.size(); ++g)
        if (exact.cbma.included[g]) CHECK(wide.cbma.included[g]);
}

TEST_CASE("rank_at matches the gridded exact rank") {
    const auto p = make_problem(13, 10);
    cbma::Dataset train;
    train.x = p.design.col(1);
    train.y = p.y;
    cbma::ModelSpace space({p.spec});
    cbma::EngineConfig config;
    config.exact = true;
    const cbma::ConformalBmaEngine engine(train, space, config);
    const auto grid = cbma::LabelGrid::from_training(p.y, 0.5, 30);
    const auto sets = engine.predict(vec({0.7}), grid, 0.2);
    for (Eigen::Index g = 0; g < grid.size(); g += 7) {
        const double rank = engine.rank_at(vec({0.7}), grid.values[g]);
        const bool in_set = sets.cbma.included[static_cast<size_t>(g)] != 0;
        CHECK(in_set == (rank > 0.2));
    }
}

#ifndef CBMA_CONFORMAL_HPP
#define CBMA_CONFORMAL_HPP

#include <Eigen/Dense>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <ostream>
#include <span>
#include <vector>

#include "cbma/bayes_linear.hpp"
#include "cbma/bma.hpp"
#include "cbma/errors.hpp"
#include "cbma/numeric.hpp"

namespace cbma {

// Importance weights smaller than exp(kLogWeightFloor) for every draw make a
// candidate label degenerate.
inline constexpr double kLogWeightFloor = -700.0;

// Uniformly spaced candidate labels.
struct LabelGrid {
    Eigen::VectorXd values;
    double spacing = 0.0;

    Eigen::Index size() const { return values.size(); }

    static LabelGrid uniform(double lo, double hi, Eigen::Index points) {
        if (points < 2) throw config_error("label grid: need G >= 2");
        if (!(hi > lo)) throw config_error("label grid: need hi > lo");
        LabelGrid g;
        g.values = Eigen::VectorXd::LinSpaced(points, lo, hi);
        g.spacing = (hi - lo) / static_cast<double>(points - 1);
        return g;
    }

    // Default grid: the training response range expanded by `expand` times the
    // range on each side.
    static LabelGrid from_training(const Eigen::VectorXd& y_train, double expand = 0.5,
                                   Eigen::Index points = 200) {
        const double lo = y_train.minCoeff();
        const double hi = y_train.maxCoeff();
        const double range = std::max(hi - lo, 1e-8);
        return uniform(lo - expand * range, hi + expand * range, points);
    }

    Eigen::Index nearest(double y) const {
        Eigen::Index idx = 0;
        const double pos = (y - values[0]) / spacing;
        idx = static_cast<Eigen::Index>(std::llround(pos));
        return std::clamp<Eigen::Index>(idx, 0, size() - 1);
    }
};

struct PredictionSet {
    LabelGrid grid;
    std::vector<std::uint8_t> included;
    double alpha = 0.2;
    bool empty_set = false;       // no rank exceeded alpha
    int degenerate_points = 0;    // grid points excluded for degenerate weights

    Eigen::Index count() const {
        Eigen::Index c = 0;
        for (auto b : included) c += (b != 0);
        return c;
    }
    // Lebesgue measure of the included points, not the hull width.
    double length() const { return grid.spacing * static_cast<double>(count()); }

    // Contiguous hull [min included, max included] for diagnostics.
    std::pair<double, double> hull() const {
        double lo = std::numeric_limits<double>::quiet_NaN(), hi = lo;
        for (Eigen::Index g = 0; g < grid.size(); ++g)
            if (included[static_cast<size_t>(g)]) {
                if (std::isnan(lo)) lo = grid.values[g];
                hi = grid.values[g];
            }
        return {lo, hi};
    }

    // Grid-based coverage: the point nearest to the true response is included.
    bool covers(double y_true) const {
        return included[static_cast<size_t>(grid.nearest(y_true))] != 0;
    }
};

// r(y) = (1/(n+1)) #{i : score_i <= score_{n+1}}, candidate score last.
// Non-strict comparison, so the candidate always counts itself.
inline double conformal_rank(const Eigen::VectorXd& scores) {
    const Eigen::Index m = scores.size();
    if (m < 2) throw numeric_error("conformal_rank: need at least 2 scores");
    const double candidate = scores[m - 1];
    Eigen::Index count = 0;
    for (Eigen::Index i = 0; i < m; ++i) count += (scores[i] <= candidate);
    return static_cast<double>(count) / static_cast<double>(m);
}

// Inclusion by strict rank > alpha. Degenerate grid points are excluded.
inline PredictionSet build_set(const std::vector<double>& ranks, double alpha,
                               const LabelGrid& grid,
                               const std::vector<std::uint8_t>& degenerate = {}) {
    if (static_cast<Eigen::Index>(ranks.size()) != grid.size())
        throw config_error("build_set: one rank per grid point required");
    PredictionSet set;
    set.grid = grid;
    set.alpha = alpha;
    set.included.assign(ranks.size(), 0);
    for (size_t g = 0; g < ranks.size(); ++g) {
        if (!degenerate.empty() && degenerate[g]) {
            ++set.degenerate_points;
            continue;
        }
        set.included[g] = ranks[g] > alpha ? 1 : 0;
    }
    set.empty_set = set.count() == 0;
    return set;
}

// ---------------------------------------------------------------------------
// Add-one-in importance sampling scores (Monte Carlo path)
// ---------------------------------------------------------------------------

namespace detail {

// Per-draw log likelihood of the training points: entry (i, t) is
// log p_{theta^(t)}(Y_i | X_i).
inline Eigen::MatrixXd train_loglik_matrix(const PosteriorDraws& draws,
                                           const Eigen::MatrixXd& train_design,
                                           const Eigen::VectorXd& train_y) {
    const Eigen::Index n = train_y.size();
    const Eigen::Index t_count = draws.draw_count();
    Eigen::MatrixXd mu = train_design * draws.coefs.transpose(); // n x T
    Eigen::MatrixXd ll(n, t_count);
    for (Eigen::Index t = 0; t < t_count; ++t) {
        const double sd = draws.noise_sd[t];
        ll.col(t) = -0.5 * ((train_y - mu.col(t)).array() / sd).square() - std::log(sd) -
                    0.5 * kLogTwoPi;
    }
    return ll;
}

} // namespace detail

struct AoiCandidate {
    Eigen::VectorXd log_scores; // n+1, candidate last
    double log_mean_weight;     // log((1/T) sum_t w^(t))
};

// Add-one-in scores for one model and one candidate label, all in log space.
inline AoiCandidate aoi_log_scores_one_model(const PosteriorDraws& draws,
                                             const Eigen::MatrixXd& train_design,
                                             const Eigen::VectorXd& train_y,
                                             const Eigen::VectorXd& test_row, double y) {
    const Eigen::Index n = train_y.size();
    const Eigen::Index t_count = draws.draw_count();
    if (t_count < 1) throw config_error("aoi scores: need T >= 1 draws");

    // Raw importance weights: w^(t) = p_{theta^(t)}(y | x_{n+1}).
    Eigen::VectorXd log_w(t_count);
    const Eigen::VectorXd mu_test = draws.coefs * test_row;
    for (Eigen::Index t = 0; t < t_count; ++t)
        log_w[t] = gaussian_logpdf(y, mu_test[t], draws.noise_sd[t]);
    if (log_w.maxCoeff() < kLogWeightFloor)
        throw degenerate_weight_error("aoi scores: importance weights underflow at candidate y = " +
                                      std::to_string(y));
    const double lse_w = log_sum_exp(log_w);
    const Eigen::VectorXd log_wt = log_w.array() - lse_w; // normalized, log wtilde

    AoiCandidate out;
    out.log_mean_weight = lse_w - std::log(static_cast<double>(t_count));
    out.log_scores.resize(n + 1);
    const Eigen::MatrixXd ll = detail::train_loglik_matrix(draws, train_design, train_y);
    for (Eigen::Index i = 0; i < n; ++i)
        out.log_scores[i] = log_sum_exp(Eigen::VectorXd(log_wt + ll.row(i).transpose()));
    out.log_scores[n] = log_sum_exp(Eigen::VectorXd(log_wt + log_w));
    return out;
}

// Linear-space wrapper; scores are densities.
inline Eigen::VectorXd aoi_scores_one_model(const PosteriorDraws& draws,
                                            const Eigen::MatrixXd& train_design,
                                            const Eigen::VectorXd& train_y,
                                            const Eigen::VectorXd& test_row, double y) {
    return aoi_log_scores_one_model(draws, train_design, train_y, test_row, y)
        .log_scores.array()
        .exp();
}

struct AoiGrid {
    Eigen::MatrixXd log_scores;      // (n+1) x G, candidate row last
    Eigen::VectorXd log_mean_weight; // G
    std::vector<std::uint8_t> degenerate;
};

// Whole-grid variant of the add-one-in scores. The per-point log-sum-exp is
// factored into two max shifts so the inner accumulation becomes a single
// matrix product over draws.
inline AoiGrid aoi_scores_grid(const PosteriorDraws& draws, const Eigen::MatrixXd& train_design,
                               const Eigen::VectorXd& train_y, const Eigen::VectorXd& test_row,
                               const LabelGrid& grid) {
    const Eigen::Index n = train_y.size();
    const Eigen::Index t_count = draws.draw_count();
    const Eigen::Index g_count = grid.size();

    const Eigen::MatrixXd ll = detail::train_loglik_matrix(draws, train_design, train_y);
    const Eigen::VectorXd shift = ll.rowwise().maxCoeff(); // n
    Eigen::MatrixXd lik_shifted = (ll.colwise() - shift).array().exp(); // n x T

    const Eigen::VectorXd mu_test = draws.coefs * test_row; // T
    const Eigen::VectorXd inv_var = draws.noise_sd.array().square().inverse();
    const Eigen::VectorXd log_norm =
        -draws.noise_sd.array().log() - 0.5 * kLogTwoPi; // per-draw normalizer

    AoiGrid out;
    out.log_scores.resize(n + 1, g_count);
    out.log_mean_weight.resize(g_count);
    out.degenerate.assign(static_cast<size_t>(g_count), 0);

    Eigen::MatrixXd wt(t_count, g_count); // normalized weights, linear
    Eigen::VectorXd log_w(t_count);
    const double log_t = std::log(static_cast<double>(t_count));
    for (Eigen::Index g = 0; g < g_count; ++g) {
        const double y = grid.values[g];
        log_w = (-0.5 * (y - mu_test.array()).square() * inv_var.array() + log_norm.array());
        const double m = log_w.maxCoeff();
        if (m < kLogWeightFloor) {
            out.degenerate[static_cast<size_t>(g)] = 1;
            wt.col(g).setZero();
            out.log_mean_weight[g] = kNegInf;
            out.log_scores.col(g).setConstant(kNegInf);
            continue;
        }
        const Eigen::ArrayXd e = (log_w.array() - m).exp();
        const double sum_e = e.sum();
        const double lse = m + std::log(sum_e);
        out.log_mean_weight[g] = lse - log_t;
        wt.col(g) = e / sum_e;
        // Candidate score: sum_t wtilde_t w_t.
        const double lse2 = 2.0 * m + std::log((e * e).sum());
        out.log_scores(n, g) = lse2 - lse;
    }

    const Eigen::MatrixXd s = lik_shifted * wt; // n x G
    for (Eigen::Index g = 0; g < g_count; ++g) {
        if (out.degenerate[static_cast<size_t>(g)]) continue;
        out.log_scores.col(g).head(n) = s.col(g).array().log() + shift.array();
    }
    return out;
}

// ---------------------------------------------------------------------------
// CBMA aggregation
// ---------------------------------------------------------------------------

struct CbmaLogAggregate {
    Eigen::VectorXd log_scores; // n+1
    Eigen::VectorXd q;          // K, sums to 1
};

// Score aggregation in log space: q_k proportional to
// p(M_k | Z) * mean raw weight, scores a q-weighted mixture.
inline CbmaLogAggregate cbma_aggregate_log(const Eigen::MatrixXd& log_scores_per_model,
                                           const Eigen::VectorXd& log_model_posterior,
                                           const Eigen::VectorXd& log_mean_weights) {
    const Eigen::Index k_count = log_model_posterior.size();
    if (k_count < 1 || log_scores_per_model.cols() != k_count ||
        log_mean_weights.size() != k_count)
        throw config_error("cbma_aggregate: inconsistent model count");

    Eigen::VectorXd log_num = log_model_posterior + log_mean_weights;
    const double lse = log_sum_exp(log_num);
    if (!std::isfinite(lse))
        throw degenerate_weight_error("cbma_aggregate: all aggregation numerators vanished");

    CbmaLogAggregate out;
    out.q = (log_num.array() - lse).exp();
    const Eigen::Index m = log_scores_per_model.rows();
    out.log_scores.resize(m);
    for (Eigen::Index i = 0; i < m; ++i)
        out.log_scores[i] =
            log_sum_exp(Eigen::VectorXd(log_num + log_scores_per_model.row(i).transpose())) - lse;
    return out;
}

struct CbmaAggregate {
    Eigen::VectorXd scores; // n+1
    Eigen::VectorXd q;      // K
};

// Linear-space wrapper matching the written formula: per-model scores
// sigma_i^{M_k} (columns), model posterior probabilities, and per-model mean
// raw importance weights.
inline CbmaAggregate cbma_aggregate(const Eigen::MatrixXd& scores_per_model,
                                    const Eigen::VectorXd& model_probs,
                                    const Eigen::VectorXd& mean_raw_weights) {
    const auto log_agg = cbma_aggregate_log(scores_per_model.array().max(1e-320).log().matrix(),
                                            model_probs.array().max(1e-320).log().matrix(),
                                            mean_raw_weights.array().max(1e-320).log().matrix());
    return {log_agg.log_scores.array().exp(), log_agg.q};
}

// ---------------------------------------------------------------------------
// Exact scores for conjugate model spaces
// ---------------------------------------------------------------------------

struct ExactModelInput {
    ConjugateFit fit;              // fitted on Z_{1:n}
    Eigen::MatrixXd train_design;  // n x p_k
    Eigen::VectorXd test_row;      // p_k
};

// Exact add-one-in scores for one conjugate model: the posterior predictive of
// every pair under the posterior updated with the candidate pair.
inline Eigen::VectorXd exact_aoi_log_scores(const ExactModelInput& model,
                                            const Eigen::VectorXd& train_y, double y) {
    const Eigen::Index n = train_y.size();
    const ConjugateFit updated = model.fit.add_pair(model.test_row, y);
    Eigen::VectorXd log_scores(n + 1);
    for (Eigen::Index i = 0; i < n; ++i)
        log_scores[i] = updated.predictive_logdensity(model.train_design.row(i), train_y[i]);
    log_scores[n] = updated.predictive_logdensity(model.test_row, y);
    return log_scores;
}

// Ground-truth oracle: the hierarchical posterior predictive, computed as
// posterior model probabilities given Z_{1:n+1} times exact full-data
// predictive densities. Returns linear-scale scores, candidate last.
inline Eigen::VectorXd exact_cbma_score_oracle(std::span<const ExactModelInput> models,
                                               const Eigen::VectorXd& train_y,
                                               const Eigen::VectorXd& prior_model_weights,
                                               double y) {
    const Eigen::Index k_count = static_cast<Eigen::Index>(models.size());
    if (k_count < 1) throw config_error("oracle: need K >= 1 models");
    const Eigen::Index n = train_y.size();

    Eigen::VectorXd log_evid(k_count);
    Eigen::MatrixXd log_pred(n + 1, k_count);
    for (Eigen::Index k = 0; k < k_count; ++k) {
        const auto& m = models[static_cast<size_t>(k)];
        const ConjugateFit updated = m.fit.add_pair(m.test_row, y);
        log_evid[k] = updated.log_evidence;
        for (Eigen::Index i = 0; i < n; ++i)
            log_pred(i, k) = updated.predictive_logdensity(m.train_design.row(i), train_y[i]);
        log_pred(n, k) = updated.predictive_logdensity(m.test_row, y);
    }
    const ModelPosterior mp = model_posterior(log_evid, prior_model_weights);

    Eigen::VectorXd scores(n + 1);
    for (Eigen::Index i = 0; i < n + 1; ++i) {
        double s = 0.0;
        for (Eigen::Index k = 0; k < k_count; ++k)
            s += mp.probs[k] * std::exp(log_pred(i, k));
        scores[i] = s;
    }
    return scores;
}

// ---------------------------------------------------------------------------
// Full conformal set construction
// ---------------------------------------------------------------------------

// Per-candidate debug table, serializable to CSV.
struct ConformityTable {
    Eigen::VectorXd grid_values;                   // G
    std::vector<Eigen::MatrixXd> per_model_scores; // K matrices, (n+1) x G
    Eigen::MatrixXd agg_weights;                   // G x K
    Eigen::MatrixXd cbma_scores;                   // (n+1) x G
    Eigen::MatrixXd ranks;                         // G x (K+1), CBMA last

    void write_csv(std::ostream& os) const {
        os << "y,model,i,score,q_k,rank\n";
        const Eigen::Index k_count = static_cast<Eigen::Index>(per_model_scores.size());
        for (Eigen::Index g = 0; g < grid_values.size(); ++g) {
            for (Eigen::Index k = 0; k < k_count; ++k)
                for (Eigen::Index i = 0; i < per_model_scores[static_cast<size_t>(k)].rows(); ++i)
                    os << grid_values[g] << ',' << k + 1 << ',' << i + 1 << ','
                       << per_model_scores[static_cast<size_t>(k)](i, g) << ','
                       << agg_weights(g, k) << ',' << ranks(g, k) << '\n';
            for (Eigen::Index i = 0; i < cbma_scores.rows(); ++i)
                os << grid_values[g] << ",CBMA," << i + 1 << ',' << cbma_scores(i, g) << ",,"
                   << ranks(g, k_count) << '\n';
        }
    }
};

struct FullConformalResult {
    PredictionSet cbma;
    std::vector<PredictionSet> per_model;
    Eigen::MatrixXd q;                // G x K aggregation weights
    Eigen::MatrixXd log_mean_weights; // G x K; log posterior predictive of each
                                      // candidate label, reused by credible baselines
    int degenerate_points = 0;
    double time_scores = 0.0;    // per-model score + rank construction
    double time_aggregate = 0.0; // CBMA aggregation overhead
    bool has_table = false;
    ConformityTable table;
};

struct SampledModelInput {
    const PosteriorDraws* draws = nullptr;
    Eigen::MatrixXd train_design;
    Eigen::VectorXd test_row;
};

// Algorithm core (Monte Carlo path): posterior draws are computed once on
// Z_{1:n}; the candidate pair enters only through the importance reweighting.
inline FullConformalResult full_conformal_set(std::span<const SampledModelInput> models,
                                              const Eigen::VectorXd& train_y,
                                              const ModelPosterior& mp, const LabelGrid& grid,
                                              double alpha, bool with_table = false) {
    const Eigen::Index k_count = static_cast<Eigen::Index>(models.size());
    const Eigen::Index g_count = grid.size();
    const Eigen::Index n = train_y.size();

    const auto t_start = std::chrono::steady_clock::now();
    std::vector<AoiGrid> per_model;
    per_model.reserve(static_cast<size_t>(k_count));
    for (const auto& m : models)
        per_model.push_back(aoi_scores_grid(*m.draws, m.train_design, train_y, m.test_row, grid));

    // A grid point a model finds impossible (all importance weights underflow)
    // drops out of that model's set only. The aggregate loses a point just
    // when every model degenerates there: the aggregation weights already send
    // q_k to zero for a model whose mean weight vanishes, so one model cannot
    // veto labels the others support.
    std::vector<std::uint8_t> all_degenerate(static_cast<size_t>(g_count), 0);
    Eigen::Index degenerate_count = 0;     // degenerate for at least one model
    Eigen::Index all_degenerate_count = 0; // degenerate for every model
    for (Eigen::Index g = 0; g < g_count; ++g) {
        bool any = false, all = true;
        for (const auto& a : per_model) {
            const bool d = a.degenerate[static_cast<size_t>(g)] != 0;
            any = any || d;
            all = all && d;
        }
        degenerate_count += any ? 1 : 0;
        if (all) {
            all_degenerate[static_cast<size_t>(g)] = 1;
            ++all_degenerate_count;
        }
    }
    if (10 * all_degenerate_count > g_count)
        throw grid_quality_error("full_conformal_set: over 10% of grid points degenerate; widen "
                                 "or refine the label grid");

    const Eigen::VectorXd log_mp = mp.probs.array().max(1e-320).log();
    FullConformalResult out;
    out.q = Eigen::MatrixXd::Zero(g_count, k_count);
    out.log_mean_weights.resize(g_count, k_count);
    std::vector<double> cbma_ranks(static_cast<size_t>(g_count), 0.0);
    std::vector<std::vector<double>> model_ranks(
        static_cast<size_t>(k_count), std::vector<double>(static_cast<size_t>(g_count), 0.0));

    for (Eigen::Index k = 0; k < k_count; ++k) {
        const auto& a = per_model[static_cast<size_t>(k)];
        out.log_mean_weights.col(k) = a.log_mean_weight;
        for (Eigen::Index g = 0; g < g_count; ++g) {
            if (a.degenerate[static_cast<size_t>(g)]) continue;
            model_ranks[static_cast<size_t>(k)][static_cast<size_t>(g)] =
                conformal_rank(a.log_scores.col(g));
        }
    }
    const auto t_scores = std::chrono::steady_clock::now();

    if (with_table) {
        out.has_table = true;
        out.table.grid_values = grid.values;
        out.table.per_model_scores.assign(static_cast<size_t>(k_count),
                                          Eigen::MatrixXd::Zero(n + 1, g_count));
        out.table.agg_weights = Eigen::MatrixXd::Zero(g_count, k_count);
        out.table.cbma_scores = Eigen::MatrixXd::Zero(n + 1, g_count);
        out.table.ranks = Eigen::MatrixXd::Zero(g_count, k_count + 1);
    }

    Eigen::MatrixXd log_scores(n + 1, k_count);
    Eigen::VectorXd log_mw(k_count);
    for (Eigen::Index g = 0; g < g_count; ++g) {
        if (all_degenerate[static_cast<size_t>(g)]) continue;
        for (Eigen::Index k = 0; k < k_count; ++k) {
            const auto& a = per_model[static_cast<size_t>(k)];
            log_scores.col(k) = a.log_scores.col(g);
            log_mw[k] = a.log_mean_weight[g];
        }
        const auto agg = cbma_aggregate_log(log_scores, log_mp, log_mw);
        cbma_ranks[static_cast<size_t>(g)] = conformal_rank(agg.log_scores);
        out.q.row(g) = agg.q.transpose();
        if (with_table) {
            for (Eigen::Index k = 0; k < k_count; ++k) {
                out.table.per_model_scores[static_cast<size_t>(k)].col(g) =
                    log_scores.col(k).array().exp();
                out.table.ranks(g, k) = model_ranks[static_cast<size_t>(k)][static_cast<size_t>(g)];
            }
            out.table.agg_weights.row(g) = agg.q.transpose();
            out.table.cbma_scores.col(g) = agg.log_scores.array().exp();
            out.table.ranks(g, k_count) = cbma_ranks[static_cast<size_t>(g)];
        }
    }

    const auto t_agg = std::chrono::steady_clock::now();
    out.cbma = build_set(cbma_ranks, alpha, grid, all_degenerate);
    for (Eigen::Index k = 0; k < k_count; ++k)
        out.per_model.push_back(build_set(model_ranks[static_cast<size_t>(k)], alpha, grid,
                                          per_model[static_cast<size_t>(k)].degenerate));
    out.degenerate_points = static_cast<int>(degenerate_count);
    out.time_scores = std::chrono::duration<double>(t_scores - t_start).count();
    out.time_aggregate = std::chrono::duration<double>(t_agg - t_scores).count();
    return out;
}

// Exact-arithmetic variant for all-conjugate model spaces.
inline FullConformalResult full_conformal_set_exact(std::span<const ExactModelInput> models,
                                                    const Eigen::VectorXd& train_y,
                                                    const ModelPosterior& mp,
                                                    const LabelGrid& grid, double alpha) {
    const Eigen::Index k_count = static_cast<Eigen::Index>(models.size());
    const Eigen::Index g_count = grid.size();
    const Eigen::Index n = train_y.size();
    const Eigen::VectorXd log_mp = mp.probs.array().max(1e-320).log();

    FullConformalResult out;
    out.q = Eigen::MatrixXd::Zero(g_count, k_count);
    out.log_mean_weights.resize(g_count, k_count);
    std::vector<double> cbma_ranks(static_cast<size_t>(g_count), 0.0);
    std::vector<std::vector<double>> model_ranks(
        static_cast<size_t>(k_count), std::vector<double>(static_cast<size_t>(g_count), 0.0));

    Eigen::MatrixXd log_scores(n + 1, k_count);
    Eigen::VectorXd log_mw(k_count);
    for (Eigen::Index g = 0; g < g_count; ++g) {
        const double y = grid.values[g];
        for (Eigen::Index k = 0; k < k_count; ++k) {
            const auto& m = models[static_cast<size_t>(k)];
            log_scores.col(k) = exact_aoi_log_scores(m, train_y, y);
            log_mw[k] = m.fit.predictive_logdensity(m.test_row, y);
            model_ranks[static_cast<size_t>(k)][static_cast<size_t>(g)] =
                conformal_rank(log_scores.col(k));
        }
        out.log_mean_weights.row(g) = log_mw.transpose();
        const auto agg = cbma_aggregate_log(log_scores, log_mp, log_mw);
        cbma_ranks[static_cast<size_t>(g)] = conformal_rank(agg.log_scores);
        out.q.row(g) = agg.q.transpose();
    }

    out.cbma = build_set(cbma_ranks, alpha, grid);
    for (Eigen::Index k = 0; k < k_count; ++k)
        out.per_model.push_back(build_set(model_ranks[static_cast<size_t>(k)], alpha, grid));
    return out;
}

// Exact CBMA rank at an arbitrary candidate label (no grid); used for
// coverage experiments where the true response is tested directly.
inline double exact_cbma_rank_at(std::span<const ExactModelInput> models,
                                 const Eigen::VectorXd& train_y, const ModelPosterior& mp,
                                 double y) {
    const Eigen::Index k_count = static_cast<Eigen::Index>(models.size());
    const Eigen::Index n = train_y.size();
    Eigen::MatrixXd log_scores(n + 1, k_count);
    Eigen::VectorXd log_mw(k_count);
    for (Eigen::Index k = 0; k < k_count; ++k) {
        const auto& m = models[static_cast<size_t>(k)];
        log_scores.col(k) = exact_aoi_log_scores(m, train_y, y);
        log_mw[k] = m.fit.predictive_logdensity(m.test_row, y);
    }
    const Eigen::VectorXd log_mp = mp.probs.array().max(1e-320).log();
    return conformal_rank(cbma_aggregate_log(log_scores, log_mp, log_mw).log_scores);
}

// Exact aggregation weights q_k at a candidate label.
inline Eigen::VectorXd exact_cbma_weights_at(std::span<const ExactModelInput> models,
                                             const ModelPosterior& mp, double y) {
    const Eigen::Index k_count = static_cast<Eigen::Index>(models.size());
    Eigen::VectorXd log_num(k_count);
    for (Eigen::Index k = 0; k < k_count; ++k) {
        const auto& m = models[static_cast<size_t>(k)];
        log_num[k] = std::log(std::max(mp.probs[k], 1e-320)) +
                     m.fit.predictive_logdensity(m.test_row, y);
    }
    const double lse = log_sum_exp(log_num);
    if (!std::isfinite(lse))
        throw degenerate_weight_error("exact_cbma_weights_at: numerators vanished");
    return (log_num.array() - lse).exp();
}

} // namespace cbma

#endif

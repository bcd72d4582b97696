#ifndef CBMA_BASELINES_HPP
#define CBMA_BASELINES_HPP

#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "cbma/bma.hpp"
#include "cbma/conformal.hpp"
#include "cbma/errors.hpp"

namespace cbma {

// Central (equal-tailed) credible interval from a predictive density on the
// grid: trapezoid-accumulated CDF inverted at alpha/2 and 1 - alpha/2.
inline PredictionSet bayes_credible_set(const Eigen::VectorXd& density, double alpha,
                                        const LabelGrid& grid) {
    const Eigen::Index g_count = grid.size();
    if (density.size() != g_count)
        throw config_error("bayes_credible_set: density size mismatch");
    if ((density.array() < 0.0).any())
        throw numeric_error("bayes_credible_set: negative density");

    Eigen::VectorXd cdf(g_count);
    cdf[0] = 0.0;
    for (Eigen::Index g = 1; g < g_count; ++g)
        cdf[g] = cdf[g - 1] + 0.5 * (density[g] + density[g - 1]) * grid.spacing;
    const double mass = cdf[g_count - 1];
    if (mass < 1.0 - alpha)
        throw grid_truncation_error("bayes_credible_set: density mass " + std::to_string(mass) +
                                    " below 1 - alpha; widen the grid");

    const double lo_q = alpha / 2.0;
    const double hi_q = 1.0 - alpha / 2.0;
    PredictionSet set;
    set.grid = grid;
    set.alpha = alpha;
    set.included.assign(static_cast<size_t>(g_count), 0);
    for (Eigen::Index g = 0; g < g_count; ++g)
        if (cdf[g] >= lo_q && cdf[g] <= hi_q) set.included[static_cast<size_t>(g)] = 1;
    set.empty_set = set.count() == 0;
    return set;
}

// BMA-mixture credible interval: mix per-model predictive densities (columns)
// with the posterior model probabilities, then take the central interval.
inline PredictionSet bma_credible_set(const ModelPosterior& mp,
                                      const Eigen::MatrixXd& per_model_densities, double alpha,
                                      const LabelGrid& grid) {
    if (per_model_densities.cols() != mp.probs.size())
        throw config_error("bma_credible_set: model count mismatch");
    Eigen::VectorXd mixture(grid.size());
    for (Eigen::Index g = 0; g < grid.size(); ++g)
        mixture[g] = bma_mixture_predictive(mp, per_model_densities.row(g).transpose());
    return bayes_credible_set(mixture, alpha, grid);
}

struct MergeRule {
    Eigen::VectorXd weights; // K, normalized on construction
    double threshold = 0.5;

    static MergeRule uniform(Eigen::Index k, double threshold = 0.5) {
        if (k < 1) throw config_error("merge rule: need K >= 1");
        return {Eigen::VectorXd::Constant(k, 1.0 / static_cast<double>(k)), threshold};
    }
    static MergeRule weighted(Eigen::VectorXd w, double threshold = 0.5) {
        if ((w.array() < 0.0).any() || w.sum() <= 0.0)
            throw config_error("merge rule: weights must be nonnegative, not all zero");
        if (!(threshold > 0.0 && threshold < 1.0))
            throw config_error("merge rule: threshold must lie in (0, 1)");
        w /= w.sum();
        return {std::move(w), threshold};
    }
};

// Weighted majority vote over conformal sets sharing one grid. With level-
// alpha dependent inputs the merged set retains 1 - 2 alpha coverage
// (documented in run metadata rather than re-leveling the inputs).
inline PredictionSet majority_vote_merge(const std::vector<PredictionSet>& sets,
                                         const MergeRule& rule) {
    if (sets.empty() || rule.weights.size() != static_cast<Eigen::Index>(sets.size()))
        throw config_error("majority_vote_merge: weight count must match set count");
    const auto& grid = sets.front().grid;
    for (const auto& s : sets) {
        if (s.grid.size() != grid.size() || s.grid.spacing != grid.spacing ||
            s.grid.values[0] != grid.values[0])
            throw grid_mismatch_error("majority_vote_merge: sets built on different grids");
    }
    PredictionSet merged;
    merged.grid = grid;
    merged.alpha = sets.front().alpha;
    merged.included.assign(static_cast<size_t>(grid.size()), 0);
    for (Eigen::Index g = 0; g < grid.size(); ++g) {
        double vote = 0.0;
        for (size_t k = 0; k < sets.size(); ++k)
            if (sets[k].included[static_cast<size_t>(g)])
                vote += rule.weights[static_cast<Eigen::Index>(k)];
        merged.included[static_cast<size_t>(g)] = vote > rule.threshold ? 1 : 0;
    }
    merged.empty_set = merged.count() == 0;
    return merged;
}

} // namespace cbma

#endif

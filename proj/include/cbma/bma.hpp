#ifndef CBMA_BMA_HPP
#define CBMA_BMA_HPP

#include <Eigen/Dense>
#include <cmath>

#include "cbma/errors.hpp"
#include "cbma/numeric.hpp"

namespace cbma {

struct ModelPosterior {
    Eigen::VectorXd probs;         // K, sums to 1
    Eigen::VectorXd log_evidences; // K
};

// p(M_k | Z) from log marginal likelihoods and prior model weights, via
// log-sum-exp. Invariant to shifting all log evidences by a constant.
inline ModelPosterior model_posterior(const Eigen::VectorXd& log_evidences,
                                      const Eigen::VectorXd& prior_weights) {
    const Eigen::Index k = log_evidences.size();
    if (k < 1 || prior_weights.size() != k)
        throw config_error("model_posterior: need K >= 1 evidences with matching priors");
    Eigen::VectorXd log_terms(k);
    for (Eigen::Index i = 0; i < k; ++i) {
        if (std::isnan(log_evidences[i]) || log_evidences[i] == std::numeric_limits<double>::infinity())
            throw numeric_error("model_posterior: invalid log evidence");
        if (!(prior_weights[i] > 0.0))
            throw config_error("model_posterior: prior weights must be positive");
        log_terms[i] = log_evidences[i] + std::log(prior_weights[i]);
    }
    const double lse = log_sum_exp(log_terms);
    if (!std::isfinite(lse))
        throw degenerate_evidence_error("model_posterior: all evidences vanished");

    ModelPosterior out;
    out.log_evidences = log_evidences;
    out.probs = (log_terms.array() - lse).exp();
    // Clamp subnormal leakage and renormalize.
    bool clamped = false;
    for (Eigen::Index i = 0; i < k; ++i)
        if (out.probs[i] < 1e-300) {
            out.probs[i] = 0.0;
            clamped = true;
        }
    if (clamped) out.probs /= out.probs.sum();
    return out;
}

// Mixture predictive: convex combination of per-model densities.
inline double bma_mixture_predictive(const ModelPosterior& posterior,
                                     const Eigen::VectorXd& densities) {
    if (densities.size() != posterior.probs.size())
        throw config_error("bma_mixture_predictive: size mismatch");
    if ((densities.array() < 0.0).any())
        throw numeric_error("bma_mixture_predictive: negative density");
    return posterior.probs.dot(densities);
}

} // namespace cbma

#endif

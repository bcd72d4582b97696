#ifndef CBMA_ENGINE_HPP
#define CBMA_ENGINE_HPP

#include <Eigen/Dense>
#include <chrono>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "cbma/baselines.hpp"
#include "cbma/bayes_linear.hpp"
#include "cbma/bma.hpp"
#include "cbma/conformal.hpp"
#include "cbma/dataset.hpp"
#include "cbma/errors.hpp"
#include "cbma/metropolis.hpp"
#include "cbma/model.hpp"

namespace cbma {

struct EngineConfig {
    Eigen::Index draws = 4000;
    std::uint64_t seed = 1;
    bool exact = false; // closed-form scores; requires an all-conjugate space
};

// All prediction sets produced for one test covariate.
struct MethodSets {
    PredictionSet cbma;
    std::vector<PredictionSet> cb;    // per-model conformal Bayes
    PredictionSet bma_credible;
    std::vector<PredictionSet> bayes; // per-model credible
    Eigen::MatrixXd q;                // G x K
    int degenerate_points = 0;
    double time_cb = 0.0;
    double time_bayes = 0.0;
    double time_cbma_overhead = 0.0;
};

// Trapezoid mass of one density column over a uniform grid.
inline double trapezoid_mass(const Eigen::ArrayXd& density, double spacing) {
    const Eigen::Index g = density.size();
    return (density.head(g - 1) + density.tail(g - 1)).sum() * 0.5 * spacing;
}

// Fits a model space on a training set once (basis expansion with frozen
// statistics, posterior draws or closed forms, model posterior) and then
// serves prediction-set construction per test covariate.
class ConformalBmaEngine {
public:
    ConformalBmaEngine(const Dataset& train, const ModelSpace& space, const EngineConfig& config)
        : space_(space), train_y_(train.y), exact_(config.exact) {
        const size_t k_count = space_.size();
        if (exact_ && !space_.all_conjugate())
            throw unsupported_oracle_error("exact engine requires all-conjugate models");

        designs_.reserve(k_count);
        Eigen::VectorXd log_evidence(static_cast<Eigen::Index>(k_count));
        Eigen::VectorXd prior_weights(static_cast<Eigen::Index>(k_count));
        for (size_t k = 0; k < k_count; ++k) {
            const ModelSpec& spec = space_.models[k];
            designs_.push_back(expand_basis(train, spec.basis));
            prior_weights[static_cast<Eigen::Index>(k)] = spec.prior_weight;
            if (exact_) {
                fits_.push_back(ConjugateFit::fit(designs_[k].matrix, train_y_, spec));
                log_evidence[static_cast<Eigen::Index>(k)] = fits_[k].log_evidence;
            } else {
                draws_.push_back(sample_posterior(designs_[k].matrix, train_y_, spec,
                                                  config.draws, split_seed(config.seed, k)));
                log_evidence[static_cast<Eigen::Index>(k)] = draws_[k].log_marginal;
                if (!draws_[k].warning.empty())
                    warnings_ += spec.name + ": " + draws_[k].warning + "\n";
            }
        }
        posterior_ = model_posterior(log_evidence, prior_weights);
    }

    const ModelPosterior& posterior() const { return posterior_; }
    const std::string& warnings() const { return warnings_; }
    bool exact() const { return exact_; }
    size_t model_count() const { return space_.size(); }

    Eigen::VectorXd design_row(size_t k, const Eigen::VectorXd& x_raw) const {
        Dataset one;
        one.x = x_raw.transpose();
        one.y = Eigen::VectorXd::Zero(1);
        return expand_basis(one, space_.models[k].basis, designs_[k].stats)
            .matrix.row(0)
            .transpose();
    }

    MethodSets predict(const Eigen::VectorXd& x_raw, const LabelGrid& grid, double alpha,
                       bool with_credible = true) const {
        FullConformalResult conf;
        if (exact_) {
            std::vector<ExactModelInput> inputs;
            inputs.reserve(space_.size());
            for (size_t k = 0; k < space_.size(); ++k)
                inputs.push_back({fits_[k], designs_[k].matrix, design_row(k, x_raw)});
            conf = full_conformal_set_exact(inputs, train_y_, posterior_, grid, alpha);
        } else {
            std::vector<SampledModelInput> inputs;
            inputs.reserve(space_.size());
            for (size_t k = 0; k < space_.size(); ++k)
                inputs.push_back({&draws_[k], designs_[k].matrix, design_row(k, x_raw)});
            conf = full_conformal_set(inputs, train_y_, posterior_, grid, alpha);
        }

        MethodSets out;
        out.cbma = std::move(conf.cbma);
        out.cb = std::move(conf.per_model);
        out.q = std::move(conf.q);
        out.degenerate_points = conf.degenerate_points;
        out.time_cb = conf.time_scores;
        out.time_cbma_overhead = conf.time_aggregate;

        if (with_credible) {
            const auto t0 = std::chrono::steady_clock::now();
            // Credible baselines need nearly all of the relevant predictive
            // mass inside their grid. The conformal grid tracks the training
            // responses, so a model whose predictive spills past it gets a
            // private grid spanning its own predictive support instead. The
            // BMA mixture grid is extended until the posterior-weighted
            // mixture mass is comfortable; models with negligible posterior
            // weight cannot force the common grid to chase their tails.
            const double target_mass = std::max(1.0 - alpha + 0.02, 0.995);
            Eigen::VectorXd model_mass(static_cast<Eigen::Index>(space_.size()));
            out.bayes.reserve(space_.size());
            for (size_t k = 0; k < space_.size(); ++k) {
                const Eigen::Index kc = static_cast<Eigen::Index>(k);
                const Eigen::ArrayXd dens = conf.log_mean_weights.col(kc).array().exp();
                model_mass[kc] = trapezoid_mass(dens, grid.spacing);
                if (model_mass[kc] >= target_mass) {
                    out.bayes.push_back(bayes_credible_set(dens.matrix(), alpha, grid));
                } else {
                    const LabelGrid own = model_grid(k, x_raw, grid.size());
                    const Eigen::VectorXd own_dens =
                        predictive_log_density(k, x_raw, own.values).array().exp();
                    out.bayes.push_back(bayes_credible_set(own_dens, alpha, own));
                }
            }

            LabelGrid cgrid = grid;
            Eigen::MatrixXd log_dens = conf.log_mean_weights;
            for (int round = 0; round < 6; ++round) {
                if (posterior_.probs.dot(model_mass) >= target_mass) break;
                const Eigen::Index add = cgrid.size() / 2;
                cgrid = LabelGrid::uniform(
                    cgrid.values[0] - static_cast<double>(add) * cgrid.spacing,
                    cgrid.values[cgrid.size() - 1] + static_cast<double>(add) * cgrid.spacing,
                    cgrid.size() + 2 * add);
                log_dens.resize(cgrid.size(), static_cast<Eigen::Index>(space_.size()));
                for (size_t k = 0; k < space_.size(); ++k) {
                    const Eigen::Index kc = static_cast<Eigen::Index>(k);
                    log_dens.col(kc) = predictive_log_density(k, x_raw, cgrid.values);
                    model_mass[kc] =
                        trapezoid_mass(log_dens.col(kc).array().exp(), cgrid.spacing);
                }
            }
            out.bma_credible =
                bma_credible_set(posterior_, log_dens.array().exp(), alpha, cgrid);
            out.time_bayes = std::chrono::duration<double>(
                std::chrono::steady_clock::now() - t0).count();
        }
        return out;
    }

    // Log posterior predictive density of one model at each candidate label.
    Eigen::VectorXd predictive_log_density(size_t k, const Eigen::VectorXd& x_raw,
                                           const Eigen::VectorXd& y_values) const {
        const Eigen::VectorXd row = design_row(k, x_raw);
        const Eigen::Index g = y_values.size();
        Eigen::VectorXd out(g);
        if (exact_) {
            for (Eigen::Index i = 0; i < g; ++i)
                out[i] = fits_[k].predictive_logdensity(row, y_values[i]);
        } else {
            const Eigen::VectorXd mu = draws_[k].coefs * row;
            const Eigen::ArrayXd inv_var = draws_[k].noise_sd.array().square().inverse();
            const Eigen::ArrayXd log_norm = -draws_[k].noise_sd.array().log() - 0.5 * kLogTwoPi;
            const double log_t = std::log(static_cast<double>(draws_[k].draw_count()));
            for (Eigen::Index i = 0; i < g; ++i) {
                const Eigen::VectorXd lw =
                    (-0.5 * (y_values[i] - mu.array()).square() * inv_var + log_norm).matrix();
                out[i] = log_sum_exp(lw) - log_t;
            }
        }
        return out;
    }

    // Uniform grid spanning one model's posterior predictive support.
    LabelGrid model_grid(size_t k, const Eigen::VectorXd& x_raw, Eigen::Index points) const {
        const Eigen::VectorXd row = design_row(k, x_raw);
        double lo, hi;
        if (exact_) {
            const double mu = row.dot(fits_[k].post.mean);
            const double sd = std::sqrt(row.dot(fits_[k].post.cov * row) +
                                        fits_[k].sigma * fits_[k].sigma);
            lo = mu - 8.0 * sd;
            hi = mu + 8.0 * sd;
        } else {
            const Eigen::ArrayXd mu = (draws_[k].coefs * row).array();
            const Eigen::ArrayXd sd = draws_[k].noise_sd.array();
            lo = (mu - 8.0 * sd).minCoeff();
            hi = (mu + 8.0 * sd).maxCoeff();
        }
        return LabelGrid::uniform(lo, hi, std::max<Eigen::Index>(points, 2));
    }

    // Exact-path CBMA rank of an arbitrary candidate label.
    double rank_at(const Eigen::VectorXd& x_raw, double y) const {
        std::vector<ExactModelInput> inputs = exact_inputs(x_raw);
        return exact_cbma_rank_at(inputs, train_y_, posterior_, y);
    }

    // Exact-path aggregation weights q at a candidate label.
    Eigen::VectorXd q_at(const Eigen::VectorXd& x_raw, double y) const {
        std::vector<ExactModelInput> inputs = exact_inputs(x_raw);
        return exact_cbma_weights_at(inputs, posterior_, y);
    }

private:
    std::vector<ExactModelInput> exact_inputs(const Eigen::VectorXd& x_raw) const {
        if (!exact_) throw unsupported_oracle_error("engine: exact path not enabled");
        std::vector<ExactModelInput> inputs;
        inputs.reserve(space_.size());
        for (size_t k = 0; k < space_.size(); ++k)
            inputs.push_back({fits_[k], designs_[k].matrix, design_row(k, x_raw)});
        return inputs;
    }

    ModelSpace space_;
    Eigen::VectorXd train_y_;
    bool exact_;
    std::vector<Design> designs_;
    std::vector<ConjugateFit> fits_;     // exact mode
    std::vector<PosteriorDraws> draws_;  // sampled mode
    ModelPosterior posterior_;
    std::string warnings_;
};

} // namespace cbma

#endif

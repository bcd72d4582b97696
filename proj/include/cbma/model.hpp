#ifndef CBMA_MODEL_HPP
#define CBMA_MODEL_HPP

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "cbma/basis.hpp"
#include "cbma/errors.hpp"

namespace cbma {

struct NoiseSpec {
    enum class Kind { KnownSd, HalfNormal };
    Kind kind = Kind::KnownSd;
    double value = 1.0; // sd for KnownSd, scale for HalfNormal

    static NoiseSpec known_sd(double sd) {
        if (!(sd > 0.0)) throw config_error("noise: known sd must be positive");
        return {Kind::KnownSd, sd};
    }
    static NoiseSpec half_normal(double scale) {
        if (!(scale > 0.0)) throw config_error("noise: half-normal scale must be positive");
        return {Kind::HalfNormal, scale};
    }
};

// One candidate Bayesian regression model: basis expansion, independent
// Gaussian coefficient priors, noise prior, and a prior model weight.
struct ModelSpec {
    std::string name;
    BasisSpec basis;
    Eigen::VectorXd prior_mean;
    Eigen::VectorXd prior_sd;
    NoiseSpec noise;
    double prior_weight = 1.0;

    bool conjugate() const { return noise.kind == NoiseSpec::Kind::KnownSd; }

    void validate() const {
        const Eigen::Index p = basis.width();
        if (prior_mean.size() != p || prior_sd.size() != p)
            throw config_error("model '" + name + "': prior size does not match basis width");
        if ((prior_sd.array() <= 0.0).any())
            throw config_error("model '" + name + "': prior sds must be strictly positive");
        if (!(prior_weight > 0.0))
            throw config_error("model '" + name + "': prior model weight must be positive");
    }

    static ModelSpec make(std::string name, BasisSpec basis, Eigen::VectorXd prior_mean,
                          Eigen::VectorXd prior_sd, NoiseSpec noise, double prior_weight = 1.0) {
        ModelSpec m;
        m.name = std::move(name);
        m.basis = std::move(basis);
        m.prior_mean = std::move(prior_mean);
        m.prior_sd = std::move(prior_sd);
        m.noise = noise;
        m.prior_weight = prior_weight;
        m.validate();
        return m;
    }

    // Flat prior shorthand: every coefficient N(0, sd^2).
    static ModelSpec iso(std::string name, BasisSpec basis, double prior_sd, NoiseSpec noise,
                         double prior_weight = 1.0) {
        const Eigen::Index p = basis.width();
        return make(std::move(name), std::move(basis), Eigen::VectorXd::Zero(p),
                    Eigen::VectorXd::Constant(p, prior_sd), noise, prior_weight);
    }
};

// Ordered model space; prior weights are normalized on construction.
struct ModelSpace {
    std::vector<ModelSpec> models;

    explicit ModelSpace(std::vector<ModelSpec> m) : models(std::move(m)) {
        if (models.empty()) throw config_error("model space: need K >= 1 models");
        double total = 0.0;
        for (auto& spec : models) {
            spec.validate();
            total += spec.prior_weight;
        }
        for (auto& spec : models) spec.prior_weight /= total;
    }

    size_t size() const { return models.size(); }
    bool all_conjugate() const {
        for (const auto& m : models)
            if (!m.conjugate()) return false;
        return true;
    }
};

} // namespace cbma

#endif

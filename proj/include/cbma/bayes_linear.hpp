#ifndef CBMA_BAYES_LINEAR_HPP
#define CBMA_BAYES_LINEAR_HPP

#include <Eigen/Dense>
#include <cmath>
#include <random>
#include <string>

#include "cbma/errors.hpp"
#include "cbma/model.hpp"
#include "cbma/numeric.hpp"

namespace cbma {

struct GaussianPosterior {
    Eigen::VectorXd mean;
    Eigen::MatrixXd cov;
};

// Posterior draws for one model: coefficient rows, noise sd per draw (constant
// when the sd is known), and the log marginal likelihood estimate.
struct PosteriorDraws {
    enum class Method { ConjugateExact, MetropolisLaplace };

    Eigen::MatrixXd coefs;    // T x p
    Eigen::VectorXd noise_sd; // T
    double log_marginal = 0.0;
    Method method = Method::ConjugateExact;
    double acceptance_rate = -1.0;
    std::string warning;

    Eigen::Index draw_count() const { return coefs.rows(); }
};

namespace detail {

// Precision-space quantities of the Gaussian-prior, known-sd model:
// A = X'X/s^2 + P^{-1}, b = X'y/s^2 + P^{-1} m0.
struct ConjugateTerms {
    Eigen::MatrixXd a;
    Eigen::VectorXd b;
    double sigma;
    Eigen::VectorXd prior_prec;     // 1 / sd_j^2
    Eigen::VectorXd prior_mean;
    double log_det_prior = 0.0;     // log det(P)
};

inline ConjugateTerms conjugate_terms(const Eigen::MatrixXd& design, const Eigen::VectorXd& y,
                                      const ModelSpec& spec) {
    if (!spec.conjugate())
        throw numeric_error("conjugate path requires a known noise sd");
    if (!design.allFinite() || !y.allFinite())
        throw numeric_error("conjugate path: non-finite inputs");
    ConjugateTerms t;
    t.sigma = spec.noise.value;
    t.prior_prec = spec.prior_sd.array().square().inverse();
    t.prior_mean = spec.prior_mean;
    t.log_det_prior = 2.0 * spec.prior_sd.array().log().sum();
    const double inv_s2 = 1.0 / (t.sigma * t.sigma);
    t.a = Eigen::MatrixXd(t.prior_prec.asDiagonal());
    t.b = t.prior_prec.asDiagonal() * t.prior_mean;
    if (design.rows() > 0) {
        t.a += design.transpose() * design * inv_s2;
        t.b += design.transpose() * y * inv_s2;
    }
    return t;
}

} // namespace detail

// Exact posterior for Gaussian likelihood with known sd and independent
// Gaussian coefficient priors.
inline GaussianPosterior conjugate_posterior(const Eigen::MatrixXd& design,
                                             const Eigen::VectorXd& y, const ModelSpec& spec) {
    const auto t = detail::conjugate_terms(design, y, spec);
    Eigen::LLT<Eigen::MatrixXd> llt(t.a);
    if (llt.info() != Eigen::Success)
        throw numeric_error("conjugate_posterior: precision matrix not positive definite");
    GaussianPosterior post;
    post.cov = llt.solve(Eigen::MatrixXd::Identity(t.a.rows(), t.a.cols()));
    post.mean = llt.solve(t.b);
    return post;
}

// log m(Z | M) = log N(y; X m0, s^2 I + X P X'), evaluated through the p x p
// precision factorization (matrix determinant lemma + Woodbury).
inline double log_marginal_likelihood_conjugate(const Eigen::MatrixXd& design,
                                                const Eigen::VectorXd& y, const ModelSpec& spec) {
    const Eigen::Index n = y.size();
    if (n == 0) return 0.0;
    const auto t = detail::conjugate_terms(design, y, spec);
    Eigen::LLT<Eigen::MatrixXd> llt(t.a);
    if (llt.info() != Eigen::Success)
        throw numeric_error("log_marginal_likelihood: singular covariance");
    const double log_det_a = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
    const double inv_s2 = 1.0 / (t.sigma * t.sigma);
    const double quad_data = y.squaredNorm() * inv_s2 +
                             t.prior_mean.dot(t.prior_prec.asDiagonal() * t.prior_mean);
    const double quad_post = t.b.dot(llt.solve(t.b));
    return -0.5 * static_cast<double>(n) * (kLogTwoPi + 2.0 * std::log(t.sigma)) -
           0.5 * (t.log_det_prior + log_det_a) - 0.5 * (quad_data - quad_post);
}

// Exact posterior predictive N(y; x'mu, s^2 + x' Sigma x) for one point.
inline double posterior_predictive_logdensity_exact(const Eigen::VectorXd& design_row,
                                                    double y_value,
                                                    const GaussianPosterior& post, double sigma) {
    const double mu = design_row.dot(post.mean);
    const double var = sigma * sigma + design_row.dot(post.cov * design_row);
    if (!(var > 0.0)) throw numeric_error("posterior predictive: nonpositive variance");
    return gaussian_logpdf(y_value, mu, std::sqrt(var));
}

inline double posterior_predictive_density_exact(const Eigen::VectorXd& design_row, double y_value,
                                                 const GaussianPosterior& post, double sigma) {
    return std::exp(posterior_predictive_logdensity_exact(design_row, y_value, post, sigma));
}

// Fitted conjugate model with support for rank-one "add one in" updates, used
// by the exact score path.
struct ConjugateFit {
    GaussianPosterior post;
    double log_evidence = 0.0;
    double sigma = 1.0;

    static ConjugateFit fit(const Eigen::MatrixXd& design, const Eigen::VectorXd& y,
                            const ModelSpec& spec) {
        ConjugateFit f;
        f.post = conjugate_posterior(design, y, spec);
        f.log_evidence = log_marginal_likelihood_conjugate(design, y, spec);
        f.sigma = spec.noise.value;
        return f;
    }

    double predictive_logdensity(const Eigen::VectorXd& design_row, double y_value) const {
        return posterior_predictive_logdensity_exact(design_row, y_value, post, sigma);
    }

    // Posterior and evidence after appending the pair (design_row, y_value).
    // Sherman-Morrison on the covariance; the evidence uses the sequential
    // identity m(Z_{1:n+1}) = m(Z_{1:n}) p(y_{n+1} | x_{n+1}, Z_{1:n}).
    ConjugateFit add_pair(const Eigen::VectorXd& design_row, double y_value) const {
        ConjugateFit f;
        f.sigma = sigma;
        const Eigen::VectorXd cx = post.cov * design_row;
        const double denom = sigma * sigma + design_row.dot(cx);
        f.post.cov = post.cov - (cx * cx.transpose()) / denom;
        f.post.mean = post.mean + cx * ((y_value - design_row.dot(post.mean)) / denom);
        f.log_evidence = log_evidence + predictive_logdensity(design_row, y_value);
        return f;
    }
};

// T i.i.d. draws from the exact conjugate posterior.
inline PosteriorDraws sample_posterior_conjugate(const Eigen::MatrixXd& design,
                                                 const Eigen::VectorXd& y, const ModelSpec& spec,
                                                 Eigen::Index draw_count, std::uint64_t seed) {
    if (draw_count < 1) throw config_error("sample_posterior: need T >= 1");
    const GaussianPosterior post = conjugate_posterior(design, y, spec);
    Eigen::LLT<Eigen::MatrixXd> llt(post.cov);
    if (llt.info() != Eigen::Success)
        throw numeric_error("sample_posterior: covariance factorization failed");
    const Eigen::MatrixXd chol = llt.matrixL();
    const Eigen::Index p = post.mean.size();

    PosteriorDraws draws;
    draws.method = PosteriorDraws::Method::ConjugateExact;
    draws.coefs.resize(draw_count, p);
    draws.noise_sd = Eigen::VectorXd::Constant(draw_count, spec.noise.value);
    draws.log_marginal = log_marginal_likelihood_conjugate(design, y, spec);

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::VectorXd z(p);
    for (Eigen::Index t = 0; t < draw_count; ++t) {
        for (Eigen::Index j = 0; j < p; ++j) z[j] = normal(rng);
        draws.coefs.row(t) = (post.mean + chol * z).transpose();
    }
    return draws;
}

} // namespace cbma

#endif

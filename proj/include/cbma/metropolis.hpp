#ifndef CBMA_METROPOLIS_HPP
#define CBMA_METROPOLIS_HPP

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <random>

#include "cbma/bayes_linear.hpp"
#include "cbma/errors.hpp"
#include "cbma/model.hpp"
#include "cbma/numeric.hpp"

namespace cbma {

// Metropolis accept rule on the log scale: accept iff log u < log_ratio.
// A proposal at strictly higher density (log_ratio > 0) is always accepted.
inline bool mh_accept(double log_ratio, double uniform_draw) {
    if (log_ratio >= 0.0) return true;
    return std::log(uniform_draw) < log_ratio;
}

namespace detail {

// Unnormalized log posterior over the unconstrained state (beta, log sigma).
// With a known noise sd, the state is beta alone. The half-normal prior on
// sigma carries the Jacobian of the log transform.
struct LogPosterior {
    const Eigen::MatrixXd& design;
    const Eigen::VectorXd& y;
    const ModelSpec& spec;

    Eigen::Index dim() const {
        return spec.basis.width() + (spec.conjugate() ? 0 : 1);
    }

    double operator()(const Eigen::VectorXd& v) const {
        const Eigen::Index p = spec.basis.width();
        const Eigen::VectorXd beta = v.head(p);
        const double log_sigma = spec.conjugate() ? std::log(spec.noise.value) : v[p];
        const double sigma = std::exp(log_sigma);
        const Eigen::Index n = y.size();

        const Eigen::VectorXd r = y - design * beta;
        double lp = -0.5 * static_cast<double>(n) * kLogTwoPi -
                    static_cast<double>(n) * log_sigma -
                    r.squaredNorm() / (2.0 * sigma * sigma);
        for (Eigen::Index j = 0; j < p; ++j)
            lp += gaussian_logpdf(beta[j], spec.prior_mean[j], spec.prior_sd[j]);
        if (!spec.conjugate()) {
            const double tau = spec.noise.value;
            lp += std::log(2.0) - 0.5 * kLogTwoPi - std::log(tau) -
                  sigma * sigma / (2.0 * tau * tau) + log_sigma;
        }
        return lp;
    }

    Eigen::VectorXd gradient(const Eigen::VectorXd& v) const {
        const Eigen::Index p = spec.basis.width();
        const Eigen::VectorXd beta = v.head(p);
        const double log_sigma = spec.conjugate() ? std::log(spec.noise.value) : v[p];
        const double sigma = std::exp(log_sigma);
        const Eigen::VectorXd r = y - design * beta;

        Eigen::VectorXd g(dim());
        g.head(p) = design.transpose() * r / (sigma * sigma) -
                    ((beta - spec.prior_mean).array() / spec.prior_sd.array().square()).matrix();
        if (!spec.conjugate()) {
            const double tau = spec.noise.value;
            g[p] = -static_cast<double>(y.size()) + r.squaredNorm() / (sigma * sigma) -
                   sigma * sigma / (tau * tau) + 1.0;
        }
        return g;
    }

    Eigen::MatrixXd hessian_fd(const Eigen::VectorXd& v) const {
        const Eigen::Index d = dim();
        Eigen::MatrixXd h(d, d);
        for (Eigen::Index j = 0; j < d; ++j) {
            const double step = 1e-5 * (1.0 + std::abs(v[j]));
            Eigen::VectorXd hi = v, lo = v;
            hi[j] += step;
            lo[j] -= step;
            h.col(j) = (gradient(hi) - gradient(lo)) / (2.0 * step);
        }
        return 0.5 * (h + h.transpose());
    }
};

struct LaplaceFit {
    Eigen::VectorXd mode;
    Eigen::MatrixXd cov;       // (-H)^{-1} at the mode
    Eigen::MatrixXd cov_chol;  // lower Cholesky factor
    double log_posterior_at_mode = 0.0;
    double log_marginal = 0.0;
};

// Floors the spectrum of a symmetric matrix at a small positive value. Exact
// curvature passes through unchanged; indefinite or near-singular directions
// (finite-difference noise, flat ridges) get a conservative positive
// curvature instead of aborting the fit.
inline Eigen::MatrixXd spectral_floor(const Eigen::MatrixXd& m) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
    if (es.info() != Eigen::Success)
        throw numeric_error("laplace_fit: Hessian eigendecomposition failed");
    const double scale = es.eigenvalues().cwiseAbs().maxCoeff();
    const double floor = std::max(1e-10, 1e-10 * scale);
    if (es.eigenvalues().minCoeff() >= floor) return m;
    const Eigen::VectorXd fixed = es.eigenvalues().cwiseMax(floor);
    return es.eigenvectors() * fixed.asDiagonal() * es.eigenvectors().transpose();
}

// Posterior mode by modified-Newton ascent with backtracking line search (the
// negated Hessian is spectrally floored wherever it fails to be positive
// definite), then the Laplace evidence
// log m ~= lp(mode) + d/2 log 2pi + 1/2 log det cov.
inline LaplaceFit laplace_fit(const LogPosterior& target, const Eigen::VectorXd& init,
                              int max_iterations = 200, double grad_tolerance = 1e-8) {
    Eigen::VectorXd v = init;
    double lp = target(v);
    for (int it = 0; it < max_iterations; ++it) {
        const Eigen::VectorXd g = target.gradient(v);
        if (g.norm() < grad_tolerance) break;
        const Eigen::MatrixXd neg_h = spectral_floor(-target.hessian_fd(v));
        Eigen::LLT<Eigen::MatrixXd> llt(neg_h);
        const Eigen::VectorXd dir =
            llt.info() == Eigen::Success ? Eigen::VectorXd(llt.solve(g)) : g / g.norm();
        double step = 1.0;
        bool moved = false;
        for (int bt = 0; bt < 40; ++bt) {
            const Eigen::VectorXd cand = v + step * dir;
            const double lp_cand = target(cand);
            if (std::isfinite(lp_cand) && lp_cand > lp) {
                v = cand;
                lp = lp_cand;
                moved = true;
                break;
            }
            step *= 0.5;
        }
        if (!moved) break;
    }

    LaplaceFit fit;
    fit.mode = v;
    fit.log_posterior_at_mode = lp;
    const Eigen::MatrixXd neg_h = spectral_floor(-target.hessian_fd(v));
    Eigen::LLT<Eigen::MatrixXd> llt(neg_h);
    if (llt.info() != Eigen::Success)
        throw numeric_error("laplace_fit: Hessian at mode not negative definite");
    const Eigen::Index d = target.dim();
    fit.cov = llt.solve(Eigen::MatrixXd::Identity(d, d));
    Eigen::LLT<Eigen::MatrixXd> cov_llt(fit.cov);
    if (cov_llt.info() != Eigen::Success)
        throw numeric_error("laplace_fit: covariance factorization failed");
    fit.cov_chol = cov_llt.matrixL();
    const double log_det_neg_h =
        2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
    fit.log_marginal = lp + 0.5 * static_cast<double>(d) * kLogTwoPi - 0.5 * log_det_neg_h;
    return fit;
}

} // namespace detail

struct MetropolisConfig {
    int burn_in = 5000;
    int thin = 5;
    double target_acceptance = 0.35;
    double adaptation_decay = 0.66; // Robbins-Monro exponent
};

// Adaptive random-walk Metropolis on (coefficients, log sigma) with a
// Laplace-shaped proposal, Robbins-Monro scale adaptation over the burn-in,
// and a Laplace log marginal likelihood at the posterior mode.
inline PosteriorDraws sample_posterior_metropolis(const Eigen::MatrixXd& design,
                                                  const Eigen::VectorXd& y, const ModelSpec& spec,
                                                  Eigen::Index draw_count, std::uint64_t seed,
                                                  const MetropolisConfig& config = {}) {
    if (draw_count < 1) throw config_error("sample_posterior: need T >= 1");
    const detail::LogPosterior target{design, y, spec};
    const Eigen::Index p = spec.basis.width();
    const Eigen::Index d = target.dim();

    Eigen::VectorXd init(d);
    init.head(p) = spec.prior_mean;
    if (!spec.conjugate()) {
        const double resid_sd =
            y.size() > 1 ? std::sqrt((y.array() - y.mean()).square().sum() /
                                     static_cast<double>(y.size() - 1))
                         : 1.0;
        init[p] = std::log(std::max(resid_sd, 1e-3));
    }
    const detail::LaplaceFit laplace = detail::laplace_fit(target, init);

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> uniform(0.0, 1.0);
    auto propose = [&](const Eigen::VectorXd& v, double scale) {
        Eigen::VectorXd z(d);
        for (Eigen::Index j = 0; j < d; ++j) z[j] = normal(rng);
        return Eigen::VectorXd(v + scale * (laplace.cov_chol * z));
    };

    Eigen::VectorXd state = laplace.mode;
    double state_lp = laplace.log_posterior_at_mode;
    double log_scale = std::log(2.38 / std::sqrt(static_cast<double>(d)));

    for (int it = 0; it < config.burn_in; ++it) {
        const Eigen::VectorXd cand = propose(state, std::exp(log_scale));
        const double cand_lp = target(cand);
        const bool accepted = mh_accept(cand_lp - state_lp, uniform(rng));
        if (accepted) {
            state = cand;
            state_lp = cand_lp;
        }
        const double gain = std::pow(static_cast<double>(it + 1), -config.adaptation_decay);
        log_scale += gain * ((accepted ? 1.0 : 0.0) - config.target_acceptance);
    }

    PosteriorDraws draws;
    draws.method = PosteriorDraws::Method::MetropolisLaplace;
    draws.coefs.resize(draw_count, p);
    draws.noise_sd.resize(draw_count);
    draws.log_marginal = laplace.log_marginal;

    const double scale = std::exp(log_scale);
    long accepted_count = 0;
    long total = 0;
    for (Eigen::Index t = 0; t < draw_count; ++t) {
        for (int s = 0; s < config.thin; ++s) {
            const Eigen::VectorXd cand = propose(state, scale);
            const double cand_lp = target(cand);
            ++total;
            if (mh_accept(cand_lp - state_lp, uniform(rng))) {
                state = cand;
                state_lp = cand_lp;
                ++accepted_count;
            }
        }
        draws.coefs.row(t) = state.head(p).transpose();
        draws.noise_sd[t] = spec.conjugate() ? spec.noise.value : std::exp(state[p]);
    }
    draws.acceptance_rate = static_cast<double>(accepted_count) / static_cast<double>(total);
    if (draws.acceptance_rate < 0.05 || draws.acceptance_rate > 0.8)
        draws.warning = "metropolis acceptance rate " + std::to_string(draws.acceptance_rate) +
                        " outside [0.05, 0.8] after adaptation";
    return draws;
}

// Dispatch on the noise prior: exact i.i.d. draws for the conjugate case,
// adaptive Metropolis otherwise.
inline PosteriorDraws sample_posterior(const Eigen::MatrixXd& design, const Eigen::VectorXd& y,
                                       const ModelSpec& spec, Eigen::Index draw_count,
                                       std::uint64_t seed) {
    if (spec.conjugate()) return sample_posterior_conjugate(design, y, spec, draw_count, seed);
    return sample_posterior_metropolis(design, y, spec, draw_count, seed);
}

// Laplace evidence alone (used to cross-check against the conjugate closed
// form when the noise sd is known).
inline double log_marginal_likelihood_laplace(const Eigen::MatrixXd& design,
                                              const Eigen::VectorXd& y, const ModelSpec& spec) {
    const detail::LogPosterior target{design, y, spec};
    Eigen::VectorXd init(target.dim());
    init.head(spec.basis.width()) = spec.prior_mean;
    if (!spec.conjugate()) init[spec.basis.width()] = 0.0;
    return detail::laplace_fit(target, init).log_marginal;
}

} // namespace cbma

#endif

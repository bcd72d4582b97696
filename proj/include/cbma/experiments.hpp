#ifndef CBMA_EXPERIMENTS_HPP
#define CBMA_EXPERIMENTS_HPP

#include <Eigen/Dense>
#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <functional>
#include <map>
#include <numeric>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "cbma/baselines.hpp"
#include "cbma/dataset.hpp"
#include "cbma/engine.hpp"
#include "cbma/errors.hpp"
#include "cbma/model.hpp"
#include "cbma/numeric.hpp"

namespace cbma {

// ---------------------------------------------------------------------------
// Data generators
// ---------------------------------------------------------------------------

struct GeneratorSpec {
    enum class Kind { Quadratic, HermiteHetero, Csv };

    Kind kind = Kind::Quadratic;
    Eigen::Index n = 100;
    double theta = 1.0; // hermite signal scale
    std::string csv_path;
    std::string response_column;
    std::vector<std::string> covariate_columns;

    static GeneratorSpec quadratic(Eigen::Index n) { return {Kind::Quadratic, n}; }
    static GeneratorSpec hermite(Eigen::Index n, double theta) {
        GeneratorSpec g{Kind::HermiteHetero, n};
        g.theta = theta;
        return g;
    }
    static GeneratorSpec csv(std::string path, std::string response, Eigen::Index n) {
        GeneratorSpec g{Kind::Csv, n};
        g.csv_path = std::move(path);
        g.response_column = std::move(response);
        return g;
    }
};

// The generating noise variance of the quadratic setup. A noise level quoted
// as "N(0, 0.2)" is read here as variance 0.2; the choice is echoed into run
// metadata.
inline constexpr double kQuadraticNoiseVariance = 0.2;

inline double quadratic_response_mean(const Eigen::Vector3d& beta, double x) {
    return beta[0] + beta[1] * x + beta[2] * x * x;
}

inline double hermite_response_mean(double theta, double x) {
    return theta * std::exp(x) / (1.0 + std::exp(x));
}

struct GeneratedData {
    Dataset data;
    Eigen::VectorXd latent; // beta for quadratic, (theta) for hermite
};

// Conditional response draw given the latent generator parameters; used to
// produce a test response at a held covariate.
inline double response_draw(const GeneratorSpec& spec, const Eigen::VectorXd& latent, double x,
                            std::mt19937_64& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    switch (spec.kind) {
        case GeneratorSpec::Kind::Quadratic:
            return quadratic_response_mean(latent.head<3>(), x) +
                   std::sqrt(kQuadraticNoiseVariance) * normal(rng);
        case GeneratorSpec::Kind::HermiteHetero:
            return hermite_response_mean(latent[0], x) + (0.01 + x) * normal(rng);
        case GeneratorSpec::Kind::Csv:
            throw config_error("response_draw: not defined for csv data");
    }
    throw config_error("response_draw: unknown generator");
}

inline GeneratedData generate_with_latent(const GeneratorSpec& spec, std::mt19937_64& rng) {
    if (spec.kind != GeneratorSpec::Kind::Csv && spec.n < 4)
        throw config_error("generate: need n >= 4");
    GeneratedData out;
    std::normal_distribution<double> normal(0.0, 1.0);
    switch (spec.kind) {
        case GeneratorSpec::Kind::Quadratic: {
            std::uniform_real_distribution<double> unif(0.0, 1.0);
            Eigen::Vector3d beta;
            beta << 0.0 + 0.5 * normal(rng), 1.0 + 0.5 * normal(rng), 0.5 + 0.5 * normal(rng);
            out.latent = beta;
            out.data.x.resize(spec.n, 1);
            out.data.y.resize(spec.n);
            const double noise_sd = std::sqrt(kQuadraticNoiseVariance);
            for (Eigen::Index i = 0; i < spec.n; ++i) {
                const double x = unif(rng);
                out.data.x(i, 0) = x;
                out.data.y[i] = quadratic_response_mean(beta, x) + noise_sd * normal(rng);
            }
            break;
        }
        case GeneratorSpec::Kind::HermiteHetero: {
            std::weibull_distribution<double> weibull(1.0, 1.0);
            out.latent = Eigen::VectorXd::Constant(1, spec.theta);
            out.data.x.resize(spec.n, 1);
            out.data.y.resize(spec.n);
            for (Eigen::Index i = 0; i < spec.n; ++i) {
                const double x = weibull(rng);
                out.data.x(i, 0) = x;
                out.data.y[i] = hermite_response_mean(spec.theta, x) + (0.01 + x) * normal(rng);
            }
            break;
        }
        case GeneratorSpec::Kind::Csv: {
            Dataset full = load_csv(spec.csv_path, spec.response_column, spec.covariate_columns);
            Eigen::Index take = spec.n > 0 ? std::min(spec.n, full.n()) : full.n();
            if (take < 4) throw data_error("generate: fewer than 4 usable csv rows");
            std::vector<Eigen::Index> idx(static_cast<size_t>(full.n()));
            std::iota(idx.begin(), idx.end(), 0);
            std::shuffle(idx.begin(), idx.end(), rng);
            idx.resize(static_cast<size_t>(take));
            out.data = standardize(full.rows(idx));
            out.latent = Eigen::VectorXd();
            break;
        }
    }
    return out;
}

inline Dataset generate(const GeneratorSpec& spec, std::mt19937_64& rng) {
    return generate_with_latent(spec, rng).data;
}

inline Dataset generate(const GeneratorSpec& spec, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    return generate(spec, rng);
}

// ---------------------------------------------------------------------------
// Model spaces
// ---------------------------------------------------------------------------

// The three candidate models of the quadratic study; coefficient priors are
// the generating priors, noise sd known.
inline ModelSpace quadratic_model_space() {
    const NoiseSpec noise = NoiseSpec::known_sd(std::sqrt(kQuadraticNoiseVariance));
    auto vec = [](std::initializer_list<double> v) {
        Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
        Eigen::Index i = 0;
        for (double x : v) out[i++] = x;
        return out;
    };
    std::vector<ModelSpec> models;
    models.push_back(ModelSpec::make("M1", BasisSpec::polynomial(2), vec({0.0, 1.0, 0.5}),
                                     vec({0.5, 0.5, 0.5}), noise));
    models.push_back(ModelSpec::make("M2", BasisSpec::polynomial(1), vec({0.0, 1.0}),
                                     vec({0.5, 0.5}), noise));
    models.push_back(ModelSpec::make("M3", BasisSpec::powers({2}), vec({0.0, 0.5}),
                                     vec({0.5, 0.5}), noise));
    return ModelSpace(std::move(models));
}

// Nested Hermite-basis models M_1..M_K with weighted-polynomial columns.
inline ModelSpace hermite_model_space(int k_max = 11, double prior_sd = 5.0,
                                      double noise_scale = 1.0) {
    std::vector<ModelSpec> models;
    for (int k = 1; k <= k_max; ++k)
        models.push_back(ModelSpec::iso("M" + std::to_string(k), BasisSpec::hermite(k), prior_sd,
                                        NoiseSpec::half_normal(noise_scale)));
    return ModelSpace(std::move(models));
}

// Two-covariate models M_k : y ~ intercept + X_k + X_{k+1}.
inline ModelSpace csv_pair_model_space(Eigen::Index d, int k_models = 4, double prior_sd = 5.0,
                                       double noise_scale = 1.0) {
    if (d < k_models + 1)
        throw config_error("csv model space: need at least " + std::to_string(k_models + 1) +
                           " covariates");
    std::vector<ModelSpec> models;
    for (int k = 0; k < k_models; ++k)
        models.push_back(ModelSpec::iso("M" + std::to_string(k + 1),
                                        BasisSpec::raw({k, k + 1}), prior_sd,
                                        NoiseSpec::half_normal(noise_scale)));
    return ModelSpace(std::move(models));
}

// ---------------------------------------------------------------------------
// Repeated-experiment harness
// ---------------------------------------------------------------------------

struct ExperimentConfig {
    double alpha = 0.2;
    int reps = 50;
    Eigen::Index draws = 4000;
    double test_fraction = 0.4;
    Eigen::Index grid_points = 200;
    double grid_expand = 0.5;
    std::uint64_t seed = 1;
    int threads = 1;
    bool majority_vote = false;
    bool exact = false; // closed-form scores, conjugate spaces only
};

struct RepRow {
    std::string method;
    int repetition = 0;
    double coverage = 0.0;
    double mean_length = 0.0;
    double time_sec = 0.0;
};

struct ExperimentReport {
    std::vector<RepRow> rows;
    std::map<std::string, SummaryStats> coverage;
    std::map<std::string, SummaryStats> length;
    long degenerate_grid_points = 0;
    int failed_repetitions = 0;
    std::vector<std::string> failures;
    std::map<std::string, std::string> metadata;

    std::vector<double> column(const std::string& method, bool lengths) const {
        std::vector<double> v;
        for (const auto& r : rows)
            if (r.method == method) v.push_back(lengths ? r.mean_length : r.coverage);
        return v;
    }
};

namespace detail {

inline void parallel_for(int count, int threads, const std::function<void(int)>& body) {
    threads = std::max(1, threads);
    if (threads == 1 || count <= 1) {
        for (int i = 0; i < count; ++i) body(i);
        return;
    }
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    const int workers = std::min(threads, count);
    pool.reserve(static_cast<size_t>(workers));
    for (int w = 0; w < workers; ++w)
        pool.emplace_back([&] {
            for (int i = next.fetch_add(1); i < count; i = next.fetch_add(1)) body(i);
        });
    for (auto& t : pool) t.join();
}

struct RepOutcome {
    bool failed = false;
    std::string failure;
    std::vector<RepRow> rows;
    long degenerate = 0;
};

} // namespace detail

// One repetition: fresh data, train/test split, one fit, every method scored
// at every test point.
inline detail::RepOutcome run_one_repetition(const GeneratorSpec& generator,
                                             const ModelSpace& space,
                                             const ExperimentConfig& config, int rep) {
    detail::RepOutcome out;
    try {
        std::mt19937_64 rng(split_seed(config.seed, static_cast<std::uint64_t>(rep)));
        const Dataset data = generate(generator, rng);
        const Eigen::Index n = data.n();
        const Eigen::Index n_test = std::max<Eigen::Index>(
            1, static_cast<Eigen::Index>(std::lround(config.test_fraction * static_cast<double>(n))));
        const Eigen::Index n_train = n - n_test;
        if (n_train < 2) throw data_error("repetition: training split too small");

        std::vector<Eigen::Index> idx(static_cast<size_t>(n));
        std::iota(idx.begin(), idx.end(), 0);
        std::shuffle(idx.begin(), idx.end(), rng);
        const Dataset train = data.rows({idx.begin(), idx.begin() + n_train});
        const Dataset test = data.rows({idx.begin() + n_train, idx.end()});

        EngineConfig engine_config;
        engine_config.draws = config.draws;
        engine_config.seed = split_seed(config.seed, 0x5eedULL + static_cast<std::uint64_t>(rep));
        engine_config.exact = config.exact;
        const ConformalBmaEngine engine(train, space, engine_config);
        const LabelGrid grid =
            LabelGrid::from_training(train.y, config.grid_expand, config.grid_points);

        const size_t k_count = space.size();
        struct Accum {
            double cover = 0, length = 0, time = 0;
        };
        std::map<std::string, Accum> acc;
        auto record = [&](const std::string& method, const PredictionSet& set, double y_true,
                          double time_sec) {
            auto& a = acc[method];
            a.cover += set.covers(y_true) ? 1.0 : 0.0;
            a.length += set.length();
            a.time += time_sec;
        };

        for (Eigen::Index i = 0; i < test.n(); ++i) {
            const MethodSets sets =
                engine.predict(test.x.row(i).transpose(), grid, config.alpha);
            const double y_true = test.y[i];
            out.degenerate += sets.degenerate_points;
            record("CBMA", sets.cbma, y_true, sets.time_cbma_overhead);
            const double cb_share = sets.time_cb / static_cast<double>(k_count);
            const double bayes_share = sets.time_bayes / static_cast<double>(k_count + 1);
            for (size_t k = 0; k < k_count; ++k) {
                record("CB-M" + std::to_string(k + 1), sets.cb[k], y_true, cb_share);
                record("Bayes-M" + std::to_string(k + 1), sets.bayes[k], y_true, bayes_share);
            }
            record("BMA-credible", sets.bma_credible, y_true, bayes_share);
            if (config.majority_vote) {
                const auto t0 = std::chrono::steady_clock::now();
                const PredictionSet merged = majority_vote_merge(
                    sets.cb, MergeRule::uniform(static_cast<Eigen::Index>(k_count)));
                record("MajorityVote", merged, y_true,
                       std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
                           .count());
            }
        }

        const double denom = static_cast<double>(test.n());
        for (const auto& [method, a] : acc)
            out.rows.push_back({method, rep, a.cover / denom, a.length / denom, a.time});
    } catch (const std::exception& e) {
        out.failed = true;
        out.failure = "repetition " + std::to_string(rep) + ": " + e.what();
    }
    return out;
}

inline ExperimentReport run_experiment(const GeneratorSpec& generator, const ModelSpace& space,
                                       const ExperimentConfig& config) {
    if (config.reps < 1) throw config_error("run_experiment: need E >= 1");
    if (!(config.test_fraction > 0.0 && config.test_fraction < 1.0))
        throw config_error("run_experiment: test fraction must lie in (0, 1)");

    std::vector<detail::RepOutcome> outcomes(static_cast<size_t>(config.reps));
    detail::parallel_for(config.reps, config.threads, [&](int rep) {
        outcomes[static_cast<size_t>(rep)] = run_one_repetition(generator, space, config, rep);
    });

    ExperimentReport report;
    for (auto& o : outcomes) {
        if (o.failed) {
            ++report.failed_repetitions;
            report.failures.push_back(o.failure);
            continue;
        }
        report.degenerate_grid_points += o.degenerate;
        for (auto& r : o.rows) report.rows.push_back(std::move(r));
    }
    std::map<std::string, std::vector<double>> cov, len;
    for (const auto& r : report.rows) {
        cov[r.method].push_back(r.coverage);
        len[r.method].push_back(r.mean_length);
    }
    for (auto& [method, v] : cov) report.coverage[method] = summarize(v);
    for (auto& [method, v] : len) report.length[method] = summarize(v);
    report.metadata["quadratic_noise_interpretation"] =
        "N(0,0.2) read as variance 0.2 (sd sqrt(0.2))";
    report.metadata["majority_vote_guarantee"] =
        "inputs at level alpha; merged set guarantees 1-2*alpha (dependent sets)";
    return report;
}

// ---------------------------------------------------------------------------
// Weight-convergence study
// ---------------------------------------------------------------------------

struct ConvergenceResult {
    std::vector<Eigen::Index> n_values;
    std::vector<SummaryStats> q_true;    // per n, across repetitions
};

// Tracks the CBMA aggregation weight of a flagged true model at a fixed test
// covariate as the sample size grows. Exact conjugate path.
inline ConvergenceResult convergence_study(GeneratorSpec generator, const ModelSpace& space,
                                           size_t true_model_index,
                                           const std::vector<Eigen::Index>& n_list, int reps,
                                           double test_x, const ExperimentConfig& config) {
    if (true_model_index >= space.size())
        throw config_error("convergence_study: true model index out of range");
    if (!space.all_conjugate())
        throw unsupported_oracle_error("convergence_study: requires a conjugate model space");

    ConvergenceResult result;
    for (size_t ni = 0; ni < n_list.size(); ++ni) {
        const Eigen::Index n = n_list[ni];
        std::vector<double> q_values(static_cast<size_t>(reps), 0.0);
        std::vector<std::string> failures;
        detail::parallel_for(reps, config.threads, [&](int rep) {
            std::mt19937_64 rng(
                split_seed(config.seed, (ni + 1) * 1000003ULL + static_cast<std::uint64_t>(rep)));
            GeneratorSpec spec = generator;
            spec.n = n;
            const GeneratedData gen = generate_with_latent(spec, rng);
            const double y_true = response_draw(spec, gen.latent, test_x, rng);

            EngineConfig engine_config;
            engine_config.exact = true;
            const ConformalBmaEngine engine(gen.data, space, engine_config);
            const LabelGrid grid =
                LabelGrid::from_training(gen.data.y, config.grid_expand, config.grid_points);
            const double y_grid = grid.values[grid.nearest(y_true)];
            const Eigen::VectorXd x_raw = Eigen::VectorXd::Constant(1, test_x);
            const Eigen::VectorXd q = engine.q_at(x_raw, y_grid);
            q_values[static_cast<size_t>(rep)] = q[static_cast<Eigen::Index>(true_model_index)];
        });
        result.n_values.push_back(n);
        result.q_true.push_back(summarize(q_values));
    }
    return result;
}

} // namespace cbma

#endif

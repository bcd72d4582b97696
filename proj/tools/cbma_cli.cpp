// cbma: conformal prediction sets by Bayesian model averaging.
//
// Subcommands: simulate-quadratic, simulate-hermite, run-csv, convergence,
// predict-one. Each run writes report.csv and summary.json into --out.

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <thread>

#include "cbma/config.hpp"
#include "cbma/dataset.hpp"
#include "cbma/engine.hpp"
#include "cbma/experiments.hpp"
#include "cbma/report.hpp"

namespace {

struct FlagCapture {
    std::optional<std::string> config_file;
    std::map<std::string, std::string> flags;
};

void add_common_flags(CLI::App* cmd, FlagCapture& capture) {
    static const std::vector<std::pair<std::string, std::string>> options = {
        {"--alpha", "alpha"},          {"--n", "n"},
        {"--reps", "reps"},            {"--draws", "draws"},
        {"--grid-points", "grid-points"}, {"--grid-expand", "grid-expand"},
        {"--seed", "seed"},            {"--threads", "threads"},
        {"--out", "out"},              {"--csv", "csv"},
        {"--response", "response"},    {"--test-x", "test-x"},
        {"--models", "models"},        {"--theta", "theta"},
        {"--n-list", "n-list"}};
    cmd->add_option_function<std::string>(
        "--config", [&capture](const std::string& v) { capture.config_file = v; },
        "flat key = value config file");
    for (const auto& [flag, key] : options) {
        const std::string k = key;
        cmd->add_option_function<std::string>(
            flag, [&capture, k](const std::string& v) { capture.flags[k] = v; });
    }
}

int effective_threads(const cbma::RunConfig& config) {
    if (config.threads > 0) return config.threads;
    const unsigned hw = std::thread::hardware_concurrency();
    return hw > 0 ? static_cast<int>(hw) : 1;
}

cbma::ExperimentConfig experiment_config(const cbma::RunConfig& config) {
    cbma::ExperimentConfig e;
    e.alpha = config.alpha;
    e.reps = config.reps;
    e.draws = config.draws;
    e.grid_points = config.grid_points;
    e.grid_expand = config.grid_expand;
    e.seed = config.seed;
    e.threads = effective_threads(config);
    return e;
}

void write_outputs(const cbma::ExperimentReport& report, const cbma::RunConfig& config) {
    std::filesystem::create_directories(config.out);
    cbma::write_report_files(report, config.echo, config.out);
    std::cout << "wrote " << config.out << "/report.csv and summary.json\n";
    for (const auto& [method, stats] : report.coverage)
        std::cout << method << ": coverage " << stats.mean << " (se " << stats.se << "), length "
                  << report.length.at(method).mean << " (se " << report.length.at(method).se
                  << ")\n";
    if (report.failed_repetitions > 0)
        std::cout << report.failed_repetitions << " repetition(s) failed\n";
}

std::string format_intervals(const cbma::PredictionSet& set) {
    std::string out;
    bool in_run = false;
    double run_lo = 0;
    double prev = 0;
    for (Eigen::Index g = 0; g < set.grid.size(); ++g) {
        const bool inc = set.included[static_cast<size_t>(g)] != 0;
        const double v = set.grid.values[g];
        if (inc && !in_run) {
            run_lo = v;
            in_run = true;
        } else if (!inc && in_run) {
            out += (out.empty() ? "" : " U ") + ("[" + std::to_string(run_lo) + ", " +
                                                 std::to_string(prev) + "]");
            in_run = false;
        }
        if (inc) prev = v;
    }
    if (in_run)
        out += (out.empty() ? "" : " U ") +
               ("[" + std::to_string(run_lo) + ", " + std::to_string(prev) + "]");
    return out.empty() ? "(empty)" : out;
}

int run_simulate_quadratic(const cbma::RunConfig& config) {
    auto e = experiment_config(config);
    e.exact = true; // known-noise conjugate models: closed-form scores
    auto report = cbma::run_experiment(cbma::GeneratorSpec::quadratic(config.n),
                                       cbma::quadratic_model_space(), e);
    write_outputs(report, config);
    return 0;
}

int run_simulate_hermite(const cbma::RunConfig& config) {
    const int k = config.echo.count("models") ? config.models : 11;
    auto report = cbma::run_experiment(cbma::GeneratorSpec::hermite(config.n, config.theta),
                                       cbma::hermite_model_space(k), experiment_config(config));
    write_outputs(report, config);
    return 0;
}

int run_csv(const cbma::RunConfig& config) {
    if (config.csv.empty() || config.response.empty())
        throw cbma::config_error("run-csv: --csv and --response are required");
    const cbma::Dataset probe = cbma::load_csv(config.csv, config.response);
    auto space = cbma::csv_pair_model_space(probe.d(), config.models);
    auto e = experiment_config(config);
    e.majority_vote = true;
    auto report = cbma::run_experiment(
        cbma::GeneratorSpec::csv(config.csv, config.response, config.n), space, e);
    write_outputs(report, config);
    return 0;
}

int run_convergence(const cbma::RunConfig& config) {
    const double test_x = config.test_x.empty() ? 0.5 : std::stod(config.test_x);
    std::vector<Eigen::Index> n_list(config.n_list.begin(), config.n_list.end());
    const auto result =
        cbma::convergence_study(cbma::GeneratorSpec::quadratic(config.n),
                                cbma::quadratic_model_space(), 0, n_list, config.reps, test_x,
                                experiment_config(config));
    nlohmann::json j;
    j["config"] = config.echo;
    j["test_x"] = test_x;
    nlohmann::json per_n = nlohmann::json::array();
    for (size_t i = 0; i < result.n_values.size(); ++i) {
        nlohmann::json row;
        row["n"] = result.n_values[i];
        row["q_true"] = cbma::stats_json(result.q_true[i]);
        per_n.push_back(row);
        std::cout << "n=" << result.n_values[i] << ": median q_true "
                  << result.q_true[i].median << " [Q1 " << result.q_true[i].q1 << ", Q3 "
                  << result.q_true[i].q3 << "]\n";
    }
    j["q_true_by_n"] = per_n;
    std::filesystem::create_directories(config.out);
    std::ofstream js(config.out + "/summary.json");
    js << j.dump(2) << '\n';
    std::cout << "wrote " << config.out << "/summary.json\n";
    return 0;
}

int run_predict_one(const cbma::RunConfig& config) {
    if (config.csv.empty() || config.response.empty() || config.test_x.empty())
        throw cbma::config_error("predict-one: --csv, --response and --test-x are required");

    cbma::Dataset raw = cbma::load_csv(config.csv, config.response);
    // Standardize with training statistics; the set is reported in raw
    // response units afterwards.
    Eigen::VectorXd x_mean(raw.d()), x_sd(raw.d());
    const double nn = static_cast<double>(raw.n());
    for (Eigen::Index j = 0; j < raw.d(); ++j) {
        x_mean[j] = raw.x.col(j).mean();
        x_sd[j] = std::sqrt((raw.x.col(j).array() - x_mean[j]).square().sum() / (nn - 1.0));
    }
    const double y_mean = raw.y.mean();
    const double y_sd = std::sqrt((raw.y.array() - y_mean).square().sum() / (nn - 1.0));
    const cbma::Dataset train = cbma::standardize(raw);

    std::vector<double> xs;
    {
        std::stringstream ss(config.test_x);
        std::string field;
        while (std::getline(ss, field, ',')) xs.push_back(std::stod(field));
    }
    if (static_cast<Eigen::Index>(xs.size()) != raw.d())
        throw cbma::data_error("predict-one: test-x needs " + std::to_string(raw.d()) +
                               " comma-separated values");
    Eigen::VectorXd x_raw(raw.d());
    for (Eigen::Index j = 0; j < raw.d(); ++j) x_raw[j] = (xs[static_cast<size_t>(j)] - x_mean[j]) / x_sd[j];

    auto space = cbma::csv_pair_model_space(train.d(), config.models);
    cbma::EngineConfig engine_config;
    engine_config.draws = config.draws;
    engine_config.seed = config.seed;
    const cbma::ConformalBmaEngine engine(train, space, engine_config);
    const cbma::LabelGrid grid =
        cbma::LabelGrid::from_training(train.y, config.grid_expand, config.grid_points);
    const auto sets = engine.predict(x_raw, grid, config.alpha, /*with_credible=*/false);

    auto to_raw = [&](cbma::PredictionSet set) {
        set.grid.values = (set.grid.values.array() * y_sd + y_mean).matrix();
        set.grid.spacing *= y_sd;
        return set;
    };
    const auto cbma_set = to_raw(sets.cbma);
    std::cout << "CBMA: " << format_intervals(cbma_set) << " length "
              << cbma_set.length() << '\n';
    for (size_t k = 0; k < sets.cb.size(); ++k) {
        const auto cb = to_raw(sets.cb[k]);
        std::cout << "CB-M" << k + 1 << ": " << format_intervals(cb) << " length "
                  << cb.length() << '\n';
    }
    // Mean aggregation weight per model over the candidate grid.
    const Eigen::VectorXd q_mean = sets.q.colwise().mean().transpose();
    for (Eigen::Index k = 0; k < q_mean.size(); ++k)
        std::cout << "q-M" << k + 1 << ": " << q_mean[k] << '\n';
    if (!engine.warnings().empty()) std::cerr << engine.warnings();
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"conformal prediction sets by Bayesian model averaging"};
    app.require_subcommand(1);

    struct Sub {
        CLI::App* cmd;
        FlagCapture capture;
        int (*run)(const cbma::RunConfig&);
    };
    std::vector<std::unique_ptr<Sub>> subs;
    auto add = [&](const std::string& name, const std::string& help,
                   int (*run)(const cbma::RunConfig&)) {
        auto sub = std::make_unique<Sub>();
        sub->cmd = app.add_subcommand(name, help);
        sub->run = run;
        add_common_flags(sub->cmd, sub->capture);
        subs.push_back(std::move(sub));
    };
    add("simulate-quadratic", "quadratic-model benchmark", run_simulate_quadratic);
    add("simulate-hermite", "Hermite-basis heteroskedastic benchmark", run_simulate_hermite);
    add("run-csv", "benchmark on a CSV dataset", run_csv);
    add("convergence", "aggregation-weight convergence study", run_convergence);
    add("predict-one", "one CBMA prediction set for a single test covariate", run_predict_one);

    CLI11_PARSE(app, argc, argv);

    try {
        for (const auto& sub : subs) {
            if (!sub->cmd->parsed()) continue;
            const cbma::RunConfig config =
                cbma::parse_config(sub->capture.config_file, sub->capture.flags);
            return sub->run(config);
        }
        std::cerr << "CONFIG_ERROR: no subcommand\n";
        return 2;
    } catch (const cbma::config_error& e) {
        std::cerr << "CONFIG_ERROR: " << e.what() << '\n';
        return 2;
    } catch (const cbma::data_error& e) {
        std::cerr << "DATA_ERROR: " << e.what() << '\n';
        return 3;
    } catch (const cbma::numeric_error& e) {
        std::cerr << "NUMERIC_ERROR: " << e.what() << '\n';
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "ERROR: " << e.what() << '\n';
        return 1;
    }
}

#include <CLI11.hpp>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>

#include "subsamp/experiments.hpp"

namespace {

using namespace subsamp;

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumeric = 3;

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::ofstream open_out(const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("FileOpen", "cannot open '" + path + "' for writing");
    return out;
}

struct DataFlags {
    std::string path;
    long long response_col = 0;
    long long trials_col = -1;
    bool header = false;
    bool lenient = false;
    bool add_intercept = false;

    void attach(CLI::App* cmd) {
        cmd->add_option("--data", path, "input CSV file")->required();
        cmd->add_option("--response-col", response_col, "response column index (default 0)");
        cmd->add_option("--trials-col", trials_col, "binomial trials column index");
        cmd->add_flag("--header", header, "skip the first line");
        cmd->add_flag("--lenient", lenient, "count malformed rows instead of failing");
        cmd->add_flag("--add-intercept", add_intercept, "prepend an explicit 1-column");
    }

    LoadReport load() const {
        CsvSchema schema;
        schema.response_col = response_col;
        if (trials_col >= 0) schema.trials_col = trials_col;
        schema.has_header = header;
        schema.strict = !lenient;
        schema.add_intercept = add_intercept;
        return load_csv(path, schema);
    }
};

void print_theta(const char* label, const VectorXd& theta) {
    std::cout << label << "=";
    for (Index j = 0; j < theta.size(); ++j) std::cout << (j ? "," : "") << fmt(theta(j));
    std::cout << "\n";
}

int run(int argc, char** argv) {
    CLI::App app{"Optimal subsampling for M-estimation: planning, two-stage fits and experiments"};
    app.require_subcommand(1);

    // ---- fit-full ----
    auto* fit_cmd = app.add_subcommand("fit-full", "full-data M-estimator");
    DataFlags fit_data;
    fit_data.attach(fit_cmd);
    std::string fit_family = "logistic";
    fit_cmd->add_option("--family", fit_family, "ols|logistic|poisson|binomial|gamma");

    // ---- subsample-fit ----
    auto* sub_cmd = app.add_subcommand("subsample-fit", "one two-stage subsample estimate");
    DataFlags sub_data;
    sub_data.attach(sub_cmd);
    std::string sub_family = "logistic", sub_scheme = "poisson", sub_hmode = "quantile";
    std::string sub_lmatrix, sub_out;
    long long sub_s0 = 100, sub_sn = 1000;
    double sub_alpha = 0.1, sub_b = 5.0;
    std::uint64_t sub_seed = 1;
    sub_cmd->add_option("--family", sub_family, "model family");
    sub_cmd->add_option("--scheme", sub_scheme, "with_replacement|poisson");
    sub_cmd->add_option("--s0", sub_s0, "pilot size")->required();
    sub_cmd->add_option("--s", sub_sn, "second-stage (expected) size")->required();
    sub_cmd->add_option("--alpha", sub_alpha, "defensive mixing weight");
    sub_cmd->add_option("--b", sub_b, "pilot quantile tuning parameter");
    sub_cmd->add_option("--h-mode", sub_hmode, "quantile|infinity");
    sub_cmd->add_option("--L", sub_lmatrix, "CSV with an explicit d x d L matrix");
    sub_cmd->add_option("--seed", sub_seed, "RNG seed");
    sub_cmd->add_option("--out", sub_out, "write the result row CSV here");

    // ---- plan ----
    auto* plan_cmd = app.add_subcommand("plan", "optimal probabilities from gradient norms");
    std::string plan_norms, plan_norms_file, plan_scheme = "poisson", plan_out;
    long long plan_s = 0;
    double plan_alpha = 0.0;
    plan_cmd->add_option("--norms", plan_norms, "comma-separated norm values");
    plan_cmd->add_option("--norms-file", plan_norms_file, "one norm per line");
    plan_cmd->add_option("--scheme", plan_scheme, "with_replacement|poisson");
    plan_cmd->add_option("--s", plan_s, "expected subsample size (poisson)");
    plan_cmd->add_option("--alpha", plan_alpha, "defensive mixing weight");
    plan_cmd->add_option("--out", plan_out, "plan sidecar CSV (index,pi)");

    // ---- mse-experiment ----
    auto* mse_cmd = app.add_subcommand("mse-experiment", "Monte Carlo MSE comparison");
    std::string mse_config, mse_out = "mse.csv";
    bool mse_timings = false;
    std::map<std::string, std::string> overrides;
    mse_cmd->add_option("--config", mse_config, "flat key=value config file");
    mse_cmd->add_option("--out", mse_out, "output CSV path");
    mse_cmd->add_flag("--timings", mse_timings,
                      "write measured wall times (breaks bitwise reproducibility)");
    for (const char* key : {"model", "law", "n", "d", "theta", "family", "csv", "methods",
                            "ratios", "alpha", "s0_frac", "b", "T", "seed", "threads"}) {
        mse_cmd->add_option_function<std::string>(
            std::string("--") + key, [&overrides, key](const std::string& v) { overrides[key] = v; },
            std::string("override config key '") + key + "'");
    }

    // ---- g-table ----
    auto* g_cmd = app.add_subcommand("g-table", "truncation counts for leverage-mode OLS");
    std::string g_laws = "normal,t5,t4,t3,t2,t1", g_ratios = "0.02,0.03,0.05,0.1,0.2";
    std::string g_out = "g_table.csv";
    long long g_n = 100000, g_d = 50;
    std::uint64_t g_seed = 1;
    g_cmd->add_option("--n", g_n, "rows per generated dataset");
    g_cmd->add_option("--d", g_d, "covariate count (plus an intercept)");
    g_cmd->add_option("--laws", g_laws, "comma list: normal, lognormal, t<nu>");
    g_cmd->add_option("--ratios", g_ratios, "comma list of s_n/n");
    g_cmd->add_option("--seed", g_seed, "RNG seed");
    g_cmd->add_option("--out", g_out, "output CSV path");

    // ---- coverage ----
    auto* cov_cmd = app.add_subcommand("coverage", "Gaussian-limit coverage diagnostics");
    std::string cov_model = "linear", cov_law = "normal", cov_scheme = "with_replacement";
    std::string cov_standardize = "matched", cov_out;
    long long cov_n = 10000, cov_d = 19, cov_s = 500, cov_T = 2000;
    std::uint64_t cov_seed = 1;
    cov_cmd->add_option("--model", cov_model, "linear|logistic");
    cov_cmd->add_option("--law", cov_law, "covariate law");
    cov_cmd->add_option("--n", cov_n, "rows");
    cov_cmd->add_option("--d", cov_d, "covariate count");
    cov_cmd->add_option("--s", cov_s, "subsample size");
    cov_cmd->add_option("--T", cov_T, "replicates");
    cov_cmd->add_option("--scheme", cov_scheme, "with_replacement|poisson");
    cov_cmd->add_option("--standardize", cov_standardize, "matched|R|P");
    cov_cmd->add_option("--seed", cov_seed, "RNG seed");
    cov_cmd->add_option("--out", cov_out, "per-coordinate CSV path");

    CLI11_PARSE(app, argc, argv);

    if (fit_cmd->parsed()) {
        const LoadReport loaded = fit_data.load();
        if (loaded.rows_rejected > 0)
            std::cerr << "rejected " << loaded.rows_rejected << " malformed rows\n";
        const SolveReport r = fit_full(family_from_string(fit_family), loaded.data);
        print_theta("theta", r.theta);
        std::cout << "iterations=" << r.iterations << "\ngrad_norm=" << fmt(r.grad_norm) << "\n";
        return 0;
    }

    if (sub_cmd->parsed()) {
        const LoadReport loaded = sub_data.load();
        const Family fam = family_from_string(sub_family);
        LSpec l = LSpec::grad_norm();
        if (!sub_lmatrix.empty()) {
            CsvSchema raw;
            raw.response_col = 0;  // unused; read the matrix rows directly
            const LoadReport lm = load_csv(sub_lmatrix, raw);
            const Index d = loaded.data.dim();
            MatrixXd m(lm.data.rows(), lm.data.dim() + 1);
            for (Index i = 0; i < lm.data.rows(); ++i) {
                m(i, 0) = lm.data.y(i);
                m.row(i).tail(lm.data.dim()) = lm.data.x(i);
            }
            if (m.rows() != d || m.cols() != d)
                throw SchemaMismatchError("L matrix must be d x d with d = " + std::to_string(d));
            l = LSpec::with_matrix(m);
        }
        PipelineResult r;
        if (sub_scheme == "with_replacement")
            r = run_withreplacement(fam, loaded.data, sub_s0, sub_sn, sub_alpha, l,
                                    RngSeed{sub_seed, 0});
        else if (sub_scheme == "poisson")
            r = run_poisson(fam, loaded.data, sub_s0, sub_sn, sub_alpha, sub_b,
                            hmode_from_string(sub_hmode), l, RngSeed{sub_seed, 0});
        else
            throw UsageError("scheme must be with_replacement or poisson");
        print_theta("theta_pilot", r.pilot.theta);
        print_theta("theta_second", r.second.theta);
        print_theta("theta_aggregated", r.theta_aggregated);
        std::cout << "s0_realized=" << r.pilot_size << "\ns_realized=" << r.second_size << "\n";
        if (!sub_out.empty()) {
            auto out = open_out(sub_out);
            write_result_row(r, out);
        }
        return 0;
    }

    if (plan_cmd->parsed()) {
        std::vector<double> vals;
        if (!plan_norms.empty()) {
            std::stringstream ss(plan_norms);
            std::string item;
            while (std::getline(ss, item, ',')) vals.push_back(std::stod(item));
        } else if (!plan_norms_file.empty()) {
            std::ifstream in(plan_norms_file);
            if (!in) throw DataError("FileOpen", "cannot open '" + plan_norms_file + "'");
            double v;
            while (in >> v) vals.push_back(v);
        } else {
            throw UsageError("plan needs --norms or --norms-file");
        }
        const VectorXd t = Eigen::Map<const VectorXd>(vals.data(), static_cast<Index>(vals.size()));
        SamplingPlan plan;
        if (plan_scheme == "poisson") {
            if (plan_s < 1) throw UsageError("poisson plan needs --s >= 1");
            plan = opt_probs_poisson(t, plan_s);
            std::cout << "g=" << plan.threshold->g << "\nH=" << fmt(plan.threshold->H) << "\n";
        } else if (plan_scheme == "with_replacement") {
            plan = opt_probs_withreplacement(t);
        } else {
            throw UsageError("scheme must be with_replacement or poisson");
        }
        if (plan_alpha > 0.0) plan = defensive_mix(std::move(plan), plan_alpha);
        std::cout << "pi=";
        for (Index i = 0; i < plan.pi.size(); ++i) std::cout << (i ? "," : "") << fmt(plan.pi(i));
        std::cout << "\n";
        if (!plan_out.empty()) {
            auto out = open_out(plan_out);
            write_plan_csv(plan, out);
        }
        return 0;
    }

    if (mse_cmd->parsed()) {
        ExperimentConfig cfg = mse_config.empty() ? experiment_config_from_map(overrides)
                                                  : parse_experiment_config(mse_config, overrides);
        const MseTable table = monte_carlo_mse(cfg);
        auto out = open_out(mse_out);
        write_mse_csv(table, out, mse_timings);
        std::cerr << "wrote " << table.cells.size() << " cells to " << mse_out << "\n";
        return 0;
    }

    if (g_cmd->parsed()) {
        std::vector<CovariateLaw> laws;
        {
            std::stringstream ss(g_laws);
            std::string item;
            while (std::getline(ss, item, ',')) laws.push_back(CovariateLaw::parse(item));
        }
        std::vector<double> ratios;
        {
            std::stringstream ss(g_ratios);
            std::string item;
            while (std::getline(ss, item, ',')) ratios.push_back(std::stod(item));
        }
        const auto table = g_table(laws, ratios, g_n, g_d, RngSeed{g_seed, 0});
        auto out = open_out(g_out);
        write_g_table_csv(table, out);
        std::cerr << "wrote " << table.size() << " rows to " << g_out << "\n";
        return 0;
    }

    if (cov_cmd->parsed()) {
        GeneratorSpec spec;
        spec.model = cov_model == "linear" ? GeneratorSpec::Model::linear
                                           : GeneratorSpec::Model::logistic;
        spec.theta_mode = spec.model == GeneratorSpec::Model::linear ? ThetaMode::paper_linear
                                                                     : ThetaMode::paper_logistic;
        spec.n = cov_n;
        spec.d_covariates = cov_d;
        spec.law = CovariateLaw::parse(cov_law);
        const Family fam =
            spec.model == GeneratorSpec::Model::linear ? Family::ols : Family::logistic;
        Scheme scheme;
        if (cov_scheme == "with_replacement" || cov_scheme == "R")
            scheme = Scheme::with_replacement;
        else if (cov_scheme == "poisson" || cov_scheme == "P")
            scheme = Scheme::poisson;
        else
            throw UsageError("scheme must be with_replacement or poisson");
        Standardize st = Standardize::matched;
        if (cov_standardize == "R") st = Standardize::with_replacement;
        else if (cov_standardize == "P") st = Standardize::poisson;
        else if (cov_standardize != "matched")
            throw UsageError("standardize must be matched, R or P");
        const CoverageReport rep =
            coverage_check(fam, spec, scheme, cov_s, cov_T, RngSeed{cov_seed, 0}, st);
        std::cout << "coverage=";
        for (Index j = 0; j < rep.coverage.size(); ++j)
            std::cout << (j ? "," : "") << fmt(rep.coverage(j));
        std::cout << "\nmax_jarque_bera=" << fmt(rep.max_jarque_bera)
                  << "\ndiscarded=" << rep.discarded << "\n";
        if (!cov_out.empty()) {
            auto out = open_out(cov_out);
            write_coverage_csv(rep, out);
        }
        return 0;
    }

    return kExitUsage;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const subsamp::DataError& e) {
        std::cerr << "error [" << e.name() << "]: " << e.what() << "\n";
        return kExitData;
    } catch (const subsamp::Error& e) {
        std::cerr << "error [" << e.name() << "]: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitNumeric;
    }
}

#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "subsamp/pipeline.hpp"
#include "subsamp/variance.hpp"

namespace subsamp {

// ---------------------------------------------------------------------------
// Synthetic data
// ---------------------------------------------------------------------------

// Covariate laws: multivariate normal N(0, Sigma), elementwise exp of it, or
// multivariate t(nu) built as normal / sqrt(chisq_nu / nu). Sigma has unit
// diagonal and 0.5 everywhere else.
struct CovariateLaw {
    enum class Kind { normal, lognormal, student_t } kind = Kind::normal;
    int nu = 3;  // student_t only

    static CovariateLaw parse(const std::string& s);
    std::string name() const;
};

enum class ThetaMode { paper_logistic, paper_linear, custom };

// Generated rows carry an explicit leading 1-column, so theta has
// d_covariates + 1 entries (intercept first).
struct GeneratorSpec {
    enum class Model { linear, logistic } model = Model::logistic;
    Index n = 10000;
    Index d_covariates = 9;
    ThetaMode theta_mode = ThetaMode::paper_logistic;
    VectorXd theta_custom;
    CovariateLaw law;
};

VectorXd true_theta(const GeneratorSpec& spec);
Dataset generate(const GeneratorSpec& spec, RngSeed seed);

// ---------------------------------------------------------------------------
// CSV ingestion
// ---------------------------------------------------------------------------

struct CsvSchema {
    Index response_col = 0;
    std::optional<Index> trials_col;
    std::vector<Index> covariate_cols;  // empty: every remaining column
    bool has_header = false;
    bool strict = true;        // strict: first malformed row is a ParseError
    bool add_intercept = false;  // explicitly prepend a 1-column
};

struct LoadReport {
    Dataset data;
    Index rows_loaded = 0;
    Index rows_rejected = 0;  // lenient mode only
};

LoadReport load_csv(const std::string& path, const CsvSchema& schema);
void write_dataset_csv(const Dataset& data, std::ostream& os);

// ---------------------------------------------------------------------------
// g-table (threshold truncation counts for leverage-mode OLS)
// ---------------------------------------------------------------------------

struct GTableEntry {
    CovariateLaw law;
    double ratio = 0.0;
    Index g = 0;
};

// One linear dataset per law (theta: intercept 1 + ones), full OLS fit,
// L = (X'X)^{1/2} norms, then the threshold scan per ratio.
std::vector<GTableEntry> g_table(const std::vector<CovariateLaw>& laws,
                                 const std::vector<double>& ratios, Index n, Index d_covariates,
                                 RngSeed seed);

void write_g_table_csv(const std::vector<GTableEntry>& table, std::ostream& os);

// ---------------------------------------------------------------------------
// Monte Carlo MSE comparison
// ---------------------------------------------------------------------------

enum class Method { optR, uniR, optP_inf, optP_b, uniP };

Method method_from_string(const std::string& s);
const char* to_string(Method m);

struct ExperimentConfig {
    GeneratorSpec gen;
    std::optional<std::string> csv_path;  // external data instead of generator
    CsvSchema schema;
    Family family = Family::logistic;
    std::vector<Method> methods = {Method::optR, Method::uniR, Method::optP_inf, Method::optP_b,
                                   Method::uniP};
    std::vector<double> ratios = {0.02, 0.1, 0.5};  // (s0 + sn)/n
    double alpha = 0.1;
    double s0_fraction = 0.01;  // s0 = s0_fraction * n
    double b = 5.0;
    Index T = 200;
    std::uint64_t seed = 1;
    int threads = 1;  // 0: hardware concurrency
};

struct MseCell {
    Method method;
    double ratio = 0.0;
    double mse = 0.0;
    double mse_se = 0.0;
    Index discarded = 0;
    double seconds = 0.0;
};

struct MseTable {
    std::vector<MseCell> cells;  // config grid order: methods x ratios
};

// One shared dataset per config; the full-data estimate is fixed and each
// replicate t reruns every method with stream t. Replicates failing in the
// solver or with an empty subsample are excluded and counted. Throws when
// any cell discards more than 10% of its replicates.
MseTable monte_carlo_mse(const ExperimentConfig& cfg);

// Header: method,ratio,mse,mse_se,discarded,seconds. Timings are wall-clock
// and non-reproducible, so they are written as 0 unless requested.
void write_mse_csv(const MseTable& table, std::ostream& os, bool include_timings = false);

// Flat "key = value" config text; '#' starts a comment. Keys mirror the
// struct fields (documented in the README). `overrides` wins over the file.
ExperimentConfig parse_experiment_config(const std::string& path,
                                         const std::map<std::string, std::string>& overrides = {});
ExperimentConfig experiment_config_from_map(const std::map<std::string, std::string>& kv);

// ---------------------------------------------------------------------------
// Coverage diagnostics (Gaussian-limit checks)
// ---------------------------------------------------------------------------

enum class Standardize { matched, with_replacement, poisson };

struct CoverageReport {
    VectorXd coverage;  // per-coordinate empirical coverage of nominal 95%
    VectorXd z_mean;
    VectorXd z_sd;
    double max_jarque_bera = 0.0;  // normality statistic across coordinates
    Index kept = 0;
    Index discarded = 0;
};

// Oracle plans at the full-data estimate (no pilot, no mixing): draws T
// subsamples, standardizes theta_tilde - theta_hat by sqrt(s_n) * V^{-1/2}
// with the scheme's own V (or a deliberately mismatched one).
CoverageReport coverage_check(Family f, const GeneratorSpec& spec, Scheme scheme, Index s_n,
                              Index T, RngSeed seed, Standardize standardize = Standardize::matched);

void write_coverage_csv(const CoverageReport& report, std::ostream& os);

}  // namespace subsamp

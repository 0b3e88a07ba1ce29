#include "subsamp/experiments.hpp"

#include <Eigen/Dense>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <limits>
#include <sstream>
#include <thread>

namespace subsamp {

namespace {

constexpr std::uint64_t kDatasetStream = ~std::uint64_t{0};

void parallel_for(Index tasks, int threads, const std::function<void(Index)>& fn) {
    if (threads == 0) threads = static_cast<int>(std::thread::hardware_concurrency());
    threads = std::max(1, std::min<int>(threads, static_cast<int>(tasks)));
    if (threads == 1) {
        for (Index t = 0; t < tasks; ++t) fn(t);
        return;
    }
    std::atomic<Index> next{0};
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (int w = 0; w < threads; ++w)
        pool.emplace_back([&] {
            for (Index t = next.fetch_add(1); t < tasks; t = next.fetch_add(1)) fn(t);
        });
    for (auto& th : pool) th.join();
}

double sigmoid(double u) { return u >= 0.0 ? 1.0 / (1.0 + std::exp(-u)) : std::exp(u) / (1.0 + std::exp(u)); }

}  // namespace

// ---------------------------------------------------------------------------
// Generators
// ---------------------------------------------------------------------------

CovariateLaw CovariateLaw::parse(const std::string& s) {
    if (s == "normal") return {Kind::normal, 0};
    if (s == "lognormal") return {Kind::lognormal, 0};
    if (s.size() >= 2 && s[0] == 't') {
        int nu = 0;
        auto [p, ec] = std::from_chars(s.data() + 1, s.data() + s.size(), nu);
        if (ec == std::errc{} && p == s.data() + s.size() && nu >= 1) return {Kind::student_t, nu};
    }
    throw SchemaMismatchError("unknown covariate law '" + s + "' (normal, lognormal, t<nu>)");
}

std::string CovariateLaw::name() const {
    switch (kind) {
        case Kind::normal: return "normal";
        case Kind::lognormal: return "lognormal";
        case Kind::student_t: return "t" + std::to_string(nu);
    }
    return "?";
}

VectorXd true_theta(const GeneratorSpec& spec) {
    const Index d = spec.d_covariates + 1;
    switch (spec.theta_mode) {
        case ThetaMode::paper_logistic: {
            return VectorXd::Constant(d, 0.5);
        }
        case ThetaMode::paper_linear: {
            return VectorXd::Ones(d);
        }
        case ThetaMode::custom:
            if (spec.theta_custom.size() != d)
                throw SchemaMismatchError("custom theta must have d_covariates + 1 entries");
            return spec.theta_custom;
    }
    return VectorXd::Zero(d);
}

Dataset generate(const GeneratorSpec& spec, RngSeed seed) {
    if (spec.n < 1 || spec.d_covariates < 1)
        throw SchemaMismatchError("generator needs n >= 1 and d >= 1");
    if (spec.law.kind == CovariateLaw::Kind::student_t && spec.law.nu < 1)
        throw SchemaMismatchError("student t needs nu >= 1");

    const Index n = spec.n;
    const Index dc = spec.d_covariates;
    const VectorXd theta = true_theta(spec);

    // Sigma = 0.5 off diagonal, 1 on it; factored once.
    MatrixXd sigma = MatrixXd::Constant(dc, dc, 0.5);
    sigma.diagonal().setOnes();
    const MatrixXd chol = Eigen::LLT<MatrixXd>(sigma).matrixL();

    Rng rng(seed);
    RowMatrixXd x(n, dc + 1);
    VectorXd y(n);
    VectorXd z(dc);
    for (Index i = 0; i < n; ++i) {
        for (Index j = 0; j < dc; ++j) z(j) = rng.next_normal();
        VectorXd v = chol * z;
        switch (spec.law.kind) {
            case CovariateLaw::Kind::normal:
                break;
            case CovariateLaw::Kind::lognormal:
                v = v.array().exp();
                break;
            case CovariateLaw::Kind::student_t:
                v /= std::sqrt(rng.next_chisq(spec.law.nu) / double(spec.law.nu));
                break;
        }
        x(i, 0) = 1.0;
        x.row(i).tail(dc) = v;
        const double eta = x.row(i).dot(theta);
        if (spec.model == GeneratorSpec::Model::linear)
            y(i) = eta + rng.next_normal();
        else
            y(i) = rng.next_double() < sigmoid(eta) ? 1.0 : 0.0;
    }
    return Dataset(std::move(x), std::move(y));
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

namespace {

bool parse_double(const std::string& field, double* out) {
    const char* begin = field.data();
    const char* end = begin + field.size();
    auto [p, ec] = std::from_chars(begin, end, *out);
    return ec == std::errc{} && p == end;
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            fields.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur.push_back(c);
        }
    }
    fields.push_back(cur);
    return fields;
}

}  // namespace

LoadReport load_csv(const std::string& path, const CsvSchema& schema) {
    std::ifstream in(path);
    if (!in) throw DataError("FileOpen", "cannot open '" + path + "'");

    std::vector<std::vector<double>> rows;
    std::string line;
    std::int64_t lineno = 0;
    Index n_fields = -1;
    Index rejected = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (lineno == 1 && schema.has_header) continue;
        if (line.empty() || line == "\r") continue;
        const auto fields = split_csv_line(line);
        std::vector<double> vals(fields.size());
        bool ok = true;
        for (std::size_t j = 0; j < fields.size(); ++j)
            if (!parse_double(fields[j], &vals[j])) {
                ok = false;
                break;
            }
        if (n_fields < 0 && ok) n_fields = static_cast<Index>(fields.size());
        if (!ok || static_cast<Index>(fields.size()) != n_fields) {
            if (schema.strict) throw ParseError(lineno, "malformed row");
            ++rejected;
            continue;
        }
        rows.push_back(std::move(vals));
    }
    if (rows.empty()) throw SchemaMismatchError("no data rows in '" + path + "'");

    auto col_in_range = [&](Index c) {
        if (c < 0 || c >= n_fields)
            throw SchemaMismatchError("column " + std::to_string(c) + " out of range (file has " +
                                      std::to_string(n_fields) + " columns)");
    };
    col_in_range(schema.response_col);
    if (schema.trials_col) col_in_range(*schema.trials_col);
    std::vector<Index> cov_cols = schema.covariate_cols;
    if (cov_cols.empty()) {
        for (Index c = 0; c < n_fields; ++c)
            if (c != schema.response_col && (!schema.trials_col || c != *schema.trials_col))
                cov_cols.push_back(c);
    } else {
        for (Index c : cov_cols) col_in_range(c);
    }
    if (cov_cols.empty()) throw SchemaMismatchError("no covariate columns");

    const Index n = static_cast<Index>(rows.size());
    const Index extra = schema.add_intercept ? 1 : 0;
    RowMatrixXd x(n, static_cast<Index>(cov_cols.size()) + extra);
    VectorXd y(n);
    std::optional<VectorXd> trials;
    if (schema.trials_col) trials.emplace(n);
    for (Index i = 0; i < n; ++i) {
        if (extra) x(i, 0) = 1.0;
        for (std::size_t j = 0; j < cov_cols.size(); ++j)
            x(i, static_cast<Index>(j) + extra) = rows[i][static_cast<std::size_t>(cov_cols[j])];
        y(i) = rows[i][static_cast<std::size_t>(schema.response_col)];
        if (trials) (*trials)(i) = rows[i][static_cast<std::size_t>(*schema.trials_col)];
    }
    return {Dataset(std::move(x), std::move(y), std::move(trials)), n, rejected};
}

void write_dataset_csv(const Dataset& data, std::ostream& os) {
    char buf[64];
    auto num = [&](double v, bool lead_comma) {
        std::snprintf(buf, sizeof(buf), lead_comma ? ",%.17g" : "%.17g", v);
        os << buf;
    };
    for (Index i = 0; i < data.rows(); ++i) {
        num(data.y(i), false);
        if (data.has_trials()) num(data.trials(i), true);
        for (Index j = 0; j < data.dim(); ++j) num(data.x(i)(j), true);
        os << "\n";
    }
}

// ---------------------------------------------------------------------------
// g-table
// ---------------------------------------------------------------------------

std::vector<GTableEntry> g_table(const std::vector<CovariateLaw>& laws,
                                 const std::vector<double>& ratios, Index n, Index d_covariates,
                                 RngSeed seed) {
    std::vector<GTableEntry> out;
    for (std::size_t li = 0; li < laws.size(); ++li) {
        GeneratorSpec spec;
        spec.model = GeneratorSpec::Model::linear;
        spec.n = n;
        spec.d_covariates = d_covariates;
        spec.theta_mode = ThetaMode::paper_linear;
        spec.law = laws[li];
        const Dataset data = generate(spec, seed.child(li));

        const SolveReport full = fit_full(Family::ols, data);
        // L = (X'X)^{1/2} makes the norms proportional to |resid| * sqrt(leverage).
        const MatrixXd xtx = data.covariates().transpose() * data.covariates();
        Eigen::SelfAdjointEigenSolver<MatrixXd> eig(xtx);
        const MatrixXd l = eig.eigenvectors() *
                           eig.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal() *
                           eig.eigenvectors().transpose();
        const VectorXd t = l_norms(Family::ols, data, full.theta, l);

        for (double ratio : ratios) {
            const Index s_n = static_cast<Index>(std::llround(ratio * double(n)));
            out.push_back({laws[li], ratio, poisson_threshold(t, s_n).g});
        }
    }
    return out;
}

void write_g_table_csv(const std::vector<GTableEntry>& table, std::ostream& os) {
    os << "law,ratio,g\n";
    char buf[64];
    for (const auto& e : table) {
        std::snprintf(buf, sizeof(buf), "%.17g", e.ratio);
        os << e.law.name() << "," << buf << "," << e.g << "\n";
    }
}

// ---------------------------------------------------------------------------
// Monte Carlo MSE
// ---------------------------------------------------------------------------

Method method_from_string(const std::string& s) {
    if (s == "optR") return Method::optR;
    if (s == "uniR") return Method::uniR;
    if (s == "optP_inf") return Method::optP_inf;
    if (s == "optP_b") return Method::optP_b;
    if (s == "uniP") return Method::uniP;
    throw SchemaMismatchError("unknown method '" + s + "'");
}

const char* to_string(Method m) {
    switch (m) {
        case Method::optR: return "optR";
        case Method::uniR: return "uniR";
        case Method::optP_inf: return "optP_inf";
        case Method::optP_b: return "optP_b";
        case Method::uniP: return "uniP";
    }
    return "?";
}

MseTable monte_carlo_mse(const ExperimentConfig& cfg) {
    if (cfg.T < 1) throw SchemaMismatchError("T must be >= 1");
    for (double r : cfg.ratios)
        if (!(r > 0.0 && r < 1.0)) throw SchemaMismatchError("ratios must lie in (0,1)");

    std::optional<Dataset> data;
    if (cfg.csv_path)
        data.emplace(load_csv(*cfg.csv_path, cfg.schema).data);
    else
        data.emplace(generate(cfg.gen, RngSeed{cfg.seed, kDatasetStream}));
    const Index n = data->rows();

    const SolveReport full = fit_full(cfg.family, *data);
    const Index s0 = std::max<Index>(1, static_cast<Index>(std::llround(cfg.s0_fraction * double(n))));

    MseTable table;
    for (Method method : cfg.methods) {
        for (double ratio : cfg.ratios) {
            const Index sn = static_cast<Index>(std::llround(ratio * double(n))) - s0;
            if (sn < 1)
                throw SchemaMismatchError("ratio " + std::to_string(ratio) +
                                          " leaves no room for the second stage after s0");
            const auto start = std::chrono::steady_clock::now();
            std::vector<double> sq_err(cfg.T, std::numeric_limits<double>::quiet_NaN());
            parallel_for(cfg.T, cfg.threads, [&](Index t) {
                const RngSeed rs{cfg.seed, static_cast<std::uint64_t>(t)};
                try {
                    PipelineResult r;
                    switch (method) {
                        case Method::optR:
                            r = run_withreplacement(cfg.family, *data, s0, sn, cfg.alpha,
                                                    LSpec::grad_norm(), rs);
                            break;
                        case Method::uniR:
                            r = run_withreplacement(cfg.family, *data, s0, sn, 1.0,
                                                    LSpec::grad_norm(), rs);
                            break;
                        case Method::optP_inf:
                            r = run_poisson(cfg.family, *data, s0, sn, cfg.alpha, cfg.b,
                                            HMode::infinity, LSpec::grad_norm(), rs);
                            break;
                        case Method::optP_b:
                            r = run_poisson(cfg.family, *data, s0, sn, cfg.alpha, cfg.b,
                                            HMode::quantile, LSpec::grad_norm(), rs);
                            break;
                        case Method::uniP:
                            r = run_poisson(cfg.family, *data, s0, sn, 1.0, cfg.b, HMode::infinity,
                                            LSpec::grad_norm(), rs);
                            break;
                    }
                    sq_err[static_cast<std::size_t>(t)] =
                        (r.theta_aggregated - full.theta).squaredNorm();
                } catch (const NumericError&) {
                    // replicate discarded; recorded below in index order
                }
            });
            MseCell cell;
            cell.method = method;
            cell.ratio = ratio;
            double sum = 0.0;
            Index kept = 0;
            for (double v : sq_err)
                if (std::isfinite(v)) {
                    sum += v;
                    ++kept;
                }
            cell.discarded = cfg.T - kept;
            if (kept > 0) cell.mse = sum / double(kept);
            double var = 0.0;
            for (double v : sq_err)
                if (std::isfinite(v)) var += (v - cell.mse) * (v - cell.mse);
            if (kept > 1) cell.mse_se = std::sqrt(var / double(kept - 1) / double(kept));
            cell.seconds =
                std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
            table.cells.push_back(cell);
        }
    }

    std::string bad;
    for (const auto& cell : table.cells)
        if (double(cell.discarded) > 0.10 * double(cfg.T))
            bad += std::string(bad.empty() ? "" : "; ") + to_string(cell.method) + " at ratio " +
                   std::to_string(cell.ratio) + " discarded " + std::to_string(cell.discarded) +
                   "/" + std::to_string(cfg.T);
    if (!bad.empty()) throw NumericError("ExcessiveDiscards", bad);
    return table;
}

void write_mse_csv(const MseTable& table, std::ostream& os, bool include_timings) {
    os << "method,ratio,mse,mse_se,discarded,seconds\n";
    char buf[160];
    for (const auto& c : table.cells) {
        std::snprintf(buf, sizeof(buf), "%s,%.17g,%.17g,%.17g,%lld,%.6g\n", to_string(c.method),
                      c.ratio, c.mse, c.mse_se, static_cast<long long>(c.discarded),
                      include_timings ? c.seconds : 0.0);
        os << buf;
    }
}

// ---------------------------------------------------------------------------
// Config files
// ---------------------------------------------------------------------------

namespace {

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r");
    std::size_t b = s.find_last_not_of(" \t\r");
    return a == std::string::npos ? "" : s.substr(a, b - a + 1);
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

}  // namespace

ExperimentConfig experiment_config_from_map(const std::map<std::string, std::string>& kv) {
    ExperimentConfig cfg;
    auto get = [&](const char* key) -> std::optional<std::string> {
        auto it = kv.find(key);
        if (it == kv.end()) return std::nullopt;
        return it->second;
    };
    if (auto v = get("model")) {
        if (*v == "linear")
            cfg.gen.model = GeneratorSpec::Model::linear;
        else if (*v == "logistic")
            cfg.gen.model = GeneratorSpec::Model::logistic;
        else
            throw SchemaMismatchError("model must be linear or logistic");
    }
    cfg.gen.theta_mode = cfg.gen.model == GeneratorSpec::Model::linear ? ThetaMode::paper_linear
                                                                       : ThetaMode::paper_logistic;
    cfg.family = cfg.gen.model == GeneratorSpec::Model::linear ? Family::ols : Family::logistic;
    if (auto v = get("law")) cfg.gen.law = CovariateLaw::parse(*v);
    if (auto v = get("n")) cfg.gen.n = std::stoll(*v);
    if (auto v = get("d")) cfg.gen.d_covariates = std::stoll(*v);
    if (auto v = get("theta")) {
        if (*v != "paper") {
            const auto parts = split_list(*v);
            cfg.gen.theta_mode = ThetaMode::custom;
            cfg.gen.theta_custom.resize(static_cast<Index>(parts.size()));
            for (std::size_t i = 0; i < parts.size(); ++i)
                cfg.gen.theta_custom(static_cast<Index>(i)) = std::stod(parts[i]);
        }
    }
    if (auto v = get("family")) cfg.family = family_from_string(*v);
    if (auto v = get("csv")) cfg.csv_path = *v;
    if (auto v = get("response_col")) cfg.schema.response_col = std::stoll(*v);
    if (auto v = get("trials_col")) cfg.schema.trials_col = std::stoll(*v);
    if (auto v = get("header")) cfg.schema.has_header = (*v == "1" || *v == "true");
    if (auto v = get("add_intercept")) cfg.schema.add_intercept = (*v == "1" || *v == "true");
    if (auto v = get("methods")) {
        cfg.methods.clear();
        for (const auto& m : split_list(*v)) cfg.methods.push_back(method_from_string(m));
    }
    if (auto v = get("ratios")) {
        cfg.ratios.clear();
        for (const auto& r : split_list(*v)) cfg.ratios.push_back(std::stod(r));
    }
    if (auto v = get("alpha")) cfg.alpha = std::stod(*v);
    if (auto v = get("s0_frac")) cfg.s0_fraction = std::stod(*v);
    if (auto v = get("b")) cfg.b = std::stod(*v);
    if (auto v = get("T")) cfg.T = std::stoll(*v);
    if (auto v = get("seed")) cfg.seed = std::stoull(*v);
    if (auto v = get("threads")) cfg.threads = std::stoi(*v);
    return cfg;
}

ExperimentConfig parse_experiment_config(const std::string& path,
                                         const std::map<std::string, std::string>& overrides) {
    std::ifstream in(path);
    if (!in) throw DataError("FileOpen", "cannot open config '" + path + "'");
    std::map<std::string, std::string> kv;
    std::string line;
    std::int64_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        line = trim(line);
        if (line.empty()) continue;
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos) throw ParseError(lineno, "expected key = value");
        kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
    }
    for (const auto& [k, v] : overrides) kv[k] = v;
    return experiment_config_from_map(kv);
}

// ---------------------------------------------------------------------------
// Coverage
// ---------------------------------------------------------------------------

CoverageReport coverage_check(Family f, const GeneratorSpec& spec, Scheme scheme, Index s_n,
                              Index T, RngSeed seed, Standardize standardize) {
    const Dataset data = generate(spec, RngSeed{seed.seed, kDatasetStream});
    const Index n = data.rows();
    const Index d = data.dim();
    const SolveReport full = fit_full(f, data);
    const VectorXd t = grad_norms(f, data, full.theta);

    const SamplingPlan plan = scheme == Scheme::with_replacement ? opt_probs_withreplacement(t)
                                                                 : opt_probs_poisson(t, s_n);
    Scheme v_scheme = scheme;
    if (standardize == Standardize::with_replacement) v_scheme = Scheme::with_replacement;
    if (standardize == Standardize::poisson) v_scheme = Scheme::poisson;
    const MatrixXd lambda = v_scheme == Scheme::with_replacement
                                ? lambda_R(f, data, full.theta, plan)
                                : lambda_P(f, data, full.theta, plan, s_n);
    const MatrixXd v = sandwich(f, data, full.theta, lambda);
    Eigen::SelfAdjointEigenSolver<MatrixXd> eig(v);
    if (eig.eigenvalues().minCoeff() <= 0.0)
        throw SingularHessianError(eig.eigenvalues().minCoeff());
    const MatrixXd w = eig.eigenvectors() * eig.eigenvalues().cwiseSqrt().cwiseInverse().asDiagonal() *
                       eig.eigenvectors().transpose();  // V^{-1/2}

    constexpr double z975 = 1.959963984540054;
    Eigen::VectorXi hits = Eigen::VectorXi::Zero(d);
    std::vector<VectorXd> zs;
    zs.reserve(T);
    Index discarded = 0;
    const double root_s = std::sqrt(double(s_n));
    for (Index rep = 0; rep < T; ++rep) {
        try {
            Subsample sub;
            if (scheme == Scheme::with_replacement)
                sub = sample_with_replacement(plan.pi, s_n, RngSeed{seed.seed, static_cast<std::uint64_t>(rep)});
            else
                sub = sample_poisson(plan.pi, s_n, RngSeed{seed.seed, static_cast<std::uint64_t>(rep)});
            if (sub.realized_size == 0) throw EmptySecondStageError();
            WeightedProblem p;
            p.family = f;
            p.data = &data;
            p.rows = sub.indices;
            p.weights.resize(sub.realized_size);
            for (Index j = 0; j < sub.realized_size; ++j)
                p.weights(j) =
                    1.0 / (double(n) * double(s_n) * sub.probs[static_cast<std::size_t>(j)]);
            const SolveReport fit = newton_maximize(p, full.theta);
            const VectorXd z = root_s * (w * (fit.theta - full.theta));
            for (Index j = 0; j < d; ++j)
                if (std::abs(z(j)) <= z975) ++hits(j);
            zs.push_back(z);
        } catch (const NumericError&) {
            ++discarded;
        }
    }

    CoverageReport report;
    report.kept = static_cast<Index>(zs.size());
    report.discarded = discarded;
    report.coverage = hits.cast<double>() / double(report.kept);
    report.z_mean = VectorXd::Zero(d);
    report.z_sd = VectorXd::Zero(d);
    for (const auto& z : zs) report.z_mean += z;
    report.z_mean /= double(report.kept);
    for (const auto& z : zs)
        report.z_sd += (z - report.z_mean).cwiseAbs2();
    report.z_sd = (report.z_sd / double(report.kept - 1)).cwiseSqrt();
    for (Index j = 0; j < d; ++j) {
        double m2 = 0.0, m3 = 0.0, m4 = 0.0;
        for (const auto& z : zs) {
            const double c = z(j) - report.z_mean(j);
            m2 += c * c;
            m3 += c * c * c;
            m4 += c * c * c * c;
        }
        m2 /= double(report.kept);
        m3 /= double(report.kept);
        m4 /= double(report.kept);
        const double skew = m3 / std::pow(m2, 1.5);
        const double exkurt = m4 / (m2 * m2) - 3.0;
        const double jb = double(report.kept) / 6.0 * (skew * skew + exkurt * exkurt / 4.0);
        report.max_jarque_bera = std::max(report.max_jarque_bera, jb);
    }
    return report;
}

void write_coverage_csv(const CoverageReport& report, std::ostream& os) {
    os << "coordinate,coverage,z_mean,z_sd\n";
    char buf[128];
    for (Index j = 0; j < report.coverage.size(); ++j) {
        std::snprintf(buf, sizeof(buf), "%lld,%.17g,%.17g,%.17g\n", static_cast<long long>(j),
                      report.coverage(j), report.z_mean(j), report.z_sd(j));
        os << buf;
    }
}

}  // namespace subsamp

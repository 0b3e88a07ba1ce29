#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "subsamp/experiments.hpp"

using namespace subsamp;

namespace {

std::filesystem::path temp_file(const std::string& name) {
    return std::filesystem::temp_directory_path() / name;
}

}  // namespace

TEST_CASE("generate") {
    SUBCASE("sample covariance close to Sigma for the normal law") {
        GeneratorSpec spec;
        spec.model = GeneratorSpec::Model::linear;
        spec.n = 100000;
        spec.d_covariates = 2;
        spec.theta_mode = ThetaMode::paper_linear;
        const Dataset data = generate(spec, {51, 0});
        const auto v = data.covariates().rightCols(2);
        const Eigen::RowVector2d mean = v.colwise().mean();
        const MatrixXd centered = v.rowwise() - mean;
        const MatrixXd cov = centered.transpose() * centered / double(spec.n - 1);
        CHECK(std::abs(cov(0, 0) - 1.0) < 0.02);
        CHECK(std::abs(cov(1, 1) - 1.0) < 0.02);
        CHECK(std::abs(cov(0, 1) - 0.5) < 0.02);
    }
    SUBCASE("lognormal covariates are positive") {
        GeneratorSpec spec;
        spec.model = GeneratorSpec::Model::logistic;
        spec.n = 2000;
        spec.d_covariates = 3;
        spec.law = CovariateLaw::parse("lognormal");
        const Dataset data = generate(spec, {52, 0});
        CHECK(data.covariates().rightCols(3).minCoeff() > 0.0);
    }
    SUBCASE("logistic case 1 has an upward-shifted positive fraction") {
        GeneratorSpec spec;
        spec.model = GeneratorSpec::Model::logistic;
        spec.n = 20000;
        spec.d_covariates = 9;
        const Dataset data = generate(spec, {53, 0});
        const double frac = data.responses().mean();
        CHECK(frac > 0.5);
        CHECK(frac < 0.9);
    }
    SUBCASE("student t law produces heavier tails than normal") {
        GeneratorSpec spec;
        spec.model = GeneratorSpec::Model::linear;
        spec.n = 20000;
        spec.d_covariates = 2;
        spec.theta_mode = ThetaMode::paper_linear;
        spec.law = CovariateLaw::parse("t2");
        const Dataset heavy = generate(spec, {54, 0});
        spec.law = CovariateLaw::parse("normal");
        const Dataset light = generate(spec, {54, 0});
        CHECK(heavy.covariates().cwiseAbs().maxCoeff() >
              3.0 * light.covariates().cwiseAbs().maxCoeff());
    }
    SUBCASE("deterministic under a fixed seed") {
        GeneratorSpec spec;
        spec.model = GeneratorSpec::Model::logistic;
        spec.n = 100;
        spec.d_covariates = 2;
        const Dataset a = generate(spec, {55, 3});
        const Dataset b = generate(spec, {55, 3});
        CHECK(a.covariates() == b.covariates());
        CHECK(a.responses() == b.responses());
    }
}

TEST_CASE("load_csv") {
    SUBCASE("three hand-written rows load exactly") {
        const auto path = temp_file("subsamp_t1.csv");
        std::ofstream(path) << "1,0.25,2\n0,-1.5,3\n1,0,4.5\n";
        CsvSchema schema;  // response col 0, covariates the rest
        const LoadReport rep = load_csv(path.string(), schema);
        CHECK(rep.rows_loaded == 3);
        CHECK(rep.rows_rejected == 0);
        CHECK(rep.data.y(1) == 0.0);
        CHECK(rep.data.x(0)(0) == 0.25);
        CHECK(rep.data.x(2)(1) == 4.5);
    }
    SUBCASE("strict mode names the malformed line") {
        const auto path = temp_file("subsamp_t2.csv");
        std::ofstream(path) << "1,2\n1,oops\n3,4\n";
        try {
            load_csv(path.string(), CsvSchema{});
            FAIL("expected ParseError");
        } catch (const ParseError& e) {
            CHECK(e.line == 2);
        }
    }
    SUBCASE("lenient mode counts rejected rows") {
        const auto path = temp_file("subsamp_t3.csv");
        std::ofstream(path) << "1,2\n1,oops\n3,4\n5\n";
        CsvSchema schema;
        schema.strict = false;
        const LoadReport rep = load_csv(path.string(), schema);
        CHECK(rep.rows_loaded == 2);
        CHECK(rep.rows_rejected == 2);
    }
    SUBCASE("round-trip through write_dataset_csv") {
        GeneratorSpec spec;
        spec.model = GeneratorSpec::Model::linear;
        spec.n = 50;
        spec.d_covariates = 3;
        spec.theta_mode = ThetaMode::paper_linear;
        const Dataset data = generate(spec, {56, 0});
        const auto path = temp_file("subsamp_t4.csv");
        {
            std::ofstream out(path);
            write_dataset_csv(data, out);
        }
        const LoadReport rep = load_csv(path.string(), CsvSchema{});
        CHECK(rep.data.responses() == data.responses());
        CHECK(rep.data.covariates() == data.covariates());
    }
    SUBCASE("trials column and explicit intercept") {
        const auto path = temp_file("subsamp_t5.csv");
        std::ofstream(path) << "3,5,1.5\n2,4,-0.5\n";
        CsvSchema schema;
        schema.trials_col = 1;
        schema.add_intercept = true;
        const LoadReport rep = load_csv(path.string(), schema);
        CHECK(rep.data.has_trials());
        CHECK(rep.data.trials(0) == 5.0);
        CHECK(rep.data.x(0)(0) == 1.0);
        CHECK(rep.data.x(0)(1) == 1.5);
        CHECK_NOTHROW(validate(Family::binomial, rep.data));
    }
}

TEST_CASE("g_table structure at small scale") {
    const std::vector<CovariateLaw> laws = {CovariateLaw::parse("normal"),
                                            CovariateLaw::parse("t2")};
    const std::vector<double> ratios = {0.02, 0.1};
    const auto table = g_table(laws, ratios, 5000, 10, {57, 0});
    REQUIRE(table.size() == 4);
    // non-decreasing in the ratio for each law
    CHECK(table[0].g <= table[1].g);
    CHECK(table[2].g <= table[3].g);
    // heavier tails truncate at least as much
    CHECK(table[0].g <= table[2].g);
    CHECK(table[1].g <= table[3].g);

    std::ostringstream os;
    write_g_table_csv(table, os);
    CHECK(os.str().rfind("law,ratio,g\nnormal,", 0) == 0);
}

TEST_CASE("monte_carlo_mse at smoke scale") {
    std::map<std::string, std::string> kv = {
        {"model", "logistic"}, {"n", "1500"},   {"d", "4"},      {"ratios", "0.1"},
        {"methods", "optR,uniR,optP_b"},        {"T", "40"},     {"alpha", "0.1"},
        {"s0_frac", "0.02"},   {"seed", "901"}, {"threads", "2"}};
    const ExperimentConfig cfg = experiment_config_from_map(kv);
    const MseTable a = monte_carlo_mse(cfg);
    REQUIRE(a.cells.size() == 3);
    for (const auto& c : a.cells) {
        CHECK(c.mse > 0.0);
        CHECK(c.mse_se > 0.0);
        CHECK(c.discarded <= 4);
    }
    SUBCASE("bitwise reproducible despite threading") {
        const MseTable b = monte_carlo_mse(cfg);
        for (std::size_t i = 0; i < a.cells.size(); ++i) {
            CHECK(a.cells[i].mse == b.cells[i].mse);
            CHECK(a.cells[i].mse_se == b.cells[i].mse_se);
            CHECK(a.cells[i].discarded == b.cells[i].discarded);
        }
    }
    SUBCASE("csv output hides wall time unless asked") {
        std::ostringstream os;
        write_mse_csv(a, os, false);
        CHECK(os.str().find(",0\n") != std::string::npos);
        CHECK(os.str().rfind("method,ratio,mse,mse_se,discarded,seconds\n", 0) == 0);
    }
}

TEST_CASE("config file parsing with overrides") {
    const auto path = temp_file("subsamp_cfg.txt");
    std::ofstream(path) << "# comment\nmodel = linear\nn = 800\nd = 3\nratios = 0.1, 0.2\n"
                        << "methods = uniR\nT = 5\nseed = 11\n";
    const ExperimentConfig cfg = parse_experiment_config(path.string(), {{"T", "7"}});
    CHECK(cfg.gen.model == GeneratorSpec::Model::linear);
    CHECK(cfg.family == Family::ols);
    CHECK(cfg.gen.n == 800);
    CHECK(cfg.ratios.size() == 2);
    CHECK(cfg.T == 7);  // override wins
    CHECK(cfg.methods.size() == 1);
}

TEST_CASE("coverage_check smoke: matched R-scheme coverage is sane") {
    GeneratorSpec spec;
    spec.model = GeneratorSpec::Model::linear;
    spec.n = 2000;
    spec.d_covariates = 3;
    spec.theta_mode = ThetaMode::paper_linear;
    const CoverageReport rep =
        coverage_check(Family::ols, spec, Scheme::with_replacement, 200, 300, {58, 0});
    CHECK(rep.kept + rep.discarded == 300);
    for (Index j = 0; j < rep.coverage.size(); ++j) {
        CHECK(rep.coverage(j) > 0.90);
        CHECK(rep.coverage(j) <= 1.0);
    }
}

TEST_CASE("mis-standardizing Poisson draws with the R variance over-covers") {
    GeneratorSpec spec;
    spec.model = GeneratorSpec::Model::linear;
    spec.n = 2000;
    spec.d_covariates = 3;
    spec.theta_mode = ThetaMode::paper_linear;
    // ratio 0.5: V_R overstates the Poisson variance by about a factor 2
    const CoverageReport rep = coverage_check(Family::ols, spec, Scheme::poisson, 1000, 500,
                                              {59, 0}, Standardize::with_replacement);
    for (Index j = 0; j < rep.coverage.size(); ++j) CHECK(rep.coverage(j) > 0.97);
}

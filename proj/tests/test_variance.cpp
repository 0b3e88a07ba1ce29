#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <sstream>

#include "subsamp/variance.hpp"

using namespace subsamp;

namespace {

struct Instance {
    Dataset data;
    VectorXd theta;
    Family family;
};

Instance random_instance(Rng& rng, Index n, Index d, bool logistic) {
    RowMatrixXd x(n, d);
    VectorXd y(n);
    VectorXd theta(d);
    for (Index j = 0; j < d; ++j) theta(j) = 0.5 * rng.next_normal();
    for (Index i = 0; i < n; ++i) {
        for (Index j = 0; j < d; ++j) x(i, j) = rng.next_normal();
        const double u = x.row(i).dot(theta);
        if (logistic) {
            const double p = 1.0 / (1.0 + std::exp(-u));
            y(i) = rng.next_double() < p ? 1.0 : 0.0;
        } else {
            y(i) = u + rng.next_normal();
        }
    }
    return {Dataset(std::move(x), std::move(y)), std::move(theta),
            logistic ? Family::logistic : Family::ols};
}

SamplingPlan uniform_plan(Index n) {
    SamplingPlan p;
    p.pi = VectorXd::Constant(n, 1.0 / double(n));
    return p;
}

SamplingPlan random_simplex_plan(Rng& rng, Index n) {
    SamplingPlan p;
    p.pi.resize(n);
    for (Index i = 0; i < n; ++i) p.pi(i) = -std::log(1.0 - rng.next_double());
    p.pi /= p.pi.sum();
    return p;
}

// Dense per-row oracle for Lambda_R.
MatrixXd dense_lambda_R(const Instance& inst, const SamplingPlan& plan) {
    const Index n = inst.data.rows(), d = inst.data.dim();
    MatrixXd m = MatrixXd::Zero(d, d);
    for (Index i = 0; i < n; ++i) {
        const VectorXd g = contrib_grad(inst.family, inst.data.observation(i), inst.theta);
        if (g.norm() == 0.0) continue;
        m += g * g.transpose() / plan.pi(i);
    }
    return m / (double(n) * double(n));
}

}  // namespace

TEST_CASE("lambda_R") {
    SUBCASE("uniform plan on ols reduces to the average residual outer product over n") {
        RowMatrixXd x = MatrixXd::Identity(2, 2);
        VectorXd y(2);
        y << 1, 2;
        Dataset data(x, y);
        const VectorXd theta = VectorXd::Zero(2);
        const MatrixXd lam =
            lambda_R(Family::ols, data, theta, uniform_plan(2));
        // (1/n) average of eps_i^2 x_i x_i': diag(1,4)/2
        CHECK(lam(0, 0) == doctest::Approx(0.5));
        CHECK(lam(1, 1) == doctest::Approx(2.0));
        CHECK(lam(0, 1) == doctest::Approx(0.0));
    }
    SUBCASE("single nonzero-gradient row by hand") {
        RowMatrixXd x(2, 1);
        x << 1, 2;
        VectorXd y(2);
        y << 0, 4;  // theta = 0: residuals 0 and 4
        Dataset data(x, y);
        SamplingPlan plan;
        plan.pi = (VectorXd(2) << 0.75, 0.25).finished();
        const MatrixXd lam = lambda_R(Family::ols, data, VectorXd::Zero(1), plan);
        CHECK(lam(0, 0) == doctest::Approx((16.0 * 4.0 / 0.25) / 4.0));
    }
    SUBCASE("matches the dense oracle to 1e-12") {
        Rng rng({31, 0});
        const Instance inst = random_instance(rng, 10, 3, true);
        const SamplingPlan plan = random_simplex_plan(rng, 10);
        const MatrixXd got = lambda_R(inst.family, inst.data, inst.theta, plan);
        const MatrixXd want = dense_lambda_R(inst, plan);
        CHECK((got - want).cwiseAbs().maxCoeff() <= 1e-12 * (1.0 + want.cwiseAbs().maxCoeff()));
    }
    SUBCASE("zero probability on a nonzero-gradient row is an error") {
        RowMatrixXd x(2, 1);
        x << 1, 1;
        VectorXd y(2);
        y << 1, 1;
        Dataset data(x, y);
        SamplingPlan plan;
        plan.pi = (VectorXd(2) << 1.0, 0.0).finished();
        try {
            lambda_R(Family::ols, data, VectorXd::Zero(1), plan);
            FAIL("expected ZeroProbNonzeroGradError");
        } catch (const ZeroProbNonzeroGradError& e) {
            CHECK(e.row == 1);
        }
    }
}

TEST_CASE("lambda_P") {
    Rng rng({32, 0});
    SUBCASE("both accumulation routes agree to 1e-12") {
        for (int rep = 0; rep < 20; ++rep) {
            const Instance inst = random_instance(rng, 30, 3, rep % 2 == 0);
            const SamplingPlan plan = random_simplex_plan(rng, 30);
            const Index s_n = 5;
            const MatrixXd direct = lambda_P(inst.family, inst.data, inst.theta, plan, s_n);
            const MatrixXd viaR =
                lambda_R(inst.family, inst.data, inst.theta, plan) -
                (double(s_n) / (30.0 * 30.0)) * grad_outer_sum(inst.family, inst.data, inst.theta);
            const double scale = 1.0 + viaR.cwiseAbs().maxCoeff();
            CHECK((direct - viaR).cwiseAbs().maxCoeff() <= 1e-12 * scale);
        }
    }
    SUBCASE("s_n = 0 reduces to lambda_R") {
        const Instance inst = random_instance(rng, 20, 2, true);
        const SamplingPlan plan = uniform_plan(20);
        const MatrixXd p0 = lambda_P(inst.family, inst.data, inst.theta, plan, 0);
        const MatrixXd r = lambda_R(inst.family, inst.data, inst.theta, plan);
        CHECK((p0 - r).cwiseAbs().maxCoeff() == 0.0);
    }
    SUBCASE("capped rows contribute nothing") {
        const Instance inst = random_instance(rng, 25, 2, false);
        const VectorXd t = grad_norms(inst.family, inst.data, inst.theta);
        const Index s_n = 4;
        const SamplingPlan plan = opt_probs_poisson(t, s_n);
        // rows at the cap have 1 - s_n*pi = 0; dropping them changes nothing
        const MatrixXd full = lambda_P(inst.family, inst.data, inst.theta, plan, s_n);
        MatrixXd manual = MatrixXd::Zero(2, 2);
        for (Index i = 0; i < 25; ++i) {
            if (plan.pi(i) == 1.0 / double(s_n)) continue;
            const VectorXd g = contrib_grad(inst.family, inst.data.observation(i), inst.theta);
            if (g.norm() == 0.0) continue;
            manual += (1.0 - double(s_n) * plan.pi(i)) / plan.pi(i) * (g * g.transpose());
        }
        manual /= 25.0 * 25.0;
        CHECK((full - manual).cwiseAbs().maxCoeff() <= 1e-12 * (1.0 + manual.cwiseAbs().maxCoeff()));
    }
    SUBCASE("trace ordering: trace(lambda_P) < trace(lambda_R)") {
        for (int rep = 0; rep < 20; ++rep) {
            const Instance inst = random_instance(rng, 40, 3, rep % 2 == 0);
            const SamplingPlan plan = random_simplex_plan(rng, 40);
            const MatrixXd r = lambda_R(inst.family, inst.data, inst.theta, plan);
            const MatrixXd p = lambda_P(inst.family, inst.data, inst.theta, plan, 6);
            CHECK(p.trace() < r.trace());
        }
    }
}

TEST_CASE("lambda_alpha") {
    Rng rng({33, 0});
    SUBCASE("alpha = 1 equals the uniform-plan lambda") {
        const Instance inst = random_instance(rng, 30, 3, true);
        const MatrixXd a =
            lambda_alpha(inst.family, inst.data, inst.theta, Scheme::with_replacement, 1.0, 5);
        const MatrixXd u = lambda_R(inst.family, inst.data, inst.theta, uniform_plan(30));
        CHECK((a - u).cwiseAbs().maxCoeff() <= 1e-12 * (1.0 + u.cwiseAbs().maxCoeff()));

        const MatrixXd ap = lambda_alpha(inst.family, inst.data, inst.theta, Scheme::poisson, 1.0, 5);
        const MatrixXd up = lambda_P(inst.family, inst.data, inst.theta, uniform_plan(30), 5);
        CHECK((ap - up).cwiseAbs().maxCoeff() <= 1e-12 * (1.0 + up.cwiseAbs().maxCoeff()));
    }
    SUBCASE("alpha -> 0 approaches the optimal-plan lambda on a g=0 instance") {
        const Instance inst = random_instance(rng, 50, 2, false);
        const VectorXd t = grad_norms(inst.family, inst.data, inst.theta);
        const Index s_n = 3;
        REQUIRE(poisson_threshold(t, s_n).g == 0);
        const MatrixXd opt =
            lambda_P(inst.family, inst.data, inst.theta, opt_probs_poisson(t, s_n), s_n);
        double prev_gap = std::numeric_limits<double>::infinity();
        for (double alpha : {0.1, 0.01, 0.001}) {
            const MatrixXd a =
                lambda_alpha(inst.family, inst.data, inst.theta, Scheme::poisson, alpha, s_n);
            const double gap = (a - opt).cwiseAbs().maxCoeff();
            CHECK(gap < prev_gap);
            prev_gap = gap;
        }
        CHECK(prev_gap <= 1e-3 * (1.0 + opt.cwiseAbs().maxCoeff()));
    }
    SUBCASE("Hessian-weighted mixing bounds on both schemes") {
        for (int rep = 0; rep < 10; ++rep) {
            const Instance inst = random_instance(rng, 100, 3, rep % 2 == 0);
            const VectorXd t = grad_norms(inst.family, inst.data, inst.theta);
            const Index s_n = 10;
            const double tr_opt_R =
                lambda_R(inst.family, inst.data, inst.theta, opt_probs_withreplacement(t)).trace();
            const double tr_opt_P =
                lambda_P(inst.family, inst.data, inst.theta, opt_probs_poisson(t, s_n), s_n).trace();
            for (double alpha : {0.01, 0.1, 0.5}) {
                const double tr_R =
                    lambda_alpha(inst.family, inst.data, inst.theta, Scheme::with_replacement,
                                 alpha, s_n)
                        .trace();
                CHECK(tr_opt_R < tr_R);
                CHECK(tr_R < tr_opt_R / (1.0 - alpha));
                const double tr_P =
                    lambda_alpha(inst.family, inst.data, inst.theta, Scheme::poisson, alpha, s_n)
                        .trace();
                CHECK(tr_opt_P < tr_P);
                CHECK(tr_P < tr_opt_P / (1.0 - alpha));
            }
        }
    }
    SUBCASE("rho > 0 uses the upper-quantile threshold") {
        const Instance inst = random_instance(rng, 60, 2, false);
        const VectorXd t = grad_norms(inst.family, inst.data, inst.theta);
        const double rho = 0.1;
        const MatrixXd got =
            lambda_alpha(inst.family, inst.data, inst.theta, Scheme::poisson, 0.2, 6, rho);
        // independent construction
        std::vector<double> sorted(t.data(), t.data() + t.size());
        std::sort(sorted.begin(), sorted.end(), std::greater<double>());
        const double h = sorted[5];  // ceil(0.1*60) = 6 -> 6th largest
        VectorXd pi = t.cwiseMin(h);
        pi /= pi.sum();
        SamplingPlan plan;
        plan.pi = (0.8 * pi.array() + 0.2 / 60.0).matrix();
        const MatrixXd want = lambda_P(inst.family, inst.data, inst.theta, plan, 6);
        CHECK((got - want).cwiseAbs().maxCoeff() <= 1e-10 * (1.0 + want.cwiseAbs().maxCoeff()));
    }
}

TEST_CASE("sandwich") {
    Rng rng({34, 0});
    SUBCASE("lambda = Mddot^2 gives the identity") {
        const Instance inst = random_instance(rng, 30, 3, true);
        const MatrixXd h = average_hessian(inst.family, inst.data, inst.theta);
        const MatrixXd v = sandwich(inst.family, inst.data, inst.theta, h * h);
        CHECK((v - MatrixXd::Identity(3, 3)).cwiseAbs().maxCoeff() <= 1e-9);
    }
    SUBCASE("ols identity-design hand value") {
        RowMatrixXd x = MatrixXd::Identity(2, 2);
        VectorXd y(2);
        y << 1, 2;
        Dataset data(x, y);
        const VectorXd theta = VectorXd::Zero(2);
        // Mddot = -I/2; V = 4 * Lambda
        const MatrixXd lam = lambda_R(Family::ols, data, theta, uniform_plan(2));
        const MatrixXd v = sandwich(Family::ols, data, theta, lam);
        CHECK((v - 4.0 * lam).cwiseAbs().maxCoeff() <= 1e-12);
    }
    SUBCASE("symmetric and PSD on random instances") {
        for (int rep = 0; rep < 10; ++rep) {
            const Instance inst = random_instance(rng, 40, 3, rep % 2 == 0);
            const MatrixXd lam =
                lambda_R(inst.family, inst.data, inst.theta, random_simplex_plan(rng, 40));
            const MatrixXd v = sandwich(inst.family, inst.data, inst.theta, lam);
            CHECK((v - v.transpose()).cwiseAbs().maxCoeff() <= 1e-12 * v.cwiseAbs().maxCoeff());
            Eigen::SelfAdjointEigenSolver<MatrixXd> eig(v);
            CHECK(eig.eigenvalues().minCoeff() >= -1e-10 * eig.eigenvalues().maxCoeff());
        }
    }
}

TEST_CASE("variance report export") {
    Rng rng({35, 0});
    const Instance inst = random_instance(rng, 10, 2, false);
    const VarianceReport rep = variance_report(inst.family, inst.data, inst.theta,
                                               uniform_plan(10), 2, "unit-test");
    CHECK(rep.trace_lambda == doctest::Approx(rep.lambda.trace()));
    std::ostringstream os;
    write_variance_csv(rep, os);
    CHECK(os.str().substr(0, 26) == "matrix,d,values_row_major\n");
}

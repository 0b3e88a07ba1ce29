#include "subsamp/variance.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <vector>

#include "subsamp/numeric.hpp"

namespace subsamp {

namespace {

// Accumulate sum_i coeff_i * x_i x_i' with entrywise compensated summation.
class CompensatedOuterSum {
public:
    explicit CompensatedOuterSum(Index d) : sum_(MatrixXd::Zero(d, d)), comp_(MatrixXd::Zero(d, d)) {}

    void add(const Eigen::Ref<const Eigen::RowVectorXd>& x, double coeff) {
        for (Index r = 0; r < sum_.rows(); ++r) {
            for (Index c = 0; c <= r; ++c) {
                const double v = coeff * x(r) * x(c);
                const double t = sum_(r, c) + v;
                if (std::abs(sum_(r, c)) >= std::abs(v))
                    comp_(r, c) += (sum_(r, c) - t) + v;
                else
                    comp_(r, c) += (v - t) + sum_(r, c);
                sum_(r, c) = t;
            }
        }
    }

    MatrixXd value() const {
        MatrixXd m = sum_ + comp_;
        return m.selfadjointView<Eigen::Lower>();
    }

private:
    MatrixXd sum_, comp_;
};

MatrixXd accumulate_lambda(Family f, const Dataset& data, const VectorXd& theta,
                           const SamplingPlan& plan,
                           double s_n_factor /* 0 for lambda_R, s_n for lambda_P */) {
    const Index n = data.rows();
    if (plan.pi.size() != n) throw SchemaMismatchError("plan length != dataset rows");
    CompensatedOuterSum acc(data.dim());
    const double inv_n2 = 1.0 / (double(n) * double(n));
    for (Index i = 0; i < n; ++i) {
        const double u = data.x(i).dot(theta);
        if (!admissible_u(f, u))
            throw DomainError("theta inadmissible at row", i);
        const double psi = psi_score(f, u, data.y(i), data.trials(i));
        if (psi == 0.0) continue;
        const double pi = plan.pi(i);
        if (!(pi > 0.0)) throw ZeroProbNonzeroGradError(i);
        const double coeff = (1.0 - s_n_factor * pi) * psi * psi / pi * inv_n2;
        acc.add(data.x(i), coeff);
    }
    return acc.value();
}

}  // namespace

MatrixXd lambda_R(Family f, const Dataset& data, const VectorXd& theta, const SamplingPlan& plan) {
    return accumulate_lambda(f, data, theta, plan, 0.0);
}

MatrixXd lambda_P(Family f, const Dataset& data, const VectorXd& theta, const SamplingPlan& plan,
                  Index s_n) {
    return accumulate_lambda(f, data, theta, plan, double(s_n));
}

MatrixXd grad_outer_sum(Family f, const Dataset& data, const VectorXd& theta) {
    CompensatedOuterSum acc(data.dim());
    for (Index i = 0; i < data.rows(); ++i) {
        const double u = data.x(i).dot(theta);
        if (!admissible_u(f, u)) throw DomainError("theta inadmissible at row", i);
        const double psi = psi_score(f, u, data.y(i), data.trials(i));
        if (psi == 0.0) continue;
        acc.add(data.x(i), psi * psi);
    }
    return acc.value();
}

MatrixXd lambda_alpha(Family f, const Dataset& data, const VectorXd& theta, Scheme scheme,
                      double alpha, Index s_n, double rho) {
    const VectorXd t = grad_norms(f, data, theta);
    SamplingPlan plan;
    if (scheme == Scheme::with_replacement) {
        plan = opt_probs_withreplacement(t);
    } else if (rho == 0.0) {
        plan = opt_probs_poisson(t, s_n);
    } else {
        // H replaced by the rho-th upper sample quantile of the norms.
        const Index n = t.size();
        const Index k = std::max<Index>(1, static_cast<Index>(std::ceil(rho * double(n))));
        std::vector<double> sorted(t.data(), t.data() + n);
        std::stable_sort(sorted.begin(), sorted.end(), std::greater<double>());
        const double h = sorted[k - 1];
        KahanSum denom;
        for (Index i = 0; i < n; ++i) denom.add(std::min(t(i), h));
        if (!(denom.value() > 0.0)) throw AllZeroNormsError();
        plan.scheme = Scheme::poisson;
        plan.pi = t.cwiseMin(h) / denom.value();
    }
    plan = defensive_mix(std::move(plan), alpha);
    return scheme == Scheme::with_replacement ? lambda_R(f, data, theta, plan)
                                              : lambda_P(f, data, theta, plan, s_n);
}

MatrixXd sandwich(Family f, const Dataset& data, const VectorXd& theta, const MatrixXd& lambda) {
    const MatrixXd h = average_hessian(f, data, theta);
    Eigen::LDLT<MatrixXd> ldlt(h);
    const VectorXd dv = ldlt.vectorD().cwiseAbs();
    const double dmax = dv.maxCoeff();
    if (ldlt.info() != Eigen::Success || dmax <= 0.0 || dv.minCoeff() <= 1e-14 * dmax)
        throw SingularHessianError(dmax > 0.0 ? dv.minCoeff() / dmax : 0.0);
    const MatrixXd v = ldlt.solve(ldlt.solve(lambda).transpose());
    return 0.5 * (v + v.transpose());
}

VarianceReport variance_report(Family f, const Dataset& data, const VectorXd& theta,
                               const SamplingPlan& plan, Index s_n, std::string provenance) {
    VarianceReport r;
    r.scheme = plan.scheme;
    r.provenance = std::move(provenance);
    r.lambda = plan.scheme == Scheme::with_replacement ? lambda_R(f, data, theta, plan)
                                                       : lambda_P(f, data, theta, plan, s_n);
    r.trace_lambda = r.lambda.trace();
    r.v = sandwich(f, data, theta, r.lambda);
    return r;
}

void write_variance_csv(const VarianceReport& report, std::ostream& os) {
    char buf[64];
    auto emit = [&](const char* name, const MatrixXd& m) {
        os << name << "," << m.rows();
        for (Index r = 0; r < m.rows(); ++r)
            for (Index c = 0; c < m.cols(); ++c) {
                std::snprintf(buf, sizeof(buf), ",%.17g", m(r, c));
                os << buf;
            }
        os << "\n";
    };
    os << "matrix,d,values_row_major\n";
    emit("lambda", report.lambda);
    emit("v", report.v);
}

}  // namespace subsamp

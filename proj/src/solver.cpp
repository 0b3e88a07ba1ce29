#include "subsamp/solver.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <limits>

namespace subsamp {

namespace {

struct Evaluation {
    double objective;
    VectorXd grad;
};

// Objective, gradient and Hessian of sum w_i m(Z_i, theta) over problem rows.
// Returns false (leaving outputs unspecified) when theta is inadmissible or
// the objective is non-finite.
bool evaluate(const WeightedProblem& p, const VectorXd& theta, double* obj, VectorXd* grad,
              MatrixXd* hess) {
    const Dataset& data = *p.data;
    const Index d = data.dim();
    double f = 0.0;
    if (grad) grad->setZero(d);
    if (hess) hess->setZero(d, d);
    for (std::size_t j = 0; j < p.rows.size(); ++j) {
        const Index i = p.rows[j];
        const double w = p.weights(static_cast<Index>(j));
        const double u = data.x(i).dot(theta);
        if (!admissible_u(p.family, u)) return false;
        if (obj) {
            f += w * contrib_m(p.family, {data.x(i).transpose(), data.y(i), data.trials(i)}, theta);
            if (!std::isfinite(f)) return false;
        }
        if (grad)
            grad->noalias() +=
                (w * psi_score(p.family, u, data.y(i), data.trials(i))) * data.x(i).transpose();
        if (hess)
            hess->selfadjointView<Eigen::Lower>().rankUpdate(
                data.x(i).transpose(), -w * omega_weight(p.family, u, data.y(i), data.trials(i)));
    }
    if (obj) *obj = f;
    if (hess) *hess = hess->selfadjointView<Eigen::Lower>();
    return true;
}

// Solve H * step = -g. One ridge retry before giving up.
VectorXd newton_step(MatrixXd h, const VectorXd& g) {
    const Index d = h.cols();
    for (int attempt = 0; attempt < 2; ++attempt) {
        Eigen::LDLT<MatrixXd> ldlt(h);
        const VectorXd dv = ldlt.vectorD().cwiseAbs();
        const double dmax = dv.maxCoeff();
        if (ldlt.info() == Eigen::Success && dmax > 0.0 && dv.minCoeff() > 1e-14 * dmax)
            return ldlt.solve(-g);
        if (attempt == 0) {
            h.diagonal().array() += 1e-10 * h.trace() / double(d);
        } else {
            throw SingularHessianError(dmax > 0.0 ? dv.minCoeff() / dmax : 0.0);
        }
    }
    return VectorXd();  // unreachable
}

}  // namespace

void WeightedProblem::check() const {
    if (!data) throw SchemaMismatchError("problem has no dataset");
    if (rows.empty()) throw SchemaMismatchError("problem has no rows");
    if (weights.size() != static_cast<Index>(rows.size()))
        throw SchemaMismatchError("weights length != row count");
    for (Index j = 0; j < weights.size(); ++j)
        if (!(weights(j) > 0.0) || !std::isfinite(weights(j)))
            throw SchemaMismatchError("weights must be positive and finite");
    for (Index i : rows)
        if (i < 0 || i >= data->rows()) throw SchemaMismatchError("row index out of range");
}

VectorXd default_start(const WeightedProblem& p) {
    const Index d = p.data->dim();
    switch (p.family) {
        case Family::ols:
            if (d <= 1000) return ols_closed_form(p);
            return VectorXd::Zero(d);
        case Family::logistic:
        case Family::poisson:
        case Family::binomial:
            return VectorXd::Zero(d);
        case Family::gamma: {
            VectorXd xbar = VectorXd::Zero(d);
            double wsum = 0.0;
            for (std::size_t j = 0; j < p.rows.size(); ++j) {
                xbar += p.weights(static_cast<Index>(j)) * p.data->x(p.rows[j]).transpose();
                wsum += p.weights(static_cast<Index>(j));
            }
            xbar /= wsum;
            const double s = xbar.squaredNorm();
            if (s <= 0.0) throw DomainError("cannot build an admissible gamma start (mean covariate is zero)");
            VectorXd theta = -xbar / s;  // xbar'theta = -1
            for (Index i : p.rows)
                if (!admissible_u(Family::gamma, p.data->x(i).dot(theta)))
                    throw DomainError("default gamma start inadmissible for some row", i);
            return theta;
        }
    }
    return VectorXd::Zero(d);
}

SolveReport newton_maximize(const WeightedProblem& p, const SolveOptions& opt) {
    return newton_maximize(p, default_start(p), opt);
}

SolveReport newton_maximize(const WeightedProblem& p, const VectorXd& theta0,
                            const SolveOptions& opt) {
    p.check();
    if (!(opt.tol > 0.0) || opt.max_iter < 1)
        throw SchemaMismatchError("tol must be positive and max_iter >= 1");

    VectorXd theta = theta0;
    double f;
    VectorXd g(p.data->dim());
    if (!evaluate(p, theta, &f, &g, nullptr)) throw DomainError("start point inadmissible");
    const double threshold = opt.tol * (1.0 + g.norm());

    double prev_theta_norm = theta.norm();
    double last_step_norm = 0.0;
    int growth_streak = 0;

    auto finish = [&](int iters) {
        SolveReport r;
        r.theta = theta;
        r.iterations = iters;
        r.grad_norm = g.norm();
        r.converged = true;
        r.objective = f;
        MatrixXd h;
        evaluate(p, theta, nullptr, nullptr, &h);
        r.hessian = std::move(h);
        return r;
    };

    for (int it = 0; it < opt.max_iter; ++it) {
        if (g.norm() <= threshold) {
            // A vanishing gradient reached by large steps with a monotonically
            // growing iterate is the no-finite-maximizer signature (logistic
            // separation): the score saturates to zero at infinity.
            if (growth_streak >= 3 && last_step_norm > 1e-2 * (1.0 + theta.norm()))
                throw NonConvergenceError(it, true);
            return finish(it);
        }

        MatrixXd h;
        evaluate(p, theta, nullptr, nullptr, &h);
        const VectorXd step = newton_step(std::move(h), g);

        // Halve while the objective decreases or the point is inadmissible.
        // Near the optimum the objective change shrinks below its own rounding
        // noise, so "does not decrease" is judged with an ulp-level slack;
        // otherwise the last gradient-polishing steps would be rejected.
        const double slack = 8.0 * std::numeric_limits<double>::epsilon() * (1.0 + std::abs(f));
        double lambda = 1.0;
        bool accepted = false;
        bool ever_admissible = false;
        VectorXd cand;
        double f_cand = 0.0;
        for (int halv = 0; halv <= 30; ++halv) {
            cand = theta + lambda * step;
            if (evaluate(p, cand, &f_cand, nullptr, nullptr)) {
                ever_admissible = true;
                if (f_cand >= f - slack) {
                    accepted = true;
                    break;
                }
            }
            lambda *= 0.5;
        }
        if (!accepted) {
            if (!ever_admissible) throw DomainError("no admissible point along the Newton direction");
            throw NonConvergenceError(it, false);
        }

        last_step_norm = (cand - theta).norm();
        theta = std::move(cand);
        f = f_cand;
        evaluate(p, theta, nullptr, &g, nullptr);

        const double tn = theta.norm();
        growth_streak = tn > prev_theta_norm ? growth_streak + 1 : 0;
        prev_theta_norm = tn;
        if (growth_streak >= 10 && tn > 1e4) throw NonConvergenceError(it + 1, true);
    }
    if (g.norm() <= threshold) return finish(opt.max_iter);
    throw NonConvergenceError(opt.max_iter, growth_streak >= 5);
}

VectorXd ols_closed_form(const WeightedProblem& p) {
    p.check();
    if (p.family != Family::ols) throw SchemaMismatchError("ols_closed_form needs an ols problem");
    const Dataset& data = *p.data;
    const Index d = data.dim();
    MatrixXd gram = MatrixXd::Zero(d, d);
    VectorXd rhs = VectorXd::Zero(d);
    for (std::size_t j = 0; j < p.rows.size(); ++j) {
        const Index i = p.rows[j];
        const double w = p.weights(static_cast<Index>(j));
        gram.selfadjointView<Eigen::Lower>().rankUpdate(data.x(i).transpose(), w);
        rhs.noalias() += (w * data.y(i)) * data.x(i).transpose();
    }
    gram = gram.selfadjointView<Eigen::Lower>();
    Eigen::LDLT<MatrixXd> ldlt(gram);
    const VectorXd dv = ldlt.vectorD().cwiseAbs();
    const double dmax = dv.maxCoeff();
    if (ldlt.info() != Eigen::Success || dmax <= 0.0 || dv.minCoeff() <= 1e-14 * dmax)
        throw SingularGramError(dmax > 0.0 ? dv.minCoeff() / dmax : 0.0);
    return ldlt.solve(rhs);
}

}  // namespace subsamp

#include "subsamp/pipeline.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <cstdio>
#include <limits>

namespace subsamp {

namespace {

WeightedProblem all_rows_problem(Family f, const Dataset& data, double weight_each) {
    WeightedProblem p;
    p.family = f;
    p.data = &data;
    p.rows.resize(data.rows());
    for (Index i = 0; i < data.rows(); ++i) p.rows[static_cast<std::size_t>(i)] = i;
    p.weights = VectorXd::Constant(data.rows(), weight_each);
    return p;
}

// Pilot fit with weights 1/realized_size, i.e. the mean-of-m pilot objective;
// its Hessian is exactly the pilot matrix the aggregation step needs.
SolveReport fit_pilot(Family f, const Dataset& data, const Subsample& pilot,
                      const SolveOptions& opt) {
    WeightedProblem p;
    p.family = f;
    p.data = &data;
    p.rows = pilot.indices;
    p.weights = VectorXd::Constant(pilot.realized_size, 1.0 / double(pilot.realized_size));
    return newton_maximize(p, opt);
}

VectorXd norms_at(Family f, const Dataset& data, const VectorXd& theta, const LSpec& l_mode) {
    return l_mode.explicit_l ? l_norms(f, data, theta, l_mode.L) : grad_norms(f, data, theta);
}

}  // namespace

SolveReport fit_full(Family f, const Dataset& data, const SolveOptions& opt) {
    validate(f, data);
    return newton_maximize(all_rows_problem(f, data, 1.0), opt);
}

VectorXd aggregate(const VectorXd& theta0, const MatrixXd& h0, double size0,
                   const VectorXd& theta1, const MatrixXd& h1, double size1) {
    const MatrixXd combined = size0 * h0 + size1 * h1;
    Eigen::LDLT<MatrixXd> ldlt(combined);
    const VectorXd dv = ldlt.vectorD().cwiseAbs();
    const double dmax = dv.maxCoeff();
    if (ldlt.info() != Eigen::Success || dmax <= 0.0 || dv.minCoeff() <= 1e-14 * dmax)
        throw SingularCombinationError();
    return ldlt.solve(size0 * (h0 * theta0) + size1 * (h1 * theta1));
}

PipelineResult run_withreplacement(Family f, const Dataset& data, Index s0, Index sn, double alpha,
                                   const LSpec& l_mode, RngSeed seed, const SolveOptions& opt) {
    if (s0 < 1 || sn < 1) throw SchemaMismatchError("subsample sizes must be >= 1");
    if (alpha < 0.0 || alpha > 1.0) throw SchemaMismatchError("alpha must lie in [0,1]");
    validate(f, data);
    const Index n = data.rows();

    PipelineResult r;
    r.scheme = Scheme::with_replacement;
    r.alpha = alpha;
    r.s0_target = s0;
    r.sn_target = sn;

    // Pilot: one retry with a fresh stream on non-convergence (separation).
    Subsample pilot = pilot_uniform(n, s0, Scheme::with_replacement, seed.child(0));
    try {
        r.pilot = fit_pilot(f, data, pilot, opt);
    } catch (const NonConvergenceError&) {
        pilot = pilot_uniform(n, s0, Scheme::with_replacement, seed.child(1));
        r.pilot = fit_pilot(f, data, pilot, opt);
    }
    r.pilot_size = pilot.realized_size;

    SamplingPlan plan;
    if (alpha == 1.0) {
        plan.scheme = Scheme::with_replacement;
        plan.pi = VectorXd::Constant(n, 1.0 / double(n));
        plan.alpha = 1.0;
    } else {
        plan = defensive_mix(opt_probs_withreplacement(norms_at(f, data, r.pilot.theta, l_mode)),
                             alpha);
    }

    const Subsample sub = sample_with_replacement(plan.pi, sn, seed.child(2));
    WeightedProblem p;
    p.family = f;
    p.data = &data;
    p.rows = sub.indices;
    p.weights.resize(sn);
    for (Index j = 0; j < sn; ++j)
        p.weights(j) = 1.0 / (double(n) * double(sn) * sub.probs[static_cast<std::size_t>(j)]);
    r.second = newton_maximize(p, r.pilot.theta, opt);
    r.second_size = sub.realized_size;

    r.theta_aggregated = aggregate(r.pilot.theta, r.pilot.hessian, double(s0), r.second.theta,
                                   r.second.hessian, double(sn));
    return r;
}

PipelineResult run_poisson(Family f, const Dataset& data, Index s0, Index sn, double alpha,
                           double b, HMode h_mode, const LSpec& l_mode, RngSeed seed,
                           const SolveOptions& opt) {
    if (s0 < 1 || sn < 1) throw SchemaMismatchError("subsample sizes must be >= 1");
    if (alpha < 0.0 || alpha > 1.0) throw SchemaMismatchError("alpha must lie in [0,1]");
    if (b < 1.0) throw SchemaMismatchError("b must be >= 1");
    validate(f, data);
    const Index n = data.rows();

    PipelineResult r;
    r.scheme = Scheme::poisson;
    r.alpha = alpha;
    r.b = b;
    r.h_mode = h_mode;
    r.s0_target = s0;
    r.sn_target = sn;

    // Pilot: up to 3 attempts on an empty draw, one extra on non-convergence.
    Subsample pilot;
    bool fitted = false;
    int nonconv_retries = 1;
    for (int attempt = 0; attempt < 4 && !fitted; ++attempt) {
        try {
            pilot = pilot_uniform(n, s0, Scheme::poisson, seed.child(static_cast<std::uint64_t>(attempt)));
        } catch (const EmptyPilotError&) {
            if (attempt >= 2) throw;
            continue;
        }
        try {
            r.pilot = fit_pilot(f, data, pilot, opt);
            fitted = true;
        } catch (const NonConvergenceError&) {
            if (nonconv_retries-- <= 0) throw;
        }
    }
    if (!fitted) throw EmptyPilotError();
    r.pilot_size = pilot.realized_size;

    // Streaming second stage: per record, norm -> mixed probability ->
    // inclusion test, fused in one pass over the data.
    const double inv_n = 1.0 / double(n);
    Rng rng(seed.child(16));
    WeightedProblem p;
    p.family = f;
    p.data = &data;
    std::vector<double> weights;

    auto include_record = [&](Index i, double pi_alpha) {
        const double u = rng.next_double();
        if (u <= double(sn) * pi_alpha) {
            p.rows.push_back(i);
            weights.push_back(1.0 / (double(n) * std::min(double(sn) * pi_alpha, 1.0)));
        }
    };

    if (alpha == 1.0) {
        r.h0 = std::numeric_limits<double>::infinity();
        for (Index i = 0; i < n; ++i) include_record(i, inv_n);
    } else if (l_mode.explicit_l) {
        // Explicit-L norms need the full-data Hessian at the pilot estimate,
        // so this branch materializes the norms (still one data pass).
        const VectorXd t_all = l_norms(f, data, r.pilot.theta, l_mode.L);
        VectorXd t_pilot(pilot.realized_size);
        for (Index j = 0; j < pilot.realized_size; ++j)
            t_pilot(j) = t_all(pilot.indices[static_cast<std::size_t>(j)]);
        const PilotPoissonPlan pp = pilot_poisson_plan(t_pilot, sn, n, b, h_mode);
        r.h0 = pp.H0;
        r.psi0 = pp.Psi0;
        for (Index i = 0; i < n; ++i)
            include_record(i, (1.0 - alpha) * pp.prob(t_all(i)) + alpha * inv_n);
    } else {
        VectorXd t_pilot(pilot.realized_size);
        for (Index j = 0; j < pilot.realized_size; ++j) {
            const Index i = pilot.indices[static_cast<std::size_t>(j)];
            const double u = data.x(i).dot(r.pilot.theta);
            if (!admissible_u(f, u)) throw DomainError("pilot estimate inadmissible at row", i);
            t_pilot(j) = std::abs(psi_score(f, u, data.y(i), data.trials(i))) * data.x(i).norm();
        }
        const PilotPoissonPlan pp = pilot_poisson_plan(t_pilot, sn, n, b, h_mode);
        r.h0 = pp.H0;
        r.psi0 = pp.Psi0;
        const VectorXd& theta0 = r.pilot.theta;
        for (Index i = 0; i < n; ++i) {
            const double u = data.x(i).dot(theta0);
            if (!admissible_u(f, u)) throw DomainError("pilot estimate inadmissible at row", i);
            const double t = std::abs(psi_score(f, u, data.y(i), data.trials(i))) * data.x(i).norm();
            include_record(i, (1.0 - alpha) * pp.prob(t) + alpha * inv_n);
        }
    }

    if (p.rows.empty()) throw EmptySecondStageError();
    p.weights = Eigen::Map<const VectorXd>(weights.data(), static_cast<Index>(weights.size()));
    r.second = newton_maximize(p, r.pilot.theta, opt);
    r.second_size = static_cast<Index>(p.rows.size());

    r.theta_aggregated = aggregate(r.pilot.theta, r.pilot.hessian, double(r.pilot_size),
                                   r.second.theta, r.second.hessian, double(sn));
    return r;
}

void write_result_row(const PipelineResult& r, std::ostream& os) {
    char buf[64];
    auto num = [&](double v) {
        std::snprintf(buf, sizeof(buf), ",%.17g", v);
        os << buf;
    };
    os << to_string(r.scheme);
    num(r.alpha);
    num(r.b);
    os << "," << (r.scheme == Scheme::poisson ? to_string(r.h_mode) : "-");
    os << "," << r.pilot_size << "," << r.second_size;
    num(r.h0);
    num(r.psi0);
    os << "," << r.pilot.iterations << "," << r.second.iterations;
    for (Index j = 0; j < r.pilot.theta.size(); ++j) num(r.pilot.theta(j));
    for (Index j = 0; j < r.second.theta.size(); ++j) num(r.second.theta(j));
    for (Index j = 0; j < r.theta_aggregated.size(); ++j) num(r.theta_aggregated(j));
    os << "\n";
}

}  // namespace subsamp

#pragma once

#include <vector>

#include "subsamp/model.hpp"

namespace subsamp {

// Weighted M-estimation objective sum_i w_i m(Z_i, theta) over a row subset.
// Duplicate indices are allowed (with-replacement subsamples).
struct WeightedProblem {
    Family family;
    const Dataset* data = nullptr;
    std::vector<Index> rows;  // indices into *data
    VectorXd weights;         // positive, same length as rows

    void check() const;
};

struct SolveReport {
    VectorXd theta;
    int iterations = 0;
    double grad_norm = 0.0;
    bool converged = false;
    MatrixXd hessian;  // weighted Hessian sum_i w_i ddm(Z_i, theta) at theta
    double objective = 0.0;
};

struct SolveOptions {
    double tol = 1e-8;
    int max_iter = 100;
};

// Admissible default start per family: zeros for logistic/poisson/binomial,
// the closed-form solution for ols (d <= 1000), and for gamma the theta with
// xbar'theta = -1 at the weighted mean covariate.
VectorXd default_start(const WeightedProblem& p);

// Newton's method with step halving (at most 30 halvings per step, applied
// whenever the objective does not increase or theta leaves the admissible
// region). Converged when ||grad(theta)|| <= tol * (1 + ||grad(theta0)||).
// A numerically singular Hessian gets one ridge retry (1e-10 * trace(H)/d)
// before SingularHessianError; NonConvergenceError carries a divergence flag
// when the iterate norm grew monotonically (logistic separation).
SolveReport newton_maximize(const WeightedProblem& p, const VectorXd& theta0,
                            const SolveOptions& opt = {});
SolveReport newton_maximize(const WeightedProblem& p, const SolveOptions& opt = {});

// Weighted normal equations; must agree with newton_maximize on ols problems.
VectorXd ols_closed_form(const WeightedProblem& p);

}  // namespace subsamp

#pragma once

#include <ostream>
#include <string>

#include "subsamp/model.hpp"
#include "subsamp/optprob.hpp"

namespace subsamp {

// Asymptotic variance pieces of the subsample estimators around the
// full-data maximizer: Lambda is the plan-dependent middle matrix and
// V = Mddot^-1 Lambda Mddot^-1 the sandwich. Rows with a zero gradient are
// skipped (their contribution is zero no matter the probability); a zero
// probability on a row with nonzero gradient is an error.

// (1/n^2) sum dm dm' / pi  (with-replacement middle matrix).
MatrixXd lambda_R(Family f, const Dataset& data, const VectorXd& theta, const SamplingPlan& plan);

// Single pass of (1/n^2) sum (1 - s_n pi) dm dm' / pi; identical to
// lambda_R - (s_n/n^2) sum dm dm'.
MatrixXd lambda_P(Family f, const Dataset& data, const VectorXd& theta, const SamplingPlan& plan,
                  Index s_n);

// sum dm dm' (unscaled); the cross-check term of the two lambda_P routes.
MatrixXd grad_outer_sum(Family f, const Dataset& data, const VectorXd& theta);

// Lambda of the alpha-mixed optimal plan built internally from full-data
// norms at theta. rho = 0 uses the exact Poisson threshold; rho > 0 replaces
// H by the rho-th upper sample quantile of the norms.
MatrixXd lambda_alpha(Family f, const Dataset& data, const VectorXd& theta, Scheme scheme,
                      double alpha, Index s_n, double rho = 0.0);

// V = Mddot^-1 Lambda Mddot^-1, symmetrized.
MatrixXd sandwich(Family f, const Dataset& data, const VectorXd& theta, const MatrixXd& lambda);

struct VarianceReport {
    MatrixXd lambda;
    MatrixXd v;
    double trace_lambda = 0.0;
    Scheme scheme = Scheme::with_replacement;
    std::string provenance;
};

VarianceReport variance_report(Family f, const Dataset& data, const VectorXd& theta,
                               const SamplingPlan& plan, Index s_n, std::string provenance);

// Matrices flattened row-major, one matrix per line: "name,d,v00,v01,...".
void write_variance_csv(const VarianceReport& report, std::ostream& os);

}  // namespace subsamp

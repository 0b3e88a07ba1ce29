#pragma once

#include <string>

#include "subsamp/dataset.hpp"

namespace subsamp {

// M-estimation families with canonical links. Each family defines a
// per-observation kernel m(Z, theta) and its derivatives in theta; all five
// share the structure   dm = psi(u, y, k) * x,   ddm = -omega(u, y, k) * x x'
// with the linear predictor u = x'theta.
//
// Additive constants dropped from m (they do not move the maximizer):
//   ols       m = -0.5 (y - u)^2          (Gaussian normalizing constant)
//   logistic  m = y log p + (1-y) log(1-p), p = sigmoid(u)   (nothing dropped)
//   poisson   m = y u - exp(u)            (drops -log y!)
//   binomial  m = y u - k log(1 + e^u)    (drops log C(k,y))
//   gamma     m = y u + log(-u), u < 0    (scale nu = 1; nu terms dropped)
//
// logistic/binomial clip p to [1e-12, 1-1e-12] inside m only, keeping the
// objective finite under separation; gradients and Hessians stay exact.
enum class Family { ols, logistic, poisson, binomial, gamma };

Family family_from_string(const std::string& s);
const char* to_string(Family f);

// Scalar score/curvature at linear predictor u: dm = psi * x, ddm = -omega * x x'.
double psi_score(Family f, double u, double y, double k);
double omega_weight(Family f, double u, double y, double k);

// Gamma's canonical link needs x'theta < 0; every other family is unrestricted.
inline bool admissible_u(Family f, double u) { return f != Family::gamma || u < 0.0; }

// Throws DomainError when a row's response violates the family's support
// (logistic y in {0,1}, poisson y a nonnegative integer, ...).
void validate(Family f, const Dataset& data);

double contrib_m(Family f, const Observation& z, const VectorXd& theta);
VectorXd contrib_grad(Family f, const Observation& z, const VectorXd& theta);
MatrixXd contrib_hess(Family f, const Observation& z, const VectorXd& theta);

// Euclidean norms of per-row gradients, one O(nd) pass.
VectorXd grad_norms(Family f, const Dataset& data, const VectorXd& theta);

// || L Mddot^-1 dm(Z_i, theta) || with Mddot the full-data average Hessian.
// O(nd^2) after one d x d solve.
VectorXd l_norms(Family f, const Dataset& data, const VectorXd& theta, const MatrixXd& L);

// Full-data average Hessian (1/n) sum ddm(Z_i, theta).
MatrixXd average_hessian(Family f, const Dataset& data, const VectorXd& theta);

// Logistic Hessian surrogate -(1/n) sum (y_i - p_i)^2 x_i x_i' that avoids
// second derivatives of p; same limit as the exact average Hessian.
MatrixXd approx_hessian_logistic(const Dataset& data, const VectorXd& theta);

}  // namespace subsamp

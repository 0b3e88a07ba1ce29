#pragma once

#include <optional>
#include <ostream>

#include "subsamp/optprob.hpp"
#include "subsamp/solver.hpp"

namespace subsamp {

// How the probability engine measures a row: plain gradient norms (the
// L = Mddot shortcut, O(nd)) or ||L Mddot^-1 dm|| for an explicit L
// (one extra O(nd^2) pass).
struct LSpec {
    bool explicit_l = false;
    MatrixXd L;

    static LSpec grad_norm() { return {}; }
    static LSpec with_matrix(MatrixXd l) { return {true, std::move(l)}; }
};

// Everything a two-stage run produces: pilot fit, second-stage fit, and the
// Hessian-weighted aggregate of the two.
struct PipelineResult {
    Scheme scheme = Scheme::with_replacement;
    double alpha = 0.0;
    double b = 0.0;                   // poisson only
    HMode h_mode = HMode::infinity;   // poisson only
    Index pilot_size = 0;             // realized
    Index second_size = 0;            // realized
    Index s0_target = 0;
    Index sn_target = 0;
    double h0 = 0.0;                  // poisson pilot threshold (inf allowed)
    double psi0 = 0.0;                // poisson pilot mean truncated norm
    SolveReport pilot;
    SolveReport second;
    VectorXd theta_aggregated;
};

// Unweighted M-estimator over the full data (the reference for MSE).
SolveReport fit_full(Family f, const Dataset& data, const SolveOptions& opt = {});

// Hessian-weighted combination (size0*H0 + size1*H1)^-1 (size0*H0*th0 + size1*H1*th1).
VectorXd aggregate(const VectorXd& theta0, const MatrixXd& h0, double size0,
                   const VectorXd& theta1, const MatrixXd& h1, double size1);

// Two-stage optimal subsampling with replacement: uniform pilot of size s0,
// norms at the pilot estimate over all n rows, alpha-mixed plan,
// with-replacement sample of size sn, fit with weights 1/(n*sn*pi). alpha = 1
// degenerates to uniform subsampling (the norms pass is skipped).
PipelineResult run_withreplacement(Family f, const Dataset& data, Index s0, Index sn, double alpha,
                                   const LSpec& l_mode, RngSeed seed,
                                   const SolveOptions& opt = {});

// Two-stage optimal Poisson subsampling: uniform Poisson pilot at rate s0/n,
// pilot threshold H0 and mean Psi0, then one streaming pass that computes
// each record's norm, its mixed probability and the inclusion test, never
// holding the probability vector in memory. Weights are
// 1/(n * min(sn*pi, 1)).
PipelineResult run_poisson(Family f, const Dataset& data, Index s0, Index sn, double alpha,
                           double b, HMode h_mode, const LSpec& l_mode, RngSeed seed,
                           const SolveOptions& opt = {});

// One CSV row:
// scheme,alpha,b,h_mode,s0,s1,h0,psi0,pilot_iters,second_iters,
// theta_pilot_0..d-1,theta_second_0..d-1,theta_agg_0..d-1
void write_result_row(const PipelineResult& r, std::ostream& os);

}  // namespace subsamp

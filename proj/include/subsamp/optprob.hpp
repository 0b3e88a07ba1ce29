#pragma once

#include <algorithm>
#include <optional>
#include <ostream>

#include "subsamp/dataset.hpp"
#include "subsamp/sampling.hpp"

namespace subsamp {

// Water-filling cap of the Poisson-optimal probabilities: exactly g records
// sit at the maximum probability 1/s_n and H is the threshold with
// t_(n-g) < H <= t_(n-g+1).
struct PoissonThreshold {
    double H = 0.0;
    Index g = 0;
};

// A probability vector over the full data plus how it was built.
struct SamplingPlan {
    VectorXd pi;
    Scheme scheme = Scheme::with_replacement;
    double alpha = 0.0;                       // defensive mixing weight applied
    std::optional<PoissonThreshold> threshold;  // exact poisson plans only

    void check() const;  // simplex within 1e-9, entries >= 0
};

// pi_i = t_i / sum(t): minimizes trace of the with-replacement variance.
SamplingPlan opt_probs_withreplacement(const VectorXd& t);

// Threshold scan: sort ascending (stable), compensated prefix sums, then the
// smallest g in [0, s_n) satisfying both order-statistic inequalities
// (t_(n+1) = infinity). H = (sum of the n-g smallest t) / (s_n - g).
PoissonThreshold poisson_threshold(const VectorXd& t, Index s_n);

// pi_i = min(t_i, H) / sum_j min(t_j, H); the denominator equals s_n * H,
// which makes the g capped entries exactly 1/s_n.
SamplingPlan opt_probs_poisson(const VectorXd& t, Index s_n);

// Brute-force check of the capped minimization of sum t_i^2 / pi_i: tries
// every candidate count g of entries clamped to 1/s_n, keeps the feasible
// candidates, returns the argmin. Independent of the threshold scan.
// Validation scale only (n <= 200).
VectorXd kkt_oracle(const VectorXd& t, Index s_n);

// pi <- (1-alpha) pi + alpha/n. Afterwards n*pi_i >= alpha.
SamplingPlan defensive_mix(SamplingPlan plan, double alpha);

enum class HMode { quantile, infinity };

HMode hmode_from_string(const std::string& s);
const char* to_string(HMode m);

// Pilot-based streaming rule for approximated optimal Poisson subsampling:
// prob(t) = min(t, H0) / (n * Psi0), to be alpha-mixed and fed to the
// inclusion test u <= s_n * pi.
struct PilotPoissonPlan {
    double H0 = 0.0;  // +infinity in HMode::infinity
    double Psi0 = 0.0;
    Index n = 0;

    double prob(double norm) const { return std::min(norm, H0) / (double(n) * Psi0); }
};

// Quantile mode takes H0 as the k-th largest pilot norm with
// k = max(1, ceil(q * s0_realized)), q = s_n/(b*n); infinity mode skips the
// threshold and Psi0 is the plain pilot mean norm.
PilotPoissonPlan pilot_poisson_plan(const VectorXd& pilot_norms, Index s_n, Index n, double b,
                                    HMode h_mode);

// Audit sidecar: "index,pi" rows.
void write_plan_csv(const SamplingPlan& plan, std::ostream& os);

}  // namespace subsamp

#include "subsamp/optprob.hpp"

#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "subsamp/numeric.hpp"

namespace subsamp {

namespace {

void check_norms(const VectorXd& t) {
    bool any_positive = false;
    for (Index i = 0; i < t.size(); ++i) {
        if (!(t(i) >= 0.0) || !std::isfinite(t(i)))
            throw InvalidDistributionError("norms must be finite and nonnegative (index " +
                                           std::to_string(i) + ")");
        any_positive |= t(i) > 0.0;
    }
    if (!any_positive) throw AllZeroNormsError();
}

}  // namespace

void SamplingPlan::check() const {
    KahanSum sum;
    for (Index i = 0; i < pi.size(); ++i) {
        if (!(pi(i) >= 0.0) || !std::isfinite(pi(i)))
            throw InvalidDistributionError("plan has a negative or non-finite probability");
        sum.add(pi(i));
    }
    if (std::abs(sum.value() - 1.0) > 1e-9)
        throw InvalidDistributionError("plan does not sum to 1 within 1e-9");
}

SamplingPlan opt_probs_withreplacement(const VectorXd& t) {
    check_norms(t);
    KahanSum sum;
    for (Index i = 0; i < t.size(); ++i) sum.add(t(i));
    SamplingPlan plan;
    plan.scheme = Scheme::with_replacement;
    plan.pi = t / sum.value();
    return plan;
}

PoissonThreshold poisson_threshold(const VectorXd& t, Index s_n) {
    const Index n = t.size();
    if (s_n < 1 || s_n >= n) throw InvalidDistributionError("need 1 <= s_n < n");
    check_norms(t);

    std::vector<double> sorted(t.data(), t.data() + n);
    std::stable_sort(sorted.begin(), sorted.end());
    std::vector<double> prefix(n);  // prefix[i] = sum of the i+1 smallest
    KahanSum acc;
    for (Index i = 0; i < n; ++i) {
        acc.add(sorted[i]);
        prefix[i] = acc.value();
    }

    for (Index g = 0; g < s_n; ++g) {
        // Eq. comparisons in multiplied form: t_(n-g)*(s_n-g) < P_(n-g) and
        // t_(n-g+1)*(s_n-g+1) >= P_(n-g+1), t_(n+1) = infinity.
        const bool cond1 = sorted[n - g - 1] * double(s_n - g) < prefix[n - g - 1];
        const bool cond2 =
            g == 0 || sorted[n - g] * double(s_n - g + 1) >= prefix[n - g];
        if (cond1 && cond2) return {prefix[n - g - 1] / double(s_n - g), g};
    }
    throw NoValidGError(s_n);
}

SamplingPlan opt_probs_poisson(const VectorXd& t, Index s_n) {
    const PoissonThreshold th = poisson_threshold(t, s_n);
    const Index n = t.size();
    const double denom = double(s_n) * th.H;  // = sum_j min(t_j, H) (Appendix identity)
    SamplingPlan plan;
    plan.scheme = Scheme::poisson;
    plan.threshold = th;
    plan.pi.resize(n);
    const double cap = 1.0 / double(s_n);
    for (Index i = 0; i < n; ++i) plan.pi(i) = t(i) >= th.H ? cap : t(i) / denom;
    return plan;
}

VectorXd kkt_oracle(const VectorXd& t, Index s_n) {
    const Index n = t.size();
    if (n > 200) throw std::invalid_argument("kkt_oracle is for validation scale (n <= 200)");
    if (s_n < 1 || s_n >= n) throw InvalidDistributionError("need 1 <= s_n < n");
    check_norms(t);

    std::vector<Index> order(n);
    std::iota(order.begin(), order.end(), Index{0});
    std::stable_sort(order.begin(), order.end(),
                     [&t](Index a, Index b) { return t(a) > t(b); });  // descending

    const double cap = 1.0 / double(s_n);
    double best_obj = std::numeric_limits<double>::infinity();
    VectorXd best;
    for (Index g = 0; g < s_n; ++g) {
        double rest_sum = 0.0;
        for (Index j = g; j < n; ++j) rest_sum += t(order[j]);
        const double mass = 1.0 - double(g) * cap;
        VectorXd pi = VectorXd::Zero(n);
        bool feasible = true;
        for (Index j = 0; j < g; ++j) pi(order[j]) = cap;
        if (rest_sum > 0.0) {
            for (Index j = g; j < n; ++j) {
                pi(order[j]) = t(order[j]) * mass / rest_sum;
                if (pi(order[j]) > cap * (1.0 + 1e-12)) feasible = false;
            }
        } else if (mass > 1e-15) {
            feasible = false;  // leftover mass has nowhere informative to go
        }
        if (!feasible) continue;
        double obj = 0.0;
        for (Index i = 0; i < n; ++i) {
            if (t(i) == 0.0) continue;
            if (pi(i) <= 0.0) {
                obj = std::numeric_limits<double>::infinity();
                break;
            }
            obj += t(i) * t(i) / pi(i);
        }
        if (obj < best_obj) {
            best_obj = obj;
            best = std::move(pi);
        }
    }
    if (best.size() == 0) throw NoValidGError(s_n);
    return best;
}

SamplingPlan defensive_mix(SamplingPlan plan, double alpha) {
    if (alpha < 0.0 || alpha > 1.0) throw InvalidDistributionError("alpha must lie in [0,1]");
    const double n = double(plan.pi.size());
    plan.pi = (1.0 - alpha) * plan.pi.array() + alpha / n;
    plan.alpha = alpha;
    return plan;
}

HMode hmode_from_string(const std::string& s) {
    if (s == "quantile") return HMode::quantile;
    if (s == "infinity") return HMode::infinity;
    throw SchemaMismatchError("unknown H mode '" + s + "'");
}

const char* to_string(HMode m) { return m == HMode::quantile ? "quantile" : "infinity"; }

PilotPoissonPlan pilot_poisson_plan(const VectorXd& pilot_norms, Index s_n, Index n, double b,
                                    HMode h_mode) {
    const Index s0 = pilot_norms.size();
    if (s0 < 1) throw EmptyPilotError();
    const double q = double(s_n) / (b * double(n));
    if (!(q >= 0.0) || q >= 1.0) throw InvalidDistributionError("s_n/(b*n) must lie in [0,1)");

    PilotPoissonPlan plan;
    plan.n = n;
    if (h_mode == HMode::infinity) {
        plan.H0 = std::numeric_limits<double>::infinity();
    } else {
        // k-th largest pilot norm, k = max(1, ceil(q * s0)).
        const Index k = std::max<Index>(1, static_cast<Index>(std::ceil(q * double(s0))));
        std::vector<double> sorted(pilot_norms.data(), pilot_norms.data() + s0);
        std::stable_sort(sorted.begin(), sorted.end(), std::greater<double>());
        plan.H0 = sorted[k - 1];
    }
    KahanSum psi;
    for (Index i = 0; i < s0; ++i) psi.add(std::min(pilot_norms(i), plan.H0));
    plan.Psi0 = psi.value() / double(s0);
    if (!(plan.Psi0 > 0.0)) throw ZeroPsiError();
    return plan;
}

void write_plan_csv(const SamplingPlan& plan, std::ostream& os) {
    os << "index,pi\n";
    char buf[64];
    for (Index i = 0; i < plan.pi.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%lld,%.17g\n", static_cast<long long>(i), plan.pi(i));
        os << buf;
    }
}

}  // namespace subsamp

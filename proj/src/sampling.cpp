#include "subsamp/sampling.hpp"

#include <cmath>

namespace subsamp {

const char* to_string(Scheme s) {
    return s == Scheme::with_replacement ? "with_replacement" : "poisson";
}

AliasTable::AliasTable(const VectorXd& pi) {
    const Index n = pi.size();
    if (n < 1) throw InvalidDistributionError("empty probability vector");
    double sum = 0.0;
    for (Index i = 0; i < n; ++i) {
        if (!(pi(i) >= 0.0) || !std::isfinite(pi(i)))
            throw InvalidDistributionError("negative or non-finite probability at index " +
                                           std::to_string(i));
        sum += pi(i);
    }
    if (sum <= 0.0) throw InvalidDistributionError("probabilities sum to zero");
    if (std::abs(sum - 1.0) > 1e-9)
        throw InvalidDistributionError("probabilities sum to " + std::to_string(sum) +
                                       ", beyond the 1e-9 renormalization tolerance");
    pi_ = pi / sum;

    cut_.assign(n, 1.0);
    alias_.assign(n, 0);
    std::vector<double> scaled(n);
    std::vector<Index> small, large;
    small.reserve(n);
    large.reserve(n);
    for (Index i = 0; i < n; ++i) {
        scaled[i] = pi_(i) * double(n);
        (scaled[i] < 1.0 ? small : large).push_back(i);
    }
    while (!small.empty() && !large.empty()) {
        const Index s = small.back();
        small.pop_back();
        const Index l = large.back();
        large.pop_back();
        cut_[s] = scaled[s];
        alias_[s] = l;
        scaled[l] -= 1.0 - scaled[s];
        (scaled[l] < 1.0 ? small : large).push_back(l);
    }
    // Leftovers are full buckets up to rounding.
    for (Index i : large) {
        cut_[i] = 1.0;
        alias_[i] = i;
    }
    for (Index i : small) {
        cut_[i] = 1.0;
        alias_[i] = i;
    }
}

Index AliasTable::draw(Rng& rng) const {
    const Index j = static_cast<Index>(rng.next_below(static_cast<std::uint64_t>(pi_.size())));
    const double u = rng.next_double();
    return u < cut_[j] ? j : alias_[j];
}

Subsample sample_with_replacement(const VectorXd& pi, Index s_n, RngSeed seed) {
    if (s_n < 1) throw InvalidDistributionError("s_n must be >= 1");
    AliasTable table(pi);
    Rng rng(seed);
    Subsample out;
    out.scheme = Scheme::with_replacement;
    out.indices.reserve(s_n);
    out.probs.reserve(s_n);
    for (Index k = 0; k < s_n; ++k) {
        const Index i = table.draw(rng);
        out.indices.push_back(i);
        out.probs.push_back(table.probs()(i));
    }
    out.realized_size = s_n;
    return out;
}

Subsample sample_poisson(const VectorXd& pi, Index s_n, RngSeed seed) {
    return sample_poisson_stream(pi.size(), [&pi](Index i) { return pi(i); }, s_n, seed);
}

Subsample pilot_uniform(Index n, Index s0, Scheme scheme, RngSeed seed) {
    if (s0 < 1) throw InvalidDistributionError("pilot size must be >= 1");
    const VectorXd uniform = VectorXd::Constant(n, 1.0 / double(n));
    if (scheme == Scheme::with_replacement) return sample_with_replacement(uniform, s0, seed);
    Subsample s =
        sample_poisson_stream(n, [n](Index) { return 1.0 / double(n); }, s0, seed);
    if (s.realized_size == 0) throw EmptyPilotError();
    return s;
}

}  // namespace subsamp

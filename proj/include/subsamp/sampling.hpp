#pragma once

#include <vector>

#include "subsamp/dataset.hpp"
#include "subsamp/rng.hpp"

namespace subsamp {

enum class Scheme { with_replacement, poisson };

const char* to_string(Scheme s);

// Selected row indices with the probability recorded per draw.
// with_replacement: realized_size == s_n exactly, duplicates possible.
// poisson: indices strictly increasing, no duplicates, random size.
struct Subsample {
    std::vector<Index> indices;
    std::vector<double> probs;
    Index realized_size = 0;
    Scheme scheme = Scheme::with_replacement;
};

// Walker/Vose alias table: O(n) build, O(1) per draw.
class AliasTable {
public:
    // pi must be nonnegative with sum within 1e-9 of 1 (renormalized
    // internally); anything further off is an InvalidDistributionError.
    explicit AliasTable(const VectorXd& pi);

    Index draw(Rng& rng) const;
    const VectorXd& probs() const { return pi_; }
    Index size() const { return pi_.size(); }

private:
    VectorXd pi_;  // normalized
    std::vector<double> cut_;
    std::vector<Index> alias_;
};

// s_n i.i.d. multinomial draws from pi.
Subsample sample_with_replacement(const VectorXd& pi, Index s_n, RngSeed seed);

// One uniform per record in data order; record i enters iff u_i <= s_n*pi_i.
// pi values with s_n*pi >= 1 are included for sure; the pi source is consulted
// once per record so the full vector never needs to exist at once.
template <class PiFn>
Subsample sample_poisson_stream(Index n, PiFn&& pi_of, Index s_n, RngSeed seed) {
    Rng rng(seed);
    Subsample out;
    out.scheme = Scheme::poisson;
    for (Index i = 0; i < n; ++i) {
        const double u = rng.next_double();
        const double pi = pi_of(i);
        if (pi < 0.0)
            throw InvalidDistributionError("negative probability at record " + std::to_string(i));
        if (u <= double(s_n) * pi) {
            out.indices.push_back(i);
            out.probs.push_back(pi);
        }
    }
    out.realized_size = static_cast<Index>(out.indices.size());
    return out;
}

Subsample sample_poisson(const VectorXd& pi, Index s_n, RngSeed seed);

// Uniform pilot (pi = 1/n) under either scheme. Throws EmptyPilotError when a
// Poisson pilot comes back empty; callers retry with a fresh stream.
Subsample pilot_uniform(Index n, Index s0, Scheme scheme, RngSeed seed);

}  // namespace subsamp

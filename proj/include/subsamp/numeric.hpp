#pragma once

#include <cmath>

namespace subsamp {

// Neumaier compensated accumulator; add() keeps a running error term so long
// sums of near-cancelling doubles stay accurate to ~1 ulp.
class KahanSum {
public:
    void add(double v) {
        const double t = sum_ + v;
        if (std::abs(sum_) >= std::abs(v))
            comp_ += (sum_ - t) + v;
        else
            comp_ += (v - t) + sum_;
        sum_ = t;
    }
    double value() const { return sum_ + comp_; }

private:
    double sum_ = 0.0;
    double comp_ = 0.0;
};

}  // namespace subsamp

#pragma once

#include <Eigen/Core>
#include <optional>
#include <utility>

#include "subsamp/errors.hpp"

namespace subsamp {

using Index = Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;
// Row-major so a data row is contiguous in memory.
using RowMatrixXd = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// One record: covariates x, response y, optional binomial trial count.
// An intercept is just a 1-column in x; nothing is prepended implicitly.
struct Observation {
    VectorXd x;
    double y = 0.0;
    double trials = 1.0;
};

struct DataSchema {
    Index n_covariates = 0;
    bool has_trials = false;
};

// Immutable column-typed table of n observations (the full data).
class Dataset {
public:
    Dataset(RowMatrixXd covariates, VectorXd responses, std::optional<VectorXd> trials = std::nullopt)
        : x_(std::move(covariates)), y_(std::move(responses)), trials_(std::move(trials)) {
        if (x_.rows() < 1) throw SchemaMismatchError("dataset needs at least one row");
        if (y_.size() != x_.rows()) throw SchemaMismatchError("response length != row count");
        if (trials_ && trials_->size() != x_.rows())
            throw SchemaMismatchError("trials length != row count");
        if (!x_.allFinite() || !y_.allFinite() || (trials_ && !trials_->allFinite()))
            throw SchemaMismatchError("non-finite entry in dataset");
    }

    Index rows() const { return x_.rows(); }
    Index dim() const { return x_.cols(); }
    DataSchema schema() const { return {x_.cols(), trials_.has_value()}; }

    const RowMatrixXd& covariates() const { return x_; }
    const VectorXd& responses() const { return y_; }
    bool has_trials() const { return trials_.has_value(); }

    // Binomial trial count; rows without a trials column behave as k=1.
    double trials(Index i) const { return trials_ ? (*trials_)(i) : 1.0; }
    double y(Index i) const { return y_(i); }
    auto x(Index i) const { return x_.row(i); }

    Observation observation(Index i) const { return {x_.row(i).transpose(), y_(i), trials(i)}; }

private:
    RowMatrixXd x_;
    VectorXd y_;
    std::optional<VectorXd> trials_;
};

}  // namespace subsamp

#include "subsamp/model.hpp"

#include <Eigen/Dense>
#include <cmath>

namespace subsamp {

namespace {

constexpr double kProbClip = 1e-12;

inline double sigmoid(double u) {
    if (u >= 0.0) {
        double e = std::exp(-u);
        return 1.0 / (1.0 + e);
    }
    double e = std::exp(u);
    return e / (1.0 + e);
}

inline double clip_prob(double p) {
    return std::min(std::max(p, kProbClip), 1.0 - kProbClip);
}

inline void require_admissible(Family f, double u, Index row = -1) {
    if (!admissible_u(f, u))
        throw DomainError("gamma canonical link needs x'theta < 0, got " + std::to_string(u), row);
}

inline bool is_integer(double v) { return v == std::floor(v); }

}  // namespace

Family family_from_string(const std::string& s) {
    if (s == "ols") return Family::ols;
    if (s == "logistic") return Family::logistic;
    if (s == "poisson") return Family::poisson;
    if (s == "binomial") return Family::binomial;
    if (s == "gamma") return Family::gamma;
    throw SchemaMismatchError("unknown model family '" + s + "'");
}

const char* to_string(Family f) {
    switch (f) {
        case Family::ols: return "ols";
        case Family::logistic: return "logistic";
        case Family::poisson: return "poisson";
        case Family::binomial: return "binomial";
        case Family::gamma: return "gamma";
    }
    return "?";
}

double psi_score(Family f, double u, double y, double k) {
    switch (f) {
        case Family::ols: return y - u;
        case Family::logistic: return y - sigmoid(u);
        case Family::poisson: return y - std::exp(u);
        case Family::binomial: return y - k * sigmoid(u);
        case Family::gamma: return y + 1.0 / u;
    }
    return 0.0;
}

double omega_weight(Family f, double u, double y, double k) {
    (void)y;
    switch (f) {
        case Family::ols: return 1.0;
        case Family::logistic: {
            double p = sigmoid(u);
            return p * (1.0 - p);
        }
        case Family::poisson: return std::exp(u);
        case Family::binomial: {
            double p = sigmoid(u);
            return k * p * (1.0 - p);
        }
        case Family::gamma: return 1.0 / (u * u);
    }
    return 0.0;
}

void validate(Family f, const Dataset& data) {
    const VectorXd& y = data.responses();
    for (Index i = 0; i < data.rows(); ++i) {
        switch (f) {
            case Family::ols:
                break;
            case Family::logistic:
                if (y(i) != 0.0 && y(i) != 1.0)
                    throw DomainError("logistic response must be 0 or 1", i);
                break;
            case Family::binomial: {
                double k = data.trials(i);
                if (k < 1.0 || !is_integer(k))
                    throw DomainError("binomial trial count must be a positive integer", i);
                if (y(i) < 0.0 || y(i) > k)
                    throw DomainError("binomial response must lie in [0, k]", i);
                break;
            }
            case Family::poisson:
                if (y(i) < 0.0 || !is_integer(y(i)))
                    throw DomainError("poisson response must be a nonnegative integer", i);
                break;
            case Family::gamma:
                if (y(i) <= 0.0) throw DomainError("gamma response must be positive", i);
                break;
        }
    }
}

double contrib_m(Family f, const Observation& z, const VectorXd& theta) {
    const double u = z.x.dot(theta);
    require_admissible(f, u);
    switch (f) {
        case Family::ols: {
            double e = z.y - u;
            return -0.5 * e * e;
        }
        case Family::logistic: {
            double p = clip_prob(sigmoid(u));
            return z.y * std::log(p) + (1.0 - z.y) * std::log(1.0 - p);
        }
        case Family::poisson:
            return z.y * u - std::exp(u);
        case Family::binomial: {
            double p = clip_prob(sigmoid(u));
            double yr = z.y / z.trials;
            return z.trials * (yr * std::log(p) + (1.0 - yr) * std::log(1.0 - p));
        }
        case Family::gamma:
            return z.y * u + std::log(-u);
    }
    return 0.0;
}

VectorXd contrib_grad(Family f, const Observation& z, const VectorXd& theta) {
    const double u = z.x.dot(theta);
    require_admissible(f, u);
    return psi_score(f, u, z.y, z.trials) * z.x;
}

MatrixXd contrib_hess(Family f, const Observation& z, const VectorXd& theta) {
    const double u = z.x.dot(theta);
    require_admissible(f, u);
    const double w = omega_weight(f, u, z.y, z.trials);
    const Index d = z.x.size();
    MatrixXd h(d, d);
    for (Index r = 0; r < d; ++r)
        for (Index c = 0; c <= r; ++c) {
            const double v = -w * (z.x(r) * z.x(c));
            h(r, c) = v;
            h(c, r) = v;  // bitwise symmetric
        }
    return h;
}

VectorXd grad_norms(Family f, const Dataset& data, const VectorXd& theta) {
    const Index n = data.rows();
    VectorXd out(n);
    for (Index i = 0; i < n; ++i) {
        const double u = data.x(i).dot(theta);
        require_admissible(f, u, i);
        out(i) = std::abs(psi_score(f, u, data.y(i), data.trials(i))) * data.x(i).norm();
    }
    return out;
}

MatrixXd average_hessian(Family f, const Dataset& data, const VectorXd& theta) {
    const Index n = data.rows();
    const Index d = data.dim();
    MatrixXd h = MatrixXd::Zero(d, d);
    for (Index i = 0; i < n; ++i) {
        const double u = data.x(i).dot(theta);
        require_admissible(f, u, i);
        const double w = omega_weight(f, u, data.y(i), data.trials(i));
        h.selfadjointView<Eigen::Lower>().rankUpdate(data.x(i).transpose(), -w / double(n));
    }
    return h.selfadjointView<Eigen::Lower>();
}

VectorXd l_norms(Family f, const Dataset& data, const VectorXd& theta, const MatrixXd& L) {
    const MatrixXd h = average_hessian(f, data, theta);
    Eigen::LDLT<MatrixXd> ldlt(h);
    const VectorXd dvec = ldlt.vectorD().cwiseAbs();
    const double dmax = dvec.maxCoeff();
    if (ldlt.info() != Eigen::Success || dmax <= 0.0 ||
        dvec.minCoeff() <= 1e-14 * dmax)
        throw SingularHessianError(dmax > 0.0 ? dvec.minCoeff() / dmax : 0.0);

    // B = L Mddot^-1, then t_i = |psi_i| * ||B x_i||.
    const MatrixXd b = ldlt.solve(L.transpose()).transpose();
    const Index n = data.rows();
    VectorXd out(n);
    for (Index i = 0; i < n; ++i) {
        const double u = data.x(i).dot(theta);
        require_admissible(f, u, i);
        const double psi = psi_score(f, u, data.y(i), data.trials(i));
        out(i) = std::abs(psi) * (b * data.x(i).transpose()).norm();
    }
    return out;
}

MatrixXd approx_hessian_logistic(const Dataset& data, const VectorXd& theta) {
    const Index n = data.rows();
    const Index d = data.dim();
    MatrixXd h = MatrixXd::Zero(d, d);
    for (Index i = 0; i < n; ++i) {
        const double r = data.y(i) - sigmoid(data.x(i).dot(theta));
        h.selfadjointView<Eigen::Lower>().rankUpdate(data.x(i).transpose(), -(r * r) / double(n));
    }
    return h.selfadjointView<Eigen::Lower>();
}

}  // namespace subsamp

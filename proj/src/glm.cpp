#include "cutgam/glm.hpp"

#include <cmath>
#include <sstream>

#include "cutgam/error.hpp"

namespace cutgam {

namespace detail {

PirlsProblem::PirlsProblem(const Eigen::MatrixXd& design, const Eigen::VectorXd& y,
                           Family family, Eigen::VectorXd offset)
    : x_(design), y_(y), family_(family), offset_(std::move(offset)) {
    if (offset_.size() == 0) offset_ = Eigen::VectorXd::Zero(y.size());
    if (design.rows() != y.size() || offset_.size() != y.size())
        throw Error(ErrorCode::DimensionMismatch, "design, response and offset lengths differ");
}

void PirlsProblem::finish(PirlsState& s, const Eigen::MatrixXd& penalty) const {
    s.mu.resize(s.eta.size());
    for (Eigen::Index i = 0; i < s.eta.size(); ++i) s.mu[i] = family_.inverse_link(s.eta[i]);
    s.deviance = family_.deviance(y_, s.mu);
    s.penalty = (penalty.size() == 0 || s.beta.size() == 0)
                    ? 0.0
                    : s.beta.dot(penalty * s.beta);
}

PirlsState PirlsProblem::start_from_eta(Eigen::VectorXd eta) const {
    PirlsState s;
    s.eta = std::move(eta);
    finish(s, Eigen::MatrixXd());
    return s;
}

PirlsState PirlsProblem::state_from_beta(Eigen::VectorXd beta,
                                         const Eigen::MatrixXd& penalty) const {
    PirlsState s;
    s.eta = x_ * beta + offset_;
    s.beta = std::move(beta);
    finish(s, penalty);
    return s;
}

WorkingSystem PirlsProblem::working_system(const PirlsState& s) const {
    const Eigen::Index n = y_.size();
    Eigen::VectorXd sqrt_w(n), z(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double d = family_.mu_eta(s.eta[i]);
        const double w = d * d / family_.variance(s.mu[i]);
        sqrt_w[i] = std::sqrt(w);
        z[i] = s.eta[i] - offset_[i] + (y_[i] - s.mu[i]) / d;
    }
    const Eigen::MatrixXd xw = sqrt_w.asDiagonal() * x_;
    WorkingSystem sys;
    sys.xtwx = Eigen::MatrixXd::Zero(x_.cols(), x_.cols());
    sys.xtwx.selfadjointView<Eigen::Lower>().rankUpdate(xw.transpose());
    sys.xtwx.triangularView<Eigen::StrictlyUpper>() = sys.xtwx.transpose();
    sys.xtwz = xw.transpose() * sqrt_w.cwiseProduct(z);
    return sys;
}

Eigen::MatrixXd PirlsProblem::information(const PirlsState& s) const {
    return working_system(s).xtwx;
}

PirlsState PirlsProblem::step(const PirlsState& current, const Eigen::MatrixXd& penalty,
                              int max_halvings) const {
    WorkingSystem sys = working_system(current);
    if (penalty.size() != 0) sys.xtwx += penalty;
    Eigen::VectorXd proposal = solve_spd(sys.xtwx, sys.xtwz);
    PirlsState next = state_from_beta(proposal, penalty);
    if (current.beta.size() == 0) return next;

    const double old_value = current.penalized_deviance();
    for (int h = 0; h < max_halvings; ++h) {
        const double value = next.penalized_deviance();
        if (std::isfinite(value) && value <= old_value) return next;
        proposal = 0.5 * (proposal + current.beta);
        next = state_from_beta(proposal, penalty);
    }
    // No decrease along the direction: the current iterate is stationary.
    if (!(next.penalized_deviance() <= old_value)) return current;
    return next;
}

namespace {

// Jacobi scaling: the system d A d (d = diag(A)^{-1/2}) has unit diagonal.
Eigen::VectorXd jacobi_scale(const Eigen::MatrixXd& a) {
    Eigen::VectorXd d(a.rows());
    for (Eigen::Index i = 0; i < a.rows(); ++i) d[i] = a(i, i) > 0.0 ? 1.0 / std::sqrt(a(i, i)) : 1.0;
    return d;
}

}  // namespace

Eigen::VectorXd solve_spd(const Eigen::MatrixXd& a, const Eigen::VectorXd& b) {
    const Eigen::VectorXd d = jacobi_scale(a);
    const Eigen::MatrixXd scaled = d.asDiagonal() * a * d.asDiagonal();
    Eigen::LLT<Eigen::MatrixXd> llt(scaled);
    if (llt.info() == Eigen::Success) return d.asDiagonal() * llt.solve(d.asDiagonal() * b);
    return d.asDiagonal() * scaled.colPivHouseholderQr().solve(d.asDiagonal() * b);
}

Eigen::MatrixXd inverse_spd(const Eigen::MatrixXd& a) {
    const Eigen::VectorXd d = jacobi_scale(a);
    const Eigen::MatrixXd scaled = d.asDiagonal() * a * d.asDiagonal();
    const Eigen::MatrixXd id = Eigen::MatrixXd::Identity(a.rows(), a.cols());
    Eigen::LLT<Eigen::MatrixXd> llt(scaled);
    Eigen::MatrixXd inv = llt.info() == Eigen::Success
                              ? Eigen::MatrixXd(llt.solve(id))
                              : Eigen::MatrixXd(scaled.colPivHouseholderQr().solve(id));
    inv = d.asDiagonal() * inv * d.asDiagonal();
    return 0.5 * (inv + inv.transpose());
}

}  // namespace detail

std::vector<std::size_t> collinear_columns(const Eigen::MatrixXd& design) {
    std::vector<std::size_t> bad;
    std::vector<Eigen::Index> kept;
    for (Eigen::Index j = 0; j < design.cols(); ++j) {
        Eigen::MatrixXd trial(design.rows(), static_cast<Eigen::Index>(kept.size()) + 1);
        for (std::size_t c = 0; c < kept.size(); ++c)
            trial.col(static_cast<Eigen::Index>(c)) = design.col(kept[c]);
        trial.col(trial.cols() - 1) = design.col(j);
        Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(trial);
        if (qr.rank() == trial.cols()) {
            kept.push_back(j);
        } else {
            bad.push_back(static_cast<std::size_t>(j));
        }
    }
    return bad;
}

namespace {

void check_rank(const Eigen::MatrixXd& design, std::span<const std::string> names) {
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
    if (qr.rank() == design.cols()) return;
    std::ostringstream msg;
    msg << "design matrix is rank deficient (rank " << qr.rank() << " of " << design.cols()
        << "); collinear columns:";
    for (std::size_t j : collinear_columns(design)) {
        msg << ' ';
        if (j < names.size()) {
            msg << names[j];
        } else {
            msg << '#' << j;
        }
    }
    throw Error(ErrorCode::RankDeficient, msg.str());
}

}  // namespace

ParametricFit irls_fit(const Eigen::MatrixXd& design, const Eigen::VectorXd& y,
                       const Family& family, const std::optional<Eigen::VectorXd>& offset,
                       std::span<const std::string> column_names, const IrlsOptions& options) {
    if (design.rows() != y.size())
        throw Error(ErrorCode::DimensionMismatch, "design rows differ from response length");
    if (design.rows() == 0) throw Error(ErrorCode::InsufficientData, "no observations");
    if (!design.allFinite() || (offset && !offset->allFinite()))
        throw Error(ErrorCode::NonFinite, "design or offset contains non-finite values");
    family.validate_response(std::span<const double>(y.data(), static_cast<std::size_t>(y.size())));
    check_rank(design, column_names);

    const detail::PirlsProblem problem(design, y, family,
                                       offset ? *offset : Eigen::VectorXd());
    Eigen::VectorXd eta0(y.size());
    for (Eigen::Index i = 0; i < y.size(); ++i) eta0[i] = family.link(family.initial_mean(y[i]));
    detail::PirlsState state = problem.start_from_eta(eta0);

    const Eigen::MatrixXd no_penalty;
    ParametricFit fit;
    fit.n_obs = static_cast<std::size_t>(y.size());
    double previous = state.deviance;
    for (int it = 1; it <= options.max_iterations; ++it) {
        state = problem.step(state, no_penalty, options.max_step_halvings);
        fit.iterations = it;
        fit.deviance_trace.push_back(state.deviance);
        if (state.beta.cwiseAbs().maxCoeff() > options.divergence_bound)
            throw Error(ErrorCode::Separation,
                        "coefficients diverged (|beta| > bound): complete separation");
        if (std::abs(state.deviance - previous) / (std::abs(state.deviance) + 0.1) <
            options.tolerance) {
            fit.converged = it > 1;
            if (fit.converged) break;
        }
        previous = state.deviance;
    }
    if (family.kind() == FamilyKind::Binomial && state.deviance < 1e-6)
        throw Error(ErrorCode::Separation,
                    "fitted probabilities are numerically 0 or 1: complete separation");

    const Eigen::MatrixXd info = problem.information(state);
    const auto n = static_cast<double>(y.size());
    const auto p = static_cast<double>(design.cols());
    fit.dispersion = family.has_free_scale() ? state.deviance / std::max(n - p, 1.0) : 1.0;
    fit.coefficients = state.beta;
    fit.covariance = fit.dispersion * detail::inverse_spd(info);
    fit.deviance = state.deviance;
    fit.linear_predictor = state.eta;
    fit.fitted = state.mu;
    fit.log_likelihood = family.log_likelihood(y, state.mu);
    return fit;
}

double log_likelihood(const ParametricFit& fit, const Eigen::MatrixXd& design,
                      const Eigen::VectorXd& y, const Family& family,
                      const std::optional<Eigen::VectorXd>& offset) {
    if (design.cols() != fit.coefficients.size() || design.rows() != y.size() ||
        (offset && offset->size() != y.size()))
        throw Error(ErrorCode::DimensionMismatch, "log_likelihood: dimension mismatch");
    Eigen::VectorXd eta = design * fit.coefficients;
    if (offset) eta += *offset;
    Eigen::VectorXd mu(eta.size());
    for (Eigen::Index i = 0; i < eta.size(); ++i) mu[i] = family.inverse_link(eta[i]);
    return family.log_likelihood(y, mu);
}

}  // namespace cutgam

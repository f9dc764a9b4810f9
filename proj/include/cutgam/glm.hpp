#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cutgam/family.hpp"

namespace cutgam {

struct IrlsOptions {
    int max_iterations = 100;
    /// Relative deviance change |dev - dev_old| / (|dev| + 0.1).
    double tolerance = 1e-9;
    int max_step_halvings = 30;
    /// |beta| beyond this is treated as divergence (binomial separation).
    double divergence_bound = 1e3;
};

struct ParametricFit {
    Eigen::VectorXd coefficients;
    /// dispersion * (X^T W X)^{-1} at convergence.
    Eigen::MatrixXd covariance;
    double log_likelihood = 0.0;
    double deviance = 0.0;
    /// 1 for binomial/poisson, RSS / (n - p) for gaussian.
    double dispersion = 1.0;
    bool converged = false;
    int iterations = 0;
    std::size_t n_obs = 0;
    Eigen::VectorXd linear_predictor;
    Eigen::VectorXd fitted;
    std::vector<double> deviance_trace;
};

/// Maximum likelihood fit of a GLM with canonical link by iteratively
/// reweighted least squares with step halving. `column_names`, when given,
/// is used to name the offending columns of a rank-deficient design.
///
/// Throws Error(RankDeficient) for a design without full column rank,
/// Error(Separation) when binomial coefficients diverge, and
/// Error(FamilyMismatch) when y is outside the family support.
/// Hitting max_iterations returns a fit with converged == false.
ParametricFit irls_fit(const Eigen::MatrixXd& design, const Eigen::VectorXd& y,
                       const Family& family,
                       const std::optional<Eigen::VectorXd>& offset = std::nullopt,
                       std::span<const std::string> column_names = {},
                       const IrlsOptions& options = {});

/// Log-likelihood of `fit` re-evaluated on (design, y, offset).
double log_likelihood(const ParametricFit& fit, const Eigen::MatrixXd& design,
                      const Eigen::VectorXd& y, const Family& family,
                      const std::optional<Eigen::VectorXd>& offset = std::nullopt);

/// Indices of columns that are linear combinations of earlier columns.
std::vector<std::size_t> collinear_columns(const Eigen::MatrixXd& design);

namespace detail {

/// Iterate of a (penalized) IRLS run.
struct PirlsState {
    Eigen::VectorXd beta;  // empty before the first step
    Eigen::VectorXd eta;
    Eigen::VectorXd mu;
    double deviance = 0.0;
    double penalty = 0.0;

    [[nodiscard]] double penalized_deviance() const { return deviance + penalty; }
};

/// Weighted cross-products of one working linear model.
struct WorkingSystem {
    Eigen::MatrixXd xtwx;
    Eigen::VectorXd xtwz;
};

/// Shared machinery behind GLM and P-spline GAM fitting. The penalty matrix
/// may be empty (no penalty) or p x p.
class PirlsProblem {
public:
    PirlsProblem(const Eigen::MatrixXd& design, const Eigen::VectorXd& y, Family family,
                 Eigen::VectorXd offset);

    [[nodiscard]] PirlsState start_from_eta(Eigen::VectorXd eta) const;
    [[nodiscard]] PirlsState state_from_beta(Eigen::VectorXd beta,
                                             const Eigen::MatrixXd& penalty) const;
    [[nodiscard]] WorkingSystem working_system(const PirlsState& state) const;
    /// X^T W X at the state's mean.
    [[nodiscard]] Eigen::MatrixXd information(const PirlsState& state) const;

    /// One IRLS update; halves the step while the penalized deviance rises.
    [[nodiscard]] PirlsState step(const PirlsState& current, const Eigen::MatrixXd& penalty,
                                  int max_halvings) const;

    [[nodiscard]] const Eigen::MatrixXd& design() const noexcept { return x_; }
    [[nodiscard]] const Eigen::VectorXd& response() const noexcept { return y_; }
    [[nodiscard]] const Eigen::VectorXd& offset() const noexcept { return offset_; }
    [[nodiscard]] const Family& family() const noexcept { return family_; }

private:
    void finish(PirlsState& state, const Eigen::MatrixXd& penalty) const;

    const Eigen::MatrixXd& x_;
    const Eigen::VectorXd& y_;
    Family family_;
    Eigen::VectorXd offset_;
};

/// Solves the symmetric positive (semi)definite system; falls back to a
/// pivoted QR when Cholesky fails.
Eigen::VectorXd solve_spd(const Eigen::MatrixXd& a, const Eigen::VectorXd& b);
Eigen::MatrixXd inverse_spd(const Eigen::MatrixXd& a);

}  // namespace detail

}  // namespace cutgam

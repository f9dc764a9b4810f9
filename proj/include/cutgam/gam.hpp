#pragma once

// Generalized additive models with P-spline smooths.
//
// Each smooth is a B-spline block whose sum-to-zero constraint over the
// observed data is absorbed into the basis (a Householder null-space
// reparametrisation), so every fitted smooth is centered and the intercept
// carries the overall level. Smoothing parameters are chosen by
// Fellner-Schall updates interleaved with penalized IRLS steps.

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cutgam/dataset.hpp"
#include "cutgam/family.hpp"
#include "cutgam/spline_basis.hpp"

namespace cutgam {

enum class TermRole {
    Smooth,
    Linear,
    /// Dummy coding of the distinct values, first level as reference.
    Categorical,
    /// Indicators I{c_s < x <= c_{s+1}} for s = 1..k, [min x, c_1] as reference.
    Binned,
};

struct Term {
    std::string column;
    TermRole role = TermRole::Linear;
    BasisSpec basis;          // Smooth only
    std::vector<double> cuts; // Binned only

    static Term smooth(std::string column, BasisSpec basis = {});
    static Term linear(std::string column);
    static Term categorical(std::string column);
    static Term binned(std::string column, std::vector<double> cuts);
};

struct ModelSpec {
    std::string response;
    Family family;
    std::optional<std::string> offset;
    std::vector<Term> terms;
    /// Smooth terms whose covariates are to be categorized.
    std::vector<std::string> categorize_targets;

    /// Throws Error(InvalidArgument) when a column is used twice or a
    /// target is not a smooth term.
    void validate() const;
    [[nodiscard]] const Term* find_term(const std::string& column) const;
};

struct GamOptions {
    int max_outer_iterations = 200;
    /// Relative change of the penalized deviance.
    double tolerance = 1e-8;
    /// Change of each smooth's effective degrees of freedom between outer
    /// iterations. Measured in degrees of freedom rather than lambda so that
    /// smooths drifting to their null space (lambda -> inf) also settle.
    double edf_tolerance = 1e-5;
    double lambda_min = 1e-8;
    double lambda_max = 1e12;
    double initial_lambda = 1.0;
    /// When set, smoothing parameters are held at these values (one per smooth).
    std::optional<std::vector<double>> fixed_lambda;
    double se_floor = 1e-8;
    int max_step_halvings = 30;
};

/// Coefficient columns belonging to one model term.
struct TermBlock {
    std::size_t term_index = 0;
    std::string column;
    TermRole role = TermRole::Linear;
    Eigen::Index first = 0;
    Eigen::Index size = 0;
    std::vector<std::string> names;
    /// Categorical levels (all of them, reference first).
    std::vector<double> levels;
};

/// Everything needed to re-evaluate one smooth at new covariate values.
struct SmoothBasis {
    std::vector<double> knots;
    int degree = 3;
    Domain domain;
    /// num_basis x (num_basis - 1) null-space basis of the centering constraint.
    Eigen::MatrixXd constraint;
    /// Penalty in the constrained parametrisation.
    Eigen::MatrixXd penalty;
    int penalty_rank = 0;

    /// Constrained basis rows at x; values outside the domain are clamped
    /// and `clamped` (when given) counts them.
    [[nodiscard]] Eigen::MatrixXd rows(std::span<const double> x,
                                       std::size_t* clamped = nullptr) const;
};

struct SmoothTerm {
    std::size_t block = 0;  // index into FittedGAM::blocks
    std::string column;
    SmoothBasis basis;
    double lambda = 1.0;
    /// Centered smooth and pointwise standard errors at the observed x.
    std::vector<double> fhat;
    std::vector<double> se;
};

/// Design matrix laid out by term, intercept first.
struct ModelDesign {
    Eigen::MatrixXd matrix;
    std::vector<std::string> column_names;
    std::vector<TermBlock> blocks;
    std::vector<SmoothBasis> smooth_bases;     // one per Smooth term, in term order
    std::vector<std::size_t> smooth_blocks;    // block index of each smooth
};

/// Builds the design for `spec` on `data`. Smooth bases are constructed
/// from the data (knots from the covariate range, centering weights from
/// the observed rows). Throws Error(EmptyCategory) when a binned category
/// holds no observation.
ModelDesign build_design(const Dataset& data, const ModelSpec& spec);

struct FittedGAM {
    ModelSpec spec;
    std::vector<TermBlock> blocks;
    std::vector<SmoothTerm> smooths;
    std::vector<std::string> column_names;

    Eigen::VectorXd coefficients;
    /// (X^T W X + S_lambda)^{-1} at convergence.
    Eigen::MatrixXd unscaled_covariance;
    /// Bayesian posterior covariance: dispersion * unscaled_covariance.
    Eigen::MatrixXd covariance;
    double dispersion = 1.0;
    /// tr[(X^T W X + S)^{-1} X^T W X]
    double edf = 0.0;
    double log_likelihood = 0.0;
    double deviance = 0.0;
    double penalized_deviance = 0.0;
    bool converged = false;
    int outer_iterations = 0;
    std::size_t n_obs = 0;

    Eigen::VectorXd linear_predictor;
    Eigen::VectorXd fitted;
    /// Penalized deviance after each step of the final fixed-lambda P-IRLS run.
    std::vector<double> penalized_deviance_trace;
    std::vector<std::string> warnings;

    [[nodiscard]] double intercept() const { return coefficients[0]; }
    [[nodiscard]] std::size_t smooth_index(const std::string& column) const;
    [[nodiscard]] const SmoothTerm& smooth(const std::string& column) const;

    /// Linear predictor for new rows (offset included when the spec has one).
    /// Smooth covariates outside the fitted domain are clamped and counted
    /// in `warnings` (when given).
    [[nodiscard]] Eigen::VectorXd predict_link(const Dataset& data,
                                               std::vector<std::string>* warnings = nullptr) const;
};

FittedGAM fit_gam(const Dataset& data, const ModelSpec& spec, const GamOptions& options = {});

/// Pointwise standard errors of smooth `term` (index into FittedGAM::smooths).
std::vector<double> pointwise_se(const FittedGAM& fitted, std::size_t term);

/// Trace of the influence operator plus one for a free scale parameter.
double effective_dimension(const FittedGAM& fitted);

}  // namespace cutgam

#pragma once

// Categorized refits and the choice of the number of cut-off points.
//
// For candidate cut vectors the targets enter the model as dummy-coded
// categories (first category as reference) while every other term keeps
// its original role, smooths being re-estimated. Candidates are compared by
//
//     BIC        = phi * log(n) - 2 log L
//     pseudo-BIC = BIC + log(n) * (total number of cut-off points)
//
// and a candidate is admissible only when its fit converged and every pair
// of adjacent categories of every target differs significantly (Wald test).

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cutgam/cutpoints.hpp"
#include "cutgam/dataset.hpp"
#include "cutgam/gam.hpp"

namespace cutgam {

struct SelectOptions {
    double alpha = 0.05;
    CutOptions cut;
    GamOptions gam;
    /// Workers for candidate refits; 0 picks the hardware concurrency.
    unsigned threads = 1;
};

struct CategoryEffects {
    std::string covariate;
    CutVector cuts;
    /// beta_{j,s} for s = 1..k (the reference category has beta = 0).
    Eigen::VectorXd coefficients;
    Eigen::MatrixXd covariance;
    /// Wald z of beta_{s+1} - beta_s for s = 0..k-1.
    std::vector<double> adjacent_z;
};

struct CategorizedModel {
    std::vector<CutVector> cuts;
    FittedGAM fit;
    std::vector<CategoryEffects> targets;
    std::size_t n_obs = 0;
    double phi = 0.0;
    double log_likelihood = 0.0;
    double bic = 0.0;
    double pseudo_bic = 0.0;
    bool converged = false;
    bool admissible = false;
    std::string reason;

    [[nodiscard]] std::size_t total_cuts() const;
};

/// Model spec with the targets replaced by binned terms (dropped for k = 0).
ModelSpec categorized_spec(const ModelSpec& spec, const std::vector<CutVector>& cuts);

/// Refit with targets categorized at `cuts` (one CutVector per spec target,
/// matched by covariate name). Throws Error(EmptyCategory) when a category
/// is empty on the data and propagates fitting errors.
CategorizedModel fit_categorized(const Dataset& data, const ModelSpec& spec,
                                 const std::vector<CutVector>& cuts,
                                 const SelectOptions& options = {});

double bic(const CategorizedModel& model);
double pseudo_bic(const CategorizedModel& model);

/// True iff every adjacent-category difference of every target rejects
/// beta_{s+1} = beta_s at level alpha. A non-positive or non-finite
/// variance makes the model inadmissible.
bool adjacent_significance(const CategorizedModel& model, double alpha);

struct Candidate {
    std::vector<std::size_t> nc;
    std::vector<CutVector> cuts;
    double bic = 0.0;
    double pseudo_bic = 0.0;
    double log_likelihood = 0.0;
    double phi = 0.0;
    bool admissible = false;
    std::string reason;
};

struct SelectionResult {
    std::vector<std::string> targets;
    std::optional<std::size_t> selected;  // into candidates
    std::vector<std::size_t> nc;
    std::vector<CutVector> cuts;
    /// Full grid in lexicographic order of nc.
    std::vector<Candidate> candidates;
    /// The fit with no target categorized (k = 0), outside the argmin.
    std::optional<Candidate> baseline;
    /// Cut searches by target and k (index k-1).
    std::vector<std::vector<CutResult>> searches;
    FittedGAM gam;
    std::vector<std::string> trace;

    [[nodiscard]] bool has_selection() const { return selected.has_value(); }
};

/// Cut search for every target at the given k on a fitted GAM.
std::vector<CutResult> estimate_cuts(const Dataset& data, const FittedGAM& gam,
                                     const std::vector<std::string>& targets,
                                     const std::vector<std::size_t>& k,
                                     const CutOptions& options = {});

/// Fits the GAM once, searches cuts for every target and every k in
/// 1..k_max, refits every combination and returns the admissible
/// minimiser of the pseudo-BIC (ties: fewer total cuts, then
/// lexicographically smaller nc). No admissible candidate leaves
/// `selected` empty.
SelectionResult select_num_cuts(const Dataset& data, const ModelSpec& spec,
                                const std::vector<std::size_t>& k_max,
                                const SelectOptions& options = {});

/// Same, reusing an existing fit of `spec` on `data`.
SelectionResult select_num_cuts(const Dataset& data, const ModelSpec& spec, FittedGAM gam,
                                const std::vector<std::size_t>& k_max,
                                const SelectOptions& options = {});

}  // namespace cutgam

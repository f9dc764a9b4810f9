#pragma once

// Piecewise-constant collapse of a fitted smooth and the search for the
// cut-off points that make the collapse closest to the smooth.
//
// Categories are left-open/right-closed: an observation with value x falls
// in category s when c_s < x <= c_{s+1}, with [min x, c_1] as category 0 and
// c_{k+1} = +inf. The distance between the smooth and its collapse is
//
//     WMSE(c) = sum_i (fhat_i - fbar_c(x_i))^2 / sigma_i^2,
//
// where fbar_c is the unweighted mean of fhat over the category of x_i.

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace cutgam {

struct CutVector {
    std::string covariate;
    std::vector<double> cuts;

    [[nodiscard]] std::size_t k() const noexcept { return cuts.size(); }
};

struct PiecewiseSummary {
    std::vector<double> means;
    std::vector<std::size_t> counts;
    double wmse = 0.0;
};

/// Smallest admissible category size: max(5, ceil(0.01 n)).
std::size_t default_min_bin(std::size_t n);

/// Category index of x under strictly increasing cuts.
std::size_t category_of(double x, std::span<const double> cuts);

/// Category means of fhat. The wmse field uses sigma when given and unit
/// weights otherwise. Throws Error(EmptyCategory) for an empty category.
PiecewiseSummary piecewise_means(std::span<const double> fhat, std::span<const double> x,
                                 const CutVector& cuts, std::span<const double> sigma = {});

double wmse(std::span<const double> fhat, std::span<const double> sigma,
            std::span<const double> x, const CutVector& cuts);

struct CutOptions {
    /// Defaults to default_min_bin(n).
    std::optional<std::size_t> min_bin;
    int max_cycles = 50;
    /// Compare the descent result with the exact optimal partition and,
    /// when the latter is strictly better, resume the descent from it.
    bool global_restart = true;
};

/// Cuts at the i/(k+1) sample quantiles (linear interpolation between order
/// statistics). When ties make a quantile cut leave a category below
/// min_bin, the cut is moved to the nearest feasible midpoint. Throws
/// Error(InfeasibleCuts) when k+1 categories cannot be populated.
CutVector initialize_cuts(std::span<const double> x, std::size_t k, const CutOptions& options = {});

struct CutResult {
    CutVector cuts;
    double wmse = 0.0;
    double initial_wmse = 0.0;
    int cycles = 0;
    bool converged = false;
    /// WMSE after every single-coordinate update, in order.
    std::vector<double> trace;
    /// Number of coordinate updates that increased the WMSE.
    std::size_t increases = 0;
    /// The descent from `init` stopped at a local minimum and was resumed
    /// from the optimal partition; `trace` then holds both runs.
    bool restarted = false;
    /// WMSE where the descent from `init` stopped.
    double local_wmse = 0.0;
    std::vector<std::string> warnings;
};

/// Cyclic coordinate descent over cut locations. Coordinate r is replaced
/// by the minimiser of WMSE over the midpoints between consecutive distinct
/// observed values lying strictly between its neighbours, with every
/// category keeping at least min_bin observations; ties go to the smallest
/// midpoint. Cycles repeat until a full cycle leaves the cut vector
/// unchanged or max_cycles is reached (converged == false, best-so-far
/// returned). With global_restart the local solution is checked against
/// the optimal partition of the sorted sample (dynamic programming over the
/// same candidates, O(k m^2)), so the returned WMSE is the global minimum.
/// Throws Error(InfeasibleCuts) when `init` is not a valid starting point.
CutResult optimize_cuts(std::span<const double> fhat, std::span<const double> sigma,
                        std::span<const double> x, std::size_t k, const CutVector& init,
                        const CutOptions& options = {});

/// initialize_cuts followed by optimize_cuts.
CutResult find_cuts(std::span<const double> fhat, std::span<const double> sigma,
                    std::span<const double> x, std::size_t k, const CutOptions& options = {});

}  // namespace cutgam

#pragma once

// Monte-Carlo study of cut-off point recovery.
//
// Scenarios S1-S4 draw X1, X2 ~ U[-2, 2] and X3 ~ U[-1, 1] and a binary
// response with logit p = f1(X1) + f2(X2) + 0.1 X3, f1 and f2 step
// functions:
//
//   k = 1: cut 0,             levels (-2, 0)
//   k = 2: cuts -2/3, 2/3,    levels (1.5, 0, 1.5)   [X1]
//                             levels (-2, 0, 2)      [X2]
//   k = 3: cuts -1, 0, 1,     levels (1.5, 0, 1.5, 3)
//
// with (k1, k2) = (2,1), (2,2), (3,1), (3,2) for S1..S4. Scenario P1 is a
// Poisson rate model with the same covariates, an exposure time
// t ~ U[1, 10] entering through a log offset, and (k1, k2) = (2, 1).

#include <array>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cutgam/cutpoints.hpp"
#include "cutgam/dataset.hpp"
#include "cutgam/family.hpp"
#include "cutgam/gam.hpp"

namespace cutgam {

struct StepFunction {
    std::vector<double> cuts;
    std::vector<double> levels;  // cuts.size() + 1 values

    [[nodiscard]] double operator()(double x) const;
};

struct ScenarioSpec {
    std::string id;
    Family family{FamilyKind::Binomial};
    std::array<StepFunction, 2> steps;
    double linear_coefficient = 0.1;
    double intercept = 0.0;
    /// Exposure law U[lo, hi] for rate models; log(t) is the offset.
    std::optional<std::array<double, 2>> exposure;

    /// S1, S2, S3, S4 or P1. Throws Error(UnknownScenario).
    static ScenarioSpec from_id(std::string_view id);

    [[nodiscard]] std::vector<std::size_t> true_k() const;
    [[nodiscard]] std::vector<std::vector<double>> true_cuts() const;
};

/// Sub-seed of replicate r, a counter-based mix of (seed, r).
std::uint64_t replicate_seed(std::uint64_t seed, std::uint64_t replicate);

/// Columns y, x1, x2, x3 (and t, log_t for rate scenarios). Deterministic in seed.
Dataset generate_scenario(const ScenarioSpec& spec, std::size_t n, std::uint64_t seed);

/// GAM specification used on generated data: smooths of x1 and x2 (the
/// targets), x3 linear, log_t offset for rate scenarios.
ModelSpec scenario_model(const ScenarioSpec& spec, const BasisSpec& basis = {});

/// Average squared deviation over all cut-off points. Throws
/// Error(DimensionMismatch) unless every covariate has the true count.
double mse_of_replicate(const std::vector<std::vector<double>>& estimated,
                        const std::vector<std::vector<double>>& theoretical);

enum class KMode { FixedAtTruth, Selected };

std::string_view to_string(KMode mode);
KMode kmode_from_string(std::string_view name);

struct SimulationOptions {
    KMode mode = KMode::FixedAtTruth;
    std::size_t k_max = 4;
    double alpha = 0.05;
    unsigned threads = 1;
    BasisSpec basis;
    CutOptions cut;
    GamOptions gam;
};

struct ReplicateResult {
    std::size_t index = 0;
    std::uint64_t seed = 0;
    bool failed = false;
    std::string error;
    bool has_selection = false;
    std::vector<std::size_t> nc;
    std::vector<std::vector<double>> cuts;
    std::optional<double> mse;
    std::size_t coordinate_updates = 0;
    std::size_t wmse_increases = 0;
};

struct ReplicateReport {
    std::string scenario;
    std::size_t n = 0;
    std::size_t replicates_requested = 0;
    std::uint64_t seed = 0;
    KMode mode = KMode::FixedAtTruth;
    std::vector<std::size_t> true_k;
    std::vector<std::vector<double>> true_cuts;
    std::vector<ReplicateResult> replicates;

    // aggregates
    std::size_t failures = 0;
    std::size_t no_selection = 0;
    std::size_t mse_count = 0;
    double mean_mse = 0.0;
    double median_mse = 0.0;
    /// Mean of (estimate - truth) per cut, over replicates with the true k.
    std::vector<std::vector<double>> bias;
    std::map<std::vector<std::size_t>, std::size_t> selection_counts;
    std::size_t coordinate_updates = 0;
    std::size_t wmse_increases = 0;

    [[nodiscard]] double selection_rate(const std::vector<std::size_t>& nc) const;
};

ReplicateReport run_replicates(const ScenarioSpec& spec, std::size_t n, std::size_t replicates,
                               std::uint64_t seed, const SimulationOptions& options = {});

}  // namespace cutgam

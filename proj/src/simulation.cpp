#include "cutgam/simulation.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "cutgam/error.hpp"
#include "cutgam/model_select.hpp"
#include "cutgam/parallel.hpp"

namespace cutgam {

double StepFunction::operator()(double x) const { return levels[category_of(x, cuts)]; }

namespace {

StepFunction step_k1() { return {{0.0}, {-2.0, 0.0}}; }
StepFunction step_k2_x1() { return {{-2.0 / 3.0, 2.0 / 3.0}, {1.5, 0.0, 1.5}}; }
StepFunction step_k2_x2() { return {{-2.0 / 3.0, 2.0 / 3.0}, {-2.0, 0.0, 2.0}}; }
StepFunction step_k3() { return {{-1.0, 0.0, 1.0}, {1.5, 0.0, 1.5, 3.0}}; }

}  // namespace

ScenarioSpec ScenarioSpec::from_id(std::string_view id) {
    ScenarioSpec s;
    s.id = std::string(id);
    if (id == "S1") {
        s.steps = {step_k2_x1(), step_k1()};
    } else if (id == "S2") {
        s.steps = {step_k2_x1(), step_k2_x2()};
    } else if (id == "S3") {
        s.steps = {step_k3(), step_k1()};
    } else if (id == "S4") {
        s.steps = {step_k3(), step_k2_x2()};
    } else if (id == "P1") {
        s.family = Family(FamilyKind::Poisson);
        s.intercept = -1.5;
        s.exposure = std::array<double, 2>{1.0, 10.0};
        s.steps = {StepFunction{{-2.0 / 3.0, 2.0 / 3.0}, {0.6, 0.0, 0.6}},
                   StepFunction{{0.0}, {-0.6, 0.0}}};
    } else {
        throw Error(ErrorCode::UnknownScenario, "unknown scenario '" + std::string(id) + "'");
    }
    return s;
}

std::vector<std::size_t> ScenarioSpec::true_k() const {
    return {steps[0].cuts.size(), steps[1].cuts.size()};
}

std::vector<std::vector<double>> ScenarioSpec::true_cuts() const {
    return {steps[0].cuts, steps[1].cuts};
}

std::uint64_t replicate_seed(std::uint64_t seed, std::uint64_t replicate) {
    // splitmix64 finaliser over a counter offset from the base seed
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (replicate + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

namespace {

// Uniform [0, 1) from the top 53 bits; std::uniform_real_distribution is
// implementation-defined, which would break cross-platform reproducibility.
double uniform01(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

double uniform(std::mt19937_64& rng, double lo, double hi) { return lo + (hi - lo) * uniform01(rng); }

// Inversion by sequential search, splitting large means by additivity.
std::uint64_t poisson(std::mt19937_64& rng, double mean) {
    std::uint64_t total = 0;
    while (mean > 0.0) {
        const double part = std::min(mean, 30.0);
        mean -= part;
        double p = std::exp(-part);
        double cdf = p;
        const double u = uniform01(rng);
        std::uint64_t k = 0;
        while (u > cdf && k < 1000) {
            ++k;
            p *= part / static_cast<double>(k);
            cdf += p;
        }
        total += k;
    }
    return total;
}

}  // namespace

Dataset generate_scenario(const ScenarioSpec& spec, std::size_t n, std::uint64_t seed) {
    if (n < 1) throw Error(ErrorCode::InvalidArgument, "scenario sample size must be >= 1");
    std::mt19937_64 rng(seed);
    std::vector<double> y(n), x1(n), x2(n), x3(n), t, log_t;
    if (spec.exposure) {
        t.resize(n);
        log_t.resize(n);
    }
    for (std::size_t i = 0; i < n; ++i) {
        x1[i] = uniform(rng, -2.0, 2.0);
        x2[i] = uniform(rng, -2.0, 2.0);
        x3[i] = uniform(rng, -1.0, 1.0);
        double eta = spec.intercept + spec.steps[0](x1[i]) + spec.steps[1](x2[i]) +
                     spec.linear_coefficient * x3[i];
        if (spec.exposure) {
            t[i] = uniform(rng, (*spec.exposure)[0], (*spec.exposure)[1]);
            log_t[i] = std::log(t[i]);
            eta += log_t[i];
        }
        switch (spec.family.kind()) {
            case FamilyKind::Binomial:
                y[i] = uniform01(rng) < 1.0 / (1.0 + std::exp(-eta)) ? 1.0 : 0.0;
                break;
            case FamilyKind::Poisson:
                y[i] = static_cast<double>(poisson(rng, std::exp(eta)));
                break;
            case FamilyKind::Gaussian: {
                // Box-Muller, unit variance
                const double u1 = 1.0 - uniform01(rng);
                const double u2 = uniform01(rng);
                y[i] = eta + std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
                break;
            }
        }
    }
    Dataset d;
    d.set_column("y", std::move(y));
    d.set_column("x1", std::move(x1));
    d.set_column("x2", std::move(x2));
    d.set_column("x3", std::move(x3));
    if (spec.exposure) {
        d.set_column("t", std::move(t));
        d.set_column("log_t", std::move(log_t));
    }
    return d;
}

ModelSpec scenario_model(const ScenarioSpec& spec, const BasisSpec& basis) {
    ModelSpec m;
    m.response = "y";
    m.family = spec.family;
    if (spec.exposure) m.offset = "log_t";
    m.terms = {Term::smooth("x1", basis), Term::smooth("x2", basis), Term::linear("x3")};
    m.categorize_targets = {"x1", "x2"};
    return m;
}

double mse_of_replicate(const std::vector<std::vector<double>>& estimated,
                        const std::vector<std::vector<double>>& theoretical) {
    if (estimated.size() != theoretical.size())
        throw Error(ErrorCode::DimensionMismatch, "covariate count differs from truth");
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t j = 0; j < estimated.size(); ++j) {
        if (estimated[j].size() != theoretical[j].size())
            throw Error(ErrorCode::DimensionMismatch,
                        "estimated cut count differs from the theoretical count");
        for (std::size_t s = 0; s < estimated[j].size(); ++s) {
            const double d = estimated[j][s] - theoretical[j][s];
            sum += d * d;
            ++count;
        }
    }
    if (count == 0) throw Error(ErrorCode::DimensionMismatch, "no cut-off points to compare");
    return sum / static_cast<double>(count);
}

std::string_view to_string(KMode mode) {
    return mode == KMode::FixedAtTruth ? "fixed-at-truth" : "selected";
}

KMode kmode_from_string(std::string_view name) {
    if (name == "fixed-at-truth" || name == "fixed") return KMode::FixedAtTruth;
    if (name == "selected") return KMode::Selected;
    throw Error(ErrorCode::InvalidArgument, "unknown k mode '" + std::string(name) + "'");
}

double ReplicateReport::selection_rate(const std::vector<std::size_t>& nc) const {
    if (replicates.empty()) return 0.0;
    const auto it = selection_counts.find(nc);
    const std::size_t c = it == selection_counts.end() ? 0 : it->second;
    return static_cast<double>(c) / static_cast<double>(replicates.size());
}

namespace {

void tally_search(ReplicateResult& r, const CutResult& c) {
    r.coordinate_updates += c.trace.size();
    r.wmse_increases += c.increases;
}

ReplicateResult run_one(const ScenarioSpec& spec, std::size_t n, std::uint64_t seed,
                        const SimulationOptions& options) {
    ReplicateResult r;
    r.seed = seed;
    const Dataset data = generate_scenario(spec, n, seed);
    const ModelSpec model = scenario_model(spec, options.basis);
    const auto truth_k = spec.true_k();
    const auto truth = spec.true_cuts();

    if (options.mode == KMode::FixedAtTruth) {
        const FittedGAM gam = fit_gam(data, model, options.gam);
        const auto searches = estimate_cuts(data, gam, model.categorize_targets, truth_k, options.cut);
        for (const auto& s : searches) {
            tally_search(r, s);
            r.cuts.push_back(s.cuts.cuts);
        }
        r.nc = truth_k;
        r.has_selection = true;
    } else {
        SelectOptions so;
        so.alpha = options.alpha;
        so.cut = options.cut;
        so.gam = options.gam;
        so.threads = 1;
        const std::vector<std::size_t> k_max(truth_k.size(), options.k_max);
        const SelectionResult sel = select_num_cuts(data, model, k_max, so);
        for (const auto& per_target : sel.searches)
            for (const auto& s : per_target) tally_search(r, s);
        r.has_selection = sel.has_selection();
        if (r.has_selection) {
            r.nc = sel.nc;
            for (const auto& c : sel.cuts) r.cuts.push_back(c.cuts);
        }
    }
    if (r.has_selection && r.nc == truth_k) r.mse = mse_of_replicate(r.cuts, truth);
    return r;
}

}  // namespace

ReplicateReport run_replicates(const ScenarioSpec& spec, std::size_t n, std::size_t replicates,
                               std::uint64_t seed, const SimulationOptions& options) {
    if (replicates < 1) throw Error(ErrorCode::InvalidArgument, "need at least one replicate");
    ReplicateReport report;
    report.scenario = spec.id;
    report.n = n;
    report.replicates_requested = replicates;
    report.seed = seed;
    report.mode = options.mode;
    report.true_k = spec.true_k();
    report.true_cuts = spec.true_cuts();
    report.replicates.resize(replicates);

    parallel_for(replicates, options.threads, [&](std::size_t r) {
        const std::uint64_t sub = replicate_seed(seed, r);
        try {
            report.replicates[r] = run_one(spec, n, sub, options);
        } catch (const std::exception& e) {
            report.replicates[r] = ReplicateResult{};
            report.replicates[r].seed = sub;
            report.replicates[r].failed = true;
            report.replicates[r].error = e.what();
        }
        report.replicates[r].index = r;
    });

    std::vector<double> mses;
    report.bias.resize(report.true_cuts.size());
    for (std::size_t j = 0; j < report.true_cuts.size(); ++j)
        report.bias[j].assign(report.true_cuts[j].size(), 0.0);
    for (const auto& r : report.replicates) {
        report.coordinate_updates += r.coordinate_updates;
        report.wmse_increases += r.wmse_increases;
        if (r.failed) {
            ++report.failures;
            continue;
        }
        if (!r.has_selection) {
            ++report.no_selection;
            continue;
        }
        ++report.selection_counts[r.nc];
        if (r.mse) {
            mses.push_back(*r.mse);
            for (std::size_t j = 0; j < r.cuts.size(); ++j)
                for (std::size_t s = 0; s < r.cuts[j].size(); ++s)
                    report.bias[j][s] += r.cuts[j][s] - report.true_cuts[j][s];
        }
    }
    report.mse_count = mses.size();
    if (!mses.empty()) {
        double sum = 0.0;
        for (double m : mses) sum += m;
        report.mean_mse = sum / static_cast<double>(mses.size());
        std::sort(mses.begin(), mses.end());
        const std::size_t h = mses.size() / 2;
        report.median_mse = mses.size() % 2 ? mses[h] : 0.5 * (mses[h - 1] + mses[h]);
        for (auto& row : report.bias)
            for (double& b : row) b /= static_cast<double>(report.mse_count);
    }
    return report;
}

}  // namespace cutgam

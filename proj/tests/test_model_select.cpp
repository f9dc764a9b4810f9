#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "cutgam/error.hpp"
#include "cutgam/glm.hpp"
#include "cutgam/model_select.hpp"
#include "cutgam/simulation.hpp"
#include "support.hpp"

using namespace cutgam;

namespace {

// Binary response unrelated to x.
Dataset null_data(std::size_t n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    std::bernoulli_distribution b(0.4);
    std::vector<double> x(n), y(n);
    for (std::size_t i = 0; i < n; ++i) {
        x[i] = u(rng);
        y[i] = b(rng) ? 1.0 : 0.0;
    }
    Dataset d;
    d.set_column("x", x);
    d.set_column("y", y);
    return d;
}

ModelSpec single_target() {
    ModelSpec m;
    m.response = "y";
    m.family = Family(FamilyKind::Binomial);
    m.terms = {Term::smooth("x")};
    m.categorize_targets = {"x"};
    return m;
}

double median_of(std::span<const double> v) {
    std::vector<double> s(v.begin(), v.end());
    std::sort(s.begin(), s.end());
    return 0.5 * (s[(s.size() - 1) / 2] + s[s.size() / 2]);
}

}  // namespace

TEST_SUITE("model_select") {

TEST_CASE("zero cuts leave the remaining terms") {
    const ScenarioSpec sc = ScenarioSpec::from_id("S1");
    const Dataset d = generate_scenario(sc, 1000, 3);
    const ModelSpec spec = scenario_model(sc);
    const CategorizedModel m =
        fit_categorized(d, spec, {CutVector{"x1", {}}, CutVector{"x2", {}}});
    ModelSpec rest;
    rest.response = "y";
    rest.family = spec.family;
    rest.terms = {Term::linear("x3")};
    const FittedGAM g = fit_gam(d, rest);
    CHECK(m.log_likelihood == doctest::Approx(g.log_likelihood).epsilon(1e-12));
    CHECK(m.phi == doctest::Approx(2.0));
    CHECK(m.total_cuts() == 0);
    CHECK(pseudo_bic(m) == bic(m));
    const ModelSpec cs = categorized_spec(spec, {CutVector{"x1", {}}, CutVector{"x2", {}}});
    CHECK(cs.terms.size() == 1);
}

TEST_CASE("category effects at the true S1 cuts") {
    const ScenarioSpec sc = ScenarioSpec::from_id("S1");
    const Dataset d = generate_scenario(sc, 2000, 17);
    const auto truth = sc.true_cuts();
    const CategorizedModel m = fit_categorized(d, scenario_model(sc), {CutVector{"x1", truth[0]}, CutVector{"x2", truth[1]}});
    const CategoryEffects& e = m.targets[0];
    REQUIRE(e.coefficients.size() == 2);
    Eigen::Vector2d diff(e.coefficients[0] + 1.5, e.coefficients[1] - 0.0);
    const double maha = diff.dot(e.covariance.inverse() * diff);
    CHECK(std::sqrt(maha) < 2.5);
    CHECK(adjacent_significance(m, 0.05));
    CHECK(m.admissible);
}

TEST_CASE("reference category contributes nothing") {
    const ScenarioSpec sc = ScenarioSpec::from_id("S1");
    const Dataset d = generate_scenario(sc, 500, 5);
    const std::vector<CutVector> cuts{CutVector{"x1", {-0.5, 0.5}}, CutVector{"x2", {0.1}}};
    const ModelDesign des = build_design(d, categorized_spec(scenario_model(sc), cuts));
    const auto x1 = d.column("x1");
    const TermBlock* blk = nullptr;
    for (const auto& b : des.blocks)
        if (b.column == "x1") blk = &b;
    REQUIRE(blk != nullptr);
    CHECK(blk->role == TermRole::Binned);
    for (std::size_t i = 0; i < d.rows(); ++i) {
        const auto row = des.matrix.row(static_cast<Eigen::Index>(i)).segment(blk->first, blk->size);
        if (x1[i] <= -0.5) CHECK(row.cwiseAbs().sum() == 0.0);
        else CHECK(row.sum() == 1.0);
    }
}

TEST_CASE("median split of a null covariate is rarely significant") {
    int quiet = 0;
    for (std::uint64_t r = 0; r < 200; ++r) {
        const Dataset d = null_data(400, 50 + r);
        const CategorizedModel m = fit_categorized(d, single_target(), {CutVector{"x", {median_of(d.column("x"))}}});
        if (std::abs(m.targets[0].adjacent_z[0]) < 1.96) ++quiet;
    }
    CHECK(quiet >= 180);
}

TEST_CASE("adjacent-category test holds its level under the null") {
    const ScenarioSpec sc = ScenarioSpec::from_id("S1");
    // Splitting the flat middle plateau at 0 makes categories 1 and 2 equal in truth.
    int rejected_dup = 0, rejected_single = 0;
    const int reps = 1000;
    for (int r = 0; r < reps; ++r) {
        const Dataset d = generate_scenario(sc, 600, replicate_seed(9001, static_cast<std::uint64_t>(r)));
        ModelSpec m = single_target();
        m.terms = {Term::smooth("x1")};
        m.categorize_targets = {"x1"};
        const CategorizedModel dup = fit_categorized(d, m, {CutVector{"x1", {-2.0 / 3.0, 0.0, 2.0 / 3.0}}});
        if (std::abs(dup.targets[0].adjacent_z[1]) > 1.959963984540054) ++rejected_dup;
        const Dataset nd = null_data(300, 7000 + static_cast<std::uint64_t>(r));
        const CategorizedModel one = fit_categorized(nd, single_target(), {CutVector{"x", {0.0}}});
        if (!adjacent_significance(one, 0.05)) ++rejected_single;
    }
    const double rate = static_cast<double>(rejected_dup) / reps;
    CHECK(rate > 0.03);
    CHECK(rate < 0.07);
    const double quiet = static_cast<double>(rejected_single) / reps;
    CHECK(quiet > 0.93);
    CHECK(quiet < 0.97);
}

TEST_CASE("parametric BIC counts coefficients") {
    const ScenarioSpec sc = ScenarioSpec::from_id("S1");
    const Dataset d = generate_scenario(sc, 100, 44);
    ModelSpec m;
    m.response = "y";
    m.family = Family(FamilyKind::Binomial);
    m.terms = {Term::linear("x1"), Term::linear("x2"), Term::linear("x3")};
    const CategorizedModel cm = fit_categorized(d, m, {});
    CHECK(cm.phi == doctest::Approx(4.0).epsilon(1e-10));
    CHECK(std::abs(cm.bic - (cm.phi * std::log(100.0) - 2.0 * cm.log_likelihood)) < 1e-10);
    CHECK(std::abs(bic(cm) - (4.0 * std::log(100.0) - 2.0 * cm.log_likelihood)) < 1e-10);

    Dataset g = d;
    std::vector<double> y(100);
    for (std::size_t i = 0; i < 100; ++i) y[i] = d.column("x1")[i] + 0.3 * d.column("x2")[i] * d.column("x2")[i];
    g.set_column("y", y);
    m.family = Family(FamilyKind::Gaussian);
    const CategorizedModel gm = fit_categorized(g, m, {});
    CHECK(gm.phi == doctest::Approx(5.0).epsilon(1e-10));
}

TEST_CASE("duplicated column is a rank error") {
    const ScenarioSpec sc = ScenarioSpec::from_id("S1");
    Dataset d = generate_scenario(sc, 200, 44);
    std::vector<double> dup(d.column("x3").begin(), d.column("x3").end());
    d.set_column("x3_copy", dup);
    ModelSpec m;
    m.response = "y";
    m.family = Family(FamilyKind::Binomial);
    m.terms = {Term::linear("x3"), Term::linear("x3_copy")};
    try {
        (void)fit_categorized(d, m, {});
        FAIL("accepted");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::RankDeficient);
    }
}

TEST_CASE("pseudo-BIC adds log n per cut") {
    CategorizedModel m;
    m.n_obs = 1000;
    m.bic = 123.0;
    m.cuts = {CutVector{"a", {0.1, 0.2}}, CutVector{"b", {0.3}}};
    CHECK(m.total_cuts() == 3);
    CHECK(pseudo_bic(m) - bic(m) == doctest::Approx(3.0 * std::log(1000.0)).epsilon(1e-15));
    CHECK((pseudo_bic(m) - bic(m)) / std::log(1000.0) == doctest::Approx(3.0).epsilon(1e-15));
}

TEST_CASE("S2 grid ordering follows the stored criteria") {
    const ScenarioSpec sc = ScenarioSpec::from_id("S2");
    const Dataset d = generate_scenario(sc, 1000, 12);
    const SelectionResult sel = select_num_cuts(d, scenario_model(sc), {3, 3});
    REQUIRE(sel.candidates.size() == 9);
    const double ln = std::log(1000.0);
    std::optional<std::size_t> best;
    for (std::size_t i = 0; i < sel.candidates.size(); ++i) {
        const Candidate& c = sel.candidates[i];
        const std::size_t total = c.nc[0] + c.nc[1];
        CHECK(std::abs(c.pseudo_bic - c.bic - ln * static_cast<double>(total)) < 1e-12);
        if (!c.admissible) continue;
        if (!best) {
            best = i;
            continue;
        }
        const Candidate& b = sel.candidates[*best];
        const double v = c.bic + ln * static_cast<double>(total);
        const double bv = b.bic + ln * static_cast<double>(b.nc[0] + b.nc[1]);
        if (v < bv) best = i;
    }
    REQUIRE(sel.has_selection());
    CHECK(*sel.selected == *best);
    for (const auto& c : sel.candidates)
        if (c.admissible) CHECK(sel.candidates[*sel.selected].pseudo_bic <= c.pseudo_bic);
    CHECK(sel.nc == std::vector<std::size_t>{2, 2});
    REQUIRE(sel.baseline.has_value());
    CHECK(sel.searches.size() == 2);
    CHECK(sel.searches[0].size() == 3);
}

TEST_CASE("refining cuts does not lower the likelihood") {
    const ScenarioSpec sc = ScenarioSpec::from_id("S1");
    const Dataset d = generate_scenario(sc, 1000, 23);
    ModelSpec m = scenario_model(sc);
    m.categorize_targets = {"x1"};
    SelectOptions so;
    so.gam.fixed_lambda = std::vector<double>{5.0};
    const std::vector<std::vector<double>> nested{{0.0}, {-0.7, 0.0}, {-0.7, 0.0, 0.7}, {-0.7, 0.0, 0.4, 0.7}};
    double prev = std::numeric_limits<double>::infinity();
    for (const auto& c : nested) {
        const CategorizedModel cm = fit_categorized(d, m, {CutVector{"x1", c}}, so);
        CHECK(-2.0 * cm.log_likelihood <= prev + 1e-6);
        prev = -2.0 * cm.log_likelihood;
    }
}

TEST_CASE("null covariate gives an empty selection") {
    const Dataset d = null_data(500, 3);
    const SelectionResult sel = select_num_cuts(d, single_target(), {1});
    CHECK_FALSE(sel.has_selection());
    REQUIRE(sel.candidates.size() == 1);
    CHECK_FALSE(sel.candidates[0].admissible);
    CHECK(sel.nc.empty());
}

TEST_CASE("candidate refits are independent of the thread count") {
    const ScenarioSpec sc = ScenarioSpec::from_id("S1");
    const Dataset d = generate_scenario(sc, 600, 2);
    SelectOptions one, four;
    four.threads = 4;
    const SelectionResult a = select_num_cuts(d, scenario_model(sc), {2, 2}, one);
    const SelectionResult b = select_num_cuts(d, scenario_model(sc), {2, 2}, four);
    REQUIRE(a.candidates.size() == b.candidates.size());
    for (std::size_t i = 0; i < a.candidates.size(); ++i) CHECK(a.candidates[i].pseudo_bic == b.candidates[i].pseudo_bic);
    CHECK(a.selected == b.selected);
}

TEST_CASE("argument checks") {
    const ScenarioSpec sc = ScenarioSpec::from_id("S1");
    const Dataset d = generate_scenario(sc, 300, 2);
    CHECK_THROWS_AS((void)select_num_cuts(d, scenario_model(sc), {2}), Error);
    CHECK_THROWS_AS((void)select_num_cuts(d, scenario_model(sc), {0, 2}), Error);
    SelectOptions bad;
    bad.alpha = 1.5;
    CHECK_THROWS_AS((void)select_num_cuts(d, scenario_model(sc), {1, 1}, bad), Error);
}

}

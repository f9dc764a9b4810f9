#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <vector>

#include "cutgam/cutpoints.hpp"
#include "cutgam/error.hpp"
#include "cutgam/gam.hpp"
#include "cutgam/simulation.hpp"
#include "support.hpp"

using namespace cutgam;

namespace {

// Direct evaluation: assign each point by comparison, average, sum.
double wmse_oracle(const std::vector<double>& f, const std::vector<double>& s, const std::vector<double>& x,
                   const std::vector<double>& cuts) {
    const std::size_t m = cuts.size() + 1;
    std::vector<double> sum(m, 0.0), cnt(m, 0.0);
    std::vector<std::size_t> cat(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        std::size_t c = 0;
        while (c < cuts.size() && x[i] > cuts[c]) ++c;
        cat[i] = c;
        sum[c] += f[i];
        cnt[c] += 1.0;
    }
    double total = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double r = f[i] - sum[cat[i]] / cnt[cat[i]];
        total += r * r / (s[i] * s[i]);
    }
    return total;
}

std::vector<double> midpoints(std::vector<double> x) {
    std::sort(x.begin(), x.end());
    x.erase(std::unique(x.begin(), x.end()), x.end());
    std::vector<double> m;
    for (std::size_t i = 1; i < x.size(); ++i) m.push_back(0.5 * (x[i - 1] + x[i]));
    return m;
}

std::size_t count_le(const std::vector<double>& x, double c) {
    return static_cast<std::size_t>(std::count_if(x.begin(), x.end(), [&](double v) { return v <= c; }));
}

struct Instance {
    std::vector<double> x, f, s;
};

Instance random_instance(std::size_t n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    std::uniform_real_distribution<double> sd(0.2, 1.0);
    std::normal_distribution<double> z(0.0, 0.3);
    Instance in;
    for (std::size_t i = 0; i < n; ++i) {
        const double x = u(rng);
        in.x.push_back(x);
        in.f.push_back(std::sin(2.0 * x) + (x > 0.7 ? 1.0 : 0.0) + z(rng));
        in.s.push_back(sd(rng));
    }
    return in;
}

}  // namespace

TEST_SUITE("cutpoint_optimizer") {

TEST_CASE("constant smooth collapses with no error") {
    const std::vector<double> x{0, 1, 2, 3, 4, 5}, f(6, 3.0);
    const PiecewiseSummary ps = piecewise_means(f, x, CutVector{"x", {1.5, 3.5}});
    CHECK(ps.means == std::vector<double>{3.0, 3.0, 3.0});
    CHECK(ps.wmse == 0.0);
}

TEST_CASE("two exact blocks") {
    const std::vector<double> x{0, 1, 2, 3}, f{1, 1, 5, 5};
    const PiecewiseSummary ps = piecewise_means(f, x, CutVector{"x", {1.5}});
    CHECK(ps.means == std::vector<double>{1.0, 5.0});
    CHECK(ps.counts == std::vector<std::size_t>{2, 2});
    const std::vector<double> s(4, 1.0);
    CHECK(wmse(f, s, x, CutVector{"x", {1.5}}) == 0.0);
}

TEST_CASE("category means equal a group-by average") {
    const std::vector<double> x = testing::uniform_sample(200, -2.0, 2.0, 4);
    std::vector<double> f;
    for (double v : x) f.push_back(std::abs(v) > 2.0 / 3.0 ? 1.5 + 0.1 * v : 0.05 * v * v);
    const CutVector cv{"x", {-0.67, 0.67}};
    const PiecewiseSummary ps = piecewise_means(f, x, cv);
    std::array<double, 3> sum{}, cnt{};
    for (std::size_t i = 0; i < x.size(); ++i) {
        const int g = x[i] <= -0.67 ? 0 : (x[i] <= 0.67 ? 1 : 2);
        sum[g] += f[i];
        cnt[g] += 1;
    }
    for (int g = 0; g < 3; ++g) CHECK(std::abs(ps.means[g] - sum[g] / cnt[g]) < 1e-12);
}

TEST_CASE("right-closed categories") {
    const std::vector<double> cuts{0.0, 1.0};
    CHECK(category_of(-1.0, cuts) == 0);
    CHECK(category_of(0.0, cuts) == 0);
    CHECK(category_of(0.5, cuts) == 1);
    CHECK(category_of(1.0, cuts) == 1);
    CHECK(category_of(2.0, cuts) == 2);
}

TEST_CASE("unit weights give the residual sum of squares") {
    const Instance in = random_instance(60, 2);
    const std::vector<double> ones(60, 1.0);
    const CutVector cv{"x", {-0.5, 0.9}};
    const PiecewiseSummary ps = piecewise_means(in.f, in.x, cv);
    double sse = 0.0;
    for (std::size_t i = 0; i < in.x.size(); ++i) {
        const double r = in.f[i] - ps.means[category_of(in.x[i], cv.cuts)];
        sse += r * r;
    }
    CHECK(wmse(in.f, ones, in.x, cv) == doctest::Approx(sse).epsilon(1e-13));
}

TEST_CASE("weighted error equals the direct formula") {
    const Instance in = random_instance(50, 9);
    const std::vector<double> cuts{-1.1, 0.2, 1.4};
    CHECK(std::abs(wmse(in.f, in.s, in.x, CutVector{"x", cuts}) - wmse_oracle(in.f, in.s, in.x, cuts)) < 1e-12);
}

TEST_CASE("no cuts measure the spread about the global mean") {
    const Instance in = random_instance(80, 3);
    CHECK(std::abs(wmse(in.f, in.s, in.x, CutVector{"x", {}}) - wmse_oracle(in.f, in.s, in.x, {})) < 1e-12);
    const CutResult r = find_cuts(in.f, in.s, in.x, 0);
    CHECK(r.cuts.k() == 0);
    CHECK(std::abs(r.wmse - wmse_oracle(in.f, in.s, in.x, {})) < 1e-12);
}

TEST_CASE("empty category is reported") {
    const std::vector<double> x{0, 1, 2}, f{1, 2, 3};
    try {
        (void)piecewise_means(f, x, CutVector{"x", {5.0}});
        FAIL("accepted");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::EmptyCategory);
    }
}

TEST_CASE("minimum category size") {
    CHECK(default_min_bin(10) == 5);
    CHECK(default_min_bin(500) == 5);
    CHECK(default_min_bin(501) == 6);
    CHECK(default_min_bin(2000) == 20);
}

TEST_CASE("initial cuts are sample quantiles") {
    const auto x = testing::uniform_sample(4000, -2.0, 2.0, 77);
    const CutVector one = initialize_cuts(x, 1);
    CHECK(std::abs(one.cuts[0]) < 0.1);
    const CutVector two = initialize_cuts(x, 2);
    CHECK(std::abs(two.cuts[0] + 2.0 / 3.0) < 0.1);
    CHECK(std::abs(two.cuts[1] - 2.0 / 3.0) < 0.1);
}

TEST_CASE("quartiles of a fixed sample") {
    const auto x = testing::uniform_sample(30, 0.0, 10.0, 30);
    std::vector<double> s = x;
    std::sort(s.begin(), s.end());
    const CutVector q = initialize_cuts(x, 3);
    REQUIRE(q.k() == 3);
    for (int i = 1; i <= 3; ++i) {
        const double h = (30 - 1) * i / 4.0;
        const auto lo = static_cast<std::size_t>(std::floor(h));
        const double oracle = s[lo] + (h - static_cast<double>(lo)) * (s[lo + 1] - s[lo]);
        CHECK(std::abs(q.cuts[static_cast<std::size_t>(i - 1)] - oracle) < 1e-12);
    }
}

TEST_CASE("tied covariates get feasible starting cuts") {
    std::vector<double> x;
    for (int i = 0; i < 60; ++i) x.push_back(static_cast<double>(i % 4));
    const CutVector c = initialize_cuts(x, 3);
    REQUIRE(c.k() == 3);
    const PiecewiseSummary ps = piecewise_means(std::vector<double>(60, 0.0), x, c);
    CHECK(ps.counts == std::vector<std::size_t>{15, 15, 15, 15});
    std::vector<double> skew(50, 0.0);
    for (int i = 0; i < 10; ++i) skew.push_back(1.0 + i);
    const CutVector s = initialize_cuts(skew, 1);
    CHECK(count_le(skew, s.cuts[0]) >= 5);
    CHECK(skew.size() - count_le(skew, s.cuts[0]) >= 5);
    try {
        (void)initialize_cuts(x, 4);
        FAIL("accepted");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::InfeasibleCuts);
    }
}

TEST_CASE("exact step recovers its jumps") {
    const auto x = testing::uniform_sample(600, -2.0, 2.0, 6);
    std::vector<double> f, s(x.size(), 1.0);
    StepFunction step{{-1.0, 0.0, 1.0}, {1.5, 0.0, 1.5, 3.0}};
    for (double v : x) f.push_back(step(v));
    const CutResult r = find_cuts(f, s, x, 3);
    CHECK(r.wmse < 1e-9);
    CHECK(wmse(f, s, x, r.cuts) == 0.0);
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(category_of(x[i], r.cuts.cuts) == category_of(x[i], step.cuts));
}

TEST_CASE("coordinate descent finds the exhaustive optimum for two cuts") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const Instance in = random_instance(40, 1000 + seed);
        const auto cand = midpoints(in.x);
        const std::size_t mb = default_min_bin(40);
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t a = 0; a < cand.size(); ++a)
            for (std::size_t b = a + 1; b < cand.size(); ++b) {
                const std::size_t n0 = count_le(in.x, cand[a]), n1 = count_le(in.x, cand[b]) - n0;
                if (n0 < mb || n1 < mb || 40 - n0 - n1 < mb) continue;
                best = std::min(best, wmse_oracle(in.f, in.s, in.x, {cand[a], cand[b]}));
            }
        const CutResult r = find_cuts(in.f, in.s, in.x, 2);
        CHECK(r.wmse == doctest::Approx(best).epsilon(1e-12));
    }
}

TEST_CASE("plain descent can stall where the restart does not") {
    std::size_t stalled = 0;
    for (std::uint64_t seed = 0; seed < 40; ++seed) {
        const Instance in = random_instance(40, 1000 + seed);
        CutOptions plain;
        plain.global_restart = false;
        const CutResult local = find_cuts(in.f, in.s, in.x, 2, plain);
        const CutResult full = find_cuts(in.f, in.s, in.x, 2);
        CHECK(full.wmse <= local.wmse);
        CHECK(full.local_wmse == local.wmse);
        CHECK(full.restarted == (full.wmse < local.wmse));
        CHECK_FALSE(local.restarted);
        if (full.restarted) ++stalled;
    }
    CHECK(stalled > 0);
}

TEST_CASE("descent never increases the error") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const Instance in = random_instance(300, seed);
        for (std::size_t k = 1; k <= 4; ++k) {
            const CutResult r = find_cuts(in.f, in.s, in.x, k);
            CHECK(r.increases == 0);
            double prev = r.initial_wmse;
            for (double v : r.trace) {
                CHECK(v <= prev);
                prev = v;
            }
            CHECK(r.wmse <= r.initial_wmse);
            CHECK(r.converged);
            CHECK(std::is_sorted(r.cuts.cuts.begin(), r.cuts.cuts.end()));
        }
    }
}

TEST_CASE("observation order does not matter") {
    const Instance in = random_instance(250, 55);
    std::vector<std::size_t> perm(250);
    std::iota(perm.begin(), perm.end(), 0);
    std::mt19937_64 rng(1);
    std::shuffle(perm.begin(), perm.end(), rng);
    Instance sh;
    for (std::size_t i : perm) {
        sh.x.push_back(in.x[i]);
        sh.f.push_back(in.f[i]);
        sh.s.push_back(in.s[i]);
    }
    for (std::size_t k = 1; k <= 3; ++k) {
        const CutResult a = find_cuts(in.f, in.s, in.x, k);
        const CutResult b = find_cuts(sh.f, sh.s, sh.x, k);
        CHECK(a.cuts.cuts == b.cuts.cuts);
        CHECK(a.wmse == b.wmse);
    }
}

TEST_CASE("affine maps of x move the cuts along") {
    const Instance in = random_instance(200, 8);
    std::vector<double> ax;
    for (double v : in.x) ax.push_back(3.0 * v + 10.0);
    for (std::size_t k = 1; k <= 3; ++k) {
        const CutResult a = find_cuts(in.f, in.s, in.x, k);
        const CutResult b = find_cuts(in.f, in.s, ax, k);
        for (std::size_t s = 0; s < k; ++s) CHECK(b.cuts.cuts[s] == doctest::Approx(3.0 * a.cuts.cuts[s] + 10.0));
        CHECK(a.wmse == doctest::Approx(b.wmse).epsilon(1e-12));
    }
}

TEST_CASE("bad starting points and inputs") {
    const Instance in = random_instance(60, 1);
    CHECK_THROWS_AS(optimize_cuts(in.f, in.s, in.x, 2, CutVector{"x", {0.5, -0.5}}), Error);
    CHECK_THROWS_AS(optimize_cuts(in.f, in.s, in.x, 2, CutVector{"x", {0.5}}), Error);
    CHECK_THROWS_AS(optimize_cuts(in.f, in.s, in.x, 1, CutVector{"x", {-1.99}}), Error);
    std::vector<double> bad = in.s;
    bad[3] = 0.0;
    CHECK_THROWS_AS(find_cuts(in.f, bad, in.x, 1), Error);
    std::vector<double> shortf(in.f.begin(), in.f.begin() + 10);
    CHECK_THROWS_AS(find_cuts(shortf, in.s, in.x, 1), Error);
}

TEST_CASE("S1 smooths give cuts near the truth") {
    const ScenarioSpec sc = ScenarioSpec::from_id("S1");
    const ModelSpec model = scenario_model(sc);
    int close = 0;
    const int reps = 100;
    for (int r = 0; r < reps; ++r) {
        const Dataset d = generate_scenario(sc, 1000, replicate_seed(314, static_cast<std::uint64_t>(r)));
        const FittedGAM g = fit_gam(d, model);
        const SmoothTerm& s = g.smooth("x1");
        const CutResult res = find_cuts(s.fhat, s.se, d.column("x1"), 2);
        if (std::abs(res.cuts.cuts[0] + 2.0 / 3.0) <= 0.15 && std::abs(res.cuts.cuts[1] - 2.0 / 3.0) <= 0.15)
            ++close;
    }
    CHECK(close >= 90);
}

}

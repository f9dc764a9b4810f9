#include <doctest.h>

#include <cmath>
#include <vector>

#include <Eigen/Eigenvalues>

#include "cutgam/error.hpp"
#include "cutgam/spline_basis.hpp"
#include "support.hpp"

using namespace cutgam;

namespace {

// Knot vector written the textbook way: t_i = lo + (i - p) h for i = 0..m+2p+1.
std::vector<double> knot_oracle(int m, int p, double lo, double hi) {
    const double h = (hi - lo) / (m + 1);
    std::vector<double> t;
    for (int i = 0; i <= m + 2 * p + 1; ++i) t.push_back(lo + (i - p) * h);
    return t;
}

// Plain recursive Cox-de Boor with the 0/0 = 0 convention.
double cox_de_boor(const std::vector<double>& t, int i, int p, double x) {
    if (p == 0) return (t[i] <= x && x < t[i + 1]) ? 1.0 : 0.0;
    double left = 0.0, right = 0.0;
    if (t[i + p] != t[i]) left = (x - t[i]) / (t[i + p] - t[i]) * cox_de_boor(t, i, p - 1, x);
    if (t[i + p + 1] != t[i + 1])
        right = (t[i + p + 1] - x) / (t[i + p + 1] - t[i + 1]) * cox_de_boor(t, i + 1, p - 1, x);
    return left + right;
}

BasisSpec spec_of(int knots, int degree, double lo, double hi) {
    BasisSpec s;
    s.num_interior_knots = knots;
    s.degree = degree;
    s.domain = Domain{lo, hi};
    return s;
}

}  // namespace

TEST_SUITE("spline_basis") {

TEST_CASE("linear spec on the unit interval") {
    const auto k = build_knots(spec_of(3, 1, 0.0, 1.0), {});
    const std::vector<double> expected{-0.25, 0.0, 0.25, 0.5, 0.75, 1.0, 1.25};
    REQUIRE(k.size() == expected.size());
    for (std::size_t i = 0; i < k.size(); ++i) CHECK(k[i] == doctest::Approx(expected[i]).epsilon(1e-15));
}

TEST_CASE("degree zero with one interior knot") {
    const auto k = build_knots(spec_of(1, 0, 0.0, 2.0), {});
    CHECK(k == std::vector<double>{0.0, 1.0, 2.0});
}

TEST_CASE("cubic knots agree with the textbook knot vector") {
    const auto k = build_knots(spec_of(10, 3, -2.0, 2.0), {});
    const auto oracle = knot_oracle(10, 3, -2.0, 2.0);
    REQUIRE(k.size() == 18);
    for (std::size_t i = 0; i < k.size(); ++i) CHECK(std::abs(k[i] - oracle[i]) < 1e-13);
    for (std::size_t i = 1; i < k.size(); ++i) CHECK(k[i] - k[i - 1] == doctest::Approx(4.0 / 11.0));
}

TEST_CASE("domain comes from the data when unset") {
    BasisSpec s;
    s.num_interior_knots = 4;
    const std::vector<double> x{0.3, -1.0, 2.0, 0.1};
    const Domain d = resolve_domain(s, x);
    CHECK(d.lo == -1.0);
    CHECK(d.hi == 2.0);
    const auto k = build_knots(s, x);
    CHECK(k[3] == doctest::Approx(-1.0));
    CHECK(k[8] == doctest::Approx(2.0));
}

TEST_CASE("invalid specs are rejected") {
    CHECK_THROWS_AS(validate_smoother_basis(spec_of(5, 0, 0, 1)), Error);
    CHECK_THROWS_AS(validate_smoother_basis(spec_of(1, 3, 0, 1)), Error);
    CHECK_THROWS_AS(validate_smoother_basis(spec_of(5, 3, 1, 1)), Error);
    BasisSpec bad_order = spec_of(5, 3, 0, 1);
    bad_order.penalty_order = 0;
    CHECK_THROWS_AS(validate_smoother_basis(bad_order), Error);
    CHECK_NOTHROW(validate_smoother_basis(spec_of(20, 3, 0, 1)));
    const std::vector<double> constant{1.0, 1.0, 1.0};
    BasisSpec s;
    try {
        (void)build_knots(s, constant);
        FAIL("constant covariate accepted");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::DegenerateDomain);
    }
}

TEST_CASE("indicator basis") {
    const std::vector<double> knots{0.0, 1.0, 2.0};
    const std::vector<double> x{0.5};
    const Eigen::MatrixXd b = evaluate_basis(knots, 0, x);
    REQUIRE(b.cols() == 2);
    CHECK(b(0, 0) == 1.0);
    CHECK(b(0, 1) == 0.0);
}

TEST_CASE("partition of unity and local support") {
    const auto knots = build_knots(spec_of(10, 3, -2.0, 2.0), {});
    const auto x = testing::uniform_sample(10000, -2.0, 2.0, 11);
    const Eigen::MatrixXd b = evaluate_basis(knots, 3, x);
    double worst = 0.0;
    for (Eigen::Index i = 0; i < b.rows(); ++i) {
        worst = std::max(worst, std::abs(b.row(i).sum() - 1.0));
        CHECK((b.row(i).array() != 0.0).count() <= 4);
        CHECK(b.row(i).minCoeff() >= 0.0);
    }
    CHECK(worst < 1e-12);
    const std::vector<double> ends{-2.0, 2.0};
    const Eigen::MatrixXd e = evaluate_basis(knots, 3, ends);
    CHECK(std::abs(e.row(0).sum() - 1.0) < 1e-12);
    CHECK(std::abs(e.row(1).sum() - 1.0) < 1e-12);
}

TEST_CASE("rows match the naive recursion") {
    const auto knots = build_knots(spec_of(10, 3, -2.0, 2.0), {});
    std::vector<double> x{0.0, -1.999, 1.3, 0.77, -0.41};
    const Eigen::MatrixXd b = evaluate_basis(knots, 3, x);
    REQUIRE(b.cols() == 14);
    for (std::size_t r = 0; r < x.size(); ++r)
        for (int i = 0; i < 14; ++i)
            CHECK(std::abs(b(static_cast<Eigen::Index>(r), i) - cox_de_boor(knots, i, 3, x[r])) < 1e-14);
}

TEST_CASE("local evaluation agrees with the dense row") {
    const auto knots = build_knots(spec_of(7, 2, 0.0, 3.0), {});
    const auto x = testing::uniform_sample(200, 0.0, 3.0, 5);
    const Eigen::MatrixXd b = evaluate_basis(knots, 2, x);
    for (std::size_t r = 0; r < x.size(); ++r) {
        const auto [first, values] = evaluate_basis_local(knots, 2, x[r]);
        REQUIRE(values.size() == 3);
        for (std::size_t j = 0; j < 3; ++j)
            CHECK(std::abs(values[j] - b(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(first + j))) <
                  1e-15);
    }
}

TEST_CASE("points outside the knot span are rejected") {
    const auto knots = build_knots(spec_of(5, 3, 0.0, 1.0), {});
    const std::vector<double> x{5.0};
    try {
        (void)evaluate_basis(knots, 3, x);
        FAIL("accepted");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::OutOfRange);
    }
    const std::vector<double> nan{std::nan("")};
    CHECK_THROWS_AS((void)evaluate_basis(knots, 3, nan), Error);
}

TEST_CASE("first-order penalty by hand") {
    const PenaltyMatrix p = difference_penalty(3, 1);
    Eigen::Matrix3d expected;
    expected << 1, -1, 0, -1, 2, -1, 0, -1, 1;
    CHECK(p.order == 1);
    CHECK((p.matrix - expected).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("second-order penalty rank") {
    const PenaltyMatrix p = difference_penalty(4, 2);
    Eigen::FullPivLU<Eigen::MatrixXd> lu(p.matrix);
    CHECK(lu.rank() == 2);
    CHECK(difference_matrix(4, 2).rows() == 2);
    CHECK_THROWS_AS((void)difference_penalty(2, 2), Error);
}

TEST_CASE("second-order penalty null space") {
    const PenaltyMatrix p = difference_penalty(20, 2);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(p.matrix);
    const auto& ev = eig.eigenvalues();
    CHECK(std::abs(ev[0]) < 1e-12);
    CHECK(std::abs(ev[1]) < 1e-12);
    CHECK(ev[2] > 1e-6);
    Eigen::VectorXd one = Eigen::VectorXd::Ones(20);
    Eigen::VectorXd lin = Eigen::VectorXd::LinSpaced(20, 0.0, 19.0);
    CHECK(one.dot(p.matrix * one) == 0.0);
    CHECK(lin.dot(p.matrix * lin) == 0.0);
    const PenaltyMatrix p1 = difference_penalty(20, 1);
    CHECK(one.dot(p1.matrix * one) == 0.0);
    CHECK(lin.dot(p1.matrix * lin) > 0.0);
}

}

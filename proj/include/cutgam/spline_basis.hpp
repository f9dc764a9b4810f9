#pragma once

// B-spline bases and difference penalties for P-spline smoothers.
//
// Knots are equidistant: `num_interior_knots` points strictly inside
// [lo, hi], the two boundary knots, and `degree` further knots with the
// same spacing beyond each boundary. The basis therefore has
// num_interior_knots + degree + 1 functions, each a piece of degree
// `degree` supported on degree + 1 knot intervals.

#include <cstddef>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace cutgam {

struct Domain {
    double lo = 0.0;
    double hi = 1.0;
};

struct BasisSpec {
    int num_interior_knots = 20;
    int degree = 3;
    int penalty_order = 2;
    /// Taken from the observed covariate range when unset.
    std::optional<Domain> domain;

    [[nodiscard]] int num_basis() const { return num_interior_knots + degree + 1; }
};

/// Checks the invariants a smoother basis must satisfy: degree >= 1,
/// penalty_order >= 1, num_interior_knots >= penalty_order + 1 and lo < hi
/// when a domain is given. Throws Error(InvalidArgument) otherwise.
void validate_smoother_basis(const BasisSpec& spec);

/// Domain of the spec, or [min x, max x] when the spec carries none.
Domain resolve_domain(const BasisSpec& spec, std::span<const double> x);

std::vector<double> build_knots(const BasisSpec& spec, std::span<const double> x);

/// Dense n x num_basis design matrix by the Cox-de Boor recursion.
/// Points must lie inside the extended knot span.
Eigen::MatrixXd evaluate_basis(std::span<const double> knots, int degree,
                               std::span<const double> x);

/// Nonzero basis values at a point of [lo, hi]: (index of the first
/// function, degree + 1 values). Local de Boor triangle.
std::pair<std::size_t, std::vector<double>> evaluate_basis_local(
    std::span<const double> knots, int degree, double x);

struct PenaltyMatrix {
    int order = 0;
    Eigen::MatrixXd matrix;
};

/// Forward-difference operator of the given order, (num_basis - order) x num_basis.
Eigen::MatrixXd difference_matrix(int num_basis, int order);

/// D^T D for the order-th forward difference matrix D.
PenaltyMatrix difference_penalty(int num_basis, int order);

}  // namespace cutgam

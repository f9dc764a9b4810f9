#include "cutgam/spline_basis.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "cutgam/error.hpp"

namespace cutgam {

void validate_smoother_basis(const BasisSpec& spec) {
    if (spec.degree < 1)
        throw Error(ErrorCode::InvalidArgument, "spline degree must be >= 1");
    if (spec.penalty_order < 1)
        throw Error(ErrorCode::InvalidArgument, "penalty order must be >= 1");
    if (spec.num_interior_knots < spec.penalty_order + 1)
        throw Error(ErrorCode::InvalidArgument,
                    "number of interior knots must be >= penalty order + 1");
    if (spec.domain && !(spec.domain->lo < spec.domain->hi))
        throw Error(ErrorCode::DegenerateDomain, "basis domain requires lo < hi");
}

Domain resolve_domain(const BasisSpec& spec, std::span<const double> x) {
    if (x.empty() && !spec.domain)
        throw Error(ErrorCode::InvalidArgument, "covariate sample is empty");
    for (double v : x)
        if (!std::isfinite(v))
            throw Error(ErrorCode::NonFinite, "covariate contains non-finite values");
    Domain d;
    if (spec.domain) {
        d = *spec.domain;
    } else {
        auto [mn, mx] = std::minmax_element(x.begin(), x.end());
        d = {*mn, *mx};
    }
    if (!(d.lo < d.hi))
        throw Error(ErrorCode::DegenerateDomain, "degenerate covariate domain (lo == hi)");
    return d;
}

std::vector<double> build_knots(const BasisSpec& spec, std::span<const double> x) {
    if (spec.degree < 0 || spec.num_interior_knots < 0)
        throw Error(ErrorCode::InvalidArgument, "negative degree or knot count");
    const Domain d = resolve_domain(spec, x);
    const int segments = spec.num_interior_knots + 1;
    const double step = (d.hi - d.lo) / segments;
    const int total = spec.num_interior_knots + 2 * (spec.degree + 1);
    std::vector<double> knots(static_cast<std::size_t>(total));
    for (int i = 0; i < total; ++i) {
        const int offset = i - spec.degree;  // 0 at lo, segments at hi
        if (offset == 0) {
            knots[i] = d.lo;
        } else if (offset == segments) {
            knots[i] = d.hi;
        } else {
            knots[i] = d.lo + offset * step;
        }
    }
    return knots;
}

namespace {

// Full triangular Cox-de Boor table over every knot interval. Used outside
// [lo, hi], where the local algorithm would need knots before the first one.
std::vector<double> full_recursion(std::span<const double> t, int degree, double x) {
    const std::size_t m = t.size();
    std::vector<double> b(m - 1, 0.0);
    for (std::size_t i = 0; i + 1 < m; ++i)
        if (t[i] <= x && x < t[i + 1]) b[i] = 1.0;
    if (x == t[m - 1]) b[m - 2] = 1.0;
    for (int p = 1; p <= degree; ++p) {
        for (std::size_t i = 0; i + p + 1 < m; ++i) {
            double v = 0.0;
            const double left = t[i + p] - t[i];
            const double right = t[i + p + 1] - t[i + 1];
            if (left > 0.0) v += (x - t[i]) / left * b[i];
            if (right > 0.0) v += (t[i + p + 1] - x) / right * b[i + 1];
            b[i] = v;
        }
    }
    b.resize(m - 1 - degree);
    return b;
}

}  // namespace

std::pair<std::size_t, std::vector<double>> evaluate_basis_local(
    std::span<const double> t, int degree, double x) {
    if (degree < 0 || t.size() < static_cast<std::size_t>(2 * degree + 2))
        throw Error(ErrorCode::InvalidArgument, "knot sequence too short for degree");
    if (!std::isfinite(x)) throw Error(ErrorCode::NonFinite, "non-finite evaluation point");
    if (x < t.front() || x > t.back()) {
        std::ostringstream msg;
        msg << "evaluation point " << x << " outside knot span [" << t.front() << ", "
            << t.back() << "]";
        throw Error(ErrorCode::OutOfRange, msg.str());
    }
    const std::size_t p = static_cast<std::size_t>(degree);
    const std::size_t nb = t.size() - p - 1;
    const double lo = t[p];
    const double hi = t[nb];
    if (x < lo || x > hi) {
        std::ostringstream msg;
        msg << "evaluation point " << x << " outside basis domain [" << lo << ", " << hi << "]";
        throw Error(ErrorCode::OutOfRange, msg.str());
    }

    // span s with t[s] <= x < t[s+1], s in [p, nb - 1]
    std::size_t s = static_cast<std::size_t>(
        std::upper_bound(t.begin() + p, t.begin() + nb + 1, x) - t.begin()) - 1;
    s = std::min(s, nb - 1);

    std::vector<double> n(p + 1, 0.0), left(p + 1, 0.0), right(p + 1, 0.0);
    n[0] = 1.0;
    for (std::size_t j = 1; j <= p; ++j) {
        left[j] = x - t[s + 1 - j];
        right[j] = t[s + j] - x;
        double saved = 0.0;
        for (std::size_t r = 0; r < j; ++r) {
            const double tmp = n[r] / (right[r + 1] + left[j - r]);
            n[r] = saved + right[r + 1] * tmp;
            saved = left[j - r] * tmp;
        }
        n[j] = saved;
    }
    return {s - p, n};
}

Eigen::MatrixXd evaluate_basis(std::span<const double> knots, int degree,
                               std::span<const double> x) {
    const std::size_t nb = knots.size() - static_cast<std::size_t>(degree) - 1;
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(x.size()),
                                                static_cast<Eigen::Index>(nb));
    const double lo = knots[static_cast<std::size_t>(degree)];
    const double hi = knots[nb];
    for (std::size_t i = 0; i < x.size(); ++i) {
        if ((x[i] < lo || x[i] > hi) && x[i] >= knots.front() && x[i] <= knots.back()) {
            const auto row = full_recursion(knots, degree, x[i]);
            for (std::size_t b = 0; b < nb; ++b)
                out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(b)) = row[b];
            continue;
        }
        auto [first, vals] = evaluate_basis_local(knots, degree, x[i]);
        for (std::size_t r = 0; r < vals.size(); ++r)
            if (first + r < nb)
                out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(first + r)) = vals[r];
    }
    return out;
}

Eigen::MatrixXd difference_matrix(int num_basis, int order) {
    if (order < 0 || num_basis <= order)
        throw Error(ErrorCode::InvalidArgument,
                    "difference penalty requires num_basis > order");
    Eigen::MatrixXd d = Eigen::MatrixXd::Identity(num_basis, num_basis);
    for (int k = 0; k < order; ++k) {
        const Eigen::Index rows = d.rows() - 1;
        d = (d.bottomRows(rows) - d.topRows(rows)).eval();
    }
    return d;
}

PenaltyMatrix difference_penalty(int num_basis, int order) {
    const Eigen::MatrixXd d = difference_matrix(num_basis, order);
    return {order, d.transpose() * d};
}

}  // namespace cutgam

#include "cutgam/gam.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "cutgam/error.hpp"
#include "cutgam/glm.hpp"

namespace cutgam {

Term Term::smooth(std::string column, BasisSpec basis) {
    Term t;
    t.column = std::move(column);
    t.role = TermRole::Smooth;
    t.basis = basis;
    return t;
}

Term Term::linear(std::string column) {
    Term t;
    t.column = std::move(column);
    t.role = TermRole::Linear;
    return t;
}

Term Term::categorical(std::string column) {
    Term t;
    t.column = std::move(column);
    t.role = TermRole::Categorical;
    return t;
}

Term Term::binned(std::string column, std::vector<double> cuts) {
    Term t;
    t.column = std::move(column);
    t.role = TermRole::Binned;
    t.cuts = std::move(cuts);
    return t;
}

void ModelSpec::validate() const {
    std::set<std::string> seen;
    if (response.empty()) throw Error(ErrorCode::InvalidArgument, "model has no response column");
    for (const auto& t : terms) {
        if (t.column == response)
            throw Error(ErrorCode::InvalidArgument, "response '" + response + "' used as a term");
        if (!seen.insert(t.column).second)
            throw Error(ErrorCode::InvalidArgument, "column '" + t.column + "' appears in two terms");
        if (t.role == TermRole::Smooth) validate_smoother_basis(t.basis);
    }
    for (const auto& target : categorize_targets) {
        const Term* t = find_term(target);
        if (t == nullptr || t->role != TermRole::Smooth)
            throw Error(ErrorCode::InvalidArgument,
                        "categorize target '" + target + "' is not a smooth term");
    }
}

const Term* ModelSpec::find_term(const std::string& column) const {
    for (const auto& t : terms)
        if (t.column == column) return &t;
    return nullptr;
}

Eigen::MatrixXd SmoothBasis::rows(std::span<const double> x, std::size_t* clamped) const {
    std::vector<double> xc(x.begin(), x.end());
    std::size_t count = 0;
    for (double& v : xc) {
        if (v < domain.lo || v > domain.hi) {
            v = std::clamp(v, domain.lo, domain.hi);
            ++count;
        }
    }
    if (clamped != nullptr) *clamped = count;
    return evaluate_basis(knots, degree, xc) * constraint;
}

namespace {

std::vector<double> checked_column(const Dataset& data, const std::string& name) {
    const auto col = data.column(name);
    for (double v : col)
        if (!std::isfinite(v))
            throw Error(ErrorCode::NonFinite, "column '" + name + "' has non-finite values");
    return {col.begin(), col.end()};
}

std::string format_number(double v) {
    std::ostringstream s;
    s.precision(6);
    s << v;
    return s.str();
}

SmoothBasis make_smooth_basis(const Term& term, std::span<const double> x, Eigen::MatrixXd& rows) {
    SmoothBasis sb;
    sb.degree = term.basis.degree;
    sb.domain = resolve_domain(term.basis, x);
    sb.knots = build_knots(term.basis, x);
    for (double v : x)
        if (v < sb.domain.lo || v > sb.domain.hi)
            throw Error(ErrorCode::OutOfRange,
                        "covariate '" + term.column + "' has values outside the basis domain");
    const Eigen::MatrixXd b = evaluate_basis(sb.knots, sb.degree, x);
    const Eigen::Index nb = b.cols();
    const Eigen::VectorXd col_sums = b.colwise().sum().transpose();
    const Eigen::MatrixXd col_matrix = col_sums;
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(col_matrix);
    const Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(nb, nb);
    const Eigen::MatrixXd z = q.rightCols(nb - 1);
    // Rotate to the eigenbasis of the constrained penalty so it becomes
    // diagonal; with Jacobi scaling this keeps (X^T W X + lambda S) well
    // conditioned for very large lambda.
    const PenaltyMatrix pen = difference_penalty(static_cast<int>(nb), term.basis.penalty_order);
    Eigen::MatrixXd zsz = z.transpose() * pen.matrix * z;
    zsz = 0.5 * (zsz + zsz.transpose()).eval();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(zsz);
    const Eigen::VectorXd ev = eig.eigenvalues();
    const double top = ev.maxCoeff();
    Eigen::VectorXd diag = Eigen::VectorXd::Zero(ev.size());
    sb.penalty_rank = 0;
    for (Eigen::Index i = 0; i < ev.size(); ++i) {
        if (ev[i] > 1e-9 * top) {
            diag[i] = ev[i];
            ++sb.penalty_rank;
        }
    }
    sb.constraint = z * eig.eigenvectors();
    sb.penalty = diag.asDiagonal();
    rows = b * sb.constraint;
    return sb;
}

}  // namespace

ModelDesign build_design(const Dataset& data, const ModelSpec& spec) {
    const std::size_t n = data.rows();
    const auto rows = static_cast<Eigen::Index>(n);
    std::vector<Eigen::MatrixXd> parts;
    ModelDesign d;

    parts.emplace_back(Eigen::MatrixXd::Ones(rows, 1));
    d.column_names.push_back("(Intercept)");
    Eigen::Index next = 1;

    for (std::size_t ti = 0; ti < spec.terms.size(); ++ti) {
        const Term& term = spec.terms[ti];
        const std::vector<double> x = checked_column(data, term.column);
        TermBlock block;
        block.term_index = ti;
        block.column = term.column;
        block.role = term.role;
        block.first = next;
        Eigen::MatrixXd part;

        switch (term.role) {
            case TermRole::Smooth: {
                d.smooth_bases.push_back(make_smooth_basis(term, x, part));
                d.smooth_blocks.push_back(d.blocks.size());
                for (Eigen::Index c = 0; c < part.cols(); ++c)
                    block.names.push_back("s(" + term.column + ")." + std::to_string(c + 1));
                break;
            }
            case TermRole::Linear: {
                part = Eigen::Map<const Eigen::VectorXd>(x.data(), rows);
                block.names.push_back(term.column);
                break;
            }
            case TermRole::Categorical: {
                std::vector<double> levels(x.begin(), x.end());
                std::sort(levels.begin(), levels.end());
                levels.erase(std::unique(levels.begin(), levels.end()), levels.end());
                if (levels.size() < 2)
                    throw Error(ErrorCode::InvalidArgument,
                                "categorical column '" + term.column + "' has a single level");
                part = Eigen::MatrixXd::Zero(rows, static_cast<Eigen::Index>(levels.size()) - 1);
                for (std::size_t i = 0; i < n; ++i) {
                    const auto lv = std::lower_bound(levels.begin(), levels.end(), x[i]) - levels.begin();
                    if (lv > 0) part(static_cast<Eigen::Index>(i), lv - 1) = 1.0;
                }
                for (std::size_t l = 1; l < levels.size(); ++l)
                    block.names.push_back(term.column + "=" + format_number(levels[l]));
                block.levels = levels;
                break;
            }
            case TermRole::Binned: {
                const auto& c = term.cuts;
                for (std::size_t s = 1; s < c.size(); ++s)
                    if (!(c[s - 1] < c[s]))
                        throw Error(ErrorCode::InvalidArgument,
                                    "cuts for '" + term.column + "' are not strictly increasing");
                const auto k = static_cast<Eigen::Index>(c.size());
                part = Eigen::MatrixXd::Zero(rows, k);
                std::vector<std::size_t> counts(c.size() + 1, 0);
                for (std::size_t i = 0; i < n; ++i) {
                    const auto cat = std::lower_bound(c.begin(), c.end(), x[i]) - c.begin();
                    ++counts[static_cast<std::size_t>(cat)];
                    if (cat > 0) part(static_cast<Eigen::Index>(i), cat - 1) = 1.0;
                }
                for (std::size_t s = 0; s < counts.size(); ++s)
                    if (counts[s] == 0)
                        throw Error(ErrorCode::EmptyCategory,
                                    "category " + std::to_string(s) + " of '" + term.column +
                                        "' holds no observations");
                for (std::size_t s = 0; s < c.size(); ++s) {
                    const std::string hi = s + 1 < c.size() ? format_number(c[s + 1]) : "Inf";
                    block.names.push_back(term.column + "(" + format_number(c[s]) + "," + hi + "]");
                }
                break;
            }
        }
        block.size = part.cols();
        next += part.cols();
        for (const auto& nm : block.names) d.column_names.push_back(nm);
        d.blocks.push_back(std::move(block));
        parts.push_back(std::move(part));
    }

    d.matrix.resize(rows, next);
    Eigen::Index col = 0;
    for (const auto& p : parts) {
        d.matrix.middleCols(col, p.cols()) = p;
        col += p.cols();
    }
    return d;
}

std::size_t FittedGAM::smooth_index(const std::string& column) const {
    for (std::size_t j = 0; j < smooths.size(); ++j)
        if (smooths[j].column == column) return j;
    throw Error(ErrorCode::InvalidArgument, "no smooth term for column '" + column + "'");
}

const SmoothTerm& FittedGAM::smooth(const std::string& column) const {
    return smooths[smooth_index(column)];
}

Eigen::VectorXd FittedGAM::predict_link(const Dataset& data, std::vector<std::string>* warn) const {
    const auto rows = static_cast<Eigen::Index>(data.rows());
    Eigen::VectorXd eta = Eigen::VectorXd::Constant(rows, coefficients[0]);
    std::size_t smooth_seen = 0;
    for (const auto& block : blocks) {
        const Term& term = spec.terms[block.term_index];
        const auto x = data.column(term.column);
        const Eigen::VectorXd beta = coefficients.segment(block.first, block.size);
        switch (block.role) {
            case TermRole::Smooth: {
                std::size_t clamped = 0;
                eta += smooths[smooth_seen++].basis.rows(x, &clamped) * beta;
                if (clamped > 0 && warn != nullptr)
                    warn->push_back(std::to_string(clamped) + " values of '" + term.column +
                                    "' clamped to the fitted domain");
                break;
            }
            case TermRole::Linear:
                for (Eigen::Index i = 0; i < rows; ++i) eta[i] += beta[0] * x[static_cast<std::size_t>(i)];
                break;
            case TermRole::Categorical:
                for (Eigen::Index i = 0; i < rows; ++i) {
                    const auto& lv = block.levels;
                    const auto it = std::find(lv.begin(), lv.end(), x[static_cast<std::size_t>(i)]);
                    if (it == lv.end())
                        throw Error(ErrorCode::OutOfRange,
                                    "unseen level in categorical column '" + term.column + "'");
                    const auto l = it - lv.begin();
                    if (l > 0) eta[i] += beta[l - 1];
                }
                break;
            case TermRole::Binned:
                for (Eigen::Index i = 0; i < rows; ++i) {
                    const auto& c = term.cuts;
                    const auto cat = std::lower_bound(c.begin(), c.end(), x[static_cast<std::size_t>(i)]) - c.begin();
                    if (cat > 0) eta[i] += beta[cat - 1];
                }
                break;
        }
    }
    if (spec.offset) {
        const auto off = data.column(*spec.offset);
        for (Eigen::Index i = 0; i < rows; ++i) eta[i] += off[static_cast<std::size_t>(i)];
    }
    return eta;
}

namespace {

double initial_intercept(const Family& family, const Eigen::VectorXd& y, const Eigen::VectorXd& off) {
    const double n = static_cast<double>(y.size());
    switch (family.kind()) {
        case FamilyKind::Gaussian: return (y - off).sum() / n;
        case FamilyKind::Binomial: {
            const double m = std::clamp(y.mean(), 1e-6, 1.0 - 1e-6);
            return std::log(m / (1.0 - m)) - off.mean();
        }
        case FamilyKind::Poisson: {
            const double total_y = std::max(y.sum(), 1e-6);
            return std::log(total_y / off.array().exp().sum());
        }
    }
    return 0.0;
}

void fill_smooths(FittedGAM& fit, const ModelDesign& design, const std::vector<double>& lambdas,
                  const std::vector<Eigen::MatrixXd>& smooth_rows, double se_floor) {
    for (std::size_t j = 0; j < design.smooth_bases.size(); ++j) {
        SmoothTerm st;
        st.block = design.smooth_blocks[j];
        const TermBlock& b = design.blocks[st.block];
        st.column = b.column;
        st.basis = design.smooth_bases[j];
        st.lambda = lambdas[j];
        const Eigen::MatrixXd& rows = smooth_rows[j];
        const Eigen::VectorXd f = rows * fit.coefficients.segment(b.first, b.size);
        const Eigen::MatrixXd v = fit.covariance.block(b.first, b.first, b.size, b.size);
        const Eigen::VectorXd var = ((rows * v).array() * rows.array()).rowwise().sum();
        st.fhat.assign(f.data(), f.data() + f.size());
        st.se.resize(static_cast<std::size_t>(var.size()));
        for (Eigen::Index i = 0; i < var.size(); ++i)
            st.se[static_cast<std::size_t>(i)] = std::max(std::sqrt(std::max(var[i], 0.0)), se_floor);
        fit.smooths.push_back(std::move(st));
    }
}

}  // namespace

FittedGAM fit_gam(const Dataset& data, const ModelSpec& spec, const GamOptions& options) {
    spec.validate();
    const std::size_t n = data.rows();
    const std::size_t floor = 10 * std::max<std::size_t>(spec.terms.size(), 1);
    if (n < floor) {
        std::ostringstream msg;
        msg << "need at least " << floor << " observations for " << spec.terms.size()
            << " terms, have " << n;
        throw Error(ErrorCode::InsufficientData, msg.str());
    }
    const std::vector<double> ycol = checked_column(data, spec.response);
    spec.family.validate_response(ycol);
    const Eigen::VectorXd y = Eigen::Map<const Eigen::VectorXd>(ycol.data(), static_cast<Eigen::Index>(n));
    Eigen::VectorXd offset = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
    if (spec.offset) {
        const std::vector<double> o = checked_column(data, *spec.offset);
        offset = Eigen::Map<const Eigen::VectorXd>(o.data(), static_cast<Eigen::Index>(n));
    }

    const ModelDesign design = build_design(data, spec);
    const Eigen::MatrixXd& x = design.matrix;
    const Eigen::Index p = x.cols();

    FittedGAM fit;
    fit.spec = spec;
    fit.blocks = design.blocks;
    fit.column_names = design.column_names;
    fit.n_obs = n;

    if (design.smooth_bases.empty()) {
        const ParametricFit pf = irls_fit(x, y, spec.family,
                                          spec.offset ? std::optional<Eigen::VectorXd>(offset)
                                                      : std::nullopt,
                                          design.column_names);
        fit.coefficients = pf.coefficients;
        fit.covariance = pf.covariance;
        fit.unscaled_covariance = pf.covariance / pf.dispersion;
        fit.dispersion = pf.dispersion;
        fit.edf = static_cast<double>(p);
        fit.log_likelihood = pf.log_likelihood;
        fit.deviance = pf.deviance;
        fit.penalized_deviance = pf.deviance;
        fit.converged = pf.converged;
        fit.outer_iterations = pf.iterations;
        fit.linear_predictor = pf.linear_predictor;
        fit.fitted = pf.fitted;
        fit.penalized_deviance_trace = pf.deviance_trace;
        if (!pf.converged) fit.warnings.push_back("IRLS reached the iteration limit");
        return fit;
    }

    const std::size_t ns = design.smooth_bases.size();
    std::vector<double> lambda(ns, options.initial_lambda);
    const bool fixed = options.fixed_lambda.has_value();
    if (fixed) {
        if (options.fixed_lambda->size() != ns)
            throw Error(ErrorCode::DimensionMismatch, "fixed_lambda needs one value per smooth");
        lambda = *options.fixed_lambda;
    }

    std::vector<Eigen::MatrixXd> smooth_rows(ns);
    for (std::size_t j = 0; j < ns; ++j) {
        const TermBlock& b = design.blocks[design.smooth_blocks[j]];
        smooth_rows[j] = x.middleCols(b.first, b.size);
    }
    auto total_penalty = [&](const std::vector<double>& lam) {
        Eigen::MatrixXd s = Eigen::MatrixXd::Zero(p, p);
        for (std::size_t j = 0; j < ns; ++j) {
            const TermBlock& b = design.blocks[design.smooth_blocks[j]];
            s.block(b.first, b.first, b.size, b.size) = lam[j] * design.smooth_bases[j].penalty;
        }
        return s;
    };

    const detail::PirlsProblem problem(x, y, spec.family, offset);
    Eigen::VectorXd beta0 = Eigen::VectorXd::Zero(p);
    beta0[0] = initial_intercept(spec.family, y, offset);
    Eigen::MatrixXd s_lambda = total_penalty(lambda);
    detail::PirlsState state = problem.state_from_beta(beta0, s_lambda);

    const double dn = static_cast<double>(n);
    auto dispersion_at = [&](const detail::PirlsState& st, double edf) {
        return spec.family.has_free_scale() ? st.deviance / std::max(dn - edf, 1.0) : 1.0;
    };

    // Degrees of freedom removed by each penalty, lambda_j tr(H^{-1} S_j).
    std::vector<double> suppressed_prev(ns, -1.0);
    std::vector<double> stretch(ns, 1.0), last_step(ns, 0.0);
    bool converged = false;
    double previous = state.penalized_deviance();
    int outer = 0;
    for (outer = 1; outer <= options.max_outer_iterations; ++outer) {
        state = problem.step(state, s_lambda, options.max_step_halvings);
        const double current = state.penalized_deviance();
        const double dev_change = std::abs(current - previous) / (std::abs(current) + 0.1);
        double edf_change = 0.0;
        if (!fixed) {
            const Eigen::MatrixXd info = problem.information(state);
            const Eigen::MatrixXd h_inv = detail::inverse_spd(info + s_lambda);
            const double edf = (h_inv * info).trace();
            const double phi = dispersion_at(state, edf);
            for (std::size_t j = 0; j < ns; ++j) {
                const TermBlock& b = design.blocks[design.smooth_blocks[j]];
                const SmoothBasis& sb = design.smooth_bases[j];
                const Eigen::VectorXd bj = state.beta.segment(b.first, b.size);
                const double tr = (h_inv.block(b.first, b.first, b.size, b.size) * sb.penalty).trace();
                const double quad = bj.dot(sb.penalty * bj);
                const double suppressed = lambda[j] * tr;
                const double numer = std::max(sb.penalty_rank - suppressed, 1e-10);
                const double target = quad > 1e-300 ? phi * numer / quad : options.lambda_max;
                // Step extension in log(lambda): the Fellner-Schall fixed point
                // is approached sub-linearly when lambda heads to infinity.
                const double log_step = std::log(std::clamp(target, options.lambda_min, options.lambda_max) / lambda[j]);
                if (log_step * last_step[j] > 0.0) {
                    stretch[j] = std::min(stretch[j] * 2.0, 64.0);
                } else {
                    stretch[j] = 1.0;
                }
                last_step[j] = log_step;
                lambda[j] = std::clamp(lambda[j] * std::exp(stretch[j] * log_step), options.lambda_min,
                                       options.lambda_max);
                edf_change = std::max(edf_change, std::abs(suppressed - suppressed_prev[j]));
                suppressed_prev[j] = suppressed;
            }
            s_lambda = total_penalty(lambda);
            state.penalty = state.beta.dot(s_lambda * state.beta);
        }
        if (dev_change < options.tolerance && edf_change < options.edf_tolerance) {
            converged = true;
            break;
        }
        previous = state.penalized_deviance();
    }
    if (!converged) {
        std::ostringstream msg;
        msg << "penalized IRLS did not converge in " << options.max_outer_iterations
            << " outer iterations";
        throw Error(ErrorCode::NonConvergence, msg.str());
    }

    // Polish beta at the selected smoothing parameters.
    fit.penalized_deviance_trace.push_back(state.penalized_deviance());
    for (int it = 0; it < 100; ++it) {
        const double before = state.penalized_deviance();
        state = problem.step(state, s_lambda, options.max_step_halvings);
        fit.penalized_deviance_trace.push_back(state.penalized_deviance());
        if (std::abs(state.penalized_deviance() - before) / (std::abs(state.penalized_deviance()) + 0.1) <
            options.tolerance)
            break;
    }

    const Eigen::MatrixXd info = problem.information(state);
    fit.unscaled_covariance = detail::inverse_spd(info + s_lambda);
    fit.edf = (fit.unscaled_covariance * info).trace();
    fit.dispersion = dispersion_at(state, fit.edf);
    fit.covariance = fit.dispersion * fit.unscaled_covariance;
    fit.coefficients = state.beta;
    fit.deviance = state.deviance;
    fit.penalized_deviance = state.penalized_deviance();
    fit.log_likelihood = spec.family.log_likelihood(y, state.mu);
    fit.converged = true;
    fit.outer_iterations = outer;
    fit.linear_predictor = state.eta;
    fit.fitted = state.mu;
    fill_smooths(fit, design, lambda, smooth_rows, options.se_floor);
    return fit;
}

std::vector<double> pointwise_se(const FittedGAM& fitted, std::size_t term) {
    if (term >= fitted.smooths.size())
        throw Error(ErrorCode::OutOfRange, "smooth term index out of range");
    return fitted.smooths[term].se;
}

double effective_dimension(const FittedGAM& fitted) {
    return fitted.edf + (fitted.spec.family.has_free_scale() ? 1.0 : 0.0);
}

}  // namespace cutgam

#include "cutgam/model_select.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include <boost/math/distributions/normal.hpp>

#include "cutgam/error.hpp"
#include "cutgam/parallel.hpp"

namespace cutgam {

std::size_t CategorizedModel::total_cuts() const {
    std::size_t total = 0;
    for (const auto& c : cuts) total += c.k();
    return total;
}

namespace {

void check_alpha(double alpha) {
    if (!(alpha > 0.0 && alpha < 1.0))
        throw Error(ErrorCode::InvalidArgument, "alpha must lie in (0, 1)");
}


const CutVector& cuts_for(const std::vector<CutVector>& cuts, const std::string& covariate) {
    for (const auto& c : cuts)
        if (c.covariate == covariate) return c;
    throw Error(ErrorCode::InvalidArgument, "no cut vector given for target '" + covariate + "'");
}

std::string describe(const std::vector<std::size_t>& nc) {
    std::ostringstream s;
    s << '(';
    for (std::size_t j = 0; j < nc.size(); ++j) s << (j ? "," : "") << nc[j];
    s << ')';
    return s.str();
}

}  // namespace

ModelSpec categorized_spec(const ModelSpec& spec, const std::vector<CutVector>& cuts) {
    ModelSpec out = spec;
    out.terms.clear();
    out.categorize_targets.clear();
    for (const auto& term : spec.terms) {
        const bool target = std::find(spec.categorize_targets.begin(), spec.categorize_targets.end(),
                                      term.column) != spec.categorize_targets.end();
        if (!target) {
            out.terms.push_back(term);
            continue;
        }
        const CutVector& c = cuts_for(cuts, term.column);
        if (c.k() > 0) out.terms.push_back(Term::binned(term.column, c.cuts));
    }
    return out;
}

double bic(const CategorizedModel& model) {
    return model.phi * std::log(static_cast<double>(model.n_obs)) - 2.0 * model.log_likelihood;
}

double pseudo_bic(const CategorizedModel& model) {
    return bic(model) +
           std::log(static_cast<double>(model.n_obs)) * static_cast<double>(model.total_cuts());
}

bool adjacent_significance(const CategorizedModel& model, double alpha) {
    check_alpha(alpha);
    const double critical =
        boost::math::quantile(boost::math::normal_distribution<double>(), 1.0 - alpha / 2.0);
    for (const auto& t : model.targets) {
        if (t.adjacent_z.size() != t.cuts.k()) return false;
        for (double z : t.adjacent_z)
            if (!std::isfinite(z) || !(std::abs(z) > critical)) return false;
    }
    return true;
}

CategorizedModel fit_categorized(const Dataset& data, const ModelSpec& spec,
                                 const std::vector<CutVector>& cuts, const SelectOptions& options) {
    spec.validate();
    CategorizedModel model;
    for (const auto& target : spec.categorize_targets) model.cuts.push_back(cuts_for(cuts, target));

    const ModelSpec refit_spec = categorized_spec(spec, model.cuts);
    model.fit = fit_gam(data, refit_spec, options.gam);
    model.n_obs = data.rows();
    model.converged = model.fit.converged;
    model.phi = effective_dimension(model.fit);
    model.log_likelihood = model.fit.log_likelihood;

    for (const auto& c : model.cuts) {
        CategoryEffects eff;
        eff.covariate = c.covariate;
        eff.cuts = c;
        if (c.k() > 0) {
            const auto it = std::find_if(model.fit.blocks.begin(), model.fit.blocks.end(),
                                         [&](const TermBlock& b) { return b.column == c.covariate; });
            const TermBlock& b = *it;
            eff.coefficients = model.fit.coefficients.segment(b.first, b.size);
            eff.covariance = model.fit.covariance.block(b.first, b.first, b.size, b.size);
            const auto k = static_cast<Eigen::Index>(c.k());
            for (Eigen::Index s = 0; s < k; ++s) {
                // categories s and s+1; coefficient index s-1 and s, reference fixed at 0
                const double upper = eff.coefficients[s];
                const double lower = s == 0 ? 0.0 : eff.coefficients[s - 1];
                double var = eff.covariance(s, s);
                if (s > 0) var += eff.covariance(s - 1, s - 1) - 2.0 * eff.covariance(s - 1, s);
                const double z = var > 0.0 ? (upper - lower) / std::sqrt(var)
                                           : std::numeric_limits<double>::quiet_NaN();
                eff.adjacent_z.push_back(z);
            }
        }
        model.targets.push_back(std::move(eff));
    }

    model.bic = bic(model);
    model.pseudo_bic = pseudo_bic(model);
    const bool significant = adjacent_significance(model, options.alpha);
    model.admissible = model.converged && significant;
    if (!model.converged) {
        model.reason = "refit did not converge";
    } else if (!significant) {
        model.reason = "adjacent categories not significantly different";
    }
    return model;
}

std::vector<CutResult> estimate_cuts(const Dataset& data, const FittedGAM& gam,
                                     const std::vector<std::string>& targets,
                                     const std::vector<std::size_t>& k, const CutOptions& options) {
    if (targets.size() != k.size())
        throw Error(ErrorCode::DimensionMismatch, "one k per target required");
    std::vector<CutResult> out;
    for (std::size_t j = 0; j < targets.size(); ++j) {
        const SmoothTerm& st = gam.smooth(targets[j]);
        CutResult r = find_cuts(st.fhat, st.se, data.column(targets[j]), k[j], options);
        r.cuts.covariate = targets[j];
        out.push_back(std::move(r));
    }
    return out;
}

SelectionResult select_num_cuts(const Dataset& data, const ModelSpec& spec,
                                const std::vector<std::size_t>& k_max,
                                const SelectOptions& options) {
    spec.validate();
    check_alpha(options.alpha);
    return select_num_cuts(data, spec, fit_gam(data, spec, options.gam), k_max, options);
}

SelectionResult select_num_cuts(const Dataset& data, const ModelSpec& spec, FittedGAM gam,
                                const std::vector<std::size_t>& k_max,
                                const SelectOptions& options) {
    spec.validate();
    const auto& targets = spec.categorize_targets;
    if (targets.empty()) throw Error(ErrorCode::InvalidArgument, "no categorize targets given");
    if (k_max.size() != targets.size())
        throw Error(ErrorCode::DimensionMismatch, "one k_max per target required");
    for (std::size_t km : k_max)
        if (km < 1) throw Error(ErrorCode::InvalidArgument, "k_max must be >= 1");
    check_alpha(options.alpha);

    SelectionResult result;
    result.targets = targets;
    result.gam = std::move(gam);

    // Cut searches depend only on (target, k): run each once.
    const std::size_t T = targets.size();
    result.searches.resize(T);
    std::vector<std::vector<std::string>> search_errors(T);
    for (std::size_t j = 0; j < T; ++j) {
        const SmoothTerm& st = result.gam.smooth(targets[j]);
        const auto x = data.column(targets[j]);
        result.searches[j].resize(k_max[j]);
        search_errors[j].resize(k_max[j]);
        for (std::size_t k = 1; k <= k_max[j]; ++k) {
            try {
                CutResult r = find_cuts(st.fhat, st.se, x, k, options.cut);
                r.cuts.covariate = targets[j];
                result.searches[j][k - 1] = std::move(r);
            } catch (const Error& e) {
                search_errors[j][k - 1] = e.what();
            }
        }
    }

    std::vector<std::vector<std::size_t>> grid{{}};
    for (std::size_t j = 0; j < T; ++j) {
        std::vector<std::vector<std::size_t>> next;
        for (const auto& prefix : grid)
            for (std::size_t k = 1; k <= k_max[j]; ++k) {
                auto row = prefix;
                row.push_back(k);
                next.push_back(std::move(row));
            }
        grid = std::move(next);
    }

    result.candidates.resize(grid.size());
    parallel_for(grid.size(), options.threads, [&](std::size_t idx) {
        Candidate& cand = result.candidates[idx];
        cand.nc = grid[idx];
        for (std::size_t j = 0; j < T; ++j) {
            const std::string& err = search_errors[j][cand.nc[j] - 1];
            if (!err.empty()) {
                cand.reason = "cut search failed: " + err;
                return;
            }
            cand.cuts.push_back(result.searches[j][cand.nc[j] - 1].cuts);
        }
        try {
            const CategorizedModel m = fit_categorized(data, spec, cand.cuts, options);
            cand.bic = m.bic;
            cand.pseudo_bic = m.pseudo_bic;
            cand.log_likelihood = m.log_likelihood;
            cand.phi = m.phi;
            cand.admissible = m.admissible;
            cand.reason = m.reason;
        } catch (const Error& e) {
            cand.reason = std::string("refit failed: ") + e.what();
        }
    });

    try {
        std::vector<CutVector> none;
        for (const auto& t : targets) none.push_back(CutVector{t, {}});
        const CategorizedModel m = fit_categorized(data, spec, none, options);
        Candidate base;
        base.nc.assign(T, 0);
        base.cuts = none;
        base.bic = m.bic;
        base.pseudo_bic = m.pseudo_bic;
        base.log_likelihood = m.log_likelihood;
        base.phi = m.phi;
        base.admissible = m.converged;
        result.baseline = std::move(base);
    } catch (const Error& e) {
        result.trace.push_back(std::string("baseline (k = 0) refit failed: ") + e.what());
    }

    auto total = [](const std::vector<std::size_t>& nc) {
        std::size_t t = 0;
        for (auto k : nc) t += k;
        return t;
    };
    for (std::size_t idx = 0; idx < result.candidates.size(); ++idx) {
        const Candidate& c = result.candidates[idx];
        std::ostringstream line;
        line << "nc=" << describe(c.nc);
        if (c.admissible) {
            line.precision(10);
            line << " pseudo_bic=" << c.pseudo_bic;
        } else {
            line << " inadmissible: " << c.reason;
        }
        result.trace.push_back(line.str());
        if (!c.admissible) continue;
        if (!result.selected) {
            result.selected = idx;
            continue;
        }
        const Candidate& best = result.candidates[*result.selected];
        const bool better =
            c.pseudo_bic < best.pseudo_bic ||
            (c.pseudo_bic == best.pseudo_bic &&
             (total(c.nc) < total(best.nc) || (total(c.nc) == total(best.nc) && c.nc < best.nc)));
        if (better) result.selected = idx;
    }
    if (result.selected) {
        result.nc = result.candidates[*result.selected].nc;
        result.cuts = result.candidates[*result.selected].cuts;
        result.trace.push_back("selected nc=" + describe(result.nc));
    } else {
        result.trace.push_back("no admissible categorization");
    }
    return result;
}

}  // namespace cutgam

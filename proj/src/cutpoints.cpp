#include "cutgam/cutpoints.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "cutgam/error.hpp"

namespace cutgam {

std::size_t default_min_bin(std::size_t n) {
    const auto pct = static_cast<std::size_t>(std::ceil(0.01 * static_cast<double>(n)));
    return std::max<std::size_t>(5, pct);
}

std::size_t category_of(double x, std::span<const double> cuts) {
    return static_cast<std::size_t>(std::lower_bound(cuts.begin(), cuts.end(), x) - cuts.begin());
}

namespace {

void check_lengths(std::size_t a, std::size_t b, const char* what) {
    if (a != b) throw Error(ErrorCode::DimensionMismatch, std::string(what) + ": length mismatch");
}

void check_increasing(const CutVector& cuts) {
    for (std::size_t s = 1; s < cuts.cuts.size(); ++s)
        if (!(cuts.cuts[s - 1] < cuts.cuts[s]))
            throw Error(ErrorCode::InvalidArgument, "cut points must be strictly increasing");
}

}  // namespace

PiecewiseSummary piecewise_means(std::span<const double> fhat, std::span<const double> x,
                                 const CutVector& cuts, std::span<const double> sigma) {
    check_lengths(fhat.size(), x.size(), "piecewise_means");
    if (!sigma.empty()) check_lengths(sigma.size(), x.size(), "piecewise_means");
    check_increasing(cuts);
    const std::size_t ncat = cuts.k() + 1;
    PiecewiseSummary out;
    out.means.assign(ncat, 0.0);
    out.counts.assign(ncat, 0);
    std::vector<std::size_t> cat(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        cat[i] = category_of(x[i], cuts.cuts);
        out.means[cat[i]] += fhat[i];
        ++out.counts[cat[i]];
    }
    for (std::size_t s = 0; s < ncat; ++s) {
        if (out.counts[s] == 0) {
            throw Error(ErrorCode::EmptyCategory,
                        "empty category " + std::to_string(s) + " for '" + cuts.covariate + "'");
        }
        out.means[s] /= static_cast<double>(out.counts[s]);
    }
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double r = fhat[i] - out.means[cat[i]];
        out.wmse += sigma.empty() ? r * r : r * r / (sigma[i] * sigma[i]);
    }
    return out;
}

double wmse(std::span<const double> fhat, std::span<const double> sigma, std::span<const double> x,
            const CutVector& cuts) {
    check_lengths(sigma.size(), x.size(), "wmse");
    for (double s : sigma)
        if (!(s > 0.0)) throw Error(ErrorCode::InvalidArgument, "wmse requires sigma > 0");
    return piecewise_means(fhat, x, cuts, sigma).wmse;
}

namespace {

// Observations sorted by x with prefix sums, so the WMSE contribution of any
// run of consecutive sorted observations costs O(1). A cut is identified by
// the index g of the distinct value it follows: it sits at the midpoint of
// distinct values g and g+1 and leaves split(g) observations at or below it.
class CutSearch {
public:
    CutSearch(std::span<const double> fhat, std::span<const double> sigma,
              std::span<const double> x, std::size_t min_bin)
        : n_(x.size()), min_bin_(min_bin) {
        std::vector<std::size_t> order(n_);
        std::iota(order.begin(), order.end(), 0);
        const bool weighted = !sigma.empty();
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            if (x[a] != x[b]) return x[a] < x[b];
            if (fhat[a] != fhat[b]) return fhat[a] < fhat[b];
            return weighted && sigma[a] < sigma[b];
        });
        // WMSE is invariant to shifting fhat; centering limits cancellation.
        double centre = 0.0;
        for (std::size_t i : order) centre += fhat[i];
        centre /= static_cast<double>(n_);

        sum_f_.assign(n_ + 1, 0.0);
        sum_w_.assign(n_ + 1, 0.0);
        sum_wf_.assign(n_ + 1, 0.0);
        sum_wff_.assign(n_ + 1, 0.0);
        for (std::size_t r = 0; r < n_; ++r) {
            const std::size_t i = order[r];
            const double f = fhat[i] - centre;
            const double w = weighted ? 1.0 / (sigma[i] * sigma[i]) : 1.0;
            sum_f_[r + 1] = sum_f_[r] + f;
            sum_w_[r + 1] = sum_w_[r] + w;
            sum_wf_[r + 1] = sum_wf_[r] + w * f;
            sum_wff_[r + 1] = sum_wff_[r] + w * f * f;
            if (r == 0 || x[i] != values_.back()) {
                if (r > 0) split_.push_back(r);
                values_.push_back(x[i]);
            }
        }
    }

    [[nodiscard]] std::size_t num_candidates() const { return split_.size(); }
    [[nodiscard]] std::size_t split(std::size_t g) const { return split_[g]; }
    [[nodiscard]] double cut_value(std::size_t g) const { return 0.5 * (values_[g] + values_[g + 1]); }
    [[nodiscard]] std::size_t n() const { return n_; }
    [[nodiscard]] std::size_t min_bin() const { return min_bin_; }

    // Candidate equivalent to a cut at value c: the largest g whose lower
    // distinct value is <= c. Returns false when c leaves an end empty.
    bool snap(double c, std::size_t& g) const {
        const auto it = std::upper_bound(values_.begin(), values_.end(), c);
        if (it == values_.begin() || it == values_.end()) return false;
        g = static_cast<std::size_t>(it - values_.begin()) - 1;
        return true;
    }

    [[nodiscard]] double segment(std::size_t a, std::size_t b) const {
        const double cnt = static_cast<double>(b - a);
        const double mean = (sum_f_[b] - sum_f_[a]) / cnt;
        const double v = (sum_wff_[b] - sum_wff_[a]) - 2.0 * mean * (sum_wf_[b] - sum_wf_[a]) +
                         mean * mean * (sum_w_[b] - sum_w_[a]);
        return std::max(v, 0.0);
    }

    [[nodiscard]] double total(std::span<const std::size_t> g) const {
        double sum = 0.0;
        std::size_t start = 0;
        for (std::size_t c : g) {
            sum += segment(start, split_[c]);
            start = split_[c];
        }
        return sum + segment(start, n_);
    }

    [[nodiscard]] bool feasible(std::span<const std::size_t> g) const {
        std::size_t start = 0;
        for (std::size_t s = 0; s < g.size(); ++s) {
            if (s > 0 && g[s] <= g[s - 1]) return false;
            if (split_[g[s]] - start < min_bin_) return false;
            start = split_[g[s]];
        }
        return n_ - start >= min_bin_;
    }

    // Optimal partition into g.size() + 1 categories. Partial sums are
    // accumulated left to right like total(), so the optimum compares
    // bitwise with descent values; ties keep the smallest candidate.
    double best_partition(std::vector<std::size_t>& g) const {
        const std::size_t k = g.size();
        const std::size_t c = split_.size();
        constexpr double inf = std::numeric_limits<double>::infinity();
        std::vector<std::vector<double>> cost(k, std::vector<double>(c, inf));
        std::vector<std::vector<std::size_t>> from(k, std::vector<std::size_t>(c, 0));
        for (std::size_t j = 0; j < c; ++j)
            if (split_[j] >= min_bin_) cost[0][j] = segment(0, split_[j]);
        for (std::size_t r = 1; r < k; ++r) {
            for (std::size_t j = 0; j < c; ++j) {
                for (std::size_t i = 0; i < j; ++i) {
                    if (split_[j] - split_[i] < min_bin_) break;
                    if (cost[r - 1][i] == inf) continue;
                    const double v = cost[r - 1][i] + segment(split_[i], split_[j]);
                    if (v < cost[r][j]) {
                        cost[r][j] = v;
                        from[r][j] = i;
                    }
                }
            }
        }
        double best = inf;
        std::size_t last = 0;
        for (std::size_t j = 0; j < c; ++j) {
            if (n_ - split_[j] < min_bin_ || cost[k - 1][j] == inf) continue;
            const double v = cost[k - 1][j] + segment(split_[j], n_);
            if (v < best) {
                best = v;
                last = j;
            }
        }
        if (best == inf) return best;
        g[k - 1] = last;
        for (std::size_t r = k - 1; r > 0; --r) g[r - 1] = from[r][g[r]];
        return best;
    }

private:
    std::size_t n_;
    std::size_t min_bin_;
    std::vector<double> values_;
    std::vector<std::size_t> split_;
    std::vector<double> sum_f_, sum_w_, sum_wf_, sum_wff_;
};

double quantile_type7(const std::vector<double>& sorted, double p) {
    const double h = (static_cast<double>(sorted.size()) - 1.0) * p;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

[[noreturn]] void infeasible(std::size_t k, std::size_t n, std::size_t min_bin) {
    std::ostringstream msg;
    msg << "cannot form " << k + 1 << " categories of at least " << min_bin << " observations from "
        << n << " values";
    throw Error(ErrorCode::InfeasibleCuts, msg.str());
}

// Pushes candidate indices forward, then backward, until every category
// holds min_bin observations. Returns false when no arrangement exists.
bool repair(const CutSearch& search, std::vector<std::size_t>& g) {
    const std::size_t m = search.min_bin();
    const std::size_t count = search.num_candidates();
    std::size_t start = 0;
    for (std::size_t s = 0; s < g.size(); ++s) {
        std::size_t c = g[s];
        if (s > 0) c = std::max(c, g[s - 1] + 1);
        while (c < count && search.split(c) - start < m) ++c;
        if (c >= count) return false;
        g[s] = c;
        start = search.split(c);
    }
    std::size_t end = search.n();
    for (std::size_t s = g.size(); s-- > 0;) {
        std::size_t c = g[s];
        if (s + 1 < g.size()) c = std::min(c, g[s + 1] - 1);
        while (end - search.split(c) < m) {
            if (c == 0) return false;
            --c;
        }
        g[s] = c;
        end = search.split(c);
    }
    return search.feasible(g);
}

}  // namespace

CutVector initialize_cuts(std::span<const double> x, std::size_t k, const CutOptions& options) {
    if (k == 0) throw Error(ErrorCode::InvalidArgument, "initialize_cuts requires k >= 1");
    if (x.empty()) throw Error(ErrorCode::InvalidArgument, "initialize_cuts: empty sample");
    const std::size_t m = options.min_bin.value_or(default_min_bin(x.size()));
    if ((k + 1) * m > x.size()) infeasible(k, x.size(), m);

    std::vector<double> sorted(x.begin(), x.end());
    std::sort(sorted.begin(), sorted.end());
    CutVector out;
    for (std::size_t i = 1; i <= k; ++i)
        out.cuts.push_back(quantile_type7(sorted, static_cast<double>(i) / static_cast<double>(k + 1)));

    const CutSearch search(std::span<const double>(sorted), {}, sorted, m);
    std::vector<std::size_t> g(k);
    bool snapped = search.num_candidates() >= k;
    for (std::size_t s = 0; s < k && snapped; ++s) snapped = search.snap(out.cuts[s], g[s]);
    if (snapped && search.feasible(g)) return out;

    if (search.num_candidates() < k) infeasible(k, x.size(), m);
    if (!snapped) {
        // A quantile at the sample maximum leaves the last category empty.
        for (std::size_t s = 0; s < k; ++s)
            if (!search.snap(out.cuts[s], g[s])) g[s] = search.num_candidates() - 1;
    }
    if (!repair(search, g)) infeasible(k, x.size(), m);
    for (std::size_t s = 0; s < k; ++s) out.cuts[s] = search.cut_value(g[s]);
    return out;
}

// Cyclic coordinate descent on candidate indices; appends to result.trace.
void descend(const CutSearch& search, std::vector<std::size_t>& g, double& current, int max_cycles,
             CutResult& result) {
    const std::size_t k = g.size();
    const std::size_t m = search.min_bin();
    result.converged = false;
    for (int cycle = 1; cycle <= max_cycles && k > 0; ++cycle) {
        ++result.cycles;
        bool changed = false;
        for (std::size_t r = 0; r < k; ++r) {
            const std::size_t left_split = r == 0 ? 0 : search.split(g[r - 1]);
            const std::size_t right_split = r + 1 == k ? search.n() : search.split(g[r + 1]);
            const std::size_t lo = r == 0 ? 0 : g[r - 1] + 1;
            const std::size_t hi = r + 1 == k ? search.num_candidates() : g[r + 1];
            std::size_t best = g[r];
            double best_value = current;
            std::vector<std::size_t> trial = g;
            for (std::size_t c = lo; c < hi; ++c) {
                const std::size_t sp = search.split(c);
                if (sp - left_split < m) continue;
                if (right_split - sp < m) break;
                trial[r] = c;
                const double v = search.total(trial);
                if (v < best_value || (v == best_value && c < best)) {
                    best_value = v;
                    best = c;
                }
            }
            if (best_value > current) ++result.increases;
            if (best != g[r]) changed = true;
            g[r] = best;
            current = best_value;
            result.trace.push_back(current);
        }
        if (!changed) {
            result.converged = true;
            return;
        }
    }
}

CutResult optimize_cuts(std::span<const double> fhat, std::span<const double> sigma,
                        std::span<const double> x, std::size_t k, const CutVector& init,
                        const CutOptions& options) {
    check_lengths(fhat.size(), x.size(), "optimize_cuts");
    check_lengths(sigma.size(), x.size(), "optimize_cuts");
    for (double s : sigma)
        if (!(s > 0.0)) throw Error(ErrorCode::InvalidArgument, "optimize_cuts requires sigma > 0");
    if (init.k() != k) throw Error(ErrorCode::DimensionMismatch, "initial cut vector has wrong length");
    check_increasing(init);

    const std::size_t m = options.min_bin.value_or(default_min_bin(x.size()));
    if ((k + 1) * m > x.size()) infeasible(k, x.size(), m);
    const CutSearch search(fhat, sigma, x, m);

    CutResult result;
    result.cuts.covariate = init.covariate;
    std::vector<std::size_t> g(k);
    for (std::size_t s = 0; s < k; ++s)
        if (!search.snap(init.cuts[s], g[s]))
            throw Error(ErrorCode::InfeasibleCuts, "initial cut leaves an empty category");
    if (!search.feasible(g))
        throw Error(ErrorCode::InfeasibleCuts, "initial cuts violate the minimum category size");

    double current = search.total(g);
    result.initial_wmse = current;
    descend(search, g, current, options.max_cycles, result);
    result.local_wmse = current;
    if (options.global_restart && k > 0) {
        std::vector<std::size_t> opt(k);
        const double best = search.best_partition(opt);
        if (best < current) {
            result.restarted = true;
            result.warnings.push_back("descent from the initial cuts stopped at a local minimum; "
                                      "resumed from the optimal partition");
            g = opt;
            current = search.total(g);
            result.trace.push_back(current);
            descend(search, g, current, options.max_cycles, result);
        }
    }
    if (k == 0) result.converged = true;
    if (!result.converged)
        result.warnings.push_back("coordinate descent stopped after max_cycles without convergence");

    for (std::size_t s = 0; s < k; ++s) result.cuts.cuts.push_back(search.cut_value(g[s]));
    result.wmse = current;
    return result;
}

CutResult find_cuts(std::span<const double> fhat, std::span<const double> sigma,
                    std::span<const double> x, std::size_t k, const CutOptions& options) {
    if (k == 0) {
        CutResult r;
        r.converged = true;
        const CutVector none;
        r.wmse = r.initial_wmse = wmse(fhat, sigma, x, none);
        return r;
    }
    CutVector init = initialize_cuts(x, k, options);
    return optimize_cuts(fhat, sigma, x, k, init, options);
}

}  // namespace cutgam

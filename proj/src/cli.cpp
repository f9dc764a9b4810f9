#include "cutgam/cli.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "cutgam/cutpoints.hpp"
#include "cutgam/dataset.hpp"
#include "cutgam/error.hpp"
#include "cutgam/gam.hpp"
#include "cutgam/model_select.hpp"
#include "cutgam/simulation.hpp"

#ifndef CUTGAM_VERSION
#define CUTGAM_VERSION "dev"
#endif

namespace cutgam::cli {

using nlohmann::json;

int verbosity() {
    const char* v = std::getenv("CUTGAM_VERBOSITY");
    if (v == nullptr || *v == '\0') return 1;
    int level = 1;
    std::from_chars(v, v + std::char_traits<char>::length(v), level);
    return level;
}

namespace {

const std::vector<std::string> kCommands = {"fit", "categorize", "select", "simulate", "report"};

void log_progress(const std::string& msg) {
    if (verbosity() >= 1) std::cerr << "cutgam: " << msg << '\n';
}

TargetSpec parse_target(const std::string& text) {
    TargetSpec t;
    const auto colon = text.rfind(':');
    if (colon == std::string::npos) {
        t.column = text;
        return t;
    }
    t.column = text.substr(0, colon);
    const std::string k = text.substr(colon + 1);
    std::size_t value = 0;
    const auto [ptr, ec] = std::from_chars(k.data(), k.data() + k.size(), value);
    if (ec != std::errc() || ptr != k.data() + k.size() || value < 1)
        throw Error(ErrorCode::InvalidArgument, "bad target specification '" + text + "'");
    t.k_max = value;
    return t;
}

std::string target_text(const TargetSpec& t) {
    return t.k_max ? t.column + ":" + std::to_string(*t.k_max) : t.column;
}

}  // namespace

void RunConfig::validate() const {
    if (std::find(kCommands.begin(), kCommands.end(), command) == kCommands.end())
        throw Error(ErrorCode::InvalidArgument, "unknown command '" + command + "'");
    if (!(alpha > 0.0 && alpha < 1.0)) throw Error(ErrorCode::InvalidArgument, "alpha must lie in (0, 1)");
    if (k_max < 1) throw Error(ErrorCode::InvalidArgument, "k_max must be >= 1");
    for (const auto& t : targets)
        if (t.k_max && *t.k_max < 1) throw Error(ErrorCode::InvalidArgument, "k_max must be >= 1");
    if (delimiter != ',' && delimiter != '\t' && delimiter != ';')
        throw Error(ErrorCode::InvalidArgument, "delimiter must be comma, tab or semicolon");
    const bool needs_input = command != "simulate";
    if (needs_input && !input) throw Error(ErrorCode::InvalidArgument, command + " requires --input");
    if (needs_input && command != "report" && !std::filesystem::exists(*input))
        throw Error(ErrorCode::Io, "input file '" + input->string() + "' not found");
    if ((command == "categorize" || command == "select") && targets.empty())
        throw Error(ErrorCode::InvalidArgument, command + " requires at least one --target");
    if (command == "categorize" && !k) {
        for (const auto& t : targets)
            if (!t.k_max)
                throw Error(ErrorCode::InvalidArgument,
                            "categorize requires --k or a per-target count (--target col:k)");
    }
    if (command == "simulate") {
        if (replicates < 1) throw Error(ErrorCode::InvalidArgument, "--R must be >= 1");
        if (n < 1) throw Error(ErrorCode::InvalidArgument, "--n must be >= 1");
        (void)ScenarioSpec::from_id(scenario);
        (void)kmode_from_string(k_mode);
    }
}

json to_json(const RunConfig& c) {
    json j;
    j["command"] = c.command;
    j["input"] = c.input ? json(c.input->generic_string()) : json(nullptr);
    j["response"] = c.response;
    j["family"] = c.family;
    j["offset"] = c.offset ? json(*c.offset) : json(nullptr);
    json targets = json::array();
    for (const auto& t : c.targets) targets.push_back(target_text(t));
    j["targets"] = targets;
    j["smooth"] = c.smooth;
    j["linear"] = c.linear;
    j["categorical"] = c.categorical;
    j["k"] = c.k ? json(*c.k) : json(nullptr);
    j["k_max"] = c.k_max;
    j["alpha"] = c.alpha;
    j["seed"] = c.seed;
    j["out"] = c.out.generic_string();
    j["scenario"] = c.scenario;
    j["n"] = c.n;
    j["R"] = c.replicates;
    j["k_mode"] = c.k_mode;
    j["threads"] = c.threads;
    j["delimiter"] = std::string(1, c.delimiter);
    j["knots"] = c.knots;
    j["degree"] = c.degree;
    j["penalty_order"] = c.penalty_order;
    j["export"] = c.export_data ? json(c.export_data->generic_string()) : json(nullptr);
    return j;
}

void apply_json(RunConfig& c, const json& doc) {
    if (!doc.is_object()) throw Error(ErrorCode::InvalidArgument, "config document must be an object");
    try {
        for (const auto& [key, v] : doc.items()) {
            if (v.is_null()) continue;
            if (key == "command") c.command = v.get<std::string>();
            else if (key == "input") c.input = v.get<std::string>();
            else if (key == "response") c.response = v.get<std::string>();
            else if (key == "family") c.family = v.get<std::string>();
            else if (key == "offset") c.offset = v.get<std::string>();
            else if (key == "targets" || key == "target") {
                c.targets.clear();
                for (const auto& t : v) c.targets.push_back(parse_target(t.get<std::string>()));
            } else if (key == "smooth") c.smooth = v.get<std::vector<std::string>>();
            else if (key == "linear") c.linear = v.get<std::vector<std::string>>();
            else if (key == "categorical") c.categorical = v.get<std::vector<std::string>>();
            else if (key == "k") c.k = v.get<std::size_t>();
            else if (key == "k_max") c.k_max = v.get<std::size_t>();
            else if (key == "alpha") c.alpha = v.get<double>();
            else if (key == "seed") c.seed = v.get<std::uint64_t>();
            else if (key == "out") c.out = v.get<std::string>();
            else if (key == "scenario") c.scenario = v.get<std::string>();
            else if (key == "n") c.n = v.get<std::size_t>();
            else if (key == "R") c.replicates = v.get<std::size_t>();
            else if (key == "k_mode") c.k_mode = v.get<std::string>();
            else if (key == "threads") c.threads = v.get<unsigned>();
            else if (key == "delimiter") {
                const auto d = v.get<std::string>();
                c.delimiter = d == "tab" || d == "\t" ? '\t' : (d.empty() ? ',' : d[0]);
            } else if (key == "knots") c.knots = v.get<int>();
            else if (key == "degree") c.degree = v.get<int>();
            else if (key == "penalty_order") c.penalty_order = v.get<int>();
            else if (key == "export") c.export_data = v.get<std::string>();
            else throw Error(ErrorCode::InvalidArgument, "unknown config key '" + key + "'");
        }
    } catch (const json::exception& e) {
        throw Error(ErrorCode::InvalidArgument, std::string("bad config value: ") + e.what());
    }
}

RunConfig parse_command_line(const std::vector<std::string>& args, std::string* help) {
    CLI::App app{"Optimal cut-off points for continuous predictors from P-spline GAM smooths",
                 "cutgam"};
    app.require_subcommand(0, 1);
    RunConfig defaults;
    std::string command, config_file, input, response, family, offset, out, scenario, k_mode,
        delimiter, export_path;
    std::vector<std::string> targets, smooth, linear, categorical;
    std::size_t k = 0, k_max = 0, n = 0, replicates = 0;
    double alpha = 0.0;
    std::uint64_t seed = 0;
    unsigned threads = 0;
    int knots = 0, degree = 0, penalty_order = 0;

    app.add_option("command", command, "fit | categorize | select | simulate | report");
    auto* o_config = app.add_option("--config", config_file, "JSON configuration file");
    auto* o_input = app.add_option("--input", input, "delimited text input (or report.json for `report`)");
    auto* o_response = app.add_option("--response", response, "response column");
    auto* o_family = app.add_option("--family", family, "gaussian | binomial | poisson")
                         ->check(CLI::IsMember({"gaussian", "binomial", "poisson"}));
    auto* o_offset = app.add_option("--offset", offset, "offset column (link scale)");
    auto* o_target = app.add_option("--target", targets, "covariate to categorize, optionally col:kmax");
    auto* o_smooth = app.add_option("--smooth", smooth, "adjusting smooth term");
    auto* o_linear = app.add_option("--linear", linear, "adjusting linear term");
    auto* o_cat = app.add_option("--categorical", categorical, "adjusting categorical term");
    auto* o_k = app.add_option("--k", k, "number of cut-off points (categorize)");
    auto* o_kmax = app.add_option("--k-max", k_max, "default maximum number of cut-off points (select)");
    auto* o_alpha = app.add_option("--alpha", alpha, "significance level of the adjacent-category gate");
    auto* o_seed = app.add_option("--seed", seed, "random seed");
    auto* o_out = app.add_option("--out", out, "output directory");
    auto* o_scenario = app.add_option("--scenario", scenario, "S1 | S2 | S3 | S4 | P1");
    auto* o_n = app.add_option("--n", n, "sample size per replicate");
    auto* o_R = app.add_option("--R", replicates, "number of replicates");
    auto* o_kmode = app.add_option("--k-mode", k_mode, "selected | fixed-at-truth");
    auto* o_threads = app.add_option("--threads", threads, "worker threads (0 = all cores)");
    auto* o_delim = app.add_option("--delimiter", delimiter, "comma | tab | semicolon");
    auto* o_knots = app.add_option("--knots", knots, "interior knots per smooth");
    auto* o_degree = app.add_option("--degree", degree, "spline degree");
    auto* o_porder = app.add_option("--penalty-order", penalty_order, "difference penalty order");
    auto* o_export = app.add_option("--export", export_path, "simulate: write the seed's dataset as CSV");

    std::vector<std::string> argv_rev(args.rbegin(), args.rend());
    try {
        app.parse(argv_rev);
    } catch (const CLI::CallForHelp&) {
        if (help) *help = app.help();
        RunConfig c;
        c.command = "help";
        return c;
    } catch (const CLI::ParseError& e) {
        throw Error(ErrorCode::InvalidArgument, e.what());
    }

    RunConfig c = defaults;
    if (o_config->count()) {
        std::ifstream in(config_file);
        if (!in) throw Error(ErrorCode::Io, "cannot open config file '" + config_file + "'");
        json doc;
        try {
            in >> doc;
        } catch (const json::exception& e) {
            throw Error(ErrorCode::ParseError, std::string("config file: ") + e.what());
        }
        apply_json(c, doc);
    }
    if (!command.empty()) c.command = command;
    if (o_input->count()) c.input = input;
    if (o_response->count()) c.response = response;
    if (o_family->count()) c.family = family;
    if (o_offset->count()) c.offset = offset;
    if (o_target->count()) {
        c.targets.clear();
        for (const auto& t : targets) c.targets.push_back(parse_target(t));
    }
    if (o_smooth->count()) c.smooth = smooth;
    if (o_linear->count()) c.linear = linear;
    if (o_cat->count()) c.categorical = categorical;
    if (o_k->count()) c.k = k;
    if (o_kmax->count()) c.k_max = k_max;
    if (o_alpha->count()) c.alpha = alpha;
    if (o_seed->count()) c.seed = seed;
    if (o_out->count()) c.out = out;
    if (o_scenario->count()) c.scenario = scenario;
    if (o_n->count()) c.n = n;
    if (o_R->count()) c.replicates = replicates;
    if (o_kmode->count()) c.k_mode = k_mode;
    if (o_threads->count()) c.threads = threads;
    if (o_delim->count()) {
        if (delimiter == "comma" || delimiter == ",") c.delimiter = ',';
        else if (delimiter == "tab" || delimiter == "\t") c.delimiter = '\t';
        else if (delimiter == "semicolon" || delimiter == ";") c.delimiter = ';';
        else throw Error(ErrorCode::InvalidArgument, "unknown delimiter '" + delimiter + "'");
    }
    if (o_knots->count()) c.knots = knots;
    if (o_degree->count()) c.degree = degree;
    if (o_porder->count()) c.penalty_order = penalty_order;
    if (o_export->count()) c.export_data = export_path;
    if (c.command.empty()) throw Error(ErrorCode::InvalidArgument, "no command given");
    return c;
}

namespace {

struct Context {
    const RunConfig& config;
    std::vector<std::string> log;
};

BasisSpec basis_of(const RunConfig& c) {
    BasisSpec b;
    b.num_interior_knots = c.knots;
    b.degree = c.degree;
    b.penalty_order = c.penalty_order;
    return b;
}

ModelSpec model_of(const RunConfig& c) {
    ModelSpec m;
    m.response = c.response;
    m.family = Family::from_name(c.family);
    m.offset = c.offset;
    const BasisSpec b = basis_of(c);
    for (const auto& t : c.targets) {
        m.terms.push_back(Term::smooth(t.column, b));
        m.categorize_targets.push_back(t.column);
    }
    for (const auto& s : c.smooth) m.terms.push_back(Term::smooth(s, b));
    for (const auto& l : c.linear) m.terms.push_back(Term::linear(l));
    for (const auto& k : c.categorical) m.terms.push_back(Term::categorical(k));
    m.validate();
    return m;
}

Dataset load(Context& ctx, const ModelSpec& model) {
    IngestHints hints;
    hints.delimiter = ctx.config.delimiter;
    hints.response = model.response;
    hints.family = model.family;
    hints.required.push_back(model.response);
    if (model.offset) hints.required.push_back(*model.offset);
    for (const auto& t : model.terms) hints.required.push_back(t.column);
    IngestResult r = ingest(*ctx.config.input, hints);
    ctx.log.push_back("read " + std::to_string(r.rows_read) + " rows from " +
                      ctx.config.input->generic_string());
    for (auto& l : r.log) ctx.log.push_back(std::move(l));
    log_progress(std::to_string(r.data.rows()) + " complete rows");
    return std::move(r.data);
}

std::string number(double v) {
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    (void)ec;
    return {buf, ptr};
}

json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

class Table {
public:
    explicit Table(std::vector<std::string> header) : header_(std::move(header)) {}
    void add(std::vector<std::string> row) { rows_.push_back(std::move(row)); }
    void write(const std::filesystem::path& path) const {
        std::ofstream out(path, std::ios::binary);
        if (!out) throw Error(ErrorCode::Io, "cannot write '" + path.string() + "'");
        auto line = [&](const std::vector<std::string>& r) {
            for (std::size_t i = 0; i < r.size(); ++i) out << (i ? "," : "") << r[i];
            out << '\n';
        };
        line(header_);
        for (const auto& r : rows_) line(r);
    }

private:
    std::vector<std::string> header_;
    std::vector<std::vector<std::string>> rows_;
};

json gam_json(const FittedGAM& g) {
    json j;
    j["n"] = g.n_obs;
    j["edf"] = g.edf;
    j["effective_dimension"] = effective_dimension(g);
    j["log_likelihood"] = g.log_likelihood;
    j["deviance"] = g.deviance;
    j["dispersion"] = g.dispersion;
    j["intercept"] = g.intercept();
    j["outer_iterations"] = g.outer_iterations;
    j["converged"] = g.converged;
    json smooths = json::array();
    for (const auto& s : g.smooths) {
        smooths.push_back({{"covariate", s.column},
                           {"lambda", s.lambda},
                           {"basis_size", s.basis.constraint.rows()},
                           {"domain", {s.basis.domain.lo, s.basis.domain.hi}}});
    }
    j["smooths"] = smooths;
    json coefs = json::array();
    for (std::size_t b = 0; b < g.blocks.size(); ++b) {
        const auto& blk = g.blocks[b];
        if (blk.role == TermRole::Smooth) continue;
        for (Eigen::Index c = 0; c < blk.size; ++c) {
            const Eigen::Index idx = blk.first + c;
            const double se = std::sqrt(g.covariance(idx, idx));
            coefs.push_back({{"name", blk.names[static_cast<std::size_t>(c)]},
                             {"estimate", g.coefficients[idx]},
                             {"se", se}});
        }
    }
    coefs.insert(coefs.begin(), json{{"name", "(Intercept)"},
                                     {"estimate", g.coefficients[0]},
                                     {"se", std::sqrt(g.covariance(0, 0))}});
    j["coefficients"] = coefs;
    j["warnings"] = g.warnings;
    return j;
}

// Per-point curves sorted by x; fbar is empty when no cuts are given.
void add_curves(Table& table, const Dataset& data, const FittedGAM& gam, const std::string& covariate,
                const CutVector* cuts) {
    const SmoothTerm& s = gam.smooth(covariate);
    const auto x = data.column(covariate);
    std::vector<std::size_t> order(x.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
    std::optional<PiecewiseSummary> summary;
    if (cuts) summary = piecewise_means(s.fhat, x, *cuts, s.se);
    for (std::size_t i : order) {
        std::string fbar;
        if (summary) fbar = number(summary->means[category_of(x[i], cuts->cuts)]);
        table.add({covariate, number(x[i]), number(s.fhat[i]), number(s.se[i]), fbar});
    }
}

json categories_json(const CategorizedModel& m, const Dataset& data, const FittedGAM& gam) {
    json out = json::array();
    for (const auto& t : m.targets) {
        json j;
        j["covariate"] = t.covariate;
        j["k"] = t.cuts.k();
        j["cuts"] = t.cuts.cuts;
        const SmoothTerm& s = gam.smooth(t.covariate);
        const PiecewiseSummary ps = piecewise_means(s.fhat, data.column(t.covariate), t.cuts, s.se);
        j["category_means"] = ps.means;
        j["category_counts"] = ps.counts;
        j["wmse"] = ps.wmse;
        json coefs = json::array();
        for (Eigen::Index c = 0; c < t.coefficients.size(); ++c) {
            const double se = std::sqrt(t.covariance(c, c));
            coefs.push_back({{"category", c + 1},
                             {"estimate", t.coefficients[c]},
                             {"se", se},
                             {"z", t.coefficients[c] / se}});
        }
        j["coefficients"] = coefs;
        json zs = json::array();
        for (double z : t.adjacent_z) zs.push_back(number_or_null(z));
        j["adjacent_z"] = zs;
        out.push_back(j);
    }
    return out;
}

void write_cuts(const std::filesystem::path& path, const std::vector<CutVector>& cuts) {
    Table t({"covariate", "k", "index", "cut"});
    for (const auto& c : cuts)
        for (std::size_t s = 0; s < c.k(); ++s)
            t.add({c.covariate, std::to_string(c.k()), std::to_string(s + 1), number(c.cuts[s])});
    t.write(path);
}

json cmd_fit(Context& ctx) {
    const ModelSpec model = model_of(ctx.config);
    const Dataset data = load(ctx, model);
    const FittedGAM gam = fit_gam(data, model);
    Table curves({"covariate", "x", "fhat", "se", "fbar"});
    for (const auto& s : gam.smooths) add_curves(curves, data, gam, s.column, nullptr);
    curves.write(ctx.config.out / "curves.csv");
    return {{"gam", gam_json(gam)}};
}

json cmd_categorize(Context& ctx) {
    const ModelSpec model = model_of(ctx.config);
    const Dataset data = load(ctx, model);
    const FittedGAM gam = fit_gam(data, model);
    std::vector<std::size_t> ks;
    for (const auto& t : ctx.config.targets) ks.push_back(t.k_max.value_or(ctx.config.k.value_or(1)));
    const auto searches = estimate_cuts(data, gam, model.categorize_targets, ks);
    std::vector<CutVector> cuts;
    json search_json = json::array();
    for (const auto& s : searches) {
        cuts.push_back(s.cuts);
        search_json.push_back({{"covariate", s.cuts.covariate},
                               {"k", s.cuts.k()},
                               {"cuts", s.cuts.cuts},
                               {"wmse", s.wmse},
                               {"initial_wmse", s.initial_wmse},
                               {"cycles", s.cycles},
                               {"converged", s.converged}});
        for (const auto& w : s.warnings) ctx.log.push_back(s.cuts.covariate + ": " + w);
    }
    SelectOptions so;
    so.alpha = ctx.config.alpha;
    const CategorizedModel m = fit_categorized(data, model, cuts, so);
    Table curves({"covariate", "x", "fhat", "se", "fbar"});
    for (const auto& c : cuts) add_curves(curves, data, gam, c.covariate, &c);
    curves.write(ctx.config.out / "curves.csv");
    write_cuts(ctx.config.out / "cuts.csv", cuts);
    json result;
    result["gam"] = gam_json(gam);
    result["cut_search"] = search_json;
    result["categorized"] = {{"targets", categories_json(m, data, gam)},
                             {"phi", m.phi},
                             {"log_likelihood", m.log_likelihood},
                             {"bic", m.bic},
                             {"pseudo_bic", m.pseudo_bic},
                             {"admissible", m.admissible},
                             {"reason", m.reason},
                             {"refit", gam_json(m.fit)}};
    return result;
}

json cmd_select(Context& ctx) {
    const ModelSpec model = model_of(ctx.config);
    const Dataset data = load(ctx, model);
    std::vector<std::size_t> k_max;
    for (const auto& t : ctx.config.targets) k_max.push_back(t.k_max.value_or(ctx.config.k_max));
    SelectOptions so;
    so.alpha = ctx.config.alpha;
    so.threads = ctx.config.threads;
    const SelectionResult sel = select_num_cuts(data, model, k_max, so);

    Table grid({"nc", "total_cuts", "bic", "pseudo_bic", "log_likelihood", "phi", "admissible", "reason"});
    json cands = json::array();
    auto nc_text = [](const std::vector<std::size_t>& nc) {
        std::string s;
        for (std::size_t j = 0; j < nc.size(); ++j) s += (j ? "x" : "") + std::to_string(nc[j]);
        return s;
    };
    for (const auto& c : sel.candidates) {
        std::size_t total = 0;
        for (auto k : c.nc) total += k;
        const bool fitted = c.phi > 0.0;
        grid.add({nc_text(c.nc), std::to_string(total), fitted ? number(c.bic) : "",
                  fitted ? number(c.pseudo_bic) : "", fitted ? number(c.log_likelihood) : "",
                  fitted ? number(c.phi) : "", c.admissible ? "1" : "0", "\"" + c.reason + "\""});
        json cj = {{"nc", c.nc}, {"admissible", c.admissible}, {"reason", c.reason}};
        if (fitted) {
            cj["bic"] = c.bic;
            cj["pseudo_bic"] = c.pseudo_bic;
            cj["log_likelihood"] = c.log_likelihood;
            cj["phi"] = c.phi;
        }
        json cuts = json::array();
        for (const auto& cv : c.cuts) cuts.push_back(cv.cuts);
        cj["cuts"] = cuts;
        cands.push_back(cj);
    }
    grid.write(ctx.config.out / "grid.csv");

    json result;
    result["gam"] = gam_json(sel.gam);
    result["candidates"] = cands;
    result["trace"] = sel.trace;
    if (sel.baseline) {
        result["baseline"] = {{"bic", sel.baseline->bic},
                              {"log_likelihood", sel.baseline->log_likelihood},
                              {"phi", sel.baseline->phi}};
    }
    Table curves({"covariate", "x", "fhat", "se", "fbar"});
    if (sel.has_selection()) {
        result["selection"] = {{"nc", sel.nc}, {"empty", false}};
        SelectOptions refit = so;
        const CategorizedModel m = fit_categorized(data, model, sel.cuts, refit);
        result["selection"]["targets"] = categories_json(m, data, sel.gam);
        result["selection"]["bic"] = m.bic;
        result["selection"]["pseudo_bic"] = m.pseudo_bic;
        for (const auto& c : sel.cuts) add_curves(curves, data, sel.gam, c.covariate, &c);
        write_cuts(ctx.config.out / "cuts.csv", sel.cuts);
    } else {
        result["selection"] = {{"nc", nullptr}, {"empty", true},
                               {"message", "no admissible categorization"}};
        for (const auto& t : model.categorize_targets) add_curves(curves, data, sel.gam, t, nullptr);
        write_cuts(ctx.config.out / "cuts.csv", {});
        ctx.log.push_back("no admissible categorization; the GAM fit is reported instead");
    }
    curves.write(ctx.config.out / "curves.csv");
    return result;
}

json cmd_simulate(Context& ctx) {
    const RunConfig& c = ctx.config;
    const ScenarioSpec spec = ScenarioSpec::from_id(c.scenario);
    if (c.export_data) {
        write_csv(generate_scenario(spec, c.n, c.seed), *c.export_data);
        ctx.log.push_back("exported dataset (seed " + std::to_string(c.seed) + ") to " +
                          c.export_data->generic_string());
    }
    SimulationOptions so;
    so.mode = kmode_from_string(c.k_mode);
    so.k_max = c.k_max;
    so.alpha = c.alpha;
    so.threads = c.threads;
    so.basis = basis_of(c);
    log_progress("running " + std::to_string(c.replicates) + " replicates of " + spec.id);
    const ReplicateReport rep = run_replicates(spec, c.n, c.replicates, c.seed, so);

    std::vector<std::string> header = {"replicate", "seed", "failed", "selected", "nc1", "nc2", "mse",
                                       "coordinate_updates", "wmse_increases"};
    std::size_t max_cuts = 0;
    for (const auto& r : rep.replicates)
        for (const auto& cj : r.cuts) max_cuts = std::max(max_cuts, cj.size());
    max_cuts = std::max<std::size_t>(max_cuts, c.k_max);
    for (std::size_t j = 0; j < 2; ++j)
        for (std::size_t s = 0; s < max_cuts; ++s)
            header.push_back("c" + std::to_string(j + 1) + "_" + std::to_string(s + 1));
    header.push_back("error");
    Table table(header);
    for (const auto& r : rep.replicates) {
        std::vector<std::string> row = {std::to_string(r.index), std::to_string(r.seed), r.failed ? "1" : "0",
                                        r.has_selection ? "1" : "0",
                                        r.nc.size() > 0 ? std::to_string(r.nc[0]) : "",
                                        r.nc.size() > 1 ? std::to_string(r.nc[1]) : "",
                                        r.mse ? number(*r.mse) : "", std::to_string(r.coordinate_updates),
                                        std::to_string(r.wmse_increases)};
        for (std::size_t j = 0; j < 2; ++j)
            for (std::size_t s = 0; s < max_cuts; ++s)
                row.push_back(j < r.cuts.size() && s < r.cuts[j].size() ? number(r.cuts[j][s]) : "");
        row.push_back(r.error.empty() ? "" : "\"" + r.error + "\"");
        table.add(std::move(row));
    }
    table.write(c.out / "replicates.csv");

    json sel = json::array();
    for (const auto& [nc, count] : rep.selection_counts)
        sel.push_back({{"nc", nc}, {"count", count},
                       {"rate", static_cast<double>(count) / static_cast<double>(rep.replicates.size())}});
    json result;
    result["scenario"] = rep.scenario;
    result["n"] = rep.n;
    result["R"] = rep.replicates_requested;
    result["mode"] = std::string(to_string(rep.mode));
    result["true_k"] = rep.true_k;
    result["true_cuts"] = rep.true_cuts;
    result["failures"] = rep.failures;
    result["no_selection"] = rep.no_selection;
    result["mse_count"] = rep.mse_count;
    result["mean_mse"] = rep.mean_mse;
    result["median_mse"] = rep.median_mse;
    result["bias"] = rep.bias;
    result["selection_counts"] = sel;
    result["true_k_rate"] = rep.selection_rate(rep.true_k);
    result["coordinate_updates"] = rep.coordinate_updates;
    result["wmse_increases"] = rep.wmse_increases;
    result["gam_basis"] = {{"knots", c.knots}, {"degree", c.degree}, {"penalty_order", c.penalty_order}};
    result["replicates"] = rep.replicates.size();
    return result;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::Io, "cannot write '" + path.string() + "'");
    out << text;
}

}  // namespace

std::string render_summary(const json& report) {
    std::ostringstream s;
    if (report.contains("error")) {
        s << "error [" << report["error"].value("code", "") << "]: " << report["error"].value("message", "") << '\n';
        return s.str();
    }
    const json& cfg = report.value("config", json::object());
    const std::string cmd = report.value("command", "");
    s << "cutgam " << report.value("version", "") << "  command: " << cmd << '\n';
    if (cfg.contains("input") && !cfg["input"].is_null()) s << "input: " << cfg["input"].get<std::string>() << '\n';
    const json& r = report.value("result", json::object());
    s.precision(6);
    if (r.contains("gam")) {
        const json& g = r["gam"];
        s << "GAM: n=" << g.value("n", 0) << " edf=" << g.value("edf", 0.0)
          << " logLik=" << g.value("log_likelihood", 0.0) << '\n';
        for (const auto& sm : g.value("smooths", json::array()))
            s << "  s(" << sm.value("covariate", "") << ") lambda=" << sm.value("lambda", 0.0) << '\n';
    }
    auto print_targets = [&](const json& targets) {
        for (const auto& t : targets) {
            s << "  " << t.value("covariate", "") << ": cuts";
            for (const auto& c : t["cuts"]) s << ' ' << c.get<double>();
            s << "\n    category means:";
            for (const auto& m : t["category_means"]) s << ' ' << m.get<double>();
            s << "\n    coefficients (vs reference):";
            for (const auto& c : t["coefficients"])
                s << ' ' << c.value("estimate", 0.0) << " (se " << c.value("se", 0.0) << ")";
            s << '\n';
        }
    };
    if (r.contains("categorized")) {
        const json& c = r["categorized"];
        s << "Categorized model: BIC=" << c.value("bic", 0.0) << " pseudo-BIC=" << c.value("pseudo_bic", 0.0)
          << " admissible=" << (c.value("admissible", false) ? "yes" : "no") << '\n';
        print_targets(c["targets"]);
    }
    if (r.contains("candidates")) {
        s << "Candidate grid:\n";
        for (const auto& c : r["candidates"]) {
            s << "  nc=" << c["nc"].dump();
            if (c.contains("pseudo_bic")) s << " pseudo-BIC=" << c["pseudo_bic"].get<double>();
            s << (c.value("admissible", false) ? "" : "  [inadmissible: " + c.value("reason", "") + "]") << '\n';
        }
        const json& sel = r["selection"];
        if (sel.value("empty", true)) {
            s << "Selection: no admissible categorization\n";
        } else {
            s << "Selection: nc=" << sel["nc"].dump() << " pseudo-BIC=" << sel.value("pseudo_bic", 0.0) << '\n';
            print_targets(sel["targets"]);
        }
    }
    if (cmd == "simulate") {
        s << "Scenario " << r.value("scenario", "") << ", n=" << r.value("n", 0) << ", R=" << r.value("R", 0)
          << ", mode " << r.value("mode", "") << '\n';
        s << "  failures=" << r.value("failures", 0) << " no_selection=" << r.value("no_selection", 0) << '\n';
        s << "  mean MSE=" << r.value("mean_mse", 0.0) << " median MSE=" << r.value("median_mse", 0.0)
          << " over " << r.value("mse_count", 0) << " replicates\n";
        s << "  true-k rate=" << r.value("true_k_rate", 0.0) << '\n';
        for (const auto& c : r.value("selection_counts", json::array()))
            s << "  nc=" << c["nc"].dump() << ": " << c.value("count", 0) << '\n';
        s << "  WMSE increases after coordinate updates: " << r.value("wmse_increases", 0) << '\n';
    }
    for (const auto& l : report.value("log", json::array())) s << "log: " << l.get<std::string>() << '\n';
    return s.str();
}

RunOutcome run(const RunConfig& config) {
    RunOutcome outcome;
    Context ctx{config, {}};
    auto fail = [&](std::string_view code, const std::string& message) {
        outcome.exit_code = 1;
        outcome.report = {{"error", {{"code", code}, {"message", message}}}};
        outcome.summary = render_summary(outcome.report);
        std::error_code ec;
        if (std::filesystem::is_directory(config.out, ec))
            std::ofstream(config.out / "error.json", std::ios::binary) << outcome.report.dump(2) << '\n';
    };
    try {
        config.validate();
        if (config.command == "report") {
            std::ifstream in(*config.input);
            if (!in) throw Error(ErrorCode::Io, "cannot open report '" + config.input->string() + "'");
            json doc;
            try {
                in >> doc;
            } catch (const json::exception& e) {
                throw Error(ErrorCode::ParseError, std::string("report document: ") + e.what());
            }
            outcome.report = doc;
            outcome.summary = render_summary(doc);
            return outcome;
        }
        std::filesystem::create_directories(config.out);
        json result;
        if (config.command == "fit") result = cmd_fit(ctx);
        else if (config.command == "categorize") result = cmd_categorize(ctx);
        else if (config.command == "select") result = cmd_select(ctx);
        else result = cmd_simulate(ctx);

        json report;
        report["tool"] = "cutgam";
        report["version"] = CUTGAM_VERSION;
        report["command"] = config.command;
        report["config"] = to_json(config);
        report["log"] = ctx.log;
        report["result"] = result;
        outcome.report = report;
        outcome.summary = render_summary(report);
        write_text(config.out / "report.json", report.dump(2) + "\n");
        write_text(config.out / "summary.txt", outcome.summary);
    } catch (const Error& e) {
        fail(to_string(e.code()), e.what());
    } catch (const std::filesystem::filesystem_error& e) {
        fail("io", e.what());
    }
    return outcome;
}

}  // namespace cutgam::cli

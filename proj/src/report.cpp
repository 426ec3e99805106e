#include "ispw/report.hpp"

#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>

#include "ispw/csv.hpp"

namespace ispw {

using nlohmann::json;

std::string to_string(Command command) {
    switch (command) {
        case Command::Km: return "km";
        case Command::Tian: return "tian";
        case Command::Lasso: return "lasso";
        case Command::CvLasso: return "cv-lasso";
        case Command::AicSearch: return "aic-search";
        case Command::Simulate: return "simulate";
    }
    return "km";
}

Command parse_command(const std::string& text) {
    for (auto c : {Command::Km, Command::Tian, Command::Lasso, Command::CvLasso, Command::AicSearch,
                   Command::Simulate}) {
        if (text == to_string(c)) return c;
    }
    throw Error(ErrorCode::InvalidConfig, "unknown command '" + text + "'");
}

void AnalysisRequest::validate() const {
    if (format != "json" && format != "csv") throw Error(ErrorCode::InvalidConfig, "format must be json or csv");
    if (command == Command::Simulate) {
        if (reps < 1) throw Error(ErrorCode::InvalidConfig, "reps must be >= 1");
        if (scenarios.empty() || sample_sizes.empty()) {
            throw Error(ErrorCode::InvalidConfig, "simulate needs at least one scenario and sample size");
        }
        if (workers < 1) throw Error(ErrorCode::InvalidConfig, "workers must be >= 1");
        lasso.validate();
        return;
    }
    if (input.empty()) throw Error(ErrorCode::InvalidConfig, "--input is required");
    if (!tau || !(*tau > 0.0)) throw Error(ErrorCode::InvalidConfig, "--tau must be given and positive");
    if (command == Command::Lasso || command == Command::CvLasso) lasso.validate();
    if (command == Command::AicSearch && distributions.empty()) {
        throw Error(ErrorCode::InvalidConfig, "no distributions requested");
    }
}

namespace {

json num(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

json lasso_config_json(const LassoConfig& c) {
    return {{"lambda", c.lambda},
            {"link", to_string(c.link)},
            {"penalize_intercept", c.penalize_intercept},
            {"standardize", c.standardize},
            {"loss_scale", to_string(c.loss_scale)},
            {"tol", c.tol},
            {"max_iter", c.max_iter},
            {"cv_folds", c.cv_folds},
            {"lambda_grid", c.lambda_grid},
            {"cv_seed", c.cv_seed}};
}

json aic_json(const AicConvention& a) {
    return {{"scaling", to_string(a.scaling)}, {"count_sigma", a.count_sigma}};
}

json spec_json(const ScenarioSpec& s) {
    return {{"id", s.id},
            {"beta", {s.beta0, s.beta1, s.beta2}},
            {"sigma", s.sigma},
            {"error_kind", to_string(s.error_kind)},
            {"censor_rate_trt0", s.censor_rate_trt0},
            {"censor_rate_trt1", s.censor_rate_trt1},
            {"n", s.n},
            {"tau_quantile", s.tau_quantile},
            {"tau", s.tau ? json(*s.tau) : json(nullptr)},
            {"tau_event_rule", to_string(s.tau_rule)},
            {"seed", s.seed}};
}

std::vector<Method> study_methods(const AnalysisRequest& r) {
    if (!r.methods.empty()) return r.methods;
    if (r.study == StudyKind::Mse) return {Method::Tian, Method::Lasso, Method::Likelihood};
    return {Method::Lasso, Method::Likelihood};
}

}  // namespace

json to_json(const AnalysisRequest& r) {
    json j = {{"command", to_string(r.command)}, {"format", r.format}};
    if (r.command == Command::Simulate) {
        std::vector<std::string> methods;
        for (auto m : study_methods(r)) methods.push_back(to_string(m));
        j["study"] = to_string(r.study);
        j["scenarios"] = r.scenarios;
        j["sample_sizes"] = r.sample_sizes;
        j["reps"] = r.reps;
        j["seed"] = r.seed;
        j["methods"] = methods;
        j["decay_lambda"] = r.decay_lambda;
        j["tau_quantile"] = r.tau_quantile;
        j["tau"] = r.sim_tau ? json(*r.sim_tau) : json(nullptr);
        j["tau_event_rule"] = to_string(r.sim_tau_rule);
        j["lasso"] = lasso_config_json(r.lasso);
        j["aic"] = aic_json(r.aic);
        return j;
    }
    j["input"] = r.input;
    j["tau"] = r.tau ? json(*r.tau) : json(nullptr);
    j["add_intercept"] = r.add_intercept;
    j["tau_event_rule"] = to_string(r.tau_rule);
    j["link"] = to_string(r.link);
    if (r.command == Command::Tian) {
        j["estimator"] = "estimating-equation";
        j["weights"] = "censoring";
    }
    if (r.command == Command::Lasso || r.command == Command::CvLasso) j["lasso"] = lasso_config_json(r.lasso);
    if (r.command == Command::AicSearch) {
        std::vector<std::string> kinds;
        for (auto k : r.distributions) kinds.push_back(to_string(k));
        j["distributions"] = kinds;
        j["subsets"] = r.subsets ? json(*r.subsets) : json(nullptr);
        j["aic"] = aic_json(r.aic);
    }
    return j;
}

json to_json(const AnalysisReport& report) {
    return {{"tool", report.tool},
            {"tool_version", report.tool_version},
            {"command", to_string(report.command)},
            {"config", report.config},
            {"payload", report.payload},
            {"warnings", report.warnings}};
}

AnalysisReport report_from_json(const json& j) {
    AnalysisReport r;
    r.tool = j.at("tool").get<std::string>();
    r.tool_version = j.at("tool_version").get<std::string>();
    r.command = parse_command(j.at("command").get<std::string>());
    r.config = j.at("config");
    r.payload = j.at("payload");
    r.warnings = j.at("warnings").get<std::vector<std::string>>();
    return r;
}

json to_json(const SimResult& result) {
    const auto& c = result.config;
    std::vector<std::string> methods;
    for (auto m : c.methods) methods.push_back(to_string(m));
    json j = {{"study", to_string(c.kind)},
              {"reps", c.reps},
              {"methods", methods},
              {"lasso", lasso_config_json(c.lasso)},
              {"decay_lambda", c.decay_lambda},
              {"aic", aic_json(c.aic)},
              {"flagged", result.flagged}};
    json scenarios = json::array();
    for (const auto& s : result.scenarios) {
        json ms = json::array();
        for (const auto& m : s.methods) {
            json mse = json::object(), se = json::object();
            for (std::size_t p = 0; p < m.parameters.size(); ++p) {
                mse[m.parameters[p]] = num(m.mse[p]);
                se[m.parameters[p]] = num(m.mse_se[p]);
            }
            json entry = {{"method", to_string(m.method)},
                          {"successes", m.successes},
                          {"failures", m.failures},
                          {"mean_error_norm", num(m.mean_error_norm)}};
            if (c.kind == StudyKind::Mse) {
                entry["mse"] = mse;
                entry["mse_se"] = se;
            } else {
                json pct = json::object(), counts = json::object();
                for (int k = 0; k < 4; ++k) {
                    const auto name = to_string(static_cast<Combination>(k));
                    pct[name] = m.selection_pct[k];
                    counts[name] = m.selection_counts[k];
                }
                entry["selection_pct"] = pct;
                entry["selection_counts"] = counts;
            }
            ms.push_back(entry);
        }
        scenarios.push_back({{"spec", spec_json(s.spec)},
                             {"calibration",
                              {{"rate_trt0", s.calibration.rate_trt0},
                               {"rate_trt1", s.calibration.rate_trt1},
                               {"achieved_trt0", s.calibration.achieved_trt0},
                               {"achieved_trt1", s.calibration.achieved_trt1},
                               {"tau", s.calibration.tau}}},
                             {"mean_censored_fraction", s.mean_censored_fraction},
                             {"methods", ms}});
    }
    j["scenarios"] = scenarios;
    return j;
}

// ============================================================================
// Dispatch
// ============================================================================

namespace {

RestrictedDataset load(const AnalysisRequest& r) {
    CsvOptions co;
    co.add_intercept = r.add_intercept;
    const auto data = ingest_csv(r.input, co);
    RestrictOptions ro;
    ro.rule = r.tau_rule;
    ro.covariate_names = data.covariate_names;
    ro.has_intercept = data.has_intercept;
    return restrict(data.records, *r.tau, ro);
}

json coefficients(const LassoFit& fit, const std::vector<std::string>& names) {
    json out = json::array();
    for (Eigen::Index j = 0; j < fit.beta.size(); ++j) {
        out.push_back({{"name", names[static_cast<std::size_t>(j)]},
                       {"estimate", fit.beta(j)},
                       {"selected", fit.beta(j) != 0.0}});
    }
    return out;
}

json lasso_payload(const LassoFit& fit, const RestrictedDataset& ds) {
    return {{"lambda", fit.lambda},
            {"objective", num(fit.objective)},
            {"iterations", fit.iterations},
            {"converged", fit.converged},
            {"coefficients", coefficients(fit, ds.covariate_names())},
            {"selected", selection_pattern(fit, ds.covariate_names())}};
}

json km_payload(const RestrictedDataset& ds) {
    const auto curve = km_estimate(ds);
    json points = json::array();
    for (std::size_t k = 0; k < curve.jump_times.size(); ++k) {
        points.push_back({{"time", curve.jump_times[k]},
                          {"survival", curve.survival[k]},
                          {"at_risk", curve.at_risk[k]},
                          {"deaths", curve.deaths[k]}});
    }
    json step = json::array({json::array({0.0, 1.0})});
    double prev = 1.0;
    for (std::size_t k = 0; k < curve.jump_times.size(); ++k) {
        step.push_back(json::array({curve.jump_times[k], prev}));
        step.push_back(json::array({curve.jump_times[k], curve.survival[k]}));
        prev = curve.survival[k];
    }
    step.push_back(json::array({ds.tau(), prev}));
    json marks = json::array();
    for (const auto& r : ds.records()) {
        if (!r.event) marks.push_back(json::array({r.time, km_eval(curve, r.time)}));
    }
    json weights = json::array();
    bool degenerate = false;
    IspwWeightVector w;
    try {
        w = ispw_weights(ds, curve);
    } catch (const Error& e) {
        if (e.code() != ErrorCode::DegenerateWeight) throw;
        degenerate = true;
    }
    for (std::size_t i = 0; i < ds.n(); ++i) {
        weights.push_back({{"id", ds[i].id},
                           {"time", ds[i].time},
                           {"event", ds[i].event},
                           {"survival", km_eval(curve, ds[i].time)},
                           {"weight", degenerate ? json(nullptr) : json(w.weights[i])}});
    }
    return {{"n", ds.n()},
            {"n_events", ds.n_events()},
            {"n_censored", ds.n_censored()},
            {"tau", ds.tau()},
            {"curve", points},
            {"step", step},
            {"censor_marks", marks},
            {"records", weights},
            {"degenerate_weights", degenerate}};
}

std::vector<std::vector<std::size_t>> subset_indices(const std::vector<std::vector<std::string>>& subsets,
                                                     const std::vector<std::string>& names) {
    std::vector<std::vector<std::size_t>> out;
    for (const auto& s : subsets) {
        std::vector<std::size_t> idx;
        for (const auto& name : s) {
            const auto it = std::find(names.begin(), names.end(), name);
            if (it == names.end()) throw Error(ErrorCode::InvalidConfig, "unknown covariate '" + name + "'");
            idx.push_back(static_cast<std::size_t>(it - names.begin()));
        }
        out.push_back(std::move(idx));
    }
    return out;
}

json aic_payload(const RestrictedDataset& ds, const AnalysisRequest& r, std::vector<std::string>& warnings) {
    std::optional<std::vector<std::vector<std::size_t>>> candidates;
    if (r.subsets) candidates = subset_indices(*r.subsets, ds.covariate_names());
    const auto result = subset_search(ds, ispw_weights(ds), r.distributions, candidates, r.aic);
    json fits = json::array();
    for (const auto& f : result.fits) {
        std::vector<std::string> names;
        for (auto j : f.subset) names.push_back(ds.covariate_names()[j]);
        std::vector<double> beta(f.params.beta.data(), f.params.beta.data() + f.params.beta.size());
        fits.push_back({{"distribution", to_string(f.params.kind)},
                        {"subset", names},
                        {"k", f.k},
                        {"loglik", num(f.loglik)},
                        {"aic", num(f.aic)},
                        {"converged", f.converged},
                        {"iterations", f.iterations},
                        {"beta", beta},
                        {"sigma", num(f.params.sigma)},
                        {"sigma2", num(f.params.sigma * f.params.sigma)},
                        {"message", f.message}});
        if (!f.converged) {
            std::string s;
            for (std::size_t i = 0; i < names.size(); ++i) s += (i ? "+" : "") + names[i];
            warnings.push_back(to_string(f.params.kind) + " {" + s + "} did not converge: " + f.message);
        }
    }
    json best = json::array();
    for (const auto& [kind, idx] : result.best_per_kind) {
        best.push_back({{"distribution", to_string(kind)}, {"index", idx}, {"aic", result.fits[idx].aic}});
    }
    return {{"fits", fits}, {"best_per_distribution", best}, {"best", result.best}};
}

json simulate_payload(const AnalysisRequest& r, std::vector<std::string>& warnings) {
    std::vector<ScenarioSpec> specs;
    for (int id : r.scenarios) {
        for (auto n : r.sample_sizes) {
            auto s = standard_scenario(id, n, scenario_seed(r.seed, id, n));
            s.tau_quantile = r.tau_quantile;
            s.tau = r.sim_tau;
            s.tau_rule = r.sim_tau_rule;
            specs.push_back(s);
        }
    }
    StudyConfig c;
    c.kind = r.study;
    c.methods = study_methods(r);
    c.reps = r.reps;
    c.lasso = r.lasso;
    c.decay_lambda = r.decay_lambda;
    c.aic = r.aic;
    c.workers = r.workers;
    const auto result = r.study == StudyKind::Mse ? run_mse_study(specs, c) : run_selection_study(specs, c);
    if (result.flagged) warnings.push_back("more than 1% of replications failed for at least one method");
    return to_json(result);
}

}  // namespace

AnalysisReport run(const AnalysisRequest& request) {
    request.validate();
    AnalysisReport report;
    report.command = request.command;
    report.config = to_json(request);
    if (request.command == Command::Simulate) {
        report.payload = simulate_payload(request, report.warnings);
        return report;
    }
    const auto ds = load(request);
    switch (request.command) {
        case Command::Km:
            report.payload = km_payload(ds);
            if (report.payload["degenerate_weights"].get<bool>()) {
                report.warnings.push_back("the last observed time is an event; its weight is infinite");
            }
            break;
        case Command::Tian: {
            const auto fit = tian_fit(ds, censoring_weights(ds), request.link);
            report.payload = {{"coefficients", coefficients(fit, ds.covariate_names())},
                              {"converged", fit.converged},
                              {"iterations", fit.iterations}};
            if (!fit.converged) report.warnings.push_back("Tian estimating equation did not converge");
            break;
        }
        case Command::Lasso: {
            LassoConfig lc = request.lasso;
            lc.link = request.link;
            const auto fit = weighted_lasso_fit(ds, ispw_weights(ds), lc);
            report.payload = lasso_payload(fit, ds);
            if (!fit.converged) report.warnings.push_back("coordinate descent hit max_iter");
            break;
        }
        case Command::CvLasso: {
            LassoConfig lc = request.lasso;
            lc.link = request.link;
            const auto cv = cv_select_lambda(ds, ispw_weights(ds), lc);
            json curve = json::array();
            for (std::size_t g = 0; g < cv.lambda_grid.size(); ++g) {
                curve.push_back({{"lambda", cv.lambda_grid[g]}, {"cv_error", num(cv.mean_cv_error[g])}});
            }
            report.payload = lasso_payload(cv.fit_at_chosen, ds);
            report.payload["chosen_lambda"] = cv.chosen_lambda;
            report.payload["cv"] = curve;
            report.payload["fold_of"] = cv.fold_of;
            break;
        }
        case Command::AicSearch:
            report.payload = aic_payload(ds, request, report.warnings);
            break;
        case Command::Simulate:
            break;
    }
    return report;
}

// ============================================================================
// Rendering
// ============================================================================

namespace {

std::string g6(const json& v) {
    if (v.is_null()) return "NA";
    if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
    if (v.is_string()) return v.get<std::string>();
    if (v.is_number_integer() || v.is_number_unsigned()) return v.dump();
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", v.get<double>());
    return buf;
}

std::string join(const json& names, const char* sep) {
    std::string s;
    for (std::size_t i = 0; i < names.size(); ++i) s += (i ? sep : "") + names[i].get<std::string>();
    return s;
}

void coefficient_table(std::ostream& os, const json& coefs) {
    os << "name,estimate,selected\n";
    for (const auto& c : coefs) os << g6(c["name"]) << ',' << g6(c["estimate"]) << ',' << g6(c["selected"]) << '\n';
}

void simulation_tables(std::ostream& os, const json& p) {
    // Columns are method x sample size; rows are parameters (MSE) or combinations (selection).
    const bool mse = p["study"] == "mse";
    std::vector<std::pair<std::string, std::size_t>> columns;
    std::vector<int> ids;
    std::map<std::tuple<int, std::string, std::size_t>, const json*> cell;
    for (const auto& s : p["scenarios"]) {
        const int id = s["spec"]["id"].get<int>();
        const auto n = s["spec"]["n"].get<std::size_t>();
        if (std::find(ids.begin(), ids.end(), id) == ids.end()) ids.push_back(id);
        for (const auto& m : s["methods"]) {
            const auto col = std::make_pair(m["method"].get<std::string>(), n);
            if (std::find(columns.begin(), columns.end(), col) == columns.end()) columns.push_back(col);
            cell[{id, col.first, n}] = &m;
        }
    }
    std::stable_sort(columns.begin(), columns.end(),
                     [](const auto& a, const auto& b) { return a.second < b.second; });
    os << "scenario," << (mse ? "parameter" : "combination");
    for (const auto& [method, n] : columns) os << ',' << method << "_n" << n;
    os << '\n';
    std::vector<std::string> rows;
    if (mse) {
        rows = {"beta0", "beta1", "beta2", "sigma"};
    } else {
        rows = {"C1", "C2", "C3", "C4"};
    }
    for (int id : ids) {
        for (const auto& row : rows) {
            bool any = false;
            std::ostringstream line;
            line << id << ',' << row;
            for (const auto& [method, n] : columns) {
                line << ',';
                const auto it = cell.find({id, method, n});
                if (it == cell.end()) continue;
                const json& table = (*it->second)[mse ? "mse" : "selection_pct"];
                if (table.contains(row)) {
                    line << g6(table[row]);
                    any = true;
                }
            }
            if (any) os << line.str() << '\n';
        }
    }
}

}  // namespace

std::string render(const AnalysisReport& report, const std::string& format) {
    if (format == "json") return to_json(report).dump(2) + "\n";
    if (format != "csv") throw Error(ErrorCode::InvalidConfig, "format must be json or csv");
    std::ostringstream os;
    const json& p = report.payload;
    switch (report.command) {
        case Command::Km:
            os << "kind,time,survival,at_risk,deaths\n";
            for (const auto& c : p["curve"]) {
                os << "jump," << g6(c["time"]) << ',' << g6(c["survival"]) << ',' << g6(c["at_risk"]) << ','
                   << g6(c["deaths"]) << '\n';
            }
            for (const auto& m : p["censor_marks"]) os << "censor," << g6(m[0]) << ',' << g6(m[1]) << ",,\n";
            break;
        case Command::Tian:
            coefficient_table(os, p["coefficients"]);
            break;
        case Command::Lasso:
            coefficient_table(os, p["coefficients"]);
            break;
        case Command::CvLasso:
            coefficient_table(os, p["coefficients"]);
            os << "\nlambda,cv_error,chosen\n";
            for (const auto& c : p["cv"]) {
                os << g6(c["lambda"]) << ',' << g6(c["cv_error"]) << ','
                   << (c["lambda"] == p["chosen_lambda"] ? "true" : "false") << '\n';
            }
            break;
        case Command::AicSearch:
            os << "distribution,subset,k,loglik,aic,converged,sigma,beta\n";
            for (const auto& f : p["fits"]) {
                std::string beta;
                for (std::size_t i = 0; i < f["beta"].size(); ++i) beta += (i ? " " : "") + g6(f["beta"][i]);
                os << g6(f["distribution"]) << ',' << join(f["subset"], "+") << ',' << g6(f["k"]) << ','
                   << g6(f["loglik"]) << ',' << g6(f["aic"]) << ',' << g6(f["converged"]) << ',' << g6(f["sigma"])
                   << ',' << beta << '\n';
            }
            break;
        case Command::Simulate:
            simulation_tables(os, p);
            break;
    }
    return os.str();
}

json error_json(ErrorCode code, const std::string& message) {
    return {{"error", {{"code", std::string(to_string(code))}, {"message", message}, {"exit_code", exit_code(code)}}},
            {"tool", kToolName},
            {"tool_version", kToolVersion}};
}

int exit_code(ErrorCode code) { return is_input_error(code) ? 2 : 3; }

}  // namespace ispw

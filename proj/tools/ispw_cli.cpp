#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"

#include "ispw/report.hpp"

namespace {

std::vector<std::string> split(const std::string& text, char sep) {
    std::vector<std::string> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, sep)) {
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

struct RawOptions {
    std::string link = "log";
    std::string tau_rule = "as-recorded";
    std::string distributions = "lognormal,weibull,loglogistic";
    std::string subsets;
    std::string aic_scaling = "unscaled";
    std::string loss_scale = "half-weight-sum";
    std::string scenario = "1";
    std::string n = "200";
    std::string study = "selection";
    std::string methods;
    std::string sim_tau_rule = "tau-reached-is-censored";
    std::string lambda_grid;
    double tau = 0.0;
    double sim_tau = 0.0;
    bool no_intercept = false;
};

void write_output(const ispw::AnalysisRequest& request, const std::string& text) {
    std::string path;
    if (request.out) {
        path = *request.out;
    } else if (const char* dir = std::getenv("ISPW_OUTPUT_DIR"); dir && *dir) {
        path = (std::filesystem::path(dir) / (ispw::to_string(request.command) + "." + request.format)).string();
    }
    if (path.empty()) {
        std::cout << text;
        return;
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ispw::Error(ispw::ErrorCode::IoError, "cannot write '" + path + "'");
    out << text;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Inverse survival probability weighted variable selection for restricted mean survival time"};
    app.require_subcommand(1);
    app.set_version_flag("--version", ispw::kToolVersion);

    ispw::AnalysisRequest req;
    RawOptions raw;
    std::string out;

    auto data_options = [&](CLI::App* sub) {
        sub->add_option("--input", req.input, "CSV with time, status (1 = event) and covariate columns")->required();
        sub->add_option("--tau", raw.tau, "Restriction time")->required();
        sub->add_option("--tau-event-rule", raw.tau_rule, "as-recorded | tau-reached-is-event | tau-reached-is-censored");
        sub->add_flag("--no-intercept", raw.no_intercept, "Do not prepend an intercept column");
    };
    auto common = [&](CLI::App* sub) {
        sub->add_option("--out", out, "Output file (default: stdout or $ISPW_OUTPUT_DIR)");
        sub->add_option("--format", req.format, "json | csv")->check(CLI::IsMember({"json", "csv"}));
    };
    auto lasso_options = [&](CLI::App* sub) {
        sub->add_option("--lambda", req.lasso.lambda, "Lasso tuning parameter");
        sub->add_option("--penalize-intercept", req.lasso.penalize_intercept, "true | false");
        sub->add_option("--standardize", req.lasso.standardize, "true | false");
        sub->add_option("--loss-scale", raw.loss_scale, "half-weight-sum | total-subjects");
        sub->add_option("--cv-folds", req.lasso.cv_folds, "Cross-validation folds");
        sub->add_option("--cv-seed", req.lasso.cv_seed, "Fold assignment seed");
        sub->add_option("--lambda-grid", raw.lambda_grid, "Comma-separated lambda grid");
    };
    auto aic_options = [&](CLI::App* sub) {
        sub->add_option("--aic-scaling", raw.aic_scaling, "unscaled | per-subject");
    };

    auto* km = app.add_subcommand("km", "Kaplan-Meier curve, censoring marks and ISPW weights");
    data_options(km);
    common(km);

    auto* tian = app.add_subcommand("tian", "Tian's weighted estimating equation");
    data_options(tian);
    common(tian);
    tian->add_option("--link", raw.link, "log | identity");

    auto* lasso = app.add_subcommand("lasso", "ISPW lasso at a fixed lambda");
    data_options(lasso);
    common(lasso);
    lasso_options(lasso);
    lasso->add_option("--link", raw.link, "log | identity");

    auto* cv = app.add_subcommand("cv-lasso", "ISPW lasso with lambda chosen by K-fold cross-validation");
    data_options(cv);
    common(cv);
    lasso_options(cv);
    cv->add_option("--link", raw.link, "log | identity");

    auto* aic = app.add_subcommand("aic-search", "ISPW maximum likelihood and AIC over covariate subsets");
    data_options(aic);
    common(aic);
    aic_options(aic);
    aic->add_option("--distributions", raw.distributions, "Comma-separated: lognormal, weibull, loglogistic");
    aic->add_option("--subsets", raw.subsets, "Semicolon-separated subsets of '+'-joined covariate names");

    auto* sim = app.add_subcommand("simulate", "Monte Carlo study over the standard scenarios");
    common(sim);
    lasso_options(sim);
    aic_options(sim);
    sim->add_option("--scenario", raw.scenario, "Comma-separated scenario ids 1-6, or 'all'");
    sim->add_option("--n", raw.n, "Comma-separated sample sizes");
    sim->add_option("--reps", req.reps, "Replications per scenario and sample size");
    sim->add_option("--seed", req.seed, "Root seed");
    sim->add_option("--study", raw.study, "mse | selection");
    sim->add_option("--methods", raw.methods, "Comma-separated: tian, lasso, lasso-cv, likelihood");
    sim->add_flag("--decay-lambda", req.decay_lambda, "Use lambda * 200 / n");
    sim->add_option("--tau-quantile", req.tau_quantile, "Pilot quantile used as tau");
    sim->add_option("--tau", raw.sim_tau, "Fixed tau (overrides --tau-quantile)");
    sim->add_option("--tau-event-rule", raw.sim_tau_rule, "as-recorded | tau-reached-is-event | tau-reached-is-censored");
    sim->add_option("--workers", req.workers, "Worker threads");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        const std::string name = app.get_subcommands().front()->get_name();
        req.command = ispw::parse_command(name);
        if (!out.empty()) req.out = out;
        req.link = ispw::parse_link(raw.link);
        req.lasso.link = req.link;
        req.lasso.loss_scale = ispw::parse_loss_scale(raw.loss_scale);
        if (!raw.lambda_grid.empty()) {
            req.lasso.lambda_grid.clear();
            for (const auto& v : split(raw.lambda_grid, ',')) req.lasso.lambda_grid.push_back(std::stod(v));
        }
        req.aic.scaling = ispw::parse_aic_scaling(raw.aic_scaling);
        if (req.command == ispw::Command::Simulate) {
            req.study = ispw::parse_study_kind(raw.study);
            req.scenarios.clear();
            if (raw.scenario == "all") {
                req.scenarios = {1, 2, 3, 4, 5, 6};
            } else {
                for (const auto& v : split(raw.scenario, ',')) req.scenarios.push_back(std::stoi(v));
            }
            req.sample_sizes.clear();
            for (const auto& v : split(raw.n, ',')) req.sample_sizes.push_back(std::stoul(v));
            for (const auto& v : split(raw.methods, ',')) req.methods.push_back(ispw::parse_method(v));
            if (raw.sim_tau > 0.0) req.sim_tau = raw.sim_tau;
            req.sim_tau_rule = ispw::parse_tau_event_rule(raw.sim_tau_rule);
        } else {
            req.tau = raw.tau;
            req.add_intercept = !raw.no_intercept;
            req.tau_rule = ispw::parse_tau_event_rule(raw.tau_rule);
            req.distributions.clear();
            for (const auto& v : split(raw.distributions, ',')) req.distributions.push_back(ispw::parse_distribution(v));
            if (!raw.subsets.empty()) {
                std::vector<std::vector<std::string>> subsets;
                for (const auto& s : split(raw.subsets, ';')) subsets.push_back(split(s, '+'));
                req.subsets = subsets;
            }
        }
        const auto report = ispw::run(req);
        write_output(req, ispw::render(report, req.format));
        for (const auto& w : report.warnings) std::cerr << "warning: " << w << '\n';
        return 0;
    } catch (const ispw::Error& e) {
        std::cerr << ispw::error_json(e.code(), e.what()).dump() << '\n';
        return ispw::exit_code(e.code());
    } catch (const std::invalid_argument& e) {
        std::cerr << ispw::error_json(ispw::ErrorCode::InvalidConfig, e.what()).dump() << '\n';
        return 2;
    } catch (const std::out_of_range& e) {
        std::cerr << ispw::error_json(ispw::ErrorCode::InvalidConfig, e.what()).dump() << '\n';
        return 2;
    }
}

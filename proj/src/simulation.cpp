#include "ispw/simulation.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <mutex>
#include <thread>

namespace ispw {

void ScenarioSpec::validate() const {
    if (n < 2) throw Error(ErrorCode::InvalidConfig, "scenario needs n >= 2");
    if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw Error(ErrorCode::InvalidConfig, "sigma must be >= 0");
    for (double r : {censor_rate_trt0, censor_rate_trt1}) {
        if (!(r >= 0.0 && r < 1.0)) throw Error(ErrorCode::InvalidConfig, "censoring rates must lie in [0, 1)");
    }
    if (!(tau_quantile > 0.0 && tau_quantile <= 1.0)) {
        throw Error(ErrorCode::InvalidConfig, "tau quantile must lie in (0, 1]");
    }
    if (tau && !(*tau > 0.0)) throw Error(ErrorCode::InvalidConfig, "tau must be positive");
}

ScenarioSpec standard_scenario(int id, std::size_t n, std::uint64_t seed) {
    if (id < 1 || id > 6) throw Error(ErrorCode::InvalidConfig, "scenario id must be 1..6");
    ScenarioSpec spec;
    spec.id = id;
    spec.error_kind = kAllDistributions[(id - 1) / 2];
    spec.censor_rate_trt0 = 0.1;
    spec.censor_rate_trt1 = (id % 2 == 1) ? 0.1 : 0.3;
    spec.n = n;
    spec.seed = seed;
    return spec;
}

std::mt19937_64 make_stream(std::uint64_t root, std::uint64_t stream) {
    std::seed_seq seq{static_cast<std::uint32_t>(root), static_cast<std::uint32_t>(root >> 32),
                      static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
    return std::mt19937_64(seq);
}

std::uint64_t scenario_seed(std::uint64_t root, int scenario_id, std::size_t n) {
    auto mix = [](std::uint64_t z) {
        z += 0x9E3779B97F4A7C15ull;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    };
    return mix(mix(mix(root) ^ static_cast<std::uint64_t>(scenario_id)) ^ static_cast<std::uint64_t>(n));
}

namespace {

constexpr std::uint64_t kPilotStream = 0xFFFFFFFFFFFFFFFFull;

double uniform_open(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    double x = 0.0;
    do {
        x = u(rng);
    } while (x <= 0.0);
    return x;
}

double standard_normal(std::mt19937_64& rng) {
    std::normal_distribution<double> z(0.0, 1.0);
    return z(rng);
}

std::vector<double> balanced_arms(std::size_t n, std::mt19937_64& rng) {
    std::vector<double> trt(n, 0.0);
    for (std::size_t i = n / 2; i < n; ++i) trt[i] = 1.0;
    std::shuffle(trt.begin(), trt.end(), rng);
    return trt;
}

double linear_predictor(const ScenarioSpec& spec, double trt, double x1) {
    return spec.beta0 + trt * spec.beta1 + x1 * spec.beta2;
}

double censoring_probability(const std::vector<double>& t, double rate) {
    double s = 0.0;
    for (double v : t) s += -std::expm1(-rate * v);
    return s / static_cast<double>(t.size());
}

double bisect_rate(const std::vector<double>& t, double target) {
    if (target == 0.0) return 0.0;
    double lo = std::log(1e-12);
    double hi = std::log(1e8);
    if (censoring_probability(t, std::exp(hi)) < target - kCalibrationTolerance) {
        throw Error(ErrorCode::CalibrationFailed, "target censoring rate is unreachable");
    }
    for (int step = 0; step < 100; ++step) {
        const double mid = 0.5 * (lo + hi);
        const double p = censoring_probability(t, std::exp(mid));
        if (std::abs(p - target) < 1e-6 * kCalibrationTolerance) return std::exp(mid);
        (p < target ? lo : hi) = mid;
    }
    const double rate = std::exp(0.5 * (lo + hi));
    if (std::abs(censoring_probability(t, rate) - target) > kCalibrationTolerance) {
        throw Error(ErrorCode::CalibrationFailed, "bisection did not reach the target censoring rate");
    }
    return rate;
}

double exponential_draw(double rate, std::mt19937_64& rng) {
    if (rate == 0.0) return std::numeric_limits<double>::infinity();
    return -std::log(uniform_open(rng)) / rate;
}

}  // namespace

double draw_error(DistributionKind kind, std::mt19937_64& rng) {
    switch (kind) {
        case DistributionKind::LogNormal: return standard_normal(rng);
        case DistributionKind::Weibull: return std::log(-std::log(uniform_open(rng)));
        case DistributionKind::LogLogistic: {
            const double u = uniform_open(rng);
            return std::log(u) - std::log1p(-u);
        }
    }
    return 0.0;
}

CensoringCalibration calibrate_censoring(const ScenarioSpec& spec) {
    spec.validate();
    auto rng = make_stream(spec.seed, kPilotStream);
    std::vector<double> t0(kPilotDraws), t1(kPilotDraws);
    for (std::size_t i = 0; i < kPilotDraws; ++i) {
        const double x1 = 1.0 + standard_normal(rng);
        t0[i] = std::exp(linear_predictor(spec, 0.0, x1) + spec.sigma * draw_error(spec.error_kind, rng));
        const double x1b = 1.0 + standard_normal(rng);
        t1[i] = std::exp(linear_predictor(spec, 1.0, x1b) + spec.sigma * draw_error(spec.error_kind, rng));
    }
    CensoringCalibration c;
    c.rate_trt0 = bisect_rate(t0, spec.censor_rate_trt0);
    c.rate_trt1 = bisect_rate(t1, spec.censor_rate_trt1);
    c.achieved_trt0 = censoring_probability(t0, c.rate_trt0);
    c.achieved_trt1 = censoring_probability(t1, c.rate_trt1);
    if (spec.tau) {
        c.tau = *spec.tau;
    } else {
        std::vector<double> pooled = t0;
        pooled.insert(pooled.end(), t1.begin(), t1.end());
        std::sort(pooled.begin(), pooled.end());
        const auto k = static_cast<std::size_t>(
            std::ceil(spec.tau_quantile * static_cast<double>(pooled.size())));
        c.tau = pooled[std::min(pooled.size() - 1, k == 0 ? 0 : k - 1)];
    }
    return c;
}

RestrictedDataset generate_scenario(const ScenarioSpec& spec, const CensoringCalibration& calibration,
                                    std::mt19937_64& rng) {
    spec.validate();
    const auto trt = balanced_arms(spec.n, rng);
    std::vector<SurvivalRecord> records(spec.n);
    for (std::size_t i = 0; i < spec.n; ++i) {
        const double x1 = 1.0 + standard_normal(rng);
        const double x2 = -1.0 + standard_normal(rng);
        const double eps = spec.sigma > 0.0 ? draw_error(spec.error_kind, rng) : 0.0;
        const double t = std::exp(linear_predictor(spec, trt[i], x1) + spec.sigma * eps);
        const double c = exponential_draw(trt[i] == 1.0 ? calibration.rate_trt1 : calibration.rate_trt0, rng);
        auto& r = records[i];
        r.id = std::to_string(i + 1);
        r.time = std::min(t, c);
        r.event = t <= c;
        r.covariates = {1.0, trt[i], x1, x2};
    }
    RestrictOptions options;
    options.rule = spec.tau_rule;
    options.covariate_names = {"intercept", "trt", "X1", "X2"};
    options.has_intercept = true;
    return restrict(records, calibration.tau, options);
}

RestrictedDataset generate_scenario(const ScenarioSpec& spec) {
    const auto calibration = calibrate_censoring(spec);
    auto rng = make_stream(spec.seed, 0);
    return generate_scenario(spec, calibration, rng);
}

RestrictedDataset keep_columns(const RestrictedDataset& dataset, const std::vector<std::size_t>& columns) {
    std::vector<SurvivalRecord> records = dataset.records();
    for (auto& r : records) {
        std::vector<double> kept;
        kept.reserve(columns.size());
        for (auto j : columns) kept.push_back(r.covariates.at(j));
        r.covariates = std::move(kept);
    }
    std::vector<std::string> names;
    for (auto j : columns) names.push_back(dataset.covariate_names().at(j));
    const bool intercept = dataset.has_intercept() && !columns.empty() && columns.front() == 0;
    return RestrictedDataset(std::move(records), dataset.tau(), std::move(names), intercept, dataset.tau_rule());
}

std::string to_string(Method method) {
    switch (method) {
        case Method::Tian: return "tian";
        case Method::Lasso: return "lasso";
        case Method::LassoCv: return "lasso-cv";
        case Method::Likelihood: return "likelihood";
    }
    return "tian";
}

Method parse_method(const std::string& text) {
    for (auto m : {Method::Tian, Method::Lasso, Method::LassoCv, Method::Likelihood}) {
        if (text == to_string(m)) return m;
    }
    throw Error(ErrorCode::InvalidConfig, "unknown method '" + text + "'");
}

Combination classify(const std::vector<bool>& selected) {
    if (selected.size() != 4) return Combination::C4;
    const bool i = selected[0], t = selected[1], a = selected[2], b = selected[3];
    if (i && t && !a && !b) return Combination::C1;
    if (i && t && a && !b) return Combination::C2;
    if (i && t && a && b) return Combination::C3;
    return Combination::C4;
}

std::string to_string(Combination c) {
    static const char* names[] = {"C1", "C2", "C3", "C4"};
    return names[static_cast<int>(c)];
}

std::string to_string(StudyKind kind) { return kind == StudyKind::Mse ? "mse" : "selection"; }

StudyKind parse_study_kind(const std::string& text) {
    if (text == "mse") return StudyKind::Mse;
    if (text == "selection") return StudyKind::Selection;
    throw Error(ErrorCode::InvalidConfig, "unknown study '" + text + "'");
}

// ============================================================================
// Replications
// ============================================================================

namespace {

struct RepOutcome {
    std::vector<Replicate> per_method;
    double censored_fraction = 0.0;
    bool generated = false;
    std::string error;
};

std::vector<double> to_std(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

double effective_lambda(const StudyConfig& config, std::size_t n) {
    return config.decay_lambda ? config.lasso.lambda * (200.0 / static_cast<double>(n)) : config.lasso.lambda;
}

void run_method(Method method, const RestrictedDataset& data, const ScenarioSpec& spec, const StudyConfig& config,
                Replicate& out) {
    LassoConfig lc = config.lasso;
    lc.lambda = effective_lambda(config, spec.n);
    if (config.kind == StudyKind::Mse) {
        switch (method) {
            case Method::Tian:
                out.estimate = to_std(tian_fit(data, censoring_weights(data), Link::Log).beta);
                return;
            case Method::Lasso:
                out.estimate = to_std(weighted_lasso_fit(data, ispw_weights(data), lc).beta);
                return;
            case Method::LassoCv:
                out.estimate = to_std(cv_select_lambda(data, ispw_weights(data), lc).fit_at_chosen.beta);
                return;
            case Method::Likelihood: {
                std::vector<std::size_t> all(data.q());
                for (std::size_t j = 0; j < all.size(); ++j) all[j] = j;
                MleOptions mo;
                mo.aic = config.aic;
                const auto fit = mle_fit(data, ispw_weights(data), spec.error_kind, all, std::nullopt, mo);
                if (!fit.converged) throw Error(ErrorCode::NonFiniteObjective, "MLE did not converge: " + fit.message);
                out.estimate = to_std(fit.params.beta);
                out.estimate.push_back(fit.params.sigma);
                return;
            }
        }
    }
    switch (method) {
        case Method::Tian: {
            const auto fit = tian_fit(data, censoring_weights(data), Link::Log);
            out.estimate = to_std(fit.beta);
            out.combination = classify(fit.selected);
            return;
        }
        case Method::Lasso:
        case Method::LassoCv: {
            const auto w = ispw_weights(data);
            const auto fit = method == Method::Lasso ? weighted_lasso_fit(data, w, lc)
                                                     : cv_select_lambda(data, w, lc).fit_at_chosen;
            out.estimate = to_std(fit.beta);
            out.combination = classify(fit.selected);
            return;
        }
        case Method::Likelihood: {
            const auto w = ispw_weights(data);
            const std::vector<std::vector<std::size_t>> candidates = {{0, 1}, {0, 1, 2}, {0, 1, 2, 3}};
            MleOptions mo;
            mo.aic = config.aic;
            std::optional<std::size_t> best;
            out.aic.assign(3, std::numeric_limits<double>::quiet_NaN());
            for (std::size_t c = 0; c < candidates.size(); ++c) {
                const auto fit = mle_fit(data, w, spec.error_kind, candidates[c], std::nullopt, mo);
                if (!fit.converged) continue;
                out.aic[c] = fit.aic;
                if (!best || fit.aic < out.aic[*best]) {
                    best = c;
                    out.estimate = to_std(fit.params.beta);
                    out.estimate.push_back(fit.params.sigma);
                }
            }
            if (!best) throw Error(ErrorCode::AllFitsFailed, "no candidate model converged");
            out.combination = static_cast<Combination>(*best);
            return;
        }
    }
}

RepOutcome run_replicate(const ScenarioSpec& spec, const CensoringCalibration& calibration,
                         const StudyConfig& config, std::size_t rep) {
    RepOutcome out;
    out.per_method.resize(config.methods.size());
    for (std::size_t m = 0; m < config.methods.size(); ++m) {
        out.per_method[m].index = rep;
        out.per_method[m].method = config.methods[m];
    }
    RestrictedDataset full;
    try {
        auto rng = make_stream(spec.seed, rep);
        full = generate_scenario(spec, calibration, rng);
        out.generated = true;
    } catch (const Error& e) {
        for (auto& r : out.per_method) {
            r.failed = true;
            r.error = std::string(to_string(e.code())) + ": " + e.what();
        }
        return out;
    }
    out.censored_fraction = static_cast<double>(full.n_censored()) / static_cast<double>(full.n());
    const RestrictedDataset data = config.kind == StudyKind::Mse ? keep_columns(full, {0, 1, 2}) : full;
    for (std::size_t m = 0; m < config.methods.size(); ++m) {
        auto& r = out.per_method[m];
        try {
            run_method(config.methods[m], data, spec, config, r);
        } catch (const Error& e) {
            r.failed = true;
            r.error = std::string(to_string(e.code())) + ": " + e.what();
            r.estimate.clear();
        }
    }
    return out;
}

template <class F>
void parallel_for(std::size_t count, std::size_t workers, F&& body) {
    workers = std::max<std::size_t>(1, std::min(workers, count));
    if (workers == 1) {
        for (std::size_t i = 0; i < count; ++i) body(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < count; i = next++) body(i);
        });
    }
    for (auto& t : pool) t.join();
}

std::vector<std::string> parameter_names(const StudyConfig& config, Method method) {
    std::vector<std::string> names = {"beta0", "beta1", "beta2"};
    if (config.kind == StudyKind::Selection) names.push_back("beta3");
    if (method == Method::Likelihood) names.push_back("sigma");
    return names;
}

}  // namespace

ScenarioResult run_scenario(const ScenarioSpec& spec, const StudyConfig& config) {
    if (config.reps < 1) throw Error(ErrorCode::InvalidConfig, "reps must be >= 1");
    if (config.methods.empty()) throw Error(ErrorCode::InvalidConfig, "no methods requested");
    config.lasso.validate();
    ScenarioResult result;
    result.spec = spec;
    result.calibration = calibrate_censoring(spec);

    std::vector<RepOutcome> outcomes(config.reps);
    parallel_for(config.reps, config.workers,
                 [&](std::size_t rep) { outcomes[rep] = run_replicate(spec, result.calibration, config, rep); });

    std::size_t generated = 0;
    for (const auto& o : outcomes) {
        if (!o.generated) continue;
        result.mean_censored_fraction += o.censored_fraction;
        ++generated;
    }
    if (generated > 0) result.mean_censored_fraction /= static_cast<double>(generated);

    // Truth: beta = (beta0, beta1, beta2[, 0]), sigma.
    for (std::size_t m = 0; m < config.methods.size(); ++m) {
        MethodSummary s;
        s.method = config.methods[m];
        s.parameters = parameter_names(config, s.method);
        std::vector<double> truth = {spec.beta0, spec.beta1, spec.beta2};
        if (config.kind == StudyKind::Selection) truth.push_back(0.0);
        if (s.method == Method::Likelihood) truth.push_back(spec.sigma);
        const std::size_t p = truth.size();
        std::vector<double> sum(p, 0.0), sum_sq(p, 0.0);
        double norm_sum = 0.0;
        std::size_t norm_count = 0;
        for (const auto& o : outcomes) {
            const auto& r = o.per_method[m];
            if (r.failed) {
                ++s.failures;
                continue;
            }
            ++s.successes;
            ++s.selection_counts[static_cast<int>(r.combination)];
            // AIC winners are prefixes of the full design; missing coefficients are 0.
            const bool has_sigma = s.method == Method::Likelihood;
            const std::size_t p_beta = p - (has_sigma ? 1 : 0);
            const std::size_t nb = r.estimate.size() - (has_sigma ? 1 : 0);
            std::vector<double> est(p, 0.0);
            for (std::size_t j = 0; j < std::min(nb, p_beta); ++j) est[j] = r.estimate[j];
            if (has_sigma) est[p - 1] = r.estimate.back();
            double norm2 = 0.0;
            for (std::size_t j = 0; j < p; ++j) {
                const double e2 = (est[j] - truth[j]) * (est[j] - truth[j]);
                sum[j] += e2;
                sum_sq[j] += e2 * e2;
                norm2 += e2;
            }
            norm_sum += std::sqrt(norm2);
            ++norm_count;
        }
        s.mse.assign(p, 0.0);
        s.mse_se.assign(p, 0.0);
        if (s.successes > 0) {
            const double k = static_cast<double>(s.successes);
            for (std::size_t j = 0; j < p; ++j) {
                s.mse[j] = sum[j] / k;
                const double var = std::max(0.0, sum_sq[j] / k - s.mse[j] * s.mse[j]);
                s.mse_se[j] = s.successes > 1 ? std::sqrt(var / (k - 1.0)) : 0.0;
            }
            s.mean_error_norm = norm_sum / static_cast<double>(norm_count);
            for (int c = 0; c < 4; ++c) s.selection_pct[c] = 100.0 * static_cast<double>(s.selection_counts[c]) / k;
        }
        result.methods.push_back(std::move(s));
    }

    if (config.keep_replicates) {
        for (auto& o : outcomes) {
            for (auto& r : o.per_method) result.replicates.push_back(std::move(r));
        }
    }
    return result;
}

namespace {

SimResult run_study(const std::vector<ScenarioSpec>& specs, StudyConfig config) {
    if (specs.empty()) throw Error(ErrorCode::InvalidConfig, "no scenarios requested");
    SimResult result;
    for (const auto& spec : specs) {
        auto r = run_scenario(spec, config);
        for (const auto& m : r.methods) {
            if (static_cast<double>(m.failures) > 0.01 * static_cast<double>(config.reps)) result.flagged = true;
        }
        result.scenarios.push_back(std::move(r));
    }
    result.config = std::move(config);
    return result;
}

}  // namespace

SimResult run_mse_study(const std::vector<ScenarioSpec>& specs, StudyConfig config) {
    config.kind = StudyKind::Mse;
    return run_study(specs, std::move(config));
}

SimResult run_selection_study(const std::vector<ScenarioSpec>& specs, StudyConfig config) {
    config.kind = StudyKind::Selection;
    return run_study(specs, std::move(config));
}

}  // namespace ispw

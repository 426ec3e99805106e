#include "ispw/survival.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace ispw {

std::string_view to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::InvalidDataset: return "InvalidDataset";
        case ErrorCode::InvalidConfig: return "InvalidConfig";
        case ErrorCode::NoEvents: return "NoEvents";
        case ErrorCode::TooFewEvents: return "TooFewEvents";
        case ErrorCode::DegenerateWeight: return "DegenerateWeight";
        case ErrorCode::NonFiniteObjective: return "NonFiniteObjective";
        case ErrorCode::SingularDesign: return "SingularDesign";
        case ErrorCode::DomainError: return "DomainError";
        case ErrorCode::AllFitsFailed: return "AllFitsFailed";
        case ErrorCode::CalibrationFailed: return "CalibrationFailed";
        case ErrorCode::MissingColumn: return "MissingColumn";
        case ErrorCode::NonNumericCell: return "NonNumericCell";
        case ErrorCode::EmptyFile: return "EmptyFile";
        case ErrorCode::IoError: return "IoError";
    }
    return "Unknown";
}

bool is_input_error(ErrorCode code) {
    switch (code) {
        case ErrorCode::InvalidDataset:
        case ErrorCode::InvalidConfig:
        case ErrorCode::MissingColumn:
        case ErrorCode::NonNumericCell:
        case ErrorCode::EmptyFile:
        case ErrorCode::IoError:
            return true;
        default:
            return false;
    }
}

std::string to_string(TauEventRule rule) {
    switch (rule) {
        case TauEventRule::AsRecorded: return "as-recorded";
        case TauEventRule::TauReachedIsEvent: return "tau-reached-is-event";
        case TauEventRule::TauReachedIsCensored: return "tau-reached-is-censored";
    }
    return "as-recorded";
}

TauEventRule parse_tau_event_rule(const std::string& text) {
    if (text == "as-recorded") return TauEventRule::AsRecorded;
    if (text == "tau-reached-is-event") return TauEventRule::TauReachedIsEvent;
    if (text == "tau-reached-is-censored") return TauEventRule::TauReachedIsCensored;
    throw Error(ErrorCode::InvalidConfig, "unknown tau event rule '" + text + "'");
}

// ============================================================================
// RestrictedDataset
// ============================================================================

RestrictedDataset::RestrictedDataset(std::vector<SurvivalRecord> records, double tau,
                                     std::vector<std::string> covariate_names,
                                     bool has_intercept, TauEventRule rule)
    : records_(std::move(records)),
      names_(std::move(covariate_names)),
      tau_(tau),
      has_intercept_(has_intercept),
      rule_(rule) {
    q_ = records_.empty() ? names_.size() : records_.front().covariates.size();
    n_events_ = static_cast<std::size_t>(
        std::count_if(records_.begin(), records_.end(), [](const auto& r) { return r.event; }));
    if (names_.size() != q_) {
        throw Error(ErrorCode::InvalidDataset, "covariate name count does not match q");
    }
}

Eigen::MatrixXd RestrictedDataset::design() const {
    Eigen::MatrixXd x(static_cast<Eigen::Index>(n()), static_cast<Eigen::Index>(q_));
    for (std::size_t i = 0; i < n(); ++i) {
        for (std::size_t j = 0; j < q_; ++j) x(i, j) = records_[i].covariates[j];
    }
    return x;
}

Eigen::MatrixXd RestrictedDataset::design(const std::vector<std::size_t>& columns) const {
    Eigen::MatrixXd x(static_cast<Eigen::Index>(n()), static_cast<Eigen::Index>(columns.size()));
    for (std::size_t i = 0; i < n(); ++i) {
        for (std::size_t j = 0; j < columns.size(); ++j) {
            if (columns[j] >= q_) throw Error(ErrorCode::InvalidConfig, "covariate index out of range");
            x(i, j) = records_[i].covariates[columns[j]];
        }
    }
    return x;
}

Eigen::VectorXd RestrictedDataset::times() const {
    Eigen::VectorXd t(static_cast<Eigen::Index>(n()));
    for (std::size_t i = 0; i < n(); ++i) t(i) = records_[i].time;
    return t;
}

std::vector<bool> RestrictedDataset::events() const {
    std::vector<bool> e(n());
    for (std::size_t i = 0; i < n(); ++i) e[i] = records_[i].event;
    return e;
}

RestrictedDataset RestrictedDataset::select_rows(const std::vector<std::size_t>& rows) const {
    std::vector<SurvivalRecord> out;
    out.reserve(rows.size());
    for (auto r : rows) out.push_back(records_.at(r));
    return RestrictedDataset(std::move(out), tau_, names_, has_intercept_, rule_);
}

RestrictedDataset restrict(const std::vector<SurvivalRecord>& records, double tau,
                           const RestrictOptions& options) {
    if (!(tau > 0.0) || !std::isfinite(tau)) {
        throw Error(ErrorCode::InvalidDataset, "tau must be a positive finite number");
    }
    if (records.empty()) throw Error(ErrorCode::InvalidDataset, "no records");
    const std::size_t q = records.front().covariates.size();

    std::vector<SurvivalRecord> out;
    out.reserve(records.size());
    for (const auto& rec : records) {
        if (!(rec.time > 0.0) || !std::isfinite(rec.time)) {
            throw Error(ErrorCode::InvalidDataset, "record '" + rec.id + "' has non-positive time");
        }
        if (rec.covariates.size() != q) {
            throw Error(ErrorCode::InvalidDataset, "record '" + rec.id + "' has inconsistent covariate count");
        }
        SurvivalRecord r = rec;
        r.time = std::min(rec.time, tau);
        switch (options.rule) {
            case TauEventRule::AsRecorded:
                break;
            case TauEventRule::TauReachedIsEvent:
                r.event = rec.event || rec.time >= tau;
                break;
            case TauEventRule::TauReachedIsCensored:
                r.event = rec.event && rec.time <= tau;
                break;
        }
        out.push_back(std::move(r));
    }

    auto names = options.covariate_names;
    if (names.empty()) {
        for (std::size_t j = 0; j < q; ++j) names.push_back("x" + std::to_string(j + 1));
    }
    return RestrictedDataset(std::move(out), tau, std::move(names), options.has_intercept, options.rule);
}

// ============================================================================
// Kaplan-Meier
// ============================================================================

namespace {

// Product-limit over (time, is_jump_event) pairs. Deaths at a tied time are
// divided by the full risk set, which covers both tie conventions used here:
// observed-time KM (deaths before censorings) and censoring KM (censorings
// with the tied deaths still at risk).
KaplanMeierCurve product_limit(const std::vector<double>& times, const std::vector<bool>& jump) {
    const std::size_t n = times.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return times[a] < times[b]; });

    KaplanMeierCurve curve;
    double s = 1.0;
    std::size_t k = 0;
    while (k < n) {
        const double t = times[order[k]];
        std::size_t d = 0;
        std::size_t m = k;
        while (m < n && times[order[m]] == t) {
            if (jump[order[m]]) ++d;
            ++m;
        }
        const std::size_t at_risk = n - k;
        if (d > 0) {
            s *= 1.0 - static_cast<double>(d) / static_cast<double>(at_risk);
            curve.jump_times.push_back(t);
            curve.survival.push_back(s);
            curve.at_risk.push_back(at_risk);
            curve.deaths.push_back(d);
        }
        k = m;
    }
    return curve;
}

}  // namespace

KaplanMeierCurve km_estimate(const RestrictedDataset& dataset) {
    if (dataset.n_events() == 0) throw Error(ErrorCode::NoEvents, "all records are censored");
    std::vector<double> t(dataset.n());
    std::vector<bool> e(dataset.n());
    for (std::size_t i = 0; i < dataset.n(); ++i) {
        t[i] = dataset[i].time;
        e[i] = dataset[i].event;
    }
    return product_limit(t, e);
}

KaplanMeierCurve km_estimate_censoring(const std::vector<double>& times,
                                       const std::vector<bool>& event_flags) {
    std::vector<bool> censored(event_flags.size());
    for (std::size_t i = 0; i < event_flags.size(); ++i) censored[i] = !event_flags[i];
    return product_limit(times, censored);
}

double km_eval(const KaplanMeierCurve& curve, double t) {
    auto it = std::upper_bound(curve.jump_times.begin(), curve.jump_times.end(), t);
    if (it == curve.jump_times.begin()) return 1.0;
    return curve.survival[static_cast<std::size_t>(it - curve.jump_times.begin()) - 1];
}

// ============================================================================
// Weights
// ============================================================================

IspwWeightVector ispw_weights(const RestrictedDataset& dataset, const KaplanMeierCurve& curve) {
    IspwWeightVector out;
    out.weights.assign(dataset.n(), 0.0);
    for (std::size_t i = 0; i < dataset.n(); ++i) {
        if (!dataset[i].event) continue;
        const double s = km_eval(curve, dataset[i].time);
        if (!(s > 0.0)) {
            throw Error(ErrorCode::DegenerateWeight,
                        "survival estimate is zero at event time " + std::to_string(dataset[i].time) +
                            " (record '" + dataset[i].id + "')");
        }
        out.weights[i] = 1.0 / s;
        out.effective_n += out.weights[i];
    }
    return out;
}

IspwWeightVector ispw_weights(const RestrictedDataset& dataset) {
    return ispw_weights(dataset, km_estimate(dataset));
}

IspwWeightVector censoring_weights(const RestrictedDataset& dataset) {
    const std::size_t n = dataset.n();
    std::vector<double> t(n);
    std::vector<bool> e(n);
    bool any = false;
    for (std::size_t i = 0; i < n; ++i) {
        t[i] = dataset[i].time;
        e[i] = dataset[i].event || dataset[i].time >= dataset.tau();
        any = any || e[i];
    }
    if (!any) throw Error(ErrorCode::NoEvents, "no events and no record reaches tau");
    const auto g = km_estimate_censoring(t, e);

    IspwWeightVector out;
    out.weights.assign(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        if (!e[i]) continue;
        const double gi = km_eval(g, t[i]);
        if (!(gi > 0.0)) {
            throw Error(ErrorCode::DegenerateWeight, "censoring survival is zero at time " + std::to_string(t[i]));
        }
        out.weights[i] = 1.0 / gi;
        out.effective_n += out.weights[i];
    }
    return out;
}

IspwWeightVector make_weights(std::vector<double> weights) {
    IspwWeightVector out;
    out.effective_n = std::accumulate(weights.begin(), weights.end(), 0.0);
    out.weights = std::move(weights);
    return out;
}

}  // namespace ispw

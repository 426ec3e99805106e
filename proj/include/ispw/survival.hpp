#pragma once

// Data model shared by every estimator: tau-restricted datasets, the
// Kaplan-Meier product-limit curve and inverse survival probability weights.

#include <cstddef>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "ispw/error.hpp"

namespace ispw {

struct SurvivalRecord {
    std::string id;
    double time = 0.0;  // observed time min(T, C)
    bool event = false;
    std::vector<double> covariates;
};

// How the effective event indicator is assigned once times are cut at tau.
//   AsRecorded:            keep the recorded flag (a record censored at tau stays censored).
//   TauReachedIsEvent:     any record with time >= tau counts as an event at tau.
//   TauReachedIsCensored:  any record with time > tau is censored at tau.
enum class TauEventRule { AsRecorded, TauReachedIsEvent, TauReachedIsCensored };

std::string to_string(TauEventRule rule);
TauEventRule parse_tau_event_rule(const std::string& text);

class RestrictedDataset {
public:
    RestrictedDataset() = default;
    RestrictedDataset(std::vector<SurvivalRecord> records, double tau,
                      std::vector<std::string> covariate_names, bool has_intercept,
                      TauEventRule rule);

    const std::vector<SurvivalRecord>& records() const { return records_; }
    const SurvivalRecord& operator[](std::size_t i) const { return records_[i]; }
    double tau() const { return tau_; }
    std::size_t n() const { return records_.size(); }
    std::size_t n_events() const { return n_events_; }
    std::size_t n_censored() const { return records_.size() - n_events_; }
    std::size_t q() const { return q_; }
    TauEventRule tau_rule() const { return rule_; }

    // Column 0 is an intercept of ones when true.
    bool has_intercept() const { return has_intercept_; }
    const std::vector<std::string>& covariate_names() const { return names_; }

    Eigen::MatrixXd design() const;
    Eigen::MatrixXd design(const std::vector<std::size_t>& columns) const;
    Eigen::VectorXd times() const;
    std::vector<bool> events() const;

    // Rows in the given order; tau, names and rule carry over.
    RestrictedDataset select_rows(const std::vector<std::size_t>& rows) const;

private:
    std::vector<SurvivalRecord> records_;
    std::vector<std::string> names_;
    double tau_ = 0.0;
    std::size_t n_events_ = 0;
    std::size_t q_ = 0;
    bool has_intercept_ = false;
    TauEventRule rule_ = TauEventRule::AsRecorded;
};

struct RestrictOptions {
    TauEventRule rule = TauEventRule::AsRecorded;
    std::vector<std::string> covariate_names;  // generated as x1..xq when empty
    bool has_intercept = false;
};

RestrictedDataset restrict(const std::vector<SurvivalRecord>& records, double tau,
                           const RestrictOptions& options = {});

struct KaplanMeierCurve {
    std::vector<double> jump_times;  // distinct event times, increasing
    std::vector<double> survival;    // value on [jump_times[k], jump_times[k+1])
    std::vector<std::size_t> at_risk;
    std::vector<std::size_t> deaths;
};

// Product-limit estimate of the observed-time survival; at tied times deaths
// are removed from the risk set before censorings.
KaplanMeierCurve km_estimate(const RestrictedDataset& dataset);

// Product-limit estimate of the censoring distribution: censorings are the
// "events" and, at tied times, are processed with the deaths still at risk.
KaplanMeierCurve km_estimate_censoring(const std::vector<double>& times,
                                       const std::vector<bool>& event_flags);

double km_eval(const KaplanMeierCurve& curve, double t);

struct IspwWeightVector {
    std::vector<double> weights;
    double effective_n = 0.0;
};

IspwWeightVector ispw_weights(const RestrictedDataset& dataset, const KaplanMeierCurve& curve);

// Convenience: km_estimate followed by ispw_weights.
IspwWeightVector ispw_weights(const RestrictedDataset& dataset);

// Inverse probability of censoring weights used by Tian's RMST regression.
// Records reaching tau count as events (Y = tau <= C) and the weight is
// 1 / G(Y) with G the product-limit estimate of the censoring survival.
IspwWeightVector censoring_weights(const RestrictedDataset& dataset);

// Wraps caller-supplied weights; effective_n is their sum.
IspwWeightVector make_weights(std::vector<double> weights);

}  // namespace ispw

#pragma once

// Monte Carlo harness: scenario generation with per-arm exponential
// censoring, MSE studies and correct-selection studies.

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "ispw/aft.hpp"
#include "ispw/lasso.hpp"
#include "ispw/survival.hpp"

namespace ispw {

struct ScenarioSpec {
    int id = 1;
    double beta0 = 1.0;
    double beta1 = 1.0;
    double beta2 = 1.0;
    double sigma = 1.0;
    DistributionKind error_kind = DistributionKind::LogNormal;
    double censor_rate_trt0 = 0.1;
    double censor_rate_trt1 = 0.1;
    std::size_t n = 200;
    // tau is the tau_quantile-th quantile of pilot event times unless set.
    double tau_quantile = 0.85;
    std::optional<double> tau;
    TauEventRule tau_rule = TauEventRule::TauReachedIsCensored;
    std::uint64_t seed = 1;

    void validate() const;
};

// Scenarios 1-6: normal, Gumbel and logistic errors, each with arm-1
// censoring 0.1 and 0.3.
ScenarioSpec standard_scenario(int id, std::size_t n = 200, std::uint64_t seed = 1);

// Generator for stream `stream` of root seed `root`.
std::mt19937_64 make_stream(std::uint64_t root, std::uint64_t stream);

// Seed of one (scenario, n) cell of a study with the given root seed.
std::uint64_t scenario_seed(std::uint64_t root, int scenario_id, std::size_t n);

double draw_error(DistributionKind kind, std::mt19937_64& rng);

inline constexpr std::size_t kPilotDraws = 100000;
inline constexpr double kCalibrationTolerance = 0.005;

struct CensoringCalibration {
    // Exponential censoring rate per arm; 0 means no censoring.
    double rate_trt0 = 0.0;
    double rate_trt1 = 0.0;
    double achieved_trt0 = 0.0;
    double achieved_trt1 = 0.0;
    double tau = 0.0;
};

CensoringCalibration calibrate_censoring(const ScenarioSpec& spec);

// Covariates: intercept, trt, X1, X2.
RestrictedDataset generate_scenario(const ScenarioSpec& spec, const CensoringCalibration& calibration,
                                    std::mt19937_64& rng);
RestrictedDataset generate_scenario(const ScenarioSpec& spec);

// Keeps the listed covariate columns.
RestrictedDataset keep_columns(const RestrictedDataset& dataset, const std::vector<std::size_t>& columns);

enum class Method { Tian, Lasso, LassoCv, Likelihood };

std::string to_string(Method method);
Method parse_method(const std::string& text);

// C1 = {intercept, trt}, C2 = {intercept, trt, X1}, C3 = {intercept, trt, X1, X2}, C4 = anything else.
enum class Combination { C1 = 0, C2 = 1, C3 = 2, C4 = 3 };

Combination classify(const std::vector<bool>& selected);

std::string to_string(Combination c);

enum class StudyKind { Mse, Selection };

std::string to_string(StudyKind kind);
StudyKind parse_study_kind(const std::string& text);

struct StudyConfig {
    StudyKind kind = StudyKind::Mse;
    std::vector<Method> methods = {Method::Tian, Method::Lasso, Method::Likelihood};
    std::size_t reps = 2000;
    LassoConfig lasso;
    // Use lambda * (200 / n) instead of lambda.
    bool decay_lambda = false;
    AicConvention aic;
    std::size_t workers = 1;
    bool keep_replicates = false;
};

struct Replicate {
    std::size_t index = 0;
    Method method = Method::Tian;
    bool failed = false;
    std::string error;
    std::vector<double> estimate;  // beta, then sigma for likelihood fits
    std::vector<double> aic;       // C1..C3 for likelihood selection
    Combination combination = Combination::C4;
};

struct MethodSummary {
    Method method = Method::Tian;
    std::size_t successes = 0;
    std::size_t failures = 0;
    std::vector<std::string> parameters;
    std::vector<double> mse;
    std::vector<double> mse_se;
    double mean_error_norm = 0.0;
    std::array<std::size_t, 4> selection_counts{};
    std::array<double, 4> selection_pct{};
};

struct ScenarioResult {
    ScenarioSpec spec;
    CensoringCalibration calibration;
    double mean_censored_fraction = 0.0;
    std::vector<MethodSummary> methods;
    std::vector<Replicate> replicates;
};

struct SimResult {
    StudyConfig config;
    std::vector<ScenarioResult> scenarios;
    // Set when any method fails in more than 1% of replications.
    bool flagged = false;
};

ScenarioResult run_scenario(const ScenarioSpec& spec, const StudyConfig& config);

SimResult run_mse_study(const std::vector<ScenarioSpec>& specs, StudyConfig config);
SimResult run_selection_study(const std::vector<ScenarioSpec>& specs, StudyConfig config);

}  // namespace ispw

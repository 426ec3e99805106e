#pragma once

// Request/report model behind the command-line tool.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "ispw/aft.hpp"
#include "ispw/lasso.hpp"
#include "ispw/simulation.hpp"
#include "ispw/survival.hpp"

namespace ispw {

inline constexpr const char* kToolName = "ispw";
inline constexpr const char* kToolVersion = "0.1.0";

enum class Command { Km, Tian, Lasso, CvLasso, AicSearch, Simulate };

std::string to_string(Command command);
Command parse_command(const std::string& text);

struct AnalysisRequest {
    Command command = Command::Km;

    std::string input;
    std::optional<double> tau;
    bool add_intercept = true;
    TauEventRule tau_rule = TauEventRule::AsRecorded;

    Link link = Link::Log;
    LassoConfig lasso;

    std::vector<DistributionKind> distributions = {std::begin(kAllDistributions), std::end(kAllDistributions)};
    // Covariate names per candidate subset; all subsets with the intercept when unset.
    std::optional<std::vector<std::vector<std::string>>> subsets;
    AicConvention aic;

    StudyKind study = StudyKind::Selection;
    std::vector<int> scenarios = {1};
    std::vector<std::size_t> sample_sizes = {200};
    std::size_t reps = 100;
    std::uint64_t seed = 1;
    std::vector<Method> methods;  // study defaults when empty
    bool decay_lambda = false;
    double tau_quantile = 0.85;
    std::optional<double> sim_tau;
    TauEventRule sim_tau_rule = TauEventRule::TauReachedIsCensored;
    std::size_t workers = 1;

    std::string format = "json";
    std::optional<std::string> out;

    void validate() const;
};

// Effective configuration; the worker count is left out since it does not
// affect results.
nlohmann::json to_json(const AnalysisRequest& request);

struct AnalysisReport {
    std::string tool = kToolName;
    std::string tool_version = kToolVersion;
    Command command = Command::Km;
    nlohmann::json config;
    nlohmann::json payload;
    std::vector<std::string> warnings;
};

nlohmann::json to_json(const AnalysisReport& report);
AnalysisReport report_from_json(const nlohmann::json& j);

nlohmann::json to_json(const SimResult& result);

AnalysisReport run(const AnalysisRequest& request);

// "json" (full precision) or "csv" (6 significant digits).
std::string render(const AnalysisReport& report, const std::string& format);

nlohmann::json error_json(ErrorCode code, const std::string& message);

// 0 success, 2 input error, 3 numerical failure.
int exit_code(ErrorCode code);

}  // namespace ispw

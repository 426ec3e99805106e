#pragma once

// ISPW-weighted likelihood for accelerated failure time models
//   log Y = X'beta + sigma * eps
// with eps standard normal (log-normal), minimum-Gumbel with density
// exp(e - exp(e)) (Weibull) or standard logistic (log-logistic).

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "ispw/survival.hpp"

namespace ispw {

enum class DistributionKind { LogNormal, Weibull, LogLogistic };

inline constexpr DistributionKind kAllDistributions[] = {
    DistributionKind::LogNormal, DistributionKind::Weibull, DistributionKind::LogLogistic};

std::string to_string(DistributionKind kind);
DistributionKind parse_distribution(const std::string& text);

struct AftParams {
    Eigen::VectorXd beta;
    double sigma = 1.0;
    DistributionKind kind = DistributionKind::LogNormal;
};

// PerSubject divides the log-likelihood by n before doubling.
enum class AicScaling { Unscaled, PerSubject };

std::string to_string(AicScaling scaling);
AicScaling parse_aic_scaling(const std::string& text);

struct AicConvention {
    AicScaling scaling = AicScaling::Unscaled;
    bool count_sigma = true;
};

struct AftFit {
    AftParams params;
    double loglik = 0.0;
    int k = 0;
    double aic = 0.0;
    bool converged = false;
    int iterations = 0;
    std::vector<std::size_t> subset;
    std::size_t n_subjects = 0;
    std::vector<double> loglik_trace;  // one entry per accepted Newton iterate
    std::string message;
};

struct MleOptions {
    int max_iter = 200;
    double score_tol = 1e-8;
    double step_tol = 1e-10;
    int max_halvings = 30;
    AicConvention aic;
};

double log_density(DistributionKind kind, double y, double eta, double sigma);

double ispw_loglik(const RestrictedDataset& dataset, const IspwWeightVector& weights,
                   const AftParams& params, const std::vector<std::size_t>& subset);

// Gradient in (beta, scale) where the scale coordinate is sigma^2 for the
// log-normal family and sigma for Weibull and log-logistic.
Eigen::VectorXd score(const RestrictedDataset& dataset, const IspwWeightVector& weights,
                      const AftParams& params, const std::vector<std::size_t>& subset);

Eigen::MatrixXd hessian(const RestrictedDataset& dataset, const IspwWeightVector& weights,
                        const AftParams& params, const std::vector<std::size_t>& subset);

AftFit mle_fit(const RestrictedDataset& dataset, const IspwWeightVector& weights, DistributionKind kind,
               const std::vector<std::size_t>& subset, const std::optional<AftParams>& init = std::nullopt,
               const MleOptions& options = {});

double aic(const AftFit& fit, const AicConvention& convention = {});

struct SubsetSearchResult {
    std::vector<AftFit> fits;  // ordered by subset mask, then distribution
    std::vector<std::pair<DistributionKind, std::size_t>> best_per_kind;  // index into fits
    std::size_t best = 0;
    AicConvention convention;
};

// Every column subset containing column 0 when the dataset has an intercept,
// otherwise every non-empty subset; ordered by bitmask.
std::vector<std::vector<std::size_t>> all_subsets(const RestrictedDataset& dataset);

SubsetSearchResult subset_search(const RestrictedDataset& dataset, const IspwWeightVector& weights,
                                 const std::vector<DistributionKind>& kinds,
                                 const std::optional<std::vector<std::vector<std::size_t>>>& candidate_subsets = std::nullopt,
                                 const AicConvention& convention = {});

}  // namespace ispw

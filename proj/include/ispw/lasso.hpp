#pragma once

// ISPW-weighted penalized least squares on h(Y), Tian's weighted estimating
// equation, and K-fold cross-validation of the lasso tuning parameter.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "ispw/linalg.hpp"
#include "ispw/survival.hpp"

namespace ispw {

enum class Link { Log, Identity };

std::string to_string(Link link);
Link parse_link(const std::string& text);

// Scaling of the weighted squared loss.
//   TotalSubjects:  (1/n) sum w_i r_i^2, n counting censored subjects.
//   HalfWeightSum:  (1/(2 sum w)) sum w_i r_i^2 (glmnet's weighted gaussian loss).
enum class LossScale { TotalSubjects, HalfWeightSum };

std::string to_string(LossScale scale);
LossScale parse_loss_scale(const std::string& text);

std::vector<double> default_lambda_grid();

struct LassoConfig {
    double lambda = 0.1;
    Link link = Link::Log;
    bool penalize_intercept = false;
    // Penalize each coefficient by the weighted SD of its column, which is
    // the same as fitting standardized covariates and mapping back.
    bool standardize = true;
    LossScale loss_scale = LossScale::HalfWeightSum;
    double tol = 1e-10;
    int max_iter = 100000;
    int cv_folds = 5;
    std::vector<double> lambda_grid = default_lambda_grid();
    std::uint64_t cv_seed = 20240101;
    bool record_trace = false;

    void validate() const;
};

struct LassoFit {
    Eigen::VectorXd beta;
    double lambda = 0.0;
    double objective = 0.0;
    int iterations = 0;
    bool converged = false;
    std::vector<bool> selected;
    std::vector<double> sweep_objectives;  // filled when record_trace is set
};

struct CvResult {
    std::vector<double> lambda_grid;
    std::vector<double> mean_cv_error;
    double chosen_lambda = 0.0;
    LassoFit fit_at_chosen;
    std::vector<int> fold_of;  // fold index per record
};

// Response h(Y_i) for every record.
Eigen::VectorXd transformed_response(const RestrictedDataset& dataset, Link link);

double lasso_objective(const RestrictedDataset& dataset, const IspwWeightVector& weights,
                       const LassoConfig& config, const Eigen::VectorXd& beta);

// Per-coefficient multipliers of lambda under the configuration.
Eigen::VectorXd penalty_factors(const RestrictedDataset& dataset, const IspwWeightVector& weights,
                                const LassoConfig& config);

// Smallest lambda at which every penalized coefficient is zero.
double lambda_max(const RestrictedDataset& dataset, const IspwWeightVector& weights,
                  const LassoConfig& config);

LassoFit weighted_lasso_fit(const RestrictedDataset& dataset, const IspwWeightVector& weights,
                            const LassoConfig& config,
                            const std::optional<Eigen::VectorXd>& warm_start = std::nullopt);

// Fits along the grid in the order given, warm-starting each from the last.
std::vector<LassoFit> lasso_path(const RestrictedDataset& dataset, const IspwWeightVector& weights,
                                 const LassoConfig& config, const std::vector<double>& grid);

// EstimatingEquation solves sum_i w_i X_i (Y_i - g^{-1}(X_i'beta)) = 0 with
// g the link; TransformedLeastSquares regresses h(Y) on X (the lambda = 0
// lasso). Tian's RMST regression is EstimatingEquation with censoring_weights().
enum class TianEstimator { EstimatingEquation, TransformedLeastSquares };

LassoFit tian_fit(const RestrictedDataset& dataset, const IspwWeightVector& weights, Link link,
                  TianEstimator estimator = TianEstimator::EstimatingEquation);

CvResult cv_select_lambda(const RestrictedDataset& dataset, const IspwWeightVector& weights,
                          const LassoConfig& config);

std::vector<std::string> selection_pattern(const LassoFit& fit,
                                           const std::vector<std::string>& covariate_names);

}  // namespace ispw

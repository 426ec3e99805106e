#include "ispw/lasso.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <Eigen/Cholesky>

namespace ispw {

std::string to_string(Link link) { return link == Link::Log ? "log" : "identity"; }

Link parse_link(const std::string& text) {
    if (text == "log") return Link::Log;
    if (text == "identity") return Link::Identity;
    throw Error(ErrorCode::InvalidConfig, "unknown link '" + text + "'");
}

std::string to_string(LossScale scale) {
    return scale == LossScale::TotalSubjects ? "total-subjects" : "half-weight-sum";
}

LossScale parse_loss_scale(const std::string& text) {
    if (text == "total-subjects") return LossScale::TotalSubjects;
    if (text == "half-weight-sum") return LossScale::HalfWeightSum;
    throw Error(ErrorCode::InvalidConfig, "unknown loss scale '" + text + "'");
}

std::vector<double> default_lambda_grid() {
    std::vector<double> grid;
    for (int k = 30; k >= 1; --k) grid.push_back(k / 100.0);
    return grid;
}

void LassoConfig::validate() const {
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw Error(ErrorCode::InvalidConfig, "lambda must be >= 0");
    if (!(tol > 0.0)) throw Error(ErrorCode::InvalidConfig, "tol must be > 0");
    if (max_iter < 1) throw Error(ErrorCode::InvalidConfig, "max_iter must be >= 1");
    if (cv_folds < 2) throw Error(ErrorCode::InvalidConfig, "cv_folds must be >= 2");
    for (double l : lambda_grid) {
        if (!(l > 0.0)) throw Error(ErrorCode::InvalidConfig, "lambda grid values must be positive");
    }
}

// ============================================================================
// Helpers
// ============================================================================

namespace {

Eigen::VectorXd weight_vector(const RestrictedDataset& dataset, const IspwWeightVector& weights) {
    if (weights.weights.size() != dataset.n()) {
        throw Error(ErrorCode::InvalidConfig, "weight vector length does not match dataset");
    }
    return Eigen::Map<const Eigen::VectorXd>(weights.weights.data(),
                                             static_cast<Eigen::Index>(weights.weights.size()));
}

// Rows with positive weight; the only rows that enter any weighted loss.
struct WeightedRows {
    Eigen::MatrixXd x;
    Eigen::VectorXd y;
    Eigen::VectorXd w;
};

WeightedRows weighted_rows(const RestrictedDataset& dataset, const IspwWeightVector& weights,
                           const Eigen::VectorXd& response) {
    const Eigen::VectorXd w = weight_vector(dataset, weights);
    std::vector<Eigen::Index> keep;
    for (Eigen::Index i = 0; i < w.size(); ++i) {
        if (w(i) < 0.0 || !std::isfinite(w(i))) throw Error(ErrorCode::DegenerateWeight, "weights must be finite and >= 0");
        if (w(i) > 0.0) keep.push_back(i);
    }
    if (keep.empty()) throw Error(ErrorCode::NoEvents, "no record carries positive weight");
    const Eigen::MatrixXd full = dataset.design();
    WeightedRows out;
    out.x.resize(static_cast<Eigen::Index>(keep.size()), full.cols());
    out.y.resize(static_cast<Eigen::Index>(keep.size()));
    out.w.resize(static_cast<Eigen::Index>(keep.size()));
    for (std::size_t k = 0; k < keep.size(); ++k) {
        const auto i = keep[k];
        out.x.row(static_cast<Eigen::Index>(k)) = full.row(i);
        out.y(static_cast<Eigen::Index>(k)) = response(i);
        out.w(static_cast<Eigen::Index>(k)) = w(i);
        if (!std::isfinite(response(i))) throw Error(ErrorCode::NonFiniteObjective, "h(Y) is not finite");
    }
    return out;
}

double loss_multiplier(const RestrictedDataset& dataset, double weight_sum, LossScale scale) {
    return scale == LossScale::TotalSubjects ? 1.0 / static_cast<double>(dataset.n())
                                             : 1.0 / (2.0 * weight_sum);
}

double soft_threshold(double z, double gamma) {
    if (z > gamma) return z - gamma;
    if (z < -gamma) return z + gamma;
    return 0.0;
}

Eigen::VectorXd penalty_factors_rows(const WeightedRows& rows, bool has_intercept, const LassoConfig& config) {
    const Eigen::Index q = rows.x.cols();
    Eigen::VectorXd pf = Eigen::VectorXd::Ones(q);
    const double wsum = rows.w.sum();
    for (Eigen::Index j = 0; j < q; ++j) {
        if (has_intercept && j == 0) {
            pf(j) = config.penalize_intercept ? 1.0 : 0.0;
            continue;
        }
        if (config.standardize) {
            const double mean = rows.w.dot(rows.x.col(j)) / wsum;
            const double var = rows.w.dot((rows.x.col(j).array() - mean).square().matrix()) / wsum;
            // constant non-intercept column: no scale to standardize by
            pf(j) = var > 0.0 ? std::sqrt(var) : 1.0;
        }
    }
    return pf;
}

}  // namespace

Eigen::VectorXd transformed_response(const RestrictedDataset& dataset, Link link) {
    Eigen::VectorXd y = dataset.times();
    if (link == Link::Log) y = y.array().log().matrix();
    return y;
}

Eigen::VectorXd penalty_factors(const RestrictedDataset& dataset, const IspwWeightVector& weights,
                                const LassoConfig& config) {
    const auto rows = weighted_rows(dataset, weights, transformed_response(dataset, config.link));
    return penalty_factors_rows(rows, dataset.has_intercept(), config);
}

double lasso_objective(const RestrictedDataset& dataset, const IspwWeightVector& weights,
                       const LassoConfig& config, const Eigen::VectorXd& beta) {
    const auto rows = weighted_rows(dataset, weights, transformed_response(dataset, config.link));
    const Eigen::VectorXd pf = penalty_factors_rows(rows, dataset.has_intercept(), config);
    const double c = loss_multiplier(dataset, rows.w.sum(), config.loss_scale);
    const Eigen::VectorXd r = rows.y - rows.x * beta;
    return c * rows.w.dot(r.cwiseAbs2()) + config.lambda * pf.dot(beta.cwiseAbs());
}

double lambda_max(const RestrictedDataset& dataset, const IspwWeightVector& weights,
                  const LassoConfig& config) {
    const auto rows = weighted_rows(dataset, weights, transformed_response(dataset, config.link));
    const Eigen::VectorXd pf = penalty_factors_rows(rows, dataset.has_intercept(), config);
    const double c = loss_multiplier(dataset, rows.w.sum(), config.loss_scale);

    // Fit the unpenalized columns alone (the intercept when it is free), then
    // the KKT bound on the remaining gradient gives the threshold.
    std::vector<Eigen::Index> free_cols;
    for (Eigen::Index j = 0; j < pf.size(); ++j) {
        if (pf(j) == 0.0) free_cols.push_back(j);
    }
    Eigen::VectorXd r = rows.y;
    if (!free_cols.empty()) {
        Eigen::MatrixXd xf(rows.x.rows(), static_cast<Eigen::Index>(free_cols.size()));
        for (std::size_t k = 0; k < free_cols.size(); ++k) xf.col(static_cast<Eigen::Index>(k)) = rows.x.col(free_cols[k]);
        r = rows.y - xf * weighted_normal_equations(xf, rows.y, rows.w);
    }
    double lmax = 0.0;
    for (Eigen::Index j = 0; j < pf.size(); ++j) {
        if (pf(j) == 0.0) continue;
        const double g = std::abs(2.0 * c * rows.w.dot(rows.x.col(j).cwiseProduct(r)));
        lmax = std::max(lmax, g / pf(j));
    }
    return lmax;
}

// ============================================================================
// Coordinate descent
// ============================================================================

LassoFit weighted_lasso_fit(const RestrictedDataset& dataset, const IspwWeightVector& weights,
                            const LassoConfig& config, const std::optional<Eigen::VectorXd>& warm_start) {
    config.validate();
    if (dataset.n_events() == 0) throw Error(ErrorCode::NoEvents, "all records are censored");
    const auto rows = weighted_rows(dataset, weights, transformed_response(dataset, config.link));
    const Eigen::Index q = rows.x.cols();
    for (Eigen::Index j = 0; j < q; ++j) {
        if (rows.x.col(j).cwiseAbs().maxCoeff() == 0.0) {
            throw Error(ErrorCode::InvalidDataset,
                        "covariate '" + dataset.covariate_names()[static_cast<std::size_t>(j)] +
                            "' is identically zero among events");
        }
    }

    const Eigen::VectorXd pf = penalty_factors_rows(rows, dataset.has_intercept(), config);
    const double wsum = rows.w.sum();
    const double c = loss_multiplier(dataset, wsum, config.loss_scale);

    // With a free intercept, centre the other columns on their weighted means;
    // the problem is unchanged and coordinate descent no longer fights the
    // intercept/covariate correlation.
    const bool centre = dataset.has_intercept() && pf(0) == 0.0;
    Eigen::MatrixXd x = rows.x;
    Eigen::VectorXd means = Eigen::VectorXd::Zero(q);
    if (centre) {
        for (Eigen::Index j = 1; j < q; ++j) {
            means(j) = rows.w.dot(rows.x.col(j)) / wsum;
            x.col(j).array() -= means(j);
        }
    }

    Eigen::VectorXd beta = Eigen::VectorXd::Zero(q);
    if (warm_start) {
        if (warm_start->size() != q) throw Error(ErrorCode::InvalidConfig, "warm start has wrong length");
        beta = *warm_start;
        if (centre) beta(0) += means.tail(q - 1).dot(beta.tail(q - 1));
    } else if (centre) {
        beta(0) = rows.w.dot(rows.y) / wsum;
    }

    Eigen::VectorXd col_ss(q);
    for (Eigen::Index j = 0; j < q; ++j) col_ss(j) = rows.w.dot(x.col(j).cwiseAbs2());

    Eigen::VectorXd r = rows.y - x * beta;
    auto objective = [&]() { return c * rows.w.dot(r.cwiseAbs2()) + config.lambda * pf.dot(beta.cwiseAbs()); };

    LassoFit fit;
    fit.lambda = config.lambda;
    for (int sweep = 1; sweep <= config.max_iter; ++sweep) {
        double max_change = 0.0;
        for (Eigen::Index j = 0; j < q; ++j) {
            const double old = beta(j);
            const double rho = rows.w.dot(x.col(j).cwiseProduct(r)) + col_ss(j) * old;
            const double updated = soft_threshold(2.0 * c * rho, config.lambda * pf(j)) / (2.0 * c * col_ss(j));
            if (updated != old) {
                r.noalias() -= (updated - old) * x.col(j);
                beta(j) = updated;
                max_change = std::max(max_change, std::abs(updated - old));
            }
        }
        fit.iterations = sweep;
        if (config.record_trace) fit.sweep_objectives.push_back(objective());
        if (max_change < config.tol) {
            fit.converged = true;
            break;
        }
    }

    if (centre) beta(0) -= means.tail(q - 1).dot(beta.tail(q - 1));
    fit.beta = beta;
    const Eigen::VectorXd raw_r = rows.y - rows.x * beta;
    fit.objective = c * rows.w.dot(raw_r.cwiseAbs2()) + config.lambda * pf.dot(beta.cwiseAbs());
    if (!std::isfinite(fit.objective)) throw Error(ErrorCode::NonFiniteObjective, "lasso objective is not finite");
    fit.selected.resize(static_cast<std::size_t>(q));
    for (Eigen::Index j = 0; j < q; ++j) fit.selected[static_cast<std::size_t>(j)] = beta(j) != 0.0;
    return fit;
}

std::vector<LassoFit> lasso_path(const RestrictedDataset& dataset, const IspwWeightVector& weights,
                                 const LassoConfig& config, const std::vector<double>& grid) {
    std::vector<LassoFit> fits;
    fits.reserve(grid.size());
    LassoConfig cfg = config;
    std::optional<Eigen::VectorXd> warm;
    for (double lambda : grid) {
        cfg.lambda = lambda;
        fits.push_back(weighted_lasso_fit(dataset, weights, cfg, warm));
        warm = fits.back().beta;
    }
    return fits;
}

// ============================================================================
// Tian's estimator
// ============================================================================

LassoFit tian_fit(const RestrictedDataset& dataset, const IspwWeightVector& weights, Link link,
                  TianEstimator estimator) {
    if (dataset.n_events() == 0 && estimator == TianEstimator::TransformedLeastSquares) {
        throw Error(ErrorCode::NoEvents, "all records are censored");
    }
    const Eigen::VectorXd h = transformed_response(dataset, link);
    const auto rows = weighted_rows(dataset, weights, h);
    const Eigen::MatrixXd gram = weighted_gram(rows.x, rows.w);
    require_full_rank(gram);

    LassoFit fit;
    fit.lambda = 0.0;
    fit.converged = true;
    Eigen::VectorXd beta = weighted_normal_equations(rows.x, rows.y, rows.w);

    if (estimator == TianEstimator::EstimatingEquation && link == Link::Log) {
        // sum w x (y - exp(x'b)) = 0 is the score of the concave quasi-Poisson
        // objective sum w (y x'b - exp(x'b)); Newton with step halving on it.
        const Eigen::VectorXd y = rows.y.array().exp().matrix();
        auto quasi = [&](const Eigen::VectorXd& b) {
            const Eigen::VectorXd eta = rows.x * b;
            return rows.w.dot((y.array() * eta.array() - eta.array().exp()).matrix());
        };
        double current = quasi(beta);
        fit.converged = false;
        for (int it = 1; it <= 200; ++it) {
            const Eigen::VectorXd mu = (rows.x * beta).array().exp().matrix();
            const Eigen::VectorXd u = rows.x.transpose() * rows.w.cwiseProduct(y - mu);
            const Eigen::MatrixXd info = rows.x.transpose() * rows.w.cwiseProduct(mu).asDiagonal() * rows.x;
            const Eigen::VectorXd step = info.ldlt().solve(u);
            fit.iterations = it;
            const double scale = std::max(1.0, rows.w.dot(y));
            if (u.cwiseAbs().maxCoeff() < 1e-10 * scale || step.cwiseAbs().maxCoeff() < 1e-12) {
                fit.converged = true;
                break;
            }
            double t = 1.0;
            Eigen::VectorXd candidate = beta + step;
            double value = quasi(candidate);
            int halvings = 0;
            while ((!std::isfinite(value) || value < current) && halvings < 30) {
                t *= 0.5;
                candidate = beta + t * step;
                value = quasi(candidate);
                ++halvings;
            }
            if (!std::isfinite(value) || value < current) break;
            beta = candidate;
            current = value;
        }
        if (!beta.allFinite()) throw Error(ErrorCode::NonFiniteObjective, "Tian estimating equation diverged");
    }

    fit.beta = beta;
    const double c = 1.0 / static_cast<double>(dataset.n());
    fit.objective = c * rows.w.dot((rows.y - rows.x * beta).cwiseAbs2());
    fit.selected.resize(static_cast<std::size_t>(beta.size()));
    for (Eigen::Index j = 0; j < beta.size(); ++j) fit.selected[static_cast<std::size_t>(j)] = beta(j) != 0.0;
    return fit;
}

// ============================================================================
// Cross-validation
// ============================================================================

CvResult cv_select_lambda(const RestrictedDataset& dataset, const IspwWeightVector& weights,
                          const LassoConfig& config) {
    config.validate();
    if (config.lambda_grid.empty()) throw Error(ErrorCode::InvalidConfig, "lambda grid is empty");
    if (dataset.n_events() < static_cast<std::size_t>(config.cv_folds)) {
        throw Error(ErrorCode::TooFewEvents, "fewer events than cross-validation folds");
    }
    const int k_folds = config.cv_folds;

    std::vector<double> grid = config.lambda_grid;
    std::sort(grid.begin(), grid.end(), std::greater<>());
    grid.erase(std::unique(grid.begin(), grid.end()), grid.end());

    // Stratified assignment: events and censored records are shuffled
    // separately and dealt round-robin, continuing the deal across strata.
    std::vector<std::size_t> ev, cens;
    for (std::size_t i = 0; i < dataset.n(); ++i) (dataset[i].event ? ev : cens).push_back(i);
    std::mt19937_64 rng(config.cv_seed);
    std::shuffle(ev.begin(), ev.end(), rng);
    std::shuffle(cens.begin(), cens.end(), rng);
    std::vector<int> fold_of(dataset.n(), 0);
    std::size_t deal = 0;
    for (auto i : ev) fold_of[i] = static_cast<int>(deal++ % static_cast<std::size_t>(k_folds));
    for (auto i : cens) fold_of[i] = static_cast<int>(deal++ % static_cast<std::size_t>(k_folds));

    const Eigen::VectorXd h = transformed_response(dataset, config.link);
    const Eigen::MatrixXd x = dataset.design();
    std::vector<double> err_num(grid.size(), 0.0);
    double err_den = 0.0;

    for (int k = 0; k < k_folds; ++k) {
        std::vector<std::size_t> train, test;
        for (std::size_t i = 0; i < dataset.n(); ++i) (fold_of[i] == k ? test : train).push_back(i);
        const RestrictedDataset train_set = dataset.select_rows(train);
        const KaplanMeierCurve curve = km_estimate(train_set);
        const IspwWeightVector train_w = ispw_weights(train_set, curve);
        const auto path = lasso_path(train_set, train_w, config, grid);

        // Held-out events beyond the last training jump would get an infinite
        // weight; they use the last positive survival value instead.
        double floor_s = 1.0;
        for (double s : curve.survival) {
            if (s > 0.0) floor_s = s;
        }
        for (auto i : test) {
            if (!dataset[i].event) continue;
            double s = km_eval(curve, dataset[i].time);
            if (!(s > 0.0)) s = floor_s;
            const double wi = 1.0 / s;
            err_den += wi;
            for (std::size_t g = 0; g < grid.size(); ++g) {
                const double e = h(static_cast<Eigen::Index>(i)) - x.row(static_cast<Eigen::Index>(i)).dot(path[g].beta);
                err_num[g] += wi * e * e;
            }
        }
    }

    CvResult out;
    out.lambda_grid = grid;
    out.fold_of = fold_of;
    out.mean_cv_error.resize(grid.size());
    std::size_t best = 0;
    for (std::size_t g = 0; g < grid.size(); ++g) {
        out.mean_cv_error[g] = err_num[g] / err_den;
        // grid is decreasing, so a strict improvement is needed to move to a smaller lambda
        if (out.mean_cv_error[g] < out.mean_cv_error[best] * (1.0 - 1e-12)) best = g;
    }
    out.chosen_lambda = grid[best];
    LassoConfig cfg = config;
    cfg.lambda = out.chosen_lambda;
    out.fit_at_chosen = weighted_lasso_fit(dataset, weights, cfg);
    return out;
}

std::vector<std::string> selection_pattern(const LassoFit& fit, const std::vector<std::string>& covariate_names) {
    std::vector<std::string> names;
    for (Eigen::Index j = 0; j < fit.beta.size(); ++j) {
        if (fit.beta(j) != 0.0) {
            const auto idx = static_cast<std::size_t>(j);
            names.push_back(idx < covariate_names.size() ? covariate_names[idx] : "x" + std::to_string(j + 1));
        }
    }
    return names;
}

}  // namespace ispw

#include "ispw/aft.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include <Eigen/Cholesky>

#include "ispw/linalg.hpp"

namespace ispw {

std::string to_string(DistributionKind kind) {
    switch (kind) {
        case DistributionKind::LogNormal: return "lognormal";
        case DistributionKind::Weibull: return "weibull";
        case DistributionKind::LogLogistic: return "loglogistic";
    }
    return "lognormal";
}

DistributionKind parse_distribution(const std::string& text) {
    if (text == "lognormal" || text == "log-normal" || text == "LN") return DistributionKind::LogNormal;
    if (text == "weibull" || text == "W") return DistributionKind::Weibull;
    if (text == "loglogistic" || text == "log-logistic" || text == "LL") return DistributionKind::LogLogistic;
    throw Error(ErrorCode::InvalidConfig, "unknown distribution '" + text + "'");
}

std::string to_string(AicScaling scaling) {
    return scaling == AicScaling::Unscaled ? "unscaled" : "per-subject";
}

AicScaling parse_aic_scaling(const std::string& text) {
    if (text == "unscaled") return AicScaling::Unscaled;
    if (text == "per-subject") return AicScaling::PerSubject;
    throw Error(ErrorCode::InvalidConfig, "unknown AIC scaling '" + text + "'");
}

// ============================================================================
// Error laws
// ============================================================================

namespace {

// log f_eps(z) and its first two derivatives.
struct ErrorLaw {
    double psi;
    double d1;
    double d2;
};

double softplus(double z) { return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

double logistic(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

ErrorLaw error_law(DistributionKind kind, double z) {
    switch (kind) {
        case DistributionKind::LogNormal:
            return {-0.5 * std::log(2.0 * std::numbers::pi) - 0.5 * z * z, -z, -1.0};
        case DistributionKind::Weibull: {
            const double ez = std::exp(z);
            return {z - ez, 1.0 - ez, -ez};
        }
        case DistributionKind::LogLogistic: {
            const double p = logistic(z);
            return {z - 2.0 * softplus(z), 1.0 - 2.0 * p, -2.0 * p * (1.0 - p)};
        }
    }
    return {0.0, 0.0, 0.0};
}

void check_domain(double y, double sigma) {
    if (!(y > 0.0) || !std::isfinite(y)) throw Error(ErrorCode::DomainError, "survival time must be positive");
    if (!(sigma > 0.0) || !std::isfinite(sigma)) throw Error(ErrorCode::DomainError, "sigma must be positive");
}

struct Derivatives {
    double loglik = 0.0;
    Eigen::VectorXd grad;  // (beta, sigma)
    Eigen::MatrixXd hess;  // (beta, sigma)
};

struct SubsetRows {
    Eigen::MatrixXd x;
    Eigen::VectorXd log_y;
    Eigen::VectorXd w;
};

SubsetRows subset_rows(const RestrictedDataset& dataset, const IspwWeightVector& weights,
                       const std::vector<std::size_t>& subset) {
    if (weights.weights.size() != dataset.n()) {
        throw Error(ErrorCode::InvalidConfig, "weight vector length does not match dataset");
    }
    if (subset.empty()) throw Error(ErrorCode::InvalidConfig, "empty covariate subset");
    std::size_t m = 0;
    for (double w : weights.weights) {
        if (w < 0.0 || !std::isfinite(w)) throw Error(ErrorCode::DegenerateWeight, "weights must be finite and >= 0");
        if (w > 0.0) ++m;
    }
    SubsetRows rows;
    rows.x.resize(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(subset.size()));
    rows.log_y.resize(static_cast<Eigen::Index>(m));
    rows.w.resize(static_cast<Eigen::Index>(m));
    Eigen::Index k = 0;
    for (std::size_t i = 0; i < dataset.n(); ++i) {
        const double w = weights.weights[i];
        if (w == 0.0) continue;
        const auto& rec = dataset[i];
        if (!(rec.time > 0.0)) throw Error(ErrorCode::DomainError, "survival time must be positive");
        for (std::size_t j = 0; j < subset.size(); ++j) {
            if (subset[j] >= rec.covariates.size()) throw Error(ErrorCode::InvalidConfig, "covariate index out of range");
            rows.x(k, static_cast<Eigen::Index>(j)) = rec.covariates[subset[j]];
        }
        rows.log_y(k) = std::log(rec.time);
        rows.w(k) = w;
        ++k;
    }
    return rows;
}

// Per-row pieces in terms of z = (log y - eta) / sigma:
//   d/d eta       = -psi' / sigma
//   d/d sigma     = -(1 + z psi') / sigma
//   d2/d eta2     = psi'' / sigma^2
//   d2/d eta dsig = (psi' + z psi'') / sigma^2
//   d2/d sigma2   = (1 + 2 z psi' + z^2 psi'') / sigma^2
Derivatives derivatives(const SubsetRows& rows, DistributionKind kind, const Eigen::VectorXd& beta, double sigma,
                        bool with_hessian) {
    const Eigen::Index p = rows.x.cols();
    if (beta.size() != p) throw Error(ErrorCode::InvalidConfig, "beta length does not match subset");
    if (!(sigma > 0.0) || !std::isfinite(sigma)) throw Error(ErrorCode::DomainError, "sigma must be positive");
    Derivatives d;
    d.grad = Eigen::VectorXd::Zero(p + 1);
    if (with_hessian) d.hess = Eigen::MatrixXd::Zero(p + 1, p + 1);
    const Eigen::VectorXd eta = rows.x * beta;
    const double inv_s = 1.0 / sigma;
    const double inv_s2 = inv_s * inv_s;
    const double log_s = std::log(sigma);
    for (Eigen::Index i = 0; i < rows.x.rows(); ++i) {
        const double w = rows.w(i);
        const double z = (rows.log_y(i) - eta(i)) * inv_s;
        const ErrorLaw e = error_law(kind, z);
        d.loglik += w * (-log_s - rows.log_y(i) + e.psi);
        const double l_eta = -e.d1 * inv_s;
        const double l_sig = -(1.0 + z * e.d1) * inv_s;
        d.grad.head(p).noalias() += (w * l_eta) * rows.x.row(i).transpose();
        d.grad(p) += w * l_sig;
        if (with_hessian) {
            const double l_ee = e.d2 * inv_s2;
            const double l_es = (e.d1 + z * e.d2) * inv_s2;
            const double l_ss = (1.0 + 2.0 * z * e.d1 + z * z * e.d2) * inv_s2;
            const auto xi = rows.x.row(i).transpose();
            d.hess.topLeftCorner(p, p).noalias() += (w * l_ee) * xi * xi.transpose();
            d.hess.col(p).head(p).noalias() += (w * l_es) * xi;
            d.hess(p, p) += w * l_ss;
        }
    }
    if (with_hessian) d.hess.row(p).head(p) = d.hess.col(p).head(p).transpose();
    return d;
}

}  // namespace

double log_density(DistributionKind kind, double y, double eta, double sigma) {
    check_domain(y, sigma);
    const double log_y = std::log(y);
    const double z = (log_y - eta) / sigma;
    return -std::log(sigma) - log_y + error_law(kind, z).psi;
}

double ispw_loglik(const RestrictedDataset& dataset, const IspwWeightVector& weights, const AftParams& params,
                   const std::vector<std::size_t>& subset) {
    if (dataset.n_events() == 0) throw Error(ErrorCode::NoEvents, "all records are censored");
    const auto rows = subset_rows(dataset, weights, subset);
    return derivatives(rows, params.kind, params.beta, params.sigma, false).loglik;
}

Eigen::VectorXd score(const RestrictedDataset& dataset, const IspwWeightVector& weights, const AftParams& params,
                      const std::vector<std::size_t>& subset) {
    const auto rows = subset_rows(dataset, weights, subset);
    Derivatives d = derivatives(rows, params.kind, params.beta, params.sigma, false);
    if (params.kind == DistributionKind::LogNormal) {
        const auto p = d.grad.size() - 1;
        d.grad(p) /= 2.0 * params.sigma;  // d/d sigma^2
    }
    return d.grad;
}

Eigen::MatrixXd hessian(const RestrictedDataset& dataset, const IspwWeightVector& weights, const AftParams& params,
                        const std::vector<std::size_t>& subset) {
    const auto rows = subset_rows(dataset, weights, subset);
    Derivatives d = derivatives(rows, params.kind, params.beta, params.sigma, true);
    if (params.kind == DistributionKind::LogNormal) {
        const auto p = d.grad.size() - 1;
        const double s = params.sigma;
        d.hess(p, p) = (d.hess(p, p) - d.grad(p) / s) / (4.0 * s * s);
        d.hess.col(p).head(p) /= 2.0 * s;
        d.hess.row(p).head(p) /= 2.0 * s;
    }
    return d.hess;
}

double aic(const AftFit& fit, const AicConvention& convention) {
    const int k = static_cast<int>(fit.subset.size()) + (convention.count_sigma ? 1 : 0);
    double ll = fit.loglik;
    if (convention.scaling == AicScaling::PerSubject) {
        if (fit.n_subjects == 0) throw Error(ErrorCode::InvalidConfig, "per-subject AIC needs the subject count");
        ll /= static_cast<double>(fit.n_subjects);
    }
    return -2.0 * ll + 2.0 * k;
}

// ============================================================================
// Maximum ISPW likelihood
// ============================================================================

AftFit mle_fit(const RestrictedDataset& dataset, const IspwWeightVector& weights, DistributionKind kind,
               const std::vector<std::size_t>& subset, const std::optional<AftParams>& init,
               const MleOptions& options) {
    if (dataset.n_events() == 0) throw Error(ErrorCode::NoEvents, "all records are censored");
    const auto rows = subset_rows(dataset, weights, subset);
    if (rows.x.rows() == 0) throw Error(ErrorCode::NoEvents, "no record carries positive weight");
    require_full_rank(weighted_gram(rows.x, rows.w));
    const Eigen::Index p = rows.x.cols();

    AftFit fit;
    fit.subset = subset;
    fit.n_subjects = dataset.n();
    fit.params.kind = kind;
    fit.k = static_cast<int>(subset.size()) + (options.aic.count_sigma ? 1 : 0);

    // Closed-form log-normal solution: weighted normal equations for beta and
    // the weighted mean squared residual for sigma^2.
    const Eigen::VectorXd beta_ln = weighted_normal_equations(rows.x, rows.log_y, rows.w);
    const Eigen::VectorXd resid = rows.log_y - rows.x * beta_ln;
    const double sigma2_ln = rows.w.dot(resid.cwiseAbs2()) / rows.w.sum();
    if (!(sigma2_ln > 0.0)) {
        throw Error(ErrorCode::DomainError, "residual variance is zero; the scale is not identifiable");
    }

    if (kind == DistributionKind::LogNormal && !init) {
        fit.params.beta = beta_ln;
        fit.params.sigma = std::sqrt(sigma2_ln);
        fit.loglik = derivatives(rows, kind, fit.params.beta, fit.params.sigma, false).loglik;
        fit.loglik_trace.push_back(fit.loglik);
        fit.converged = true;
        fit.aic = aic(fit, options.aic);
        return fit;
    }

    Eigen::VectorXd beta = init ? init->beta : beta_ln;
    double sigma = init ? init->sigma : std::sqrt(sigma2_ln);
    if (beta.size() != p) throw Error(ErrorCode::InvalidConfig, "initial beta has wrong length");

    // Newton on phi = (beta, log sigma):
    //   g_phi = (g_beta, sigma g_sigma)
    //   H_phi = [H_bb, sigma H_bs; ., sigma^2 H_ss + sigma g_sigma]
    auto phi_derivatives = [&](const Eigen::VectorXd& b, double s) {
        Derivatives d = derivatives(rows, kind, b, s, true);
        d.grad(p) *= s;
        d.hess(p, p) = s * s * d.hess(p, p) + d.grad(p);
        d.hess.col(p).head(p) *= s;
        d.hess.row(p).head(p) *= s;
        return d;
    };

    Derivatives cur = phi_derivatives(beta, sigma);
    if (!std::isfinite(cur.loglik)) throw Error(ErrorCode::DomainError, "log-likelihood is not finite at the start");
    fit.loglik_trace.push_back(cur.loglik);

    for (int it = 1; it <= options.max_iter; ++it) {
        fit.iterations = it;
        if (cur.grad.cwiseAbs().maxCoeff() < options.score_tol) {
            fit.converged = true;
            break;
        }
        // Ascent direction from the negated Hessian, ridged until positive definite.
        const Eigen::MatrixXd neg_h = -cur.hess;
        Eigen::VectorXd dir;
        double ridge = 0.0;
        for (int attempt = 0; attempt < 60; ++attempt) {
            Eigen::MatrixXd a = neg_h;
            a.diagonal().array() += ridge;
            Eigen::LLT<Eigen::MatrixXd> llt(a);
            if (llt.info() == Eigen::Success) {
                dir = llt.solve(cur.grad);
                if (dir.allFinite()) break;
            }
            ridge = ridge == 0.0 ? 1e-8 * std::max(1.0, neg_h.diagonal().cwiseAbs().maxCoeff()) : ridge * 10.0;
            dir.resize(0);
        }
        if (dir.size() == 0) {
            fit.message = "no ascent direction";
            break;
        }

        double t = 1.0;
        bool accepted = false;
        Eigen::VectorXd next_beta;
        double next_sigma = sigma;
        Derivatives next;
        for (int h = 0; h <= options.max_halvings; ++h) {
            next_beta = beta + t * dir.head(p);
            next_sigma = sigma * std::exp(t * dir(p));
            if (next_sigma > 0.0 && std::isfinite(next_sigma)) {
                next = phi_derivatives(next_beta, next_sigma);
                if (std::isfinite(next.loglik) && next.loglik >= cur.loglik && next.grad.allFinite()) {
                    accepted = true;
                    break;
                }
            }
            t *= 0.5;
        }
        if (!accepted) {
            fit.message = "step halving failed to improve the log-likelihood";
            break;
        }
        const double step = (t * dir).cwiseAbs().maxCoeff();
        beta = next_beta;
        sigma = next_sigma;
        cur = std::move(next);
        fit.loglik_trace.push_back(cur.loglik);
        if (step < options.step_tol || cur.grad.cwiseAbs().maxCoeff() < options.score_tol) {
            fit.converged = true;
            break;
        }
    }
    if (!fit.converged && fit.message.empty()) fit.message = "iteration limit reached";

    fit.params.beta = beta;
    fit.params.sigma = sigma;
    fit.loglik = cur.loglik;
    fit.aic = aic(fit, options.aic);
    return fit;
}

// ============================================================================
// Subset search
// ============================================================================

std::vector<std::vector<std::size_t>> all_subsets(const RestrictedDataset& dataset) {
    const std::size_t q = dataset.q();
    if (q == 0 || q > 20) throw Error(ErrorCode::InvalidConfig, "subset enumeration needs 1 <= q <= 20");
    std::vector<std::vector<std::size_t>> out;
    for (std::size_t mask = 1; mask < (std::size_t{1} << q); ++mask) {
        if (dataset.has_intercept() && !(mask & 1u)) continue;
        std::vector<std::size_t> s;
        for (std::size_t j = 0; j < q; ++j) {
            if (mask & (std::size_t{1} << j)) s.push_back(j);
        }
        out.push_back(std::move(s));
    }
    return out;
}

SubsetSearchResult subset_search(const RestrictedDataset& dataset, const IspwWeightVector& weights,
                                 const std::vector<DistributionKind>& kinds,
                                 const std::optional<std::vector<std::vector<std::size_t>>>& candidate_subsets,
                                 const AicConvention& convention) {
    if (kinds.empty()) throw Error(ErrorCode::InvalidConfig, "no distributions requested");
    auto subsets = candidate_subsets ? *candidate_subsets : all_subsets(dataset);
    for (auto& s : subsets) {
        std::sort(s.begin(), s.end());
        s.erase(std::unique(s.begin(), s.end()), s.end());
    }
    auto mask_of = [](const std::vector<std::size_t>& s) {
        std::size_t m = 0;
        for (auto j : s) m |= std::size_t{1} << j;
        return m;
    };
    std::stable_sort(subsets.begin(), subsets.end(),
                     [&](const auto& a, const auto& b) { return mask_of(a) < mask_of(b); });

    MleOptions options;
    options.aic = convention;
    SubsetSearchResult result;
    result.convention = convention;
    for (const auto& s : subsets) {
        for (auto kind : kinds) {
            AftFit fit;
            try {
                fit = mle_fit(dataset, weights, kind, s, std::nullopt, options);
            } catch (const Error& e) {
                if (e.code() == ErrorCode::InvalidConfig) throw;
                fit.params.kind = kind;
                fit.subset = s;
                fit.n_subjects = dataset.n();
                fit.k = static_cast<int>(s.size()) + (convention.count_sigma ? 1 : 0);
                fit.converged = false;
                fit.loglik = std::numeric_limits<double>::quiet_NaN();
                fit.aic = std::numeric_limits<double>::quiet_NaN();
                fit.message = std::string(to_string(e.code())) + ": " + e.what();
            }
            result.fits.push_back(std::move(fit));
        }
    }

    bool any = false;
    for (auto kind : kinds) {
        std::optional<std::size_t> best;
        for (std::size_t i = 0; i < result.fits.size(); ++i) {
            const auto& f = result.fits[i];
            if (f.params.kind != kind || !f.converged) continue;
            if (!best || f.aic < result.fits[*best].aic) best = i;
        }
        if (best) {
            result.best_per_kind.emplace_back(kind, *best);
            if (!any || result.fits[*best].aic < result.fits[result.best].aic) result.best = *best;
            any = true;
        }
    }
    if (!any) throw Error(ErrorCode::AllFitsFailed, "no candidate model converged");
    return result;
}

}  // namespace ispw

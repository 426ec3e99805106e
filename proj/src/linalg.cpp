#include "ispw/linalg.hpp"

#include <cmath>
#include <limits>
#include <string>

#include <Eigen/Cholesky>
#include <Eigen/SVD>

#include "ispw/error.hpp"

namespace ispw {

Eigen::MatrixXd weighted_gram(const Eigen::MatrixXd& x, const Eigen::VectorXd& w) {
    return x.transpose() * w.asDiagonal() * x;
}

double condition_number(const Eigen::MatrixXd& m) {
    if (m.size() == 0) return std::numeric_limits<double>::infinity();
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
    const auto& sv = svd.singularValues();
    const double smax = sv(0);
    const double smin = sv(sv.size() - 1);
    if (!(smin > 0.0)) return std::numeric_limits<double>::infinity();
    return smax / smin;
}

void require_full_rank(const Eigen::MatrixXd& gram) {
    const double cond = condition_number(gram);
    if (!(cond <= kSingularConditionLimit)) {
        throw Error(ErrorCode::SingularDesign,
                    "weighted Gram matrix is singular (condition estimate " + std::to_string(cond) + ")");
    }
}

Eigen::VectorXd weighted_normal_equations(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                                          const Eigen::VectorXd& w) {
    const Eigen::MatrixXd gram = weighted_gram(x, w);
    require_full_rank(gram);
    const Eigen::VectorXd rhs = x.transpose() * w.cwiseProduct(y);
    return gram.ldlt().solve(rhs);
}

}  // namespace ispw

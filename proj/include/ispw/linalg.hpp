#pragma once

#include <Eigen/Core>

namespace ispw {

// Weighted Gram matrices above this condition number are treated as singular.
inline constexpr double kSingularConditionLimit = 1e12;

Eigen::MatrixXd weighted_gram(const Eigen::MatrixXd& x, const Eigen::VectorXd& w);

// Ratio of extreme singular values; infinity for a zero matrix.
double condition_number(const Eigen::MatrixXd& m);

// Throws SingularDesign when the weighted Gram matrix is (numerically) rank deficient.
void require_full_rank(const Eigen::MatrixXd& gram);

// Solves (X'WX) beta = X'Wy.
Eigen::VectorXd weighted_normal_equations(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                                          const Eigen::VectorXd& w);

}  // namespace ispw

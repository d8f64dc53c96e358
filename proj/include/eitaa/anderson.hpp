#pragma once

#include <Eigen/Dense>

#include <functional>
#include <string>
#include <vector>

namespace eitaa {

struct AaConfig {
    int m = 2;            // history depth; 0 disables acceleration
    double ridge = 1e-10; // relative Tikhonov term for the normal equations
};

struct AlphaResult {
    Eigen::VectorXd alpha;
    bool degenerate = false; // fell back to the pure latest iterate
};

/// Minimize ||R alpha|| subject to sum(alpha) = 1 via the normal equations
/// (R^T R + ridge * ||R^T R||_F * I) x = 1, alpha = x / sum(x).
AlphaResult solve_alpha(const Eigen::MatrixXd& residuals, double ridge);

struct AaTrace {
    std::vector<Eigen::VectorXd> iterates;
    std::vector<double> residual_norms; // ||g(x_k) - x_k|| per iterate
    int degenerate_solves = 0;
    bool converged = false;
};

/// Anderson acceleration of the fixed-point iteration x = g(x).
/// With m = 0 this is exactly the naive iteration x_{k+1} = g(x_k).
AaTrace aa_iterate(const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& g, const Eigen::VectorXd& x0,
                   const AaConfig& config, int max_iters, double tol);

/// CSV with header "iter,residual_norm".
std::string trace_to_csv(const AaTrace& trace);

} // namespace eitaa

#include "eitaa/anderson.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace eitaa {

AlphaResult solve_alpha(const Eigen::MatrixXd& residuals, double ridge) {
    const Eigen::Index cols = residuals.cols();
    if (cols < 1) throw std::invalid_argument("solve_alpha: residual matrix has no columns");
    if (!residuals.allFinite()) throw std::invalid_argument("solve_alpha: residual matrix has non-finite entries");

    AlphaResult out;
    if (cols == 1) {
        out.alpha = Eigen::VectorXd::Ones(1);
        return out;
    }
    Eigen::MatrixXd gram = residuals.transpose() * residuals;
    gram.diagonal().array() += ridge * gram.norm();
    const Eigen::VectorXd x = gram.ldlt().solve(Eigen::VectorXd::Ones(cols));
    const double total = x.sum();
    if (!(std::abs(total) > 0.0) || !x.allFinite()) {
        out.alpha = Eigen::VectorXd::Zero(cols);
        out.alpha[0] = 1.0;
        out.degenerate = true;
        return out;
    }
    out.alpha = x / total;
    return out;
}

AaTrace aa_iterate(const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& g, const Eigen::VectorXd& x0,
                   const AaConfig& config, int max_iters, double tol) {
    if (max_iters < 1) throw std::invalid_argument("aa_iterate: max_iters must be >= 1");
    if (config.m < 0) throw std::invalid_argument("aa_iterate: history depth must be >= 0");

    AaTrace trace;
    std::vector<Eigen::VectorXd> gs; // g(x_k) aligned with trace.iterates

    auto eval = [&](const Eigen::VectorXd& x) {
        Eigen::VectorXd gx = g(x);
        if (!gx.allFinite()) throw std::runtime_error("aa_iterate: mapping returned non-finite values");
        return gx;
    };

    trace.iterates.push_back(x0);
    gs.push_back(eval(x0));
    trace.residual_norms.push_back((gs[0] - x0).norm());

    // x_1 = g(x_0)
    trace.iterates.push_back(gs[0]);

    for (int k = 1; k < max_iters; ++k) {
        const Eigen::VectorXd& xk = trace.iterates[k];
        gs.push_back(eval(xk));
        const Eigen::VectorXd rk = gs[k] - xk;
        trace.residual_norms.push_back(rk.norm());
        if (rk.norm() <= tol) {
            trace.converged = true;
            return trace;
        }
        const int mk = std::min(config.m, k);
        Eigen::VectorXd alpha;
        if (mk == 0) {
            alpha = Eigen::VectorXd::Ones(1);
        } else {
            Eigen::MatrixXd residuals(x0.size(), mk + 1);
            for (int i = 0; i <= mk; ++i) residuals.col(i) = gs[k - i] - trace.iterates[k - i];
            AlphaResult res = solve_alpha(residuals, config.ridge);
            alpha = res.alpha;
            if (res.degenerate) trace.degenerate_solves++;
        }
        Eigen::VectorXd next = Eigen::VectorXd::Zero(x0.size());
        for (int i = 0; i < alpha.size(); ++i) next += alpha[i] * gs[k - i];
        trace.iterates.push_back(std::move(next));
    }

    // residual at the final iterate
    const Eigen::VectorXd& xlast = trace.iterates.back();
    const Eigen::VectorXd glast = eval(xlast);
    trace.residual_norms.push_back((glast - xlast).norm());
    trace.converged = trace.residual_norms.back() <= tol;
    return trace;
}

std::string trace_to_csv(const AaTrace& trace) {
    std::ostringstream out;
    out << "iter,residual_norm\n";
    out.precision(17);
    for (std::size_t k = 0; k < trace.residual_norms.size(); ++k)
        out << k << "," << trace.residual_norms[k] << "\n";
    return out.str();
}

} // namespace eitaa

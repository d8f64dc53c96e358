#include "eitaa/newton.hpp"

#include "eitaa/anderson.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace eitaa {

void GnConfig::validate() const {
    if (!(mu > 0.0)) throw std::invalid_argument("GnConfig: mu must be positive");
    if (!(beta > 0.0 && beta <= 1.0)) throw std::invalid_argument("GnConfig: beta must lie in (0,1]");
    if (iters < 1) throw std::invalid_argument("GnConfig: iters must be >= 1");
    if (m < 0) throw std::invalid_argument("GnConfig: AA depth must be >= 0");
}

Eigen::VectorXd gn_step(const Eigen::VectorXd& sigma, const Eigen::VectorXd& z_prev, const Eigen::MatrixXd& jacobian,
                        const Eigen::VectorXd& residual, double mu) {
    if (!(mu > 0.0)) throw std::invalid_argument("gn_step: mu must be positive");
    if (!sigma.allFinite() || !z_prev.allFinite() || !jacobian.allFinite() || !residual.allFinite())
        throw std::invalid_argument("gn_step: non-finite input");
    Eigen::MatrixXd h = jacobian.transpose() * jacobian;
    h.diagonal().array() += mu;
    const Eigen::VectorXd rhs = -(jacobian.transpose() * residual) - mu * (sigma - z_prev);
    return Eigen::LDLT<Eigen::MatrixXd>(h).solve(rhs);
}

namespace {

// gamma minimizing ||w - F gamma||, with the same relative-ridge safeguard as
// solve_alpha. Empty or degenerate history yields gamma = 0 (plain step).
Eigen::VectorXd solve_gamma(const Eigen::MatrixXd& f_cols, const Eigen::VectorXd& w, double ridge, int* degenerate) {
    const Eigen::Index m = f_cols.cols();
    Eigen::MatrixXd gram = f_cols.transpose() * f_cols;
    const double scale = gram.norm();
    if (!(scale > 0.0) || !gram.allFinite()) {
        if (degenerate) (*degenerate)++;
        return Eigen::VectorXd::Zero(m);
    }
    gram.diagonal().array() += ridge * scale;
    Eigen::VectorXd gamma = gram.ldlt().solve(f_cols.transpose() * w);
    if (!gamma.allFinite()) {
        if (degenerate) (*degenerate)++;
        return Eigen::VectorXd::Zero(m);
    }
    return gamma;
}

// alpha over {x_k, ..., x_{k-m}} reconstructed from gamma by telescoping;
// sums to 1 exactly for any gamma.
Eigen::VectorXd alpha_from_gamma(const Eigen::VectorXd& gamma) {
    const Eigen::Index m = gamma.size();
    Eigen::VectorXd alpha(m + 1);
    alpha[0] = 1.0 - gamma[0];
    for (Eigen::Index i = 1; i < m; ++i) alpha[i] = gamma[i - 1] - gamma[i];
    alpha[m] = gamma[m - 1];
    return alpha;
}

} // namespace

GnAaRecord gauss_newton_aa_record(const Eigen::VectorXd& sigma0, const Eigen::VectorXd& z, const Eigen::VectorXd& v,
                                  const ModelFn& model, const GnConfig& config, bool keep_factors) {
    config.validate();
    const Eigen::Index n = sigma0.size();
    GnAaRecord rec;
    rec.sigmas.push_back(sigma0);

    Eigen::MatrixXd jacobian;
    if (!config.refresh_jacobian) model(sigma0, nullptr, &jacobian);

    auto direction = [&](const Eigen::VectorXd& sigma) {
        Eigen::VectorXd f;
        if (config.refresh_jacobian) {
            model(sigma, &f, &jacobian);
        } else {
            model(sigma, &f, nullptr);
        }
        Eigen::MatrixXd h = jacobian.transpose() * jacobian;
        h.diagonal().array() += config.mu;
        Eigen::LDLT<Eigen::MatrixXd> ldlt(h);
        const Eigen::VectorXd grad = jacobian.transpose() * (f - v) + config.mu * (sigma - z);
        Eigen::VectorXd w = ldlt.solve(-grad);
        if (!w.allFinite()) throw std::runtime_error("gauss_newton_aa: non-finite Gauss-Newton direction");
        if (keep_factors) rec.h_factors.push_back(std::move(ldlt));
        return w;
    };

    // sigma^1 = sigma^0 + beta * w_1
    rec.ws.push_back(direction(sigma0));
    rec.alphas.push_back(Eigen::VectorXd::Ones(1));
    rec.sigmas.push_back(rec.sigmas[0] + config.beta * rec.ws[0]);

    for (int k = 1; k < config.iters; ++k) {
        rec.ws.push_back(direction(rec.sigmas[k])); // w_{k+1}
        const int mk = std::min(config.m, k);
        Eigen::VectorXd alpha;
        if (mk == 0) {
            alpha = Eigen::VectorXd::Ones(1);
        } else {
            Eigen::MatrixXd f_cols(n, mk);
            for (int i = 0; i < mk; ++i) f_cols.col(i) = rec.ws[k - i] - rec.ws[k - i - 1];
            const Eigen::VectorXd gamma = solve_gamma(f_cols, rec.ws[k], config.gamma_ridge, &rec.degenerate_solves);
            alpha = alpha_from_gamma(gamma);
        }
        Eigen::VectorXd next;
        if (alpha.size() == 1) {
            next = rec.sigmas[k] + config.beta * rec.ws[k];
        } else {
            next = Eigen::VectorXd::Zero(n);
            for (int i = 0; i < alpha.size(); ++i)
                next += alpha[i] * (rec.sigmas[k - i] + config.beta * rec.ws[k - i]);
        }
        rec.alphas.push_back(std::move(alpha));
        rec.sigmas.push_back(std::move(next));
    }
    return rec;
}

std::vector<Eigen::VectorXd> gauss_newton_solve(const Eigen::VectorXd& sigma0, const Eigen::VectorXd& z,
                                                const Eigen::VectorXd& v, const ModelFn& model, const GnConfig& config) {
    GnConfig plain = config;
    plain.m = 0;
    return gauss_newton_aa_record(sigma0, z, v, model, plain).sigmas;
}

std::vector<Eigen::VectorXd> gauss_newton_aa(const Eigen::VectorXd& sigma0, const Eigen::VectorXd& z,
                                             const Eigen::VectorXd& v, const ModelFn& model, const GnConfig& config) {
    return gauss_newton_aa_record(sigma0, z, v, model, config).sigmas;
}

// --- Two-variable exponential root benchmark ----------------------------------

Eigen::Vector2d example331_f(const Eigen::Vector2d& x) {
    return {1e4 * x[0] * x[1] - 1.0, std::exp(-x[0]) + std::exp(-x[1]) - 1.0001};
}

Eigen::Matrix2d example331_jacobian(const Eigen::Vector2d& x) {
    Eigen::Matrix2d j;
    j << 1e4 * x[1], 1e4 * x[0], -std::exp(-x[0]), -std::exp(-x[1]);
    return j;
}

namespace {

RootAaTrace root_aa_run(const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& f,
                        const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& step, const Eigen::VectorXd& x0,
                        const RootAaOptions& opt) {
    RootAaTrace trace;
    const Eigen::Index n = x0.size();
    std::vector<Eigen::VectorXd> ws;

    trace.xs.push_back(x0);
    trace.f_norms.push_back(f(x0).norm());

    auto advance = [&](const Eigen::VectorXd& candidate, const Eigen::VectorXd& fallback_base,
                       const Eigen::VectorXd& w) -> bool {
        // damped retry: halve the step until the iterate is finite
        Eigen::VectorXd next = candidate;
        double beta = opt.beta;
        for (int attempt = 0; attempt < 10 && !next.allFinite(); ++attempt) {
            beta *= 0.5;
            next = fallback_base + beta * w;
        }
        if (!next.allFinite()) return false;
        trace.xs.push_back(next);
        trace.f_norms.push_back(f(next).norm());
        return true;
    };

    int degenerate = 0;
    for (int k = 0; k < opt.max_iters; ++k) {
        if (trace.f_norms.back() < opt.tol) {
            trace.converged = true;
            return trace;
        }
        const Eigen::VectorXd& xk = trace.xs.back();
        Eigen::VectorXd w = step(xk);
        if (!w.allFinite()) {
            trace.aborted = true;
            return trace;
        }
        ws.push_back(w);
        Eigen::VectorXd candidate;
        const int mk = std::min(opt.m, k);
        if (mk == 0 || static_cast<int>(ws.size()) < 2) {
            candidate = xk + opt.beta * w;
        } else {
            Eigen::MatrixXd f_cols(n, mk);
            Eigen::MatrixXd e_cols(n, mk);
            const int kk = static_cast<int>(ws.size()) - 1; // index of w_{k+1}
            for (int i = 0; i < mk; ++i) {
                f_cols.col(i) = ws[kk - i] - ws[kk - i - 1];
                e_cols.col(i) = trace.xs[kk - i] - trace.xs[kk - i - 1];
            }
            const Eigen::VectorXd gamma = solve_gamma(f_cols, w, opt.gamma_ridge, &degenerate);
            candidate = xk + opt.beta * w - (e_cols + opt.beta * f_cols) * gamma;
        }
        if (!advance(candidate, xk, w)) {
            trace.aborted = true;
            return trace;
        }
    }
    trace.converged = trace.f_norms.back() < opt.tol;
    return trace;
}

} // namespace

RootAaTrace newton_aa(const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& f,
                      const std::function<Eigen::MatrixXd(const Eigen::VectorXd&)>& jac, const Eigen::VectorXd& x0,
                      const RootAaOptions& options) {
    auto step = [&](const Eigen::VectorXd& x) -> Eigen::VectorXd {
        const Eigen::MatrixXd j = jac(x);
        Eigen::VectorXd w = Eigen::PartialPivLU<Eigen::MatrixXd>(j).solve(-f(x));
        if (!w.allFinite()) {
            // singular Jacobian: fall back to the ridge-safeguarded normal equations
            Eigen::MatrixXd h = j.transpose() * j;
            const double scale = h.norm();
            h.diagonal().array() += options.gamma_ridge * (scale > 0.0 ? scale : 1.0);
            w = h.ldlt().solve(j.transpose() * (-f(x)));
        }
        return w;
    };
    return root_aa_run(f, step, x0, options);
}

RootAaTrace gauss_newton_aa_root(const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& f,
                                 const std::function<Eigen::MatrixXd(const Eigen::VectorXd&)>& jac,
                                 const Eigen::VectorXd& x0, const RootAaOptions& options) {
    auto step = [&](const Eigen::VectorXd& x) -> Eigen::VectorXd {
        const Eigen::MatrixXd j = jac(x);
        Eigen::MatrixXd h = j.transpose() * j;
        const double scale = h.norm();
        h.diagonal().array() += options.gamma_ridge * (scale > 0.0 ? scale : 1.0);
        return h.ldlt().solve(j.transpose() * (-f(x)));
    };
    return root_aa_run(f, step, x0, options);
}

std::vector<BenchmarkRun> newton_aa_benchmark(const std::vector<Eigen::Vector2d>& x0s, const std::vector<int>& ms,
                                              const RootAaOptions& base_options) {
    auto f = [](const Eigen::VectorXd& x) -> Eigen::VectorXd { return example331_f(x); };
    auto j = [](const Eigen::VectorXd& x) -> Eigen::MatrixXd { return example331_jacobian(x); };
    std::vector<BenchmarkRun> runs;
    for (std::size_t id = 0; id < x0s.size(); ++id)
        for (int m : ms) {
            RootAaOptions opt = base_options;
            opt.m = m;
            runs.push_back({"NAA", m, static_cast<int>(id), newton_aa(f, j, x0s[id], opt)});
            runs.push_back({"GNAA", m, static_cast<int>(id), gauss_newton_aa_root(f, j, x0s[id], opt)});
        }
    return runs;
}

std::string benchmark_to_csv(const std::vector<BenchmarkRun>& runs) {
    std::ostringstream out;
    out.precision(17);
    out << "method,m,x0_id,iter,f_norm\n";
    for (const auto& run : runs)
        for (std::size_t k = 0; k < run.trace.f_norms.size(); ++k)
            out << run.method << "," << run.m << "," << run.x0_id << "," << k << "," << run.trace.f_norms[k] << "\n";
    return out.str();
}

// --- Levenberg-Marquardt ------------------------------------------------------

std::vector<Eigen::VectorXd> gn_lm_baseline(const Eigen::VectorXd& sigma0, const Eigen::VectorXd& v,
                                            const ModelFn& model, const LmConfig& config) {
    if (!(config.lambda0 > 0.0)) throw std::invalid_argument("gn_lm_baseline: lambda0 must be positive");
    if (config.iters < 1) throw std::invalid_argument("gn_lm_baseline: iters must be >= 1");

    std::vector<Eigen::VectorXd> trace{sigma0};
    double lambda = config.lambda0;

    Eigen::VectorXd f;
    Eigen::MatrixXd j;
    model(sigma0, &f, &j);
    double objective = 0.5 * (f - v).squaredNorm();

    for (int k = 0; k < config.iters; ++k) {
        Eigen::MatrixXd h = j.transpose() * j;
        h.diagonal().array() += lambda;
        const Eigen::VectorXd delta = h.ldlt().solve(-(j.transpose() * (f - v)));
        const Eigen::VectorXd candidate = trace.back() + delta;
        Eigen::VectorXd f_new;
        model(candidate, &f_new, nullptr);
        const double obj_new = 0.5 * (f_new - v).squaredNorm();
        if (obj_new <= objective && candidate.allFinite()) {
            trace.push_back(candidate);
            objective = obj_new;
            lambda /= 10.0;
            model(candidate, nullptr, &j);
            f = f_new;
        } else {
            trace.push_back(trace.back()); // rejected step, keep the iterate
            lambda *= 10.0;
        }
    }
    return trace;
}

} // namespace eitaa

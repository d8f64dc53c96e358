#include "eitaa/pipeline.hpp"

#include "eitaa/rng.hpp"

#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace eitaa {

void ReconConfig::validate() const {
    if (folds < 1) throw std::invalid_argument("ReconConfig: need at least one fold");
    if (gn_iters < 1 || lpgd_steps < 1) throw std::invalid_argument("ReconConfig: inner iteration counts must be >= 1");
    if (m_gn < 0 || m_lpgd < 0) throw std::invalid_argument("ReconConfig: acceleration depths must be >= 0");
    if (!(mu > 0.0)) throw std::invalid_argument("ReconConfig: mu must be positive");
    if (!(beta > 0.0 && beta <= 1.0)) throw std::invalid_argument("ReconConfig: beta must lie in (0,1]");
}

void TrainConfig::validate() const {
    if (epochs < 1 || batch < 1) throw std::invalid_argument("TrainConfig: epochs and batch size must be >= 1");
    if (!(lr > 0.0)) throw std::invalid_argument("TrainConfig: learning rate must be positive");
}

namespace {

GnConfig gn_config_of(const ReconConfig& config) {
    GnConfig gn;
    gn.mu = config.mu;
    gn.beta = config.beta;
    gn.iters = config.gn_iters;
    gn.m = config.m_gn;
    gn.gamma_ridge = config.gamma_ridge;
    return gn;
}

LpgdConfig lpgd_config_of(const ReconConfig& config) {
    LpgdConfig lp;
    lp.mu = config.mu;
    lp.m = config.m_lpgd;
    lp.K = config.lpgd_steps;
    lp.ridge = config.ridge;
    return lp;
}

/// Reverse pass through one Gauss-Newton inner run. The direction w_j =
/// H_j^{-1}(-J^T(F - v) - mu (sigma - z)) is differentiated with J held fixed
/// at the iterate, which gives dw/dsigma = -I and dw/dz = mu H_j^{-1}; the
/// combination weights are constants. Adds into z_bar and returns the
/// gradient w.r.t. the warm start sigma^0.
Eigen::VectorXd gn_backward(const GnAaRecord& rec, double mu, double beta, const Eigen::VectorXd& sigma_out_bar,
                            Eigen::VectorXd& z_bar) {
    const int iters = static_cast<int>(rec.ws.size());
    if (static_cast<int>(rec.h_factors.size()) != iters)
        throw std::invalid_argument("gn_backward: record was built without factors");
    std::vector<Eigen::VectorXd> sbar(iters + 1, Eigen::VectorXd::Zero(sigma_out_bar.size()));
    std::vector<Eigen::VectorXd> wbar(iters, Eigen::VectorXd::Zero(sigma_out_bar.size()));
    sbar[iters] = sigma_out_bar;
    for (int j = iters; j >= 1; --j) {
        const Eigen::VectorXd& alpha = rec.alphas[j - 1];
        for (int i = 0; i < alpha.size(); ++i) {
            sbar[j - 1 - i] += alpha[i] * sbar[j];
            wbar[j - 1 - i] += beta * alpha[i] * sbar[j];
        }
        // all consumers of w_j are now processed
        sbar[j - 1] -= wbar[j - 1];
        z_bar += mu * rec.h_factors[j - 1].solve(wbar[j - 1]);
    }
    return sbar[0];
}

/// Reverse pass through one proximal inner run. Adds the parameter gradient
/// into param_acc and the gradient w.r.t. the fold's sigma into sigma_bar;
/// returns the gradient w.r.t. the warm start z^0.
Eigen::VectorXd lpgd_backward(const ProxNetParams& params, const LpgdRecord& rec, double mu,
                              const Eigen::VectorXd& z_out_bar, Eigen::VectorXd& sigma_bar,
                              Eigen::VectorXd& param_acc) {
    const int steps = static_cast<int>(rec.ys.size());
    if (static_cast<int>(rec.caches.size()) != steps)
        throw std::invalid_argument("lpgd_backward: record was built without caches");
    const Eigen::Index n = z_out_bar.size();
    // g_t = concat(z^t, mu (z^t - sigma)) for t = 0 .. steps-1
    std::vector<Eigen::VectorXd> gbar(steps, Eigen::VectorXd::Zero(2 * n));
    Eigen::VectorXd zbar = z_out_bar; // running gradient at z^j
    for (int j = steps; j >= 1; --j) {
        if (j < steps) {
            zbar = gbar[j].head(n) + mu * gbar[j].tail(n);
            sigma_bar -= mu * gbar[j].tail(n);
        }
        Eigen::VectorXd y_head_bar, y_tail_bar;
        prox_backward_acc(params, rec.caches[j - 1], zbar, param_acc, y_head_bar, y_tail_bar);
        const Eigen::VectorXd& alpha = rec.alphas[j - 1];
        for (int i = 0; i < alpha.size(); ++i) {
            gbar[j - 1 - i].head(n) += alpha[i] * y_head_bar;
            gbar[j - 1 - i].tail(n) += alpha[i] * y_tail_bar;
        }
    }
    sigma_bar -= mu * gbar[0].tail(n);
    return gbar[0].head(n) + mu * gbar[0].tail(n);
}

} // namespace

UnrolledRecord unrolled_forward(const ProxNetParams& params, const ModelFn& model, const Eigen::VectorXd& v,
                                Eigen::Index n, const ReconConfig& config, bool keep_for_backward) {
    config.validate();
    const GnConfig gn = gn_config_of(config);
    const LpgdConfig lp = lpgd_config_of(config);

    UnrolledRecord rec;
    Eigen::VectorXd sigma = Eigen::VectorXd::Ones(n);
    Eigen::VectorXd z = Eigen::VectorXd::Ones(n);

    // Normalize the data misfit by the RMS sensitivity of the homogeneous
    // background so that the mu||sigma - z||^2 penalty is weighed against a
    // data term of unit scale, independent of electrode geometry, contact
    // impedance, and injection current. Without this the per-element
    // sensitivities (~1e-3 here) make any mu >= 0.1 swamp the measurements.
    Eigen::MatrixXd j0;
    model(sigma, nullptr, &j0);
    const double scale = std::sqrt(j0.squaredNorm() / static_cast<double>(n));
    const double inv = scale > 0.0 ? 1.0 / scale : 1.0;
    const ModelFn scaled = [&model, inv](const Eigen::VectorXd& s, Eigen::VectorXd* f, Eigen::MatrixXd* j) {
        model(s, f, j);
        if (f) *f *= inv;
        if (j) *j *= inv;
    };
    const Eigen::VectorXd v_scaled = inv * v;

    for (int fold = 0; fold < config.folds; ++fold) {
        rec.gn.push_back(gauss_newton_aa_record(sigma, z, v_scaled, scaled, gn, keep_for_backward));
        sigma = rec.gn.back().sigmas.back();
        if (fold + 1 < config.folds) {
            rec.lpgd.push_back(aa_lpgd_record(params, z, sigma, lp, keep_for_backward));
            z = rec.lpgd.back().zs.back();
        }
    }
    rec.sigma_out = sigma;
    return rec;
}

Eigen::VectorXd reconstruct(const ProxNetParams& params, const ModelFn& model, const Eigen::VectorXd& v,
                            Eigen::Index n, const ReconConfig& config) {
    return unrolled_forward(params, model, v, n, config, false).sigma_out;
}

Eigen::VectorXd unrolled_backward(const ProxNetParams& params, const UnrolledRecord& record,
                                  const ReconConfig& config, const Eigen::VectorXd& sigma_out_bar) {
    config.validate();
    if (static_cast<int>(record.gn.size()) != config.folds ||
        static_cast<int>(record.lpgd.size()) != config.folds - 1)
        throw std::invalid_argument("unrolled_backward: record does not match the configuration");

    Eigen::VectorXd param_acc = Eigen::VectorXd::Zero(params.n_parameters());
    Eigen::VectorXd sigma_bar = sigma_out_bar;
    Eigen::VectorXd z_bar = Eigen::VectorXd::Zero(sigma_out_bar.size());
    for (int fold = config.folds - 1; fold >= 0; --fold) {
        if (fold < config.folds - 1) {
            // z_{fold+1} = LPGD(z_fold, sigma_{fold+1}); its gradient adds to
            // this fold's sigma output and to the previous z
            Eigen::VectorXd z_in_bar = lpgd_backward(params, record.lpgd[fold], config.mu, z_bar, sigma_bar, param_acc);
            z_bar = std::move(z_in_bar);
        } else {
            z_bar.setZero();
        }
        Eigen::VectorXd sigma_in_bar = gn_backward(record.gn[fold], config.mu, config.beta, sigma_bar, z_bar);
        sigma_bar = std::move(sigma_in_bar);
    }
    // gradients w.r.t. the constant initializations sigma_0 = z_0 = 1 are dropped
    return param_acc;
}

double unrolled_loss_and_grad(const ProxNetParams& params, const ModelFn& model, const Eigen::VectorXd& v,
                              const Eigen::VectorXd& sigma_true, const ReconConfig& config,
                              Eigen::VectorXd* param_grad) {
    const Eigen::Index n = sigma_true.size();
    const UnrolledRecord rec = unrolled_forward(params, model, v, n, config, param_grad != nullptr);
    const Eigen::VectorXd diff = rec.sigma_out - sigma_true;
    const double loss = diff.squaredNorm() / static_cast<double>(n);
    if (param_grad) {
        const Eigen::VectorXd sigma_out_bar = (2.0 / static_cast<double>(n)) * diff;
        *param_grad = unrolled_backward(params, rec, config, sigma_out_bar);
    }
    return loss;
}

ModelFn make_eit_model(const Mesh& mesh, const ElectrodeConfig& electrodes, const StimProtocol& protocol,
                       double sigma_floor) {
    if (!(sigma_floor > 0.0)) throw std::invalid_argument("make_eit_model: floor must be positive");
    return [&mesh, electrodes, protocol, sigma_floor](const Eigen::VectorXd& sigma_raw, Eigen::VectorXd* f_out,
                                                      Eigen::MatrixXd* j_out) {
        ConductivityField sigma{sigma_raw.cwiseMax(sigma_floor)};
        forward_and_jacobian(mesh, sigma, electrodes, protocol, f_out, j_out);
    };
}

TrainResult train_proxnet(const ProxNetParams& init, const ModelFn& model, const std::vector<TrainSample>& samples,
                          const ReconConfig& recon, const TrainConfig& config) {
    recon.validate();
    config.validate();
    if (samples.empty()) throw std::invalid_argument("train_proxnet: no training samples");

    TrainResult result;
    result.params = init;
    const Eigen::Index p = result.params.n_parameters();
    Eigen::VectorXd theta = result.params.pack();
    Eigen::VectorXd m1 = Eigen::VectorXd::Zero(p);
    Eigen::VectorXd m2 = Eigen::VectorXd::Zero(p);
    long step = 0;

    Rng rng(config.seed);
    std::vector<std::size_t> order(samples.size());
    std::iota(order.begin(), order.end(), std::size_t{0});

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        for (std::size_t i = order.size(); i > 1; --i) {
            const std::size_t j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i) - 1));
            std::swap(order[i - 1], order[j]);
        }
        double epoch_loss = 0.0;
        for (std::size_t at = 0; at < order.size(); at += config.batch) {
            const std::size_t take = std::min<std::size_t>(config.batch, order.size() - at);
            Eigen::VectorXd grad = Eigen::VectorXd::Zero(p);
            for (std::size_t b = 0; b < take; ++b) {
                const std::size_t idx = order[at + b];
                const TrainSample& sample = samples[idx];
                Eigen::VectorXd g;
                const double loss = unrolled_loss_and_grad(result.params, model, sample.v, sample.sigma, recon, &g);
                if (!std::isfinite(loss) || !g.allFinite()) {
                    std::ostringstream msg;
                    msg << "train_proxnet: non-finite loss or gradient at epoch " << epoch << ", sample " << idx;
                    throw std::runtime_error(msg.str());
                }
                epoch_loss += loss;
                grad += g;
            }
            grad /= static_cast<double>(take);
            ++step;
            m1 = config.beta1 * m1 + (1.0 - config.beta1) * grad;
            m2 = config.beta2 * m2 + (1.0 - config.beta2) * grad.cwiseProduct(grad);
            const double c1 = 1.0 - std::pow(config.beta1, static_cast<double>(step));
            const double c2 = 1.0 - std::pow(config.beta2, static_cast<double>(step));
            theta -= config.lr * (m1 / c1).cwiseQuotient(((m2 / c2).cwiseSqrt().array() + config.eps).matrix());
            result.params.unpack(theta);
        }
        result.epoch_losses.push_back(epoch_loss / static_cast<double>(order.size()));
    }
    return result;
}

} // namespace eitaa

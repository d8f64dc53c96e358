#pragma once

#include "eitaa/fem.hpp"
#include "eitaa/newton.hpp"
#include "eitaa/proxnet.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <vector>

namespace eitaa {

/// Unrolled half-quadratic splitting reconstructor. Each of the K folds runs
/// K1 (accelerated) regularized Gauss-Newton iterations on sigma, then K2
/// proximal-network steps on the auxiliary variable z, with warm starts.
/// m1 = m2 = 0 gives the plain (unaccelerated) network.
struct ReconConfig {
    int folds = 8; // K
    int gn_iters = 2;   // K^(1)
    int lpgd_steps = 2; // K^(2)
    int m_gn = 2;   // m^(1); 0 disables acceleration in the sigma update
    int m_lpgd = 2; // m^(2); 0 disables acceleration in the z update
    double mu = 1.0;
    double beta = 1.0;
    double ridge = 1e-10;       // alpha normal equations (z update)
    double gamma_ridge = 1e-10; // gamma least squares (sigma update)

    void validate() const;
};

/// Forward pass with per-fold inner records retained for the backward pass.
/// The z update of the last fold is skipped: the output is sigma after the
/// final Gauss-Newton run and would not depend on it.
struct UnrolledRecord {
    std::vector<GnAaRecord> gn;     // folds entries
    std::vector<LpgdRecord> lpgd;   // folds - 1 entries
    Eigen::VectorXd sigma_out;
};

UnrolledRecord unrolled_forward(const ProxNetParams& params, const ModelFn& model, const Eigen::VectorXd& v,
                                Eigen::Index n, const ReconConfig& config, bool keep_for_backward);

/// sigma_0 = z_0 = 1; returns the final conductivity estimate.
Eigen::VectorXd reconstruct(const ProxNetParams& params, const ModelFn& model, const Eigen::VectorXd& v,
                            Eigen::Index n, const ReconConfig& config);

/// Exact reverse-mode gradient of <sigma_out_bar, sigma_out> w.r.t. the
/// proximal-network parameters. The Gauss-Newton direction is differentiated
/// with the Jacobian held fixed at each iterate, and the Anderson combination
/// weights are treated as constants. Requires a record built with
/// keep_for_backward = true.
Eigen::VectorXd unrolled_backward(const ProxNetParams& params, const UnrolledRecord& record,
                                  const ReconConfig& config, const Eigen::VectorXd& sigma_out_bar);

/// Mean-squared-error loss of one reconstruction against the ground truth,
/// with its parameter gradient.
double unrolled_loss_and_grad(const ProxNetParams& params, const ModelFn& model, const Eigen::VectorXd& v,
                              const Eigen::VectorXd& sigma_true, const ReconConfig& config,
                              Eigen::VectorXd* param_grad);

/// Forward model F(sigma) = simulated measurements on the given mesh, with
/// the exact sensitivity matrix. Conductivities are clamped to sigma_floor
/// before evaluation so that intermediate Gauss-Newton iterates may leave the
/// physical range without aborting.
ModelFn make_eit_model(const Mesh& mesh, const ElectrodeConfig& electrodes, const StimProtocol& protocol,
                       double sigma_floor = 1e-6);

struct TrainSample {
    Eigen::VectorXd sigma; // ground truth, per element
    Eigen::VectorXd v;     // (noisy) measurements
};

struct TrainConfig {
    int epochs = 10;
    int batch = 8;
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::uint64_t seed = 0;

    void validate() const;
};

struct TrainResult {
    ProxNetParams params;
    std::vector<double> epoch_losses; // mean training MSE per epoch
};

/// Adam over minibatches with a deterministic shuffle. Throws on a non-finite
/// loss, naming the offending sample.
TrainResult train_proxnet(const ProxNetParams& init, const ModelFn& model, const std::vector<TrainSample>& samples,
                          const ReconConfig& recon, const TrainConfig& config);

} // namespace eitaa

#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <vector>

namespace eitaa {

/// One width-3, zero-padded 1D convolution layer with a learned PReLU slope.
struct ConvLayer {
    // weights(o, 3*i + t): tap t in {0,1,2} of input channel i for output o
    Eigen::MatrixXd weights;
    Eigen::VectorXd bias; // per output channel
    double prelu_slope = 0.25;

    int out_channels() const { return static_cast<int>(weights.rows()); }
    int in_channels() const { return static_cast<int>(weights.cols()) / 3; }
};

/// Learned proximal operator: input channels (z, dL/dz), hidden width N,
/// one output channel.
struct ProxNetParams {
    std::vector<ConvLayer> layers;

    int n_layers() const { return static_cast<int>(layers.size()); }
    void validate() const;

    /// He-initialized network with L layers and N hidden channels.
    static ProxNetParams random(int n_layers, int hidden, std::uint64_t seed);
    /// He weights shrunk by `noise_scale` plus an identity center tap on the
    /// z channel of every layer. Starting near the identity prox keeps the
    /// early unrolled iterations stable, which a raw He network does not.
    static ProxNetParams near_identity(int n_layers, int hidden, std::uint64_t seed, double noise_scale = 0.1);
    /// Network computing z_out = z exactly (center-tap identity, slope 1).
    static ProxNetParams identity(int n_layers = 1);

    Eigen::VectorXd pack() const;
    void unpack(const Eigen::VectorXd& flat);
    Eigen::Index n_parameters() const;
};

/// Per-layer inputs and pre-activations retained for the backward pass.
struct ProxGradCache {
    std::vector<Eigen::MatrixXd> inputs;  // channels x n, per layer
    std::vector<Eigen::MatrixXd> preacts; // out_channels x n, per layer
};

/// z_out = Phi_theta(concat(z, grad)).
Eigen::VectorXd prox_forward(const ProxNetParams& params, const Eigen::VectorXd& z, const Eigen::VectorXd& grad,
                             ProxGradCache* cache = nullptr);

struct ProxGradients {
    Eigen::VectorXd param_grads; // laid out as ProxNetParams::pack
    Eigen::VectorXd z_grad;
    Eigen::VectorXd grad_grad; // gradient w.r.t. the gradient channel
};

/// Exact reverse-mode gradients of <upstream, z_out> w.r.t. parameters and
/// both input channels.
ProxGradients prox_backward(const ProxNetParams& params, const ProxGradCache& cache,
                            const Eigen::VectorXd& upstream);

/// Accumulating variant: adds into `acc` (sized n_parameters) and returns
/// the input-channel gradients.
void prox_backward_acc(const ProxNetParams& params, const ProxGradCache& cache, const Eigen::VectorXd& upstream,
                       Eigen::VectorXd& param_acc, Eigen::VectorXd& z_grad, Eigen::VectorXd& grad_grad);

/// dL/dz for L = mu/2 ||sigma - z||^2, i.e. mu (z - sigma).
Eigen::VectorXd grad_L(const Eigen::VectorXd& z, const Eigen::VectorXd& sigma, double mu);

/// One LPGD update: Phi_theta(concat(z_prev, grad_L(z_prev, sigma, mu))).
Eigen::VectorXd lpgd_step(const ProxNetParams& params, const Eigen::VectorXd& z_prev, const Eigen::VectorXd& sigma,
                          double mu);

struct LpgdConfig {
    double mu = 1.0;
    int m = 2;  // m^(2)
    int K = 2;  // K^(2)
    double ridge = 1e-10;
};

/// AA-LPGD inner run with everything the backward pass needs retained.
struct LpgdRecord {
    std::vector<Eigen::VectorXd> zs;     // z^0 .. z^K
    std::vector<Eigen::VectorXd> ys;     // y_1 .. y_K (2n each)
    std::vector<Eigen::VectorXd> alphas; // per step k = 0..K-1 over the g history
    std::vector<ProxGradCache> caches;   // one per Phi evaluation z^{j} = Phi(y_j)
    int degenerate_solves = 0;
};

LpgdRecord aa_lpgd_record(const ProxNetParams& params, const Eigen::VectorXd& z0, const Eigen::VectorXd& sigma,
                          const LpgdConfig& config, bool keep_caches = false);

/// z trace of AA-LPGD (Phi applied to the Anderson-combined auxiliary state).
std::vector<Eigen::VectorXd> aa_lpgd(const ProxNetParams& params, const Eigen::VectorXd& z0,
                                     const Eigen::VectorXd& sigma, const LpgdConfig& config);

std::string proxnet_to_json(const ProxNetParams& params);
ProxNetParams proxnet_from_json(const std::string& text);
void save_proxnet(const ProxNetParams& params, const std::string& path);
ProxNetParams load_proxnet(const std::string& path);

} // namespace eitaa

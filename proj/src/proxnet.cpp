#include "eitaa/proxnet.hpp"

#include "eitaa/anderson.hpp"
#include "eitaa/rng.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace eitaa {

namespace {

/// Rows 3i+t of the result hold input channel i shifted by t-1 (zero padded),
/// so a width-3 convolution becomes a single matrix product.
Eigen::MatrixXd shift_stack(const Eigen::MatrixXd& x) {
    const Eigen::Index c = x.rows();
    const Eigen::Index n = x.cols();
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(3 * c, n);
    for (Eigen::Index i = 0; i < c; ++i) {
        out.block(3 * i + 0, 1, 1, n - 1) = x.block(i, 0, 1, n - 1); // tap 0: x(i, p-1)
        out.row(3 * i + 1) = x.row(i);                               // tap 1: x(i, p)
        out.block(3 * i + 2, 0, 1, n - 1) = x.block(i, 1, 1, n - 1); // tap 2: x(i, p+1)
    }
    return out;
}

/// Adjoint of shift_stack: scatter the stacked-gradient rows back onto the
/// input channels.
Eigen::MatrixXd unshift_stack(const Eigen::MatrixXd& xsh) {
    const Eigen::Index c = xsh.rows() / 3;
    const Eigen::Index n = xsh.cols();
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(c, n);
    for (Eigen::Index i = 0; i < c; ++i) {
        out.block(i, 0, 1, n - 1) += xsh.block(3 * i + 0, 1, 1, n - 1);
        out.row(i) += xsh.row(3 * i + 1);
        out.block(i, 1, 1, n - 1) += xsh.block(3 * i + 2, 0, 1, n - 1);
    }
    return out;
}

} // namespace

void ProxNetParams::validate() const {
    if (layers.empty()) throw std::invalid_argument("proxnet: no layers");
    int expect_in = 2;
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const ConvLayer& layer = layers[l];
        if (layer.weights.size() == 0 || layer.weights.cols() % 3 != 0)
            throw std::invalid_argument("proxnet: layer weight matrix must have 3*in_channels columns");
        if (layer.in_channels() != expect_in)
            throw std::invalid_argument("proxnet: layer input channels do not chain");
        if (layer.bias.size() != layer.out_channels())
            throw std::invalid_argument("proxnet: bias size does not match output channels");
        if (!layer.weights.allFinite() || !layer.bias.allFinite() || !std::isfinite(layer.prelu_slope))
            throw std::invalid_argument("proxnet: non-finite parameters");
        expect_in = layer.out_channels();
    }
    if (expect_in != 1) throw std::invalid_argument("proxnet: final layer must produce one channel");
}

ProxNetParams ProxNetParams::random(int n_layers, int hidden, std::uint64_t seed) {
    if (n_layers < 1 || hidden < 1) throw std::invalid_argument("proxnet: need at least one layer and one channel");
    Rng rng(seed);
    ProxNetParams params;
    for (int l = 0; l < n_layers; ++l) {
        const int in = (l == 0) ? 2 : hidden;
        const int out = (l == n_layers - 1) ? 1 : hidden;
        ConvLayer layer;
        layer.weights.resize(out, 3 * in);
        const double scale = std::sqrt(2.0 / (3.0 * in));
        for (Eigen::Index r = 0; r < layer.weights.rows(); ++r)
            for (Eigen::Index c = 0; c < layer.weights.cols(); ++c) layer.weights(r, c) = scale * rng.normal();
        layer.bias = Eigen::VectorXd::Zero(out);
        layer.prelu_slope = 0.25;
        params.layers.push_back(std::move(layer));
    }
    params.validate();
    return params;
}

ProxNetParams ProxNetParams::near_identity(int n_layers, int hidden, std::uint64_t seed, double noise_scale) {
    if (!(noise_scale >= 0.0)) throw std::invalid_argument("proxnet: noise scale must be non-negative");
    ProxNetParams params = random(n_layers, hidden, seed);
    for (ConvLayer& layer : params.layers) layer.weights *= noise_scale;
    // pass the first input channel (z) through the center tap of channel 0
    // so the untrained network starts close to the identity prox
    for (ConvLayer& layer : params.layers) layer.weights(0, 1) += 1.0;
    return params;
}

ProxNetParams ProxNetParams::identity(int n_layers) {
    if (n_layers < 1) throw std::invalid_argument("proxnet: need at least one layer");
    ProxNetParams params;
    for (int l = 0; l < n_layers; ++l) {
        const int in = (l == 0) ? 2 : 1;
        ConvLayer layer;
        layer.weights = Eigen::MatrixXd::Zero(1, 3 * in);
        layer.weights(0, 1) = 1.0; // center tap on the first input channel
        layer.bias = Eigen::VectorXd::Zero(1);
        layer.prelu_slope = 1.0;
        params.layers.push_back(std::move(layer));
    }
    return params;
}

Eigen::Index ProxNetParams::n_parameters() const {
    Eigen::Index n = 0;
    for (const ConvLayer& layer : layers) n += layer.weights.size() + layer.bias.size() + 1;
    return n;
}

Eigen::VectorXd ProxNetParams::pack() const {
    Eigen::VectorXd flat(n_parameters());
    Eigen::Index at = 0;
    for (const ConvLayer& layer : layers) {
        flat.segment(at, layer.weights.size()) =
            Eigen::Map<const Eigen::VectorXd>(layer.weights.data(), layer.weights.size());
        at += layer.weights.size();
        flat.segment(at, layer.bias.size()) = layer.bias;
        at += layer.bias.size();
        flat[at++] = layer.prelu_slope;
    }
    return flat;
}

void ProxNetParams::unpack(const Eigen::VectorXd& flat) {
    if (flat.size() != n_parameters()) throw std::invalid_argument("proxnet: flat parameter size mismatch");
    Eigen::Index at = 0;
    for (ConvLayer& layer : layers) {
        Eigen::Map<Eigen::VectorXd>(layer.weights.data(), layer.weights.size()) =
            flat.segment(at, layer.weights.size());
        at += layer.weights.size();
        layer.bias = flat.segment(at, layer.bias.size());
        at += layer.bias.size();
        layer.prelu_slope = flat[at++];
    }
}

Eigen::VectorXd prox_forward(const ProxNetParams& params, const Eigen::VectorXd& z, const Eigen::VectorXd& grad,
                             ProxGradCache* cache) {
    params.validate();
    if (z.size() != grad.size() || z.size() == 0)
        throw std::invalid_argument("prox_forward: channel size mismatch");
    const Eigen::Index n = z.size();
    Eigen::MatrixXd x(2, n);
    x.row(0) = z.transpose();
    x.row(1) = grad.transpose();
    if (cache) {
        cache->inputs.clear();
        cache->preacts.clear();
    }
    for (const ConvLayer& layer : params.layers) {
        if (cache) cache->inputs.push_back(x);
        Eigen::MatrixXd preact = layer.weights * shift_stack(x);
        preact.colwise() += layer.bias;
        if (cache) cache->preacts.push_back(preact);
        x = (preact.array() > 0.0).select(preact, layer.prelu_slope * preact);
    }
    return x.row(0).transpose();
}

void prox_backward_acc(const ProxNetParams& params, const ProxGradCache& cache, const Eigen::VectorXd& upstream,
                       Eigen::VectorXd& param_acc, Eigen::VectorXd& z_grad, Eigen::VectorXd& grad_grad) {
    const int n_layers = params.n_layers();
    if (static_cast<int>(cache.inputs.size()) != n_layers || static_cast<int>(cache.preacts.size()) != n_layers)
        throw std::invalid_argument("prox_backward: cache does not match the network");
    if (param_acc.size() != params.n_parameters())
        throw std::invalid_argument("prox_backward: accumulator size mismatch");

    Eigen::MatrixXd xbar = upstream.transpose(); // 1 x n, gradient at the output channel
    Eigen::Index at = params.n_parameters();
    for (int l = n_layers - 1; l >= 0; --l) {
        const ConvLayer& layer = params.layers[l];
        const Eigen::MatrixXd& preact = cache.preacts[l];
        const Eigen::MatrixXd neg = (preact.array() > 0.0).select(Eigen::MatrixXd::Zero(preact.rows(), preact.cols()),
                                                                  preact);
        at -= 1;
        param_acc[at] += (xbar.array() * neg.array()).sum();
        const Eigen::MatrixXd pbar =
            (preact.array() > 0.0).select(xbar, (layer.prelu_slope * xbar.array()).matrix());
        at -= layer.bias.size();
        param_acc.segment(at, layer.bias.size()) += pbar.rowwise().sum();
        const Eigen::MatrixXd xsh = shift_stack(cache.inputs[l]);
        at -= layer.weights.size();
        Eigen::Map<Eigen::MatrixXd>(param_acc.segment(at, layer.weights.size()).data(), layer.weights.rows(),
                                    layer.weights.cols())
            .noalias() += pbar * xsh.transpose();
        xbar = unshift_stack(layer.weights.transpose() * pbar);
    }
    z_grad = xbar.row(0).transpose();
    grad_grad = xbar.row(1).transpose();
}

ProxGradients prox_backward(const ProxNetParams& params, const ProxGradCache& cache,
                            const Eigen::VectorXd& upstream) {
    ProxGradients out;
    out.param_grads = Eigen::VectorXd::Zero(params.n_parameters());
    prox_backward_acc(params, cache, upstream, out.param_grads, out.z_grad, out.grad_grad);
    return out;
}

Eigen::VectorXd grad_L(const Eigen::VectorXd& z, const Eigen::VectorXd& sigma, double mu) {
    return mu * (z - sigma);
}

Eigen::VectorXd lpgd_step(const ProxNetParams& params, const Eigen::VectorXd& z_prev, const Eigen::VectorXd& sigma,
                          double mu) {
    return prox_forward(params, z_prev, grad_L(z_prev, sigma, mu));
}

LpgdRecord aa_lpgd_record(const ProxNetParams& params, const Eigen::VectorXd& z0, const Eigen::VectorXd& sigma,
                          const LpgdConfig& config, bool keep_caches) {
    if (config.K < 1) throw std::invalid_argument("aa_lpgd: need at least one step");
    if (config.m < 0) throw std::invalid_argument("aa_lpgd: history depth must be >= 0");
    if (z0.size() != sigma.size()) throw std::invalid_argument("aa_lpgd: state size mismatch");
    const Eigen::Index n = z0.size();

    LpgdRecord rec;
    rec.zs.push_back(z0);
    std::vector<Eigen::VectorXd> gs; // g_k = concat(z^k, grad_L(z^k))

    auto lift = [&](const Eigen::VectorXd& z) {
        Eigen::VectorXd g(2 * n);
        g.head(n) = z;
        g.tail(n) = grad_L(z, sigma, config.mu);
        return g;
    };
    auto apply_prox = [&](const Eigen::VectorXd& y) {
        ProxGradCache cache;
        Eigen::VectorXd z = prox_forward(params, y.head(n), y.tail(n), keep_caches ? &cache : nullptr);
        if (keep_caches) rec.caches.push_back(std::move(cache));
        if (!z.allFinite()) throw std::runtime_error("aa_lpgd: proximal network returned non-finite values");
        return z;
    };

    // First step has no residual history: y_1 = g_0.
    gs.push_back(lift(z0));
    rec.ys.push_back(gs[0]);
    rec.alphas.push_back(Eigen::VectorXd::Ones(1));
    rec.zs.push_back(apply_prox(rec.ys[0]));

    for (int k = 1; k < config.K; ++k) {
        gs.push_back(lift(rec.zs[k]));
        const int window = std::min(config.m + 1, k); // residuals exist for y_1..y_k only
        Eigen::VectorXd y;
        Eigen::VectorXd alpha;
        if (window == 1) {
            y = gs[k];
            alpha = Eigen::VectorXd::Ones(1);
        } else {
            Eigen::MatrixXd residuals(2 * n, window);
            for (int i = 0; i < window; ++i) residuals.col(i) = gs[k - i] - rec.ys[k - i - 1];
            AlphaResult res = solve_alpha(residuals, config.ridge);
            if (res.degenerate) rec.degenerate_solves++;
            alpha = res.alpha;
            y = Eigen::VectorXd::Zero(2 * n);
            for (int i = 0; i < window; ++i) y += alpha[i] * gs[k - i];
        }
        rec.ys.push_back(std::move(y));
        rec.alphas.push_back(std::move(alpha));
        rec.zs.push_back(apply_prox(rec.ys.back()));
    }
    return rec;
}

std::vector<Eigen::VectorXd> aa_lpgd(const ProxNetParams& params, const Eigen::VectorXd& z0,
                                     const Eigen::VectorXd& sigma, const LpgdConfig& config) {
    return aa_lpgd_record(params, z0, sigma, config, false).zs;
}

std::string proxnet_to_json(const ProxNetParams& params) {
    params.validate();
    nlohmann::json doc;
    doc["layers"] = nlohmann::json::array();
    for (const ConvLayer& layer : params.layers) {
        nlohmann::json entry;
        entry["out_channels"] = layer.out_channels();
        entry["in_channels"] = layer.in_channels();
        entry["weights"] = std::vector<double>(layer.weights.data(), layer.weights.data() + layer.weights.size());
        entry["bias"] = std::vector<double>(layer.bias.data(), layer.bias.data() + layer.bias.size());
        entry["prelu_slope"] = layer.prelu_slope;
        doc["layers"].push_back(std::move(entry));
    }
    return doc.dump(2) + "\n";
}

ProxNetParams proxnet_from_json(const std::string& text) {
    const nlohmann::json doc = nlohmann::json::parse(text);
    ProxNetParams params;
    for (const nlohmann::json& entry : doc.at("layers")) {
        ConvLayer layer;
        const int out = entry.at("out_channels").get<int>();
        const int in = entry.at("in_channels").get<int>();
        const std::vector<double> w = entry.at("weights").get<std::vector<double>>();
        const std::vector<double> b = entry.at("bias").get<std::vector<double>>();
        if (static_cast<int>(w.size()) != out * 3 * in || static_cast<int>(b.size()) != out)
            throw std::runtime_error("proxnet checkpoint: layer shape mismatch");
        layer.weights = Eigen::Map<const Eigen::MatrixXd>(w.data(), out, 3 * in);
        layer.bias = Eigen::Map<const Eigen::VectorXd>(b.data(), out);
        layer.prelu_slope = entry.at("prelu_slope").get<double>();
        params.layers.push_back(std::move(layer));
    }
    params.validate();
    return params;
}

void save_proxnet(const ProxNetParams& params, const std::string& path) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw std::runtime_error("cannot write " + tmp);
        out << proxnet_to_json(params);
    }
    std::rename(tmp.c_str(), path.c_str());
}

ProxNetParams load_proxnet(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return proxnet_from_json(text);
}

} // namespace eitaa

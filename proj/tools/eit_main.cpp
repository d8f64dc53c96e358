#include "eitaa/fem.hpp"
#include "eitaa/mesh.hpp"
#include "eitaa/metrics.hpp"
#include "eitaa/newton.hpp"
#include "eitaa/pipeline.hpp"
#include "eitaa/proxnet.hpp"
#include "eitaa/render.hpp"
#include "eitaa/rng.hpp"
#include "eitaa/simdata.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

namespace {

using nlohmann::json;

double seconds_since(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

void write_text_atomic(const std::string& path, const std::string& text) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw std::runtime_error("cannot write " + tmp);
        out << text;
    }
    std::rename(tmp.c_str(), path.c_str());
}

void write_manifest(const std::string& path, json manifest, double wall_seconds) {
    manifest["wall_seconds"] = wall_seconds;
    write_text_atomic(path, manifest.dump(2) + "\n");
}

void write_doubles_file(const std::string& path, const Eigen::VectorXd& values) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw std::runtime_error("cannot write " + tmp);
        out.write(reinterpret_cast<const char*>(values.data()),
                  static_cast<std::streamsize>(values.size() * sizeof(double)));
    }
    std::rename(tmp.c_str(), path.c_str());
}

Eigen::VectorXd read_doubles_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + path);
    in.seekg(0, std::ios::end);
    const auto bytes = static_cast<std::size_t>(in.tellg());
    if (bytes % sizeof(double) != 0) throw std::runtime_error("bad payload size in " + path);
    in.seekg(0);
    Eigen::VectorXd values(bytes / sizeof(double));
    in.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(bytes));
    return values;
}

struct ReconFlags {
    int folds = 8, gn_iters = 2, lpgd_steps = 2, m_gn = 2, m_lpgd = 2;
    double mu = 1.0, beta = 1.0;
    bool no_aa_gn = false, no_aa_lpgd = false;

    eitaa::ReconConfig to_config() const {
        eitaa::ReconConfig config;
        config.folds = folds;
        config.gn_iters = gn_iters;
        config.lpgd_steps = lpgd_steps;
        config.m_gn = no_aa_gn ? 0 : m_gn;
        config.m_lpgd = no_aa_lpgd ? 0 : m_lpgd;
        config.mu = mu;
        config.beta = beta;
        return config;
    }
};

void add_recon_flags(CLI::App* cmd, ReconFlags& flags) {
    cmd->add_option("--K", flags.folds, "outer folds");
    cmd->add_option("--K1", flags.gn_iters, "Gauss-Newton iterations per fold");
    cmd->add_option("--K2", flags.lpgd_steps, "proximal steps per fold");
    cmd->add_option("--m1", flags.m_gn, "acceleration depth of the sigma update");
    cmd->add_option("--m2", flags.m_lpgd, "acceleration depth of the z update");
    cmd->add_option("--mu", flags.mu, "penalty weight");
    cmd->add_option("--beta", flags.beta, "Gauss-Newton damping");
    cmd->add_flag("--no-aa-gn", flags.no_aa_gn, "disable acceleration in the sigma update");
    cmd->add_flag("--no-aa-lpgd", flags.no_aa_lpgd, "disable acceleration in the z update");
}

json recon_flags_json(const ReconFlags& flags) {
    const eitaa::ReconConfig config = flags.to_config();
    return {{"K", config.folds},   {"K1", config.gn_iters}, {"K2", config.lpgd_steps}, {"m1", config.m_gn},
            {"m2", config.m_lpgd}, {"mu", config.mu},       {"beta", config.beta}};
}

std::vector<eitaa::TrainSample> noisy_samples(const std::vector<eitaa::Sample>& samples, double eta,
                                              std::uint64_t seed) {
    std::vector<eitaa::TrainSample> out;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        eitaa::TrainSample sample;
        sample.sigma = samples[i].sigma.values;
        sample.v = eitaa::add_noise(samples[i].v, {eta, eitaa::Rng::derive(seed, i)}).v;
        out.push_back(std::move(sample));
    }
    return out;
}

int cmd_gen_data(const std::string& out_dir, int n_train, int n_test, int elements, int n_electrodes, double eta,
                 std::uint64_t seed) {
    const auto start = std::chrono::steady_clock::now();
    eitaa::ElectrodeConfig electrodes;
    electrodes.n_electrodes = n_electrodes;
    const eitaa::Mesh mesh = eitaa::build_disk_mesh(elements, electrodes, seed);
    const eitaa::StimProtocol protocol = eitaa::opposite_adjacent_protocol(n_electrodes);
    const eitaa::Dataset dataset = eitaa::build_dataset(n_train, n_test, mesh, electrodes, protocol, seed);
    eitaa::save_dataset(dataset, out_dir);

    json manifest;
    manifest["command"] = "gen-data";
    manifest["config"] = {{"out", out_dir}, {"n_train", n_train},         {"n_test", n_test}, {"elements", elements},
                          {"electrodes", n_electrodes}, {"eta", eta},     {"seed", seed}};
    manifest["mesh"] = {{"n_elements", mesh.n_elements()}, {"n_nodes", mesh.n_nodes()}};
    char hash[24];
    std::snprintf(hash, sizeof(hash), "%016llx",
                  static_cast<unsigned long long>(eitaa::dataset_content_hash(out_dir)));
    manifest["content_hash"] = hash;
    write_manifest(out_dir + "/run_manifest.json", manifest, seconds_since(start));
    std::cout << "wrote " << out_dir << " (" << mesh.n_elements() << " elements, hash " << hash << ")\n";
    return 0;
}

int cmd_train(const std::string& data_dir, const std::string& out_path, const ReconFlags& flags, int epochs,
              double lr, double eta, int layers, int hidden, std::uint64_t seed) {
    const auto start = std::chrono::steady_clock::now();
    const eitaa::Dataset dataset = eitaa::load_dataset(data_dir);
    const eitaa::ModelFn model = eitaa::make_eit_model(dataset.mesh, dataset.electrodes, dataset.protocol);
    const std::vector<eitaa::TrainSample> samples = noisy_samples(dataset.train, eta, eitaa::Rng::derive(seed, 1));

    eitaa::TrainConfig train;
    train.epochs = epochs;
    train.lr = lr;
    train.seed = eitaa::Rng::derive(seed, 2);
    const eitaa::ProxNetParams init = eitaa::ProxNetParams::near_identity(layers, hidden, eitaa::Rng::derive(seed, 3));
    const eitaa::TrainResult result = eitaa::train_proxnet(init, model, samples, flags.to_config(), train);
    eitaa::save_proxnet(result.params, out_path);

    json manifest;
    manifest["command"] = "train";
    manifest["config"] = recon_flags_json(flags);
    manifest["config"]["epochs"] = epochs;
    manifest["config"]["lr"] = lr;
    manifest["config"]["eta"] = eta;
    manifest["config"]["layers"] = layers;
    manifest["config"]["hidden"] = hidden;
    manifest["config"]["seed"] = seed;
    manifest["inputs"] = {{"data", data_dir}};
    manifest["outputs"] = {{"checkpoint", out_path}};
    manifest["epoch_losses"] = result.epoch_losses;
    write_manifest(out_path + ".manifest.json", manifest, seconds_since(start));
    std::cout << "trained " << epochs << " epochs; final loss " << result.epoch_losses.back() << "\n";
    return 0;
}

int cmd_eval(const std::string& data_dir, const std::string& out_dir, const std::string& method,
             const std::string& checkpoint, const ReconFlags& flags, double eta, std::uint64_t seed) {
    const auto start = std::chrono::steady_clock::now();
    const eitaa::Dataset dataset = eitaa::load_dataset(data_dir);
    const eitaa::ModelFn model = eitaa::make_eit_model(dataset.mesh, dataset.electrodes, dataset.protocol);
    std::filesystem::create_directories(out_dir);

    eitaa::ProxNetParams params;
    eitaa::ReconConfig config = flags.to_config();
    if (method == "hqsnet") {
        config.m_gn = 0;
        config.m_lpgd = 0;
    }
    if (method == "aa-hqsnet" || method == "hqsnet") {
        if (checkpoint.empty()) throw std::runtime_error("method " + method + " requires --checkpoint");
        params = eitaa::load_proxnet(checkpoint);
    } else if (method != "gn-lm") {
        throw std::runtime_error("unknown method " + method);
    }

    std::ostringstream csv;
    csv << "sample,mse,ssim,eiei,dr,snr_db\n";
    csv.precision(10);
    const Eigen::Index n = dataset.mesh.n_elements();
    double mean_mse = 0.0;
    for (std::size_t i = 0; i < dataset.test.size(); ++i) {
        const eitaa::Sample& sample = dataset.test[i];
        const eitaa::MeasurementSet noisy = eitaa::add_noise(sample.v, {eta, eitaa::Rng::derive(seed, i)});
        Eigen::VectorXd sigma_hat;
        if (method == "gn-lm") {
            sigma_hat = eitaa::gn_lm_baseline(Eigen::VectorXd::Ones(n), noisy.v, model, {}).back();
        } else {
            sigma_hat = eitaa::reconstruct(params, model, noisy.v, n, config);
        }
        write_doubles_file(out_dir + "/sigma_hat_" + std::to_string(i) + ".f64", sigma_hat);
        const double sample_mse = eitaa::mse(sigma_hat, sample.sigma.values);
        mean_mse += sample_mse;
        csv << i << "," << sample_mse << "," << eitaa::ssim_mesh_value(sigma_hat, sample.sigma.values, dataset.mesh)
            << "," << eitaa::eiei(sigma_hat, sample.sigma.values, dataset.mesh).value << ","
            << eitaa::dr(sigma_hat, sample.sigma.values) << "," << noisy.snr_db << "\n";
    }
    mean_mse /= dataset.test.empty() ? 1.0 : static_cast<double>(dataset.test.size());
    write_text_atomic(out_dir + "/metrics.csv", csv.str());

    json manifest;
    manifest["command"] = "eval";
    manifest["config"] = recon_flags_json(flags);
    manifest["config"]["method"] = method;
    manifest["config"]["eta"] = eta;
    manifest["config"]["seed"] = seed;
    manifest["inputs"] = {{"data", data_dir}, {"checkpoint", checkpoint}};
    manifest["outputs"] = {{"dir", out_dir}};
    manifest["mean_mse"] = mean_mse;
    write_manifest(out_dir + "/run_manifest.json", manifest, seconds_since(start));
    std::cout << method << " mean test MSE " << mean_mse << " over " << dataset.test.size() << " samples\n";
    return 0;
}

int cmd_bench_aa(const std::string& out_path, int max_iters) {
    const auto start = std::chrono::steady_clock::now();
    const std::vector<Eigen::Vector2d> x0s = {{1.0, 1.0}, {3.0, 6.0}, {0.5, 2.0}};
    const std::vector<int> ms = {1, 2, 5, 10, 15};
    eitaa::RootAaOptions options;
    options.max_iters = max_iters;
    const std::vector<eitaa::BenchmarkRun> runs = eitaa::newton_aa_benchmark(x0s, ms, options);
    write_text_atomic(out_path, eitaa::benchmark_to_csv(runs));

    int converged = 0;
    for (const eitaa::BenchmarkRun& run : runs) converged += run.trace.converged ? 1 : 0;
    json manifest;
    manifest["command"] = "bench-aa";
    manifest["config"] = {{"out", out_path}, {"max_iters", max_iters}};
    manifest["runs"] = runs.size();
    manifest["converged"] = converged;
    write_manifest(out_path + ".manifest.json", manifest, seconds_since(start));
    std::cout << converged << "/" << runs.size() << " runs converged; wrote " << out_path << "\n";
    return 0;
}

int cmd_render(const std::string& mesh_path, const std::string& field_path, const std::string& truth_path,
               bool class_map, const std::string& out_path) {
    const auto start = std::chrono::steady_clock::now();
    const eitaa::Mesh mesh = eitaa::load_mesh(mesh_path);
    const Eigen::VectorXd field = read_doubles_file(field_path);
    std::string svg;
    if (class_map) {
        if (truth_path.empty()) throw std::runtime_error("--class-map requires --truth");
        const Eigen::VectorXd truth = read_doubles_file(truth_path);
        svg = eitaa::render_class_map_svg(mesh, eitaa::eiei(field, truth, mesh).labels);
    } else {
        svg = eitaa::render_field_svg(mesh, field);
    }
    eitaa::write_svg(svg, out_path);

    json manifest;
    manifest["command"] = "render";
    manifest["config"] = {{"mesh", mesh_path}, {"field", field_path}, {"truth", truth_path},
                          {"class_map", class_map}, {"out", out_path}};
    write_manifest(out_path + ".manifest.json", manifest, seconds_since(start));
    std::cout << "wrote " << out_path << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"EIT reconstruction with unrolled half-quadratic splitting and Anderson acceleration"};
    app.require_subcommand(1);
    int threads = 1;
    app.add_option("--threads", threads, "parallelism cap (current implementation is single-threaded)");

    auto* gen = app.add_subcommand("gen-data", "simulate a phantom dataset");
    std::string gen_out = "dataset";
    int n_train = 200, n_test = 50, elements = 660, electrodes = 16;
    double gen_eta = 5e-3;
    std::uint64_t gen_seed = 1;
    gen->add_option("--out", gen_out, "output directory")->required();
    gen->add_option("--n-train", n_train);
    gen->add_option("--n-test", n_test);
    gen->add_option("--elements", elements);
    gen->add_option("--electrodes", electrodes);
    gen->add_option("--eta", gen_eta, "recorded default noise level");
    gen->add_option("--seed", gen_seed);

    auto* train = app.add_subcommand("train", "train the proximal network");
    std::string train_data, train_out = "checkpoint.json";
    ReconFlags train_flags;
    int epochs = 10, layers = 3, hidden = 32;
    double lr = 1e-3, train_eta = 5e-3;
    std::uint64_t train_seed = 1;
    train->add_option("--data", train_data)->required();
    train->add_option("--out", train_out);
    add_recon_flags(train, train_flags);
    train->add_option("--epochs", epochs);
    train->add_option("--lr", lr);
    train->add_option("--eta", train_eta, "training noise level");
    train->add_option("--layers", layers);
    train->add_option("--hidden", hidden);
    train->add_option("--seed", train_seed);

    auto* eval = app.add_subcommand("eval", "reconstruct the test split and evaluate metrics");
    eval->alias("reconstruct");
    std::string eval_data, eval_out = "eval", method = "aa-hqsnet", checkpoint;
    ReconFlags eval_flags;
    double eval_eta = 5e-3;
    std::uint64_t eval_seed = 1;
    eval->add_option("--data", eval_data)->required();
    eval->add_option("--out", eval_out);
    eval->add_option("--method", method, "aa-hqsnet | hqsnet | gn-lm");
    eval->add_option("--checkpoint", checkpoint);
    add_recon_flags(eval, eval_flags);
    eval->add_option("--eta", eval_eta, "measurement noise level");
    eval->add_option("--seed", eval_seed);

    auto* bench = app.add_subcommand("bench-aa", "root-finding acceleration benchmark");
    std::string bench_out = "bench.csv";
    int bench_iters = 100;
    bench->add_option("--out", bench_out);
    bench->add_option("--max-iters", bench_iters);

    auto* render = app.add_subcommand("render", "render a per-element field (or a class map) to SVG");
    std::string render_mesh, render_field, render_truth, render_out = "field.svg";
    bool render_class = false;
    render->add_option("--mesh", render_mesh)->required();
    render->add_option("--field", render_field)->required();
    render->add_option("--truth", render_truth);
    render->add_flag("--class-map", render_class);
    render->add_option("--out", render_out);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& err) {
        const int code = app.exit(err); // prints help or the flag error
        return code == 0 ? 0 : 2;
    }

    try {
        if (gen->parsed())
            return cmd_gen_data(gen_out, n_train, n_test, elements, electrodes, gen_eta, gen_seed);
        if (train->parsed())
            return cmd_train(train_data, train_out, train_flags, epochs, lr, train_eta, layers, hidden, train_seed);
        if (eval->parsed()) return cmd_eval(eval_data, eval_out, method, checkpoint, eval_flags, eval_eta, eval_seed);
        if (bench->parsed()) return cmd_bench_aa(bench_out, bench_iters);
        if (render->parsed()) return cmd_render(render_mesh, render_field, render_truth, render_class, render_out);
    } catch (const std::exception& err) {
        std::cerr << "error: " << err.what() << "\n";
        return 3;
    }
    return 0;
}

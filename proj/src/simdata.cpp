#include "eitaa/simdata.hpp"

#include "eitaa/rng.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <stdexcept>

namespace eitaa {

namespace {

constexpr int kManifestVersion = 1;

void write_doubles(const std::string& path, const Eigen::VectorXd& values) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw std::runtime_error("cannot write " + tmp);
        // raw IEEE-754 doubles, little-endian hosts only (x86/aarch64)
        out.write(reinterpret_cast<const char*>(values.data()),
                  static_cast<std::streamsize>(values.size() * sizeof(double)));
    }
    std::rename(tmp.c_str(), path.c_str());
}

Eigen::VectorXd read_doubles(const std::string& path, Eigen::Index expected) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + path);
    Eigen::VectorXd values(expected);
    in.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(expected * sizeof(double)));
    if (in.gcount() != static_cast<std::streamsize>(expected * sizeof(double)))
        throw std::runtime_error("truncated payload file " + path);
    return values;
}

std::string read_text(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + path);
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

nlohmann::json phantom_to_json(const Phantom& phantom) {
    nlohmann::json doc;
    doc["background"] = phantom.background;
    doc["anomalies"] = nlohmann::json::array();
    for (const Anomaly& a : phantom.anomalies)
        doc["anomalies"].push_back({{"center", {a.center.x(), a.center.y()}},
                                    {"radius", a.radius},
                                    {"magnitude", a.magnitude}});
    return doc;
}

Phantom phantom_from_json(const nlohmann::json& doc) {
    Phantom phantom;
    phantom.background = doc.at("background").get<double>();
    for (const nlohmann::json& entry : doc.at("anomalies")) {
        Anomaly a;
        a.center = {entry.at("center").at(0).get<double>(), entry.at("center").at(1).get<double>()};
        a.radius = entry.at("radius").get<double>();
        a.magnitude = entry.at("magnitude").get<double>();
        phantom.anomalies.push_back(a);
    }
    return phantom;
}

Sample simulate_sample(const Mesh& mesh, const ElectrodeConfig& electrodes, const StimProtocol& protocol,
                       std::uint64_t seed) {
    Sample sample;
    sample.phantom = generate_phantom(seed);
    sample.sigma = rasterize_phantom(mesh, sample.phantom);
    sample.v = forward_map(mesh, sample.sigma, electrodes, protocol);
    return sample;
}

} // namespace

void Phantom::validate() const {
    if (!(background > 0.0)) throw std::invalid_argument("Phantom: background conductivity must be positive");
    if (anomalies.empty() || anomalies.size() > 4)
        throw std::invalid_argument("Phantom: anomaly count must lie in 1..4");
    for (const Anomaly& a : anomalies) {
        if (!(a.radius >= 0.15 && a.radius <= 0.25)) throw std::invalid_argument("Phantom: radius out of [0.15, 0.25]");
        if (!(a.magnitude >= 0.2 && a.magnitude <= 2.0))
            throw std::invalid_argument("Phantom: magnitude out of [0.2, 2]");
        if (a.center.norm() + a.radius > 1.0 + 1e-12)
            throw std::invalid_argument("Phantom: anomaly disk leaves the unit disk");
    }
}

Phantom generate_phantom(std::uint64_t seed) {
    Rng rng(seed);
    Phantom phantom;
    const int count = static_cast<int>(rng.uniform_int(1, 4));
    for (int i = 0; i < count; ++i) {
        Anomaly a;
        a.radius = rng.uniform(0.15, 0.25);
        a.magnitude = rng.uniform(0.2, 2.0);
        bool placed = false;
        for (int attempt = 0; attempt < 10000; ++attempt) {
            a.center = {rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)};
            if (a.center.norm() + a.radius <= 1.0) {
                placed = true;
                break;
            }
        }
        if (!placed) throw std::runtime_error("generate_phantom: center rejection sampling did not terminate");
        phantom.anomalies.push_back(a);
    }
    phantom.validate();
    return phantom;
}

ConductivityField rasterize_phantom(const Mesh& mesh, const Phantom& phantom) {
    ConductivityField field;
    field.values = Eigen::VectorXd::Constant(mesh.n_elements(), phantom.background);
    for (int e = 0; e < mesh.n_elements(); ++e) {
        const auto& tri = mesh.triangles[e];
        const Eigen::Vector2d centroid =
            (mesh.nodes[tri[0]] + mesh.nodes[tri[1]] + mesh.nodes[tri[2]]) / 3.0;
        for (const Anomaly& a : phantom.anomalies)
            if ((centroid - a.center).norm() <= a.radius) field.values[e] = a.magnitude;
    }
    return field;
}

double snr_db(const Eigen::VectorXd& clean, const Eigen::VectorXd& noisy) {
    if (clean.size() != noisy.size()) throw std::invalid_argument("snr_db: length mismatch");
    const double noise_norm = (noisy - clean).norm();
    if (noise_norm == 0.0) return std::numeric_limits<double>::infinity();
    return 20.0 * std::log10(clean.norm() / noise_norm);
}

MeasurementSet add_noise(const MeasurementSet& clean, const NoiseConfig& config) {
    if (config.eta < 0.0) throw std::invalid_argument("add_noise: eta must be >= 0");
    MeasurementSet out = clean;
    out.noise_eta = config.eta;
    if (config.eta == 0.0) {
        out.snr_db = std::numeric_limits<double>::infinity();
        return out;
    }
    Rng rng(config.seed);
    // v-bar as mean |v|: adjacent-pair differences telescope to a plain mean
    // of ~0 around the ring, which would degenerate to zero noise
    const double vbar = clean.v.cwiseAbs().mean();
    for (Eigen::Index i = 0; i < out.v.size(); ++i) out.v[i] += config.eta * vbar * rng.normal();
    out.snr_db = snr_db(clean.v, out.v);
    return out;
}

Dataset build_dataset(int n_train, int n_test, const Mesh& mesh, const ElectrodeConfig& electrodes,
                      const StimProtocol& protocol, std::uint64_t seed) {
    if (n_train < 0 || n_test < 0) throw std::invalid_argument("build_dataset: negative sample count");
    Dataset dataset;
    dataset.mesh = mesh;
    dataset.electrodes = electrodes;
    dataset.protocol = protocol;
    for (int i = 0; i < n_train; ++i)
        dataset.train.push_back(simulate_sample(mesh, electrodes, protocol, Rng::derive(seed, i)));
    for (int i = 0; i < n_test; ++i)
        dataset.test.push_back(
            simulate_sample(mesh, electrodes, protocol, Rng::derive(seed, static_cast<std::uint64_t>(n_train) + i)));
    return dataset;
}

void save_dataset(const Dataset& dataset, const std::string& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);

    nlohmann::json manifest;
    manifest["version"] = kManifestVersion;
    manifest["n_train"] = dataset.train.size();
    manifest["n_test"] = dataset.test.size();
    manifest["n_elements"] = dataset.mesh.n_elements();
    manifest["n_measurements"] = dataset.protocol.n_measurements();
    manifest["electrodes"] = {{"n_electrodes", dataset.electrodes.n_electrodes},
                              {"coverage_fraction", dataset.electrodes.coverage_fraction},
                              {"contact_impedance", dataset.electrodes.contact_impedance}};
    nlohmann::json protocol = nlohmann::json::array();
    for (std::size_t i = 0; i < dataset.protocol.injections.size(); ++i) {
        nlohmann::json entry;
        entry["drive"] = {dataset.protocol.injections[i].drive_plus, dataset.protocol.injections[i].drive_minus};
        entry["current"] = dataset.protocol.injections[i].current;
        nlohmann::json pairs = nlohmann::json::array();
        for (const MeasPair& pair : dataset.protocol.measurements[i]) pairs.push_back({pair.plus, pair.minus});
        entry["pairs"] = std::move(pairs);
        protocol.push_back(std::move(entry));
    }
    manifest["protocol"] = std::move(protocol);

    auto dump_split = [&](const std::vector<Sample>& samples, const std::string& tag) {
        nlohmann::json list = nlohmann::json::array();
        for (std::size_t i = 0; i < samples.size(); ++i) {
            const std::string stem = tag + "_" + std::to_string(i);
            write_doubles(dir + "/sigma_" + stem + ".f64", samples[i].sigma.values);
            write_doubles(dir + "/v_" + stem + ".f64", samples[i].v.v);
            nlohmann::json entry;
            entry["sigma"] = "sigma_" + stem + ".f64";
            entry["v"] = "v_" + stem + ".f64";
            entry["phantom"] = phantom_to_json(samples[i].phantom);
            list.push_back(std::move(entry));
        }
        return list;
    };
    manifest["train"] = dump_split(dataset.train, "train");
    manifest["test"] = dump_split(dataset.test, "test");

    save_mesh(dataset.mesh, dir + "/mesh.json");
    const std::string tmp = dir + "/manifest.json.tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw std::runtime_error("cannot write " + tmp);
        out << manifest.dump(2) << "\n";
    }
    const std::string final_path = dir + "/manifest.json";
    std::rename(tmp.c_str(), final_path.c_str());
}

Dataset load_dataset(const std::string& dir) {
    const nlohmann::json manifest = nlohmann::json::parse(read_text(dir + "/manifest.json"));
    if (manifest.at("version").get<int>() != kManifestVersion)
        throw std::runtime_error("dataset manifest: unsupported version");

    Dataset dataset;
    dataset.mesh = load_mesh(dir + "/mesh.json");
    const nlohmann::json& el = manifest.at("electrodes");
    dataset.electrodes.n_electrodes = el.at("n_electrodes").get<int>();
    dataset.electrodes.coverage_fraction = el.at("coverage_fraction").get<double>();
    dataset.electrodes.contact_impedance = el.at("contact_impedance").get<std::vector<double>>();

    for (const nlohmann::json& entry : manifest.at("protocol")) {
        Injection inj;
        inj.drive_plus = entry.at("drive").at(0).get<int>();
        inj.drive_minus = entry.at("drive").at(1).get<int>();
        inj.current = entry.at("current").get<double>();
        dataset.protocol.injections.push_back(inj);
        std::vector<MeasPair> pairs;
        for (const nlohmann::json& p : entry.at("pairs"))
            pairs.push_back({p.at(0).get<int>(), p.at(1).get<int>()});
        dataset.protocol.measurements.push_back(std::move(pairs));
    }

    const Eigen::Index n_t = manifest.at("n_elements").get<Eigen::Index>();
    const Eigen::Index n_m = manifest.at("n_measurements").get<Eigen::Index>();
    auto load_split = [&](const nlohmann::json& list) {
        std::vector<Sample> samples;
        for (const nlohmann::json& entry : list) {
            Sample sample;
            sample.phantom = phantom_from_json(entry.at("phantom"));
            sample.sigma.values = read_doubles(dir + "/" + entry.at("sigma").get<std::string>(), n_t);
            sample.v.v = read_doubles(dir + "/" + entry.at("v").get<std::string>(), n_m);
            samples.push_back(std::move(sample));
        }
        return samples;
    };
    dataset.train = load_split(manifest.at("train"));
    dataset.test = load_split(manifest.at("test"));
    return dataset;
}

std::uint64_t dataset_content_hash(const std::string& dir) {
    auto fnv = [](std::uint64_t h, const std::string& bytes) {
        for (unsigned char c : bytes) {
            h ^= c;
            h *= 0x100000001B3ULL;
        }
        return h;
    };
    std::uint64_t hash = 0xCBF29CE484222325ULL;
    const std::string manifest_text = read_text(dir + "/manifest.json");
    hash = fnv(hash, manifest_text);
    hash = fnv(hash, read_text(dir + "/mesh.json"));
    const nlohmann::json manifest = nlohmann::json::parse(manifest_text);
    for (const char* split : {"train", "test"})
        for (const nlohmann::json& entry : manifest.at(split)) {
            hash = fnv(hash, read_text(dir + "/" + entry.at("sigma").get<std::string>()));
            hash = fnv(hash, read_text(dir + "/" + entry.at("v").get<std::string>()));
        }
    return hash;
}

} // namespace eitaa

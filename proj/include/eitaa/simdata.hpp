#pragma once

#include "eitaa/fem.hpp"
#include "eitaa/mesh.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace eitaa {

struct Anomaly {
    Eigen::Vector2d center;
    double radius = 0.2;
    double magnitude = 1.0;
};

/// Synthetic conductivity scene: unit-conductivity background plus circular
/// anomalies kept fully inside the unit disk.
struct Phantom {
    double background = 1.0;
    std::vector<Anomaly> anomalies;

    void validate() const;
};

/// 1-4 anomalies, radii in [0.15, 0.25], magnitudes in [0.2, 2], centers
/// rejection-sampled so each disk lies inside the boundary. Deterministic per
/// seed; anomalies may overlap.
Phantom generate_phantom(std::uint64_t seed);

/// Element value = magnitude of the last-listed anomaly containing the
/// element centroid, else the background.
ConductivityField rasterize_phantom(const Mesh& mesh, const Phantom& phantom);

struct NoiseConfig {
    double eta = 0.0; // relative noise level
    std::uint64_t seed = 0;
};

/// v_i += eta * mean(|v|) * xi_i with xi i.i.d. standard normal; records eta
/// and the achieved SNR in the metadata. The absolute mean is used because
/// the signed mean of adjacent-pair voltage differences telescopes to zero.
MeasurementSet add_noise(const MeasurementSet& clean, const NoiseConfig& config);

/// 20 log10(rms(clean) / rms(noisy - clean)); +inf when the vectors agree.
double snr_db(const Eigen::VectorXd& clean, const Eigen::VectorXd& noisy);

struct Sample {
    Phantom phantom;
    ConductivityField sigma;
    MeasurementSet v; // stored clean; add noise at load/eval time
};

struct Dataset {
    Mesh mesh;
    ElectrodeConfig electrodes;
    StimProtocol protocol;
    std::vector<Sample> train;
    std::vector<Sample> test;
};

/// Generate, rasterize, and forward-simulate n_train + n_test samples.
/// Measurements are stored clean so one dataset serves every noise level.
Dataset build_dataset(int n_train, int n_test, const Mesh& mesh, const ElectrodeConfig& electrodes,
                      const StimProtocol& protocol, std::uint64_t seed);

/// Directory container: manifest.json + mesh.json + per-sample little-endian
/// double files. Round-trips bit-exactly.
void save_dataset(const Dataset& dataset, const std::string& dir);
Dataset load_dataset(const std::string& dir);

/// FNV-1a over the manifest plus every payload file, for reproducibility
/// checks ("same flags -> same hash").
std::uint64_t dataset_content_hash(const std::string& dir);

} // namespace eitaa

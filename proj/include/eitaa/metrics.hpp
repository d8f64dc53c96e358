#pragma once

#include "eitaa/mesh.hpp"

#include <Eigen/Dense>

#include <vector>

namespace eitaa {

/// ||truth - pred||^2 / n_T.
double mse(const Eigen::VectorXd& pred, const Eigen::VectorXd& truth);

struct SsimResult {
    double value = 1.0;
    bool degenerate_range = false; // truth raster was constant; L = 1 fallback used
};

/// Structural similarity of two per-element fields. Both are rasterized onto
/// a 64x64 grid over [-1,1]^2 (pixel = value of the containing triangle,
/// pixels outside the disk masked), then compared with an 11x11 Gaussian
/// window (sigma = 1.5), K1 = 0.01, K2 = 0.03, and dynamic range
/// L = max - min of the truth raster. Masked pixels are excluded from the
/// window statistics.
SsimResult ssim_mesh(const Eigen::VectorXd& pred, const Eigen::VectorXd& truth, const Mesh& mesh);
double ssim_mesh_value(const Eigen::VectorXd& pred, const Eigen::VectorXd& truth, const Mesh& mesh);

/// Raster used by ssim_mesh, exposed for testing. NaN marks masked pixels.
Eigen::MatrixXd raster_field(const Eigen::VectorXd& values, const Mesh& mesh, int resolution = 64);

enum class EieiClass : int { background = 1, artifact = 2, anomaly = 3 };

/// Per-class breakdown of the reconstruction-quality index
/// EIEI = w1 T1 + w2 T2. An element is flagged when its predicted deviation
/// from the background sigma0 exceeds tau times the largest true deviation;
/// flagged elements are anomalies where the truth has one and artifacts
/// elsewhere.
struct EieiBreakdown {
    std::vector<EieiClass> labels;  // per element
    int n1 = 0, n2 = 0, n3 = 0;     // background / artifact / anomaly counts
    double delta1 = 0.0, delta2 = 0.0, delta3 = 0.0; // mean |dev from class mean| of pred
    double w1 = 0.0, w2 = 0.0;      // mean pred over artifacts; over background+anomaly
    double t1 = 1.0, t2 = 1.0;
    double value = 0.0;
    bool truth_flat = false; // truth had no anomalies; every flag is an artifact
};

EieiBreakdown eiei(const Eigen::VectorXd& pred, const Eigen::VectorXd& truth, const Mesh& mesh, double sigma0 = 1.0,
                   double tau = 0.25);

/// Dynamic range of the prediction relative to the truth, percent.
double dr(const Eigen::VectorXd& pred, const Eigen::VectorXd& truth);

} // namespace eitaa

#include "eitaa/metrics.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace eitaa {

double mse(const Eigen::VectorXd& pred, const Eigen::VectorXd& truth) {
    if (pred.size() != truth.size() || pred.size() == 0) throw std::invalid_argument("mse: length mismatch");
    return (truth - pred).squaredNorm() / static_cast<double>(pred.size());
}

Eigen::MatrixXd raster_field(const Eigen::VectorXd& values, const Mesh& mesh, int resolution) {
    if (values.size() != mesh.n_elements()) throw std::invalid_argument("raster_field: length mismatch");
    if (resolution < 1) throw std::invalid_argument("raster_field: bad resolution");
    const double nan = std::numeric_limits<double>::quiet_NaN();
    Eigen::MatrixXd raster = Eigen::MatrixXd::Constant(resolution, resolution, nan);

    for (int e = 0; e < mesh.n_elements(); ++e) {
        const auto& tri = mesh.triangles[e];
        const Eigen::Vector2d a = mesh.nodes[tri[0]];
        const Eigen::Vector2d b = mesh.nodes[tri[1]];
        const Eigen::Vector2d c = mesh.nodes[tri[2]];
        const double lo_x = std::min({a.x(), b.x(), c.x()});
        const double hi_x = std::max({a.x(), b.x(), c.x()});
        const double lo_y = std::min({a.y(), b.y(), c.y()});
        const double hi_y = std::max({a.y(), b.y(), c.y()});
        const auto to_index = [&](double coord) { return (coord + 1.0) * resolution / 2.0 - 0.5; };
        const int i0 = std::max(0, static_cast<int>(std::ceil(to_index(lo_x) - 1e-12)));
        const int i1 = std::min(resolution - 1, static_cast<int>(std::floor(to_index(hi_x) + 1e-12)));
        const int j0 = std::max(0, static_cast<int>(std::ceil(to_index(lo_y) - 1e-12)));
        const int j1 = std::min(resolution - 1, static_cast<int>(std::floor(to_index(hi_y) + 1e-12)));
        const double det = (b - a).x() * (c - a).y() - (b - a).y() * (c - a).x();
        for (int i = i0; i <= i1; ++i) {
            const double x = -1.0 + (2.0 * i + 1.0) / resolution;
            for (int j = j0; j <= j1; ++j) {
                const double y = -1.0 + (2.0 * j + 1.0) / resolution;
                const double l1 = ((b.y() - c.y()) * (x - c.x()) + (c.x() - b.x()) * (y - c.y())) / det;
                const double l2 = ((c.y() - a.y()) * (x - c.x()) + (a.x() - c.x()) * (y - c.y())) / det;
                const double l3 = 1.0 - l1 - l2;
                if (l1 >= -1e-12 && l2 >= -1e-12 && l3 >= -1e-12) raster(i, j) = values[e];
            }
        }
    }
    return raster;
}

namespace {

Eigen::MatrixXd gaussian_window(int size, double sigma) {
    Eigen::MatrixXd w(size, size);
    const int half = size / 2;
    for (int i = 0; i < size; ++i)
        for (int j = 0; j < size; ++j) {
            const double dx = i - half;
            const double dy = j - half;
            w(i, j) = std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
        }
    return w / w.sum();
}

} // namespace

SsimResult ssim_mesh(const Eigen::VectorXd& pred, const Eigen::VectorXd& truth, const Mesh& mesh) {
    constexpr int kRes = 64;
    constexpr int kWin = 11;
    constexpr double kK1 = 0.01, kK2 = 0.03;
    const Eigen::MatrixXd rp = raster_field(pred, mesh, kRes);
    const Eigen::MatrixXd rt = raster_field(truth, mesh, kRes);
    const Eigen::MatrixXd window = gaussian_window(kWin, 1.5);
    const int half = kWin / 2;

    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    bool identical = true;
    for (int i = 0; i < kRes; ++i)
        for (int j = 0; j < kRes; ++j)
            if (!std::isnan(rt(i, j))) {
                lo = std::min(lo, rt(i, j));
                hi = std::max(hi, rt(i, j));
                if (rt(i, j) != rp(i, j)) identical = false;
            }
    if (!(hi > -std::numeric_limits<double>::infinity()))
        throw std::invalid_argument("ssim_mesh: raster is fully masked");

    SsimResult result;
    double range = hi - lo;
    if (range == 0.0) {
        if (identical) {
            result.value = 1.0;
            result.degenerate_range = true;
            return result;
        }
        range = 1.0;
        result.degenerate_range = true;
    }
    const double c1 = (kK1 * range) * (kK1 * range);
    const double c2 = (kK2 * range) * (kK2 * range);

    double total = 0.0;
    long count = 0;
    for (int i = 0; i < kRes; ++i) {
        for (int j = 0; j < kRes; ++j) {
            if (std::isnan(rt(i, j)) || std::isnan(rp(i, j))) continue;
            double wsum = 0.0, mx = 0.0, my = 0.0, mxx = 0.0, myy = 0.0, mxy = 0.0;
            for (int di = -half; di <= half; ++di) {
                const int ii = i + di;
                if (ii < 0 || ii >= kRes) continue;
                for (int dj = -half; dj <= half; ++dj) {
                    const int jj = j + dj;
                    if (jj < 0 || jj >= kRes) continue;
                    const double x = rp(ii, jj);
                    const double y = rt(ii, jj);
                    if (std::isnan(x) || std::isnan(y)) continue;
                    const double w = window(di + half, dj + half);
                    wsum += w;
                    mx += w * x;
                    my += w * y;
                    mxx += w * x * x;
                    myy += w * y * y;
                    mxy += w * x * y;
                }
            }
            mx /= wsum;
            my /= wsum;
            const double vx = std::max(0.0, mxx / wsum - mx * mx);
            const double vy = std::max(0.0, myy / wsum - my * my);
            const double cxy = mxy / wsum - mx * my;
            total += ((2.0 * mx * my + c1) * (2.0 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
            ++count;
        }
    }
    result.value = total / static_cast<double>(count);
    return result;
}

double ssim_mesh_value(const Eigen::VectorXd& pred, const Eigen::VectorXd& truth, const Mesh& mesh) {
    return ssim_mesh(pred, truth, mesh).value;
}

EieiBreakdown eiei(const Eigen::VectorXd& pred, const Eigen::VectorXd& truth, const Mesh& mesh, double sigma0,
                   double tau) {
    const Eigen::Index n = mesh.n_elements();
    if (pred.size() != n || truth.size() != n) throw std::invalid_argument("eiei: length mismatch");
    if (!(tau > 0.0 && tau < 1.0)) throw std::invalid_argument("eiei: tau must lie in (0,1)");

    EieiBreakdown out;
    const double max_dev = (truth.array() - sigma0).abs().maxCoeff();
    out.truth_flat = max_dev == 0.0;
    const double threshold = tau * max_dev;

    out.labels.resize(n);
    for (Eigen::Index e = 0; e < n; ++e) {
        const bool flagged = std::abs(pred[e] - sigma0) > threshold;
        const bool truth_anomaly = std::abs(truth[e] - sigma0) > 1e-12;
        if (flagged && truth_anomaly)
            out.labels[e] = EieiClass::anomaly;
        else if (flagged)
            out.labels[e] = EieiClass::artifact;
        else
            out.labels[e] = EieiClass::background;
    }

    auto class_stats = [&](EieiClass cls, int& count, double& sum, double& delta) {
        count = 0;
        sum = 0.0;
        for (Eigen::Index e = 0; e < n; ++e)
            if (out.labels[e] == cls) {
                ++count;
                sum += pred[e];
            }
        delta = 0.0;
        if (count > 0) {
            const double mean = sum / count;
            for (Eigen::Index e = 0; e < n; ++e)
                if (out.labels[e] == cls) delta += std::abs(pred[e] - mean);
            delta /= count;
        }
    };
    double sum1, sum2, sum3;
    class_stats(EieiClass::background, out.n1, sum1, out.delta1);
    class_stats(EieiClass::artifact, out.n2, sum2, out.delta2);
    class_stats(EieiClass::anomaly, out.n3, sum3, out.delta3);

    const double n_t = static_cast<double>(n);
    out.t1 = 1.0 - out.n2 / n_t;
    out.t2 = 1.0 - (out.delta1 * out.n1 + out.delta3 * out.n3) / n_t;
    out.w1 = out.n2 > 0 ? sum2 / out.n2 : 0.0;
    out.w2 = (out.n1 + out.n3) > 0 ? (sum1 + sum3) / (out.n1 + out.n3) : 0.0;
    out.value = out.w1 * out.t1 + out.w2 * out.t2;
    return out;
}

double dr(const Eigen::VectorXd& pred, const Eigen::VectorXd& truth) {
    if (pred.size() != truth.size() || pred.size() == 0) throw std::invalid_argument("dr: length mismatch");
    const double truth_range = truth.maxCoeff() - truth.minCoeff();
    if (truth_range == 0.0) throw std::invalid_argument("dr: truth field is constant");
    return (pred.maxCoeff() - pred.minCoeff()) / truth_range * 100.0;
}

} // namespace eitaa

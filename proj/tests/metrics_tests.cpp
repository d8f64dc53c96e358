#include "eitaa/metrics.hpp"

#include "eitaa/rng.hpp"
#include "eitaa/simdata.hpp"

#include <doctest.h>

#include <cmath>

using namespace eitaa;

namespace {

Mesh test_mesh() {
    ElectrodeConfig electrodes;
    return build_polar_mesh(32, 5, electrodes);
}

} // namespace

TEST_CASE("mse basics") {
    Eigen::VectorXd a(3), b(3);
    a << 1.0, 2.0, 3.0;
    b << 2.0, 1.0, 4.0;
    CHECK(mse(a, a) == 0.0);
    CHECK(mse(a, b) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK_THROWS(mse(a, Eigen::VectorXd::Ones(2)));
}

TEST_CASE("raster covers the disk and matches direct containment") {
    const Mesh mesh = test_mesh();
    Rng rng(3);
    Eigen::VectorXd values(mesh.n_elements());
    for (Eigen::Index e = 0; e < values.size(); ++e) values[e] = rng.uniform(0.0, 2.0);
    const int res = 64;
    const Eigen::MatrixXd raster = raster_field(values, mesh, res);

    int filled = 0;
    for (int i = 0; i < res; ++i)
        for (int j = 0; j < res; ++j) {
            const double x = -1.0 + (2.0 * i + 1.0) / res;
            const double y = -1.0 + (2.0 * j + 1.0) / res;
            const double r = std::hypot(x, y);
            if (!std::isnan(raster(i, j))) {
                ++filled;
                CHECK(r < 1.0 + 0.1); // inside or near the disk
                // brute-force oracle: the value belongs to a triangle
                // containing (or nearly containing) the pixel center
                bool found = false;
                for (Eigen::Index e = 0; e < values.size() && !found; ++e)
                    found = values[e] == raster(i, j);
                CHECK(found);
            } else {
                CHECK(r > 0.9); // interior pixels are always covered
            }
        }
    // disk fills about pi/4 of the bounding square
    const double fraction = static_cast<double>(filled) / (res * res);
    CHECK(fraction > 0.7);
    CHECK(fraction < 0.85);
}

TEST_CASE("ssim of a field with itself is 1") {
    const Mesh mesh = test_mesh();
    Rng rng(5);
    Eigen::VectorXd values(mesh.n_elements());
    for (Eigen::Index e = 0; e < values.size(); ++e) values[e] = rng.uniform(0.2, 2.0);
    const SsimResult self = ssim_mesh(values, values, mesh);
    CHECK(self.value == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(!self.degenerate_range);
}

TEST_CASE("ssim decreases with perturbation strength") {
    const Mesh mesh = test_mesh();
    Phantom phantom;
    phantom.anomalies.push_back({{0.3, 0.1}, 0.25, 1.8});
    const Eigen::VectorXd truth = rasterize_phantom(mesh, phantom).values;

    Rng rng(7);
    Eigen::VectorXd noise(truth.size());
    for (Eigen::Index e = 0; e < noise.size(); ++e) noise[e] = rng.normal();
    const double weak = ssim_mesh_value(truth + 0.05 * noise, truth, mesh);
    const double strong = ssim_mesh_value(truth + 0.5 * noise, truth, mesh);
    CHECK(weak < 1.0);
    CHECK(strong < weak);
}

TEST_CASE("ssim flags a constant truth raster as degenerate") {
    const Mesh mesh = test_mesh();
    const Eigen::VectorXd flat = Eigen::VectorXd::Ones(mesh.n_elements());
    const SsimResult same = ssim_mesh(flat, flat, mesh);
    CHECK(same.value == 1.0);
    CHECK(same.degenerate_range);
    const SsimResult off = ssim_mesh(1.1 * flat, flat, mesh);
    CHECK(off.degenerate_range);
    CHECK(off.value < 1.0);
}

TEST_CASE("eiei of a perfect two-level reconstruction") {
    // pred = truth: nothing is misflagged (n2 = 0, w1 = 0), the class means
    // are exact (delta1 = delta3 = 0), so EIEI = mean(pred) * 1 * 1.
    const Mesh mesh = test_mesh();
    Phantom phantom;
    phantom.anomalies.push_back({{0.0, 0.3}, 0.25, 1.8});
    const Eigen::VectorXd truth = rasterize_phantom(mesh, phantom).values;
    const EieiBreakdown breakdown = eiei(truth, truth, mesh);
    CHECK(breakdown.n2 == 0);
    CHECK(breakdown.w1 == 0.0);
    CHECK(breakdown.delta1 < 1e-12);
    CHECK(breakdown.delta3 < 1e-12); // mean of equal values up to rounding
    CHECK(breakdown.t1 == 1.0);
    CHECK(breakdown.t2 == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(breakdown.value == doctest::Approx(truth.mean()).epsilon(1e-12));
    CHECK(breakdown.n1 + breakdown.n2 + breakdown.n3 == mesh.n_elements());
    // the anomaly class is exactly where the truth deviates
    for (int e = 0; e < mesh.n_elements(); ++e)
        CHECK((breakdown.labels[e] == EieiClass::anomaly) == (truth[e] != 1.0));
}

TEST_CASE("eiei penalizes artifacts") {
    const Mesh mesh = test_mesh();
    Phantom phantom;
    phantom.anomalies.push_back({{0.0, 0.3}, 0.25, 1.8});
    const Eigen::VectorXd truth = rasterize_phantom(mesh, phantom).values;

    // plant a strong false blob far from the true anomaly
    Phantom wrong = phantom;
    wrong.anomalies.push_back({{0.0, -0.5}, 0.2, 1.9});
    const Eigen::VectorXd pred = rasterize_phantom(mesh, wrong).values;
    const EieiBreakdown breakdown = eiei(pred, truth, mesh);
    CHECK(breakdown.n2 > 0);
    CHECK(breakdown.t1 < 1.0);
    CHECK(breakdown.value != eiei(truth, truth, mesh).value);
    CHECK(breakdown.n1 + breakdown.n2 + breakdown.n3 == mesh.n_elements());
}

TEST_CASE("eiei handles a flat truth") {
    const Mesh mesh = test_mesh();
    const Eigen::VectorXd flat = Eigen::VectorXd::Ones(mesh.n_elements());
    const EieiBreakdown breakdown = eiei(flat, flat, mesh);
    CHECK(breakdown.truth_flat);
    CHECK(breakdown.n3 == 0);
}

TEST_CASE("dr arithmetic and failure modes") {
    Eigen::VectorXd truth(4), pred(4);
    truth << 1.0, 1.0, 2.0, 1.0;
    pred << 1.0, 1.0, 2.0, 1.0;
    CHECK(dr(pred, truth) == doctest::Approx(100.0).epsilon(1e-15));
    pred << 1.0, 1.0, 3.0, 1.0;
    CHECK(dr(pred, truth) == doctest::Approx(200.0).epsilon(1e-15));
    // shift-invariant: only ranges matter
    CHECK(dr(pred.array() + 5.0, truth) == doctest::Approx(200.0).epsilon(1e-12));
    CHECK_THROWS(dr(pred, Eigen::VectorXd::Ones(4)));
}

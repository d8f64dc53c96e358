#include "eitaa/fem.hpp"

#include "eitaa/rng.hpp"
#include "eitaa/simdata.hpp"

#include <doctest.h>

#include <cmath>

using namespace eitaa;

namespace {

ConductivityField random_sigma(const Mesh& mesh, std::uint64_t seed) {
    Rng rng(seed);
    ConductivityField sigma;
    sigma.values.resize(mesh.n_elements());
    for (Eigen::Index e = 0; e < sigma.values.size(); ++e) sigma.values[e] = rng.uniform(0.5, 2.0);
    return sigma;
}

ConductivityField ones_sigma(const Mesh& mesh) {
    return {Eigen::VectorXd::Ones(mesh.n_elements())};
}

StimProtocol single_pair_protocol(int n_electrodes, int a, int b, int c, int d, double current = 1.0) {
    StimProtocol protocol;
    protocol.injections.push_back({a, b, current});
    protocol.measurements.push_back({{c, d}});
    protocol.validate(n_electrodes);
    return protocol;
}

} // namespace

TEST_CASE("assembled system is symmetric") {
    ElectrodeConfig electrodes;
    const Mesh mesh = build_polar_mesh(32, 5, electrodes);
    const CemSystem system = assemble_system(mesh, random_sigma(mesh, 3), electrodes);
    const Eigen::SparseMatrix<double> diff = Eigen::SparseMatrix<double>(system.matrix.transpose()) - system.matrix;
    CHECK(diff.coeffs().cwiseAbs().maxCoeff() < 1e-13);
}

TEST_CASE("system assembly is linear in (sigma, 1/z)") {
    ElectrodeConfig electrodes;
    const Mesh mesh = build_polar_mesh(32, 3, electrodes);
    const ConductivityField sigma = random_sigma(mesh, 4);
    const double c = 3.7;
    ConductivityField scaled{c * sigma.values};
    ElectrodeConfig scaled_el = electrodes;
    scaled_el.contact_impedance.assign(electrodes.n_electrodes, electrodes.impedance(0) / c);

    const Eigen::SparseMatrix<double> a = assemble_system(mesh, sigma, electrodes).matrix;
    const Eigen::SparseMatrix<double> b = assemble_system(mesh, scaled, scaled_el).matrix;
    // every block except the grounding constraint scales by c
    const int n_inner = mesh.n_nodes() + electrodes.n_electrodes;
    const Eigen::MatrixXd da = Eigen::MatrixXd(a).topLeftCorner(n_inner, n_inner);
    const Eigen::MatrixXd db = Eigen::MatrixXd(b).topLeftCorner(n_inner, n_inner);
    CHECK((db - c * da).cwiseAbs().maxCoeff() < 1e-12 * da.cwiseAbs().maxCoeff() * c);
}

TEST_CASE("zero injected current gives identically zero potentials") {
    ElectrodeConfig electrodes;
    const Mesh mesh = build_polar_mesh(32, 3, electrodes);
    const StimProtocol protocol = single_pair_protocol(16, 0, 8, 3, 4, 0.0);
    const ForwardSolution solution = solve_forward(mesh, ones_sigma(mesh), electrodes, protocol);
    CHECK(solution.node_potentials.cwiseAbs().maxCoeff() == 0.0);
    CHECK(solution.electrode_potentials.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("electrode potentials are grounded to zero mean") {
    ElectrodeConfig electrodes;
    const Mesh mesh = build_polar_mesh(32, 5, electrodes);
    const StimProtocol protocol = opposite_adjacent_protocol(16);
    const ForwardSolution solution = solve_forward(mesh, random_sigma(mesh, 5), electrodes, protocol);
    for (Eigen::Index j = 0; j < solution.electrode_potentials.cols(); ++j)
        CHECK(std::abs(solution.electrode_potentials.col(j).sum()) < 1e-12);
}

TEST_CASE("conductivity/impedance scaling maps voltages to v/c") {
    ElectrodeConfig electrodes;
    const Mesh mesh = build_polar_mesh(32, 5, electrodes);
    const StimProtocol protocol = opposite_adjacent_protocol(16);
    const ConductivityField sigma = random_sigma(mesh, 6);
    const double c = 2.5;
    ElectrodeConfig scaled_el = electrodes;
    scaled_el.contact_impedance.assign(16, electrodes.impedance(0) / c);
    const Eigen::VectorXd v = forward_map(mesh, sigma, electrodes, protocol).v;
    const Eigen::VectorXd v_scaled = forward_map(mesh, {c * sigma.values}, scaled_el, protocol).v;
    CHECK((v_scaled - v / c).cwiseAbs().maxCoeff() < 1e-12 * v.cwiseAbs().maxCoeff());
}

TEST_CASE("reciprocity: swapping drive and measurement pairs preserves the reading") {
    ElectrodeConfig electrodes;
    const Mesh mesh = build_polar_mesh(32, 5, electrodes);
    for (std::uint64_t seed : {0ULL, 7ULL}) {
        const ConductivityField sigma = seed == 0 ? ones_sigma(mesh) : random_sigma(mesh, seed);
        const double ab_cd = forward_map(mesh, sigma, electrodes, single_pair_protocol(16, 1, 9, 4, 5)).v[0];
        const double cd_ab = forward_map(mesh, sigma, electrodes, single_pair_protocol(16, 4, 5, 1, 9)).v[0];
        CHECK(std::abs(ab_cd - cd_ab) < 1e-10 * std::abs(ab_cd));
    }
}

TEST_CASE("homogeneous disk: solution mirrors across the drive axis") {
    // 64 angular nodes put two boundary edges under each electrode, so both
    // the electrode arcs and the triangulation are mirror-symmetric about
    // the axis through electrodes 0 and 8.
    ElectrodeConfig electrodes;
    const Mesh mesh = build_polar_mesh(64, 8, electrodes);
    StimProtocol protocol;
    protocol.injections.push_back({0, 8, 1.0});
    protocol.measurements.push_back({{2, 3}});
    const ForwardSolution solution = solve_forward(mesh, ones_sigma(mesh), electrodes, protocol);
    // electrode l mirrors to 16 - l across the 0-8 axis
    for (int l = 1; l < 8; ++l)
        CHECK(solution.electrode_potentials(l, 0) ==
              doctest::Approx(solution.electrode_potentials(16 - l, 0)).epsilon(1e-9));
}

TEST_CASE("voltages converge under mesh refinement") {
    ElectrodeConfig electrodes;
    const StimProtocol protocol = opposite_adjacent_protocol(16);
    const Mesh coarse = build_polar_mesh(64, 14, electrodes);
    const Mesh fine = build_polar_mesh(128, 28, electrodes);
    const Eigen::VectorXd v_coarse = forward_map(coarse, ones_sigma(coarse), electrodes, protocol).v;
    const Eigen::VectorXd v_fine = forward_map(fine, ones_sigma(fine), electrodes, protocol).v;
    CHECK((v_coarse - v_fine).norm() / v_fine.norm() < 0.02);
}

TEST_CASE("rotating the scene by one electrode pitch permutes the measurements") {
    ElectrodeConfig electrodes;
    const Mesh mesh = build_polar_mesh(32, 5, electrodes);
    const StimProtocol protocol = opposite_adjacent_protocol(16);

    Phantom phantom;
    phantom.anomalies.push_back({{0.35, 0.1}, 0.2, 1.8});
    Phantom rotated = phantom;
    const double step = 2.0 * M_PI / 16.0;
    const Eigen::Rotation2D<double> rot(step);
    rotated.anomalies[0].center = rot * phantom.anomalies[0].center;

    const Eigen::VectorXd v = forward_map(mesh, rasterize_phantom(mesh, phantom), electrodes, protocol).v;
    const Eigen::VectorXd v_rot = forward_map(mesh, rasterize_phantom(mesh, rotated), electrodes, protocol).v;

    // flat index of measurement (injection l, pair starting at k)
    auto flat_index = [&](int l, int k) {
        int index = 0;
        for (int i = 0; i < static_cast<int>(protocol.injections.size()); ++i)
            for (const MeasPair& pair : protocol.measurements[i]) {
                if (protocol.injections[i].drive_plus == l && pair.plus == k) return index;
                ++index;
            }
        return -1;
    };
    for (int l = 0; l < 16; ++l)
        for (const MeasPair& pair : protocol.measurements[l]) {
            const int from = flat_index(l, pair.plus);
            const int to = flat_index((l + 1) % 16, (pair.plus + 1) % 16);
            REQUIRE(from >= 0);
            REQUIRE(to >= 0);
            CHECK(v_rot[to] == doctest::Approx(v[from]).epsilon(1e-9));
        }
}

TEST_CASE("opposite/adjacent protocol has the expected shape") {
    const StimProtocol protocol = opposite_adjacent_protocol(16);
    REQUIRE(protocol.injections.size() == 16);
    CHECK(protocol.n_measurements() == 192);
    for (int l = 0; l < 16; ++l) {
        CHECK(protocol.injections[l].drive_plus == l);
        CHECK(protocol.injections[l].drive_minus == (l + 8) % 16);
        CHECK(protocol.measurements[l].size() == 12);
        for (const MeasPair& pair : protocol.measurements[l]) {
            CHECK(pair.minus == (pair.plus + 1) % 16);
            for (int drive : {l, (l + 8) % 16}) {
                CHECK(pair.plus != drive);
                CHECK(pair.minus != drive);
            }
        }
    }
}

TEST_CASE("sensitivity matrix matches finite differences of the forward map") {
    ElectrodeConfig electrodes;
    const Mesh mesh = build_polar_mesh(32, 3, electrodes); // 80 elements
    const StimProtocol protocol = opposite_adjacent_protocol(16);
    const ConductivityField sigma = random_sigma(mesh, 11);
    const JacobianMatrix jac = assemble_jacobian(mesh, sigma, electrodes, protocol);
    REQUIRE(jac.rows() == protocol.n_measurements());
    REQUIRE(jac.cols() == mesh.n_elements());

    const double h = 1e-6;
    Rng rng(13);
    for (int probe = 0; probe < 12; ++probe) {
        const int e = static_cast<int>(rng.uniform_int(0, mesh.n_elements() - 1));
        ConductivityField plus = sigma, minus = sigma;
        plus.values[e] += h;
        minus.values[e] -= h;
        const Eigen::VectorXd fd =
            (forward_map(mesh, plus, electrodes, protocol).v - forward_map(mesh, minus, electrodes, protocol).v) /
            (2.0 * h);
        CHECK((jac.col(e) - fd).norm() < 1e-5 * std::max(1e-12, fd.norm()));
    }
}

TEST_CASE("forward_and_jacobian agrees with the separate entry points") {
    ElectrodeConfig electrodes;
    const Mesh mesh = build_polar_mesh(32, 3, electrodes);
    const StimProtocol protocol = opposite_adjacent_protocol(16);
    const ConductivityField sigma = random_sigma(mesh, 17);
    Eigen::VectorXd v;
    JacobianMatrix jac;
    forward_and_jacobian(mesh, sigma, electrodes, protocol, &v, &jac);
    CHECK((v - forward_map(mesh, sigma, electrodes, protocol).v).cwiseAbs().maxCoeff() == 0.0);
    CHECK((jac - assemble_jacobian(mesh, sigma, electrodes, protocol)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("nonpositive conductivity is rejected") {
    ElectrodeConfig electrodes;
    const Mesh mesh = build_polar_mesh(32, 3, electrodes);
    ConductivityField sigma = ones_sigma(mesh);
    sigma.values[2] = 0.0;
    CHECK_THROWS(sigma.validate(mesh));
}

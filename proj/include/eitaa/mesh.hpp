#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace eitaa {

/// Electrode layout on the boundary ring.
struct ElectrodeConfig {
    int n_electrodes = 16;
    double coverage_fraction = 0.5;        // fraction of boundary arc covered per electrode
    std::vector<double> contact_impedance; // z_l, ohm*m^2; empty -> uniform 0.01

    double impedance(int l) const {
        return contact_impedance.empty() ? 0.01 : contact_impedance.at(l);
    }
    void validate() const;
};

/// Triangulated unit disk with boundary electrodes.
///
/// The mesher is a structured polar layout: a center node plus R rings of A
/// equally spaced nodes each. Triangles are oriented counter-clockwise.
struct Mesh {
    std::vector<Eigen::Vector2d> nodes;
    std::vector<std::array<int, 3>> triangles;
    std::vector<std::array<int, 2>> boundary_edges; // ordered closed loop
    std::vector<std::vector<int>> electrode_map;    // per electrode: contiguous boundary-edge indices
    int rings = 0;                                  // R
    int angular = 0;                                // A, nodes per ring

    int n_nodes() const { return static_cast<int>(nodes.size()); }
    int n_elements() const { return static_cast<int>(triangles.size()); }
    int n_electrodes() const { return static_cast<int>(electrode_map.size()); }
};

/// Build the polar mesh with an explicit (angular, rings) layout.
/// `angular` must be a positive multiple of the electrode count.
Mesh build_polar_mesh(int angular, int rings, const ElectrodeConfig& electrodes);

/// Choose (angular, rings) so the element count lands within +-10% of
/// `target_elements`, then build. Deterministic; `seed` is accepted for
/// interface stability and does not currently perturb the layout.
Mesh build_disk_mesh(int target_elements, const ElectrodeConfig& electrodes, std::uint64_t seed = 0);

/// Signed (positive) area of each triangle.
Eigen::VectorXd element_areas(const Mesh& mesh);

/// Per-element 2x3 operator mapping the three nodal values of a triangle to
/// the constant gradient of the P1 interpolant.
std::vector<Eigen::Matrix<double, 2, 3>> element_gradients(const Mesh& mesh);

/// Throws std::runtime_error describing the first violated Mesh invariant.
void check_mesh(const Mesh& mesh);

std::string mesh_to_json(const Mesh& mesh);
Mesh mesh_from_json(const std::string& text);
void save_mesh(const Mesh& mesh, const std::string& path);
Mesh load_mesh(const std::string& path);

} // namespace eitaa

#include "eitaa/mesh.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>
#include <stdexcept>

namespace eitaa {

using json = nlohmann::json;

void ElectrodeConfig::validate() const {
    if (n_electrodes < 2) throw std::invalid_argument("ElectrodeConfig: need at least 2 electrodes");
    if (!(coverage_fraction > 0.0 && coverage_fraction < 1.0))
        throw std::invalid_argument("ElectrodeConfig: coverage_fraction must lie in (0,1)");
    for (std::size_t l = 0; l < contact_impedance.size(); ++l)
        if (!(contact_impedance[l] > 0.0))
            throw std::invalid_argument("ElectrodeConfig: contact impedance must be positive");
}

namespace {

// Contiguous boundary-edge run per electrode, centered at angle 2*pi*l/n_E.
// Edge counts follow cumulative rounding of coverage*A/n_E so the total
// covered arc stays within half an edge of coverage*2*pi.
std::vector<std::vector<int>> electrode_edge_runs(int angular, const ElectrodeConfig& cfg) {
    const int n_e = cfg.n_electrodes;
    const double per = cfg.coverage_fraction * angular / n_e;
    std::vector<std::vector<int>> runs(n_e);
    for (int l = 0; l < n_e; ++l) {
        long count = std::lround((l + 1) * per) - std::lround(l * per);
        count = std::max<long>(1, count);
        const double center = static_cast<double>(l) * angular / n_e; // in edge units
        // round half up (not half away from zero) so every electrode gets the
        // same sub-edge offset; lround would shift only the arcs that start
        // at a negative half-edge
        const long start = static_cast<long>(std::floor(center - count / 2.0 + 0.5));
        for (long t = 0; t < count; ++t) {
            long e = (start + t) % angular;
            if (e < 0) e += angular;
            runs[l].push_back(static_cast<int>(e));
        }
    }
    std::set<int> seen;
    for (const auto& run : runs)
        for (int e : run)
            if (!seen.insert(e).second)
                throw std::invalid_argument("mesh: electrodes overlap; boundary too coarse for this electrode layout");
    return runs;
}

} // namespace

Mesh build_polar_mesh(int angular, int rings, const ElectrodeConfig& electrodes) {
    electrodes.validate();
    if (rings < 1) throw std::invalid_argument("build_polar_mesh: rings must be >= 1");
    if (angular < 3 || angular % electrodes.n_electrodes != 0)
        throw std::invalid_argument("build_polar_mesh: angular must be a multiple of the electrode count");

    Mesh m;
    m.rings = rings;
    m.angular = angular;
    m.nodes.reserve(1 + static_cast<std::size_t>(angular) * rings);
    m.nodes.emplace_back(0.0, 0.0);
    for (int i = 1; i <= rings; ++i) {
        const double r = static_cast<double>(i) / rings;
        for (int j = 0; j < angular; ++j) {
            const double t = 2.0 * std::numbers::pi * j / angular;
            m.nodes.emplace_back(r * std::cos(t), r * std::sin(t));
        }
    }
    // ring 1 nodes fan around the center
    for (int j = 0; j < angular; ++j)
        m.triangles.push_back({0, 1 + j, 1 + (j + 1) % angular});
    // annuli
    for (int i = 1; i < rings; ++i) {
        const int b0 = 1 + (i - 1) * angular;
        const int b1 = 1 + i * angular;
        for (int j = 0; j < angular; ++j) {
            const int j1 = (j + 1) % angular;
            if (j % 2 == 0) {
                m.triangles.push_back({b0 + j, b1 + j, b1 + j1});
                m.triangles.push_back({b0 + j, b1 + j1, b0 + j1});
            } else {
                // alternate the quad diagonal so the triangulation is
                // mirror-symmetric about axes through the angle-zero node
                m.triangles.push_back({b0 + j, b1 + j, b0 + j1});
                m.triangles.push_back({b1 + j, b1 + j1, b0 + j1});
            }
        }
    }
    const int b = 1 + (rings - 1) * angular;
    for (int j = 0; j < angular; ++j)
        m.boundary_edges.push_back({b + j, b + (j + 1) % angular});

    m.electrode_map = electrode_edge_runs(angular, electrodes);
    return m;
}

Mesh build_disk_mesh(int target_elements, const ElectrodeConfig& electrodes, std::uint64_t /*seed*/) {
    electrodes.validate();
    if (target_elements < 16)
        throw std::invalid_argument("build_disk_mesh: target_elements must be >= 16");

    // The polar layout yields n_T = A*(2R-1) with A a multiple of n_E. Pick
    // the candidate inside the +-10% window that best balances count error
    // against triangle aspect ratio (A close to 2*pi*R).
    const int n_e = electrodes.n_electrodes;
    struct Candidate {
        double score;
        int a, r;
    };
    std::vector<Candidate> candidates;
    for (int a = n_e; a <= 128 * n_e; a += n_e) {
        for (int r = 1; r <= 512; ++r) {
            const long n_t = static_cast<long>(a) * (2L * r - 1);
            if (n_t > target_elements * 2) break;
            const double count_err = std::abs(static_cast<double>(n_t) / target_elements - 1.0);
            if (count_err > 0.10) continue;
            const double aspect = std::abs(std::log(2.0 * std::numbers::pi * r / a));
            candidates.push_back({aspect + count_err, a, r});
        }
    }
    std::sort(candidates.begin(), candidates.end(),
              [](const Candidate& x, const Candidate& y) { return x.score < y.score; });
    for (const auto& c : candidates) {
        try {
            Mesh m = build_polar_mesh(c.a, c.r, electrodes);
            check_mesh(m);
            return m;
        } catch (const std::invalid_argument&) {
            // electrode layout infeasible at this resolution; try the next candidate
        }
    }
    throw std::invalid_argument("build_disk_mesh: no polar layout hits the target element count within 10%");
}

Eigen::VectorXd element_areas(const Mesh& mesh) {
    Eigen::VectorXd areas(mesh.n_elements());
    for (int t = 0; t < mesh.n_elements(); ++t) {
        const auto& tri = mesh.triangles[t];
        const Eigen::Vector2d& a = mesh.nodes[tri[0]];
        const Eigen::Vector2d& b = mesh.nodes[tri[1]];
        const Eigen::Vector2d& c = mesh.nodes[tri[2]];
        areas[t] = 0.5 * ((b.x() - a.x()) * (c.y() - a.y()) - (c.x() - a.x()) * (b.y() - a.y()));
    }
    return areas;
}

std::vector<Eigen::Matrix<double, 2, 3>> element_gradients(const Mesh& mesh) {
    std::vector<Eigen::Matrix<double, 2, 3>> grads(mesh.n_elements());
    for (int t = 0; t < mesh.n_elements(); ++t) {
        const auto& tri = mesh.triangles[t];
        Eigen::Matrix3d M;
        for (int i = 0; i < 3; ++i)
            M.row(i) << 1.0, mesh.nodes[tri[i]].x(), mesh.nodes[tri[i]].y();
        // rows 1..2 of M^{-1} map nodal values to the interpolant's gradient
        Eigen::Matrix3d inv = M.inverse();
        grads[t] = inv.bottomRows<2>();
    }
    return grads;
}

void check_mesh(const Mesh& mesh) {
    const int n_n = mesh.n_nodes();
    const int n_t = mesh.n_elements();
    if (n_t == 0) throw std::runtime_error("mesh: no triangles");

    Eigen::VectorXd areas = element_areas(mesh);
    for (int t = 0; t < n_t; ++t)
        if (!(areas[t] > 0.0))
            throw std::runtime_error("mesh: triangle " + std::to_string(t) + " has non-positive area");

    std::vector<int> refs(n_n, 0);
    for (const auto& tri : mesh.triangles)
        for (int i : tri) {
            if (i < 0 || i >= n_n) throw std::runtime_error("mesh: triangle node index out of range");
            refs[i]++;
        }
    for (int i = 0; i < n_n; ++i)
        if (refs[i] == 0) throw std::runtime_error("mesh: node " + std::to_string(i) + " unreferenced");

    for (std::size_t i = 0; i < mesh.nodes.size(); ++i)
        for (std::size_t j = i + 1; j < mesh.nodes.size(); ++j)
            if ((mesh.nodes[i] - mesh.nodes[j]).norm() < 1e-12)
                throw std::runtime_error("mesh: duplicate nodes");

    // boundary: single closed loop, all nodes on the unit circle
    const auto& be = mesh.boundary_edges;
    if (be.empty()) throw std::runtime_error("mesh: no boundary edges");
    for (std::size_t e = 0; e < be.size(); ++e) {
        if (be[e][1] != be[(e + 1) % be.size()][0])
            throw std::runtime_error("mesh: boundary edges do not form a closed loop");
        if (std::abs(mesh.nodes[be[e][0]].norm() - 1.0) > 1e-9)
            throw std::runtime_error("mesh: boundary node off the unit circle");
    }

    // electrode runs: pairwise disjoint, contiguous along the loop
    std::set<int> used;
    const int n_be = static_cast<int>(be.size());
    for (const auto& run : mesh.electrode_map) {
        if (run.empty()) throw std::runtime_error("mesh: electrode covers no boundary edges");
        for (std::size_t k = 0; k + 1 < run.size(); ++k)
            if ((run[k] + 1) % n_be != run[k + 1])
                throw std::runtime_error("mesh: electrode edges not contiguous");
        for (int e : run) {
            if (e < 0 || e >= n_be) throw std::runtime_error("mesh: electrode edge index out of range");
            if (!used.insert(e).second) throw std::runtime_error("mesh: electrode edge sets overlap");
        }
    }
}

std::string mesh_to_json(const Mesh& mesh) {
    json j;
    j["nodes"] = json::array();
    for (const auto& p : mesh.nodes) j["nodes"].push_back({p.x(), p.y()});
    j["triangles"] = mesh.triangles;
    j["boundary_edges"] = mesh.boundary_edges;
    j["electrode_map"] = mesh.electrode_map;
    j["rings"] = mesh.rings;
    j["angular"] = mesh.angular;
    return j.dump();
}

Mesh mesh_from_json(const std::string& text) {
    json j = json::parse(text);
    Mesh m;
    for (const auto& p : j.at("nodes")) m.nodes.emplace_back(p.at(0).get<double>(), p.at(1).get<double>());
    for (const auto& t : j.at("triangles")) m.triangles.push_back({t.at(0), t.at(1), t.at(2)});
    for (const auto& e : j.at("boundary_edges")) m.boundary_edges.push_back({e.at(0), e.at(1)});
    for (const auto& r : j.at("electrode_map")) m.electrode_map.push_back(r.get<std::vector<int>>());
    m.rings = j.value("rings", 0);
    m.angular = j.value("angular", 0);
    return m;
}

void save_mesh(const Mesh& mesh, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("save_mesh: cannot open " + path);
    out << mesh_to_json(mesh);
}

Mesh load_mesh(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("load_mesh: cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return mesh_from_json(ss.str());
}

} // namespace eitaa

#include "eitaa/fem.hpp"

#include <cmath>
#include <map>
#include <stdexcept>

namespace eitaa {

void ConductivityField::validate(const Mesh& mesh) const {
    if (values.size() != mesh.n_elements())
        throw std::invalid_argument("ConductivityField: length does not match element count");
    for (Eigen::Index i = 0; i < values.size(); ++i)
        if (!(values[i] > 0.0) || !std::isfinite(values[i]))
            throw std::invalid_argument("ConductivityField: values must be positive and finite");
}

int StimProtocol::n_measurements() const {
    int n = 0;
    for (const auto& pairs : measurements) n += static_cast<int>(pairs.size());
    return n;
}

void StimProtocol::validate(int n_electrodes) const {
    if (injections.size() != measurements.size())
        throw std::invalid_argument("StimProtocol: injections/measurements size mismatch");
    for (std::size_t i = 0; i < injections.size(); ++i) {
        const auto& inj = injections[i];
        if (inj.drive_plus == inj.drive_minus)
            throw std::invalid_argument("StimProtocol: drive electrodes must differ");
        if (inj.drive_plus < 0 || inj.drive_plus >= n_electrodes || inj.drive_minus < 0 ||
            inj.drive_minus >= n_electrodes)
            throw std::invalid_argument("StimProtocol: drive electrode out of range");
        for (const auto& p : measurements[i]) {
            if (p.plus == p.minus) throw std::invalid_argument("StimProtocol: measurement pair degenerate");
            if (p.plus < 0 || p.plus >= n_electrodes || p.minus < 0 || p.minus >= n_electrodes)
                throw std::invalid_argument("StimProtocol: measurement electrode out of range");
            if (p.plus == inj.drive_plus || p.plus == inj.drive_minus || p.minus == inj.drive_plus ||
                p.minus == inj.drive_minus)
                throw std::invalid_argument("StimProtocol: measurement pair touches a drive electrode");
        }
    }
}

StimProtocol opposite_adjacent_protocol(int n_electrodes) {
    if (n_electrodes < 4 || n_electrodes % 2 != 0)
        throw std::invalid_argument("opposite_adjacent_protocol: need an even electrode count >= 4");
    StimProtocol p;
    for (int l = 0; l < n_electrodes; ++l) {
        const int dp = l;
        const int dm = (l + n_electrodes / 2) % n_electrodes;
        p.injections.push_back({dp, dm, 1.0});
        std::vector<MeasPair> pairs;
        for (int k = 0; k < n_electrodes; ++k) {
            const int k1 = (k + 1) % n_electrodes;
            if (k == dp || k == dm || k1 == dp || k1 == dm) continue;
            pairs.push_back({k, k1});
        }
        p.measurements.push_back(std::move(pairs));
    }
    return p;
}

CemSystem assemble_system(const Mesh& mesh, const ConductivityField& sigma, const ElectrodeConfig& electrodes) {
    sigma.validate(mesh);
    electrodes.validate();
    if (mesh.n_electrodes() != electrodes.n_electrodes)
        throw std::invalid_argument("assemble_system: electrode count mismatch between mesh and config");
    for (const auto& run : mesh.electrode_map)
        if (run.empty()) throw std::runtime_error("assemble_system: electrode covers zero boundary edges (singular system)");

    const int n_n = mesh.n_nodes();
    const int n_e = mesh.n_electrodes();
    const int dim = n_n + n_e + 1;

    const auto areas = element_areas(mesh);
    const auto grads = element_gradients(mesh);

    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(static_cast<std::size_t>(mesh.n_elements()) * 9 + mesh.boundary_edges.size() * 9 + 2 * n_e);

    for (int t = 0; t < mesh.n_elements(); ++t) {
        const auto& tri = mesh.triangles[t];
        const Eigen::Matrix3d ke = sigma.values[t] * areas[t] * (grads[t].transpose() * grads[t]);
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j)
                trips.emplace_back(tri[i], tri[j], ke(i, j));
    }

    for (int l = 0; l < n_e; ++l) {
        const double zl = electrodes.impedance(l);
        for (int eidx : mesh.electrode_map[l]) {
            const auto& edge = mesh.boundary_edges[eidx];
            const int i = edge[0], j = edge[1];
            const double h = (mesh.nodes[i] - mesh.nodes[j]).norm();
            trips.emplace_back(i, i, h / (3.0 * zl));
            trips.emplace_back(j, j, h / (3.0 * zl));
            trips.emplace_back(i, j, h / (6.0 * zl));
            trips.emplace_back(j, i, h / (6.0 * zl));
            trips.emplace_back(i, n_n + l, -h / (2.0 * zl));
            trips.emplace_back(n_n + l, i, -h / (2.0 * zl));
            trips.emplace_back(j, n_n + l, -h / (2.0 * zl));
            trips.emplace_back(n_n + l, j, -h / (2.0 * zl));
            trips.emplace_back(n_n + l, n_n + l, h / zl);
        }
    }

    // grounding: sum of electrode potentials = 0 via a Lagrange multiplier
    for (int l = 0; l < n_e; ++l) {
        trips.emplace_back(dim - 1, n_n + l, 1.0);
        trips.emplace_back(n_n + l, dim - 1, 1.0);
    }

    CemSystem sys;
    sys.n_nodes = n_n;
    sys.n_electrodes = n_e;
    sys.matrix.resize(dim, dim);
    sys.matrix.setFromTriplets(trips.begin(), trips.end());
    return sys;
}

CemFactor::CemFactor(const Mesh& mesh, const ConductivityField& sigma, const ElectrodeConfig& electrodes) {
    CemSystem sys = assemble_system(mesh, sigma, electrodes);
    matrix_ = sys.matrix;
    n_nodes_ = sys.n_nodes;
    n_electrodes_ = sys.n_electrodes;
    lu_.compute(matrix_);
    if (lu_.info() != Eigen::Success)
        throw std::runtime_error("CemFactor: sparse factorization failed (singular CEM system)");
}

ForwardSolution CemFactor::solve(const Eigen::MatrixXd& electrode_currents) const {
    if (electrode_currents.rows() != n_electrodes_)
        throw std::invalid_argument("CemFactor::solve: current vector length mismatch");
    const int dim = n_nodes_ + n_electrodes_ + 1;
    Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(dim, electrode_currents.cols());
    rhs.middleRows(n_nodes_, n_electrodes_) = electrode_currents;
    Eigen::MatrixXd x = lu_.solve(rhs);
    const double rhs_norm = rhs.norm();
    if (rhs_norm > 0.0) {
        const double rel_res = (matrix_ * x - rhs).norm() / rhs_norm;
        if (!(rel_res <= 1e-10))
            throw std::runtime_error("CemFactor::solve: relative residual " + std::to_string(rel_res) +
                                     " exceeds 1e-10 (ill-conditioned system)");
    }
    ForwardSolution sol;
    sol.node_potentials = x.topRows(n_nodes_);
    sol.electrode_potentials = x.middleRows(n_nodes_, n_electrodes_);
    return sol;
}

ForwardSolution solve_forward(const Mesh& mesh, const ConductivityField& sigma, const ElectrodeConfig& electrodes,
                              const StimProtocol& protocol) {
    protocol.validate(mesh.n_electrodes());
    CemFactor factor(mesh, sigma, electrodes);
    Eigen::MatrixXd currents =
        Eigen::MatrixXd::Zero(mesh.n_electrodes(), static_cast<Eigen::Index>(protocol.injections.size()));
    for (std::size_t c = 0; c < protocol.injections.size(); ++c) {
        currents(protocol.injections[c].drive_plus, static_cast<Eigen::Index>(c)) += protocol.injections[c].current;
        currents(protocol.injections[c].drive_minus, static_cast<Eigen::Index>(c)) -= protocol.injections[c].current;
    }
    return factor.solve(currents);
}

MeasurementSet measure(const ForwardSolution& solution, const StimProtocol& protocol) {
    if (solution.electrode_potentials.cols() != static_cast<Eigen::Index>(protocol.injections.size()))
        throw std::invalid_argument("measure: solution/protocol injection count mismatch");
    MeasurementSet out;
    out.v.resize(protocol.n_measurements());
    int row = 0;
    for (std::size_t i = 0; i < protocol.injections.size(); ++i)
        for (const auto& p : protocol.measurements[i]) {
            if (p.plus == p.minus) throw std::invalid_argument("measure: degenerate measurement pair");
            out.v[row++] = solution.electrode_potentials(p.plus, static_cast<Eigen::Index>(i)) -
                           solution.electrode_potentials(p.minus, static_cast<Eigen::Index>(i));
        }
    return out;
}

MeasurementSet forward_map(const Mesh& mesh, const ConductivityField& sigma, const ElectrodeConfig& electrodes,
                           const StimProtocol& protocol) {
    return measure(solve_forward(mesh, sigma, electrodes, protocol), protocol);
}

namespace {

struct PairKey {
    int a, b;
    bool operator<(const PairKey& o) const { return a != o.a ? a < o.a : b < o.b; }
};

} // namespace

void forward_and_jacobian(const Mesh& mesh, const ConductivityField& sigma, const ElectrodeConfig& electrodes,
                          const StimProtocol& protocol, Eigen::VectorXd* v_out, JacobianMatrix* j_out) {
    protocol.validate(mesh.n_electrodes());
    const int n_e = mesh.n_electrodes();
    const int n_inj = static_cast<int>(protocol.injections.size());

    // distinct measurement pairs, each driven adjointly with unit current
    std::map<PairKey, int> pair_col;
    for (const auto& pairs : protocol.measurements)
        for (const auto& p : pairs)
            pair_col.emplace(PairKey{p.plus, p.minus}, 0);
    int next = 0;
    for (auto& [key, col] : pair_col) col = next++;
    const int n_pairs = next;

    Eigen::MatrixXd currents = Eigen::MatrixXd::Zero(n_e, n_inj + n_pairs);
    for (int c = 0; c < n_inj; ++c) {
        currents(protocol.injections[c].drive_plus, c) += protocol.injections[c].current;
        currents(protocol.injections[c].drive_minus, c) -= protocol.injections[c].current;
    }
    for (const auto& [key, col] : pair_col) {
        currents(key.a, n_inj + col) += 1.0;
        currents(key.b, n_inj + col) -= 1.0;
    }

    CemFactor factor(mesh, sigma, electrodes);
    ForwardSolution sol = factor.solve(currents);

    if (v_out) {
        ForwardSolution drive_only;
        drive_only.node_potentials = sol.node_potentials.leftCols(n_inj);
        drive_only.electrode_potentials = sol.electrode_potentials.leftCols(n_inj);
        *v_out = measure(drive_only, protocol).v;
    }

    if (!j_out) return;

    const auto areas = element_areas(mesh);
    const auto grads = element_gradients(mesh);
    const int n_t = mesh.n_elements();

    // per-element gradients of every field, 2 x (n_inj + n_pairs) per element
    const int n_m = protocol.n_measurements();
    j_out->resize(n_m, n_t);
    for (int t = 0; t < n_t; ++t) {
        const auto& tri = mesh.triangles[t];
        Eigen::Matrix<double, 3, Eigen::Dynamic> nodal(3, n_inj + n_pairs);
        for (int i = 0; i < 3; ++i) nodal.row(i) = sol.node_potentials.row(tri[i]);
        const Eigen::Matrix<double, 2, Eigen::Dynamic> g = grads[t] * nodal;
        int row = 0;
        for (int c = 0; c < n_inj; ++c) {
            const Eigen::Vector2d gd = g.col(c);
            for (const auto& p : protocol.measurements[c]) {
                const int mcol = n_inj + pair_col.at(PairKey{p.plus, p.minus});
                (*j_out)(row++, t) = -areas[t] * gd.dot(g.col(mcol));
            }
        }
    }
}

JacobianMatrix assemble_jacobian(const Mesh& mesh, const ConductivityField& sigma, const ElectrodeConfig& electrodes,
                                 const StimProtocol& protocol) {
    JacobianMatrix j;
    forward_and_jacobian(mesh, sigma, electrodes, protocol, nullptr, &j);
    return j;
}

} // namespace eitaa

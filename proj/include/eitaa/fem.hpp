#pragma once

#include "eitaa/mesh.hpp"

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include <limits>
#include <memory>
#include <vector>

namespace eitaa {

/// Per-element conductivity, Ohm^-1 m^-1.
struct ConductivityField {
    Eigen::VectorXd values;

    void validate(const Mesh& mesh) const;
};

struct Injection {
    int drive_plus;
    int drive_minus;
    double current = 1.0;
};

struct MeasPair {
    int plus;
    int minus;
};

/// Current-injection patterns and the voltage pairs read out for each.
struct StimProtocol {
    std::vector<Injection> injections;
    std::vector<std::vector<MeasPair>> measurements; // per injection

    int n_measurements() const;
    void validate(int n_electrodes) const;
};

/// Opposite injection (l, l+L/2) with unit current; adjacent measurement
/// pairs (k, k+1) excluding pairs that touch a drive electrode.
StimProtocol opposite_adjacent_protocol(int n_electrodes);

/// Per-injection interior nodal potentials and electrode potentials,
/// grounded so the electrode potentials sum to zero.
struct ForwardSolution {
    Eigen::MatrixXd node_potentials;      // n_nodes x n_injections
    Eigen::MatrixXd electrode_potentials; // n_electrodes x n_injections
};

struct MeasurementSet {
    Eigen::VectorXd v;
    double noise_eta = 0.0; // relative noise level used; 0 = clean
    double snr_db = std::numeric_limits<double>::infinity();
};

using JacobianMatrix = Eigen::MatrixXd; // n_M x n_T

/// Assembled complete-electrode-model system over (nodal potentials,
/// electrode potentials, grounding multiplier). The last row/column enforce
/// sum_l U_l = 0.
struct CemSystem {
    Eigen::SparseMatrix<double> matrix; // (n_nodes + n_electrodes + 1) square
    int n_nodes = 0;
    int n_electrodes = 0;
};

CemSystem assemble_system(const Mesh& mesh, const ConductivityField& sigma, const ElectrodeConfig& electrodes);

/// Factorized CEM system; shareable and immutable once built.
class CemFactor {
public:
    CemFactor(const Mesh& mesh, const ConductivityField& sigma, const ElectrodeConfig& electrodes);

    /// Solve for one injection per column of `currents` (n_electrodes x k).
    ForwardSolution solve(const Eigen::MatrixXd& electrode_currents) const;

    int n_nodes() const { return n_nodes_; }
    int n_electrodes() const { return n_electrodes_; }

private:
    Eigen::SparseLU<Eigen::SparseMatrix<double>> lu_;
    Eigen::SparseMatrix<double> matrix_;
    int n_nodes_;
    int n_electrodes_;
};

ForwardSolution solve_forward(const Mesh& mesh, const ConductivityField& sigma, const ElectrodeConfig& electrodes,
                              const StimProtocol& protocol);

MeasurementSet measure(const ForwardSolution& solution, const StimProtocol& protocol);

MeasurementSet forward_map(const Mesh& mesh, const ConductivityField& sigma, const ElectrodeConfig& electrodes,
                           const StimProtocol& protocol);

/// Sensitivity J_{i,j} = -area(tau_j) * grad(u_drive) . grad(u_meas) on tau_j,
/// with the measurement field driven adjointly by unit current. The minus
/// sign makes J match finite differences of forward_map.
JacobianMatrix assemble_jacobian(const Mesh& mesh, const ConductivityField& sigma, const ElectrodeConfig& electrodes,
                                 const StimProtocol& protocol);

/// Forward map and Jacobian from one factorization.
void forward_and_jacobian(const Mesh& mesh, const ConductivityField& sigma, const ElectrodeConfig& electrodes,
                          const StimProtocol& protocol, Eigen::VectorXd* v_out, JacobianMatrix* j_out);

} // namespace eitaa

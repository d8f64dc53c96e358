#pragma once

#include "eitaa/mesh.hpp"
#include "eitaa/metrics.hpp"

#include <Eigen/Dense>

#include <string>
#include <vector>

namespace eitaa {

/// SVG of the mesh with each triangle filled from a blue-white-red colormap
/// over [min, max] of `values`. Output bytes are deterministic.
std::string render_field_svg(const Mesh& mesh, const Eigen::VectorXd& values);

/// SVG class map: background blue, artifacts yellow, anomalies red.
std::string render_class_map_svg(const Mesh& mesh, const std::vector<EieiClass>& labels);

void write_svg(const std::string& svg, const std::string& path);

} // namespace eitaa

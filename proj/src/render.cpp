#include "eitaa/render.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace eitaa {

namespace {

constexpr int kSize = 512; // canvas pixels; unit disk maps to the full canvas

void svg_header(std::ostringstream& out) {
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kSize << "\" height=\"" << kSize
        << "\" viewBox=\"0 0 " << kSize << " " << kSize << "\">\n";
}

std::string color_hex(int r, int g, int b) {
    char buf[8];
    std::snprintf(buf, sizeof(buf), "#%02x%02x%02x", r, g, b);
    return buf;
}

/// Diverging blue -> white -> red over t in [0,1].
std::string diverging_color(double t) {
    t = std::min(1.0, std::max(0.0, t));
    int r, g, b;
    if (t < 0.5) {
        const double s = t / 0.5;
        r = static_cast<int>(std::lround(255.0 * (0.2 + 0.8 * s)));
        g = static_cast<int>(std::lround(255.0 * (0.3 + 0.7 * s)));
        b = 255;
    } else {
        const double s = (t - 0.5) / 0.5;
        r = 255;
        g = static_cast<int>(std::lround(255.0 * (1.0 - 0.7 * s)));
        b = static_cast<int>(std::lround(255.0 * (1.0 - 0.8 * s)));
    }
    return color_hex(r, g, b);
}

void emit_triangle(std::ostringstream& out, const Mesh& mesh, int e, const std::string& fill) {
    out << "<polygon points=\"";
    const auto& tri = mesh.triangles[e];
    for (int k = 0; k < 3; ++k) {
        const Eigen::Vector2d& p = mesh.nodes[tri[k]];
        const double x = (p.x() + 1.0) / 2.0 * kSize;
        const double y = (1.0 - p.y()) / 2.0 * kSize; // SVG y grows downward
        char buf[48];
        std::snprintf(buf, sizeof(buf), "%.3f,%.3f", x, y);
        out << buf << (k < 2 ? " " : "");
    }
    out << "\" fill=\"" << fill << "\" stroke=\"" << fill << "\" stroke-width=\"0.4\"/>\n";
}

} // namespace

std::string render_field_svg(const Mesh& mesh, const Eigen::VectorXd& values) {
    if (values.size() != mesh.n_elements()) throw std::invalid_argument("render_field_svg: length mismatch");
    const double lo = values.minCoeff();
    const double hi = values.maxCoeff();
    const double span = hi > lo ? hi - lo : 1.0;
    std::ostringstream out;
    svg_header(out);
    for (int e = 0; e < mesh.n_elements(); ++e)
        emit_triangle(out, mesh, e, diverging_color((values[e] - lo) / span));
    out << "</svg>\n";
    return out.str();
}

std::string render_class_map_svg(const Mesh& mesh, const std::vector<EieiClass>& labels) {
    if (static_cast<int>(labels.size()) != mesh.n_elements())
        throw std::invalid_argument("render_class_map_svg: length mismatch");
    std::ostringstream out;
    svg_header(out);
    for (int e = 0; e < mesh.n_elements(); ++e) {
        const char* fill = "#2060c0"; // background: blue
        if (labels[e] == EieiClass::artifact) fill = "#f0d020"; // yellow
        if (labels[e] == EieiClass::anomaly) fill = "#d02020";  // red
        emit_triangle(out, mesh, e, fill);
    }
    out << "</svg>\n";
    return out.str();
}

void write_svg(const std::string& svg, const std::string& path) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw std::runtime_error("cannot write " + tmp);
        out << svg;
    }
    std::rename(tmp.c_str(), path.c_str());
}

} // namespace eitaa

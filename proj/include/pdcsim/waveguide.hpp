#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>
#include <vector>

#include "pdcsim/common.hpp"
#include "pdcsim/materials.hpp"

namespace pdcsim::waveguide {

/// Rib cross-section parameters. The sidewall angle is measured from the
/// vertical by default, so the rib base width is w + 2 h tan(a);
/// `angle_from_horizontal` flips the convention.
struct WaveguideGeometry {
    double film_thickness_nm = 607.0;    // t
    double etch_depth_nm = 300.0;        // h
    double top_width_um = 1.0;           // w
    double sidewall_angle_deg = 30.0;    // a
    double cladding_thickness_nm = 1000.0;  // c
    bool angle_from_horizontal = false;

    void validate() const {
        if (!(etch_depth_nm > 0.0) || etch_depth_nm > film_thickness_nm)
            throw DomainError("geometry: need 0 < etch depth <= film thickness");
        if (!(top_width_um > 0.0)) throw DomainError("geometry: top width must be > 0");
        if (sidewall_angle_deg < 0.0 || sidewall_angle_deg >= 90.0)
            throw DomainError("geometry: sidewall angle must be in [0, 90) deg");
        if (cladding_thickness_nm < 0.0)
            throw DomainError("geometry: cladding thickness must be >= 0");
    }

    double angle_from_vertical_deg() const {
        return angle_from_horizontal ? 90.0 - sidewall_angle_deg : sidewall_angle_deg;
    }
    double slab_thickness_um() const { return (film_thickness_nm - etch_depth_nm) * 1e-3; }
    double base_width_um() const {
        const double tan_a = std::tan(angle_from_vertical_deg() * std::numbers::pi / 180.0);
        return top_width_um + 2.0 * etch_depth_nm * 1e-3 * tan_a;
    }

    bool operator==(const WaveguideGeometry&) const = default;
};

struct GridSpec {
    double pitch_nm = 25.0;
    double window_halfwidth_um = 3.0;  // lateral extent from the rib axis
    double substrate_depth_um = 2.0;   // silica below the film bottom
    double air_above_um = 1.5;         // air above the cladding top
    int supersample = 4;               // boundary-cell area averaging resolution
};

/// Discretized refractive-index map of the cross-section at one (lambda, T).
/// Cell-centered, row-major (j * nx + i), x symmetric about the rib axis.
struct IndexMap {
    int nx = 0, ny = 0;
    double dx_um = 0.0, dy_um = 0.0;
    double x0_um = 0.0;  // left edge; cell centers at x0 + (i + 0.5) dx
    double y0_um = 0.0;  // bottom edge; y = 0 is the film bottom
    double lambda_um = 0.0;
    double temperature_c = 0.0;
    double n_core = 0.0, n_silica = 0.0, n_air = 1.0;
    double slab_thickness_um = 0.0;  // residual LN under the etch, for cutoff checks
    std::vector<double> values;

    double at(int j, int i) const { return values[static_cast<std::size_t>(j) * nx + i]; }
    double x_center(int i) const { return x0_um + (i + 0.5) * dx_um; }
    double y_center(int j) const { return y0_um + (j + 0.5) * dy_um; }
    double max_index() const { return *std::max_element(values.begin(), values.end()); }

    void write_csv(std::ostream& os) const {
        os << "# index map, nx=" << nx << " ny=" << ny << " dx_um=" << dx_um
           << " dy_um=" << dy_um << " x0_um=" << x0_um << " y0_um=" << y0_um << "\n";
        os.precision(9);
        for (int j = 0; j < ny; ++j) {
            for (int i = 0; i < nx; ++i) os << (i ? "," : "") << at(j, i);
            os << "\n";
        }
    }
    void write_csv(const std::string& path) const {
        std::ofstream f(path);
        if (!f) throw InputDataError("cannot write index map: " + path);
        write_csv(f);
    }
};

namespace detail {

// Distance from a point (outside the rib) to the rib trapezoid outline.
inline double distance_to_trapezoid(double px_abs, double py, double wh_top,
                                    double wh_base, double y_base, double y_top) {
    const double vx[4] = {wh_top, -wh_top, -wh_base, wh_base};
    const double vy[4] = {y_top, y_top, y_base, y_base};
    double best = 1e300;
    for (int k = 0; k < 4; ++k) {
        const double x1 = vx[k], y1 = vy[k];
        const double x2 = vx[(k + 1) % 4], y2 = vy[(k + 1) % 4];
        const double ex = x2 - x1, ey = y2 - y1;
        double t = ((px_abs - x1) * ex + (py - y1) * ey) / (ex * ex + ey * ey);
        t = std::clamp(t, 0.0, 1.0);
        const double qx = x1 + t * ex, qy = y1 + t * ey;
        best = std::min(best, std::hypot(px_abs - qx, py - qy));
    }
    return best;
}

}  // namespace detail

/// Rasterizes the rib cross-section onto a cell-centered grid: trapezoidal rib
/// on a residual slab, silica substrate, conformal silica cladding of
/// thickness c over the LN surface (Euclidean offset), air above. Boundary
/// cells hold the supersampled area-weighted index. The map is mirrored about
/// the rib axis so symmetry is exact by construction.
inline IndexMap rasterize(const WaveguideGeometry& g, const materials::MaterialSet& mats,
                          double lambda_um, double temperature_c, const GridSpec& grid) {
    g.validate();
    if (!(grid.pitch_nm > 0.0)) throw DomainError("grid pitch must be positive");
    if (grid.supersample < 1) throw DomainError("supersample must be >= 1");

    const double t = g.film_thickness_nm * 1e-3;
    const double h = g.etch_depth_nm * 1e-3;
    const double c = g.cladding_thickness_nm * 1e-3;
    const double wh_top = 0.5 * g.top_width_um;
    const double tan_a = std::tan(g.angle_from_vertical_deg() * std::numbers::pi / 180.0);
    const double y_base = t - h;
    const double wh_base = wh_top + h * tan_a;

    const double n_ln = mats.core.index(lambda_um, temperature_c);
    const double n_si = mats.silica.index(lambda_um, temperature_c);
    const double n_air = mats.air.index(lambda_um, temperature_c);

    IndexMap map;
    map.dx_um = map.dy_um = grid.pitch_nm * 1e-3;
    map.nx = std::max(2, static_cast<int>(std::lround(2.0 * grid.window_halfwidth_um / map.dx_um)));
    const double height = grid.substrate_depth_um + t + c + grid.air_above_um;
    map.ny = std::max(2, static_cast<int>(std::lround(height / map.dy_um)));
    map.x0_um = -0.5 * map.nx * map.dx_um;
    map.y0_um = -grid.substrate_depth_um;
    map.lambda_um = lambda_um;
    map.temperature_c = temperature_c;
    map.n_core = n_ln;
    map.n_silica = n_si;
    map.n_air = n_air;
    map.slab_thickness_um = y_base;
    map.values.assign(static_cast<std::size_t>(map.nx) * map.ny, 0.0);

    auto sample = [&](double px, double py) {
        if (py < 0.0) return n_si;
        if (py <= y_base) return n_ln;
        const double pa = std::abs(px);
        if (py <= t && pa <= wh_top + (t - py) * tan_a) return n_ln;
        const double d = std::min(py - y_base,
                                  detail::distance_to_trapezoid(pa, py, wh_top, wh_base, y_base, t));
        return d <= c ? n_si : n_air;
    };

    const int ss = grid.supersample;
    std::vector<double> off(ss);
    for (int k = 0; k < ss; ++k) off[k] = ((k + 0.5) / ss - 0.5);

    // Fill the right half (including a center column when nx is odd) and
    // mirror to the left.
    const int i_start = map.nx / 2;
    const int i_mid = (map.nx % 2) ? i_start : -1;
    for (int j = 0; j < map.ny; ++j) {
        const double yc = map.y_center(j);
        for (int i = (map.nx % 2) ? i_mid : i_start; i < map.nx; ++i) {
            const double xc = map.x_center(i);
            double acc = 0.0;
            for (int ky = 0; ky < ss; ++ky)
                for (int kx = 0; kx < ss; ++kx)
                    acc += sample(xc + off[kx] * map.dx_um, yc + off[ky] * map.dy_um);
            map.values[static_cast<std::size_t>(j) * map.nx + i] = acc / (ss * ss);
        }
        for (int i = 0; i < i_start; ++i)
            map.values[static_cast<std::size_t>(j) * map.nx + i] =
                map.values[static_cast<std::size_t>(j) * map.nx + (map.nx - 1 - i)];
    }
    return map;
}

}  // namespace pdcsim::waveguide

#pragma once

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <mutex>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "pdcsim/common.hpp"
#include "pdcsim/waveguide.hpp"

namespace pdcsim::modesolver {

using waveguide::GridSpec;
using waveguide::IndexMap;
using waveguide::WaveguideGeometry;

enum class Symmetry { None, Even, Odd };

/// One guided quasi-TE eigenmode. The field is the dominant transverse
/// electric component on the index-map grid, normalized so that
/// sum(field^2) dx dy = 1 and the peak cell is positive.
struct GuidedMode {
    double n_eff = 0.0;
    double lambda_um = 0.0;
    double temperature_c = 0.0;
    int nx = 0, ny = 0;
    std::vector<double> field;
    // Semivectorial solve: all retained energy is in the dominant component.
    double polarization_fraction = 1.0;
    double residual = 0.0;            // |A f - (n k0)^2 f| / |(n k0)^2 f|
    double boundary_fraction = 0.0;   // max |field| on the boundary frame / peak

    void write_csv(std::ostream& os) const {
        os.precision(9);
        for (int j = 0; j < ny; ++j) {
            for (int i = 0; i < nx; ++i)
                os << (i ? "," : "") << field[static_cast<std::size_t>(j) * nx + i];
            os << "\n";
        }
    }
};

struct SolverOptions {
    int n_modes = 1;
    Symmetry symmetry = Symmetry::None;
    double residual_tol = 1e-8;
    double shift_fraction = 0.999;        // shift = (shift_fraction * n_max * k0)^2
    double confinement_threshold = 1e-2;  // boundary-field rejection level
    int max_basis = 120;                  // Arnoldi cap
    bool keep_fields = true;
};

struct SolveDiagnostics {
    int basis_size = 0;
    double worst_residual = 0.0;
    double cutoff_index = 0.0;
    int rejected_below_cutoff = 0;
    int rejected_unconfined = 0;
};

// ---------------------------------------------------------------------------
// 1D slab reduction: TE field tangential to the layer interfaces, standard
// three-point stencil, Dirichlet ends. Used for the guiding cutoff and by the
// oracle tests.
// ---------------------------------------------------------------------------

/// Effective indices (descending) of a 1D layered profile sampled per cell.
inline std::vector<double> slab_modes_fd(const std::vector<double>& n_profile,
                                         double pitch_um, double lambda_um,
                                         int count = 1) {
    const int n = static_cast<int>(n_profile.size());
    if (n < 3) throw DomainError("slab profile needs at least 3 cells");
    const double k0 = 2.0 * std::numbers::pi / lambda_um;
    const double inv_h2 = 1.0 / (pitch_um * pitch_um);
    Eigen::VectorXd diag(n), sub(n - 1);
    for (int j = 0; j < n; ++j)
        diag[j] = k0 * k0 * n_profile[j] * n_profile[j] - 2.0 * inv_h2;
    sub.setConstant(inv_h2);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es;
    es.computeFromTridiagonal(diag, sub, Eigen::EigenvaluesOnly);
    std::vector<double> out;
    const auto& ev = es.eigenvalues();  // ascending
    for (int k = n - 1; k >= 0 && static_cast<int>(out.size()) < count; --k) {
        if (ev[k] <= 0.0) break;
        out.push_back(std::sqrt(ev[k]) / k0);
    }
    return out;
}

namespace detail {

// Aitken delta-squared extrapolation of the last three of a sequence; falls
// back to the final value when the update is not contractive.
inline double aitken(const std::vector<double>& seq) {
    const std::size_t n = seq.size();
    if (n < 3) return seq.back();
    const double x0 = seq[n - 3], x1 = seq[n - 2], x2 = seq[n - 1];
    const double d1 = x1 - x0, d2 = x2 - x1;
    const double denom = d2 - d1;
    if (std::abs(denom) < 1e-14 || std::abs(d2) >= std::abs(d1)) return x2;
    const double x = x2 - d2 * d2 / denom;
    if (std::abs(x - x2) > std::abs(d2)) return x2;
    return x;
}

}  // namespace detail

/// Fundamental TE index of the residual-slab stack (substrate | LN slab |
/// conformal silica | air), evaluated by the solver's own 1D reduction on a
/// fine grid with Aitken extrapolation. Returns the silica index when the
/// slab guides nothing. Modes below this value leak into the lateral slab.
inline double slab_background_neff(const IndexMap& map, const GridSpec& grid) {
    if (map.slab_thickness_um <= 0.0) return map.n_silica;
    auto level = [&](double pitch) {
        std::vector<double> prof;
        auto push = [&](double n, double thickness) {
            const int cells = std::max(1, static_cast<int>(std::lround(thickness / pitch)));
            prof.insert(prof.end(), cells, n);
        };
        push(map.n_silica, grid.substrate_depth_um);
        push(map.n_core, map.slab_thickness_um);
        // Conformal cladding thickness above the slab equals the full cladding.
        const double clad_um = (map.ny * map.dy_um + map.y0_um) - map.slab_thickness_um -
                               grid.air_above_um;
        push(map.n_silica, std::max(0.0, clad_um));
        push(map.n_air, grid.air_above_um);
        auto modes = slab_modes_fd(prof, pitch, map.lambda_um, 1);
        return modes.empty() ? map.n_silica : modes[0];
    };
    std::vector<double> seq = {level(0.008), level(0.004), level(0.002)};
    return std::max(map.n_silica, detail::aitken(seq));
}

namespace detail {

// Assembles the semivectorial quasi-TE operator on the (possibly halved)
// domain. Horizontal couplings carry the index-step correction for the
// x-normal interfaces (continuity of eps * Ex); vertical couplings are the
// standard stencil (Ex tangential). Dirichlet on the outer frame.
inline Eigen::SparseMatrix<double> assemble(const IndexMap& map, Symmetry sym,
                                            int i_begin) {
    const int nx = map.nx, ny = map.ny;
    const int width = nx - i_begin;
    const double dx2 = map.dx_um * map.dx_um, dy2 = map.dy_um * map.dy_um;
    const double k0 = 2.0 * std::numbers::pi / map.lambda_um;
    auto eps = [&](int j, int i) {
        const double n = map.at(j, i);
        return n * n;
    };
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(static_cast<std::size_t>(width) * ny * 5);
    auto row = [&](int j, int i) { return j * width + (i - i_begin); };
    for (int j = 0; j < ny; ++j) {
        for (int i = i_begin; i < nx; ++i) {
            const double eP = eps(j, i);
            double diag = k0 * k0 * eP;
            // west
            if (i > i_begin) {
                const double eW = eps(j, i - 1);
                trip.emplace_back(row(j, i), row(j, i - 1), 2.0 * eW / (eW + eP) / dx2);
                diag -= 2.0 * eP / (eW + eP) / dx2;
            } else if (i == i_begin && sym != Symmetry::None && i_begin > 0) {
                // mirror plane between cells i_begin-1 and i_begin
                diag -= 1.0 / dx2;                       // ghost eps equals eP
                diag += (sym == Symmetry::Even ? 1.0 : -1.0) / dx2;  // u_W = +-u_P
            } else {
                diag -= 1.0 / dx2;  // Dirichlet, ghost eps equals eP
            }
            // east
            if (i < nx - 1) {
                const double eE = eps(j, i + 1);
                trip.emplace_back(row(j, i), row(j, i + 1), 2.0 * eE / (eE + eP) / dx2);
                diag -= 2.0 * eP / (eE + eP) / dx2;
            } else {
                diag -= 1.0 / dx2;
            }
            // south / north
            if (j > 0) trip.emplace_back(row(j, i), row(j - 1, i), 1.0 / dy2);
            if (j < ny - 1) trip.emplace_back(row(j, i), row(j + 1, i), 1.0 / dy2);
            diag -= 2.0 / dy2;
            trip.emplace_back(row(j, i), row(j, i), diag);
        }
    }
    Eigen::SparseMatrix<double> A(width * ny, width * ny);
    A.setFromTriplets(trip.begin(), trip.end());
    A.makeCompressed();
    return A;
}

struct RitzPair {
    double eigenvalue;
    Eigen::VectorXd vec;
    double residual;
};

// Shift-invert Arnoldi with modified Gram-Schmidt and one re-orthogonalization
// pass. Deterministic start vector. Returns pairs sorted by eigenvalue
// (descending), i.e. largest effective index first.
inline std::vector<RitzPair> shift_invert_arnoldi(const Eigen::SparseMatrix<double>& A,
                                                  double sigma, int want, int max_basis,
                                                  double residual_tol) {
    const int n = static_cast<int>(A.rows());
    Eigen::SparseMatrix<double> M = A;
    for (int k = 0; k < n; ++k) M.coeffRef(k, k) -= sigma;
    Eigen::SparseLU<Eigen::SparseMatrix<double>> lu(M);
    if (lu.info() != Eigen::Success)
        throw SolverError("shift-invert factorization failed (singular shifted operator)");

    Eigen::VectorXd v0(n);
    for (int k = 0; k < n; ++k) v0[k] = 1.0 + 0.25 * std::sin(1.3 * k);
    v0.normalize();

    int m = std::min(max_basis, std::max(30, 6 * want + 10));
    m = std::min(m, n);
    std::vector<RitzPair> best;
    while (true) {
        Eigen::MatrixXd V(n, m + 1);
        Eigen::MatrixXd H = Eigen::MatrixXd::Zero(m + 1, m);
        V.col(0) = v0;
        int built = m;
        for (int j = 0; j < m; ++j) {
            Eigen::VectorXd w = lu.solve(V.col(j));
            for (int pass = 0; pass < 2; ++pass) {
                for (int i = 0; i <= j; ++i) {
                    const double hij = V.col(i).dot(w);
                    H(i, j) += hij;
                    w -= hij * V.col(i);
                }
            }
            const double beta = w.norm();
            H(j + 1, j) = beta;
            if (beta < 1e-13) {
                built = j + 1;
                break;
            }
            V.col(j + 1) = w / beta;
        }
        const int mm = built;
        Eigen::EigenSolver<Eigen::MatrixXd> es(H.topLeftCorner(mm, mm));
        std::vector<RitzPair> pairs;
        for (int k = 0; k < mm; ++k) {
            const std::complex<double> mu = es.eigenvalues()[k];
            if (std::abs(mu) < 1e-300) continue;
            if (std::abs(mu.imag()) > 1e-8 * std::abs(mu)) continue;  // complex pair: skip
            const double lambda = sigma + 1.0 / mu.real();
            Eigen::VectorXcd y = es.eigenvectors().col(k);
            Eigen::VectorXd x = (V.leftCols(mm) * y.real());
            const double xn = x.norm();
            if (xn < 1e-300) continue;
            x /= xn;
            const double denom = std::abs(lambda);
            const double res = (A * x - lambda * x).norm() / std::max(denom, 1e-30);
            pairs.push_back({lambda, std::move(x), res});
        }
        std::sort(pairs.begin(), pairs.end(),
                  [](const RitzPair& a, const RitzPair& b) { return a.eigenvalue > b.eigenvalue; });
        if (static_cast<int>(pairs.size()) > want) pairs.resize(want);
        bool ok = static_cast<int>(pairs.size()) == std::min(want, mm);
        for (const auto& p : pairs) ok = ok && p.residual < residual_tol;
        if (ok || m >= std::min(max_basis, n)) {
            if (!ok && !pairs.empty() && pairs.front().residual >= residual_tol) {
                std::ostringstream os;
                os << "mode solver did not converge: basis " << m << ", best residual "
                   << pairs.front().residual;
                throw SolverError(os.str());
            }
            best = std::move(pairs);
            break;
        }
        m = std::min(std::min(max_basis, n), 2 * m);
    }
    return best;
}

}  // namespace detail

/// Guided quasi-TE modes of an index map, descending n_eff. Modes below the
/// slab-background cutoff or without lateral confinement in the window are
/// dropped, so fewer than n_modes may come back (possibly none).
inline std::vector<GuidedMode> solve_modes(const IndexMap& map, const GridSpec& grid,
                                           const SolverOptions& opt = {},
                                           SolveDiagnostics* diag = nullptr) {
    if (opt.n_modes < 1) throw DomainError("n_modes must be >= 1");
    const double k0 = 2.0 * std::numbers::pi / map.lambda_um;
    const double n_max = map.max_index();
    const double cutoff = slab_background_neff(map, grid);
    if (diag) diag->cutoff_index = cutoff;

    Symmetry sym = opt.symmetry;
    if (sym != Symmetry::None && map.nx % 2 != 0) sym = Symmetry::None;
    const int i_begin = (sym == Symmetry::None) ? 0 : map.nx / 2;

    const auto A = detail::assemble(map, sym, i_begin);
    const double sigma = std::pow(opt.shift_fraction * n_max * k0, 2);
    // Request extra pairs so that cutoff/confinement rejections do not starve
    // the caller.
    const int want = opt.n_modes + 2;
    auto pairs = detail::shift_invert_arnoldi(A, sigma, want, opt.max_basis, opt.residual_tol);
    if (diag && !pairs.empty()) {
        diag->worst_residual = 0.0;
        for (const auto& p : pairs) diag->worst_residual = std::max(diag->worst_residual, p.residual);
    }

    std::vector<GuidedMode> out;
    const int width = map.nx - i_begin;
    for (const auto& p : pairs) {
        if (static_cast<int>(out.size()) >= opt.n_modes) break;
        if (p.eigenvalue <= 0.0) continue;
        const double n_eff = std::sqrt(p.eigenvalue) / k0;
        if (n_eff <= cutoff) {
            if (diag) ++diag->rejected_below_cutoff;
            continue;
        }
        GuidedMode mode;
        mode.n_eff = n_eff;
        mode.lambda_um = map.lambda_um;
        mode.temperature_c = map.temperature_c;
        mode.nx = map.nx;
        mode.ny = map.ny;
        mode.residual = p.residual;
        // Unfold to the full grid.
        std::vector<double> full(static_cast<std::size_t>(map.nx) * map.ny, 0.0);
        for (int j = 0; j < map.ny; ++j)
            for (int i = i_begin; i < map.nx; ++i) {
                const double v = p.vec[j * width + (i - i_begin)];
                full[static_cast<std::size_t>(j) * map.nx + i] = v;
                if (sym != Symmetry::None) {
                    const int im = map.nx - 1 - i;
                    full[static_cast<std::size_t>(j) * map.nx + im] =
                        (sym == Symmetry::Even) ? v : -v;
                }
            }
        // Peak-positive sign, unit L2 norm over the cell areas.
        double peak = 0.0;
        std::size_t peak_idx = 0;
        double sq = 0.0;
        for (std::size_t k = 0; k < full.size(); ++k) {
            sq += full[k] * full[k];
            if (std::abs(full[k]) > std::abs(peak)) {
                peak = full[k];
                peak_idx = k;
            }
        }
        const double norm = std::sqrt(sq * map.dx_um * map.dy_um);
        const double sign = (full[peak_idx] < 0.0) ? -1.0 : 1.0;
        for (auto& v : full) v = sign * v / norm;
        // Lateral confinement: the eigenvalue of a mode whose field still has
        // appreciable amplitude at the window frame is boundary-dominated.
        double bmax = 0.0, fmax = 0.0;
        for (std::size_t k = 0; k < full.size(); ++k) fmax = std::max(fmax, std::abs(full[k]));
        for (int i = 0; i < map.nx; ++i) {
            bmax = std::max(bmax, std::abs(full[i]));
            bmax = std::max(bmax, std::abs(full[static_cast<std::size_t>(map.ny - 1) * map.nx + i]));
        }
        for (int j = 0; j < map.ny; ++j) {
            bmax = std::max(bmax, std::abs(full[static_cast<std::size_t>(j) * map.nx]));
            bmax = std::max(bmax, std::abs(full[static_cast<std::size_t>(j) * map.nx + map.nx - 1]));
        }
        mode.boundary_fraction = bmax / std::max(fmax, 1e-300);
        if (mode.boundary_fraction >= opt.confinement_threshold) {
            if (diag) ++diag->rejected_unconfined;
            continue;
        }
        if (opt.keep_fields) mode.field = std::move(full);
        out.push_back(std::move(mode));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Effective-index front end with caching and grid refinement.
// ---------------------------------------------------------------------------

struct NeffResult {
    bool guided = false;
    double value = 0.0;                 // extrapolated
    std::vector<double> sequence;       // per-pitch values
    std::vector<double> pitches_nm;
};

/// Computes fundamental-mode effective indices for rib geometries, caching by
/// (geometry, lambda, T, pitch, symmetry). Thread-safe; identical keys resolve
/// last-writer-wins.
class NeffSolver {
  public:
    NeffSolver(materials::MaterialSet mats, GridSpec grid, SolverOptions opt = {})
        : mats_(std::move(mats)), grid_(grid), opt_(opt) {
        opt_.n_modes = 1;
        if (opt_.symmetry == Symmetry::None) opt_.symmetry = Symmetry::Even;
    }

    const materials::MaterialSet& mats() const { return mats_; }
    const GridSpec& grid() const { return grid_; }

    /// Fundamental n_eff at a fixed pitch; nullopt when below cutoff.
    std::optional<double> at_pitch(const WaveguideGeometry& g, double lambda_um,
                                   double temperature_c, double pitch_nm) const {
        const std::string key = cache_key(g, lambda_um, temperature_c, pitch_nm);
        {
            std::lock_guard<std::mutex> lock(mutex_);
            auto it = cache_.find(key);
            if (it != cache_.end())
                return it->second > 0.0 ? std::optional<double>(it->second) : std::nullopt;
        }
        GridSpec grid = grid_;
        grid.pitch_nm = pitch_nm;
        const auto map = waveguide::rasterize(g, mats_, lambda_um, temperature_c, grid);
        SolverOptions opt = opt_;
        opt.keep_fields = false;
        const auto modes = solve_modes(map, grid, opt);
        const double value = modes.empty() ? -1.0 : modes.front().n_eff;
        {
            std::lock_guard<std::mutex> lock(mutex_);
            cache_[key] = value;
        }
        return value > 0.0 ? std::optional<double>(value) : std::nullopt;
    }

    /// Grid-refined n_eff: pitch halving from base_pitch until the change is
    /// below `target`, then Aitken extrapolation. At least two refinements are
    /// performed so the extrapolation has three points.
    NeffResult converged(const WaveguideGeometry& g, double lambda_um, double temperature_c,
                         double target = 1e-3, double base_pitch_nm = 50.0,
                         int max_refinements = 3) const {
        if (target < 1e-5) throw DomainError("n_eff convergence target must be >= 1e-5");
        NeffResult res;
        double pitch = base_pitch_nm;
        for (int level = 0; level <= max_refinements; ++level, pitch /= 2.0) {
            const auto v = at_pitch(g, lambda_um, temperature_c, pitch);
            if (!v) {
                if (level == 0) continue;  // coarse grid may miss a marginal mode
                return res;                // guided=false
            }
            res.sequence.push_back(*v);
            res.pitches_nm.push_back(pitch);
            const std::size_t n = res.sequence.size();
            if (n >= 3 && std::abs(res.sequence[n - 1] - res.sequence[n - 2]) < target) {
                res.guided = true;
                res.value = detail::aitken(res.sequence);
                return res;
            }
        }
        if (res.sequence.empty()) return res;  // cutoff everywhere
        std::ostringstream os;
        os << "n_eff did not converge to " << target << " within " << max_refinements
           << " refinements; sequence:";
        for (double v : res.sequence) os << " " << v;
        throw SolverError(os.str());
    }

  private:
    static std::string cache_key(const WaveguideGeometry& g, double lambda_um,
                                 double temperature_c, double pitch_nm) {
        char buf[256];
        std::snprintf(buf, sizeof buf, "%.6f|%.6f|%.6f|%.6f|%.6f|%d|%.9f|%.6f|%.4f",
                      g.film_thickness_nm, g.etch_depth_nm, g.top_width_um,
                      g.sidewall_angle_deg, g.cladding_thickness_nm,
                      g.angle_from_horizontal ? 1 : 0, lambda_um, temperature_c, pitch_nm);
        return buf;
    }

    materials::MaterialSet mats_;
    GridSpec grid_;
    SolverOptions opt_;
    mutable std::mutex mutex_;
    mutable std::unordered_map<std::string, double> cache_;
};

}  // namespace pdcsim::modesolver

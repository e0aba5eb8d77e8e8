#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <map>
#include <mutex>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "pdcsim/common.hpp"
#include "pdcsim/modesolver.hpp"

namespace pdcsim::qpm {

using modesolver::NeffSolver;
using waveguide::WaveguideGeometry;

inline double sinc(double x) { return x == 0.0 ? 1.0 : std::sin(x) / x; }

/// Idler wavelength conjugate to (pump, signal) under energy conservation.
inline double conjugate_nm(double pump_nm, double partner_nm) {
    const double inv = 1.0 / pump_nm - 1.0 / partner_nm;
    if (inv <= 0.0) throw DomainError("energy conservation gives a non-positive frequency");
    return 1.0 / inv;
}

/// One PDC process configuration: wavelength triple, temperature, grating.
struct QpmProcess {
    double pump_nm = 0.0, signal_nm = 0.0, idler_nm = 0.0;
    double temperature_c = 25.0;
    double poling_period_um = std::numeric_limits<double>::infinity();
    double poled_length_mm = 3.0;

    static QpmProcess from_pump_signal(double pump_nm, double signal_nm, double temperature_c,
                                       double poling_period_um, double poled_length_mm) {
        QpmProcess p;
        p.pump_nm = pump_nm;
        p.signal_nm = signal_nm;
        p.idler_nm = conjugate_nm(pump_nm, signal_nm);
        p.temperature_c = temperature_c;
        p.poling_period_um = poling_period_um;
        p.poled_length_mm = poled_length_mm;
        p.validate();
        return p;
    }

    void validate() const {
        const double defect = std::abs(1.0 / pump_nm - 1.0 / signal_nm - 1.0 / idler_nm);
        if (!(defect < 1e-9))
            throw DomainError("process violates energy conservation by " + std::to_string(defect) +
                              " nm^-1");
        if (!(pump_nm < signal_nm && signal_nm <= idler_nm))
            throw DomainError("process needs pump < signal <= idler wavelengths");
    }
};

// ---------------------------------------------------------------------------
// Modal dispersion engine: Chebyshev interpolants of n_eff over wavelength
// bands, one per (band, temperature), backed by the cached fixed-pitch solver.
// ---------------------------------------------------------------------------

struct Band {
    double min_nm = 0.0, max_nm = 0.0;
    bool contains(double nm) const { return nm >= min_nm - 1e-9 && nm <= max_nm + 1e-9; }
};

class ModalDispersion {
  public:
    ModalDispersion(const NeffSolver& solver, WaveguideGeometry geometry, double pitch_nm = 25.0,
                    int cheb_nodes = 6, unsigned workers = 1)
        : solver_(solver), geometry_(geometry), pitch_nm_(pitch_nm), nodes_(cheb_nodes),
          workers_(workers) {
        geometry_.validate();
        if (nodes_ < 3) throw DomainError("dispersion interpolation needs >= 3 nodes");
    }

    const WaveguideGeometry& geometry() const { return geometry_; }
    double pitch_nm() const { return pitch_nm_; }

    void register_band(Band band) {
        if (!(band.min_nm < band.max_nm)) throw DomainError("band needs min < max");
        std::lock_guard<std::mutex> lock(mutex_);
        bands_.push_back(band);
    }

    /// n_eff at one wavelength, via the band interpolant covering it (built on
    /// first use); falls back to a direct cached solve outside all bands.
    double neff(double lambda_nm, double temperature_c) const {
        const Band* band = nullptr;
        {
            std::lock_guard<std::mutex> lock(mutex_);
            for (const auto& b : bands_)
                if (b.contains(lambda_nm)) {
                    band = &b;
                    break;
                }
        }
        if (band == nullptr) return direct(lambda_nm, temperature_c);
        return interp(*band, temperature_c).eval(lambda_nm);
    }

    double beta_per_m(double lambda_nm, double temperature_c) const {
        return 2.0 * std::numbers::pi * neff(lambda_nm, temperature_c) / (lambda_nm * 1e-9);
    }

    /// d(n_eff)/d lambda in nm^-1 (central difference on the interpolant).
    double dneff_dlambda(double lambda_nm, double temperature_c, double step_nm = 0.05) const {
        return (neff(lambda_nm + step_nm, temperature_c) -
                neff(lambda_nm - step_nm, temperature_c)) /
               (2.0 * step_nm);
    }

    double direct(double lambda_nm, double temperature_c) const {
        auto v = solver_.at_pitch(geometry_, lambda_nm * 1e-3, temperature_c, pitch_nm_);
        if (!v) {
            std::ostringstream os;
            os << "not guided at " << lambda_nm << " nm, T=" << temperature_c << " C";
            throw NotGuidedError(os.str());
        }
        return *v;
    }

  private:
    struct Interp {
        double mid = 0.0, half = 1.0;
        std::vector<double> coef;
        double eval(double nm) const {
            // Clenshaw recurrence on the Chebyshev series.
            const double x = (nm - mid) / half;
            double b1 = 0.0, b2 = 0.0;
            for (std::size_t k = coef.size(); k-- > 1;) {
                const double b0 = 2.0 * x * b1 - b2 + coef[k];
                b2 = b1;
                b1 = b0;
            }
            return x * b1 - b2 + coef[0];
        }
    };

    const Interp& interp(const Band& band, double temperature_c) const {
        char kb[64];
        std::snprintf(kb, sizeof kb, "%.4f|%.4f|%.6f", band.min_nm, band.max_nm, temperature_c);
        const std::string key(kb);
        {
            std::lock_guard<std::mutex> lock(mutex_);
            auto it = interps_.find(key);
            if (it != interps_.end()) return it->second;
        }
        Interp built = build(band, temperature_c);
        std::lock_guard<std::mutex> lock(mutex_);
        return interps_.emplace(key, std::move(built)).first->second;
    }

    Interp build(const Band& band, double temperature_c) const {
        const int n = nodes_;
        Interp ip;
        ip.mid = 0.5 * (band.min_nm + band.max_nm);
        ip.half = 0.5 * (band.max_nm - band.min_nm);
        std::vector<double> xs(n), fs(n);
        for (int k = 0; k < n; ++k)
            xs[k] = std::cos(std::numbers::pi * (k + 0.5) / n);
        std::vector<std::string> failures(n);
        parallel_for(
            n,
            [&](std::size_t k) {
                const double nm = ip.mid + ip.half * xs[k];
                auto v = solver_.at_pitch(geometry_, nm * 1e-3, temperature_c, pitch_nm_);
                if (v) fs[k] = *v;
                else failures[k] = std::to_string(nm);
            },
            workers_);
        for (int k = 0; k < n; ++k)
            if (!failures[k].empty())
                throw NotGuidedError("not guided at " + failures[k] + " nm, T=" +
                                     std::to_string(temperature_c) + " C");
        ip.coef.assign(n, 0.0);
        for (int j = 0; j < n; ++j) {
            double s = 0.0;
            for (int k = 0; k < n; ++k)
                s += fs[k] * std::cos(j * std::numbers::pi * (k + 0.5) / n);
            ip.coef[j] = 2.0 * s / n;
        }
        ip.coef[0] *= 0.5;
        return ip;
    }

    const NeffSolver& solver_;
    WaveguideGeometry geometry_;
    double pitch_nm_;
    int nodes_;
    unsigned workers_;
    mutable std::mutex mutex_;
    mutable std::vector<Band> bands_;
    mutable std::map<std::string, Interp> interps_;
};

// ---------------------------------------------------------------------------
// Phase matching
// ---------------------------------------------------------------------------

/// Delta beta = beta_p - beta_s - beta_i - 2 pi / Lambda, in 1/m. An infinite
/// poling period drops the grating term.
inline double delta_beta(const ModalDispersion& disp, const QpmProcess& p) {
    p.validate();
    double beta_p, beta_s, beta_i;
    const char* field = "pump";
    try {
        beta_p = disp.beta_per_m(p.pump_nm, p.temperature_c);
        field = "signal";
        beta_s = disp.beta_per_m(p.signal_nm, p.temperature_c);
        field = "idler";
        beta_i = disp.beta_per_m(p.idler_nm, p.temperature_c);
    } catch (const NotGuidedError& e) {
        throw NotGuidedError(std::string(field) + " field " + e.what());
    }
    double grating = 0.0;
    if (std::isfinite(p.poling_period_um))
        grating = 2.0 * std::numbers::pi / (p.poling_period_um * 1e-6);
    return beta_p - beta_s - beta_i - grating;
}

/// First-order QPM poling period (um) for a pump/signal pair at temperature T.
inline double poling_period_um(const ModalDispersion& disp, double pump_nm, double signal_nm,
                               double temperature_c) {
    QpmProcess p = QpmProcess::from_pump_signal(pump_nm, signal_nm, temperature_c,
                                                std::numeric_limits<double>::infinity(), 0.0);
    const double mismatch = delta_beta(disp, p);  // 1/m, grating term absent
    if (!(mismatch > 0.0) || !std::isfinite(mismatch))
        throw DomainError("phase matching impossible: beta_p - beta_s - beta_i = " +
                          std::to_string(mismatch) + " 1/m");
    return 2.0 * std::numbers::pi / mismatch * 1e6;
}

// ---------------------------------------------------------------------------
// Fabrication tolerance analysis
// ---------------------------------------------------------------------------

enum class GeomParam { Width, EtchDepth, Angle, Thickness };

inline const char* to_string(GeomParam p) {
    switch (p) {
        case GeomParam::Width: return "width";
        case GeomParam::EtchDepth: return "etch_depth";
        case GeomParam::Angle: return "angle";
        case GeomParam::Thickness: return "thickness";
    }
    return "?";
}

/// Linear sensitivities of the phase mismatch, SI units (1/m per um, angle in
/// 1/m per degree).
struct SlopeSet {
    double dbeta_dw = 0.0;
    double dbeta_dh = 0.0;
    double dbeta_da = 0.0;
    double dbeta_dt = 0.0;
};

/// Signed fabrication deviations (um; angle in degrees).
struct ToleranceSpec {
    double dw_um = 0.1;
    double dh_um = 0.1;
    double da_deg = 5.0;
    double dt_um = 0.02;
};

struct SlopeFit {
    double slope = 0.0;      // 1/m per um (or per degree)
    double intercept = 0.0;  // 1/m at parameter = 0
    double residual_rms = 0.0;
    std::vector<std::array<double, 2>> samples;  // (parameter value, delta beta)
};

/// Delta beta at fixed reference grating for one varied geometry parameter
/// (others nominal), with an unconstrained affine least-squares fit.
/// Width/etch/thickness samples in um, angle in degrees.
inline SlopeFit tolerance_slope(const NeffSolver& solver, const WaveguideGeometry& base,
                                GeomParam param, const std::vector<double>& samples,
                                double poling_ref_um, double pump_nm, double signal_nm,
                                double temperature_c, double pitch_nm = 25.0,
                                unsigned workers = 1) {
    if (samples.size() < 3)
        throw DomainError("tolerance_slope needs >= 3 samples across the tolerance region");
    const double idler_nm = conjugate_nm(pump_nm, signal_nm);
    const double grating = 2.0 * std::numbers::pi / (poling_ref_um * 1e-6);

    SlopeFit fit;
    fit.samples.resize(samples.size());
    std::vector<std::string> failures(samples.size());
    parallel_for(
        samples.size(),
        [&](std::size_t k) {
            WaveguideGeometry g = base;
            switch (param) {
                case GeomParam::Width: g.top_width_um = samples[k]; break;
                case GeomParam::EtchDepth: g.etch_depth_nm = samples[k] * 1e3; break;
                case GeomParam::Angle: g.sidewall_angle_deg = samples[k]; break;
                case GeomParam::Thickness: g.film_thickness_nm = samples[k] * 1e3; break;
            }
            double beta_sum = 0.0;
            for (double nm : {pump_nm, signal_nm, idler_nm}) {
                auto v = solver.at_pitch(g, nm * 1e-3, temperature_c, pitch_nm);
                if (!v) {
                    failures[k] = std::to_string(samples[k]);
                    return;
                }
                const double beta = 2.0 * std::numbers::pi * (*v) / (nm * 1e-9);
                beta_sum += (nm == pump_nm) ? beta : -beta;
            }
            fit.samples[k] = {samples[k], beta_sum - grating};
        },
        workers);
    std::string failed;
    for (const auto& f : failures)
        if (!f.empty()) failed += (failed.empty() ? "" : ", ") + f;
    if (!failed.empty())
        throw NotGuidedError(std::string("tolerance_slope: cutoff at ") + to_string(param) +
                             " sample(s) " + failed);

    // Affine least squares.
    const double n = static_cast<double>(samples.size());
    double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
    for (const auto& [x, y] : fit.samples) {
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    const double denom = n * sxx - sx * sx;
    if (std::abs(denom) < 1e-30) throw DomainError("tolerance_slope samples are degenerate");
    fit.slope = (n * sxy - sx * sy) / denom;
    fit.intercept = (sy - fit.slope * sx) / n;
    double ss = 0.0;
    for (const auto& [x, y] : fit.samples) {
        const double r = y - (fit.intercept + fit.slope * x);
        ss += r * r;
    }
    fit.residual_rms = std::sqrt(ss / n);
    return fit;
}

/// Linear tolerance budget: sum of slope * deviation in the fixed order
/// w, h, a, t.
inline double phase_mismatch_sum(const SlopeSet& s, const ToleranceSpec& d) {
    return s.dbeta_dw * d.dw_um + s.dbeta_dh * d.dh_um + s.dbeta_da * d.da_deg +
           s.dbeta_dt * d.dt_um;
}

/// Poling-period range from the nominal grating mismatch and the budget:
/// Lambda_{min,max} = 2 pi / (dbeta_0 +- |dbeta_sum|), in um.
inline std::pair<double, double> poling_period_range_literal(double dbeta0_per_m,
                                                             double dbeta_sum_per_m) {
    const double a = std::abs(dbeta_sum_per_m);
    if (!(dbeta0_per_m > a))
        throw DomainError("poling period range undefined: |dbeta_sum| >= dbeta_0");
    return {2.0 * std::numbers::pi / (dbeta0_per_m + a) * 1e6,
            2.0 * std::numbers::pi / (dbeta0_per_m - a) * 1e6};
}

/// Extremal periods over all 16 sign corners of the tolerance box.
inline std::pair<double, double> poling_period_range_corners(double dbeta0_per_m,
                                                             const SlopeSet& s,
                                                             const ToleranceSpec& d) {
    double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
    for (int mask = 0; mask < 16; ++mask) {
        ToleranceSpec c = d;
        c.dw_um = (mask & 1) ? -d.dw_um : d.dw_um;
        c.dh_um = (mask & 2) ? -d.dh_um : d.dh_um;
        c.da_deg = (mask & 4) ? -d.da_deg : d.da_deg;
        c.dt_um = (mask & 8) ? -d.dt_um : d.dt_um;
        const double denom = dbeta0_per_m + phase_mismatch_sum(s, c);
        if (!(denom > 0.0))
            throw DomainError("poling period range undefined at a tolerance corner");
        const double period = 2.0 * std::numbers::pi / denom * 1e6;
        lo = std::min(lo, period);
        hi = std::max(hi, period);
    }
    return {lo, hi};
}

// ---------------------------------------------------------------------------
// Spectra
// ---------------------------------------------------------------------------

enum class SpectrumAxis { Signal, Idler, Sfg };

inline const char* to_string(SpectrumAxis a) {
    switch (a) {
        case SpectrumAxis::Signal: return "signal";
        case SpectrumAxis::Idler: return "idler";
        case SpectrumAxis::Sfg: return "sfg";
    }
    return "?";
}

struct Spectrum {
    SpectrumAxis axis = SpectrumAxis::Signal;
    std::vector<double> wavelength_nm;
    std::vector<double> intensity;

    void validate() const {
        if (wavelength_nm.size() != intensity.size())
            throw DomainError("spectrum axis/intensity length mismatch");
        for (std::size_t k = 1; k < wavelength_nm.size(); ++k)
            if (!(wavelength_nm[k] > wavelength_nm[k - 1]))
                throw DomainError("spectrum wavelengths must be strictly increasing");
        for (double v : intensity)
            if (!std::isfinite(v) || v < 0.0) throw DomainError("spectrum intensity invalid");
    }
};

namespace detail {

// Bracketed Brent root find, tolerance on x.
template <typename F>
double brent(F&& f, double a, double b, double fa, double fb, double xtol, int max_iter = 200) {
    if (fa == 0.0) return a;
    if (fb == 0.0) return b;
    if (fa * fb > 0.0) throw SolverError("brent: root not bracketed");
    double c = a, fc = fa, d = b - a, e = d;
    for (int it = 0; it < max_iter; ++it) {
        if (std::abs(fc) < std::abs(fb)) {
            a = b; b = c; c = a;
            fa = fb; fb = fc; fc = fa;
        }
        const double tol1 = 2.0 * std::numeric_limits<double>::epsilon() * std::abs(b) + 0.5 * xtol;
        const double xm = 0.5 * (c - b);
        if (std::abs(xm) <= tol1 || fb == 0.0) return b;
        if (std::abs(e) >= tol1 && std::abs(fa) > std::abs(fb)) {
            double p, q, r;
            const double s = fb / fa;
            if (a == c) {
                p = 2.0 * xm * s;
                q = 1.0 - s;
            } else {
                q = fa / fc;
                r = fb / fc;
                p = s * (2.0 * xm * q * (q - r) - (b - a) * (r - 1.0));
                q = (q - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if (p > 0.0) q = -q;
            p = std::abs(p);
            if (2.0 * p < std::min(3.0 * xm * q - std::abs(tol1 * q), std::abs(e * q))) {
                e = d;
                d = p / q;
            } else {
                d = xm;
                e = d;
            }
        } else {
            d = xm;
            e = d;
        }
        a = b;
        fa = fb;
        b += (std::abs(d) > tol1) ? d : (xm > 0 ? tol1 : -tol1);
        fb = f(b);
        if ((fb > 0.0) == (fc > 0.0)) {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
    }
    throw SolverError("brent: no convergence");
}

// Coarse scan + Brent; returns all roots found on the grid.
template <typename F>
std::vector<double> scan_roots(F&& f, double lo, double hi, int scan_points, double xtol) {
    std::vector<double> roots;
    double xprev = lo, fprev = f(lo);
    for (int k = 1; k < scan_points; ++k) {
        const double x = lo + (hi - lo) * k / (scan_points - 1);
        const double fx = f(x);
        if (fprev == 0.0) roots.push_back(xprev);
        else if (fprev * fx < 0.0) roots.push_back(brent(f, xprev, x, fprev, fx, xtol));
        xprev = x;
        fprev = fx;
    }
    if (fprev == 0.0) roots.push_back(xprev);
    return roots;
}

}  // namespace detail

/// sinc^2 phase-matching spectrum on a signal or idler wavelength grid, the
/// conjugate fixed by energy conservation at each point; peak-normalized.
inline Spectrum pdc_spectrum(const ModalDispersion& disp, double poling_um, double length_mm,
                             double pump_nm, double temperature_c, SpectrumAxis axis,
                             double min_nm, double max_nm, double step_nm) {
    if (axis == SpectrumAxis::Sfg) throw DomainError("pdc_spectrum axis must be signal or idler");
    if (!(step_nm > 0.0 && min_nm < max_nm)) throw DomainError("bad spectrum grid");
    const double length_m = length_mm * 1e-3;
    const double grating = 2.0 * std::numbers::pi / (poling_um * 1e-6);

    Spectrum sp;
    sp.axis = axis;
    for (double nm = min_nm; nm <= max_nm + 0.5 * step_nm; nm += step_nm)
        sp.wavelength_nm.push_back(nm);
    sp.intensity.resize(sp.wavelength_nm.size());

    double peak = 0.0;
    for (std::size_t k = 0; k < sp.wavelength_nm.size(); ++k) {
        const double nm = sp.wavelength_nm[k];
        const double conj = conjugate_nm(pump_nm, nm);
        const double sig = (axis == SpectrumAxis::Signal) ? nm : conj;
        const double idl = (axis == SpectrumAxis::Signal) ? conj : nm;
        const double db = disp.beta_per_m(pump_nm, temperature_c) -
                          disp.beta_per_m(sig, temperature_c) -
                          disp.beta_per_m(idl, temperature_c) - grating;
        const double s = sinc(0.5 * db * length_m);
        sp.intensity[k] = s * s;
        peak = std::max(peak, sp.intensity[k]);
    }
    if (peak > 0.0)
        for (auto& v : sp.intensity) v /= peak;
    sp.validate();
    return sp;
}

/// Phase-matched signal wavelength at one temperature: root of delta beta on
/// the signal band, bracketed by a coarse pre-scan, Brent to 1e-3 nm.
inline double phase_matched_signal_nm(const ModalDispersion& disp, double poling_um,
                                      double pump_nm, double temperature_c, Band signal_band,
                                      double xtol_nm = 1e-3) {
    const double grating = 2.0 * std::numbers::pi / (poling_um * 1e-6);
    auto f = [&](double s_nm) {
        return disp.beta_per_m(pump_nm, temperature_c) - disp.beta_per_m(s_nm, temperature_c) -
               disp.beta_per_m(conjugate_nm(pump_nm, s_nm), temperature_c) - grating;
    };
    auto roots = detail::scan_roots(f, signal_band.min_nm, signal_band.max_nm, 41, xtol_nm);
    if (roots.empty()) {
        std::ostringstream os;
        os << "no phase-matched signal in [" << signal_band.min_nm << ", " << signal_band.max_nm
           << "] nm at T=" << temperature_c << " C";
        throw SolverError(os.str());
    }
    return roots.front();
}

struct TuningResult {
    std::vector<double> temperatures_c;
    std::vector<double> signal_nm;
    std::vector<double> idler_nm;
    double slope_signal_nm_per_k = 0.0;
    double slope_idler_nm_per_k = 0.0;
    double freq_sum_slope = 0.0;  // d(1/ls + 1/li)/dT, 1/nm per K
};

/// Phase-matched (signal, idler) peaks across temperatures plus linear-fit
/// tuning slopes.
inline TuningResult temperature_tuning(const ModalDispersion& disp, double poling_um,
                                       double pump_nm, const std::vector<double>& temps_c,
                                       Band signal_band) {
    if (temps_c.size() < 3) throw DomainError("temperature_tuning needs >= 3 temperatures");
    TuningResult r;
    r.temperatures_c = temps_c;
    r.signal_nm.resize(temps_c.size());
    r.idler_nm.resize(temps_c.size());
    for (std::size_t k = 0; k < temps_c.size(); ++k) {
        try {
            r.signal_nm[k] =
                phase_matched_signal_nm(disp, poling_um, pump_nm, temps_c[k], signal_band);
        } catch (const SolverError& e) {
            throw SolverError("temperature_tuning: root lost at T=" +
                              std::to_string(temps_c[k]) + " C: " + e.what());
        }
        r.idler_nm[k] = conjugate_nm(pump_nm, r.signal_nm[k]);
    }
    auto slope = [&](const std::vector<double>& y) {
        const double n = static_cast<double>(temps_c.size());
        double sx = 0, sy = 0, sxx = 0, sxy = 0;
        for (std::size_t k = 0; k < temps_c.size(); ++k) {
            sx += temps_c[k];
            sy += y[k];
            sxx += temps_c[k] * temps_c[k];
            sxy += temps_c[k] * y[k];
        }
        return (n * sxy - sx * sy) / (n * sxx - sx * sx);
    };
    r.slope_signal_nm_per_k = slope(r.signal_nm);
    r.slope_idler_nm_per_k = slope(r.idler_nm);
    std::vector<double> inv_sum(temps_c.size());
    for (std::size_t k = 0; k < temps_c.size(); ++k)
        inv_sum[k] = 1.0 / r.signal_nm[k] + 1.0 / r.idler_nm[k];
    r.freq_sum_slope = slope(inv_sum);
    return r;
}

// ---------------------------------------------------------------------------
// Sum-frequency phase-matching map
// ---------------------------------------------------------------------------

struct SfgMap {
    std::vector<double> vis_nm;      // rows
    std::vector<double> telecom_nm;  // columns
    std::vector<double> intensity;   // row-major [vis][telecom]
    std::vector<std::array<double, 2>> locus;  // (telecom_nm, vis_nm) with delta beta = 0
    double ridge_angle_deg = 0.0;             // TLS in frequency-frequency coordinates
    double ridge_slope_dlvis_dltel = 0.0;     // wavelength-space diagnostic

    double at(std::size_t iv, std::size_t it) const {
        return intensity[iv * telecom_nm.size() + it];
    }
};

/// SFG intensity map sinc^2(delta beta L / 2) over (vis, telecom) grids with
/// the generated field at the sum frequency. The ridge angle is the
/// total-least-squares orientation of the delta beta = 0 locus with both axes
/// converted to optical frequency.
inline SfgMap sfg_map(const ModalDispersion& disp, double poling_um, double length_mm,
                      double temperature_c, double vis_min_nm, double vis_max_nm,
                      double vis_step_nm, double tel_min_nm, double tel_max_nm,
                      double tel_step_nm) {
    if (!(vis_step_nm > 0.0 && tel_step_nm > 0.0)) throw DomainError("bad sfg grid steps");
    const double grating = 2.0 * std::numbers::pi / (poling_um * 1e-6);
    const double length_m = length_mm * 1e-3;

    SfgMap m;
    for (double v = vis_min_nm; v <= vis_max_nm + 0.5 * vis_step_nm; v += vis_step_nm)
        m.vis_nm.push_back(v);
    for (double t = tel_min_nm; t <= tel_max_nm + 0.5 * tel_step_nm; t += tel_step_nm)
        m.telecom_nm.push_back(t);
    m.intensity.resize(m.vis_nm.size() * m.telecom_nm.size());

    auto dbeta_sfg = [&](double vis, double tel) {
        const double sum_nm = 1.0 / (1.0 / vis + 1.0 / tel);
        return disp.beta_per_m(sum_nm, temperature_c) - disp.beta_per_m(vis, temperature_c) -
               disp.beta_per_m(tel, temperature_c) - grating;
    };
    for (std::size_t iv = 0; iv < m.vis_nm.size(); ++iv)
        for (std::size_t it = 0; it < m.telecom_nm.size(); ++it) {
            const double s = sinc(0.5 * dbeta_sfg(m.vis_nm[iv], m.telecom_nm[it]) * length_m);
            m.intensity[iv * m.telecom_nm.size() + it] = s * s;
        }

    for (double vis : m.vis_nm) {
        auto f = [&](double tel) { return dbeta_sfg(vis, tel); };
        auto roots = detail::scan_roots(f, tel_min_nm, tel_max_nm,
                                        std::max<int>(41, static_cast<int>(m.telecom_nm.size() / 8)),
                                        1e-3);
        for (double rt : roots) m.locus.push_back({rt, vis});
    }
    if (m.locus.empty()) throw SolverError("no phasematching in window");

    // Total least squares through the locus, symmetric in the two axes.
    auto tls_angle = [](const std::vector<std::array<double, 2>>& pts, bool to_frequency) {
        double mx = 0, my = 0;
        std::vector<std::array<double, 2>> q(pts.size());
        for (std::size_t k = 0; k < pts.size(); ++k) {
            const double x = to_frequency ? kSpeedOfLight / (pts[k][0] * 1e-9) : pts[k][0];
            const double y = to_frequency ? kSpeedOfLight / (pts[k][1] * 1e-9) : pts[k][1];
            q[k] = {x, y};
            mx += x;
            my += y;
        }
        mx /= q.size();
        my /= q.size();
        double suv = 0, suu_vv = 0;
        for (const auto& [x, y] : q) {
            const double u = x - mx, v = y - my;
            suv += u * v;
            suu_vv += u * u - v * v;
        }
        return 0.5 * std::atan2(2.0 * suv, suu_vv);
    };
    m.ridge_angle_deg = tls_angle(m.locus, true) * 180.0 / std::numbers::pi;
    m.ridge_slope_dlvis_dltel = std::tan(tls_angle(m.locus, false));
    return m;
}

}  // namespace pdcsim::qpm

#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <sstream>
#include <vector>

#include "pdcsim/common.hpp"

namespace pdcsim::fitting {

inline double sinc(double x) { return x == 0.0 ? 1.0 : std::sin(x) / x; }

struct SincFitOptions {
    int max_iterations = 500;
    double param_tol = 1e-8;  // relative parameter change on an accepted step
};

struct SincFitResult {
    double center_nm = 0.0, center_err_nm = 0.0;
    double l_eff_mm = std::numeric_limits<double>::quiet_NaN();
    double l_eff_err_mm = std::numeric_limits<double>::quiet_NaN();
    double amplitude = 0.0, amplitude_err = 0.0;
    double offset = 0.0, offset_err = 0.0;
    double kappa_per_nm = 0.0, kappa_err_per_nm = 0.0;  // sinc argument slope
    double residual_rms = 0.0;
    int iterations = 0;
};

namespace detail {

// Levenberg-Marquardt on y = A sinc^2(c (x - x0)) + d with parameters
// p = (A, x0, c, d), numeric central-difference Jacobian.
inline SincFitResult lm_sinc(const std::vector<double>& x, const std::vector<double>& y,
                             Eigen::Vector4d p, const SincFitOptions& opt) {
    const std::size_t n = x.size();
    auto model = [&](const Eigen::Vector4d& q, std::size_t k) {
        const double s = sinc(q[2] * (x[k] - q[1]));
        return q[0] * s * s + q[3];
    };
    auto ssr = [&](const Eigen::Vector4d& q) {
        double s = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
            const double r = model(q, k) - y[k];
            s += r * r;
        }
        return s;
    };

    double mu = 1e-3;
    double best = ssr(p);
    SincFitResult out;
    Eigen::Matrix4d jtj_final = Eigen::Matrix4d::Zero();
    int it = 0;
    for (; it < opt.max_iterations; ++it) {
        Eigen::MatrixXd J(n, 4);
        Eigen::VectorXd r(n);
        for (std::size_t k = 0; k < n; ++k) r[k] = model(p, k) - y[k];
        for (int j = 0; j < 4; ++j) {
            const double h = 1e-6 * std::max(std::abs(p[j]), 1e-8);
            Eigen::Vector4d pp = p, pm = p;
            pp[j] += h;
            pm[j] -= h;
            for (std::size_t k = 0; k < n; ++k)
                J(k, j) = (model(pp, k) - model(pm, k)) / (2.0 * h);
        }
        const Eigen::Matrix4d jtj = J.transpose() * J;
        const Eigen::Vector4d g = J.transpose() * r;
        jtj_final = jtj;

        bool accepted = false;
        for (int tries = 0; tries < 40; ++tries) {
            Eigen::Matrix4d damped = jtj;
            for (int j = 0; j < 4; ++j) damped(j, j) += mu * std::max(jtj(j, j), 1e-30);
            const Eigen::Vector4d step = damped.ldlt().solve(-g);
            const Eigen::Vector4d cand = p + step;
            const double s = ssr(cand);
            if (s < best) {
                double max_rel = 0.0;
                for (int j = 0; j < 4; ++j)
                    max_rel = std::max(max_rel,
                                       std::abs(step[j]) / std::max(std::abs(cand[j]), 1e-12));
                p = cand;
                best = s;
                mu = std::max(mu * 0.3, 1e-12);
                accepted = true;
                if (max_rel < opt.param_tol) {
                    out.iterations = it + 1;
                    goto done;
                }
                break;
            }
            mu *= 10.0;
            if (mu > 1e12) break;
        }
        if (!accepted) {
            out.iterations = it + 1;
            goto done;  // stationary within damping range
        }
    }
    {
        std::ostringstream os;
        os << "sinc fit did not converge in " << opt.max_iterations
           << " iterations; params A=" << p[0] << " x0=" << p[1] << " c=" << p[2]
           << " d=" << p[3] << " ssr=" << best;
        throw FitError(os.str());
    }
done:
    out.amplitude = p[0];
    out.center_nm = p[1];
    out.kappa_per_nm = std::abs(p[2]);
    out.offset = p[3];
    out.residual_rms = std::sqrt(best / n);
    const double dof = static_cast<double>(n) - 4.0;
    const double sigma2 = dof > 0 ? best / dof : 0.0;
    const Eigen::Matrix4d cov = sigma2 * jtj_final.inverse();
    out.amplitude_err = std::sqrt(std::max(0.0, cov(0, 0)));
    out.center_err_nm = std::sqrt(std::max(0.0, cov(1, 1)));
    out.kappa_err_per_nm = std::sqrt(std::max(0.0, cov(2, 2)));
    out.offset_err = std::sqrt(std::max(0.0, cov(3, 3)));
    return out;
}

inline void check_inputs(const std::vector<double>& nm, const std::vector<double>& intensity,
                         double fwhm0_nm) {
    if (nm.size() != intensity.size()) throw FitError("wavelength/intensity length mismatch");
    if (nm.size() < 20) throw FitError("sinc fit needs >= 20 points");
    const double span = nm.back() - nm.front();
    if (!(span >= 2.0 * fwhm0_nm)) {
        std::ostringstream os;
        os << "spectrum span " << span << " nm is below two nominal FWHM ("
           << 2.0 * fwhm0_nm << " nm)";
        throw FitError(os.str());
    }
}

}  // namespace detail

/// Fits A sinc^2(kappa (lambda - center)) + offset where kappa is tied to the
/// effective poled length through the linearized phase mismatch:
/// kappa = L_eff/2 * |d(delta beta)/d lambda|. `dbeta_slope` is that slope in
/// 1/m per nm at the initial center, from the dispersion engine.
inline SincFitResult fit_sinc(const std::vector<double>& nm, const std::vector<double>& intensity,
                              double center0_nm, double l0_mm, double dbeta_slope,
                              const SincFitOptions& opt = {}) {
    if (dbeta_slope == 0.0 || !std::isfinite(dbeta_slope))
        throw FitError("fit_sinc needs a nonzero phase-mismatch slope (use fit_sinc_free)");
    const double s = std::abs(dbeta_slope);
    const double c0 = 0.5 * (l0_mm * 1e-3) * s;  // 1/nm
    detail::check_inputs(nm, intensity, 2.78312 / c0);

    double ymax = intensity[0], ymin = intensity[0];
    for (double v : intensity) {
        ymax = std::max(ymax, v);
        ymin = std::min(ymin, v);
    }
    Eigen::Vector4d p(ymax - ymin, center0_nm, c0, ymin);
    SincFitResult out = detail::lm_sinc(nm, intensity, p, opt);
    out.l_eff_mm = 2.0 * out.kappa_per_nm / s * 1e3;
    out.l_eff_err_mm = 2.0 * out.kappa_err_per_nm / s * 1e3;
    if (!(out.l_eff_mm > 0.0)) throw FitError("fit produced a non-positive effective length");
    return out;
}

/// Dispersion-free variant: the sinc argument slope is a free coefficient and
/// no effective length is derived (l_eff fields stay NaN).
inline SincFitResult fit_sinc_free(const std::vector<double>& nm,
                                   const std::vector<double>& intensity, double center0_nm,
                                   double kappa0_per_nm, const SincFitOptions& opt = {}) {
    if (!(kappa0_per_nm > 0.0)) throw FitError("kappa0 must be positive");
    detail::check_inputs(nm, intensity, 2.78312 / kappa0_per_nm);
    double ymax = intensity[0], ymin = intensity[0];
    for (double v : intensity) {
        ymax = std::max(ymax, v);
        ymin = std::min(ymin, v);
    }
    Eigen::Vector4d p(ymax - ymin, center0_nm, kappa0_per_nm, ymin);
    return detail::lm_sinc(nm, intensity, p, opt);
}

}  // namespace pdcsim::fitting

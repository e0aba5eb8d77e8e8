#pragma once

#include <array>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "pdcsim/common.hpp"

namespace pdcsim::materials {

enum class MaterialTag { LnMgoExtraordinary, LnMgoOrdinary, FusedSilica, Air };

inline std::string to_string(MaterialTag tag) {
    switch (tag) {
        case MaterialTag::LnMgoExtraordinary: return "ln_mgo_e";
        case MaterialTag::LnMgoOrdinary: return "ln_mgo_o";
        case MaterialTag::FusedSilica: return "fused_silica";
        case MaterialTag::Air: return "air";
    }
    return "?";
}

// Thermal factor of the MgO:LN model. Zero at the 24.5 C reference and
// symmetric under T -> -T - 546.32.
inline double thermal_factor(double temperature_c) {
    return (temperature_c - 24.5) * (temperature_c + 570.82);
}

/// Temperature-dependent dispersion model for one material in the stack.
///
/// Three closed forms are supported:
///  - LnThermal: n^2 = a1 + b1 f + (a2 + b2 f)/(l^2 - (a3 + b3 f)^2)
///               + (a4 + b4 f)/(l^2 - a5^2) - a6 l^2,  f = (T-24.5)(T+570.82)
///  - Sellmeier3: n^2 = 1 + sum_i B_i l^2/(l^2 - C_i^2), temperature independent
///  - Constant:  n = c0
/// Wavelengths in micrometers, temperatures in degrees Celsius.
struct DispersionModel {
    enum class Form { LnThermal, Sellmeier3, Constant };

    MaterialTag tag = MaterialTag::Air;
    Form form = Form::Constant;
    // LnThermal: a1..a6, b1..b4; Sellmeier3: B1,C1,B2,C2,B3,C3; Constant: c0.
    std::array<double, 10> coef{};
    double lambda_min_um = 0.2;
    double lambda_max_um = 5.0;
    double temp_min_c = 20.0;
    double temp_max_c = 200.0;
    double reference_temperature_c = 24.5;
    std::string source;  // provenance of the coefficient set

    double index(double lambda_um, double temperature_c) const {
        check_range(lambda_um, temperature_c);
        return evaluate(lambda_um, temperature_c);
    }

    // Evaluation without range policing; used by the derivative stencils
    // whose probe points are margin-checked up front.
    double evaluate(double lambda_um, double temperature_c) const {
        switch (form) {
            case Form::Constant:
                return coef[0];
            case Form::Sellmeier3: {
                const double l2 = lambda_um * lambda_um;
                double n2 = 1.0;
                for (int i = 0; i < 3; ++i) {
                    const double b = coef[2 * i], c = coef[2 * i + 1];
                    n2 += b * l2 / (l2 - c * c);
                }
                return std::sqrt(n2);
            }
            case Form::LnThermal: {
                const double f = thermal_factor(temperature_c);
                const double l2 = lambda_um * lambda_um;
                const double a1 = coef[0], a2 = coef[1], a3 = coef[2], a4 = coef[3],
                             a5 = coef[4], a6 = coef[5];
                const double b1 = coef[6], b2 = coef[7], b3 = coef[8], b4 = coef[9];
                const double res1 = a3 + b3 * f;
                const double n2 = a1 + b1 * f + (a2 + b2 * f) / (l2 - res1 * res1) +
                                  (a4 + b4 * f) / (l2 - a5 * a5) - a6 * l2;
                return std::sqrt(n2);
            }
        }
        return 1.0;
    }

    void check_range(double lambda_um, double temperature_c) const {
        if (!(lambda_um >= lambda_min_um && lambda_um <= lambda_max_um)) {
            std::ostringstream os;
            os << "wavelength " << lambda_um << " um outside validity range ["
               << lambda_min_um << ", " << lambda_max_um << "] um of " << to_string(tag);
            throw DomainError(os.str());
        }
        if (!(temperature_c >= temp_min_c && temperature_c <= temp_max_c)) {
            std::ostringstream os;
            os << "temperature " << temperature_c << " C outside validity range ["
               << temp_min_c << ", " << temp_max_c << "] C of " << to_string(tag);
            throw DomainError(os.str());
        }
    }
};

/// n(lambda, T) for a dispersion model. Domain-checked closed-form evaluation.
inline double refractive_index(const DispersionModel& model, double lambda_um,
                               double temperature_c) {
    return model.index(lambda_um, temperature_c);
}

/// d^k n / d lambda^k (k = 1 or 2) by central differences with adaptive step
/// halving until the step-halved estimate agrees to 1e-6 relative; returns the
/// Richardson-extrapolated value.
inline double index_derivative(const DispersionModel& model, double lambda_um,
                               double temperature_c, int order) {
    if (order != 1 && order != 2) throw DomainError("derivative order must be 1 or 2");
    double step = 2e-3;  // um, initial stencil step
    if (lambda_um - 2.0 * step < model.lambda_min_um ||
        lambda_um + 2.0 * step > model.lambda_max_um) {
        std::ostringstream os;
        os << "wavelength " << lambda_um << " um too close to the validity edge of "
           << to_string(model.tag) << " for a " << 2.0 * step << " um stencil margin";
        throw DomainError(os.str());
    }
    model.check_range(lambda_um, temperature_c);

    auto stencil = [&](double h) {
        const double np = model.evaluate(lambda_um + h, temperature_c);
        const double nm = model.evaluate(lambda_um - h, temperature_c);
        if (order == 1) return (np - nm) / (2.0 * h);
        const double n0 = model.evaluate(lambda_um, temperature_c);
        return (np - 2.0 * n0 + nm) / (h * h);
    };

    double coarse = stencil(step);
    for (int it = 0; it < 8; ++it) {
        const double fine = stencil(step / 2.0);
        const double rel = std::abs(coarse - fine) / std::max(std::abs(fine), 1e-12);
        if (rel < 1e-6) return (4.0 * fine - coarse) / 3.0;
        step /= 2.0;
        coarse = fine;
    }
    throw SolverError("index_derivative failed to reach 1e-6 step-halving consistency");
}

/// Built-in coefficient table. LN models follow the temperature-dependent
/// Sellmeier of Gayer et al. (Appl. Phys. B 91, 2008) for 5% MgO-doped
/// congruent LiNbO3; fused silica follows Malitson (JOSA 55, 1965).
inline DispersionModel builtin_model(MaterialTag tag) {
    DispersionModel m;
    m.tag = tag;
    switch (tag) {
        case MaterialTag::LnMgoExtraordinary:
            m.form = DispersionModel::Form::LnThermal;
            m.coef = {5.756, 0.0983, 0.2020, 189.32, 12.52, 1.32e-2,
                      2.860e-6, 4.700e-8, 6.113e-8, 1.516e-4};
            m.lambda_min_um = 0.5;
            m.lambda_max_um = 4.0;
            m.source = "Gayer 2008, 5% MgO:CLN, extraordinary";
            break;
        case MaterialTag::LnMgoOrdinary:
            m.form = DispersionModel::Form::LnThermal;
            m.coef = {5.653, 0.1185, 0.2091, 89.61, 10.85, 1.97e-2,
                      7.941e-7, 3.134e-8, -4.641e-9, -2.188e-6};
            m.lambda_min_um = 0.5;
            m.lambda_max_um = 4.0;
            m.source = "Gayer 2008, 5% MgO:CLN, ordinary";
            break;
        case MaterialTag::FusedSilica:
            m.form = DispersionModel::Form::Sellmeier3;
            m.coef = {0.6961663, 0.0684043, 0.4079426, 0.1162414, 0.8974794, 9.896161,
                      0.0, 0.0, 0.0, 0.0};
            m.lambda_min_um = 0.21;
            m.lambda_max_um = 3.71;
            m.source = "Malitson 1965, fused silica";
            break;
        case MaterialTag::Air:
            m.form = DispersionModel::Form::Constant;
            m.coef[0] = 1.0;
            m.lambda_min_um = 0.1;
            m.lambda_max_um = 20.0;
            m.source = "vacuum approximation n=1";
            break;
    }
    return m;
}

/// Stack of models used by the waveguide rasterizer: LN core (extraordinary,
/// type-0 quasi-TE), silica substrate/cladding, air on top. Individual models
/// can be replaced through an override file.
struct MaterialSet {
    DispersionModel core = builtin_model(MaterialTag::LnMgoExtraordinary);
    DispersionModel silica = builtin_model(MaterialTag::FusedSilica);
    DispersionModel air = builtin_model(MaterialTag::Air);
};

/// Parses a key-value override file (one `key = value` pair per line, `#`
/// comments). Schema: material, form, source, wavelength_range_um (two
/// numbers), temperature_range_c, reference_temperature_c plus the coefficient
/// names of the chosen form (a1..a6,b1..b4 | B1,C1,B2,C2,B3,C3 | c0).
inline DispersionModel load_override(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open material override file: " + path);
    std::map<std::string, std::string> kv;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        auto eq = line.find('=');
        if (eq == std::string::npos) {
            if (line.find_first_not_of(" \t\r") != std::string::npos)
                throw ConfigError(path + ":" + std::to_string(lineno) +
                                  ": expected `key = value`");
            continue;
        }
        auto trim = [](std::string s) {
            auto b = s.find_first_not_of(" \t\r");
            auto e = s.find_last_not_of(" \t\r");
            return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
        };
        kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
    }

    auto need = [&](const std::string& key) -> std::string {
        auto it = kv.find(key);
        if (it == kv.end()) throw ConfigError(path + ": missing key `" + key + "`");
        return it->second;
    };
    auto num = [&](const std::string& key) {
        try {
            return std::stod(need(key));
        } catch (const std::logic_error&) {
            throw ConfigError(path + ": key `" + key + "` is not a number");
        }
    };

    DispersionModel m;
    const std::string mat = need("material");
    if (mat == "ln_mgo_e") m.tag = MaterialTag::LnMgoExtraordinary;
    else if (mat == "ln_mgo_o") m.tag = MaterialTag::LnMgoOrdinary;
    else if (mat == "fused_silica") m.tag = MaterialTag::FusedSilica;
    else if (mat == "air") m.tag = MaterialTag::Air;
    else throw ConfigError(path + ": unknown material tag `" + mat + "`");

    const std::string form = need("form");
    if (form == "ln_thermal") {
        m.form = DispersionModel::Form::LnThermal;
        const char* names[] = {"a1", "a2", "a3", "a4", "a5", "a6", "b1", "b2", "b3", "b4"};
        for (int i = 0; i < 10; ++i) m.coef[i] = num(names[i]);
    } else if (form == "sellmeier3") {
        m.form = DispersionModel::Form::Sellmeier3;
        const char* names[] = {"B1", "C1", "B2", "C2", "B3", "C3"};
        for (int i = 0; i < 6; ++i) m.coef[i] = num(names[i]);
    } else if (form == "constant") {
        m.form = DispersionModel::Form::Constant;
        m.coef[0] = num("c0");
    } else {
        throw ConfigError(path + ": unknown form `" + form + "`");
    }

    {
        std::istringstream ws(need("wavelength_range_um"));
        if (!(ws >> m.lambda_min_um >> m.lambda_max_um) || m.lambda_min_um >= m.lambda_max_um)
            throw ConfigError(path + ": wavelength_range_um needs `min max` with min < max");
    }
    if (kv.count("temperature_range_c")) {
        std::istringstream ts(kv["temperature_range_c"]);
        if (!(ts >> m.temp_min_c >> m.temp_max_c) || m.temp_min_c >= m.temp_max_c)
            throw ConfigError(path + ": temperature_range_c needs `min max` with min < max");
    }
    if (kv.count("reference_temperature_c")) m.reference_temperature_c = num("reference_temperature_c");
    m.source = kv.count("source") ? kv["source"] : ("override file " + path);
    return m;
}

}  // namespace pdcsim::materials

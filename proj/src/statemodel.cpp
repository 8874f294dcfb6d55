#include "cspdc/statemodel.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "cspdc/errors.hpp"

namespace cspdc::statemodel {

using qcore::ComplexMatrix;
using qcore::cxd;

Ket make_ghz(double phase) {
    std::vector<cxd> v(8, cxd(0.0, 0.0));
    const double s = 1.0 / std::sqrt(2.0);
    v[0] = cxd(s, 0.0);
    v[7] = std::exp(cxd(0.0, phase)) * s;
    return Ket(std::move(v));
}

DensityMatrix apply_noise(const DensityMatrix& rho, double p, double gamma) {
    if (p < 0.0 || p > 1.0 || gamma < 0.0 || gamma > 1.0) {
        throw ConfigError("noise parameters must lie in [0, 1]");
    }
    const std::size_t d = rho.dim();
    ComplexMatrix out(d);
    for (std::size_t i = 0; i < d; ++i) {
        for (std::size_t j = 0; j < d; ++j) {
            const bool corner = (i == 0 && j == d - 1) || (i == d - 1 && j == 0);
            const double damp = corner ? gamma : 1.0;
            out.at(i, j) = (1.0 - p) * damp * rho.m.at(i, j);
        }
        out.at(i, i) += p / static_cast<double>(d);
    }
    return qcore::validate_physical(out);
}

namespace {

double model_fidelity(double p, double gamma) {
    return (1.0 - p) * (1.0 + gamma) / 2.0 + p / 8.0;
}

double model_purity(double p, double gamma) {
    return (1.0 - p) * (1.0 - p) * (1.0 + gamma * gamma) / 2.0 +
           p * (2.0 - p) / 8.0;
}

double target_sqdist(double p, double gamma, double tf, double tp) {
    const double df = model_fidelity(p, gamma) - tf;
    const double dp = model_purity(p, gamma) - tp;
    return df * df + dp * dp;
}

}  // namespace

NoiseParams calibrate_noise(double target_fidelity, double target_purity,
                            double max_residual) {
    if (target_fidelity < 0.0 || target_fidelity > 1.0 ||
        target_purity < 0.0 || target_purity > 1.0) {
        throw ConfigError("calibration targets must lie in [0, 1]");
    }

    // Coarse scan followed by pattern-search refinement.  The objective is
    // smooth and the domain is the unit square, so this converges to the
    // global optimum to well below the residual scale we care about.
    double best_p = 0.0, best_g = 0.0;
    double best = target_sqdist(0.0, 0.0, target_fidelity, target_purity);
    const int n = 200;
    for (int i = 0; i <= n; ++i) {
        for (int j = 0; j <= n; ++j) {
            const double p = static_cast<double>(i) / n;
            const double g = static_cast<double>(j) / n;
            const double d = target_sqdist(p, g, target_fidelity, target_purity);
            if (d < best) {
                best = d;
                best_p = p;
                best_g = g;
            }
        }
    }
    // Damped Gauss-Newton from the grid optimum, projected to the unit
    // square.  Handles both the interior case (residual -> 0) and the
    // boundary case where the target lies off the achievable surface.
    double lambda = 1e-3;
    for (int iter = 0; iter < 300; ++iter) {
        const double p = best_p, g = best_g;
        const double rf = model_fidelity(p, g) - target_fidelity;
        const double rp = model_purity(p, g) - target_purity;
        const double fp = -(1.0 + g) / 2.0 + 0.125;
        const double fg = (1.0 - p) / 2.0;
        const double pp = -(1.0 - p) * (1.0 + g * g) + (1.0 - p) / 4.0;
        const double pg = (1.0 - p) * (1.0 - p) * g;
        // Solve (J^T J + lambda I) delta = -J^T r.
        const double a11 = fp * fp + pp * pp + lambda;
        const double a12 = fp * fg + pp * pg;
        const double a22 = fg * fg + pg * pg + lambda;
        const double b1 = -(fp * rf + pp * rp);
        const double b2 = -(fg * rf + pg * rp);
        const double det = a11 * a22 - a12 * a12;
        if (std::abs(det) < 1e-30) break;
        const double dp = (b1 * a22 - b2 * a12) / det;
        const double dg = (a11 * b2 - a12 * b1) / det;
        const double np = std::clamp(p + dp, 0.0, 1.0);
        const double ng = std::clamp(g + dg, 0.0, 1.0);
        const double nd = target_sqdist(np, ng, target_fidelity, target_purity);
        if (nd < best) {
            best = nd;
            best_p = np;
            best_g = ng;
            lambda = std::max(lambda * 0.3, 1e-12);
            if (std::abs(np - p) < 1e-15 && std::abs(ng - g) < 1e-15) break;
        } else {
            lambda *= 10.0;
            if (lambda > 1e8) break;
        }
    }

    // Prefer pure dephasing when it does just as well: refine the p = 0
    // slice and take it unless the two-parameter fit is strictly better.
    {
        double lo = 0.0, hi = 1.0;
        for (int iter = 0; iter < 200; ++iter) {
            const double g1 = lo + (hi - lo) / 3.0;
            const double g2 = hi - (hi - lo) / 3.0;
            if (target_sqdist(0.0, g1, target_fidelity, target_purity) <
                target_sqdist(0.0, g2, target_fidelity, target_purity)) {
                hi = g2;
            } else {
                lo = g1;
            }
        }
        const double g0 = 0.5 * (lo + hi);
        const double d0 = target_sqdist(0.0, g0, target_fidelity, target_purity);
        if (d0 <= best + 1e-15) {
            best = d0;
            best_p = 0.0;
            best_g = g0;
        }
    }

    NoiseParams out;
    out.p = best_p;
    out.gamma = best_g;
    out.residual = std::sqrt(best);
    if (out.residual > max_residual) {
        throw UnreachableTargetError(
            "no noise parameters reach fidelity " +
            std::to_string(target_fidelity) + ", purity " +
            std::to_string(target_purity) + "; closest is p=" +
            std::to_string(out.p) + ", gamma=" + std::to_string(out.gamma) +
            " at distance " + std::to_string(out.residual));
    }
    return out;
}

HeraldOutcome herald_project(const DensityMatrix& rho, int mode, double beta,
                             int outcome) {
    if (rho.dim() != 8) {
        throw DimensionError("herald_project expects a three-qubit state");
    }
    if (mode < 1 || mode > 3) {
        throw ConfigError("herald mode must be 1, 2, or 3");
    }
    if (outcome != 1 && outcome != -1) {
        throw ConfigError("herald outcome must be +1 or -1");
    }
    const double c = std::cos(beta);
    const double s = std::sin(beta);
    const double b0 = (outcome == 1) ? c : s;
    const double b1 = (outcome == 1) ? s : -c;
    const std::size_t q = static_cast<std::size_t>(mode - 1);
    const std::size_t qbit = 2 - q;  // qubit 0 is the most significant bit
    // Basis index of the full state from the herald-mode bit and the
    // two-bit index of the kept modes (original order preserved).
    auto full_index = [&](std::size_t herald_bit, std::size_t kept) {
        std::size_t idx = herald_bit << qbit;
        std::size_t pos = 0;
        for (std::size_t qq = 0; qq < 3; ++qq) {
            if (qq == q) continue;
            const std::size_t bit = (kept >> (1 - pos)) & 1u;
            idx |= bit << (2 - qq);
            ++pos;
        }
        return idx;
    };

    ComplexMatrix cond(4);
    const double bq[2] = {b0, b1};
    for (std::size_t r = 0; r < 4; ++r) {
        for (std::size_t col = 0; col < 4; ++col) {
            cxd acc(0.0, 0.0);
            for (std::size_t h = 0; h < 2; ++h) {
                for (std::size_t hp = 0; hp < 2; ++hp) {
                    acc += bq[h] * bq[hp] *
                           rho.m.at(full_index(h, r), full_index(hp, col));
                }
            }
            cond.at(r, col) = acc;
        }
    }
    const double prob = qcore::trace(cond).real();
    if (prob < 1e-12) {
        ComplexMatrix mixed(4);
        for (std::size_t i = 0; i < 4; ++i) mixed.at(i, i) = cxd(0.25, 0.0);
        return {qcore::validate_physical(mixed), std::max(prob, 0.0), true};
    }
    for (auto& e : cond.a) e /= prob;
    return {qcore::validate_physical(cond, 1e-9), prob, false};
}

Ket herald_target(double phase, double beta, int outcome) {
    if (outcome != 1 && outcome != -1) {
        throw ConfigError("herald outcome must be +1 or -1");
    }
    const cxd ph = std::exp(cxd(0.0, phase));
    std::vector<cxd> v(4, cxd(0.0, 0.0));
    if (outcome == 1) {
        v[0] = cxd(std::cos(beta), 0.0);
        v[3] = ph * std::sin(beta);
    } else {
        v[0] = cxd(std::sin(beta), 0.0);
        v[3] = -ph * std::cos(beta);
    }
    return Ket(std::move(v));
}

double intensity_sigma_omega(const DispersionSpec& spec) {
    constexpr double c_light = 299792458.0;
    const double lam = spec.center_wavelength_m;
    const double fwhm_omega =
        2.0 * std::numbers::pi * c_light * spec.fwhm_bandwidth_m / (lam * lam);
    return fwhm_omega / (2.0 * std::sqrt(2.0 * std::log(2.0)));
}

double chirp_overlap(double length_mismatch_m, const DispersionSpec& spec) {
    const double sigma = intensity_sigma_omega(spec);
    const double kappa = 0.5 * spec.gvd_s2_per_m * length_mismatch_m;
    const double x = 4.0 * kappa * kappa * sigma * sigma * sigma * sigma;
    return std::pow(1.0 + x, -0.25);
}

double visibility_vs_mismatch(double length_mismatch_m,
                              const DispersionSpec& spec) {
    return spec.base_visibility * chirp_overlap(length_mismatch_m, spec);
}

}  // namespace cspdc::statemodel

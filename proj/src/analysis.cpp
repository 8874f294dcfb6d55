#include "cspdc/analysis.hpp"

#include <cmath>
#include <limits>

#include "cspdc/errors.hpp"

namespace cspdc::analysis {

namespace {

using qcore::DensityMatrix;
using qcore::Observable;

Observable joint_observable(const std::vector<Setting>& settings) {
    Observable obs = measurement::setting_observable(settings[0]);
    for (std::size_t m = 1; m < settings.size(); ++m) {
        obs.m = qcore::tensor(
            obs.m, measurement::setting_observable(settings[m]).m);
    }
    return obs;
}

double combination_value(const DensityMatrix& rho,
                         const std::vector<std::vector<Setting>>& settings,
                         const std::vector<int>& coefficients) {
    double sum = 0.0;
    for (std::size_t t = 0; t < settings.size(); ++t) {
        sum += coefficients[t] *
               qcore::expectation(rho, joint_observable(settings[t]));
    }
    return std::abs(sum);
}

InequalityResult combination_from_counts(
    const std::string& name, const std::vector<CountTable>& tables,
    const std::vector<std::vector<Setting>>& settings,
    const std::vector<int>& coefficients, double classical_bound,
    double quantum_bound) {
    InequalityResult result;
    result.name = name;
    result.classical_bound = classical_bound;
    result.quantum_bound = quantum_bound;
    double sum = 0.0;
    double var = 0.0;
    for (std::size_t t = 0; t < settings.size(); ++t) {
        const std::size_t idx =
            measurement::find_table(tables, settings[t]);
        if (idx == measurement::table_npos) {
            throw DataError(name + ": no count table for term " +
                            std::to_string(t));
        }
        TermEstimate term;
        term.settings = settings[t];
        term.coefficient = coefficients[t];
        term.correlation =
            measurement::correlation_from_counts(tables[idx].counts);
        term.sigma = measurement::correlation_sigma(tables[idx].counts);
        sum += term.coefficient * term.correlation;
        var += term.sigma * term.sigma;
        result.terms.push_back(std::move(term));
    }
    result.value = std::abs(sum);
    result.sigma = std::sqrt(var);
    if (result.sigma > 0.0) {
        result.violation_sigmas =
            (result.value - classical_bound) / result.sigma;
    } else {
        result.violation_sigmas =
            result.value > classical_bound
                ? std::numeric_limits<double>::infinity()
                : 0.0;
    }
    return result;
}

}  // namespace

std::vector<std::vector<Setting>> mermin_settings() {
    const Setting x = measurement::setting_x();
    const Setting y = measurement::setting_y();
    return {{y, y, x}, {y, x, y}, {x, y, y}, {x, x, x}};
}

std::vector<int> mermin_coefficients() { return {+1, +1, +1, -1}; }

double mermin_value(const DensityMatrix& rho) {
    return combination_value(rho, mermin_settings(), mermin_coefficients());
}

InequalityResult mermin_from_counts(const std::vector<CountTable>& tables) {
    return combination_from_counts("mermin", tables, mermin_settings(),
                                   mermin_coefficients(), 2.0, 4.0);
}

std::vector<std::vector<Setting>> svetlichny_settings() {
    const Setting a = measurement::setting_x();
    const Setting ap = measurement::setting_y();
    const Setting c = measurement::equatorial(-0.7853981633974483);
    const Setting cp = measurement::equatorial(0.7853981633974483);
    return {{a, a, c},  {a, a, cp},  {a, ap, c},  {a, ap, cp},
            {ap, a, c}, {ap, a, cp}, {ap, ap, c}, {ap, ap, cp}};
}

std::vector<int> svetlichny_coefficients() {
    return {+1, +1, +1, -1, +1, -1, -1, -1};
}

double svetlichny_value(const DensityMatrix& rho) {
    return combination_value(rho, svetlichny_settings(),
                             svetlichny_coefficients());
}

InequalityResult svetlichny_from_counts(
    const std::vector<CountTable>& tables) {
    return combination_from_counts("svetlichny", tables,
                                   svetlichny_settings(),
                                   svetlichny_coefficients(), 4.0,
                                   5.656854249492381);
}

std::vector<std::vector<Setting>> chsh_settings() {
    const Setting a = measurement::setting_z();
    const Setting ap = measurement::setting_x();
    const Setting b{0.7853981633974483, 0.0};
    const Setting bp{2.356194490192345, 0.0};
    return {{a, b}, {a, bp}, {ap, b}, {ap, bp}};
}

std::vector<int> chsh_coefficients(int herald_sign) {
    if (herald_sign == +1) return {+1, -1, +1, +1};
    if (herald_sign == -1) return {+1, -1, -1, -1};
    throw ConfigError("herald sign must be +1 or -1");
}

double chsh_value(const DensityMatrix& rho, int herald_sign) {
    return combination_value(rho, chsh_settings(),
                             chsh_coefficients(herald_sign));
}

InequalityResult chsh_from_counts(const std::vector<CountTable>& tables,
                                  int herald_sign) {
    return combination_from_counts(
        herald_sign > 0 ? "chsh_plus" : "chsh_minus", tables,
        chsh_settings(), chsh_coefficients(herald_sign), 2.0,
        2.8284271247461903);
}

double equatorial_correlation(const DensityMatrix& rho, double alpha,
                              double beta, double gamma_angle) {
    const std::vector<Setting> settings = {measurement::equatorial(alpha),
                                           measurement::equatorial(beta),
                                           measurement::equatorial(
                                               gamma_angle)};
    return qcore::expectation(rho, joint_observable(settings));
}

CosineFit fit_cosine(const std::vector<PhaseScanPoint>& points) {
    if (points.size() < 3) {
        throw DataError("cosine fit needs at least three phase points");
    }
    double cc = 0.0;
    double cs = 0.0;
    double ss = 0.0;
    double yc = 0.0;
    double ys = 0.0;
    for (const PhaseScanPoint& p : points) {
        const double c = std::cos(p.angle);
        const double s = std::sin(p.angle);
        cc += c * c;
        cs += c * s;
        ss += s * s;
        yc += p.correlation * c;
        ys += p.correlation * s;
    }
    const double det = cc * ss - cs * cs;
    if (std::abs(det) < 1e-9 * (cc + ss) * (cc + ss)) {
        throw DataError("phase grid is degenerate for a cosine fit");
    }
    const double a = (ss * yc - cs * ys) / det;
    const double b = (cc * ys - cs * yc) / det;
    CosineFit fit;
    fit.amplitude = std::hypot(a, b);
    fit.offset = std::atan2(b, a);
    double rss = 0.0;
    for (const PhaseScanPoint& p : points) {
        const double model =
            a * std::cos(p.angle) + b * std::sin(p.angle);
        rss += (p.correlation - model) * (p.correlation - model);
    }
    fit.rms_residual = std::sqrt(rss / static_cast<double>(points.size()));
    return fit;
}

HeraldMetrics heralding_metrics(
    const ttsim::TagStream& stream,
    const std::vector<coincidence::Triple>& triples, double duration_s) {
    if (duration_s <= 0.0) {
        throw ConfigError("duration must be positive");
    }
    if (stream.origins.size() != stream.tags.size()) {
        throw DataError("herald metrics need the origin sidecar");
    }
    HeraldMetrics metrics;
    for (std::size_t i = 0; i < stream.tags.size(); ++i) {
        const std::uint8_t ch = stream.tags[i].channel;
        if (ch != 2 && ch != 3) continue;
        ++metrics.herald_singles;
        if (stream.origins[i] ==
            static_cast<std::uint8_t>(ttsim::TagOrigin::triplet)) {
            ++metrics.triplet_heralds;
        }
    }
    metrics.triples = triples.size();
    metrics.herald_singles_rate =
        static_cast<double>(metrics.herald_singles) / duration_s;
    metrics.triple_rate =
        static_cast<double>(metrics.triples) / duration_s;
    metrics.efficiency =
        metrics.herald_singles == 0
            ? 0.0
            : static_cast<double>(metrics.triples) /
                  static_cast<double>(metrics.herald_singles);
    metrics.conditioned_efficiency =
        metrics.triplet_heralds == 0
            ? 0.0
            : static_cast<double>(metrics.triples) /
                  static_cast<double>(metrics.triplet_heralds);
    return metrics;
}

std::vector<BetaPoint> beta_sweep(const DensityMatrix& rho, double phase,
                                  const std::vector<double>& betas) {
    std::vector<BetaPoint> points;
    for (double beta : betas) {
        const auto plus = statemodel::herald_project(rho, 2, beta, +1);
        const auto minus = statemodel::herald_project(rho, 2, beta, -1);
        BetaPoint point;
        point.beta = beta;
        point.probability_plus = plus.probability;
        point.fidelity_plus =
            plus.degenerate
                ? 0.0
                : qcore::fidelity_pure(
                      plus.state, statemodel::herald_target(phase, beta, +1));
        point.fidelity_minus =
            minus.degenerate
                ? 0.0
                : qcore::fidelity_pure(
                      minus.state,
                      statemodel::herald_target(phase, beta, -1));
        points.push_back(point);
    }
    return points;
}

DispersionScan compensation_scan(const statemodel::DispersionSpec& spec,
                                 double initial_mismatch_m,
                                 double half_range_m, std::size_t points) {
    if (points < 3 || half_range_m <= 0.0) {
        throw ConfigError("compensation scan needs range and >= 3 points");
    }
    DispersionScan scan;
    const double step =
        2.0 * half_range_m / static_cast<double>(points - 1);
    for (std::size_t i = 0; i < points; ++i) {
        const double comp = -half_range_m + step * static_cast<double>(i);
        scan.compensation_m.push_back(comp);
        scan.visibility.push_back(statemodel::visibility_vs_mismatch(
            initial_mismatch_m - comp, spec));
    }
    return scan;
}

std::size_t best_compensation(const DispersionScan& scan) {
    if (scan.visibility.empty()) {
        throw DataError("empty compensation scan");
    }
    std::size_t best = 0;
    for (std::size_t i = 1; i < scan.visibility.size(); ++i) {
        if (scan.visibility[i] > scan.visibility[best]) best = i;
    }
    return best;
}

}  // namespace cspdc::analysis

#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "cspdc/coincidence.hpp"
#include "cspdc/measurement.hpp"
#include "cspdc/qcore.hpp"
#include "cspdc/statemodel.hpp"
#include "cspdc/ttsim.hpp"

namespace cspdc::analysis {

using measurement::CountTable;
using measurement::Setting;

struct TermEstimate {
    std::vector<Setting> settings;
    int coefficient = 1;
    double correlation = 0.0;
    double sigma = 0.0;
};

struct InequalityResult {
    std::string name;
    std::vector<TermEstimate> terms;
    double value = 0.0;            // |sum of coefficient * correlation|
    double sigma = 0.0;            // quadrature sum of term sigmas
    double classical_bound = 0.0;
    double quantum_bound = 0.0;
    double violation_sigmas = 0.0;
};

// Three-mode Mermin combination E(yyx) + E(yxy) + E(xyy) - E(xxx),
// maximized at 4 by the phase-pi GHZ state.
std::vector<std::vector<Setting>> mermin_settings();
std::vector<int> mermin_coefficients();
double mermin_value(const qcore::DensityMatrix& rho);
InequalityResult mermin_from_counts(const std::vector<CountTable>& tables);

// Svetlichny combination over a = b = x, a' = b' = y and the third
// analyzer at -pi/4 (c) and +pi/4 (c') on the equator, maximized at
// 4 sqrt(2) by the phase-zero GHZ state.
std::vector<std::vector<Setting>> svetlichny_settings();
std::vector<int> svetlichny_coefficients();
double svetlichny_value(const qcore::DensityMatrix& rho);
InequalityResult svetlichny_from_counts(
    const std::vector<CountTable>& tables);

// Two-mode CHSH with a = z, a' = x and both analyzer diagonals on the
// x-z great circle.  The same four tables serve both herald signs; the
// coefficient pattern depends on the heralded Bell state, and each sign
// reaches 2 sqrt(2) on its ideal herald target.
std::vector<std::vector<Setting>> chsh_settings();
std::vector<int> chsh_coefficients(int herald_sign);
double chsh_value(const qcore::DensityMatrix& rho, int herald_sign);
InequalityResult chsh_from_counts(const std::vector<CountTable>& tables,
                                  int herald_sign);

// Predicted three-mode correlation for equatorial analyzer angles.
double equatorial_correlation(const qcore::DensityMatrix& rho, double alpha,
                              double beta, double gamma_angle);

struct PhaseScanPoint {
    double angle = 0.0;
    double correlation = 0.0;
    double sigma = 0.0;
};

struct CosineFit {
    double amplitude = 0.0;
    double offset = 0.0;
    double rms_residual = 0.0;
};

// Least-squares fit of correlation = amplitude * cos(angle - offset).
CosineFit fit_cosine(const std::vector<PhaseScanPoint>& points);

struct HeraldMetrics {
    std::uint64_t herald_singles = 0;   // tags on the herald channels
    std::uint64_t triplet_heralds = 0;  // herald tags of triplet origin
    std::uint64_t triples = 0;
    double herald_singles_rate = 0.0;
    double triple_rate = 0.0;
    double efficiency = 0.0;             // triples per herald single
    double conditioned_efficiency = 0.0; // triples per triplet herald
};

// Herald bookkeeping for channels 2 and 3.  The stream must carry the
// origin sidecar so dark counts can be told apart from triplet heralds.
HeraldMetrics heralding_metrics(const ttsim::TagStream& stream,
                                const std::vector<coincidence::Triple>& triples,
                                double duration_s);

struct BetaPoint {
    double beta = 0.0;
    double probability_plus = 0.0;
    double fidelity_plus = 0.0;
    double fidelity_minus = 0.0;
};

// Model prediction for a herald-basis sweep on mode 2: fidelity of each
// heralded two-mode state to its pure target.
std::vector<BetaPoint> beta_sweep(const qcore::DensityMatrix& rho,
                                  double phase,
                                  const std::vector<double>& betas);

struct DispersionScan {
    std::vector<double> compensation_m;
    std::vector<double> visibility;
};

// Two-photon visibility against inserted compensation length; the
// residual mismatch is initial_mismatch_m minus the compensation.
DispersionScan compensation_scan(const statemodel::DispersionSpec& spec,
                                 double initial_mismatch_m,
                                 double half_range_m, std::size_t points);

// Index of the largest visibility (first maximum on ties).
std::size_t best_compensation(const DispersionScan& scan);

}  // namespace cspdc::analysis

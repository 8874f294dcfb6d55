#pragma once

#include <cstddef>

#include "cspdc/qcore.hpp"

namespace cspdc::statemodel {

using qcore::DensityMatrix;
using qcore::Ket;

// (|HHH> + e^{i phase} |VVV>) / sqrt(2), qubit 0 most significant.
Ket make_ghz(double phase);

// Two-parameter noise channel used throughout: the coherence between the
// all-H and all-V basis states (the corner elements of the matrix) is
// scaled by gamma, then the result is mixed with white noise:
//   rho -> (1-p) * rho' + p * I/d
// Both parameters must lie in [0, 1].  The output must still be physical;
// states with large coherence against the corner basis states can violate
// that and are rejected by the physicality gate.
DensityMatrix apply_noise(const DensityMatrix& rho, double p, double gamma);

struct NoiseParams {
    double p = 0.0;
    double gamma = 1.0;
    // Euclidean distance in (fidelity, purity) space between the target
    // pair and the closest achievable pair.
    double residual = 0.0;
};

// Find (p, gamma) such that the noisy three-qubit state has the requested
// fidelity (with the ideal state) and purity.  The achievable set
//   F = (1-p)(1+gamma)/2 + p/8
//   P = (1-p)^2 (1+gamma^2)/2 + p(2-p)/8
// does not cover the whole unit square, so the closest achievable pair is
// returned together with its residual.  Throws UnreachableTargetError when
// the residual exceeds `max_residual`.
NoiseParams calibrate_noise(double target_fidelity, double target_purity,
                            double max_residual = 0.02);

struct HeraldOutcome {
    DensityMatrix state;  // normalized two-qubit state of the other modes
    double probability;   // probability of this herald outcome
    bool degenerate;      // true when the outcome has vanishing probability
};

// Measure one mode (1, 2, or 3) of a three-qubit state in the basis
//   |+> = cos(beta)|H> + sin(beta)|V>,   |-> = sin(beta)|H> - cos(beta)|V>
// and return the renormalized conditional state of the two remaining
// modes, in their original order.  `outcome` is +1 or -1.  A vanishing
// outcome probability is reported via the degenerate flag (the state is
// then maximally mixed as a placeholder), never an exception.
HeraldOutcome herald_project(const DensityMatrix& rho, int mode, double beta,
                             int outcome);

// Ideal heralded state of (|HHH> + e^{i phase}|VVV>)/sqrt(2): the plus
// outcome leaves cos(beta)|HH> + e^{i phase} sin(beta)|VV>, the minus
// outcome sin(beta)|HH> - e^{i phase} cos(beta)|VV>.
Ket herald_target(double phase, double beta, int outcome);

struct DispersionSpec {
    double center_wavelength_m = 1550e-9;
    double fwhm_bandwidth_m = 28e-9;
    double gvd_s2_per_m = 2.8e-26;   // group-velocity dispersion
    double base_visibility = 1.0;    // visibility at zero mismatch
};

// RMS width (rad/s) of the Gaussian intensity spectrum implied by the
// FWHM bandwidth around the center wavelength.
double intensity_sigma_omega(const DispersionSpec& spec);

// |overlap| of the chirped spectral amplitude with its unchirped self:
// (1 + 4 k^2 sigma^4)^(-1/4) with k = gvd * mismatch / 2.
double chirp_overlap(double length_mismatch_m, const DispersionSpec& spec);

// base_visibility * chirp_overlap.
double visibility_vs_mismatch(double length_mismatch_m,
                              const DispersionSpec& spec);

}  // namespace cspdc::statemodel

#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "cspdc/qcore.hpp"

namespace cspdc::measurement {

using qcore::DensityMatrix;
using qcore::Ket;
using qcore::Observable;
using qcore::PauliAxis;

// Polarization analyzer setting: measure n.sigma with the Bloch vector
// n = (sin theta cos phi, sin theta sin phi, cos theta).
struct Setting {
    double theta = 0.0;
    double phi = 0.0;
};

Setting setting_x();
Setting setting_y();
Setting setting_z();
Setting setting_axis(PauliAxis axis);
// Equatorial analyzer cos(a) sigma_x + sin(a) sigma_y.
Setting equatorial(double alpha);

// Bloch-vector view (n_x, n_y, n_z) of a setting and its inverse; the
// vector must be unit length within 1e-12.
std::array<double, 3> bloch_vector(const Setting& s);
Setting setting_from_bloch(const std::array<double, 3>& n);

Observable setting_observable(const Setting& s);
// Eigenvector of n.sigma for eigenvalue `sign` (+1 or -1).
Ket setting_eigenket(const Setting& s, int sign);

bool setting_close(const Setting& a, const Setting& b, double tol = 1e-9);

// Born probabilities of the 2^n outcome patterns for an n-qubit state
// measured with one setting per qubit.  Outcome index: qubit 0 is the most
// significant bit; bit 0 means the +1 outcome, bit 1 the -1 outcome.
std::vector<double> outcome_probabilities(const DensityMatrix& rho,
                                          const std::vector<Setting>& settings);

// Product of outcome signs for an outcome-bit pattern: +1 when the number
// of set bits is even.
int outcome_parity(std::size_t outcome_bits, std::size_t n_modes);

// E = sum_s parity(s) N_s / N and its multinomial standard error
// sqrt((1 - E^2) / N).  Throws DataError on an empty table.
double correlation_from_counts(const std::vector<std::uint64_t>& counts);
double correlation_sigma(const std::vector<std::uint64_t>& counts);

// All 3^n combinations of {x, y, z} analyzer settings, last qubit fastest,
// axes ordered x < y < z.
std::vector<std::vector<Setting>> tomography_settings(std::size_t n_qubits);

// Detector-bias cancellation: acquisition time is cut into 2^n equal
// slices and in slice k each mode whose bit is set in the k-th relabeling
// mask has its analyzer outputs swapped.  Counting code undoes the swap
// with the same mask, so each logical outcome spends equal time on each
// physical detector.  Member 0 is the identity; the last member flips all
// modes.
std::vector<std::uint8_t> balanced_subsettings(std::size_t n_modes);
std::uint8_t slice_mask(std::size_t slice_index);
std::size_t masked_outcome(std::size_t outcome_bits, std::uint8_t mask);
constexpr std::size_t kBalanceSlices = 8;

// Measured counts for one joint setting.
struct CountTable {
    std::vector<Setting> settings;      // one per mode
    std::vector<std::uint64_t> counts;  // size 2^n, indexed as above

    std::uint64_t total() const;
};

// Index of the table whose settings match within tol, or npos.
std::size_t find_table(const std::vector<CountTable>& tables,
                       const std::vector<Setting>& settings,
                       double tol = 1e-9);
constexpr std::size_t table_npos = static_cast<std::size_t>(-1);

// Per-setting CSV: header "outcome,count", one row per outcome pattern,
// outcomes as strings of '+'/'-' (mode 0 first).  The setting itself is
// not stored here; dataset manifests carry it (see tomography module).
void write_counts_csv(const std::string& path, const CountTable& table);
CountTable read_counts_csv(const std::string& path);

}  // namespace cspdc::measurement

#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "cspdc/measurement.hpp"
#include "cspdc/qcore.hpp"

namespace cspdc::tomography {

using measurement::CountTable;

// A complete tomography acquisition: one count table per joint analyzer
// setting.  All tables must address the same number of modes.
struct TomographyDataset {
    std::vector<CountTable> tables;

    // Mode count shared by every table; throws DataError when the dataset
    // is empty or the tables disagree.
    std::size_t n_modes() const;
};

// Directory layout: `manifest.csv` with one row per table
// (file,theta0,phi0,theta1,phi1,...) next to one counts CSV per table.
void write_dataset(const std::string& dir, const TomographyDataset& data);
TomographyDataset read_dataset(const std::string& dir);

// Linear inversion over the Pauli basis.  Every Pauli string is estimated
// from all tables whose axes cover it (equal weight per table) and the
// string expansion is summed.  Requires x/y/z axis settings and at least
// one table per Pauli string; the result is Hermitian with unit trace but
// can have negative eigenvalues.
qcore::ComplexMatrix linear_inversion(const TomographyDataset& data);

// Nearest physical state in the clip sense: negative eigenvalues are set
// to zero and the spectrum is renormalized.
qcore::DensityMatrix project_physical(const qcore::ComplexMatrix& m);

struct ReconstructionOptions {
    std::size_t max_iterations = 100000;
    double tolerance = 1e-10;
    double min_probability = 1e-15;
};

struct ReconstructionResult {
    qcore::DensityMatrix rho;
    double log_likelihood = 0.0;
    std::size_t iterations = 0;
    bool converged = false;
};

// Multinomial log-likelihood of the dataset under `rho`, up to the
// outcome-independent combinatorial constant.
double log_likelihood(const TomographyDataset& data,
                      const qcore::DensityMatrix& rho,
                      double min_probability = 1e-15);

// Maximum-likelihood reconstruction with the diluted R rho R iteration,
// started from the maximally mixed state.  The dilution step length is
// halved until the likelihood stops decreasing, so the likelihood is
// monotone; hitting max_iterations reports converged = false instead of
// throwing.
ReconstructionResult mle_reconstruct(const TomographyDataset& data,
                                     const ReconstructionOptions& options = {});

// Uhlmann fidelity (tr sqrt(sqrt(a) b sqrt(a)))^2.
double state_fidelity(const qcore::DensityMatrix& a,
                      const qcore::DensityMatrix& b);

// Half the trace norm of (a - b) for Hermitian inputs.
double trace_distance(const qcore::ComplexMatrix& a,
                      const qcore::ComplexMatrix& b);

struct BootstrapSummary {
    double fidelity_mean = 0.0;
    double fidelity_se = 0.0;
    double purity_mean = 0.0;
    double purity_se = 0.0;
    std::size_t samples = 0;
};

// Parametric bootstrap: every table is resampled multinomially at its own
// total, refitted with mle_reconstruct, and the spread of fidelity to the
// pure reference and of purity is summarized as mean and sample standard
// deviation.
BootstrapSummary bootstrap(const TomographyDataset& data,
                           const qcore::Ket& reference,
                           std::size_t n_samples, std::uint64_t seed,
                           const ReconstructionOptions& options = {});

}  // namespace cspdc::tomography

#pragma once

#include <complex>
#include <cstddef>
#include <iosfwd>
#include <string>
#include <vector>

#include "cspdc/errors.hpp"

namespace cspdc::qcore {

using cxd = std::complex<double>;

// Dense square complex matrix, row-major.  Dimensions in this library are
// small (2, 4, 8), so no effort is spent on sparsity or blocking.
struct ComplexMatrix {
    std::size_t dim = 0;
    std::vector<cxd> a;

    ComplexMatrix() = default;
    explicit ComplexMatrix(std::size_t n) : dim(n), a(n * n, cxd(0.0, 0.0)) {}

    cxd& at(std::size_t i, std::size_t j) { return a[i * dim + j]; }
    const cxd& at(std::size_t i, std::size_t j) const { return a[i * dim + j]; }
};

ComplexMatrix identity(std::size_t n);
ComplexMatrix zero(std::size_t n);

ComplexMatrix operator+(const ComplexMatrix& x, const ComplexMatrix& y);
ComplexMatrix operator-(const ComplexMatrix& x, const ComplexMatrix& y);
ComplexMatrix operator*(const ComplexMatrix& x, const ComplexMatrix& y);
ComplexMatrix operator*(cxd s, const ComplexMatrix& x);

ComplexMatrix adjoint(const ComplexMatrix& x);
cxd trace(const ComplexMatrix& x);

// Kronecker product; the first factor occupies the most significant index
// bits.  tensor(A, B, C) == tensor(tensor(A, B), C).
ComplexMatrix tensor(const ComplexMatrix& x, const ComplexMatrix& y);
ComplexMatrix tensor(const ComplexMatrix& x, const ComplexMatrix& y,
                     const ComplexMatrix& z);

// Largest absolute hermiticity defect, max_ij |m_ij - conj(m_ji)|.
double hermiticity_defect(const ComplexMatrix& x);

// Eigendecomposition of a Hermitian matrix; eigenvalues ascending,
// eigenvectors as columns of `vectors`.
struct EigenSystem {
    std::vector<double> values;
    ComplexMatrix vectors;
};
EigenSystem eigh(const ComplexMatrix& x);

// Pure state vector.  Normalization is enforced at construction to 1e-12.
struct Ket {
    std::size_t dim = 0;
    std::vector<cxd> v;

    Ket() = default;
    Ket(std::initializer_list<cxd> amplitudes);
    explicit Ket(std::vector<cxd> amplitudes);
};

Ket tensor(const Ket& x, const Ket& y);
Ket tensor(const Ket& x, const Ket& y, const Ket& z);
cxd inner(const Ket& x, const Ket& y);

// Single-qubit basis states in the polarization convention used throughout:
// |H> = (1,0), |V> = (0,1), |D> = (|H>+|V>)/sqrt(2), |A> = (|H>-|V>)/sqrt(2).
Ket ket_h();
Ket ket_v();
Ket ket_d();
Ket ket_a();
// Computational product states |HHH> and |VVV> (mode 1 most significant).
Ket ket_hhh();
Ket ket_vvv();
// Bell states (|HH> +/- |VV>)/sqrt(2).
Ket phi_plus();
Ket phi_minus();

enum class PauliAxis { x, y, z };

// Observable with a Hermitian matrix; for products of Bloch-vector
// observables all eigenvalues are +/-1.
struct Observable {
    ComplexMatrix m;
};

// Single-qubit Pauli operator in the {|H>, |V>} basis.
Observable pauli(PauliAxis axis);

// Density matrix.  Instances are produced through validate_physical (or the
// helpers below, which route through it), so holding one implies Hermitian,
// positive semidefinite and unit trace within the construction tolerance.
struct DensityMatrix {
    ComplexMatrix m;
    std::size_t dim() const { return m.dim; }
};

// Gate for constructing density matrices: checks hermiticity, eigenvalue
// positivity and unit trace within `tol`, throwing PhysicalityError naming
// the violated property and its magnitude.
DensityMatrix validate_physical(const ComplexMatrix& m, double tol = 1e-10);

DensityMatrix from_pure(const Ket& psi);
ComplexMatrix outer(const Ket& x, const Ket& y);

// Tr(rho * O).  Throws if the residual imaginary part exceeds 1e-10, which
// indicates a non-Hermitian operand.
double expectation(const DensityMatrix& rho, const Observable& obs);

// <psi| rho |psi>.
double fidelity_pure(const DensityMatrix& rho, const Ket& psi);

// Tr(rho^2).
double purity(const DensityMatrix& rho);

// Partial trace keeping the qubits listed in `keep` (0 = most significant).
// The kept qubits appear in the output in their original relative order.
DensityMatrix partial_trace(const DensityMatrix& rho,
                            const std::vector<std::size_t>& keep);

// Text serialization: a "dim=<n>" line followed by n rows of n entries
// "a+bi" with 17 significant digits.
void write_density(std::ostream& out, const DensityMatrix& rho);
std::string write_density(const DensityMatrix& rho);
void write_density_file(const std::string& path, const DensityMatrix& rho);
DensityMatrix read_density(std::istream& in);
DensityMatrix read_density(const std::string& text);
DensityMatrix read_density_file(const std::string& path);

}  // namespace cspdc::qcore

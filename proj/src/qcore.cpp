#include "cspdc/qcore.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <sstream>

namespace cspdc::qcore {

namespace {

void require_same_dim(const ComplexMatrix& x, const ComplexMatrix& y,
                      const char* op) {
    if (x.dim != y.dim) {
        throw DimensionError(std::string(op) + ": dimension mismatch (" +
                             std::to_string(x.dim) + " vs " +
                             std::to_string(y.dim) + ")");
    }
}

bool is_power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

std::size_t qubit_count(std::size_t dim, const char* op) {
    if (!is_power_of_two(dim)) {
        throw DimensionError(std::string(op) + ": dimension " +
                             std::to_string(dim) + " is not a power of two");
    }
    std::size_t n = 0;
    while ((std::size_t{1} << n) < dim) ++n;
    return n;
}

}  // namespace

ComplexMatrix identity(std::size_t n) {
    ComplexMatrix m(n);
    for (std::size_t i = 0; i < n; ++i) m.at(i, i) = 1.0;
    return m;
}

ComplexMatrix zero(std::size_t n) { return ComplexMatrix(n); }

ComplexMatrix operator+(const ComplexMatrix& x, const ComplexMatrix& y) {
    require_same_dim(x, y, "matrix add");
    ComplexMatrix r(x.dim);
    for (std::size_t i = 0; i < x.a.size(); ++i) r.a[i] = x.a[i] + y.a[i];
    return r;
}

ComplexMatrix operator-(const ComplexMatrix& x, const ComplexMatrix& y) {
    require_same_dim(x, y, "matrix subtract");
    ComplexMatrix r(x.dim);
    for (std::size_t i = 0; i < x.a.size(); ++i) r.a[i] = x.a[i] - y.a[i];
    return r;
}

ComplexMatrix operator*(const ComplexMatrix& x, const ComplexMatrix& y) {
    require_same_dim(x, y, "matrix multiply");
    const std::size_t n = x.dim;
    ComplexMatrix r(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t k = 0; k < n; ++k) {
            const cxd xik = x.at(i, k);
            if (xik == cxd(0.0, 0.0)) continue;
            for (std::size_t j = 0; j < n; ++j) {
                r.at(i, j) += xik * y.at(k, j);
            }
        }
    }
    return r;
}

ComplexMatrix operator*(cxd s, const ComplexMatrix& x) {
    ComplexMatrix r(x.dim);
    for (std::size_t i = 0; i < x.a.size(); ++i) r.a[i] = s * x.a[i];
    return r;
}

ComplexMatrix adjoint(const ComplexMatrix& x) {
    ComplexMatrix r(x.dim);
    for (std::size_t i = 0; i < x.dim; ++i) {
        for (std::size_t j = 0; j < x.dim; ++j) {
            r.at(i, j) = std::conj(x.at(j, i));
        }
    }
    return r;
}

cxd trace(const ComplexMatrix& x) {
    cxd t(0.0, 0.0);
    for (std::size_t i = 0; i < x.dim; ++i) t += x.at(i, i);
    return t;
}

ComplexMatrix tensor(const ComplexMatrix& x, const ComplexMatrix& y) {
    ComplexMatrix r(x.dim * y.dim);
    for (std::size_t i = 0; i < x.dim; ++i) {
        for (std::size_t j = 0; j < x.dim; ++j) {
            const cxd xij = x.at(i, j);
            if (xij == cxd(0.0, 0.0)) continue;
            for (std::size_t k = 0; k < y.dim; ++k) {
                for (std::size_t l = 0; l < y.dim; ++l) {
                    r.at(i * y.dim + k, j * y.dim + l) = xij * y.at(k, l);
                }
            }
        }
    }
    return r;
}

ComplexMatrix tensor(const ComplexMatrix& x, const ComplexMatrix& y,
                     const ComplexMatrix& z) {
    return tensor(tensor(x, y), z);
}

double hermiticity_defect(const ComplexMatrix& x) {
    double worst = 0.0;
    for (std::size_t i = 0; i < x.dim; ++i) {
        for (std::size_t j = 0; j < x.dim; ++j) {
            worst = std::max(worst, std::abs(x.at(i, j) - std::conj(x.at(j, i))));
        }
    }
    return worst;
}

EigenSystem eigh(const ComplexMatrix& x) {
    using EMat = Eigen::Matrix<cxd, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    Eigen::Map<const EMat> m(x.a.data(), static_cast<Eigen::Index>(x.dim),
                             static_cast<Eigen::Index>(x.dim));
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> solver(m);
    if (solver.info() != Eigen::Success) {
        throw Error("eigh: eigendecomposition failed to converge");
    }
    EigenSystem out;
    out.values.resize(x.dim);
    out.vectors = ComplexMatrix(x.dim);
    for (std::size_t i = 0; i < x.dim; ++i) {
        out.values[i] = solver.eigenvalues()(static_cast<Eigen::Index>(i));
        for (std::size_t j = 0; j < x.dim; ++j) {
            out.vectors.at(i, j) = solver.eigenvectors()(
                static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
        }
    }
    return out;
}

Ket::Ket(std::initializer_list<cxd> amplitudes)
    : Ket(std::vector<cxd>(amplitudes)) {}

Ket::Ket(std::vector<cxd> amplitudes) : dim(amplitudes.size()), v(std::move(amplitudes)) {
    double norm2 = 0.0;
    for (const cxd& c : v) norm2 += std::norm(c);
    if (std::abs(norm2 - 1.0) > 1e-12) {
        throw Error("ket: norm deviates from 1 by " +
                    std::to_string(std::abs(norm2 - 1.0)));
    }
}

Ket tensor(const Ket& x, const Ket& y) {
    std::vector<cxd> v(x.dim * y.dim);
    for (std::size_t i = 0; i < x.dim; ++i) {
        for (std::size_t j = 0; j < y.dim; ++j) {
            v[i * y.dim + j] = x.v[i] * y.v[j];
        }
    }
    return Ket(std::move(v));
}

Ket tensor(const Ket& x, const Ket& y, const Ket& z) {
    return tensor(tensor(x, y), z);
}

cxd inner(const Ket& x, const Ket& y) {
    if (x.dim != y.dim) throw DimensionError("inner: dimension mismatch");
    cxd s(0.0, 0.0);
    for (std::size_t i = 0; i < x.dim; ++i) s += std::conj(x.v[i]) * y.v[i];
    return s;
}

namespace {
const double inv_sqrt2 = 0.70710678118654752440;
}

Ket ket_h() { return Ket{cxd(1.0, 0.0), cxd(0.0, 0.0)}; }
Ket ket_v() { return Ket{cxd(0.0, 0.0), cxd(1.0, 0.0)}; }
Ket ket_d() { return Ket{cxd(inv_sqrt2, 0.0), cxd(inv_sqrt2, 0.0)}; }
Ket ket_a() { return Ket{cxd(inv_sqrt2, 0.0), cxd(-inv_sqrt2, 0.0)}; }

Ket ket_hhh() { return tensor(ket_h(), ket_h(), ket_h()); }
Ket ket_vvv() { return tensor(ket_v(), ket_v(), ket_v()); }

Ket phi_plus() {
    return Ket{cxd(inv_sqrt2, 0.0), cxd(0.0, 0.0), cxd(0.0, 0.0), cxd(inv_sqrt2, 0.0)};
}

Ket phi_minus() {
    return Ket{cxd(inv_sqrt2, 0.0), cxd(0.0, 0.0), cxd(0.0, 0.0), cxd(-inv_sqrt2, 0.0)};
}

Observable pauli(PauliAxis axis) {
    ComplexMatrix m(2);
    switch (axis) {
        case PauliAxis::x:
            m.at(0, 1) = 1.0;
            m.at(1, 0) = 1.0;
            break;
        case PauliAxis::y:
            m.at(0, 1) = cxd(0.0, -1.0);
            m.at(1, 0) = cxd(0.0, 1.0);
            break;
        case PauliAxis::z:
            m.at(0, 0) = 1.0;
            m.at(1, 1) = -1.0;
            break;
    }
    return Observable{std::move(m)};
}

DensityMatrix validate_physical(const ComplexMatrix& m, double tol) {
    const double herm = hermiticity_defect(m);
    if (herm > tol) {
        throw PhysicalityError(PhysicalityError::Kind::not_hermitian, herm,
                               "density matrix is not Hermitian (defect " +
                                   std::to_string(herm) + ")");
    }
    const double tr_err = std::abs(trace(m) - cxd(1.0, 0.0));
    if (tr_err > tol) {
        throw PhysicalityError(PhysicalityError::Kind::trace_not_one, tr_err,
                               "density matrix trace deviates from 1 by " +
                                   std::to_string(tr_err));
    }
    // Symmetrize before the eigenvalue check so roundoff-level asymmetry
    // does not leak through to the solver.
    ComplexMatrix h = m;
    for (std::size_t i = 0; i < h.dim; ++i) {
        for (std::size_t j = 0; j < h.dim; ++j) {
            h.at(i, j) = 0.5 * (m.at(i, j) + std::conj(m.at(j, i)));
        }
    }
    const EigenSystem es = eigh(h);
    const double min_eig = es.values.empty() ? 0.0 : es.values.front();
    if (min_eig < -tol) {
        throw PhysicalityError(PhysicalityError::Kind::negative_eigenvalue,
                               min_eig,
                               "density matrix has negative eigenvalue " +
                                   std::to_string(min_eig));
    }
    return DensityMatrix{std::move(h)};
}

ComplexMatrix outer(const Ket& x, const Ket& y) {
    if (x.dim != y.dim) throw DimensionError("outer: dimension mismatch");
    ComplexMatrix m(x.dim);
    for (std::size_t i = 0; i < x.dim; ++i) {
        for (std::size_t j = 0; j < x.dim; ++j) {
            m.at(i, j) = x.v[i] * std::conj(y.v[j]);
        }
    }
    return m;
}

DensityMatrix from_pure(const Ket& psi) { return validate_physical(outer(psi, psi)); }

double expectation(const DensityMatrix& rho, const Observable& obs) {
    require_same_dim(rho.m, obs.m, "expectation");
    cxd t(0.0, 0.0);
    for (std::size_t i = 0; i < rho.dim(); ++i) {
        for (std::size_t j = 0; j < rho.dim(); ++j) {
            t += rho.m.at(i, j) * obs.m.at(j, i);
        }
    }
    if (std::abs(t.imag()) >= 1e-10) {
        throw Error("expectation: residual imaginary part " +
                    std::to_string(t.imag()));
    }
    return t.real();
}

double fidelity_pure(const DensityMatrix& rho, const Ket& psi) {
    if (rho.dim() != psi.dim) throw DimensionError("fidelity_pure: dimension mismatch");
    cxd f(0.0, 0.0);
    for (std::size_t i = 0; i < psi.dim; ++i) {
        for (std::size_t j = 0; j < psi.dim; ++j) {
            f += std::conj(psi.v[i]) * rho.m.at(i, j) * psi.v[j];
        }
    }
    return f.real();
}

double purity(const DensityMatrix& rho) {
    double p = 0.0;
    for (std::size_t i = 0; i < rho.dim(); ++i) {
        for (std::size_t j = 0; j < rho.dim(); ++j) {
            p += (rho.m.at(i, j) * rho.m.at(j, i)).real();
        }
    }
    return p;
}

DensityMatrix partial_trace(const DensityMatrix& rho,
                            const std::vector<std::size_t>& keep) {
    const std::size_t n = qubit_count(rho.dim(), "partial_trace");
    std::vector<bool> kept(n, false);
    for (std::size_t q : keep) {
        if (q >= n) throw DimensionError("partial_trace: qubit index out of range");
        if (kept[q]) throw DimensionError("partial_trace: duplicate qubit index");
        kept[q] = true;
    }
    std::vector<std::size_t> keep_sorted, traced;
    for (std::size_t q = 0; q < n; ++q) (kept[q] ? keep_sorted : traced).push_back(q);

    const std::size_t kd = std::size_t{1} << keep_sorted.size();
    const std::size_t td = std::size_t{1} << traced.size();
    // Qubit q occupies bit (n-1-q) of the basis index (qubit 0 is most
    // significant).
    auto compose = [&](std::size_t kept_bits, std::size_t traced_bits) {
        std::size_t idx = 0;
        for (std::size_t b = 0; b < keep_sorted.size(); ++b) {
            if (kept_bits >> (keep_sorted.size() - 1 - b) & 1u) {
                idx |= std::size_t{1} << (n - 1 - keep_sorted[b]);
            }
        }
        for (std::size_t b = 0; b < traced.size(); ++b) {
            if (traced_bits >> (traced.size() - 1 - b) & 1u) {
                idx |= std::size_t{1} << (n - 1 - traced[b]);
            }
        }
        return idx;
    };

    ComplexMatrix out(kd);
    for (std::size_t i = 0; i < kd; ++i) {
        for (std::size_t j = 0; j < kd; ++j) {
            cxd s(0.0, 0.0);
            for (std::size_t t = 0; t < td; ++t) {
                s += rho.m.at(compose(i, t), compose(j, t));
            }
            out.at(i, j) = s;
        }
    }
    return validate_physical(out);
}

namespace {

std::string format_entry(const cxd& c) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "%.17g%+.17gi", c.real(), c.imag());
    return buf;
}

cxd parse_entry(const std::string& tok, std::size_t row, std::size_t col) {
    const auto fail = [&]() {
        throw DataError("density matrix entry at row " + std::to_string(row) +
                        " col " + std::to_string(col) + " is malformed: '" +
                        tok + "'");
    };
    if (tok.empty() || tok.back() != 'i') fail();
    // Split "a+bi" at the sign of b: the last '+'/'-' not preceded by an
    // exponent marker.
    std::size_t split = std::string::npos;
    for (std::size_t k = tok.size() - 1; k > 0; --k) {
        const char c = tok[k];
        if ((c == '+' || c == '-') && tok[k - 1] != 'e' && tok[k - 1] != 'E') {
            split = k;
            break;
        }
    }
    if (split == std::string::npos) fail();
    try {
        std::size_t used = 0;
        const double re = std::stod(tok.substr(0, split), &used);
        if (used != split) fail();
        const std::string imag_part = tok.substr(split, tok.size() - split - 1);
        const double im = std::stod(imag_part, &used);
        if (used != imag_part.size()) fail();
        return cxd(re, im);
    } catch (const std::logic_error&) {
        fail();
    }
    return cxd();
}

}  // namespace

void write_density(std::ostream& out, const DensityMatrix& rho) {
    out << "dim=" << rho.dim() << "\n";
    for (std::size_t i = 0; i < rho.dim(); ++i) {
        for (std::size_t j = 0; j < rho.dim(); ++j) {
            if (j) out << ' ';
            out << format_entry(rho.m.at(i, j));
        }
        out << "\n";
    }
}

std::string write_density(const DensityMatrix& rho) {
    std::ostringstream out;
    write_density(out, rho);
    return out.str();
}

void write_density_file(const std::string& path, const DensityMatrix& rho) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot open '" + path + "' for writing");
    write_density(out, rho);
}

DensityMatrix read_density(std::istream& in) {
    std::string header;
    if (!std::getline(in, header) || header.rfind("dim=", 0) != 0) {
        throw DataError("density matrix file must start with a dim=<n> line");
    }
    std::size_t dim = 0;
    try {
        dim = std::stoul(header.substr(4));
    } catch (const std::logic_error&) {
        throw DataError("bad dimension in header line '" + header + "'");
    }
    if (dim == 0 || dim > 64) {
        throw DataError("unsupported density matrix dimension " + std::to_string(dim));
    }
    ComplexMatrix m(dim);
    for (std::size_t i = 0; i < dim; ++i) {
        std::string line;
        if (!std::getline(in, line)) {
            throw DataError("density matrix file truncated at row " + std::to_string(i));
        }
        std::istringstream row(line);
        for (std::size_t j = 0; j < dim; ++j) {
            std::string tok;
            if (!(row >> tok)) {
                throw DataError("density matrix row " + std::to_string(i) +
                                " has fewer than " + std::to_string(dim) + " entries");
            }
            m.at(i, j) = parse_entry(tok, i, j);
        }
    }
    return validate_physical(m, 1e-9);
}

DensityMatrix read_density(const std::string& text) {
    std::istringstream in(text);
    return read_density(in);
}

DensityMatrix read_density_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open '" + path + "' for reading");
    return read_density(in);
}

}  // namespace cspdc::qcore

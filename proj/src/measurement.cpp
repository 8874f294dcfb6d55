#include "cspdc/measurement.hpp"

#include <bit>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>

#include "cspdc/errors.hpp"

namespace cspdc::measurement {

using qcore::ComplexMatrix;
using qcore::cxd;

Setting setting_x() { return {std::numbers::pi / 2, 0.0}; }
Setting setting_y() { return {std::numbers::pi / 2, std::numbers::pi / 2}; }
Setting setting_z() { return {0.0, 0.0}; }

Setting setting_axis(PauliAxis axis) {
    switch (axis) {
        case PauliAxis::x: return setting_x();
        case PauliAxis::y: return setting_y();
        case PauliAxis::z: return setting_z();
    }
    throw ConfigError("unknown pauli axis");
}

Setting equatorial(double alpha) { return {std::numbers::pi / 2, alpha}; }

std::array<double, 3> bloch_vector(const Setting& s) {
    return {std::sin(s.theta) * std::cos(s.phi),
            std::sin(s.theta) * std::sin(s.phi), std::cos(s.theta)};
}

Setting setting_from_bloch(const std::array<double, 3>& n) {
    const double norm =
        std::sqrt(n[0] * n[0] + n[1] * n[1] + n[2] * n[2]);
    if (std::abs(norm - 1.0) > 1e-12) {
        throw ConfigError("bloch vector must be unit length, got norm " +
                          std::to_string(norm));
    }
    Setting s;
    s.theta = std::acos(std::clamp(n[2], -1.0, 1.0));
    s.phi = (std::abs(n[0]) + std::abs(n[1]) < 1e-15)
                ? 0.0
                : std::atan2(n[1], n[0]);
    return s;
}

Observable setting_observable(const Setting& s) {
    const double st = std::sin(s.theta), ct = std::cos(s.theta);
    ComplexMatrix m(2);
    m.at(0, 0) = cxd(ct, 0.0);
    m.at(0, 1) = st * std::exp(cxd(0.0, -s.phi));
    m.at(1, 0) = st * std::exp(cxd(0.0, s.phi));
    m.at(1, 1) = cxd(-ct, 0.0);
    return Observable{std::move(m)};
}

Ket setting_eigenket(const Setting& s, int sign) {
    if (sign != 1 && sign != -1) {
        throw ConfigError("eigenket sign must be +1 or -1");
    }
    const double half = s.theta / 2.0;
    std::vector<cxd> v(2);
    if (sign == 1) {
        v[0] = cxd(std::cos(half), 0.0);
        v[1] = std::sin(half) * std::exp(cxd(0.0, s.phi));
    } else {
        v[0] = cxd(std::sin(half), 0.0);
        v[1] = -std::cos(half) * std::exp(cxd(0.0, s.phi));
    }
    return Ket(std::move(v));
}

bool setting_close(const Setting& a, const Setting& b, double tol) {
    return std::abs(a.theta - b.theta) <= tol && std::abs(a.phi - b.phi) <= tol;
}

std::vector<double> outcome_probabilities(const DensityMatrix& rho,
                                          const std::vector<Setting>& settings) {
    const std::size_t n = settings.size();
    if (n == 0 || rho.dim() != (std::size_t{1} << n)) {
        throw DimensionError("outcome_probabilities: state dimension must be "
                             "2^(number of settings)");
    }
    // Precompute the per-mode eigenkets once.
    std::vector<std::array<Ket, 2>> eig;
    eig.reserve(n);
    for (const Setting& s : settings) {
        eig.push_back({setting_eigenket(s, 1), setting_eigenket(s, -1)});
    }
    const std::size_t patterns = std::size_t{1} << n;
    std::vector<double> probs(patterns, 0.0);
    std::vector<cxd> bra(rho.dim());
    for (std::size_t pat = 0; pat < patterns; ++pat) {
        // Joint eigenvector amplitude at basis index b: product over modes
        // of the chosen eigenket's component selected by b's bit.
        for (std::size_t b = 0; b < rho.dim(); ++b) {
            cxd amp(1.0, 0.0);
            for (std::size_t q = 0; q < n; ++q) {
                const std::size_t out_bit = (pat >> (n - 1 - q)) & 1u;
                const std::size_t basis_bit = (b >> (n - 1 - q)) & 1u;
                amp *= eig[q][out_bit].v[basis_bit];
            }
            bra[b] = amp;
        }
        cxd p(0.0, 0.0);
        for (std::size_t i = 0; i < rho.dim(); ++i) {
            for (std::size_t j = 0; j < rho.dim(); ++j) {
                p += std::conj(bra[i]) * rho.m.at(i, j) * bra[j];
            }
        }
        probs[pat] = p.real();
    }
    // Guard against roundoff just outside [0, 1].
    double sum = 0.0;
    for (double& p : probs) {
        if (p < -1e-10) {
            throw DataError("negative outcome probability " + std::to_string(p));
        }
        if (p < 0.0) p = 0.0;
        sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-9) {
        throw DataError("outcome probabilities sum to " + std::to_string(sum));
    }
    for (double& p : probs) p /= sum;
    return probs;
}

int outcome_parity(std::size_t outcome_bits, std::size_t n_modes) {
    const std::size_t mask = (std::size_t{1} << n_modes) - 1;
    return (std::popcount(outcome_bits & mask) % 2 == 0) ? 1 : -1;
}

namespace {

std::size_t modes_from_counts(const std::vector<std::uint64_t>& counts) {
    std::size_t n = 0;
    while ((std::size_t{1} << n) < counts.size()) ++n;
    if ((std::size_t{1} << n) != counts.size() || counts.empty()) {
        throw DataError("count vector length must be a power of two");
    }
    return n;
}

}  // namespace

double correlation_from_counts(const std::vector<std::uint64_t>& counts) {
    const std::size_t n = modes_from_counts(counts);
    std::uint64_t total = 0;
    double signed_sum = 0.0;
    for (std::size_t s = 0; s < counts.size(); ++s) {
        total += counts[s];
        signed_sum += static_cast<double>(outcome_parity(s, n)) *
                      static_cast<double>(counts[s]);
    }
    if (total == 0) throw DataError("no counts in correlation estimate");
    return signed_sum / static_cast<double>(total);
}

double correlation_sigma(const std::vector<std::uint64_t>& counts) {
    std::uint64_t total = 0;
    for (std::uint64_t c : counts) total += c;
    if (total == 0) throw DataError("no counts in correlation estimate");
    const double e = correlation_from_counts(counts);
    const double var = std::max(0.0, 1.0 - e * e) / static_cast<double>(total);
    return std::sqrt(var);
}

std::vector<std::vector<Setting>> tomography_settings(std::size_t n_qubits) {
    if (n_qubits == 0 || n_qubits > 10) {
        throw ConfigError("tomography_settings: unsupported qubit count");
    }
    std::size_t total = 1;
    for (std::size_t q = 0; q < n_qubits; ++q) total *= 3;
    const std::array<Setting, 3> axes{setting_x(), setting_y(), setting_z()};
    std::vector<std::vector<Setting>> out;
    out.reserve(total);
    for (std::size_t idx = 0; idx < total; ++idx) {
        std::vector<Setting> row(n_qubits);
        std::size_t rem = idx;
        for (std::size_t q = n_qubits; q-- > 0;) {
            row[q] = axes[rem % 3];
            rem /= 3;
        }
        out.push_back(std::move(row));
    }
    return out;
}

std::vector<std::uint8_t> balanced_subsettings(std::size_t n_modes) {
    if (n_modes == 0 || n_modes > 8) {
        throw ConfigError("balanced_subsettings: unsupported mode count");
    }
    std::vector<std::uint8_t> masks(std::size_t{1} << n_modes);
    for (std::size_t k = 0; k < masks.size(); ++k) {
        masks[k] = static_cast<std::uint8_t>(k);
    }
    return masks;
}

std::uint8_t slice_mask(std::size_t slice_index) {
    return static_cast<std::uint8_t>(slice_index % kBalanceSlices);
}

std::size_t masked_outcome(std::size_t outcome_bits, std::uint8_t mask) {
    return outcome_bits ^ static_cast<std::size_t>(mask);
}

std::uint64_t CountTable::total() const {
    std::uint64_t t = 0;
    for (std::uint64_t c : counts) t += c;
    return t;
}

std::size_t find_table(const std::vector<CountTable>& tables,
                       const std::vector<Setting>& settings, double tol) {
    for (std::size_t r = 0; r < tables.size(); ++r) {
        if (tables[r].settings.size() != settings.size()) continue;
        bool all = true;
        for (std::size_t q = 0; q < settings.size(); ++q) {
            if (!setting_close(tables[r].settings[q], settings[q], tol)) {
                all = false;
                break;
            }
        }
        if (all) return r;
    }
    return table_npos;
}

namespace {

std::string outcome_label(std::size_t pattern, std::size_t n) {
    std::string s(n, '+');
    for (std::size_t q = 0; q < n; ++q) {
        if ((pattern >> (n - 1 - q)) & 1u) s[q] = '-';
    }
    return s;
}

}  // namespace

void write_counts_csv(const std::string& path, const CountTable& table) {
    const std::size_t n = table.settings.size();
    if (n == 0 || table.counts.size() != (std::size_t{1} << n)) {
        throw DataError("count table shape is inconsistent");
    }
    std::ofstream out(path);
    if (!out) throw DataError("cannot open '" + path + "' for writing");
    out << "outcome,count\n";
    for (std::size_t s = 0; s < table.counts.size(); ++s) {
        out << outcome_label(s, n) << "," << table.counts[s] << "\n";
    }
    if (!out) throw DataError("failed writing '" + path + "'");
}

CountTable read_counts_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open '" + path + "' for reading");
    std::string header;
    if (!std::getline(in, header) || header != "outcome,count") {
        throw DataError("count csv '" + path +
                        "' must start with header 'outcome,count'");
    }
    std::vector<std::pair<std::string, std::uint64_t>> rows;
    std::string line;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        const auto comma = line.find(',');
        if (comma == std::string::npos) {
            throw DataError("count csv line " + std::to_string(lineno) +
                            " lacks a comma");
        }
        const std::string outcome = line.substr(0, comma);
        const std::string count = line.substr(comma + 1);
        if (outcome.empty() ||
            outcome.find_first_not_of("+-") != std::string::npos) {
            throw DataError("count csv line " + std::to_string(lineno) +
                            " has bad outcome '" + outcome + "'");
        }
        if (count.empty() ||
            count.find_first_not_of("0123456789") != std::string::npos) {
            throw DataError("count csv line " + std::to_string(lineno) +
                            " has bad count '" + count + "'");
        }
        rows.emplace_back(outcome, std::stoull(count));
    }
    if (rows.empty()) throw DataError("count csv '" + path + "' has no rows");
    const std::size_t n = rows.front().first.size();
    const std::size_t patterns = std::size_t{1} << n;
    if (rows.size() != patterns) {
        throw DataError("count csv '" + path + "' has " +
                        std::to_string(rows.size()) + " rows, expected " +
                        std::to_string(patterns));
    }
    CountTable table;
    table.counts.assign(patterns, 0);
    std::vector<bool> seen(patterns, false);
    for (const auto& [outcome, count] : rows) {
        if (outcome.size() != n) {
            throw DataError("count csv '" + path +
                            "' mixes outcome pattern lengths");
        }
        std::size_t pat = 0;
        for (std::size_t q = 0; q < n; ++q) {
            if (outcome[q] == '-') pat |= std::size_t{1} << (n - 1 - q);
        }
        if (seen[pat]) {
            throw DataError("count csv '" + path + "' repeats outcome '" +
                            outcome + "'");
        }
        seen[pat] = true;
        table.counts[pat] = count;
    }
    return table;
}

}  // namespace cspdc::measurement

#include "cspdc/tomography.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "cspdc/errors.hpp"
#include "cspdc/rng.hpp"

namespace cspdc::tomography {

namespace {

using measurement::Setting;
using qcore::ComplexMatrix;
using qcore::cxd;
using qcore::DensityMatrix;
using qcore::Ket;

int axis_index(const Setting& s) {
    if (measurement::setting_close(s, measurement::setting_x())) return 0;
    if (measurement::setting_close(s, measurement::setting_y())) return 1;
    if (measurement::setting_close(s, measurement::setting_z())) return 2;
    return -1;
}

std::string format_angle(double v) {
    std::ostringstream out;
    out << std::setprecision(17) << v;
    return out.str();
}

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> fields;
    std::string field;
    std::istringstream in(line);
    while (std::getline(in, field, ',')) fields.push_back(field);
    if (!line.empty() && line.back() == ',') fields.push_back("");
    return fields;
}

double parse_angle(const std::string& token, std::size_t line_no) {
    std::size_t pos = 0;
    double v = 0.0;
    try {
        v = std::stod(token, &pos);
    } catch (const std::exception&) {
        pos = 0;
    }
    if (pos != token.size() || token.empty() || !std::isfinite(v)) {
        throw DataError("manifest.csv line " + std::to_string(line_no) +
                        ": bad angle '" + token + "'");
    }
    return v;
}

void require_counts(const TomographyDataset& data) {
    for (std::size_t i = 0; i < data.tables.size(); ++i) {
        if (data.tables[i].total() == 0) {
            throw DataError("count table " + std::to_string(i) +
                            " has no events");
        }
    }
}

// Joint eigenkets of one table's analyzer settings, indexed by outcome
// pattern (mode 0 most significant, clear bit = +1 outcome).
std::vector<Ket> outcome_kets(const std::vector<Setting>& settings) {
    const std::size_t n = settings.size();
    const std::size_t d = std::size_t{1} << n;
    std::vector<Ket> kets;
    kets.reserve(d);
    for (std::size_t k = 0; k < d; ++k) {
        Ket psi = measurement::setting_eigenket(
            settings[0], ((k >> (n - 1)) & 1) ? -1 : +1);
        for (std::size_t m = 1; m < n; ++m) {
            const int sign = ((k >> (n - 1 - m)) & 1) ? -1 : +1;
            psi = qcore::tensor(psi,
                                measurement::setting_eigenket(settings[m], sign));
        }
        kets.push_back(std::move(psi));
    }
    return kets;
}

double quadratic_form(const Ket& psi, const ComplexMatrix& m) {
    cxd acc(0.0, 0.0);
    for (std::size_t i = 0; i < m.dim; ++i) {
        cxd row(0.0, 0.0);
        for (std::size_t j = 0; j < m.dim; ++j) {
            row += m.at(i, j) * psi.v[j];
        }
        acc += std::conj(psi.v[i]) * row;
    }
    return acc.real();
}

void add_scaled_outer(ComplexMatrix& m, const Ket& psi, double w) {
    for (std::size_t i = 0; i < m.dim; ++i) {
        for (std::size_t j = 0; j < m.dim; ++j) {
            m.at(i, j) += w * psi.v[i] * std::conj(psi.v[j]);
        }
    }
}

}  // namespace

std::size_t TomographyDataset::n_modes() const {
    if (tables.empty()) throw DataError("tomography dataset has no tables");
    const std::size_t n = tables.front().settings.size();
    if (n == 0) throw DataError("count table 0 has no settings");
    for (std::size_t i = 0; i < tables.size(); ++i) {
        const auto& t = tables[i];
        if (t.settings.size() != n ||
            t.counts.size() != (std::size_t{1} << n)) {
            throw DataError("count table " + std::to_string(i) +
                            " does not match the dataset mode count");
        }
    }
    return n;
}

void write_dataset(const std::string& dir, const TomographyDataset& data) {
    const std::size_t n = data.n_modes();
    std::filesystem::create_directories(dir);
    std::ofstream out(dir + "/manifest.csv");
    if (!out) throw DataError("cannot write " + dir + "/manifest.csv");
    out << "file";
    for (std::size_t i = 0; i < n; ++i) {
        out << ",theta" << i << ",phi" << i;
    }
    out << "\n";
    for (std::size_t t = 0; t < data.tables.size(); ++t) {
        std::ostringstream name;
        name << "setting_" << std::setw(3) << std::setfill('0') << t
             << ".csv";
        out << name.str();
        for (const Setting& s : data.tables[t].settings) {
            out << ',' << format_angle(s.theta) << ',' << format_angle(s.phi);
        }
        out << "\n";
        measurement::write_counts_csv(dir + "/" + name.str(),
                                      data.tables[t]);
    }
    if (!out) throw DataError("failed writing " + dir + "/manifest.csv");
}

TomographyDataset read_dataset(const std::string& dir) {
    const std::string manifest = dir + "/manifest.csv";
    std::ifstream in(manifest);
    if (!in) throw DataError("cannot open " + manifest);
    std::string line;
    if (!std::getline(in, line)) {
        throw DataError(manifest + ": missing header");
    }
    const auto header = split_csv(line);
    if (header.size() < 3 || header[0] != "file" ||
        header.size() % 2 == 0) {
        throw DataError(manifest + ": bad header '" + line + "'");
    }
    const std::size_t n = (header.size() - 1) / 2;
    for (std::size_t i = 0; i < n; ++i) {
        if (header[1 + 2 * i] != "theta" + std::to_string(i) ||
            header[2 + 2 * i] != "phi" + std::to_string(i)) {
            throw DataError(manifest + ": bad header '" + line + "'");
        }
    }

    TomographyDataset data;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto fields = split_csv(line);
        if (fields.size() != 1 + 2 * n) {
            throw DataError("manifest.csv line " + std::to_string(line_no) +
                            ": expected " + std::to_string(1 + 2 * n) +
                            " fields, got " + std::to_string(fields.size()));
        }
        const std::string& file = fields[0];
        if (file.empty() || file.find('/') != std::string::npos ||
            file.find('\\') != std::string::npos) {
            throw DataError("manifest.csv line " + std::to_string(line_no) +
                            ": bad file name '" + file + "'");
        }
        CountTable table = measurement::read_counts_csv(dir + "/" + file);
        if (table.counts.size() != (std::size_t{1} << n)) {
            throw DataError(dir + "/" + file + ": holds " +
                            std::to_string(table.counts.size()) +
                            " outcomes, manifest implies " +
                            std::to_string(std::size_t{1} << n));
        }
        for (std::size_t i = 0; i < n; ++i) {
            Setting s;
            s.theta = parse_angle(fields[1 + 2 * i], line_no);
            s.phi = parse_angle(fields[2 + 2 * i], line_no);
            table.settings.push_back(s);
        }
        data.tables.push_back(std::move(table));
    }
    if (data.tables.empty()) {
        throw DataError(manifest + ": lists no tables");
    }
    return data;
}

qcore::ComplexMatrix linear_inversion(const TomographyDataset& data) {
    const std::size_t n = data.n_modes();
    const std::size_t d = std::size_t{1} << n;
    require_counts(data);

    std::vector<std::array<int, 8>> table_axes;
    for (std::size_t t = 0; t < data.tables.size(); ++t) {
        std::array<int, 8> axes{};
        for (std::size_t m = 0; m < n; ++m) {
            axes[m] = axis_index(data.tables[t].settings[m]);
            if (axes[m] < 0) {
                throw DataError("count table " + std::to_string(t) +
                                " uses a non-axis setting; linear inversion "
                                "needs x, y or z analyzers");
            }
        }
        table_axes.push_back(axes);
    }

    const ComplexMatrix sigma[4] = {
        qcore::identity(2), qcore::pauli(qcore::PauliAxis::x).m,
        qcore::pauli(qcore::PauliAxis::y).m,
        qcore::pauli(qcore::PauliAxis::z).m};

    ComplexMatrix rho = qcore::zero(d);
    std::size_t codes = 1;
    for (std::size_t i = 0; i < n; ++i) codes *= 4;
    for (std::size_t code = 0; code < codes; ++code) {
        std::array<int, 8> digit{};
        std::size_t rest = code;
        for (std::size_t m = n; m-- > 0;) {
            digit[m] = static_cast<int>(rest % 4);
            rest /= 4;
        }

        double mean = 1.0;
        if (code != 0) {
            double sum = 0.0;
            std::size_t matches = 0;
            for (std::size_t t = 0; t < data.tables.size(); ++t) {
                bool covers = true;
                for (std::size_t m = 0; m < n; ++m) {
                    if (digit[m] != 0 && table_axes[t][m] != digit[m] - 1) {
                        covers = false;
                        break;
                    }
                }
                if (!covers) continue;
                const auto& counts = data.tables[t].counts;
                const double total =
                    static_cast<double>(data.tables[t].total());
                double e = 0.0;
                for (std::size_t k = 0; k < counts.size(); ++k) {
                    int sign = 1;
                    for (std::size_t m = 0; m < n; ++m) {
                        if (digit[m] != 0 && ((k >> (n - 1 - m)) & 1)) {
                            sign = -sign;
                        }
                    }
                    e += sign * static_cast<double>(counts[k]) / total;
                }
                sum += e;
                ++matches;
            }
            if (matches == 0) {
                throw DataError(
                    "dataset never measures Pauli string code " +
                    std::to_string(code));
            }
            mean = sum / static_cast<double>(matches);
        }

        ComplexMatrix op = sigma[digit[0]];
        for (std::size_t m = 1; m < n; ++m) {
            op = qcore::tensor(op, sigma[digit[m]]);
        }
        rho = rho + cxd(mean / static_cast<double>(d), 0.0) * op;
    }
    return rho;
}

qcore::DensityMatrix project_physical(const qcore::ComplexMatrix& m) {
    if (m.dim == 0) throw DimensionError("cannot project an empty matrix");
    ComplexMatrix h = cxd(0.5, 0.0) * (m + qcore::adjoint(m));
    const auto eig = qcore::eigh(h);
    double total = 0.0;
    for (double v : eig.values) total += std::max(v, 0.0);
    if (total <= 0.0) {
        throw DataError("projection collapsed: no positive spectral weight");
    }
    ComplexMatrix out = qcore::zero(m.dim);
    for (std::size_t i = 0; i < m.dim; ++i) {
        const double w = std::max(eig.values[i], 0.0) / total;
        if (w == 0.0) continue;
        for (std::size_t r = 0; r < m.dim; ++r) {
            for (std::size_t c = 0; c < m.dim; ++c) {
                out.at(r, c) += w * eig.vectors.at(r, i) *
                                std::conj(eig.vectors.at(c, i));
            }
        }
    }
    return qcore::validate_physical(out, 1e-8);
}

double log_likelihood(const TomographyDataset& data,
                      const qcore::DensityMatrix& rho,
                      double min_probability) {
    data.n_modes();
    require_counts(data);
    double ll = 0.0;
    for (const CountTable& table : data.tables) {
        const auto probs =
            measurement::outcome_probabilities(rho, table.settings);
        for (std::size_t k = 0; k < table.counts.size(); ++k) {
            if (table.counts[k] == 0) continue;
            ll += static_cast<double>(table.counts[k]) *
                  std::log(std::max(probs[k], min_probability));
        }
    }
    return ll;
}

ReconstructionResult mle_reconstruct(const TomographyDataset& data,
                                     const ReconstructionOptions& options) {
    const std::size_t n = data.n_modes();
    const std::size_t d = std::size_t{1} << n;
    require_counts(data);
    if (options.max_iterations == 0 || options.tolerance <= 0.0 ||
        options.min_probability <= 0.0) {
        throw ConfigError("reconstruction options must be positive");
    }

    struct Term {
        Ket psi;
        double weight;
    };
    std::vector<Term> terms;
    double total = 0.0;
    for (const CountTable& table : data.tables) {
        const auto kets = outcome_kets(table.settings);
        for (std::size_t k = 0; k < table.counts.size(); ++k) {
            if (table.counts[k] == 0) continue;
            const double c = static_cast<double>(table.counts[k]);
            terms.push_back({kets[k], c});
            total += c;
        }
    }

    ComplexMatrix rho = cxd(1.0 / static_cast<double>(d), 0.0) *
                        qcore::identity(d);
    std::vector<double> probs(terms.size(), 0.0);

    auto refresh = [&](const ComplexMatrix& m) {
        double ll = 0.0;
        for (std::size_t j = 0; j < terms.size(); ++j) {
            probs[j] = std::max(quadratic_form(terms[j].psi, m),
                                options.min_probability);
            ll += terms[j].weight * std::log(probs[j]);
        }
        return ll;
    };

    double ll = refresh(rho);
    double step = 1.0;
    std::size_t iter = 0;
    bool converged = false;
    while (iter < options.max_iterations) {
        ++iter;
        ComplexMatrix r = qcore::zero(d);
        for (std::size_t j = 0; j < terms.size(); ++j) {
            add_scaled_outer(r, terms[j].psi,
                             terms[j].weight / (total * probs[j]));
        }

        double ll_new = ll;
        ComplexMatrix accepted = rho;
        bool improved = false;
        for (int halvings = 0; halvings < 60; ++halvings) {
            ComplexMatrix t = qcore::identity(d) + cxd(step, 0.0) * r;
            ComplexMatrix candidate = t * rho * t;
            const double tr = qcore::trace(candidate).real();
            candidate = cxd(1.0 / tr, 0.0) * candidate;
            const double ll_candidate = refresh(candidate);
            if (ll_candidate >= ll) {
                accepted = candidate;
                ll_new = ll_candidate;
                improved = true;
                break;
            }
            step *= 0.5;
        }
        if (!improved) {
            refresh(rho);
            converged = true;
            break;
        }
        rho = accepted;
        step = std::min(1.0, step * 2.0);
        if (std::abs(ll_new - ll) <=
            options.tolerance * (1.0 + std::abs(ll_new))) {
            ll = ll_new;
            converged = true;
            break;
        }
        ll = ll_new;
    }

    ReconstructionResult result;
    result.rho = qcore::validate_physical(rho, 1e-8);
    result.log_likelihood = ll;
    result.iterations = iter;
    result.converged = converged;
    return result;
}

double state_fidelity(const qcore::DensityMatrix& a,
                      const qcore::DensityMatrix& b) {
    if (a.dim() != b.dim()) {
        throw DimensionError("state fidelity needs equal dimensions");
    }
    const auto ea = qcore::eigh(a.m);
    ComplexMatrix root = qcore::zero(a.dim());
    for (std::size_t i = 0; i < a.dim(); ++i) {
        const double w = std::sqrt(std::max(ea.values[i], 0.0));
        if (w == 0.0) continue;
        for (std::size_t r = 0; r < a.dim(); ++r) {
            for (std::size_t c = 0; c < a.dim(); ++c) {
                root.at(r, c) += w * ea.vectors.at(r, i) *
                                 std::conj(ea.vectors.at(c, i));
            }
        }
    }
    const ComplexMatrix inner = root * b.m * root;
    const auto em = qcore::eigh(inner);
    double sum = 0.0;
    for (double v : em.values) sum += std::sqrt(std::max(v, 0.0));
    return sum * sum;
}

double trace_distance(const qcore::ComplexMatrix& a,
                      const qcore::ComplexMatrix& b) {
    const ComplexMatrix diff = a - b;
    if (qcore::hermiticity_defect(diff) > 1e-8) {
        throw DataError("trace distance needs Hermitian operands");
    }
    const auto eig = qcore::eigh(diff);
    double sum = 0.0;
    for (double v : eig.values) sum += std::abs(v);
    return 0.5 * sum;
}

BootstrapSummary bootstrap(const TomographyDataset& data,
                           const qcore::Ket& reference,
                           std::size_t n_samples, std::uint64_t seed,
                           const ReconstructionOptions& options) {
    data.n_modes();
    require_counts(data);
    if (n_samples < 2) {
        throw ConfigError("bootstrap needs at least two samples");
    }

    std::vector<double> fidelities;
    std::vector<double> purities;
    for (std::size_t s = 0; s < n_samples; ++s) {
        Rng rng = Rng::substream(seed, s);
        TomographyDataset resampled = data;
        for (CountTable& table : resampled.tables) {
            std::vector<double> cumulative(table.counts.size());
            double acc = 0.0;
            for (std::size_t k = 0; k < table.counts.size(); ++k) {
                acc += static_cast<double>(table.counts[k]);
                cumulative[k] = acc;
            }
            const std::uint64_t total_count = table.total();
            std::vector<std::uint64_t> redrawn(table.counts.size(), 0);
            for (std::uint64_t i = 0; i < total_count; ++i) {
                const double u = rng.uniform() * acc;
                const auto it = std::upper_bound(cumulative.begin(),
                                                 cumulative.end(), u);
                const std::size_t k = std::min(
                    static_cast<std::size_t>(it - cumulative.begin()),
                    table.counts.size() - 1);
                ++redrawn[k];
            }
            table.counts = std::move(redrawn);
        }
        const auto fit = mle_reconstruct(resampled, options);
        fidelities.push_back(qcore::fidelity_pure(fit.rho, reference));
        purities.push_back(qcore::purity(fit.rho));
    }

    auto summarize = [&](const std::vector<double>& xs, double& mean,
                         double& se) {
        double m = 0.0;
        for (double x : xs) m += x;
        m /= static_cast<double>(xs.size());
        double var = 0.0;
        for (double x : xs) var += (x - m) * (x - m);
        var /= static_cast<double>(xs.size() - 1);
        mean = m;
        se = std::sqrt(var);
    };

    BootstrapSummary summary;
    summary.samples = n_samples;
    summarize(fidelities, summary.fidelity_mean, summary.fidelity_se);
    summarize(purities, summary.purity_mean, summary.purity_se);
    return summary;
}

}  // namespace cspdc::tomography

#include "cspdc/pipelines.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "cspdc/analysis.hpp"
#include "cspdc/coincidence.hpp"
#include "cspdc/config.hpp"
#include "cspdc/errors.hpp"
#include "cspdc/measurement.hpp"
#include "cspdc/qcore.hpp"
#include "cspdc/statemodel.hpp"
#include "cspdc/tomography.hpp"
#include "cspdc/ttsim.hpp"

namespace cspdc::pipelines {

namespace {

namespace fs = std::filesystem;
using measurement::CountTable;
using measurement::Setting;

const std::map<std::string, std::vector<std::string>> kSchema = {
    {"experiment",
     {"triplet_rate", "pair1_rate", "eta1", "eta2", "eta3", "dark_rate",
      "jitter_sigma_ps", "channel_delay_ps", "channel_eff", "tick_ps",
      "duration_s"}},
    {"noise", {"phase", "p", "gamma", "target_fidelity", "target_purity"}},
    {"coincidence",
     {"record_window_ps", "coincidence_window_ps", "delay_correction_ps"}},
    {"dispersion",
     {"center_wavelength_nm", "fwhm_bandwidth_nm", "gvd_ps2_per_m",
      "base_visibility", "initial_mismatch_m", "half_range_m", "points"}},
    {"run",
     {"seed", "time_scale", "setting", "phase_points", "betas_deg",
      "bootstrap_samples", "balanced_slices", "herald_tomography"}},
};

// One experiment bench: parsed config, scaled simulator settings, the
// modeled state and the coincidence windows.
struct Bench {
    config::Config cfg;
    std::string out;
    std::uint64_t seed = 0;
    double time_scale = 1.0;
    double duration_s = 0.0;  // unscaled wall-clock per acquisition
    ttsim::ExperimentConfig sim;
    coincidence::CoincidenceParams window;
    bool balanced = true;
    double phase = 0.0;
    double noise_p = 0.0;
    double noise_gamma = 1.0;
    qcore::DensityMatrix rho;
    bool corrections_configured = false;
};

std::array<double, 6> channel_array(const config::Config& cfg,
                                    const std::string& key,
                                    const std::array<double, 6>& fallback) {
    if (!cfg.has("experiment", key)) return fallback;
    const auto values = cfg.get_double_list("experiment", key);
    std::array<double, 6> out{};
    if (values.size() == 1) {
        out.fill(values[0]);
    } else if (values.size() == 6) {
        std::copy(values.begin(), values.end(), out.begin());
    } else {
        throw ConfigError(cfg.origin + ": experiment." + key +
                          " needs 1 or 6 entries, got " +
                          std::to_string(values.size()));
    }
    return out;
}

void prepare_out_dir(const std::string& out, bool force) {
    if (out.empty()) throw ConfigError("output directory must be given");
    if (fs::exists(out)) {
        if (!force) {
            throw ConfigError("output directory " + out +
                              " exists; pass --force to reuse it");
        }
    } else {
        fs::create_directories(out);
    }
}

Bench make_bench(const RunOptions& options, const std::string& command,
                 bool needs_state) {
    Bench b;
    b.cfg = config::load_config(options.config_path);
    config::enforce_schema(b.cfg, kSchema);

    b.seed = options.seed_set
                 ? options.seed
                 : static_cast<std::uint64_t>(
                       b.cfg.get_int_or("run", "seed", 0));
    b.time_scale =
        options.paper_exact ? 1.0
                            : b.cfg.get_double_or("run", "time_scale", 1.0);
    if (!(b.time_scale > 0.0)) {
        throw ConfigError(b.cfg.origin + ": run.time_scale must be > 0");
    }
    b.balanced = b.cfg.get_bool_or("run", "balanced_slices", true);

    b.duration_s = b.cfg.get_double_or("experiment", "duration_s", 0.0);
    b.sim.triplet_rate =
        b.cfg.get_double_or("experiment", "triplet_rate", 0.0) *
        b.time_scale;
    b.sim.pair1_rate =
        b.cfg.get_double_or("experiment", "pair1_rate", 0.0) * b.time_scale;
    b.sim.eta1 = b.cfg.get_double_or("experiment", "eta1", 0.23);
    b.sim.eta2 = b.cfg.get_double_or("experiment", "eta2", 0.30);
    b.sim.eta3 = b.cfg.get_double_or("experiment", "eta3", 0.30);
    b.sim.dark_rate = channel_array(b.cfg, "dark_rate", {});
    b.sim.jitter_sigma = channel_array(b.cfg, "jitter_sigma_ps",
                                       {350, 350, 80, 80, 80, 80});
    b.sim.channel_delay = channel_array(b.cfg, "channel_delay_ps",
                                        {0, 0, 0, 0, 7000, 7000});
    b.sim.channel_eff = channel_array(b.cfg, "channel_eff",
                                      {1, 1, 1, 1, 1, 1});
    b.sim.tick = b.cfg.get_double_or("experiment", "tick_ps", 156.25);
    b.sim.duration = b.duration_s / b.time_scale;
    b.sim.seed = b.seed;

    b.window.record_window =
        b.cfg.get_double_or("coincidence", "record_window_ps", 15000.0);
    b.window.coincidence_window = b.cfg.get_double_or(
        "coincidence", "coincidence_window_ps", 1250.0);
    b.sim.record_window = b.window.record_window;
    if (b.cfg.has("coincidence", "delay_correction_ps")) {
        const auto values =
            b.cfg.get_double_list("coincidence", "delay_correction_ps");
        if (values.size() != 6) {
            throw ConfigError(b.cfg.origin +
                              ": coincidence.delay_correction_ps needs 6 "
                              "entries");
        }
        std::copy(values.begin(), values.end(),
                  b.window.delay_correction.begin());
        b.corrections_configured = true;
    }
    coincidence::validate(b.window);

    if (needs_state) {
        b.phase = b.cfg.get_double_or("noise", "phase", 0.0);
        const bool direct =
            b.cfg.has("noise", "p") || b.cfg.has("noise", "gamma");
        const bool targeted = b.cfg.has("noise", "target_fidelity") ||
                              b.cfg.has("noise", "target_purity");
        if (direct && targeted) {
            throw ConfigError(b.cfg.origin +
                              ": give either noise.p/gamma or the "
                              "target pair, not both");
        }
        if (targeted) {
            const auto fit = statemodel::calibrate_noise(
                b.cfg.get_double("noise", "target_fidelity"),
                b.cfg.get_double("noise", "target_purity"));
            b.noise_p = fit.p;
            b.noise_gamma = fit.gamma;
        } else {
            b.noise_p = b.cfg.get_double_or("noise", "p", 0.0);
            b.noise_gamma = b.cfg.get_double_or("noise", "gamma", 1.0);
        }
        b.rho = statemodel::apply_noise(
            qcore::from_pure(statemodel::make_ghz(b.phase)), b.noise_p,
            b.noise_gamma);
        ttsim::validate(b.sim);
    }

    prepare_out_dir(options.out_dir, options.force);
    b.out = options.out_dir;

    config::RunManifest manifest;
    manifest.command = command;
    manifest.config_path = options.config_path;
    manifest.config_fnv = config::config_hash(b.cfg);
    manifest.seed = b.seed;
    manifest.time_scale = b.time_scale;
    manifest.version = config::version_string();
    config::write_manifest(b.out + "/manifest.ini", manifest);
    return b;
}

// Tag streams for one joint setting; eight relabeled slices when detector
// balancing is on, one full-length stream otherwise.
std::vector<ttsim::TagStream> acquire_streams(
    const Bench& b, const std::vector<Setting>& settings,
    std::size_t acquisition_index) {
    std::vector<ttsim::TagStream> streams;
    if (b.balanced) {
        ttsim::ExperimentConfig slice = b.sim;
        slice.duration = b.sim.duration / measurement::kBalanceSlices;
        for (std::size_t s = 0; s < measurement::kBalanceSlices; ++s) {
            streams.push_back(ttsim::simulate_setting(
                slice, b.rho, settings,
                acquisition_index * measurement::kBalanceSlices + s,
                measurement::slice_mask(s)));
        }
    } else {
        streams.push_back(ttsim::simulate_setting(
            b.sim, b.rho, settings,
            acquisition_index * measurement::kBalanceSlices, 0));
    }
    return streams;
}

ttsim::TagStream merge_streams(const std::vector<ttsim::TagStream>& parts) {
    ttsim::TagStream merged;
    if (!parts.empty()) merged.tick_ps = parts.front().tick_ps;
    struct Keyed {
        ttsim::TimeTagRecord tag;
        std::uint8_t origin;
    };
    std::vector<Keyed> all;
    for (const auto& part : parts) {
        for (std::size_t i = 0; i < part.tags.size(); ++i) {
            all.push_back({part.tags[i],
                           i < part.origins.size() ? part.origins[i]
                                                   : std::uint8_t{0}});
        }
    }
    std::stable_sort(all.begin(), all.end(),
                     [](const Keyed& a, const Keyed& c) {
                         if (a.tag.ticks != c.tag.ticks) {
                             return a.tag.ticks < c.tag.ticks;
                         }
                         return a.tag.channel < c.tag.channel;
                     });
    for (const Keyed& k : all) {
        merged.tags.push_back(k.tag);
        merged.origins.push_back(k.origin);
    }
    return merged;
}

struct SettingCounts {
    CountTable table;
    std::uint64_t triples = 0;  // all found triples, windowed or not
};

SettingCounts count_streams(const Bench& b,
                            const std::vector<ttsim::TagStream>& streams,
                            const std::vector<Setting>& settings) {
    SettingCounts result;
    result.table.settings = settings;
    result.table.counts.assign(std::size_t{1} << settings.size(), 0);
    for (std::size_t s = 0; s < streams.size(); ++s) {
        const std::uint8_t mask =
            b.balanced ? measurement::slice_mask(s) : std::uint8_t{0};
        const auto triples =
            coincidence::find_triples(streams[s], b.window);
        result.triples += triples.size();
        const CountTable part = coincidence::count_table(
            triples, b.window, settings, {mask});
        for (std::size_t k = 0; k < part.counts.size(); ++k) {
            result.table.counts[k] += part.counts[k];
        }
    }
    return result;
}

void resolve_corrections(Bench& b,
                         const std::vector<ttsim::TagStream>& streams) {
    if (b.corrections_configured) return;
    coincidence::CoincidenceParams raw = b.window;
    raw.delay_correction = {};
    b.window.delay_correction =
        coincidence::delay_calibrate(merge_streams(streams), raw);
}

std::string format_double(double v) {
    std::ostringstream out;
    out << std::setprecision(17) << v;
    return out.str();
}

class ResultsWriter {
  public:
    explicit ResultsWriter(const std::string& path) : out_(path) {
        if (!out_) throw DataError("cannot write " + path);
        path_ = path;
    }
    ~ResultsWriter() = default;

    void section(const std::string& name) { out_ << "[" << name << "]\n"; }
    void kv(const std::string& key, const std::string& value) {
        out_ << key << " = " << value << "\n";
    }
    void kv(const std::string& key, double value) {
        kv(key, format_double(value));
    }
    void kv(const std::string& key, std::uint64_t value) {
        out_ << key << " = " << value << "\n";
    }
    void close() {
        out_.flush();
        if (!out_) throw DataError("failed writing " + path_);
    }

  private:
    std::ofstream out_;
    std::string path_;
};

void write_corrections(ResultsWriter& results, const Bench& b) {
    std::ostringstream list;
    for (std::size_t c = 0; c < 6; ++c) {
        if (c > 0) list << ",";
        list << format_double(b.window.delay_correction[c]);
    }
    results.kv("delay_correction_ps", list.str());
}

Setting axis_setting(char letter, const std::string& origin) {
    switch (letter) {
        case 'x': return measurement::setting_x();
        case 'y': return measurement::setting_y();
        case 'z': return measurement::setting_z();
        default:
            throw ConfigError(origin + ": run.setting must use x, y or z");
    }
}

std::vector<Setting> parse_setting_word(const config::Config& cfg) {
    const std::string word = cfg.get_string_or("run", "setting", "xxx");
    if (word.size() != 3) {
        throw ConfigError(cfg.origin +
                          ": run.setting needs three axis letters");
    }
    std::vector<Setting> settings;
    for (char c : word) settings.push_back(axis_setting(c, cfg.origin));
    return settings;
}

void write_table_csv(const std::string& path, const CountTable& table) {
    measurement::write_counts_csv(path, table);
}

// Herald split of a three-mode table: mode 2 is the herald, outcome bit
// clear selects the plus table.  The reduced tables keep modes 1 and 3.
std::pair<CountTable, CountTable> split_by_herald(const CountTable& t3) {
    CountTable plus;
    CountTable minus;
    plus.settings = {t3.settings[0], t3.settings[2]};
    minus.settings = plus.settings;
    plus.counts.assign(4, 0);
    minus.counts.assign(4, 0);
    for (std::size_t k = 0; k < 8; ++k) {
        const std::size_t herald = (k >> 1) & 1;
        const std::size_t two = ((k >> 2) & 1) << 1 | (k & 1);
        (herald ? minus : plus).counts[two] += t3.counts[k];
    }
    return {plus, minus};
}

void write_inequality(ResultsWriter& results,
                      const analysis::InequalityResult& r,
                      std::uint64_t total_counts) {
    results.section(r.name);
    results.kv("value", r.value);
    results.kv("sigma", r.sigma);
    results.kv("violation_sigmas", r.violation_sigmas);
    results.kv("classical_bound", r.classical_bound);
    results.kv("quantum_bound", r.quantum_bound);
    results.kv("total_counts", total_counts);
    for (std::size_t t = 0; t < r.terms.size(); ++t) {
        results.kv("term" + std::to_string(t) + "_correlation",
                   r.terms[t].correlation);
        results.kv("term" + std::to_string(t) + "_sigma", r.terms[t].sigma);
    }
}

}  // namespace

void cmd_simulate(const RunOptions& options) {
    Bench b = make_bench(options, "simulate", true);
    const auto settings = parse_setting_word(b.cfg);
    const auto streams = acquire_streams(b, settings, 0);
    const ttsim::TagStream merged = merge_streams(streams);
    ttsim::write_stream(b.out + "/stream.ttag", merged);
    ttsim::write_origins(b.out + "/stream.torg", merged.origins);
    ttsim::write_stream_csv(b.out + "/stream.csv", merged);

    const SettingCounts counted = count_streams(b, streams, settings);
    write_table_csv(b.out + "/counts.csv", counted.table);

    ResultsWriter results(b.out + "/results.ini");
    results.section("simulate");
    results.kv("tags", static_cast<std::uint64_t>(merged.tags.size()));
    results.kv("triples", counted.triples);
    results.kv("windowed_triples", counted.table.total());
    results.kv("duration_s", b.duration_s);
    results.close();
}

void cmd_histogram(const RunOptions& options) {
    Bench b = make_bench(options, "histogram", true);
    Bench raw = b;
    raw.balanced = false;
    raw.window.delay_correction = {};
    const auto settings = parse_setting_word(raw.cfg);
    const auto streams = acquire_streams(raw, settings, 0);
    const auto triples =
        coincidence::find_triples(streams[0], raw.window);
    const coincidence::Histogram2D hist = coincidence::histogram2d(
        triples, raw.window, streams[0].tick_ps);
    coincidence::write_histogram_csv(b.out + "/histogram.csv", hist);

    const auto [p21, p32] = coincidence::argmax_bin(hist);
    const auto clip = [&](std::int64_t v) {
        const std::int64_t h = static_cast<std::int64_t>(hist.half_span);
        return std::max(-h, std::min(h, v));
    };
    const coincidence::Region peak = coincidence::rect_region(
        clip(p21 - 1), clip(p21 + 1), clip(p32 - 1), clip(p32 + 1));
    coincidence::Region band;
    if (clip(p21 - 80) <= clip(p21 - 8)) {
        const auto left = coincidence::rect_region(
            clip(p21 - 80), clip(p21 - 8), clip(p32 - 1), clip(p32 + 1));
        band.insert(band.end(), left.begin(), left.end());
    }
    if (clip(p21 + 8) <= clip(p21 + 80)) {
        const auto right = coincidence::rect_region(
            clip(p21 + 8), clip(p21 + 80), clip(p32 - 1), clip(p32 + 1));
        band.insert(band.end(), right.begin(), right.end());
    }
    const coincidence::SnrResult snr =
        coincidence::snr(hist, peak, band);

    ResultsWriter results(b.out + "/results.ini");
    results.section("histogram");
    results.kv("tags",
               static_cast<std::uint64_t>(streams[0].tags.size()));
    results.kv("triples", static_cast<std::uint64_t>(triples.size()));
    results.kv("peak_t21_ticks", static_cast<double>(p21));
    results.kv("peak_t32_ticks", static_cast<double>(p32));
    results.kv("snr", snr.value);
    results.kv("snr_infinite", std::string(snr.infinite ? "true" : "false"));
    results.close();
}

void cmd_phase_scan(const RunOptions& options) {
    Bench b = make_bench(options, "phase_scan", true);
    const std::int64_t points =
        b.cfg.get_int_or("run", "phase_points", 16);
    if (points < 4) {
        throw ConfigError(b.cfg.origin + ": run.phase_points must be >= 4");
    }

    std::vector<analysis::PhaseScanPoint> scan;
    std::ofstream csv(b.out + "/phase_scan.csv");
    if (!csv) throw DataError("cannot write " + b.out + "/phase_scan.csv");
    csv << "angle_rad,correlation,sigma,counts\n";
    for (std::int64_t k = 0; k < points; ++k) {
        const double angle = 2.0 * 3.141592653589793 *
                             static_cast<double>(k) /
                             static_cast<double>(points);
        const std::vector<Setting> settings = {
            measurement::equatorial(angle), measurement::equatorial(0.0),
            measurement::equatorial(0.0)};
        const auto streams =
            acquire_streams(b, settings, static_cast<std::size_t>(k));
        if (k == 0) resolve_corrections(b, streams);
        const SettingCounts counted = count_streams(b, streams, settings);
        analysis::PhaseScanPoint point;
        point.angle = angle;
        point.correlation =
            measurement::correlation_from_counts(counted.table.counts);
        point.sigma =
            measurement::correlation_sigma(counted.table.counts);
        scan.push_back(point);
        csv << format_double(angle) << ','
            << format_double(point.correlation) << ','
            << format_double(point.sigma) << ','
            << counted.table.total() << "\n";
    }
    if (!csv) throw DataError("failed writing " + b.out +
                              "/phase_scan.csv");
    csv.close();

    const analysis::CosineFit fit = analysis::fit_cosine(scan);
    ResultsWriter results(b.out + "/results.ini");
    results.section("phase_scan");
    results.kv("points", static_cast<std::uint64_t>(points));
    results.kv("amplitude", fit.amplitude);
    results.kv("offset_rad", fit.offset);
    results.kv("rms_residual", fit.rms_residual);
    write_corrections(results, b);
    results.close();
}

void cmd_tomo(const RunOptions& options) {
    Bench b = make_bench(options, "tomo", true);
    const auto all_settings = measurement::tomography_settings(3);

    tomography::TomographyDataset data;
    std::uint64_t found_triples = 0;
    for (std::size_t i = 0; i < all_settings.size(); ++i) {
        const auto streams = acquire_streams(b, all_settings[i], i);
        if (i == 0) resolve_corrections(b, streams);
        SettingCounts counted = count_streams(b, streams, all_settings[i]);
        found_triples += counted.triples;
        data.tables.push_back(std::move(counted.table));
    }
    tomography::write_dataset(b.out + "/dataset", data);

    const tomography::ReconstructionResult fit =
        tomography::mle_reconstruct(data);
    const auto target = statemodel::make_ghz(b.phase);
    const double fidelity = qcore::fidelity_pure(fit.rho, target);
    const double purity = qcore::purity(fit.rho);

    const auto li = tomography::linear_inversion(data);
    const double li_fidelity =
        qcore::fidelity_pure(tomography::project_physical(li), target);

    const std::int64_t n_boot =
        b.cfg.get_int_or("run", "bootstrap_samples", 100);
    tomography::ReconstructionOptions boot_options;
    boot_options.tolerance = 1e-8;
    const tomography::BootstrapSummary boot = tomography::bootstrap(
        data, target, static_cast<std::size_t>(std::max<std::int64_t>(
                          n_boot, 2)),
        b.seed ^ 0x5bd1e995u, boot_options);

    std::ofstream rho_csv(b.out + "/rho.csv");
    if (!rho_csv) throw DataError("cannot write " + b.out + "/rho.csv");
    rho_csv << "row,col,re,im\n";
    for (std::size_t r = 0; r < fit.rho.dim(); ++r) {
        for (std::size_t c = 0; c < fit.rho.dim(); ++c) {
            rho_csv << r << ',' << c << ','
                    << format_double(fit.rho.m.at(r, c).real()) << ','
                    << format_double(fit.rho.m.at(r, c).imag()) << "\n";
        }
    }
    rho_csv.close();

    ResultsWriter results(b.out + "/results.ini");
    results.section("tomography");
    results.kv("fidelity", fidelity);
    results.kv("fidelity_se", boot.fidelity_se);
    results.kv("purity", purity);
    results.kv("purity_se", boot.purity_se);
    results.kv("linear_inversion_fidelity", li_fidelity);
    results.kv("triples", found_triples);
    results.kv("windowed_triples", [&] {
        std::uint64_t total = 0;
        for (const auto& t : data.tables) total += t.total();
        return total;
    }());
    results.kv("mle_iterations",
               static_cast<std::uint64_t>(fit.iterations));
    results.kv("mle_converged",
               std::string(fit.converged ? "true" : "false"));
    results.kv("noise_p", b.noise_p);
    results.kv("noise_gamma", b.noise_gamma);
    write_corrections(results, b);

    const auto mermin = analysis::mermin_from_counts(data.tables);
    std::uint64_t mermin_counts = 0;
    for (const auto& term : mermin.terms) {
        mermin_counts += data.tables[measurement::find_table(
                                         data.tables, term.settings)]
                             .total();
    }
    write_inequality(results, mermin, mermin_counts);
    results.close();
}

void cmd_inequality(const RunOptions& options, const std::string& which) {
    if (which != "mermin" && which != "svetlichny" && which != "chsh") {
        throw ConfigError("unknown inequality '" + which + "'");
    }
    Bench b = make_bench(options, "inequality " + which, true);

    if (which == "chsh") {
        const Setting herald{1.5707963267948966, 0.0};  // beta = pi/4
        const auto pairs = analysis::chsh_settings();
        std::vector<CountTable> plus_tables;
        std::vector<CountTable> minus_tables;
        std::uint64_t total = 0;
        for (std::size_t i = 0; i < pairs.size(); ++i) {
            const std::vector<Setting> settings = {pairs[i][0], herald,
                                                   pairs[i][1]};
            const auto streams = acquire_streams(b, settings, i);
            if (i == 0) resolve_corrections(b, streams);
            const SettingCounts counted =
                count_streams(b, streams, settings);
            total += counted.table.total();
            auto [plus, minus] = split_by_herald(counted.table);
            write_table_csv(
                b.out + "/counts_plus_" + std::to_string(i) + ".csv", plus);
            write_table_csv(
                b.out + "/counts_minus_" + std::to_string(i) + ".csv",
                minus);
            plus_tables.push_back(std::move(plus));
            minus_tables.push_back(std::move(minus));
        }
        const auto plus_result =
            analysis::chsh_from_counts(plus_tables, +1);
        const auto minus_result =
            analysis::chsh_from_counts(minus_tables, -1);
        ResultsWriter results(b.out + "/results.ini");
        write_inequality(results, plus_result, total);
        write_inequality(results, minus_result, total);
        results.close();
        return;
    }

    const auto settings_list = which == "mermin"
                                   ? analysis::mermin_settings()
                                   : analysis::svetlichny_settings();
    std::vector<CountTable> tables;
    std::uint64_t total = 0;
    for (std::size_t i = 0; i < settings_list.size(); ++i) {
        const auto streams = acquire_streams(b, settings_list[i], i);
        if (i == 0) resolve_corrections(b, streams);
        SettingCounts counted = count_streams(b, streams, settings_list[i]);
        total += counted.table.total();
        write_table_csv(b.out + "/counts_" + std::to_string(i) + ".csv",
                        counted.table);
        tables.push_back(std::move(counted.table));
    }
    const auto result = which == "mermin"
                            ? analysis::mermin_from_counts(tables)
                            : analysis::svetlichny_from_counts(tables);
    ResultsWriter results(b.out + "/results.ini");
    write_inequality(results, result, total);
    results.close();
}

void cmd_herald(const RunOptions& options) {
    Bench b = make_bench(options, "herald", true);
    Bench single = b;
    single.balanced = false;
    const std::vector<Setting> settings = {measurement::setting_z(),
                                           measurement::setting_z(),
                                           measurement::setting_z()};
    const auto streams = acquire_streams(single, settings, 0);
    coincidence::CoincidenceParams raw = b.window;
    raw.delay_correction = {};
    const auto triples = coincidence::find_triples(streams[0], raw);
    const analysis::HeraldMetrics metrics = analysis::heralding_metrics(
        streams[0], triples, b.sim.duration);

    std::vector<double> betas_deg = {0.0, 22.5, 45.0};
    if (b.cfg.has("run", "betas_deg")) {
        betas_deg = b.cfg.get_double_list("run", "betas_deg");
    }
    std::vector<double> betas_rad;
    for (double deg : betas_deg) {
        betas_rad.push_back(deg * 3.141592653589793 / 180.0);
    }
    const auto sweep = analysis::beta_sweep(b.rho, b.phase, betas_rad);
    std::ofstream csv(b.out + "/beta_sweep.csv");
    if (!csv) throw DataError("cannot write " + b.out + "/beta_sweep.csv");
    csv << "beta_deg,probability_plus,fidelity_plus,fidelity_minus\n";
    for (std::size_t i = 0; i < sweep.size(); ++i) {
        csv << format_double(betas_deg[i]) << ','
            << format_double(sweep[i].probability_plus) << ','
            << format_double(sweep[i].fidelity_plus) << ','
            << format_double(sweep[i].fidelity_minus) << "\n";
    }
    csv.close();

    ResultsWriter results(b.out + "/results.ini");
    results.section("herald");
    results.kv("herald_singles", metrics.herald_singles);
    results.kv("triplet_heralds", metrics.triplet_heralds);
    results.kv("triples", metrics.triples);
    results.kv("herald_singles_rate", metrics.herald_singles_rate);
    results.kv("triple_rate", metrics.triple_rate);
    results.kv("efficiency", metrics.efficiency);
    results.kv("conditioned_efficiency", metrics.conditioned_efficiency);

    if (b.cfg.get_bool_or("run", "herald_tomography", false)) {
        const Setting herald{1.5707963267948966, 0.0};
        const std::array<Setting, 3> axes = {measurement::setting_x(),
                                             measurement::setting_y(),
                                             measurement::setting_z()};
        tomography::TomographyDataset plus;
        tomography::TomographyDataset minus;
        tomography::TomographyDataset merged;
        for (std::size_t i = 0; i < 9; ++i) {
            const std::vector<Setting> joint = {axes[i / 3], herald,
                                                axes[i % 3]};
            const auto slices = acquire_streams(b, joint, 1 + i);
            // Delay calibration needs coincidences on every channel pair,
            // so it runs on the first diagonal-basis acquisition; the z
            // stream above only populates the all-H and all-V pairings.
            if (i == 0) resolve_corrections(b, slices);
            const SettingCounts counted = count_streams(b, slices, joint);
            auto [table_plus, table_minus] =
                split_by_herald(counted.table);
            CountTable both = table_plus;
            for (std::size_t k = 0; k < 4; ++k) {
                both.counts[k] += table_minus.counts[k];
            }
            plus.tables.push_back(std::move(table_plus));
            minus.tables.push_back(std::move(table_minus));
            merged.tables.push_back(std::move(both));
        }
        tomography::write_dataset(b.out + "/dataset_plus", plus);
        tomography::write_dataset(b.out + "/dataset_minus", minus);
        tomography::write_dataset(b.out + "/dataset_merged", merged);

        const auto fit_plus = tomography::mle_reconstruct(plus);
        const auto fit_minus = tomography::mle_reconstruct(minus);
        const auto fit_merged = tomography::mle_reconstruct(merged);
        const qcore::Ket hh = qcore::tensor(qcore::ket_h(), qcore::ket_h());
        const qcore::Ket vv = qcore::tensor(qcore::ket_v(), qcore::ket_v());
        const qcore::DensityMatrix mixture = qcore::validate_physical(
            0.5 * (qcore::outer(hh, hh) + qcore::outer(vv, vv)));
        const double beta = 0.7853981633974483;

        results.section("herald_tomography");
        results.kv("fidelity_plus",
                   qcore::fidelity_pure(
                       fit_plus.rho,
                       statemodel::herald_target(b.phase, beta, +1)));
        results.kv("fidelity_minus",
                   qcore::fidelity_pure(
                       fit_minus.rho,
                       statemodel::herald_target(b.phase, beta, -1)));
        results.kv("fidelity_mixture",
                   tomography::state_fidelity(fit_merged.rho, mixture));
        results.kv("merged_corner_abs",
                   std::abs(fit_merged.rho.m.at(0, 3)));
        results.kv("counts_plus", [&] {
            std::uint64_t total = 0;
            for (const auto& t : plus.tables) total += t.total();
            return total;
        }());
        results.kv("counts_minus", [&] {
            std::uint64_t total = 0;
            for (const auto& t : minus.tables) total += t.total();
            return total;
        }());
        write_corrections(results, b);
    }
    results.close();
}

void cmd_dispersion(const RunOptions& options) {
    Bench b = make_bench(options, "dispersion", false);
    statemodel::DispersionSpec spec;
    spec.center_wavelength_m =
        b.cfg.get_double_or("dispersion", "center_wavelength_nm", 1550.0) *
        1e-9;
    spec.fwhm_bandwidth_m =
        b.cfg.get_double_or("dispersion", "fwhm_bandwidth_nm", 28.0) * 1e-9;
    spec.gvd_s2_per_m =
        b.cfg.get_double_or("dispersion", "gvd_ps2_per_m", 0.028) * 1e-24;
    spec.base_visibility =
        b.cfg.get_double_or("dispersion", "base_visibility", 1.0);
    const double initial =
        b.cfg.get_double_or("dispersion", "initial_mismatch_m", 0.0);
    const double half_range =
        b.cfg.get_double_or("dispersion", "half_range_m", 0.5);
    const std::int64_t points =
        b.cfg.get_int_or("dispersion", "points", 41);
    if (points < 3) {
        throw ConfigError(b.cfg.origin + ": dispersion.points must be >= 3");
    }

    const analysis::DispersionScan scan = analysis::compensation_scan(
        spec, initial, half_range, static_cast<std::size_t>(points));
    std::ofstream csv(b.out + "/dispersion.csv");
    if (!csv) throw DataError("cannot write " + b.out + "/dispersion.csv");
    csv << "compensation_m,visibility\n";
    for (std::size_t i = 0; i < scan.compensation_m.size(); ++i) {
        csv << format_double(scan.compensation_m[i]) << ','
            << format_double(scan.visibility[i]) << "\n";
    }
    csv.close();

    const std::size_t best = analysis::best_compensation(scan);
    ResultsWriter results(b.out + "/results.ini");
    results.section("dispersion");
    results.kv("points", static_cast<std::uint64_t>(points));
    results.kv("best_compensation_m", scan.compensation_m[best]);
    results.kv("best_visibility", scan.visibility[best]);
    results.kv("zero_compensation_visibility",
               statemodel::visibility_vs_mismatch(initial, spec));
    results.close();
}

void cmd_report(const RunOptions& options) {
    const std::string root = options.out_dir;
    if (!fs::is_directory(root)) {
        throw ConfigError("report needs an existing directory, got '" +
                          root + "'");
    }
    std::vector<fs::path> found;
    for (const auto& entry : fs::recursive_directory_iterator(root)) {
        if (entry.is_regular_file() &&
            entry.path().filename() == "results.ini") {
            found.push_back(entry.path());
        }
    }
    std::sort(found.begin(), found.end());

    std::ofstream out(root + "/report.md");
    if (!out) throw DataError("cannot write " + root + "/report.md");
    out << "# Run report\n\n";
    if (found.empty()) {
        out << "No results found under `" << root << "`.\n";
    }
    for (const fs::path& path : found) {
        const config::Config cfg = config::load_config(path.string());
        out << "## " << fs::relative(path, root).string() << "\n\n";
        out << "| section | key | value |\n";
        out << "| --- | --- | --- |\n";
        for (const auto& [section, body] : cfg.sections) {
            for (const auto& [key, entry] : body.entries) {
                out << "| " << section << " | " << key << " | "
                    << entry.value << " |\n";
            }
        }
        out << "\n";
    }
    if (!out) throw DataError("failed writing " + root + "/report.md");
}

}  // namespace cspdc::pipelines

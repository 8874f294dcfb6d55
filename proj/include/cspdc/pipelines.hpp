#pragma once

#include <cstdint>
#include <string>

namespace cspdc::pipelines {

struct RunOptions {
    std::string config_path;
    std::string out_dir;
    bool force = false;        // reuse an existing output directory
    bool paper_exact = false;  // ignore [run] time_scale
    std::uint64_t seed = 0;    // effective only when seed_set
    bool seed_set = false;
};

// Each command loads the config, acquires or analyzes as needed and
// writes manifest.ini plus its outputs into out_dir.  Failures are
// reported by throwing (ConfigError, DataError, ...).
void cmd_simulate(const RunOptions& options);
void cmd_histogram(const RunOptions& options);
void cmd_phase_scan(const RunOptions& options);
void cmd_tomo(const RunOptions& options);
void cmd_inequality(const RunOptions& options, const std::string& which);
void cmd_herald(const RunOptions& options);
void cmd_dispersion(const RunOptions& options);

// Collects results.ini files under a directory into report.md.
void cmd_report(const RunOptions& options);

}  // namespace cspdc::pipelines

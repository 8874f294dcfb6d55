#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "cspdc/measurement.hpp"
#include "cspdc/qcore.hpp"

namespace cspdc::ttsim {

// Channel map: 0/1 = mode-1 analyzer +/-, 2/3 = mode-2, 4/5 = mode-3.
constexpr std::size_t kChannels = 6;

struct ExperimentConfig {
    double triplet_rate = 0.0;  // generated triplets per second, before loss
    double pair1_rate = 0.0;    // first-stage pairs per second, feeds the
                                // unpaired mode-1 background
    double eta1 = 0.23;         // detection probability, mode 1
    double eta2 = 0.30;         // mode 2
    double eta3 = 0.30;         // mode 3
    std::array<double, kChannels> dark_rate{0, 0, 0, 0, 0, 0};  // per second
    std::array<double, kChannels> jitter_sigma{350, 350, 80,
                                               80,  80,  80};  // ps
    std::array<double, kChannels> channel_delay{0, 0, 0,
                                                0, 7000, 7000};  // ps
    // Relative output-coupling efficiency per channel, multiplying the
    // per-mode eta.  Defaults are balanced; used to study detector bias.
    std::array<double, kChannels> channel_eff{1, 1, 1, 1, 1, 1};
    double tick = 156.25;          // ps per timestamp tick
    double record_window = 15000;  // ps, grouping span for analysis
    double duration = 0.0;         // seconds
    std::uint64_t seed = 0;
};

// Throws ConfigError when rates are negative, an efficiency leaves [0, 1],
// or duration/tick are not positive.
void validate(const ExperimentConfig& config);

struct TimeTagRecord {
    std::uint64_t ticks = 0;
    std::uint8_t channel = 0;
};

inline bool operator==(const TimeTagRecord& a, const TimeTagRecord& b) {
    return a.ticks == b.ticks && a.channel == b.channel;
}

// Ground-truth label for each emitted tag, kept out of the wire format so
// analysis code cannot depend on it; conditioned-efficiency studies read it
// from the sidecar file instead.
enum class TagOrigin : std::uint8_t { dark = 0, triplet = 1, unpaired = 2 };

struct TagStream {
    std::vector<TimeTagRecord> tags;   // sorted by (ticks, channel)
    std::vector<std::uint8_t> origins;  // TagOrigin per tag; empty when read
                                        // from a plain stream file
    double tick_ps = 156.25;
};

// Monte-Carlo generation of one acquisition:
//   (a) triplets arrive as a Poisson process at triplet_rate; the joint
//       analyzer outcome is drawn from outcome_probabilities(rho, settings)
//       and each photon of the triple survives with eta_i * channel_eff of
//       its output channel, independently;
//   (b) unpaired first-stage photons arrive at pair1_rate * eta1 and exit
//       either mode-1 analyzer output with equal probability;
//   (c) each channel adds an independent Poisson dark-count process;
//   (d) every tag is shifted by channel_delay plus Gaussian jitter,
//       quantized to the tick, and dropped if it leaves [0, duration].
// `stream_index` selects an independent random substream so distinct
// settings (or acquisition slices) of one run never share randomness.
// `subsetting_mask` swaps the +/- outputs of each mode whose bit is set
// (bit 2 = mode 1, bit 0 = mode 3), mirroring measurement::masked_outcome.
TagStream simulate_setting(const ExperimentConfig& config,
                           const qcore::DensityMatrix& rho,
                           const std::vector<measurement::Setting>& settings,
                           std::size_t stream_index = 0,
                           std::uint8_t subsetting_mask = 0);

// Binary stream file: 16-byte header (magic "TTAG", u32 version, u64 tick
// in femtoseconds), then 9-byte records of u64 little-endian timestamp
// ticks plus u8 channel.  Reading reports malformed input with the byte
// offset.  Origins are not part of this format.
void write_stream(const std::string& path, const TagStream& stream);
TagStream read_stream(const std::string& path);

// CSV alternative: header "timestamp_ticks,channel".  The tick length is
// not recorded; the reader takes it as a parameter.
void write_stream_csv(const std::string& path, const TagStream& stream);
TagStream read_stream_csv(const std::string& path, double tick_ps = 156.25);

// Ground-truth sidecar: magic "TORG", u32 version, u64 count, one origin
// byte per tag, in stream order.
void write_origins(const std::string& path,
                   const std::vector<std::uint8_t>& origins);
std::vector<std::uint8_t> read_origins(const std::string& path);

}  // namespace cspdc::ttsim

#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "cspdc/measurement.hpp"
#include "cspdc/ttsim.hpp"

namespace cspdc::coincidence {

struct CoincidenceParams {
    double record_window = 15000.0;      // ps, grouping span for triples
    double coincidence_window = 1250.0;  // ps, span accepted into count tables
    std::array<double, ttsim::kChannels> delay_correction{0, 0, 0,
                                                          0, 0, 0};  // ps
};

// Throws ConfigError unless 0 < coincidence_window <= record_window and all
// corrections are finite.
void validate(const CoincidenceParams& params);

// One detected three-fold coincidence, one tag per mode.  corr*_fs are the
// delay-corrected times in femtoseconds used for windowing and histograms.
struct Triple {
    ttsim::TimeTagRecord tag1, tag2, tag3;
    std::int64_t corr1_fs = 0, corr2_fs = 0, corr3_fs = 0;
};

struct TripleStats {
    std::size_t peak_buffered = 0;  // largest resident tag count during the
                                    // streaming pass
};

// Streaming triple search: one tag from each analyzer group {0,1}, {2,3},
// {4,5} whose delay-corrected times span at most record_window.  Greedy and
// earliest-first: the earliest unused tag claims the earliest in-window tag
// of each other group, and every tag is used at most once.  Memory stays
// bounded by the tags resident in one record_window.  Throws DataError on
// an unsorted stream.
std::vector<Triple> find_triples(const ttsim::TagStream& stream,
                                 const CoincidenceParams& params,
                                 TripleStats* stats = nullptr);

// Square 2-D histogram of (t2-t1, t3-t2) in units of bin_ticks ticks,
// covering +/-record_window around zero.
struct Histogram2D {
    std::int64_t half_span = 0;  // bins on each side of zero
    std::int64_t bin_ticks = 1;
    double tick_ps = 156.25;
    std::vector<std::uint64_t> counts;  // row b21, column b32

    std::size_t side() const {
        return static_cast<std::size_t>(2 * half_span + 1);
    }
    bool contains(std::int64_t b21, std::int64_t b32) const {
        return b21 >= -half_span && b21 <= half_span && b32 >= -half_span &&
               b32 <= half_span;
    }
    std::uint64_t at(std::int64_t b21, std::int64_t b32) const {
        return counts[static_cast<std::size_t>(b21 + half_span) * side() +
                      static_cast<std::size_t>(b32 + half_span)];
    }
    std::uint64_t& at(std::int64_t b21, std::int64_t b32) {
        return counts[static_cast<std::size_t>(b21 + half_span) * side() +
                      static_cast<std::size_t>(b32 + half_span)];
    }
};

Histogram2D histogram2d(const std::vector<Triple>& triples,
                        const CoincidenceParams& params, double tick_ps,
                        std::int64_t bin_ticks = 1);

// Bin of the largest count; earliest row/column wins ties.
std::pair<std::int64_t, std::int64_t> argmax_bin(const Histogram2D& h);

// CSV export of the non-empty bins: header "t21_ticks,t32_ticks,count".
void write_histogram_csv(const std::string& path, const Histogram2D& h);

using Region = std::vector<std::pair<std::int64_t, std::int64_t>>;

// Inclusive rectangle of bins [b21_min..b21_max] x [b32_min..b32_max].
Region rect_region(std::int64_t b21_min, std::int64_t b21_max,
                   std::int64_t b32_min, std::int64_t b32_max);

struct SnrResult {
    double value = 0.0;
    bool infinite = false;  // background empty of counts, value saturated
};

// Mean peak-region bin content over mean background-region bin content.
// Regions must be non-empty, in range, and disjoint.
SnrResult snr(const Histogram2D& h, const Region& peak,
              const Region& background);

// Counts of triples whose corrected span fits the coincidence window,
// binned by outcome pattern (channel parity per mode, relabeled with the
// subsetting mask).  `subsetting_labels` holds either one mask for all
// triples or one mask per triple.
measurement::CountTable count_table(
    const std::vector<Triple>& triples, const CoincidenceParams& params,
    const std::vector<measurement::Setting>& settings,
    const std::vector<std::uint8_t>& subsetting_labels);

// Per-channel delay corrections from coincidence-peak positions, resolution
// one tick.  Channel 0 is the reference; channels 2..5 calibrate against
// it and channel 1 through channel 2.  Throws DataError when a channel pair
// shows no peak above background.
std::array<double, ttsim::kChannels> delay_calibrate(
    const ttsim::TagStream& stream, const CoincidenceParams& params);

}  // namespace cspdc::coincidence

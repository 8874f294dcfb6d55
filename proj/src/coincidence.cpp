#include "cspdc/coincidence.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <limits>
#include <queue>
#include <unordered_set>

#include "cspdc/errors.hpp"

namespace cspdc::coincidence {

void validate(const CoincidenceParams& params) {
    if (!(params.coincidence_window > 0.0) ||
        !(params.coincidence_window <= params.record_window)) {
        throw ConfigError(
            "coincidence_window must satisfy 0 < window <= record_window");
    }
    for (double corr : params.delay_correction) {
        if (!std::isfinite(corr)) {
            throw ConfigError("delay_correction must be finite");
        }
    }
}

namespace {

std::int64_t tick_fs_of(double tick_ps) {
    const auto tick_fs = std::llround(tick_ps * 1000.0);
    if (tick_fs <= 0) throw DataError("stream tick must be positive");
    return tick_fs;
}

}  // namespace

std::vector<Triple> find_triples(const ttsim::TagStream& stream,
                                 const CoincidenceParams& params,
                                 TripleStats* stats) {
    validate(params);
    const std::int64_t tick_fs = tick_fs_of(stream.tick_ps);
    const auto window_fs = std::llround(params.record_window * 1000.0);
    std::array<std::int64_t, ttsim::kChannels> corr_fs{};
    std::int64_t max_corr = std::numeric_limits<std::int64_t>::min();
    for (std::size_t c = 0; c < ttsim::kChannels; ++c) {
        corr_fs[c] = std::llround(params.delay_correction[c] * 1000.0);
        max_corr = std::max(max_corr, corr_fs[c]);
    }

    struct Entry {
        std::int64_t corr = 0;
        ttsim::TimeTagRecord tag;
    };
    struct Pending {
        std::int64_t corr = 0;
        std::size_t seq = 0;
        ttsim::TimeTagRecord tag;
        bool operator>(const Pending& o) const {
            return corr != o.corr ? corr > o.corr : seq > o.seq;
        }
    };

    std::priority_queue<Pending, std::vector<Pending>, std::greater<>> reorder;
    std::array<std::deque<Entry>, 3> groups;
    std::vector<Triple> out;
    std::int64_t frontier = std::numeric_limits<std::int64_t>::min();
    std::size_t peak_buffered = 0;

    auto resident = [&] {
        return reorder.size() + groups[0].size() + groups[1].size() +
               groups[2].size();
    };

    // Resolve as many pending decisions as the released frontier allows.
    // `drained` means no further tags will arrive.
    auto match = [&](bool drained) {
        for (;;) {
            int gm = -1;
            std::int64_t m = std::numeric_limits<std::int64_t>::max();
            for (int g = 0; g < 3; ++g) {
                if (!groups[g].empty() && groups[g].front().corr < m) {
                    m = groups[g].front().corr;
                    gm = g;
                }
            }
            if (gm < 0) return;
            bool hopeless = false;
            bool waiting = false;
            for (int g = 0; g < 3; ++g) {
                if (g == gm) continue;
                if (groups[g].empty()) {
                    if (drained || frontier > m + window_fs) hopeless = true;
                    else waiting = true;
                } else if (groups[g].front().corr > m + window_fs) {
                    hopeless = true;
                }
            }
            if (hopeless) {
                groups[gm].pop_front();
                continue;
            }
            if (waiting) return;
            Triple triple;
            const Entry e1 = groups[0].front();
            const Entry e2 = groups[1].front();
            const Entry e3 = groups[2].front();
            groups[0].pop_front();
            groups[1].pop_front();
            groups[2].pop_front();
            triple.tag1 = e1.tag;
            triple.tag2 = e2.tag;
            triple.tag3 = e3.tag;
            triple.corr1_fs = e1.corr;
            triple.corr2_fs = e2.corr;
            triple.corr3_fs = e3.corr;
            out.push_back(triple);
        }
    };

    auto release_one = [&] {
        const Pending top = reorder.top();
        reorder.pop();
        frontier = top.corr;
        groups[top.tag.channel / 2].push_back({top.corr, top.tag});
        match(false);
    };

    for (std::size_t i = 0; i < stream.tags.size(); ++i) {
        const ttsim::TimeTagRecord& tag = stream.tags[i];
        if (tag.channel >= ttsim::kChannels) {
            throw DataError("tag channel out of range at record " +
                            std::to_string(i));
        }
        if (i > 0 && tag.ticks < stream.tags[i - 1].ticks) {
            throw DataError("stream is unsorted at record " +
                            std::to_string(i));
        }
        const std::int64_t raw_fs =
            static_cast<std::int64_t>(tag.ticks) * tick_fs;
        while (!reorder.empty() && reorder.top().corr <= raw_fs - max_corr) {
            release_one();
        }
        reorder.push({raw_fs - corr_fs[tag.channel], i, tag});
        peak_buffered = std::max(peak_buffered, resident());
    }
    while (!reorder.empty()) release_one();
    match(true);

    if (stats != nullptr) stats->peak_buffered = peak_buffered;
    return out;
}

Histogram2D histogram2d(const std::vector<Triple>& triples,
                        const CoincidenceParams& params, double tick_ps,
                        std::int64_t bin_ticks) {
    validate(params);
    if (bin_ticks < 1) throw ConfigError("bin_ticks must be >= 1");
    const std::int64_t tick_fs = tick_fs_of(tick_ps);
    const auto window_fs = std::llround(params.record_window * 1000.0);
    const std::int64_t span_ticks =
        (window_fs + tick_fs - 1) / tick_fs;  // ceil

    Histogram2D h;
    h.bin_ticks = bin_ticks;
    h.tick_ps = tick_ps;
    h.half_span = (span_ticks + bin_ticks - 1) / bin_ticks;
    h.counts.assign(h.side() * h.side(), 0);

    auto to_bin = [&](std::int64_t diff_fs) {
        const auto ticks = std::llround(static_cast<double>(diff_fs) /
                                        static_cast<double>(tick_fs));
        // floor division groups ticks [b*bin_ticks, (b+1)*bin_ticks)
        return ticks >= 0 ? ticks / bin_ticks
                          : -((-ticks + bin_ticks - 1) / bin_ticks);
    };
    for (const Triple& t : triples) {
        const std::int64_t b21 = to_bin(t.corr2_fs - t.corr1_fs);
        const std::int64_t b32 = to_bin(t.corr3_fs - t.corr2_fs);
        if (h.contains(b21, b32)) h.at(b21, b32) += 1;
    }
    return h;
}

std::pair<std::int64_t, std::int64_t> argmax_bin(const Histogram2D& h) {
    std::pair<std::int64_t, std::int64_t> best{-h.half_span, -h.half_span};
    std::uint64_t best_count = 0;
    for (std::int64_t b21 = -h.half_span; b21 <= h.half_span; ++b21) {
        for (std::int64_t b32 = -h.half_span; b32 <= h.half_span; ++b32) {
            if (h.at(b21, b32) > best_count) {
                best_count = h.at(b21, b32);
                best = {b21, b32};
            }
        }
    }
    return best;
}

void write_histogram_csv(const std::string& path, const Histogram2D& h) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot open '" + path + "' for writing");
    out << "t21_ticks,t32_ticks,count\n";
    for (std::int64_t b21 = -h.half_span; b21 <= h.half_span; ++b21) {
        for (std::int64_t b32 = -h.half_span; b32 <= h.half_span; ++b32) {
            const std::uint64_t n = h.at(b21, b32);
            if (n == 0) continue;
            out << b21 * h.bin_ticks << "," << b32 * h.bin_ticks << "," << n
                << "\n";
        }
    }
    if (!out) throw DataError("failed writing '" + path + "'");
}

Region rect_region(std::int64_t b21_min, std::int64_t b21_max,
                   std::int64_t b32_min, std::int64_t b32_max) {
    if (b21_min > b21_max || b32_min > b32_max) {
        throw ConfigError("rect_region bounds are inverted");
    }
    Region region;
    for (std::int64_t a = b21_min; a <= b21_max; ++a) {
        for (std::int64_t b = b32_min; b <= b32_max; ++b) {
            region.emplace_back(a, b);
        }
    }
    return region;
}

SnrResult snr(const Histogram2D& h, const Region& peak,
              const Region& background) {
    if (peak.empty() || background.empty()) {
        throw ConfigError("snr regions must be non-empty");
    }
    std::unordered_set<std::int64_t> seen;
    auto absorb = [&](const Region& region) {
        std::uint64_t sum = 0;
        for (const auto& [b21, b32] : region) {
            if (!h.contains(b21, b32)) {
                throw ConfigError("snr region leaves the histogram");
            }
            const std::int64_t key =
                (b21 + h.half_span) * static_cast<std::int64_t>(h.side()) +
                (b32 + h.half_span);
            if (!seen.insert(key).second) {
                throw ConfigError("snr regions overlap");
            }
            sum += h.at(b21, b32);
        }
        return sum;
    };
    const std::uint64_t peak_sum = absorb(peak);
    const std::uint64_t background_sum = absorb(background);

    SnrResult result;
    if (background_sum == 0) {
        result.infinite = true;
        result.value = std::numeric_limits<double>::infinity();
        return result;
    }
    const double peak_mean =
        static_cast<double>(peak_sum) / static_cast<double>(peak.size());
    const double background_mean = static_cast<double>(background_sum) /
                                   static_cast<double>(background.size());
    result.value = peak_mean / background_mean;
    return result;
}

measurement::CountTable count_table(
    const std::vector<Triple>& triples, const CoincidenceParams& params,
    const std::vector<measurement::Setting>& settings,
    const std::vector<std::uint8_t>& subsetting_labels) {
    validate(params);
    if (settings.size() != 3) {
        throw ConfigError("count_table needs one setting per mode");
    }
    if (subsetting_labels.size() != 1 &&
        subsetting_labels.size() != triples.size()) {
        throw ConfigError(
            "subsetting_labels needs one mask in total or one per triple");
    }
    for (std::uint8_t mask : subsetting_labels) {
        if (mask > 7) throw ConfigError("subsetting mask must lie in 0..7");
    }
    const auto window_fs = std::llround(params.coincidence_window * 1000.0);

    measurement::CountTable table;
    table.settings = settings;
    table.counts.assign(8, 0);
    for (std::size_t i = 0; i < triples.size(); ++i) {
        const Triple& t = triples[i];
        const std::int64_t lo =
            std::min({t.corr1_fs, t.corr2_fs, t.corr3_fs});
        const std::int64_t hi =
            std::max({t.corr1_fs, t.corr2_fs, t.corr3_fs});
        if (hi - lo > window_fs) continue;
        const std::size_t pattern =
            (static_cast<std::size_t>(t.tag1.channel & 1) << 2) |
            (static_cast<std::size_t>(t.tag2.channel & 1) << 1) |
            static_cast<std::size_t>(t.tag3.channel & 1);
        const std::uint8_t mask =
            subsetting_labels.size() == 1 ? subsetting_labels[0]
                                          : subsetting_labels[i];
        table.counts[measurement::masked_outcome(pattern, mask)] += 1;
    }
    return table;
}

std::array<double, ttsim::kChannels> delay_calibrate(
    const ttsim::TagStream& stream, const CoincidenceParams& params) {
    validate(params);
    const std::int64_t tick_fs = tick_fs_of(stream.tick_ps);
    const auto window_fs = std::llround(params.record_window * 1000.0);
    const std::int64_t span = window_fs / tick_fs + 1;

    std::array<std::vector<std::int64_t>, ttsim::kChannels> ticks;
    for (const ttsim::TimeTagRecord& tag : stream.tags) {
        if (tag.channel >= ttsim::kChannels) {
            throw DataError("tag channel out of range");
        }
        ticks[tag.channel].push_back(static_cast<std::int64_t>(tag.ticks));
    }

    // Modal (target - reference) offset in ticks from the coincidence peak.
    auto modal_offset = [&](std::size_t target, std::size_t reference) {
        const auto& ts = ticks[target];
        const auto& rs = ticks[reference];
        std::vector<std::uint64_t> hist(
            static_cast<std::size_t>(2 * span + 1), 0);
        std::size_t lo = 0;
        for (const std::int64_t t : ts) {
            while (lo < rs.size() && rs[lo] < t - span) ++lo;
            for (std::size_t j = lo; j < rs.size() && rs[j] <= t + span;
                 ++j) {
                hist[static_cast<std::size_t>(t - rs[j] + span)] += 1;
            }
        }
        std::uint64_t best = 0;
        std::uint64_t total = 0;
        std::size_t best_at = 0;
        for (std::size_t k = 0; k < hist.size(); ++k) {
            total += hist[k];
            if (hist[k] > best) {
                best = hist[k];
                best_at = k;
            }
        }
        const double mean =
            static_cast<double>(total) / static_cast<double>(hist.size());
        if (best < 10 || static_cast<double>(best) < 5.0 * mean) {
            throw DataError("no coincidence peak between channels " +
                            std::to_string(target) + " and " +
                            std::to_string(reference));
        }
        return static_cast<std::int64_t>(best_at) - span;
    };

    std::array<double, ttsim::kChannels> corrections{};
    corrections[0] = 0.0;
    for (std::size_t c = 2; c < ttsim::kChannels; ++c) {
        corrections[c] = static_cast<double>(modal_offset(c, 0)) *
                         stream.tick_ps;
    }
    corrections[1] = static_cast<double>(modal_offset(1, 2)) *
                         stream.tick_ps +
                     corrections[2];
    return corrections;
}

}  // namespace cspdc::coincidence

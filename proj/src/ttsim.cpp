#include "cspdc/ttsim.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>

#include "cspdc/errors.hpp"
#include "cspdc/rng.hpp"

namespace cspdc::ttsim {

namespace {

constexpr std::uint32_t kStreamVersion = 1;
constexpr std::uint32_t kOriginsVersion = 1;

// Second-level substream split; a different mixing constant than
// Rng::substream so (stream_index, process) pairs never alias.
Rng process_rng(std::uint64_t seed, std::size_t stream_index,
                unsigned process) {
    const std::uint64_t base =
        seed ^ (0x9e3779b97f4a7c15ULL * (stream_index + 1));
    return Rng(base + 0xbf58476d1ce4e5b9ULL * (process + 1));
}

struct PendingTag {
    double t_s = 0.0;
    std::uint8_t channel = 0;
    std::uint8_t origin = 0;
};

}  // namespace

void validate(const ExperimentConfig& config) {
    if (!(config.triplet_rate >= 0.0)) {
        throw ConfigError("triplet_rate must be >= 0");
    }
    if (!(config.pair1_rate >= 0.0)) {
        throw ConfigError("pair1_rate must be >= 0");
    }
    const double etas[3] = {config.eta1, config.eta2, config.eta3};
    for (double eta : etas) {
        if (!(eta >= 0.0 && eta <= 1.0)) {
            throw ConfigError("detection efficiencies must lie in [0, 1]");
        }
    }
    for (std::size_t c = 0; c < kChannels; ++c) {
        if (!(config.dark_rate[c] >= 0.0)) {
            throw ConfigError("dark_rate must be >= 0");
        }
        if (!(config.jitter_sigma[c] >= 0.0)) {
            throw ConfigError("jitter_sigma must be >= 0");
        }
        if (!(config.channel_eff[c] >= 0.0 && config.channel_eff[c] <= 1.0)) {
            throw ConfigError("channel_eff must lie in [0, 1]");
        }
        if (!std::isfinite(config.channel_delay[c])) {
            throw ConfigError("channel_delay must be finite");
        }
    }
    if (!(config.duration > 0.0)) {
        throw ConfigError("duration must be > 0");
    }
    if (!(config.tick > 0.0)) {
        throw ConfigError("tick must be > 0");
    }
    if (!(config.record_window > 0.0)) {
        throw ConfigError("record_window must be > 0");
    }
}

TagStream simulate_setting(const ExperimentConfig& config,
                           const qcore::DensityMatrix& rho,
                           const std::vector<measurement::Setting>& settings,
                           std::size_t stream_index,
                           std::uint8_t subsetting_mask) {
    validate(config);
    if (settings.size() != 3) {
        throw ConfigError("simulate_setting needs one setting per mode");
    }
    if (rho.dim() != 8) {
        throw DimensionError("simulate_setting needs a three-mode state");
    }
    if (subsetting_mask > 7) {
        throw ConfigError("subsetting_mask must lie in 0..7");
    }
    const std::vector<double> probs =
        measurement::outcome_probabilities(rho, settings);
    const double etas[3] = {config.eta1, config.eta2, config.eta3};

    std::vector<PendingTag> pending;
    const auto expected =
        config.duration * (config.triplet_rate * 3.0 +
                           config.pair1_rate * config.eta1 +
                           std::accumulate(config.dark_rate.begin(),
                                           config.dark_rate.end(), 0.0));
    pending.reserve(static_cast<std::size_t>(expected * 1.1) + 16);

    // (a) true triplets
    if (config.triplet_rate > 0.0) {
        Rng rng = process_rng(config.seed, stream_index, 0);
        double t = 0.0;
        for (;;) {
            t += rng.exponential(config.triplet_rate);
            if (t >= config.duration) break;
            const std::size_t outcome = rng.categorical(probs);
            for (std::size_t q = 0; q < 3; ++q) {
                const std::size_t bit = (outcome >> (2 - q)) & 1u;
                const std::size_t flip = (subsetting_mask >> (2 - q)) & 1u;
                const std::uint8_t ch =
                    static_cast<std::uint8_t>(2 * q + (bit ^ flip));
                const double p_detect = etas[q] * config.channel_eff[ch];
                if (rng.bernoulli(p_detect)) {
                    pending.push_back(
                        {t, ch, static_cast<std::uint8_t>(TagOrigin::triplet)});
                }
            }
        }
    }

    // (b) unpaired first-stage photons on the mode-1 channels
    const double unpaired_rate = config.pair1_rate * config.eta1;
    if (unpaired_rate > 0.0) {
        Rng rng = process_rng(config.seed, stream_index, 1);
        const std::size_t flip = (subsetting_mask >> 2) & 1u;
        double t = 0.0;
        for (;;) {
            t += rng.exponential(unpaired_rate);
            if (t >= config.duration) break;
            const std::size_t side = rng.bernoulli(0.5) ? 1 : 0;
            const std::uint8_t ch = static_cast<std::uint8_t>(side ^ flip);
            if (rng.bernoulli(config.channel_eff[ch])) {
                pending.push_back(
                    {t, ch, static_cast<std::uint8_t>(TagOrigin::unpaired)});
            }
        }
    }

    // (c) dark counts
    {
        Rng rng = process_rng(config.seed, stream_index, 2);
        for (std::size_t c = 0; c < kChannels; ++c) {
            if (config.dark_rate[c] <= 0.0) continue;
            double t = 0.0;
            for (;;) {
                t += rng.exponential(config.dark_rate[c]);
                if (t >= config.duration) break;
                pending.push_back({t, static_cast<std::uint8_t>(c),
                                   static_cast<std::uint8_t>(TagOrigin::dark)});
            }
        }
    }

    // (d) delay, jitter, quantization, boundary drop
    struct RawRecord {
        std::uint64_t ticks;
        std::uint8_t channel;
        std::uint8_t origin;
        std::size_t seq;
    };
    std::vector<RawRecord> raw;
    raw.reserve(pending.size());
    {
        Rng rng = process_rng(config.seed, stream_index, 3);
        const auto max_ticks = static_cast<std::int64_t>(
            std::floor(config.duration * 1e12 / config.tick));
        std::size_t seq = 0;
        for (const PendingTag& tag : pending) {
            const double t_ps = tag.t_s * 1e12 +
                                config.channel_delay[tag.channel] +
                                config.jitter_sigma[tag.channel] * rng.normal();
            const auto ticks = std::llround(t_ps / config.tick);
            if (ticks < 0 || ticks > max_ticks) continue;
            raw.push_back({static_cast<std::uint64_t>(ticks), tag.channel,
                           tag.origin, seq++});
        }
    }
    std::sort(raw.begin(), raw.end(),
              [](const RawRecord& x, const RawRecord& y) {
                  if (x.ticks != y.ticks) return x.ticks < y.ticks;
                  if (x.channel != y.channel) return x.channel < y.channel;
                  return x.seq < y.seq;
              });

    TagStream stream;
    stream.tick_ps = config.tick;
    stream.tags.reserve(raw.size());
    stream.origins.reserve(raw.size());
    for (const RawRecord& r : raw) {
        stream.tags.push_back({r.ticks, r.channel});
        stream.origins.push_back(r.origin);
    }
    return stream;
}

namespace {

void put_u32le(std::string& out, std::uint32_t v) {
    for (int k = 0; k < 4; ++k) {
        out.push_back(static_cast<char>((v >> (8 * k)) & 0xffu));
    }
}

void put_u64le(std::string& out, std::uint64_t v) {
    for (int k = 0; k < 8; ++k) {
        out.push_back(static_cast<char>((v >> (8 * k)) & 0xffu));
    }
}

std::uint32_t get_u32le(const std::string& in, std::size_t at) {
    std::uint32_t v = 0;
    for (int k = 3; k >= 0; --k) {
        v = (v << 8) | static_cast<std::uint8_t>(in[at + static_cast<std::size_t>(k)]);
    }
    return v;
}

std::uint64_t get_u64le(const std::string& in, std::size_t at) {
    std::uint64_t v = 0;
    for (int k = 7; k >= 0; --k) {
        v = (v << 8) | static_cast<std::uint8_t>(in[at + static_cast<std::size_t>(k)]);
    }
    return v;
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open '" + path + "' for reading");
    std::ostringstream buf;
    buf << in.rdbuf();
    return std::move(buf).str();
}

void spill(const std::string& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot open '" + path + "' for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("failed writing '" + path + "'");
}

}  // namespace

void write_stream(const std::string& path, const TagStream& stream) {
    std::string bytes;
    bytes.reserve(16 + 9 * stream.tags.size());
    bytes += "TTAG";
    put_u32le(bytes, kStreamVersion);
    put_u64le(bytes, static_cast<std::uint64_t>(
                         std::llround(stream.tick_ps * 1000.0)));
    for (const TimeTagRecord& tag : stream.tags) {
        put_u64le(bytes, tag.ticks);
        bytes.push_back(static_cast<char>(tag.channel));
    }
    spill(path, bytes);
}

TagStream read_stream(const std::string& path) {
    const std::string bytes = slurp(path);
    if (bytes.size() < 16) {
        throw DataError("'" + path + "': truncated header, file ends at byte " +
                        std::to_string(bytes.size()));
    }
    if (bytes.compare(0, 4, "TTAG") != 0) {
        throw DataError("'" + path + "': bad magic at byte 0");
    }
    const std::uint32_t version = get_u32le(bytes, 4);
    if (version != kStreamVersion) {
        throw DataError("'" + path + "': unsupported stream version " +
                        std::to_string(version));
    }
    const std::uint64_t tick_fs = get_u64le(bytes, 8);
    if (tick_fs == 0) throw DataError("'" + path + "': zero tick length");
    const std::size_t body = bytes.size() - 16;
    if (body % 9 != 0) {
        throw DataError("'" + path + "': file ends mid-record at byte " +
                        std::to_string(16 + (body / 9) * 9));
    }
    TagStream stream;
    stream.tick_ps = static_cast<double>(tick_fs) / 1000.0;
    stream.tags.resize(body / 9);
    for (std::size_t r = 0; r < stream.tags.size(); ++r) {
        const std::size_t at = 16 + 9 * r;
        stream.tags[r].ticks = get_u64le(bytes, at);
        const auto ch = static_cast<std::uint8_t>(bytes[at + 8]);
        if (ch >= kChannels) {
            throw DataError("'" + path + "': channel " + std::to_string(ch) +
                            " out of range at byte " + std::to_string(at + 8));
        }
        stream.tags[r].channel = ch;
    }
    return stream;
}

void write_stream_csv(const std::string& path, const TagStream& stream) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot open '" + path + "' for writing");
    out << "timestamp_ticks,channel\n";
    for (const TimeTagRecord& tag : stream.tags) {
        out << tag.ticks << "," << unsigned{tag.channel} << "\n";
    }
    if (!out) throw DataError("failed writing '" + path + "'");
}

TagStream read_stream_csv(const std::string& path, double tick_ps) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open '" + path + "' for reading");
    std::string header;
    if (!std::getline(in, header) || header != "timestamp_ticks,channel") {
        throw DataError("'" + path +
                        "' must start with header 'timestamp_ticks,channel'");
    }
    TagStream stream;
    stream.tick_ps = tick_ps;
    std::string line;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        const auto comma = line.find(',');
        if (comma == std::string::npos) {
            throw DataError("'" + path + "' line " + std::to_string(lineno) +
                            " lacks a comma");
        }
        const std::string ts = line.substr(0, comma);
        const std::string ch = line.substr(comma + 1);
        if (ts.empty() || ts.find_first_not_of("0123456789") !=
                              std::string::npos ||
            ch.empty() || ch.find_first_not_of("0123456789") !=
                              std::string::npos) {
            throw DataError("'" + path + "' line " + std::to_string(lineno) +
                            " is malformed");
        }
        const unsigned long channel = std::stoul(ch);
        if (channel >= kChannels) {
            throw DataError("'" + path + "' line " + std::to_string(lineno) +
                            " has channel out of range");
        }
        stream.tags.push_back({std::stoull(ts),
                               static_cast<std::uint8_t>(channel)});
    }
    return stream;
}

void write_origins(const std::string& path,
                   const std::vector<std::uint8_t>& origins) {
    std::string bytes;
    bytes.reserve(16 + origins.size());
    bytes += "TORG";
    put_u32le(bytes, kOriginsVersion);
    put_u64le(bytes, origins.size());
    for (std::uint8_t o : origins) bytes.push_back(static_cast<char>(o));
    spill(path, bytes);
}

std::vector<std::uint8_t> read_origins(const std::string& path) {
    const std::string bytes = slurp(path);
    if (bytes.size() < 16 || bytes.compare(0, 4, "TORG") != 0) {
        throw DataError("'" + path + "' is not an origin sidecar");
    }
    if (get_u32le(bytes, 4) != kOriginsVersion) {
        throw DataError("'" + path + "': unsupported sidecar version");
    }
    const std::uint64_t count = get_u64le(bytes, 8);
    if (bytes.size() != 16 + count) {
        throw DataError("'" + path + "': expected " + std::to_string(count) +
                        " origin bytes, file holds " +
                        std::to_string(bytes.size() - 16));
    }
    std::vector<std::uint8_t> origins(count);
    for (std::size_t r = 0; r < count; ++r) {
        const auto o = static_cast<std::uint8_t>(bytes[16 + r]);
        if (o > 2) {
            throw DataError("'" + path + "': bad origin value at record " +
                            std::to_string(r));
        }
        origins[r] = o;
    }
    return origins;
}

}  // namespace cspdc::ttsim

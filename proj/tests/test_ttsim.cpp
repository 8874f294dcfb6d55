#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "cspdc/errors.hpp"
#include "cspdc/measurement.hpp"
#include "cspdc/qcore.hpp"
#include "cspdc/statemodel.hpp"
#include "cspdc/ttsim.hpp"
#include "test_util.hpp"

using namespace cspdc;
using namespace cspdc::ttsim;
using measurement::Setting;
using measurement::equatorial;
using measurement::setting_x;
using measurement::setting_y;
using measurement::setting_z;

namespace {

ExperimentConfig quiet_config() {
    ExperimentConfig config;
    config.eta1 = 1.0;
    config.eta2 = 1.0;
    config.eta3 = 1.0;
    config.jitter_sigma = {0, 0, 0, 0, 0, 0};
    config.channel_delay = {0, 0, 0, 0, 0, 0};
    return config;
}

// Groups tags that share one timestamp into outcome patterns.  Only valid
// with zero jitter and zero delay, where a fully detected triple lands on
// a single tick; groups that are not exactly one tag per mode are skipped.
std::vector<std::size_t> grouped_patterns(const TagStream& stream) {
    std::vector<std::size_t> patterns;
    std::size_t i = 0;
    while (i < stream.tags.size()) {
        std::size_t j = i;
        while (j < stream.tags.size() &&
               stream.tags[j].ticks == stream.tags[i].ticks) {
            ++j;
        }
        if (j - i == 3) {
            std::array<int, 3> mode_bit{-1, -1, -1};
            for (std::size_t k = i; k < j; ++k) {
                const std::size_t mode = stream.tags[k].channel / 2;
                mode_bit[mode] = stream.tags[k].channel & 1;
            }
            if (mode_bit[0] >= 0 && mode_bit[1] >= 0 && mode_bit[2] >= 0) {
                const std::size_t pattern =
                    (static_cast<std::size_t>(mode_bit[0]) << 2) |
                    (static_cast<std::size_t>(mode_bit[1]) << 1) |
                    static_cast<std::size_t>(mode_bit[2]);
                patterns.push_back(pattern);
            }
        }
        i = j;
    }
    return patterns;
}

std::string file_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    return std::string(std::istreambuf_iterator<char>(in),
                       std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("config validation rejects out-of-range fields") {
    ExperimentConfig ok = quiet_config();
    ok.duration = 1.0;
    CHECK_NOTHROW(validate(ok));

    ExperimentConfig bad = ok;
    bad.triplet_rate = -1.0;
    CHECK_THROWS_AS(validate(bad), ConfigError);
    bad = ok;
    bad.pair1_rate = -0.5;
    CHECK_THROWS_AS(validate(bad), ConfigError);
    bad = ok;
    bad.eta2 = 1.2;
    CHECK_THROWS_AS(validate(bad), ConfigError);
    bad = ok;
    bad.eta3 = -0.1;
    CHECK_THROWS_AS(validate(bad), ConfigError);
    bad = ok;
    bad.dark_rate[3] = -2.0;
    CHECK_THROWS_AS(validate(bad), ConfigError);
    bad = ok;
    bad.jitter_sigma[0] = -1.0;
    CHECK_THROWS_AS(validate(bad), ConfigError);
    bad = ok;
    bad.channel_eff[5] = 1.5;
    CHECK_THROWS_AS(validate(bad), ConfigError);
    bad = ok;
    bad.duration = 0.0;
    CHECK_THROWS_AS(validate(bad), ConfigError);
    bad = ok;
    bad.tick = 0.0;
    CHECK_THROWS_AS(validate(bad), ConfigError);
    bad = ok;
    bad.record_window = -1.0;
    CHECK_THROWS_AS(validate(bad), ConfigError);
}

TEST_CASE("simulate_setting rejects mismatched state or settings") {
    ExperimentConfig config = quiet_config();
    config.duration = 0.001;
    config.triplet_rate = 10.0;
    const auto ghz = qcore::from_pure(statemodel::make_ghz(0.0));
    const std::vector<Setting> three = {setting_x(), setting_x(), setting_x()};

    CHECK_THROWS_AS(
        simulate_setting(config, ghz, {setting_x(), setting_x()}),
        ConfigError);
    const auto bell = qcore::from_pure(qcore::phi_plus());
    CHECK_THROWS_AS(simulate_setting(config, bell, three), DimensionError);
    CHECK_THROWS_AS(simulate_setting(config, ghz, three, 0, 8), ConfigError);
}

TEST_CASE("identical inputs give identical streams, distinct indices differ") {
    ExperimentConfig config;
    config.triplet_rate = 500.0;
    config.pair1_rate = 2000.0;
    config.dark_rate = {100, 100, 50, 50, 50, 50};
    config.duration = 2.0;
    config.seed = 42;
    const auto rho = statemodel::apply_noise(qcore::from_pure(statemodel::make_ghz(0.0)),
                                             0.05, 0.8);
    const std::vector<Setting> settings = {setting_x(), setting_y(),
                                           equatorial(0.3)};

    const TagStream a = simulate_setting(config, rho, settings, 3);
    const TagStream b = simulate_setting(config, rho, settings, 3);
    REQUIRE(a.tags.size() == b.tags.size());
    CHECK(a.tags == b.tags);
    CHECK(a.origins == b.origins);

    const TagStream c = simulate_setting(config, rho, settings, 4);
    CHECK(a.tags != c.tags);
    const TagStream d = simulate_setting(config, rho, settings, 3, 7);
    CHECK(a.tags != d.tags);

    testutil::ScratchDir dir("tt-det");
    const std::string pa = (dir.path / "a.ttag").string();
    const std::string pb = (dir.path / "b.ttag").string();
    write_stream(pa, a);
    write_stream(pb, b);
    CHECK(file_bytes(pa) == file_bytes(pb));
}

TEST_CASE("vanishing duration yields an empty stream") {
    ExperimentConfig config = quiet_config();
    config.triplet_rate = 1.0;
    config.pair1_rate = 1.0;
    config.duration = 1e-12;
    config.seed = 7;
    const auto ghz = qcore::from_pure(statemodel::make_ghz(0.0));
    const TagStream stream = simulate_setting(
        config, ghz, {setting_x(), setting_x(), setting_x()});
    CHECK(stream.tags.empty());
    CHECK(stream.origins.empty());
}

TEST_CASE("dark-only run matches Poisson counting statistics") {
    ExperimentConfig config;
    config.dark_rate = {330, 330, 330, 330, 330, 330};
    config.duration = 10.0;
    config.seed = 11;
    const auto ghz = qcore::from_pure(statemodel::make_ghz(0.0));
    const TagStream stream = simulate_setting(
        config, ghz, {setting_x(), setting_x(), setting_x()});

    std::array<std::size_t, kChannels> per_channel{};
    for (std::size_t k = 0; k < stream.tags.size(); ++k) {
        REQUIRE(stream.tags[k].channel < kChannels);
        if (k > 0) CHECK(stream.tags[k].ticks >= stream.tags[k - 1].ticks);
        per_channel[stream.tags[k].channel] += 1;
        CHECK(stream.origins[k] ==
              static_cast<std::uint8_t>(TagOrigin::dark));
    }
    const double mean = 3300.0;
    const double band = 4.0 * std::sqrt(mean);
    for (std::size_t c = 0; c < kChannels; ++c) {
        CHECK(std::abs(static_cast<double>(per_channel[c]) - mean) < band);
    }
}

TEST_CASE("unpaired process populates only the mode-1 channels") {
    ExperimentConfig config = quiet_config();
    config.pair1_rate = 4000.0;
    config.eta1 = 0.25;
    config.duration = 20.0;
    config.seed = 5;
    const auto ghz = qcore::from_pure(statemodel::make_ghz(0.0));
    const TagStream stream = simulate_setting(
        config, ghz, {setting_x(), setting_x(), setting_x()});

    std::size_t n0 = 0;
    std::size_t n1 = 0;
    for (std::size_t k = 0; k < stream.tags.size(); ++k) {
        REQUIRE(stream.tags[k].channel < 2);
        CHECK(stream.origins[k] ==
              static_cast<std::uint8_t>(TagOrigin::unpaired));
        (stream.tags[k].channel == 0 ? n0 : n1) += 1;
    }
    const double mean = 4000.0 * 0.25 * 20.0;
    CHECK(std::abs(static_cast<double>(n0 + n1) - mean) <
          5.0 * std::sqrt(mean));
    CHECK(std::abs(static_cast<double>(n0) - mean / 2) <
          5.0 * std::sqrt(mean / 2));
}

TEST_CASE("detected triple outcomes follow the Born distribution") {
    ExperimentConfig config = quiet_config();
    config.triplet_rate = 1000.0;
    config.duration = 100.0;
    config.seed = 2024;
    const auto rho = statemodel::apply_noise(qcore::from_pure(statemodel::make_ghz(0.6)),
                                             0.1, 0.8);
    const std::vector<Setting> settings = {equatorial(0.3), equatorial(-0.7),
                                           setting_y()};
    const std::vector<double> probs =
        measurement::outcome_probabilities(rho, settings);

    const TagStream stream = simulate_setting(config, rho, settings);
    const std::vector<std::size_t> patterns = grouped_patterns(stream);
    const auto n = static_cast<double>(patterns.size());
    CHECK(std::abs(n - 100000.0) < 5.0 * std::sqrt(100000.0));

    std::array<std::size_t, 8> counts{};
    for (std::size_t p : patterns) counts[p] += 1;
    for (std::size_t k = 0; k < 8; ++k) {
        const double expect = n * probs[k];
        const double sigma = std::sqrt(n * probs[k] * (1.0 - probs[k]));
        CHECK(std::abs(static_cast<double>(counts[k]) - expect) <
              5.0 * sigma);
    }
}

TEST_CASE("per-channel singles rates match their composition") {
    ExperimentConfig config;
    config.triplet_rate = 100.0;
    config.pair1_rate = 1000.0;
    config.eta1 = 0.23;
    config.eta2 = 0.30;
    config.eta3 = 0.30;
    config.dark_rate = {50, 60, 70, 80, 90, 100};
    config.duration = 50.0;
    config.seed = 31;
    const auto ghz = qcore::from_pure(statemodel::make_ghz(0.0));
    const std::vector<Setting> settings = {setting_x(), setting_x(),
                                           setting_x()};
    const TagStream stream = simulate_setting(config, ghz, settings);

    std::array<double, kChannels> expect{};
    for (std::size_t c = 0; c < kChannels; ++c) expect[c] = config.dark_rate[c];
    expect[0] += config.triplet_rate * config.eta1 / 2 +
                 config.pair1_rate * config.eta1 / 2;
    expect[1] = expect[0] - config.dark_rate[0] + config.dark_rate[1];
    expect[2] += config.triplet_rate * config.eta2 / 2;
    expect[3] += config.triplet_rate * config.eta2 / 2;
    expect[4] += config.triplet_rate * config.eta3 / 2;
    expect[5] += config.triplet_rate * config.eta3 / 2;

    std::array<double, kChannels> got{};
    for (const TimeTagRecord& tag : stream.tags) got[tag.channel] += 1.0;
    for (std::size_t c = 0; c < kChannels; ++c) {
        const double mean = expect[c] * config.duration;
        CHECK(std::abs(got[c] - mean) < 5.0 * std::sqrt(mean));
    }
}

TEST_CASE("averaging the eight subsettings cancels detector imbalance") {
    ExperimentConfig config = quiet_config();
    config.triplet_rate = 12500.0;
    config.duration = 10.0;
    config.seed = 99;
    config.channel_eff = {0.9, 1.0, 1.0, 1.0, 1.0, 1.0};
    const auto ghz = qcore::from_pure(statemodel::make_ghz(0.0));
    const std::vector<Setting> settings = {setting_z(), setting_z(),
                                           setting_z()};

    auto run_counts = [&](std::size_t index, std::uint8_t mask) {
        const TagStream stream =
            simulate_setting(config, ghz, settings, index, mask);
        std::vector<std::uint64_t> counts(8, 0);
        for (std::size_t p : grouped_patterns(stream)) {
            counts[measurement::masked_outcome(p, mask)] += 1;
        }
        return counts;
    };

    // A single subsetting sees the mode-1 imbalance directly: outcomes
    // routed to the weak detector are under-counted, pulling E(zzz) away
    // from its true value of zero.
    ExperimentConfig naive = config;
    naive.duration = 16.0;
    const TagStream stream = simulate_setting(naive, ghz, settings, 50, 0);
    std::vector<std::uint64_t> naive_counts(8, 0);
    for (std::size_t p : grouped_patterns(stream)) naive_counts[p] += 1;
    const double naive_e =
        measurement::correlation_from_counts(naive_counts);
    CHECK(std::abs(naive_e) > 0.03);

    const auto masks = measurement::balanced_subsettings(3);
    std::vector<std::uint64_t> merged(8, 0);
    for (std::size_t k = 0; k < masks.size(); ++k) {
        const auto counts = run_counts(k, masks[k]);
        for (std::size_t p = 0; p < 8; ++p) merged[p] += counts[p];
    }
    const double balanced_e = measurement::correlation_from_counts(merged);
    CHECK(std::abs(balanced_e) < 0.005);
}

TEST_CASE("binary stream files round-trip bit-exactly") {
    testutil::ScratchDir dir("tt-io");
    ExperimentConfig config;
    config.triplet_rate = 200.0;
    config.pair1_rate = 500.0;
    config.dark_rate = {20, 20, 20, 20, 20, 20};
    config.duration = 1.0;
    config.seed = 17;
    const auto rho = qcore::from_pure(statemodel::make_ghz(1.0));
    const TagStream stream = simulate_setting(
        config, rho, {setting_y(), equatorial(0.1), setting_x()});
    REQUIRE(!stream.tags.empty());

    const std::string path = (dir.path / "run.ttag").string();
    write_stream(path, stream);
    const TagStream back = read_stream(path);
    CHECK(back.tags == stream.tags);
    CHECK(back.tick_ps == stream.tick_ps);
    CHECK(back.origins.empty());

    const TagStream empty{{}, {}, 156.25};
    const std::string empty_path = (dir.path / "empty.ttag").string();
    write_stream(empty_path, empty);
    CHECK(file_bytes(empty_path).size() == 16);
    CHECK(read_stream(empty_path).tags.empty());
}

TEST_CASE("stream reader reports corruption with a byte offset") {
    testutil::ScratchDir dir("tt-bad");
    TagStream stream;
    stream.tags = {{100, 0}, {200, 3}, {300, 5}};
    const std::string path = (dir.path / "ok.ttag").string();
    write_stream(path, stream);
    std::string bytes = file_bytes(path);

    auto rewrite = [&](const std::string& name, const std::string& content) {
        const std::string p = (dir.path / name).string();
        std::ofstream out(p, std::ios::binary);
        out.write(content.data(),
                  static_cast<std::streamsize>(content.size()));
        return p;
    };

    const std::string cut = rewrite("cut.ttag", bytes.substr(0, 16 + 9 + 4));
    CHECK_THROWS_WITH_AS(read_stream(cut),
                         doctest::Contains("byte 25"), DataError);

    std::string magic = bytes;
    magic[0] = 'X';
    CHECK_THROWS_WITH_AS(read_stream(rewrite("magic.ttag", magic)),
                         doctest::Contains("bad magic"), DataError);

    std::string version = bytes;
    version[4] = 9;
    CHECK_THROWS_AS(read_stream(rewrite("ver.ttag", version)), DataError);

    std::string channel = bytes;
    channel[16 + 8] = 6;
    CHECK_THROWS_AS(read_stream(rewrite("chan.ttag", channel)), DataError);

    CHECK_THROWS_AS(read_stream(rewrite("header.ttag", bytes.substr(0, 7))),
                    DataError);
}

TEST_CASE("csv stream files round-trip") {
    testutil::ScratchDir dir("tt-csv");
    TagStream stream;
    stream.tags = {{0, 0}, {64, 2}, {64, 4}, {12345678901234ULL, 5}};
    const std::string path = (dir.path / "run.csv").string();
    write_stream_csv(path, stream);
    const TagStream back = read_stream_csv(path);
    CHECK(back.tags == stream.tags);

    auto write_text = [&](const std::string& name, const std::string& text) {
        const std::string p = (dir.path / name).string();
        std::ofstream out(p);
        out << text;
        return p;
    };
    CHECK_THROWS_AS(read_stream_csv(write_text("a.csv", "ticks,channel\n")),
                    DataError);
    CHECK_THROWS_AS(
        read_stream_csv(write_text("b.csv", "timestamp_ticks,channel\n5\n")),
        DataError);
    CHECK_THROWS_AS(
        read_stream_csv(write_text("c.csv",
                                   "timestamp_ticks,channel\n5,9\n")),
        DataError);
    CHECK_THROWS_AS(
        read_stream_csv(write_text("d.csv",
                                   "timestamp_ticks,channel\n-1,0\n")),
        DataError);
}

TEST_CASE("origin sidecar round-trips and validates its length") {
    testutil::ScratchDir dir("tt-org");
    const std::vector<std::uint8_t> origins = {0, 1, 1, 2, 0, 1};
    const std::string path = (dir.path / "run.torg").string();
    write_origins(path, origins);
    CHECK(read_origins(path) == origins);

    std::string bytes = file_bytes(path);
    const std::string cut_path = (dir.path / "cut.torg").string();
    {
        std::ofstream out(cut_path, std::ios::binary);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() - 2));
    }
    CHECK_THROWS_AS(read_origins(cut_path), DataError);

    bytes[16] = 5;
    const std::string bad_path = (dir.path / "bad.torg").string();
    {
        std::ofstream out(bad_path, std::ios::binary);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    }
    CHECK_THROWS_AS(read_origins(bad_path), DataError);
}

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "cspdc/coincidence.hpp"
#include "cspdc/errors.hpp"
#include "cspdc/measurement.hpp"
#include "cspdc/qcore.hpp"
#include "cspdc/rng.hpp"
#include "cspdc/statemodel.hpp"
#include "cspdc/ttsim.hpp"
#include "test_util.hpp"

using namespace cspdc;
using namespace cspdc::coincidence;
using measurement::Setting;
using measurement::equatorial;
using measurement::setting_x;
using measurement::setting_y;
using measurement::setting_z;
using ttsim::TagStream;
using ttsim::TimeTagRecord;

namespace {

TagStream make_stream(std::vector<std::pair<std::uint64_t, int>> tags) {
    std::stable_sort(tags.begin(), tags.end(),
                     [](const auto& a, const auto& b) {
                         return a.first < b.first;
                     });
    TagStream stream;
    for (const auto& [t, c] : tags) {
        stream.tags.push_back({t, static_cast<std::uint8_t>(c)});
    }
    return stream;
}

bool same_triples(const std::vector<Triple>& a, const std::vector<Triple>& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (!(a[i].tag1 == b[i].tag1 && a[i].tag2 == b[i].tag2 &&
              a[i].tag3 == b[i].tag3)) {
            return false;
        }
    }
    return true;
}

}  // namespace

TEST_CASE("coincidence params are validated") {
    CoincidenceParams params;
    CHECK_NOTHROW(validate(params));
    params.coincidence_window = 0.0;
    CHECK_THROWS_AS(validate(params), ConfigError);
    params.coincidence_window = 20000.0;
    CHECK_THROWS_AS(validate(params), ConfigError);
    params = CoincidenceParams{};
    params.delay_correction[4] = std::nan("");
    CHECK_THROWS_AS(validate(params), ConfigError);
}

TEST_CASE("one tag per analyzer group forms one triple") {
    const TagStream stream = make_stream({{1000, 0}, {1002, 2}, {1004, 4}});
    const CoincidenceParams params;
    const auto triples = find_triples(stream, params);
    REQUIRE(triples.size() == 1);
    CHECK(triples[0].tag1.channel == 0);
    CHECK(triples[0].tag2.channel == 2);
    CHECK(triples[0].tag3.channel == 4);
    CHECK(triples[0].corr1_fs == 1000 * 156250);
    CHECK(triples[0].corr3_fs - triples[0].corr1_fs == 4 * 156250);
}

TEST_CASE("tags within one analyzer group never pair") {
    const CoincidenceParams params;
    CHECK(find_triples(make_stream({{10, 0}, {11, 1}, {12, 0}}), params)
              .empty());
    CHECK(find_triples(make_stream({{10, 0}, {11, 2}}), params).empty());
    CHECK(find_triples(make_stream({{10, 2}, {11, 3}, {12, 4}, {13, 5}}),
                       params)
              .empty());
}

TEST_CASE("unsorted or malformed streams are rejected") {
    const CoincidenceParams params;
    CHECK(find_triples(make_stream({{100, 0}}), params).empty());
    TagStream bad;
    bad.tags = {{100, 0}, {50, 2}};
    CHECK_THROWS_AS(find_triples(bad, params), DataError);
    TagStream channel;
    channel.tags = {{100, 0}};
    channel.tags[0].channel = 7;
    CHECK_THROWS_AS(find_triples(channel, params), DataError);
    TagStream zero_tick = make_stream({{1, 0}, {2, 2}, {3, 4}});
    zero_tick.tick_ps = 0.0;
    CHECK_THROWS_AS(find_triples(zero_tick, params), DataError);
}

TEST_CASE("grouping is greedy, earliest-first, one use per tag") {
    const CoincidenceParams params;

    // The earliest mode-2 tag wins even though a later one is also in range.
    auto triples =
        find_triples(make_stream({{0, 0}, {10, 2}, {20, 2}, {30, 4}}), params);
    REQUIRE(triples.size() == 1);
    CHECK(triples[0].tag2.ticks == 10);

    // A consumed tag is not reused for the second mode-1 tag.
    triples =
        find_triples(make_stream({{0, 0}, {5, 0}, {10, 2}, {12, 4}}), params);
    REQUIRE(triples.size() == 1);
    CHECK(triples[0].tag1.ticks == 0);

    // A lone early tag is abandoned once its window closes.
    triples =
        find_triples(make_stream({{0, 2}, {200, 0}, {210, 2}, {220, 4}}),
                     params);
    REQUIRE(triples.size() == 1);
    CHECK(triples[0].tag2.ticks == 210);

    // Determinism.
    const TagStream stream =
        make_stream({{0, 0}, {3, 2}, {5, 4}, {50, 1}, {52, 3}, {55, 5}});
    CHECK(same_triples(find_triples(stream, params),
                       find_triples(stream, params)));
}

TEST_CASE("delay corrections decide which tags fall in one window") {
    // Raw times 7 ns apart on channel 4 exceed a 1 ns record window until
    // the correction is applied.
    CoincidenceParams params;
    params.record_window = 1000.0;
    params.coincidence_window = 1000.0;
    const TagStream stream = make_stream({{0, 0}, {1, 2}, {45, 4}});
    CHECK(find_triples(stream, params).empty());
    params.delay_correction = {0, 0, 0, 0, 45 * 156.25, 45 * 156.25};
    const auto triples = find_triples(stream, params);
    REQUIRE(triples.size() == 1);
    CHECK(triples[0].corr3_fs == 0);
}

TEST_CASE("triple count is invariant under a global time offset") {
    ttsim::ExperimentConfig config;
    config.triplet_rate = 400.0;
    config.pair1_rate = 3000.0;
    config.dark_rate = {80, 80, 80, 80, 80, 80};
    config.duration = 4.0;
    config.seed = 21;
    const auto rho = statemodel::apply_noise(
        qcore::from_pure(statemodel::make_ghz(0.0)), 0.2, 0.7);
    TagStream stream = simulate_setting(
        config, rho, {setting_x(), setting_y(), equatorial(0.8)});
    const CoincidenceParams params;
    const std::size_t base = find_triples(stream, params).size();
    CHECK(base > 20);
    for (auto& tag : stream.tags) tag.ticks += 123456;
    CHECK(find_triples(stream, params).size() == base);
}

TEST_CASE("widening windows never lose triples") {
    ttsim::ExperimentConfig config;
    config.triplet_rate = 300.0;
    config.pair1_rate = 2000.0;
    config.dark_rate = {150, 150, 150, 150, 150, 150};
    config.duration = 4.0;
    config.seed = 77;
    const auto rho = statemodel::apply_noise(
        qcore::from_pure(statemodel::make_ghz(0.0)), 0.2, 0.7);
    const TagStream stream = simulate_setting(
        config, rho, {setting_x(), setting_y(), equatorial(0.8)});

    CoincidenceParams params;
    params.delay_correction = {0, 0, 0, 0, 7000, 7000};
    std::size_t previous = 0;
    for (double rw : {2000.0, 5000.0, 15000.0}) {
        CoincidenceParams p = params;
        p.record_window = rw;
        p.coincidence_window = rw;
        const std::size_t n = find_triples(stream, p).size();
        CHECK(n >= previous);
        previous = n;
    }

    const auto triples = find_triples(stream, params);
    const std::vector<Setting> settings = {setting_x(), setting_y(),
                                           equatorial(0.8)};
    std::uint64_t narrower = 0;
    for (double cw : {300.0, 1250.0, 15000.0}) {
        CoincidenceParams p = params;
        p.coincidence_window = cw;
        const auto table = count_table(triples, p, settings, {0});
        CHECK(table.total() >= narrower);
        narrower = table.total();
    }
    CHECK(narrower == triples.size());
}

TEST_CASE("planted triples are recalled against Poisson background") {
    Rng rng(555);
    const std::size_t plants = 2000;
    const std::uint64_t spacing = 2000000;
    std::vector<std::pair<std::uint64_t, int>> tags;
    std::vector<std::tuple<std::uint64_t, int, std::uint64_t, int,
                           std::uint64_t, int>>
        truth;
    for (std::size_t i = 0; i < plants; ++i) {
        const std::uint64_t base = (i + 1) * spacing;
        const std::uint64_t t1 = base + rng.next_u64() % 5;
        const std::uint64_t t2 = base + rng.next_u64() % 5;
        const std::uint64_t t3 = base + rng.next_u64() % 5;
        const int c1 = rng.bernoulli(0.5) ? 1 : 0;
        const int c2 = rng.bernoulli(0.5) ? 3 : 2;
        const int c3 = rng.bernoulli(0.5) ? 5 : 4;
        tags.push_back({t1, c1});
        tags.push_back({t2, c2});
        tags.push_back({t3, c3});
        truth.emplace_back(t1, c1, t2, c2, t3, c3);
    }
    const double duration_s = static_cast<double>((plants + 1) * spacing) *
                              156.25e-12;
    for (int c = 0; c < 6; ++c) {
        double t = 0.0;
        for (;;) {
            t += rng.exponential(1e4);
            if (t >= duration_s) break;
            tags.push_back(
                {static_cast<std::uint64_t>(std::llround(t * 1e12 / 156.25)),
                 c});
        }
    }
    const TagStream stream = make_stream(tags);
    const auto triples = find_triples(stream, CoincidenceParams{});

    std::set<std::tuple<std::uint64_t, int, std::uint64_t, int, std::uint64_t,
                        int>>
        found;
    for (const Triple& t : triples) {
        found.emplace(t.tag1.ticks, t.tag1.channel, t.tag2.ticks,
                      t.tag2.channel, t.tag3.ticks, t.tag3.channel);
    }
    std::size_t recalled = 0;
    for (const auto& key : truth) {
        if (found.count(key) > 0) ++recalled;
    }
    CHECK(static_cast<double>(recalled) >=
          0.99 * static_cast<double>(plants));
}

TEST_CASE("streaming pass keeps a bounded buffer through bursts") {
    std::vector<std::pair<std::uint64_t, int>> tags;
    // Sparse carpet: one tag per thousand ticks, cycling channels.
    for (std::size_t i = 0; i < 60000; ++i) {
        tags.push_back({static_cast<std::uint64_t>(i) * 1000,
                        static_cast<int>(i % 6)});
    }
    // Burst: 900 tags from two analyzer groups packed into a few record
    // windows, so nothing completes and everything waits for eviction.
    for (std::size_t i = 0; i < 900; ++i) {
        tags.push_back({30000000 + i / 6, static_cast<int>((i % 2) * 2)});
    }
    const TagStream stream = make_stream(tags);
    TripleStats stats;
    find_triples(stream, CoincidenceParams{}, &stats);
    CHECK(stats.peak_buffered >= 300);
    CHECK(stats.peak_buffered <= 1200);
}

TEST_CASE("histogram bins the central triple and respects bin width") {
    std::vector<Triple> triples(1);
    triples[0].corr1_fs = 1000 * 156250;
    triples[0].corr2_fs = 1000 * 156250;
    triples[0].corr3_fs = 1000 * 156250;
    const CoincidenceParams params;
    Histogram2D h = histogram2d(triples, params, 156.25);
    CHECK(h.half_span == 96);
    CHECK(h.side() == 193);
    CHECK(h.at(0, 0) == 1);
    std::uint64_t total = 0;
    for (std::uint64_t n : h.counts) total += n;
    CHECK(total == 1);
    CHECK(argmax_bin(h) == std::pair<std::int64_t, std::int64_t>{0, 0});

    Triple shifted = triples[0];
    shifted.corr2_fs += 3 * 156250;
    shifted.corr3_fs += 1 * 156250;
    h = histogram2d({shifted}, params, 156.25);
    CHECK(h.at(3, -2) == 1);

    // bin_ticks = 4 uses floor division on tick differences.
    Histogram2D coarse = histogram2d({shifted}, params, 156.25, 4);
    CHECK(coarse.at(0, -1) == 1);
    CHECK_THROWS_AS(histogram2d(triples, params, 156.25, 0), ConfigError);
}

TEST_CASE("uniform time differences give a flat central histogram") {
    Rng rng(31);
    std::vector<Triple> triples;
    const std::int64_t tick_fs = 156250;
    for (std::size_t i = 0; i < 50000; ++i) {
        Triple t;
        const std::int64_t base =
            static_cast<std::int64_t>(i + 1) * 1000 * tick_fs;
        const auto d21 = static_cast<std::int64_t>(rng.next_u64() % 65) - 32;
        const auto d32 = static_cast<std::int64_t>(rng.next_u64() % 65) - 32;
        t.corr1_fs = base;
        t.corr2_fs = base + d21 * tick_fs;
        t.corr3_fs = t.corr2_fs + d32 * tick_fs;
        triples.push_back(t);
    }
    const Histogram2D h = histogram2d(triples, CoincidenceParams{}, 156.25);
    const double bins = 65.0 * 65.0;
    const double lambda = 50000.0 / bins;
    double chi2 = 0.0;
    for (std::int64_t a = -32; a <= 32; ++a) {
        for (std::int64_t b = -32; b <= 32; ++b) {
            const double d = static_cast<double>(h.at(a, b)) - lambda;
            chi2 += d * d / lambda;
        }
    }
    const double df = bins - 1.0;
    CHECK(std::abs(chi2 - df) < 6.0 * std::sqrt(2.0 * df));
}

TEST_CASE("snr compares mean region contents") {
    Histogram2D h;
    h.half_span = 5;
    h.counts.assign(h.side() * h.side(), 0);
    h.at(0, 0) = 40;
    h.at(0, 1) = 20;
    h.at(3, 3) = 10;
    h.at(4, 3) = 10;
    h.at(3, 4) = 10;
    h.at(4, 4) = 10;

    const Region peak = rect_region(0, 0, 0, 1);
    const Region background = rect_region(3, 4, 3, 4);
    const SnrResult r = snr(h, peak, background);
    CHECK_FALSE(r.infinite);
    CHECK(r.value == doctest::Approx(3.0));

    const SnrResult equal = snr(h, rect_region(3, 3, 3, 4),
                                rect_region(4, 4, 3, 4));
    CHECK(equal.value == doctest::Approx(1.0));

    const SnrResult saturated = snr(h, peak, rect_region(-5, -4, -5, -4));
    CHECK(saturated.infinite);
    CHECK(std::isinf(saturated.value));

    CHECK_THROWS_AS(snr(h, peak, peak), ConfigError);
    CHECK_THROWS_AS(snr(h, peak, Region{}), ConfigError);
    CHECK_THROWS_AS(snr(h, peak, rect_region(5, 6, 0, 0)), ConfigError);
    CHECK_THROWS_AS(rect_region(2, 1, 0, 0), ConfigError);
}

TEST_CASE("histogram csv lists nonzero bins in tick units") {
    std::vector<Triple> triples(1);
    triples[0].corr1_fs = 0;
    triples[0].corr2_fs = 2 * 156250;
    triples[0].corr3_fs = -3 * 156250;
    const Histogram2D h =
        histogram2d(triples, CoincidenceParams{}, 156.25, 1);
    const std::string path = "/tmp/qc_hist.csv";
    write_histogram_csv(path, h);
    std::ifstream in(path);
    std::string line;
    std::getline(in, line);
    CHECK(line == "t21_ticks,t32_ticks,count");
    std::getline(in, line);
    CHECK(line == "2,-5,1");
    CHECK_FALSE(std::getline(in, line));
}

TEST_CASE("count tables bin windowed triples by sign pattern") {
    const std::vector<Setting> settings = {setting_x(), setting_y(),
                                           setting_z()};
    const CoincidenceParams params;

    Triple inside;
    inside.tag1 = {1000, 0};
    inside.tag2 = {1001, 2};
    inside.tag3 = {1002, 4};
    inside.corr1_fs = 1000 * 156250;
    inside.corr2_fs = 1001 * 156250;
    inside.corr3_fs = 1002 * 156250;

    auto table = count_table({inside}, params, settings, {0});
    CHECK(table.total() == 1);
    CHECK(table.counts[0] == 1);
    CHECK(table.settings.size() == 3);

    // 1.25 ns is 8 ticks; a 12-tick span must be excluded.
    Triple outside = inside;
    outside.corr3_fs = inside.corr1_fs + 12 * 156250;
    table = count_table({inside, outside}, params, settings, {0});
    CHECK(table.total() == 1);

    Triple minus;
    minus.tag1 = {2000, 1};
    minus.tag2 = {2001, 2};
    minus.tag3 = {2002, 5};
    minus.corr1_fs = 2000 * 156250;
    minus.corr2_fs = 2001 * 156250;
    minus.corr3_fs = 2002 * 156250;
    table = count_table({inside, minus}, params, settings, {0});
    CHECK(table.counts[0] == 1);
    CHECK(table.counts[5] == 1);

    // Per-triple relabeling masks undo a subsetting swap.
    table = count_table({inside, minus}, params, settings, {7, 7});
    CHECK(table.counts[7] == 1);
    CHECK(table.counts[2] == 1);

    CHECK_THROWS_AS(count_table({inside}, params, settings, {0, 0}),
                    ConfigError);
    CHECK_THROWS_AS(count_table({inside}, params, settings, {9}),
                    ConfigError);
    CHECK_THROWS_AS(
        count_table({inside}, params, {setting_x(), setting_y()}, {0}),
        ConfigError);
}

TEST_CASE("delay calibration recovers configured offsets to one tick") {
    ttsim::ExperimentConfig config;
    config.triplet_rate = 3000.0;
    config.eta1 = 1.0;
    config.eta2 = 1.0;
    config.eta3 = 1.0;
    config.jitter_sigma = {30, 30, 30, 30, 30, 30};
    config.channel_delay = {0, 312.5, 1250, -625, 7031.25, 7187.5};
    config.duration = 2.0;
    config.seed = 3;
    const auto mixed = qcore::validate_physical(
        0.125 * qcore::identity(8));
    const TagStream stream = simulate_setting(
        config, mixed, {setting_x(), setting_x(), setting_x()});

    const auto corrections = delay_calibrate(stream, CoincidenceParams{});
    CHECK(corrections[0] == 0.0);
    for (std::size_t c = 1; c < 6; ++c) {
        CHECK(std::abs(corrections[c] - config.channel_delay[c]) <=
              156.25 + 1e-9);
    }

    // Corrected streams center the coincidence peak.
    CoincidenceParams calibrated;
    calibrated.delay_correction = corrections;
    const auto triples = find_triples(stream, calibrated);
    CHECK(triples.size() > 3000);
    const Histogram2D h = histogram2d(triples, calibrated, 156.25);
    const auto [p21, p32] = argmax_bin(h);
    CHECK(std::abs(p21) <= 1);
    CHECK(std::abs(p32) <= 1);

    // Dark-only data has no coincidence peak to calibrate on.
    ttsim::ExperimentConfig dark;
    dark.dark_rate = {500, 500, 500, 500, 500, 500};
    dark.duration = 2.0;
    dark.seed = 4;
    const TagStream noise = simulate_setting(
        dark, mixed, {setting_x(), setting_x(), setting_x()});
    CHECK_THROWS_AS(delay_calibrate(noise, CoincidenceParams{}), DataError);
}

TEST_CASE("paper-like stream shows a central peak and a delayed ridge") {
    ttsim::ExperimentConfig config;
    config.triplet_rate = 200000.0;
    config.pair1_rate = 1000000.0;
    config.dark_rate = {200, 200, 200, 200, 200, 200};
    config.duration = 0.5;
    config.seed = 12;
    const auto rho = statemodel::apply_noise(
        qcore::from_pure(statemodel::make_ghz(0.0)), 0.2, 0.7);
    const std::vector<Setting> settings = {setting_x(), setting_y(),
                                           equatorial(0.8)};
    const TagStream stream = simulate_setting(config, rho, settings);

    const CoincidenceParams raw;
    const auto triples = find_triples(stream, raw);
    const Histogram2D h = histogram2d(triples, raw, 156.25);
    const auto [p21, p32] = argmax_bin(h);
    CHECK(std::abs(p21) <= 2);
    CHECK(p32 >= 43);
    CHECK(p32 <= 46);

    std::uint64_t ridge = 0;
    std::uint64_t off_ridge = 0;
    for (std::int64_t a = 15; a <= 80; ++a) {
        for (std::int64_t r = p32 - 1; r <= p32 + 1; ++r) {
            ridge += h.at(a, r) + h.at(-a, r);
            off_ridge += h.at(a, r - 25) + h.at(-a, r - 25);
        }
    }
    CHECK(ridge >= 10);
    CHECK(ridge > 5 * off_ridge);
}

TEST_CASE("paper-scale efficiencies reproduce the detected triple rate") {
    ttsim::ExperimentConfig config;
    config.triplet_rate = 8.937;
    config.duration = 5400.0;
    config.seed = 8;
    const auto rho = statemodel::apply_noise(
        qcore::from_pure(statemodel::make_ghz(3.14159)), 0.0, 0.737);
    const std::vector<Setting> settings = {setting_x(), setting_x(),
                                           setting_x()};
    const TagStream stream = simulate_setting(config, rho, settings);

    const CoincidenceParams raw;
    const auto triples = find_triples(stream, raw);
    const double per_minute =
        static_cast<double>(triples.size()) / config.duration * 60.0;
    CHECK(per_minute == doctest::Approx(11.1).epsilon(0.10));

    // After calibration the narrow window keeps nearly all triples.
    const auto corrections = delay_calibrate(stream, raw);
    CoincidenceParams calibrated;
    calibrated.delay_correction = corrections;
    const auto centered = find_triples(stream, calibrated);
    const auto table = count_table(centered, calibrated, settings, {0});
    CHECK(static_cast<double>(table.total()) >=
          0.97 * static_cast<double>(centered.size()));
}

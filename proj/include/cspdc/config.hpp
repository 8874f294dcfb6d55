#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace cspdc::config {

// INI-style configuration: [section] headers, key = value pairs, blank
// lines and '#' comments.  Keys are unique per section; values are kept
// verbatim and converted by the typed getters.
struct Entry {
    std::string value;
    std::size_t line = 0;
};

struct Section {
    std::map<std::string, Entry> entries;
    std::size_t line = 0;
};

struct Config {
    std::string origin;  // path or label used in error messages
    std::map<std::string, Section> sections;

    bool has(const std::string& section, const std::string& key) const;

    std::string get_string(const std::string& section,
                           const std::string& key) const;
    double get_double(const std::string& section,
                      const std::string& key) const;
    std::int64_t get_int(const std::string& section,
                         const std::string& key) const;
    bool get_bool(const std::string& section, const std::string& key) const;
    std::vector<double> get_double_list(const std::string& section,
                                        const std::string& key) const;

    std::string get_string_or(const std::string& section,
                              const std::string& key,
                              const std::string& fallback) const;
    double get_double_or(const std::string& section, const std::string& key,
                         double fallback) const;
    std::int64_t get_int_or(const std::string& section,
                            const std::string& key,
                            std::int64_t fallback) const;
    bool get_bool_or(const std::string& section, const std::string& key,
                     bool fallback) const;
};

Config parse_config_text(const std::string& text,
                         const std::string& origin);
Config load_config(const std::string& path);

// Every section and key must appear in the schema; violations name the
// offending line.
void enforce_schema(
    const Config& cfg,
    const std::map<std::string, std::vector<std::string>>& schema);

// FNV-1a over the canonical (sorted) section/key/value serialization, so
// formatting and ordering do not change the hash.
std::uint64_t config_hash(const Config& cfg);

std::string version_string();

struct RunManifest {
    std::string command;
    std::string config_path;
    std::uint64_t config_fnv = 0;
    std::uint64_t seed = 0;
    double time_scale = 1.0;
    std::string version;
};

// Written as a small INI file so it can be re-read with load_config.
void write_manifest(const std::string& path, const RunManifest& manifest);

}  // namespace cspdc::config

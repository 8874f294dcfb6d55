#include "cspdc/config.hpp"

#include <cctype>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "cspdc/errors.hpp"

namespace cspdc::config {

namespace {

std::string trim(const std::string& s) {
    std::size_t b = 0;
    std::size_t e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

[[noreturn]] void fail(const std::string& origin, std::size_t line,
                       const std::string& what) {
    throw ConfigError(origin + ":" + std::to_string(line) + ": " + what);
}

const Entry& lookup(const Config& cfg, const std::string& section,
                    const std::string& key) {
    const auto s = cfg.sections.find(section);
    if (s == cfg.sections.end()) {
        throw ConfigError(cfg.origin + ": missing section [" + section +
                          "]");
    }
    const auto k = s->second.entries.find(key);
    if (k == s->second.entries.end()) {
        throw ConfigError(cfg.origin + ": missing key " + section + "." +
                          key);
    }
    return k->second;
}

double parse_double(const Config& cfg, const std::string& key,
                    const Entry& entry, const std::string& token) {
    std::size_t pos = 0;
    double v = 0.0;
    try {
        v = std::stod(token, &pos);
    } catch (const std::exception&) {
        pos = 0;
    }
    if (token.empty() || pos != token.size() || !std::isfinite(v)) {
        fail(cfg.origin, entry.line,
             "key " + key + " has a bad number '" + token + "'");
    }
    return v;
}

}  // namespace

bool Config::has(const std::string& section, const std::string& key) const {
    const auto s = sections.find(section);
    return s != sections.end() &&
           s->second.entries.find(key) != s->second.entries.end();
}

std::string Config::get_string(const std::string& section,
                               const std::string& key) const {
    return lookup(*this, section, key).value;
}

double Config::get_double(const std::string& section,
                          const std::string& key) const {
    const Entry& entry = lookup(*this, section, key);
    return parse_double(*this, section + "." + key, entry, entry.value);
}

std::int64_t Config::get_int(const std::string& section,
                             const std::string& key) const {
    const Entry& entry = lookup(*this, section, key);
    std::size_t pos = 0;
    long long v = 0;
    try {
        v = std::stoll(entry.value, &pos);
    } catch (const std::exception&) {
        pos = 0;
    }
    if (entry.value.empty() || pos != entry.value.size()) {
        fail(origin, entry.line, "key " + section + "." + key +
                                     " has a bad integer '" + entry.value +
                                     "'");
    }
    return v;
}

bool Config::get_bool(const std::string& section,
                      const std::string& key) const {
    const Entry& entry = lookup(*this, section, key);
    if (entry.value == "true") return true;
    if (entry.value == "false") return false;
    fail(origin, entry.line, "key " + section + "." + key +
                                 " must be true or false, got '" +
                                 entry.value + "'");
}

std::vector<double> Config::get_double_list(const std::string& section,
                                            const std::string& key) const {
    const Entry& entry = lookup(*this, section, key);
    std::vector<double> values;
    std::string token;
    std::istringstream in(entry.value);
    while (std::getline(in, token, ',')) {
        values.push_back(parse_double(*this, section + "." + key, entry,
                                      trim(token)));
    }
    if (values.empty() ||
        (!entry.value.empty() && entry.value.back() == ',')) {
        fail(origin, entry.line,
             "key " + section + "." + key + " has a bad list '" +
                 entry.value + "'");
    }
    return values;
}

std::string Config::get_string_or(const std::string& section,
                                  const std::string& key,
                                  const std::string& fallback) const {
    return has(section, key) ? get_string(section, key) : fallback;
}

double Config::get_double_or(const std::string& section,
                             const std::string& key, double fallback) const {
    return has(section, key) ? get_double(section, key) : fallback;
}

std::int64_t Config::get_int_or(const std::string& section,
                                const std::string& key,
                                std::int64_t fallback) const {
    return has(section, key) ? get_int(section, key) : fallback;
}

bool Config::get_bool_or(const std::string& section, const std::string& key,
                         bool fallback) const {
    return has(section, key) ? get_bool(section, key) : fallback;
}

Config parse_config_text(const std::string& text,
                         const std::string& origin) {
    Config cfg;
    cfg.origin = origin;
    std::istringstream in(text);
    std::string raw;
    std::size_t line_no = 0;
    std::string current;
    while (std::getline(in, raw)) {
        ++line_no;
        const std::size_t hash = raw.find('#');
        if (hash != std::string::npos) raw = raw.substr(0, hash);
        const std::string line = trim(raw);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']' || line.size() < 3) {
                fail(origin, line_no, "bad section header '" + line + "'");
            }
            current = trim(line.substr(1, line.size() - 2));
            if (current.empty()) {
                fail(origin, line_no, "empty section name");
            }
            if (cfg.sections.count(current) > 0) {
                fail(origin, line_no,
                     "duplicate section [" + current + "]");
            }
            cfg.sections[current].line = line_no;
            continue;
        }
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos) {
            fail(origin, line_no, "expected key = value, got '" + line +
                                      "'");
        }
        if (current.empty()) {
            fail(origin, line_no, "key outside any section");
        }
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty()) fail(origin, line_no, "empty key");
        if (value.empty()) {
            fail(origin, line_no, "key " + key + " has an empty value");
        }
        auto& entries = cfg.sections[current].entries;
        if (entries.count(key) > 0) {
            fail(origin, line_no, "duplicate key " + current + "." + key);
        }
        entries[key] = Entry{value, line_no};
    }
    return cfg;
}

Config load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path);
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return parse_config_text(buffer.str(), path);
}

void enforce_schema(
    const Config& cfg,
    const std::map<std::string, std::vector<std::string>>& schema) {
    for (const auto& [name, section] : cfg.sections) {
        const auto it = schema.find(name);
        if (it == schema.end()) {
            fail(cfg.origin, section.line, "unknown section [" + name +
                                               "]");
        }
        for (const auto& [key, entry] : section.entries) {
            bool known = false;
            for (const std::string& allowed : it->second) {
                if (allowed == key) {
                    known = true;
                    break;
                }
            }
            if (!known) {
                fail(cfg.origin, entry.line,
                     "unknown key " + name + "." + key);
            }
        }
    }
}

std::uint64_t config_hash(const Config& cfg) {
    std::uint64_t h = 1469598103934665603ULL;
    auto mix = [&](const std::string& s) {
        for (unsigned char c : s) {
            h ^= c;
            h *= 1099511628211ULL;
        }
        h ^= 0x1f;
        h *= 1099511628211ULL;
    };
    for (const auto& [name, section] : cfg.sections) {
        mix(name);
        for (const auto& [key, entry] : section.entries) {
            mix(key);
            mix(entry.value);
        }
    }
    return h;
}

std::string version_string() { return "cspdc 0.1.0"; }

void write_manifest(const std::string& path, const RunManifest& manifest) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write manifest " + path);
    out << "[manifest]\n";
    out << "command = " << manifest.command << "\n";
    out << "config = " << manifest.config_path << "\n";
    out << "config_fnv = " << manifest.config_fnv << "\n";
    out << "seed = " << manifest.seed << "\n";
    out << "time_scale = " << std::setprecision(17) << manifest.time_scale
        << "\n";
    out << "version = " << manifest.version << "\n";
    if (!out) throw DataError("failed writing manifest " + path);
}

}  // namespace cspdc::config

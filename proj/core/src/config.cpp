#include "covar/config.hpp"

#include <cctype>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "covar/errors.hpp"

namespace covar {

namespace {

std::string trim(const std::string& s) {
    std::size_t b = 0;
    std::size_t e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

std::vector<std::string> split_commas(const std::string& s) {
    std::vector<std::string> out;
    std::string item;
    std::stringstream ss(s);
    while (std::getline(ss, item, ',')) out.push_back(trim(item));
    if (!out.empty() && out.back().empty()) out.pop_back();
    return out;
}

double parse_double(const std::string& key, const std::string& v) {
    char* end = nullptr;
    const double x = std::strtod(v.c_str(), &end);
    if (end == v.c_str() || *end != '\0')
        throw ConfigError("key '" + key + "': expected a number, got '" + v + "'");
    return x;
}

}  // namespace

KeyValueConfig KeyValueConfig::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    return from_string(buf.str(), path);
}

KeyValueConfig KeyValueConfig::from_string(const std::string& text, const std::string& origin) {
    KeyValueConfig cfg;
    cfg.origin_ = origin;
    std::stringstream ss(text);
    std::string line;
    int lineno = 0;
    while (std::getline(ss, line)) {
        ++lineno;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError(origin + ":" + std::to_string(lineno) +
                              ": expected 'key = value', got '" + line + "'");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty())
            throw ConfigError(origin + ":" + std::to_string(lineno) + ": empty key");
        cfg.values_[key] = value;
    }
    return cfg;
}

void KeyValueConfig::set(const std::string& key, const std::string& value) {
    values_[trim(key)] = trim(value);
}

void KeyValueConfig::set_pair(const std::string& pair) {
    const std::size_t eq = pair.find('=');
    if (eq == std::string::npos)
        throw ConfigError("override must be key=value, got '" + pair + "'");
    set(pair.substr(0, eq), pair.substr(eq + 1));
}

bool KeyValueConfig::has(const std::string& key) const {
    return values_.count(key) != 0;
}

std::string KeyValueConfig::raw(const std::string& key) {
    auto it = values_.find(key);
    if (it == values_.end())
        throw ConfigError("missing required key '" + key + "' in " + origin_);
    consumed_.insert(key);
    return it->second;
}

std::string KeyValueConfig::get_string(const std::string& key) { return raw(key); }

std::string KeyValueConfig::get_string(const std::string& key, const std::string& fallback) {
    if (!has(key)) return fallback;
    return raw(key);
}

double KeyValueConfig::get_double(const std::string& key) {
    return parse_double(key, raw(key));
}

double KeyValueConfig::get_double(const std::string& key, double fallback) {
    if (!has(key)) return fallback;
    return get_double(key);
}

long long KeyValueConfig::get_int(const std::string& key) {
    const double x = get_double(key);
    const long long n = static_cast<long long>(x >= 0 ? x + 0.5 : x - 0.5);
    if (std::abs(x - static_cast<double>(n)) > 1e-9)
        throw ConfigError("key '" + key + "': expected an integer");
    return n;
}

long long KeyValueConfig::get_int(const std::string& key, long long fallback) {
    if (!has(key)) return fallback;
    return get_int(key);
}

bool KeyValueConfig::get_bool(const std::string& key, bool fallback) {
    if (!has(key)) return fallback;
    const std::string v = raw(key);
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw ConfigError("key '" + key + "': expected a boolean, got '" + v + "'");
}

std::vector<double> KeyValueConfig::get_double_list(const std::string& key) {
    const std::string v = raw(key);
    std::vector<double> out;
    for (const auto& item : split_commas(v)) out.push_back(parse_double(key, item));
    return out;
}

std::vector<double> KeyValueConfig::get_double_list(const std::string& key,
                                                    const std::vector<double>& fallback) {
    if (!has(key)) return fallback;
    return get_double_list(key);
}

std::vector<std::string> KeyValueConfig::get_string_list(const std::string& key) {
    return split_commas(raw(key));
}

std::vector<std::string> KeyValueConfig::keys_with_prefix(const std::string& prefix) const {
    std::vector<std::string> out;
    const std::string p = prefix + ".";
    for (const auto& [k, v] : values_)
        if (k.rfind(p, 0) == 0) out.push_back(k);
    return out;
}

std::vector<std::string> KeyValueConfig::subsections(const std::string& prefix) const {
    std::set<std::string> names;
    const std::string p = prefix + ".";
    for (const auto& [k, v] : values_) {
        if (k.rfind(p, 0) != 0) continue;
        const std::string rest = k.substr(p.size());
        const std::size_t dot = rest.find('.');
        if (dot != std::string::npos) names.insert(rest.substr(0, dot));
    }
    return {names.begin(), names.end()};
}

void KeyValueConfig::consume_prefix(const std::string& prefix) {
    for (const auto& k : keys_with_prefix(prefix)) consumed_.insert(k);
}

void KeyValueConfig::ensure_all_consumed() const {
    for (const auto& [k, v] : values_) {
        if (!consumed_.count(k))
            throw ConfigError("unknown key '" + k + "' in " + origin_);
    }
}

}  // namespace covar

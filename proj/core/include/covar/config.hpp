#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

namespace covar {

// Flat `key = value` configuration with dotted-key namespacing.
//
//   # comment
//   model.q = 10
//   portfolio.a.weights = 2, 1, -1
//
// Values are strings until a typed getter is called. Every getter marks its
// key as consumed; after loading a structure, call ensure_all_consumed() to
// reject unrecognized keys by name. Later assignments (including --override
// pairs) replace earlier ones.
class KeyValueConfig {
public:
    KeyValueConfig() = default;

    static KeyValueConfig from_file(const std::string& path);
    static KeyValueConfig from_string(const std::string& text,
                                      const std::string& origin = "<string>");

    void set(const std::string& key, const std::string& value);
    // Parses "key=value"; used by CLI --override.
    void set_pair(const std::string& pair);

    bool has(const std::string& key) const;

    std::string get_string(const std::string& key);
    std::string get_string(const std::string& key, const std::string& fallback);
    double get_double(const std::string& key);
    double get_double(const std::string& key, double fallback);
    long long get_int(const std::string& key);
    long long get_int(const std::string& key, long long fallback);
    bool get_bool(const std::string& key, bool fallback);
    std::vector<double> get_double_list(const std::string& key);
    std::vector<double> get_double_list(const std::string& key,
                                        const std::vector<double>& fallback);
    std::vector<std::string> get_string_list(const std::string& key);

    // Keys beginning with `prefix.`; does not mark them consumed.
    std::vector<std::string> keys_with_prefix(const std::string& prefix) const;
    // Distinct middle tokens of `prefix.<token>.rest` keys, in sorted order.
    std::vector<std::string> subsections(const std::string& prefix) const;

    // Marks every key under `prefix.` consumed (for sections handed off wholesale).
    void consume_prefix(const std::string& prefix);

    // Throws ConfigError naming the first unconsumed key.
    void ensure_all_consumed() const;

    const std::string& origin() const { return origin_; }

private:
    std::string raw(const std::string& key);

    std::map<std::string, std::string> values_;
    mutable std::set<std::string> consumed_;
    std::string origin_ = "<empty>";
};

}  // namespace covar

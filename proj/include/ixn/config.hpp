#pragma once

#include <map>
#include <string>
#include <vector>

#include "ixn/tensor.hpp"

namespace ixn {

/// Flat key=value run configuration. UTF-8 text, one `key = value` per
/// line, `#` comments. Unknown keys are rejected (fail-closed) naming the
/// offending key; command-line flags override file keys.
class RunConfig {
public:
    RunConfig();

    /// Parses a config file and merges it over the defaults.
    void load_file(const std::string& path);

    /// Parses a single `key=value` override (CLI flags).
    void set(const std::string& key, const std::string& value);

    bool has(const std::string& key) const;
    std::string get(const std::string& key, const std::string& fallback = "") const;
    long get_int(const std::string& key, long fallback) const;
    double get_double(const std::string& key, double fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;
    std::vector<long> get_int_list(const std::string& key) const;
    std::vector<std::string> get_list(const std::string& key) const;

    static const std::vector<std::string>& known_keys();

private:
    void check_known(const std::string& key) const;
    std::map<std::string, std::string> values_;
};

}  // namespace ixn

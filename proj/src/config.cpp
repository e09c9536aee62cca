#include "ixn/config.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace ixn {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

}  // namespace

const std::vector<std::string>& RunConfig::known_keys() {
    static const std::vector<std::string> keys = {
        "dataset_dir",   "train_images", "test_images",  "resize",
        "out_dir",       "pairs",        "family",       "variant",
        "normalization", "epochs",       "batch_size",   "lr",
        "lr_decay_epochs", "optimizer",  "momentum",     "loss",
        "seed",          "subset_size",  "eval_subset",  "profile",
        "precision",     "timing",       "grid_images",  "mirror_url",
    };
    return keys;
}

RunConfig::RunConfig() {
    // Dataset root defaults to the environment when set.
    if (const char* env = std::getenv("IXN_DATA_DIR"); env && *env)
        values_["dataset_dir"] = env;
}

void RunConfig::check_known(const std::string& key) const {
    const auto& keys = known_keys();
    if (std::find(keys.begin(), keys.end(), key) == keys.end())
        throw ConfigError("unknown config key '" + key + "'");
}

void RunConfig::load_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open config '" + path + "'");
    std::string line;
    int lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos)
            line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError(path + ":" + std::to_string(lineno) +
                              ": expected 'key = value', got '" + line + "'");
        set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
}

void RunConfig::set(const std::string& key, const std::string& value) {
    check_known(key);
    values_[key] = value;
}

bool RunConfig::has(const std::string& key) const { return values_.count(key) > 0; }

std::string RunConfig::get(const std::string& key, const std::string& fallback) const {
    check_known(key);
    const auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
}

long RunConfig::get_int(const std::string& key, long fallback) const {
    const std::string v = get(key);
    if (v.empty()) return fallback;
    try {
        std::size_t pos = 0;
        const long r = std::stol(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return r;
    } catch (const std::exception&) {
        throw ConfigError("key '" + key + "': '" + v + "' is not an integer");
    }
}

double RunConfig::get_double(const std::string& key, double fallback) const {
    const std::string v = get(key);
    if (v.empty()) return fallback;
    try {
        std::size_t pos = 0;
        const double r = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return r;
    } catch (const std::exception&) {
        throw ConfigError("key '" + key + "': '" + v + "' is not a number");
    }
}

bool RunConfig::get_bool(const std::string& key, bool fallback) const {
    const std::string v = get(key);
    if (v.empty()) return fallback;
    if (v == "on" || v == "true" || v == "1") return true;
    if (v == "off" || v == "false" || v == "0") return false;
    throw ConfigError("key '" + key + "': '" + v + "' is not a boolean");
}

std::vector<std::string> RunConfig::get_list(const std::string& key) const {
    std::vector<std::string> out;
    std::stringstream ss(get(key));
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

std::vector<long> RunConfig::get_int_list(const std::string& key) const {
    std::vector<long> out;
    for (const auto& s : get_list(key)) {
        try {
            out.push_back(std::stol(s));
        } catch (const std::exception&) {
            throw ConfigError("key '" + key + "': '" + s + "' is not an integer");
        }
    }
    return out;
}

}  // namespace ixn

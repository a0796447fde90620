#include "bafc/config.hpp"

#include <algorithm>
#include <climits>

#include "bafc/errors.hpp"
#include "bafc/util.hpp"

namespace bafc {

namespace {

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split_commas(const std::string& s) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        std::size_t comma = s.find(',', start);
        out.push_back(trim(s.substr(start, comma - start)));
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    return out;
}

} // namespace

KvConfig KvConfig::parse(const std::string& text, const std::vector<std::string>& allowed_keys) {
    KvConfig cfg;
    std::size_t pos = 0;
    int line_no = 0;
    while (pos <= text.size()) {
        std::size_t nl = text.find('\n', pos);
        std::string line = text.substr(pos, nl == std::string::npos ? std::string::npos : nl - pos);
        pos = nl == std::string::npos ? text.size() + 1 : nl + 1;
        ++line_no;
        std::size_t hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        line = trim(line);
        if (line.empty()) continue;
        std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(line_no) + ": expected key=value");
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        if (key.empty()) throw ConfigError("config line " + std::to_string(line_no) + ": empty key");
        if (std::find(allowed_keys.begin(), allowed_keys.end(), key) == allowed_keys.end()) {
            std::string known;
            for (const auto& k : allowed_keys) known += (known.empty() ? "" : ", ") + k;
            throw ConfigError("config line " + std::to_string(line_no) + ": unknown key '" + key +
                              "' (known keys: " + known + ")");
        }
        if (cfg.values_.count(key)) throw ConfigError("config line " + std::to_string(line_no) + ": duplicate key '" + key + "'");
        cfg.values_[key] = value;
    }
    return cfg;
}

KvConfig KvConfig::load(const std::string& path, const std::vector<std::string>& allowed_keys) {
    std::string text;
    try {
        text = read_file_text(path);
    } catch (const DataError& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    return parse(text, allowed_keys);
}

std::string KvConfig::get_string(const std::string& key, const std::string& fallback) const {
    auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
}

int KvConfig::get_int(const std::string& key, int fallback) const {
    long long v = get_i64(key, fallback);
    if (v < INT_MIN || v > INT_MAX) throw ConfigError("config: value of '" + key + "' out of int range");
    return static_cast<int>(v);
}

long long KvConfig::get_i64(const std::string& key, long long fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    try {
        std::size_t used = 0;
        long long v = std::stoll(it->second, &used);
        if (used != it->second.size()) throw std::invalid_argument(it->second);
        return v;
    } catch (const std::exception&) {
        throw ConfigError("config: value of '" + key + "' is not an integer: '" + it->second + "'");
    }
}

std::uint64_t KvConfig::get_u64(const std::string& key, std::uint64_t fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    try {
        std::size_t used = 0;
        unsigned long long v = std::stoull(it->second, &used);
        if (used != it->second.size()) throw std::invalid_argument(it->second);
        return v;
    } catch (const std::exception&) {
        throw ConfigError("config: value of '" + key + "' is not an unsigned integer: '" + it->second + "'");
    }
}

double KvConfig::get_double(const std::string& key, double fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    try {
        std::size_t used = 0;
        double v = std::stod(it->second, &used);
        if (used != it->second.size()) throw std::invalid_argument(it->second);
        return v;
    } catch (const std::exception&) {
        throw ConfigError("config: value of '" + key + "' is not a number: '" + it->second + "'");
    }
}

std::vector<int> KvConfig::get_int_list(const std::string& key, const std::vector<int>& fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    std::vector<int> out;
    for (const std::string& tok : split_commas(it->second)) {
        try {
            std::size_t used = 0;
            out.push_back(std::stoi(tok, &used));
            if (used != tok.size()) throw std::invalid_argument(tok);
        } catch (const std::exception&) {
            throw ConfigError("config: value of '" + key + "' is not an integer list: '" + it->second + "'");
        }
    }
    return out;
}

std::vector<std::string> KvConfig::get_string_list(const std::string& key,
                                                   const std::vector<std::string>& fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    return split_commas(it->second);
}

} // namespace bafc

#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace bafc {

// Flat key=value configuration ('#' comments, blank lines ignored). Parsing
// validates every key against an allowlist so typos fail loudly.
class KvConfig {
public:
    static KvConfig parse(const std::string& text, const std::vector<std::string>& allowed_keys);
    static KvConfig load(const std::string& path, const std::vector<std::string>& allowed_keys);

    bool has(const std::string& key) const { return values_.count(key) != 0; }

    std::string get_string(const std::string& key, const std::string& fallback) const;
    int get_int(const std::string& key, int fallback) const;
    long long get_i64(const std::string& key, long long fallback) const;
    std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
    double get_double(const std::string& key, double fallback) const;

    // Comma-separated integer list.
    std::vector<int> get_int_list(const std::string& key, const std::vector<int>& fallback) const;
    std::vector<std::string> get_string_list(const std::string& key, const std::vector<std::string>& fallback) const;

    const std::map<std::string, std::string>& values() const { return values_; }

private:
    std::map<std::string, std::string> values_;
};

} // namespace bafc

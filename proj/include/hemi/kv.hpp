#pragma once

#include <cstddef>
#include <iosfwd>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace hemi {

/// Flat `key = value` text with `#` comments. Used for run configs and
/// checkpoint manifests.
class key_values {
public:
    void set(std::string key, std::string value);
    bool has(std::string_view key) const;

    // Typed getters throw usage_error naming the key on missing or bad values.
    const std::string& get(std::string_view key) const;
    std::string get_or(std::string_view key, std::string fallback) const;
    std::size_t get_size(std::string_view key) const;
    double get_double(std::string_view key) const;
    bool get_bool(std::string_view key) const;

    const std::map<std::string, std::string, std::less<>>& entries() const { return entries_; }

private:
    std::map<std::string, std::string, std::less<>> entries_;
};

key_values parse_key_values(std::istream& in, const std::string& source);

std::string trim(std::string_view s);
std::vector<std::string> split_list(std::string_view s, char sep = ',');
std::vector<std::string> split_tabs(std::string_view line);

/// Shortest representation that parses back to the same double.
std::string format_double(double v);

std::size_t parse_size(std::string_view text, std::string_view what);
double parse_double(std::string_view text, std::string_view what);
bool parse_bool(std::string_view text, std::string_view what);

}  // namespace hemi

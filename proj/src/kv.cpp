#include "hemi/kv.hpp"

#include "hemi/error.hpp"

#include <array>
#include <charconv>
#include <istream>

namespace hemi {

void key_values::set(std::string key, std::string value) { entries_[std::move(key)] = std::move(value); }

bool key_values::has(std::string_view key) const { return entries_.find(key) != entries_.end(); }

const std::string& key_values::get(std::string_view key) const {
    auto it = entries_.find(key);
    if (it == entries_.end()) throw usage_error("missing configuration key '" + std::string(key) + "'");
    return it->second;
}

std::string key_values::get_or(std::string_view key, std::string fallback) const {
    auto it = entries_.find(key);
    return it == entries_.end() ? fallback : it->second;
}

std::size_t key_values::get_size(std::string_view key) const { return parse_size(get(key), key); }

double key_values::get_double(std::string_view key) const { return parse_double(get(key), key); }

bool key_values::get_bool(std::string_view key) const { return parse_bool(get(key), key); }

std::string trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(first, last - first + 1));
}

key_values parse_key_values(std::istream& in, const std::string& source) {
    key_values kv;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        const std::string body = trim(line);
        if (body.empty()) continue;
        const auto eq = body.find('=');
        if (eq == std::string::npos) {
            throw usage_error(source + ":" + std::to_string(lineno) + ": expected 'key = value'");
        }
        std::string key = trim(std::string_view(body).substr(0, eq));
        if (key.empty()) throw usage_error(source + ":" + std::to_string(lineno) + ": empty key");
        kv.set(std::move(key), trim(std::string_view(body).substr(eq + 1)));
    }
    return kv;
}

std::vector<std::string> split_list(std::string_view s, char sep) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (start <= s.size()) {
        std::size_t pos = s.find(sep, start);
        if (pos == std::string_view::npos) pos = s.size();
        std::string item = trim(s.substr(start, pos - start));
        if (!item.empty()) out.push_back(std::move(item));
        start = pos + 1;
    }
    return out;
}

std::vector<std::string> split_tabs(std::string_view line) {
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        std::size_t pos = line.find('\t', start);
        if (pos == std::string_view::npos) {
            out.emplace_back(line.substr(start));
            break;
        }
        out.emplace_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    return out;
}

std::string format_double(double v) {
    std::array<char, 32> buf{};
    auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    return std::string(buf.data(), res.ptr);
}

std::size_t parse_size(std::string_view text, std::string_view what) {
    std::size_t v = 0;
    auto res = std::from_chars(text.data(), text.data() + text.size(), v);
    if (text.empty() || res.ec != std::errc() || res.ptr != text.data() + text.size()) {
        throw usage_error("'" + std::string(what) + "' expects a non-negative integer, got '" + std::string(text) + "'");
    }
    return v;
}

double parse_double(std::string_view text, std::string_view what) {
    double v = 0.0;
    auto res = std::from_chars(text.data(), text.data() + text.size(), v);
    if (text.empty() || res.ec != std::errc() || res.ptr != text.data() + text.size()) {
        throw usage_error("'" + std::string(what) + "' expects a number, got '" + std::string(text) + "'");
    }
    return v;
}

bool parse_bool(std::string_view text, std::string_view what) {
    if (text == "true" || text == "1" || text == "yes" || text == "on") return true;
    if (text == "false" || text == "0" || text == "no" || text == "off") return false;
    throw usage_error("'" + std::string(what) + "' expects true/false, got '" + std::string(text) + "'");
}

}  // namespace hemi

#include "fairlink/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "fairlink/errors.hpp"

namespace fairlink {

namespace {

std::string trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return std::string(s.substr(first, last - first + 1));
}

template <class T>
T parse_or_throw(const std::string& key, const std::string& text) {
    std::string_view s = text;
    if (!s.empty() && s.front() == '+') s.remove_prefix(1);
    T out{};
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    if (s.empty() || ec != std::errc() || ptr != s.data() + s.size()) {
        throw ValidationError("config key '" + key + "': cannot parse \"" + text + "\"");
    }
    return out;
}

}  // namespace

std::vector<std::string> split_list(std::string_view s) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (start <= s.size()) {
        const auto pos = s.find(',', start);
        std::string item = trim(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
        if (!item.empty()) out.push_back(std::move(item));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

KeyValues KeyValues::parse(std::string_view text, const std::string& source) {
    KeyValues kv;
    std::istringstream in{std::string(text)};
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string s = trim(line);
        if (s.empty() || s.front() == '#') continue;
        const auto eq = s.find('=');
        if (eq == std::string::npos) {
            throw ParseError(source + ":" + std::to_string(lineno) + ": expected 'key = value', got \"" + s + "\"");
        }
        std::string key = trim(std::string_view(s).substr(0, eq));
        std::string value = trim(std::string_view(s).substr(eq + 1));
        if (key.empty()) throw ParseError(source + ":" + std::to_string(lineno) + ": empty key");
        if (kv.has(key)) throw ParseError(source + ":" + std::to_string(lineno) + ": duplicate key '" + key + "'");
        kv.values_.emplace(std::move(key), std::move(value));
    }
    return kv;
}

KeyValues KeyValues::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open config " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse(ss.str(), path.string());
}

void KeyValues::require_known(std::initializer_list<std::string_view> allowed, std::string_view context) const {
    for (const auto& [key, value] : values_) {
        bool ok = false;
        for (auto a : allowed) ok = ok || a == key;
        if (!ok) throw ValidationError("unknown key '" + key + "' for " + std::string(context));
    }
}

std::string KeyValues::get_string(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw ValidationError("missing config key '" + key + "'");
    return it->second;
}

std::string KeyValues::get_string(const std::string& key, const std::string& fallback) const {
    return has(key) ? get_string(key) : fallback;
}

double KeyValues::get_double(const std::string& key) const { return parse_or_throw<double>(key, get_string(key)); }
double KeyValues::get_double(const std::string& key, double fallback) const {
    return has(key) ? get_double(key) : fallback;
}

std::int64_t KeyValues::get_int(const std::string& key) const {
    return parse_or_throw<std::int64_t>(key, get_string(key));
}
std::int64_t KeyValues::get_int(const std::string& key, std::int64_t fallback) const {
    return has(key) ? get_int(key) : fallback;
}

std::uint64_t KeyValues::get_u64(const std::string& key) const {
    return parse_or_throw<std::uint64_t>(key, get_string(key));
}
std::uint64_t KeyValues::get_u64(const std::string& key, std::uint64_t fallback) const {
    return has(key) ? get_u64(key) : fallback;
}

std::vector<std::int64_t> KeyValues::get_int_list(const std::string& key) const {
    std::vector<std::int64_t> out;
    for (const auto& item : split_list(get_string(key))) out.push_back(parse_or_throw<std::int64_t>(key, item));
    return out;
}

std::vector<double> KeyValues::get_double_list(const std::string& key) const {
    std::vector<double> out;
    for (const auto& item : split_list(get_string(key))) out.push_back(parse_or_throw<double>(key, item));
    return out;
}

std::vector<std::string> KeyValues::get_string_list(const std::string& key) const {
    return split_list(get_string(key));
}

std::string KeyValues::serialize() const {
    std::string out;
    for (const auto& [key, value] : values_) out += key + " = " + value + "\n";
    return out;
}

void KeyValues::save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw RuntimeFailure("cannot write " + path.string());
    out << serialize();
}

}  // namespace fairlink

#pragma once

#include <cstdint>
#include <filesystem>
#include <initializer_list>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace fairlink {

// Plain-text `key = value` configuration. '#' starts a comment line.
// Keys are kept sorted so serialization is canonical.
class KeyValues {
public:
    static KeyValues parse(std::string_view text, const std::string& source = "<config>");
    static KeyValues load(const std::filesystem::path& path);

    void set(const std::string& key, const std::string& value) { values_[key] = value; }
    bool has(const std::string& key) const { return values_.count(key) > 0; }
    const std::map<std::string, std::string>& entries() const noexcept { return values_; }

    // Throws ValidationError naming the first key not in `allowed`.
    void require_known(std::initializer_list<std::string_view> allowed, std::string_view context) const;

    std::string get_string(const std::string& key) const;
    std::string get_string(const std::string& key, const std::string& fallback) const;
    double get_double(const std::string& key) const;
    double get_double(const std::string& key, double fallback) const;
    std::int64_t get_int(const std::string& key) const;
    std::int64_t get_int(const std::string& key, std::int64_t fallback) const;
    std::uint64_t get_u64(const std::string& key) const;
    std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
    std::vector<std::int64_t> get_int_list(const std::string& key) const;
    std::vector<double> get_double_list(const std::string& key) const;
    std::vector<std::string> get_string_list(const std::string& key) const;

    std::string serialize() const;
    void save(const std::filesystem::path& path) const;

private:
    std::map<std::string, std::string> values_;
};

std::vector<std::string> split_list(std::string_view s);

}  // namespace fairlink

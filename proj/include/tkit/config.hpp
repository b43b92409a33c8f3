#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <istream>
#include <map>
#include <optional>
#include <string>

namespace tkit {

/// Flat `section.key=value` text configuration. Blank lines and lines
/// starting with '#' are ignored. Typed getters throw std::invalid_argument
/// naming the offending key.
class Config {
public:
    static Config parse(std::istream &is, const std::string &source = "<config>");
    static Config load(const std::filesystem::path &path);

    bool has(const std::string &key) const { return entries_.count(key) != 0; }
    void set(const std::string &key, const std::string &value) { entries_[key] = value; }
    const std::map<std::string, std::string> &entries() const { return entries_; }

    std::string get_string(const std::string &key, const std::string &fallback) const;
    std::string require_string(const std::string &key) const;
    double get_double(const std::string &key, double fallback) const;
    std::size_t get_size(const std::string &key, std::size_t fallback) const;
    std::size_t require_size(const std::string &key) const;
    std::uint64_t get_u64(const std::string &key, std::uint64_t fallback) const;
    bool get_bool(const std::string &key, bool fallback) const;

private:
    std::optional<std::string> find(const std::string &key) const;

    std::string source_;
    std::map<std::string, std::string> entries_;
};

} // namespace tkit

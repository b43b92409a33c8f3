#include "tkit/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <stdexcept>

namespace tkit {

namespace {

std::string trim(const std::string &s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) {
        return {};
    }
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

} // namespace

Config Config::parse(std::istream &is, const std::string &source) {
    Config cfg;
    cfg.source_ = source;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const auto text = trim(line);
        if (text.empty() || text[0] == '#') {
            continue;
        }
        const auto eq = text.find('=');
        if (eq == std::string::npos) {
            throw std::invalid_argument(source + ":" + std::to_string(lineno) +
                                        ": expected key=value, got '" + text + "'");
        }
        const auto key = trim(text.substr(0, eq));
        if (key.empty()) {
            throw std::invalid_argument(source + ":" + std::to_string(lineno) + ": empty key");
        }
        cfg.entries_[key] = trim(text.substr(eq + 1));
    }
    return cfg;
}

Config Config::load(const std::filesystem::path &path) {
    std::ifstream is(path);
    if (!is) {
        throw std::invalid_argument(path.string() + ": cannot open config file");
    }
    return parse(is, path.string());
}

std::optional<std::string> Config::find(const std::string &key) const {
    auto it = entries_.find(key);
    if (it == entries_.end()) {
        return std::nullopt;
    }
    return it->second;
}

std::string Config::get_string(const std::string &key, const std::string &fallback) const {
    return find(key).value_or(fallback);
}

std::string Config::require_string(const std::string &key) const {
    auto v = find(key);
    if (!v) {
        throw std::invalid_argument(source_ + ": missing required key '" + key + "'");
    }
    return *v;
}

double Config::get_double(const std::string &key, double fallback) const {
    auto v = find(key);
    if (!v) {
        return fallback;
    }
    try {
        std::size_t used = 0;
        const double d = std::stod(*v, &used);
        if (used != v->size() || !std::isfinite(d)) {
            throw std::invalid_argument("trailing characters");
        }
        return d;
    } catch (const std::exception &) {
        throw std::invalid_argument(source_ + ": key '" + key + "': expected a number, got '" +
                                    *v + "'");
    }
}

std::uint64_t Config::get_u64(const std::string &key, std::uint64_t fallback) const {
    auto v = find(key);
    if (!v) {
        return fallback;
    }
    std::uint64_t out = 0;
    const auto *end = v->data() + v->size();
    const auto [ptr, ec] = std::from_chars(v->data(), end, out);
    if (ec != std::errc() || ptr != end) {
        throw std::invalid_argument(source_ + ": key '" + key +
                                    "': expected a non-negative integer, got '" + *v + "'");
    }
    return out;
}

std::size_t Config::get_size(const std::string &key, std::size_t fallback) const {
    return static_cast<std::size_t>(get_u64(key, fallback));
}

std::size_t Config::require_size(const std::string &key) const {
    if (!has(key)) {
        throw std::invalid_argument(source_ + ": missing required key '" + key + "'");
    }
    return get_size(key, 0);
}

bool Config::get_bool(const std::string &key, bool fallback) const {
    auto v = find(key);
    if (!v) {
        return fallback;
    }
    if (*v == "true" || *v == "1" || *v == "yes" || *v == "on") {
        return true;
    }
    if (*v == "false" || *v == "0" || *v == "no" || *v == "off") {
        return false;
    }
    throw std::invalid_argument(source_ + ": key '" + key + "': expected a boolean, got '" + *v +
                                "'");
}

} // namespace tkit

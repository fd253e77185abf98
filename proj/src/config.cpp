#include "qforage/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "qforage/error.hpp"

namespace qforage {

namespace {
std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}
}  // namespace

Settings::Settings(std::vector<Entry> defaults) : entries_(std::move(defaults)) {}

void Settings::set(std::string_view key, std::string value) {
    for (auto& [k, v] : entries_)
        if (k == key) {
            v = std::move(value);
            return;
        }
    throw Error(ErrorKind::ConfigError, "unknown config key '" + std::string(key) + "'");
}

void Settings::overlay(const std::vector<Entry>& entries) {
    for (const auto& [k, v] : entries) set(k, v);
}

bool Settings::has(std::string_view key) const {
    return std::any_of(entries_.begin(), entries_.end(), [&](const Entry& e) { return e.first == key; });
}

const std::string& Settings::get(std::string_view key) const {
    for (const auto& [k, v] : entries_)
        if (k == key) return v;
    throw Error(ErrorKind::ConfigError, "unknown config key '" + std::string(key) + "'");
}

double Settings::get_double(std::string_view key) const {
    try {
        return parse_double(get(key));
    } catch (const Error&) {
        throw Error(ErrorKind::ConfigError, "config key '" + std::string(key) + "' is not a number");
    }
}

std::size_t Settings::get_size(std::string_view key) const {
    return static_cast<std::size_t>(get_u64(key));
}

std::uint64_t Settings::get_u64(std::string_view key) const {
    const std::string& text = get(key);
    std::uint64_t value = 0;
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc() || ptr != text.data() + text.size())
        throw Error(ErrorKind::ConfigError, "config key '" + std::string(key) + "' is not a nonnegative integer");
    return value;
}

std::vector<std::string> Settings::echo() const {
    std::vector<std::string> out;
    for (const auto& [k, v] : entries_) out.push_back(k + "=" + v);
    return out;
}

std::vector<Settings::Entry> parse_config_text(std::string_view text) {
    std::vector<Settings::Entry> entries;
    std::istringstream in{std::string(text)};
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string t = trim(line);
        if (t.empty() || t.front() == '#') continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos) throw Error(ErrorKind::ConfigError, "expected key=value", line_no);
        std::string key = trim(std::string_view(t).substr(0, eq));
        std::string value = trim(std::string_view(t).substr(eq + 1));
        if (key.empty()) throw Error(ErrorKind::ConfigError, "empty config key", line_no);
        entries.emplace_back(std::move(key), std::move(value));
    }
    return entries;
}

std::vector<Settings::Entry> load_config_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::IoError, "cannot open config '" + path.string() + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str());
}

std::string format_double(double x) {
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, x);
    return std::string(buf, ptr);
}

std::string format_double17(double x) {
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, x, std::chars_format::general, 17);
    return std::string(buf, ptr);
}

double parse_double(std::string_view text) {
    double value = 0.0;
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc() || ptr != text.data() + text.size() || text.empty())
        throw Error(ErrorKind::ParseError, "'" + std::string(text) + "' is not a decimal number");
    return value;
}

}  // namespace qforage

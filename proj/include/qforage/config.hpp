#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace qforage {

// Ordered flat key=value settings. Keys are fixed by the defaults; overlays
// may only replace values of known keys.
class Settings {
public:
    using Entry = std::pair<std::string, std::string>;

    Settings() = default;
    explicit Settings(std::vector<Entry> defaults);

    // Throws ConfigError for keys not present in the defaults.
    void set(std::string_view key, std::string value);
    void overlay(const std::vector<Entry>& entries);

    bool has(std::string_view key) const;
    const std::string& get(std::string_view key) const;
    double get_double(std::string_view key) const;
    std::size_t get_size(std::string_view key) const;
    std::uint64_t get_u64(std::string_view key) const;

    const std::vector<Entry>& entries() const noexcept { return entries_; }
    // "key=value" lines in key order of the defaults.
    std::vector<std::string> echo() const;

private:
    std::vector<Entry> entries_;
};

// Flat key=value text; '#' starts a comment line; blank lines ignored.
std::vector<Settings::Entry> parse_config_text(std::string_view text);
std::vector<Settings::Entry> load_config_file(const std::filesystem::path& path);

// Shortest decimal that round-trips (17 significant digits at most).
std::string format_double(double x);
// Exactly 17 significant digits.
std::string format_double17(double x);
double parse_double(std::string_view text);

}  // namespace qforage

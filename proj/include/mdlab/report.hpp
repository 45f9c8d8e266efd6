#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace mdlab {

inline constexpr const char* kVersion = "0.1.0";

// Locale-independent, 17 significant digits.
std::string format_double(double x);
std::string format_int(long long x);

// Serialized like nlohmann::json::dump but every floating-point number is
// written with 17 significant digits; non-finite values become null.
std::string dump_json(const nlohmann::json& j, int indent = 2);
void write_json(const std::filesystem::path& path, const nlohmann::json& j);
nlohmann::json read_json(const std::filesystem::path& path);

class CsvWriter {
public:
    CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header);
    void row(const std::vector<std::string>& cells);

private:
    std::ofstream out_;
    std::size_t columns_;
};

struct RunManifest {
    std::string command;
    nlohmann::json config;
    std::uint64_t seed = 0;
    std::vector<std::string> outputs;
    std::string version = kVersion;
    // Only recorded on request, so repeated runs stay byte-identical.
    std::optional<double> wall_clock_seconds;

    nlohmann::json to_json() const;
};

}  // namespace mdlab

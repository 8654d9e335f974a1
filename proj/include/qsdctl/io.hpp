#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

namespace qsdctl::io {

inline constexpr const char* tool_version = "1.0.0";

/// Shortest decimal that round-trips to the same double.
std::string format_double(double value);

/// CSV with a header row; each column name carries its unit, e.g.
/// "time (s)". Values are written as round-trip decimals.
class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header);

  CsvWriter& cell(double value);
  CsvWriter& cell(std::int64_t value);
  CsvWriter& cell(const std::string& value);
  void end_row();

 private:
  std::ofstream out_;
  std::size_t columns_;
  std::size_t current_ = 0;
};

void write_json(const std::filesystem::path& path, const nlohmann::json& value);
nlohmann::json read_json(const std::filesystem::path& path);

std::string sha256_hex(const std::filesystem::path& path);
std::string utc_timestamp();

struct RunManifest {
  std::string version = tool_version;
  std::string command;
  std::vector<std::string> arguments;  // full argument list after the program name
  nlohmann::json flags = nlohmann::json::object();
  std::string model_path;
  std::string model_sha256;
  std::vector<std::uint64_t> seeds;
  std::string started;
  std::string finished;
  int exit_code = 0;
  std::vector<std::string> outputs;  // relative to the output directory

  nlohmann::json to_json() const;
  static RunManifest from_json(const nlohmann::json& j);
};

}  // namespace qsdctl::io

#include "qsdctl/io.hpp"

#include <charconv>
#include <chrono>
#include <cmath>
#include <ctime>
#include <memory>
#include <stdexcept>

#include <openssl/evp.h>

namespace qsdctl::io {

std::string format_double(double value) {
  if (std::isnan(value)) return "nan";
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  char buffer[64];
  const auto [ptr, ec] = std::to_chars(buffer, buffer + sizeof buffer, value);
  if (ec != std::errc()) throw std::runtime_error("number formatting failed");
  return std::string(buffer, ptr);
}

CsvWriter::CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header)
    : out_(path, std::ios::binary), columns_(header.size()) {
  if (!out_) throw std::runtime_error("cannot write " + path.string());
  for (const auto& name : header) cell(name);
  end_row();
}

CsvWriter& CsvWriter::cell(const std::string& value) {
  if (current_ == columns_) throw std::logic_error("CSV row has too many cells");
  if (current_ > 0) out_ << ',';
  if (value.find_first_of(",\"\n") != std::string::npos) {
    out_ << '"';
    for (char c : value) out_ << (c == '"' ? "\"\"" : std::string(1, c));
    out_ << '"';
  } else {
    out_ << value;
  }
  ++current_;
  return *this;
}

CsvWriter& CsvWriter::cell(double value) { return cell(format_double(value)); }

CsvWriter& CsvWriter::cell(std::int64_t value) { return cell(std::to_string(value)); }

void CsvWriter::end_row() {
  if (current_ != columns_) throw std::logic_error("CSV row has too few cells");
  out_ << '\n';
  current_ = 0;
}

void write_json(const std::filesystem::path& path, const nlohmann::json& value) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << value.dump(2) << '\n';
}

nlohmann::json read_json(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  return nlohmann::json::parse(in);
}

std::string sha256_hex(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr);
  char buffer[1 << 14];
  while (in.read(buffer, sizeof buffer) || in.gcount() > 0) {
    EVP_DigestUpdate(ctx.get(), buffer, static_cast<std::size_t>(in.gcount()));
  }
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int length = 0;
  EVP_DigestFinal_ex(ctx.get(), digest, &length);
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < length; ++i) {
    out.push_back(hex[digest[i] >> 4]);
    out.push_back(hex[digest[i] & 15]);
  }
  return out;
}

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buffer[32];
  std::strftime(buffer, sizeof buffer, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buffer;
}

nlohmann::json RunManifest::to_json() const {
  return {{"tool", "qsdctl"},        {"version", version},   {"command", command},
          {"arguments", arguments},  {"flags", flags},       {"model", {{"path", model_path}, {"sha256", model_sha256}}},
          {"seeds", seeds},          {"started", started},   {"finished", finished},
          {"exit_code", exit_code},  {"outputs", outputs}};
}

RunManifest RunManifest::from_json(const nlohmann::json& j) {
  RunManifest m;
  m.version = j.at("version").get<std::string>();
  m.command = j.at("command").get<std::string>();
  m.arguments = j.at("arguments").get<std::vector<std::string>>();
  m.flags = j.value("flags", nlohmann::json::object());
  m.model_path = j.at("model").value("path", "");
  m.model_sha256 = j.at("model").value("sha256", "");
  m.seeds = j.value("seeds", std::vector<std::uint64_t>{});
  m.started = j.value("started", "");
  m.finished = j.value("finished", "");
  m.exit_code = j.value("exit_code", 0);
  m.outputs = j.value("outputs", std::vector<std::string>{});
  return m;
}

}  // namespace qsdctl::io

#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>

#include "qsdctl/model.hpp"

namespace qsdctl {

/// Schema or expression error in a model file. `key` is the offending
/// section.key path (empty for syntax errors located by line only).
class ModelFileError : public std::runtime_error {
 public:
  ModelFileError(std::string key, const std::string& what) : std::runtime_error(what), key_(std::move(key)) {}
  const std::string& key() const noexcept { return key_; }

 private:
  std::string key_;
};

// Model file layout (INI):
//
//   name = logistic
//
//   [controls]
//   parameters = c            ; optional, comma-separated
//   a1 = c=1                  ; one key per action, in order
//   a2 = c=1.5
//
//   [rates]
//   birth = 2*n
//   death = c*n^2
//   cost = 1
//
//   [progeny]                 ; optional, default p1 = 1
//   kind = table              ; or geometric
//   k_max = 2
//   p1 = 0.5                  ; table weights, expressions in n and parameters
//   p2 = 0.5
//   mean = 3                  ; geometric only
//
//   [constants]               ; every key optional
//   b_bar = 2
//   M = 1
//   d_lower = 1
//   epsilon = 1
//   d_bar = n + n^2
//
//   [truncation]
//   N = 200
//
// Unknown sections or keys are errors. Rates are checked on {1..N} for every
// action at load time.
ModelSpec parse_model(std::string_view text, const std::string& source = "<string>");
ModelSpec load_model(const std::filesystem::path& path);

}  // namespace qsdctl

#include "qsdctl/model_file.hpp"

#include <charconv>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <boost/algorithm/string/trim.hpp>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

namespace qsdctl {

namespace {

using boost::property_tree::ptree;

std::string trimmed(std::string_view text) { return boost::algorithm::trim_copy(std::string(text)); }

std::vector<std::string> split(std::string_view text, char separator) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const auto end = text.find(separator, start);
    out.push_back(trimmed(text.substr(start, end == std::string_view::npos ? std::string_view::npos : end - start)));
    if (end == std::string_view::npos) break;
    start = end + 1;
  }
  return out;
}

double parse_number(const std::string& key, const std::string& text) {
  double value = 0.0;
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end || text.empty()) {
    throw ModelFileError(key, key + ": expected a number, got '" + text + "'");
  }
  return value;
}

int parse_int(const std::string& key, const std::string& text) {
  int value = 0;
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end || text.empty()) {
    throw ModelFileError(key, key + ": expected an integer, got '" + text + "'");
  }
  return value;
}

Expression parse_expression(const std::string& key, const std::string& text, std::span<const std::string> params) {
  try {
    return Expression::parse(text, params);
  } catch (const ExpressionError& e) {
    throw ModelFileError(key, key + ": " + e.what());
  }
}

// Section view that remembers which keys were consumed.
class Section {
 public:
  Section(std::string name, const ptree* tree) : name_(std::move(name)), tree_(tree) {}

  bool present() const { return tree_ != nullptr; }
  std::string path(const std::string& key) const { return name_.empty() ? key : name_ + "." + key; }

  std::optional<std::string> get(const std::string& key) {
    if (!tree_) return std::nullopt;
    const auto it = tree_->find(key);
    if (it == tree_->not_found()) return std::nullopt;
    used_.insert(key);
    return trimmed(it->second.data());
  }

  std::string require(const std::string& key) {
    auto value = get(key);
    if (!value) throw ModelFileError(path(key), "missing required key " + path(key));
    return *value;
  }

  void reject_unknown() const {
    if (!tree_) return;
    for (const auto& [key, child] : *tree_) {
      if (!child.empty()) continue;  // subsections are checked at the top level
      if (!used_.count(key)) throw ModelFileError(path(key), "unknown key " + path(key));
    }
  }

  const ptree* tree() const { return tree_; }

 private:
  std::string name_;
  const ptree* tree_;
  std::set<std::string> used_;
};

Section section(const ptree& root, const std::string& name) {
  const auto it = root.find(name);
  return {name, it == root.not_found() ? nullptr : &it->second};
}

// ini_parser has no inline comments; strip ';' and '#' tails so line numbers
// are preserved.
std::string strip_comments(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  bool comment = false;
  for (char c : text) {
    if (c == '\n') comment = false;
    else if (c == ';' || c == '#') comment = true;
    if (!comment) out.push_back(c);
  }
  return out;
}

ControlSet parse_controls(Section& controls) {
  if (!controls.present()) throw ModelFileError("controls", "missing section [controls]");
  std::vector<std::string> params;
  if (auto list = controls.get("parameters"); list && !list->empty()) params = split(*list, ',');
  std::vector<Action> actions;
  for (const auto& [name, child] : *controls.tree()) {
    if (name == "parameters") continue;
    controls.get(name);
    const std::string key = controls.path(name);
    std::map<std::string, double> assigned;
    const std::string body = trimmed(child.data());
    if (!body.empty()) {
      for (const auto& item : split(body, ',')) {
        const auto eq = item.find('=');
        if (eq == std::string::npos) throw ModelFileError(key, key + ": expected name=value, got '" + item + "'");
        const std::string param = trimmed(item.substr(0, eq));
        if (std::find(params.begin(), params.end(), param) == params.end()) {
          throw ModelFileError(key, key + ": unknown control parameter '" + param + "'");
        }
        if (!assigned.emplace(param, parse_number(key, trimmed(item.substr(eq + 1)))).second) {
          throw ModelFileError(key, key + ": parameter '" + param + "' assigned twice");
        }
      }
    }
    Action action{name, {}};
    for (const auto& p : params) {
      const auto it = assigned.find(p);
      if (it == assigned.end()) throw ModelFileError(key, key + ": parameter '" + p + "' not assigned");
      action.parameters.push_back(it->second);
    }
    actions.push_back(std::move(action));
  }
  try {
    return ControlSet(params, std::move(actions));
  } catch (const ModelError& e) {
    throw ModelFileError("controls", std::string("controls: ") + e.what());
  }
}

ProgenyLaw parse_progeny(Section& progeny, std::span<const std::string> params) {
  if (!progeny.present()) return ProgenyLaw::single_offspring();
  const std::string kind = progeny.get("kind").value_or("table");
  const int k_max = parse_int(progeny.path("k_max"), progeny.get("k_max").value_or("1"));
  if (k_max < 1) throw ModelFileError(progeny.path("k_max"), "progeny.k_max must be >= 1");
  if (kind == "geometric") {
    return ProgenyLaw::geometric(parse_expression(progeny.path("mean"), progeny.require("mean"), params), k_max);
  }
  if (kind != "table") {
    throw ModelFileError(progeny.path("kind"), "progeny.kind must be 'table' or 'geometric', got '" + kind + "'");
  }
  ProgenyLaw law;
  law.kind = ProgenyLaw::Kind::table;
  law.k_max = k_max;
  for (int k = 1; k <= k_max; ++k) {
    const std::string key = "p" + std::to_string(k);
    const auto text = progeny.get(key);
    law.weights.push_back(text ? parse_expression(progeny.path(key), *text, params) : Expression::constant(0.0));
  }
  return law;
}

}  // namespace

ModelSpec parse_model(std::string_view text, const std::string& source) {
  ptree root;
  try {
    std::istringstream in(strip_comments(text));
    boost::property_tree::ini_parser::read_ini(in, root);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ModelFileError("", source + ":" + std::to_string(e.line()) + ": " + e.message());
  }

  static const std::set<std::string> sections = {"controls", "rates", "progeny", "constants", "truncation"};
  for (const auto& [key, child] : root) {
    if (!child.empty() && !sections.count(key)) throw ModelFileError(key, "unknown section [" + key + "]");
  }

  ModelSpec model;
  Section top("", &root);
  model.name = top.get("name").value_or(std::filesystem::path(source).stem().string());
  for (const auto& name : sections) top.get(name);
  top.reject_unknown();

  Section controls = section(root, "controls");
  model.controls = parse_controls(controls);
  controls.reject_unknown();
  const auto params = model.controls.parameter_names();

  Section rates = section(root, "rates");
  if (!rates.present()) throw ModelFileError("rates", "missing section [rates]");
  model.birth = parse_expression("rates.birth", rates.require("birth"), params);
  model.death = parse_expression("rates.death", rates.require("death"), params);
  model.cost = parse_expression("rates.cost", rates.require("cost"), params);
  rates.reject_unknown();

  Section progeny = section(root, "progeny");
  model.progeny = parse_progeny(progeny, params);
  progeny.reject_unknown();

  Section constants = section(root, "constants");
  if (auto v = constants.get("b_bar")) model.constants.birth_bound = parse_number("constants.b_bar", *v);
  if (auto v = constants.get("M")) model.constants.progeny_bound = parse_number("constants.M", *v);
  if (auto v = constants.get("d_lower")) model.constants.death_lower = parse_number("constants.d_lower", *v);
  if (auto v = constants.get("epsilon")) model.constants.epsilon = parse_number("constants.epsilon", *v);
  if (auto v = constants.get("d_bar")) model.constants.death_bound = parse_expression("constants.d_bar", *v, {});
  constants.reject_unknown();

  Section truncation = section(root, "truncation");
  if (!truncation.present()) throw ModelFileError("truncation", "missing section [truncation]");
  model.truncation = parse_int("truncation.N", truncation.require("N"));
  if (model.truncation < 1) throw ModelFileError("truncation.N", "truncation.N must be >= 1");
  truncation.reject_unknown();

  try {
    model.check_rates(model.truncation);
  } catch (const ModelError& e) {
    throw ModelFileError("rates", source + ": " + e.what());
  }
  return model;
}

ModelSpec load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ModelFileError("", "cannot open model file " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse_model(text.str(), path.string());
}

}  // namespace qsdctl

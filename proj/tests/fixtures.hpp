#pragma once

#include <string>
#include <vector>

#include "qsdctl/model.hpp"

// Programmatic versions of the shipped models, so unit tests do not depend on
// the model-file loader.
namespace qsdctl::fixtures {

inline ModelSpec make(std::string name, std::vector<std::string> params, std::vector<Action> actions,
                      const std::string& birth, const std::string& death, const std::string& cost, int levels) {
  ModelSpec m;
  m.name = std::move(name);
  m.controls = ControlSet(params, std::move(actions));
  auto names = m.controls.parameter_names();
  m.birth = Expression::parse(birth, names);
  m.death = Expression::parse(death, names);
  m.cost = Expression::parse(cost, names);
  m.truncation = levels;
  return m;
}

/// PD(d): b = 0, d_n = d n, f = 1.
inline ModelSpec pure_death(double d = 1.0, int levels = 200) {
  ModelSpec m = make("pure-death", {}, {{"a0", {}}}, "0", std::to_string(d) + "*n", "1", levels);
  m.constants.birth_bound = 1.0;
  m.constants.progeny_bound = 1.0;
  m.constants.death_bound = Expression::parse(std::to_string(d) + "*n");
  return m;
}

/// b_n = 2n, d_n = n + n^2, single offspring, f = 1.
inline ModelSpec logistic(int levels = 200) {
  ModelSpec m = make("logistic", {}, {{"a0", {}}}, "2*n", "n + n^2", "1", levels);
  m.constants.birth_bound = 2.0;
  m.constants.progeny_bound = 1.0;
  m.constants.death_lower = 1.0;
  m.constants.epsilon = 1.0;
  m.constants.death_bound = Expression::parse("n + n^2");
  return m;
}

/// Two actions on N = 6: d_n(a1) = n^2, d_n(a2) = 1.5 n^2, b_n = 2n, f = 1.
inline ModelSpec t2() {
  ModelSpec m = make("T2", {"c"}, {{"a1", {1.0}}, {"a2", {1.5}}}, "2*n", "c*n^2", "1", 6);
  m.constants.birth_bound = 2.0;
  m.constants.progeny_bound = 1.0;
  m.constants.death_lower = 1.0;
  m.constants.epsilon = 1.0;
  m.constants.death_bound = Expression::parse("1.5*n^2");
  return m;
}

/// b_n = 2n, d_n = 3n.
inline ModelSpec linear_birth_death(int levels = 200) {
  ModelSpec m = make("linear-bd", {}, {{"a0", {}}}, "2*n", "3*n", "1", levels);
  m.constants.birth_bound = 2.0;
  m.constants.progeny_bound = 1.0;
  m.constants.death_bound = Expression::parse("3*n");
  return m;
}

}  // namespace qsdctl::fixtures

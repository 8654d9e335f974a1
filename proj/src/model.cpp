#include "qsdctl/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

namespace qsdctl {

ControlSet::ControlSet(std::vector<std::string> parameter_names, std::vector<Action> actions)
    : parameter_names_(std::move(parameter_names)), actions_(std::move(actions)) {
  if (actions_.empty()) throw ModelError("control set must contain at least one action");
  std::set<std::string> seen;
  for (const auto& action : actions_) {
    if (!seen.insert(action.name).second) throw ModelError("duplicate action name '" + action.name + "'");
    if (action.parameters.size() != parameter_names_.size()) {
      throw ModelError("action '" + action.name + "' does not assign every control parameter");
    }
  }
  std::set<std::string> names(parameter_names_.begin(), parameter_names_.end());
  if (names.size() != parameter_names_.size()) throw ModelError("duplicate control parameter name");
  if (names.count("n")) throw ModelError("'n' is reserved for the state variable");
}

std::optional<std::size_t> ControlSet::find(std::string_view name) const {
  for (std::size_t i = 0; i < actions_.size(); ++i) {
    if (actions_[i].name == name) return i;
  }
  return std::nullopt;
}

std::vector<double> ProgenyLaw::probabilities(int n, std::span<const double> parameters) const {
  std::vector<double> p(static_cast<std::size_t>(k_max), 0.0);
  if (kind == Kind::table) {
    for (int k = 0; k < k_max; ++k) {
      const double w = weights.at(static_cast<std::size_t>(k)).evaluate(n, parameters);
      if (!std::isfinite(w) || w < 0.0) {
        throw ModelError("progeny weight p_" + std::to_string(k + 1) + " is negative or non-finite at n=" +
                         std::to_string(n));
      }
      p[static_cast<std::size_t>(k)] = w;
    }
  } else {
    const double m = mean.evaluate(n, parameters);
    if (!std::isfinite(m) || m < 1.0) {
      throw ModelError("geometric progeny mean must be >= 1, got " + std::to_string(m) + " at n=" + std::to_string(n));
    }
    const double q = 1.0 - 1.0 / m;
    double term = 1.0;
    for (int k = 0; k < k_max; ++k) {
      p[static_cast<std::size_t>(k)] = term;
      term *= q;
    }
  }
  double total = 0.0;
  for (double w : p) total += w;
  if (!(total > 0.0)) throw ModelError("progeny law has zero total mass at n=" + std::to_string(n));
  if (kind == Kind::table && std::abs(total - 1.0) > 1e-9) {
    throw ModelError("progeny table does not sum to 1 at n=" + std::to_string(n) + " (sum " + std::to_string(total) + ")");
  }
  for (double& w : p) w /= total;
  return p;
}

ProgenyLaw ProgenyLaw::single_offspring() {
  ProgenyLaw law;
  law.kind = Kind::table;
  law.k_max = 1;
  law.weights = {Expression::constant(1.0)};
  return law;
}

ProgenyLaw ProgenyLaw::geometric(Expression mean, int k_max) {
  ProgenyLaw law;
  law.kind = Kind::geometric;
  law.k_max = k_max;
  law.mean = std::move(mean);
  return law;
}

double ModelSpec::birth_rate(int n, std::size_t action) const {
  return n <= 0 ? 0.0 : birth.evaluate(n, controls[action].parameters);
}

double ModelSpec::death_rate(int n, std::size_t action) const {
  return n <= 0 ? 0.0 : death.evaluate(n, controls[action].parameters);
}

double ModelSpec::cost_rate(int n, std::size_t action) const {
  return n <= 0 ? 0.0 : cost.evaluate(n, controls[action].parameters);
}

std::vector<double> ModelSpec::offspring(int n, std::size_t action) const {
  return progeny.probabilities(n, controls[action].parameters);
}

void ModelSpec::check_rates(int max_state) const {
  auto check = [](double value, const char* what, int n, const Action& action) {
    if (!std::isfinite(value) || value < 0.0) {
      throw ModelError(std::string(what) + " is " + (std::isfinite(value) ? "negative" : "non-finite") +
                       " at state " + std::to_string(n) + ", action '" + action.name + "' (value " +
                       std::to_string(value) + ")");
    }
  };
  for (int n = 1; n <= max_state; ++n) {
    for (std::size_t a = 0; a < controls.size(); ++a) {
      check(birth_rate(n, a), "birth rate", n, controls[a]);
      check(death_rate(n, a), "death rate", n, controls[a]);
      check(cost_rate(n, a), "cost", n, controls[a]);
      offspring(n, a);
    }
  }
}

ModelSpec ModelSpec::with_unit_cost() const {
  ModelSpec copy = *this;
  copy.cost = Expression::constant(1.0);
  return copy;
}

MarkovControl MarkovControl::constant(std::size_t action, int levels) {
  return MarkovControl(std::vector<std::size_t>(static_cast<std::size_t>(std::max(levels, 0)), action));
}

std::size_t MarkovControl::operator()(int state) const {
  if (actions_.empty()) throw std::logic_error("empty Markov control");
  if (state < 1) return actions_.front();
  const auto index = std::min(static_cast<std::size_t>(state), actions_.size()) - 1;
  return actions_[index];
}

MarkovControl MarkovControl::resized(int levels) const {
  std::vector<std::size_t> out(static_cast<std::size_t>(levels));
  for (int x = 1; x <= levels; ++x) out[static_cast<std::size_t>(x - 1)] = (*this)(x);
  return MarkovControl(std::move(out));
}

void MarkovControl::check(std::size_t action_count) const {
  for (std::size_t i = 0; i < actions_.size(); ++i) {
    if (actions_[i] >= action_count) {
      throw ModelError("control assigns action index " + std::to_string(actions_[i]) + " at state " +
                       std::to_string(i + 1) + " but only " + std::to_string(action_count) + " actions exist");
    }
  }
}

std::string MarkovControl::to_string(const ControlSet& controls) const {
  std::string out;
  for (std::size_t i = 0; i < actions_.size(); ++i) {
    if (i) out += ' ';
    out += controls[actions_[i]].name;
  }
  return out;
}

std::string_view to_string(HypothesisStatus status) {
  switch (status) {
    case HypothesisStatus::pass: return "pass";
    case HypothesisStatus::fail: return "fail";
    case HypothesisStatus::not_checkable: return "not-checkable";
  }
  return "?";
}

const HypothesisCheck& HypothesisReport::at(std::string_view id) const {
  for (const auto& check : checks) {
    if (check.id == id) return check;
  }
  throw std::out_of_range("no hypothesis check '" + std::string(id) + "'");
}

bool HypothesisReport::all_pass() const {
  return std::all_of(checks.begin(), checks.end(),
                     [](const HypothesisCheck& c) { return c.status == HypothesisStatus::pass; });
}

namespace {

// Tracks the tightest margin over the grid; a clause fails when the tightest
// margin is below -tolerance * scale.
struct TightestMargin {
  Witness witness{0, 0, std::numeric_limits<double>::infinity()};
  bool violated = false;

  void observe(int n, std::size_t a, double margin, double scale) {
    if (margin < witness.margin) witness = {n, a, margin};
    if (margin < -1e-12 * std::max(1.0, std::abs(scale))) violated = true;
  }

  void finish(HypothesisCheck& check) const {
    check.status = violated ? HypothesisStatus::fail : HypothesisStatus::pass;
    check.witness = witness;
  }
};

}  // namespace

HypothesisReport validate_hypotheses(const ModelSpec& model, int max_state) {
  if (max_state < 2) throw std::invalid_argument("hypothesis check needs max_state >= 2");
  const std::size_t m = model.action_count();
  const auto& k = model.constants;
  HypothesisReport report;
  report.max_state = max_state;

  {
    HypothesisCheck check{"H1(ii)", "b_n(a) <= b_bar * n", HypothesisStatus::not_checkable, {}, {}};
    if (k.birth_bound) {
      TightestMargin tight;
      for (int n = 1; n <= max_state; ++n) {
        for (std::size_t a = 0; a < m; ++a) {
          const double bound = *k.birth_bound * n;
          tight.observe(n, a, bound - model.birth_rate(n, a), bound);
        }
      }
      tight.finish(check);
    } else {
      check.note = "b_bar not declared";
    }
    report.checks.push_back(std::move(check));
  }

  {
    HypothesisCheck check{"H1(iii)", "d_n(a) <= d_bar_n", HypothesisStatus::not_checkable, {}, {}};
    if (k.death_bound) {
      TightestMargin tight;
      for (int n = 1; n <= max_state; ++n) {
        const double bound = k.death_bound->evaluate(n);
        for (std::size_t a = 0; a < m; ++a) tight.observe(n, a, bound - model.death_rate(n, a), bound);
      }
      tight.finish(check);
    } else {
      check.note = "d_bar not declared";
    }
    report.checks.push_back(std::move(check));
  }

  {
    HypothesisCheck check{"H1(iv)", "sum_k k p_{n,k}(a) <= M", HypothesisStatus::not_checkable, {}, {}};
    if (k.progeny_bound) {
      TightestMargin tight;
      for (int n = 1; n <= max_state; ++n) {
        for (std::size_t a = 0; a < m; ++a) {
          const auto p = model.offspring(n, a);
          double mean = 0.0;
          for (std::size_t j = 0; j < p.size(); ++j) mean += static_cast<double>(j + 1) * p[j];
          tight.observe(n, a, *k.progeny_bound - mean, *k.progeny_bound);
        }
      }
      tight.finish(check);
    } else {
      check.note = "M not declared";
    }
    report.checks.push_back(std::move(check));
  }

  {
    HypothesisCheck check{"H2(i)", "d_n(a) >= d_lower * n^(1+epsilon)", HypothesisStatus::not_checkable, {}, {}};
    if (k.death_lower && k.epsilon) {
      if (*k.epsilon <= 0.0 || *k.death_lower <= 0.0) {
        check.status = HypothesisStatus::fail;
        check.witness = Witness{1, 0, std::min(*k.epsilon, *k.death_lower)};
        check.note = "declared epsilon and d_lower must be positive";
      } else {
        TightestMargin tight;
        for (int n = 1; n <= max_state; ++n) {
          const double bound = *k.death_lower * std::pow(n, 1.0 + *k.epsilon);
          for (std::size_t a = 0; a < m; ++a) tight.observe(n, a, model.death_rate(n, a) - bound, bound);
        }
        tight.finish(check);
      }
    } else {
      // Superlinearity surrogate: the growth exponent of d between max_state/2
      // and max_state must exceed one for every action.
      check.note = "epsilon/d_lower not declared; growth-exponent surrogate on the upper half of the range";
      const int lo = max_state / 2;
      Witness worst{max_state, 0, std::numeric_limits<double>::infinity()};
      bool failed = false;
      for (std::size_t a = 0; a < m && !failed; ++a) {
        for (int n = 1; n <= max_state; ++n) {
          if (!(model.death_rate(n, a) > 0.0)) {
            worst = {n, a, model.death_rate(n, a)};
            failed = true;
            break;
          }
        }
        if (failed) break;
        const double exponent =
            std::log(model.death_rate(max_state, a) / model.death_rate(lo, a)) / std::log(double(max_state) / lo);
        if (exponent - 1.0 < worst.margin) worst = {max_state, a, exponent - 1.0};
      }
      if (!failed && worst.margin <= 0.05) failed = true;
      check.status = failed ? HypothesisStatus::fail : HypothesisStatus::pass;
      check.witness = worst;
    }
    report.checks.push_back(std::move(check));
  }

  {
    // Finite surrogate of the control-uniform irreducibility condition: at
    // every state some offspring size has positive rate under all actions,
    // and death is possible under all actions.
    HypothesisCheck check{"H2(ii)", "min_a b_n(a) p_{n,k}(a) > 0 for some k and min_a d_n(a) > 0",
                          HypothesisStatus::pass, {}, "finite one-step surrogate on {1..max_state}"};
    Witness tightest{0, 0, std::numeric_limits<double>::infinity()};
    for (int n = 1; n <= max_state; ++n) {
      std::vector<double> best(static_cast<std::size_t>(model.progeny.k_max), std::numeric_limits<double>::infinity());
      std::vector<std::size_t> arg(best.size(), 0);
      double min_death = std::numeric_limits<double>::infinity();
      std::size_t death_arg = 0;
      for (std::size_t a = 0; a < m; ++a) {
        const double b = model.birth_rate(n, a);
        const auto p = model.offspring(n, a);
        for (std::size_t j = 0; j < p.size(); ++j) {
          if (b * p[j] < best[j]) {
            best[j] = b * p[j];
            arg[j] = a;
          }
        }
        if (model.death_rate(n, a) < min_death) {
          min_death = model.death_rate(n, a);
          death_arg = a;
        }
      }
      const auto top = std::max_element(best.begin(), best.end());
      const Witness birth_w{n, arg[static_cast<std::size_t>(top - best.begin())], *top};
      const Witness death_w{n, death_arg, min_death};
      const Witness& w = birth_w.margin < death_w.margin ? birth_w : death_w;
      if (w.margin < tightest.margin) tightest = w;
      if (!(w.margin > 0.0)) {
        check.status = HypothesisStatus::fail;
        tightest = w;
        break;
      }
    }
    check.witness = tightest;
    report.checks.push_back(std::move(check));
  }
  return report;
}

std::optional<std::uint64_t> control_count(std::size_t action_count, int levels, std::uint64_t cap) {
  std::uint64_t count = 1;
  for (int i = 0; i < levels; ++i) {
    if (count > cap / std::max<std::uint64_t>(action_count, 1)) return std::nullopt;
    count *= action_count;
  }
  if (count > cap) return std::nullopt;
  return count;
}

MarkovControl control_from_index(std::uint64_t id, std::size_t action_count, int levels) {
  std::vector<std::size_t> actions(static_cast<std::size_t>(levels));
  for (int i = levels - 1; i >= 0; --i) {
    actions[static_cast<std::size_t>(i)] = static_cast<std::size_t>(id % action_count);
    id /= action_count;
  }
  return MarkovControl(std::move(actions));
}

std::vector<MarkovControl> enumerate_markov_controls(const ModelSpec& model, int levels, std::uint64_t cap) {
  const auto count = control_count(model.action_count(), levels, cap);
  if (!count) {
    throw ModelError("enumerating " + std::to_string(model.action_count()) + "^" + std::to_string(levels) +
                     " controls exceeds the cap of " + std::to_string(cap));
  }
  std::vector<MarkovControl> controls;
  controls.reserve(*count);
  for (std::uint64_t id = 0; id < *count; ++id) controls.push_back(control_from_index(id, model.action_count(), levels));
  return controls;
}

}  // namespace qsdctl

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "qsdctl/expression.hpp"

namespace qsdctl {

/// Invalid model data: negative or non-finite rates, malformed progeny laws,
/// inconsistent controls.
class ModelError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Action {
  std::string name;
  std::vector<double> parameters;  // aligned with ControlSet::parameter_names()
};

/// Finite discretization of the control space: an ordered list of named
/// parameter assignments.
class ControlSet {
 public:
  ControlSet() = default;
  ControlSet(std::vector<std::string> parameter_names, std::vector<Action> actions);

  std::size_t size() const noexcept { return actions_.size(); }
  const Action& operator[](std::size_t index) const { return actions_.at(index); }
  std::span<const std::string> parameter_names() const noexcept { return parameter_names_; }
  std::optional<std::size_t> find(std::string_view name) const;

 private:
  std::vector<std::string> parameter_names_;
  std::vector<Action> actions_;
};

/// Offspring-count law p_{n,k}(a), k = 1..k_max.
struct ProgenyLaw {
  enum class Kind { table, geometric };

  Kind kind = Kind::table;
  int k_max = 1;
  std::vector<Expression> weights;  // table: one expression per k
  Expression mean;                  // geometric: mean of the untruncated law on {1, 2, ...}

  /// Probabilities p_1..p_{k_max} at state n under the given action
  /// parameters, renormalized to sum to one.
  std::vector<double> probabilities(int n, std::span<const double> parameters) const;

  static ProgenyLaw single_offspring();
  static ProgenyLaw geometric(Expression mean, int k_max);
};

/// Constants declared alongside the model for the standing hypotheses. Any of
/// them may be absent; the corresponding check is then not checkable.
struct HypothesisConstants {
  std::optional<double> birth_bound;     // b_bar: b_n(a) <= b_bar * n
  std::optional<double> progeny_bound;   // M: mean offspring count
  std::optional<double> death_lower;     // d_lower
  std::optional<double> epsilon;         // d_n(a) >= d_lower * n^(1+epsilon)
  std::optional<Expression> death_bound; // d_bar_n
};

/// Controlled branching model. Rates and costs are expressions in `n` and the
/// action parameters; state 0 is absorbing, so every rate and the cost are
/// zero there regardless of the expression.
struct ModelSpec {
  std::string name;
  ControlSet controls;
  Expression birth;
  Expression death;
  Expression cost;
  ProgenyLaw progeny = ProgenyLaw::single_offspring();
  HypothesisConstants constants;
  int truncation = 0;

  std::size_t action_count() const noexcept { return controls.size(); }

  double birth_rate(int n, std::size_t action) const;
  double death_rate(int n, std::size_t action) const;
  double cost_rate(int n, std::size_t action) const;
  std::vector<double> offspring(int n, std::size_t action) const;

  /// Throws ModelError naming the first (state, action) on {1..max_state}
  /// with a negative or non-finite birth, death or cost.
  void check_rates(int max_state) const;

  /// Copy of this model with the running cost replaced by f = 1 on the
  /// non-absorbed states.
  ModelSpec with_unit_cost() const;
};

/// Markov control: one action index per state 1..N. Queries above N reuse the
/// action of state N.
class MarkovControl {
 public:
  MarkovControl() = default;
  explicit MarkovControl(std::vector<std::size_t> actions) : actions_(std::move(actions)) {}

  static MarkovControl constant(std::size_t action, int levels);

  int levels() const noexcept { return static_cast<int>(actions_.size()); }
  std::size_t operator()(int state) const;
  std::span<const std::size_t> actions() const noexcept { return actions_; }

  /// Restriction to states 1..levels (levels <= this->levels()), or extension
  /// by repeating the last action.
  MarkovControl resized(int levels) const;

  /// Throws ModelError if any index is not below `action_count`.
  void check(std::size_t action_count) const;

  std::string to_string(const ControlSet& controls) const;

  friend bool operator==(const MarkovControl&, const MarkovControl&) = default;

 private:
  std::vector<std::size_t> actions_;
};

enum class HypothesisStatus { pass, fail, not_checkable };

std::string_view to_string(HypothesisStatus status);

struct Witness {
  int state = 0;
  std::size_t action = 0;
  double margin = 0.0;
};

struct HypothesisCheck {
  std::string id;  // "H1(ii)", "H1(iii)", "H1(iv)", "H2(i)", "H2(ii)"
  std::string description;
  HypothesisStatus status = HypothesisStatus::not_checkable;
  std::optional<Witness> witness;
  std::string note;
};

struct HypothesisReport {
  int max_state = 0;
  std::vector<HypothesisCheck> checks;

  const HypothesisCheck& at(std::string_view id) const;
  bool all_pass() const;
};

/// Evaluates every clause of the population and QSD hypotheses on
/// {1..max_state} x actions. Advisory: never throws for a failing clause.
HypothesisReport validate_hypotheses(const ModelSpec& model, int max_state);

inline constexpr std::uint64_t default_enumeration_cap = 1'000'000;

/// m^levels, or nullopt if it exceeds `cap`.
std::optional<std::uint64_t> control_count(std::size_t action_count, int levels,
                                           std::uint64_t cap = default_enumeration_cap);

/// The control with lexicographic rank `id` (state 1 most significant).
MarkovControl control_from_index(std::uint64_t id, std::size_t action_count, int levels);

/// All m^levels Markov controls in lexicographic order. Throws ModelError when
/// the count exceeds `cap`.
std::vector<MarkovControl> enumerate_markov_controls(const ModelSpec& model, int levels,
                                                     std::uint64_t cap = default_enumeration_cap);

}  // namespace qsdctl

#pragma once

#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "flowforge/domain.hpp"
#include "flowforge/expr.hpp"

namespace flowforge
{

enum class CriterionOp { Eq, Ne, Lt, Le, Gt, Ge, Contains };

std::string_view criterion_op_symbol(CriterionOp op);

/// Selection predicate of retrieve/delete steps. The value is either a
/// literal or a data-flow path resolved when the step runs.
struct Criterion
{
  Path field;
  CriterionOp op = CriterionOp::Eq;
  std::variant<Value, Path> value;
  bool operator==(const Criterion &) const = default;
};

/// Design-time constant for an activity endpoint, or for a data-flow path
/// when no endpoint of the activity carries that name.
struct Overwrite
{
  Path target;
  Value value;
  bool operator==(const Overwrite &) const = default;
};

struct StartStep
{
  bool operator==(const StartStep &) const = default;
};
struct ActivityStep
{
  std::string activity;
  std::vector<Overwrite> overwrites;
  bool operator==(const ActivityStep &) const = default;
};
struct StartLoopStep
{
  Path data_flow_set;
  std::string loop_name;
  bool operator==(const StartLoopStep &) const = default;
};
struct EndLoopStep
{
  std::string start_loop;
  bool operator==(const EndLoopStep &) const = default;
};
struct ScriptStep
{
  Script script;
  bool operator==(const ScriptStep &) const = default;
};
struct StoreStep
{
  std::vector<std::string> variables;
  bool operator==(const StoreStep &) const = default;
};
struct RetrieveStep
{
  std::string target_variable;
  std::string type;
  bool is_set = false;
  std::vector<Criterion> criteria;
  bool operator==(const RetrieveStep &) const = default;
};
struct DeleteStep
{
  std::string type;
  std::vector<Criterion> criteria;
  bool operator==(const DeleteStep &) const = default;
};

using StepBody = std::variant<
  StartStep, ActivityStep, StartLoopStep, EndLoopStep, ScriptStep, StoreStep, RetrieveStep,
  DeleteStep>;

std::string_view step_kind_name(const StepBody & body);

struct Step
{
  std::string name;
  StepBody body;
  SourceSpan span;

  template <class T>
  bool is() const
  {
    return std::holds_alternative<T>(body);
  }
  template <class T>
  const T & as() const
  {
    return std::get<T>(body);
  }
  bool operator==(const Step &) const = default;
};

struct Transition
{
  std::string source;
  std::string target;
  ExprPtr condition;  // null when unconditioned
  SourceSpan span;

  friend bool operator==(const Transition & a, const Transition & b);
};

/// `var` declarations type a data-flow variable; `input` ones additionally
/// require the caller to provide it when the instance starts.
struct VariableDecl
{
  std::string name;
  TypeRef type;
  bool is_input = false;
  SourceSpan span;
  bool operator==(const VariableDecl &) const = default;
};

struct FlowModel
{
  std::string name;
  std::vector<std::string> used_domains;
  std::vector<VariableDecl> variables;
  std::vector<Step> steps;
  std::vector<Transition> transitions;
  SourceSpan span;

  const Step * find_step(std::string_view n) const;
  bool operator==(const FlowModel &) const = default;
};

}  // namespace flowforge

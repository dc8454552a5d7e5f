#pragma once

#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "flowforge/abr.hpp"
#include "flowforge/dataflow.hpp"
#include "flowforge/domain.hpp"
#include "flowforge/error.hpp"
#include "flowforge/expr.hpp"
#include "flowforge/flow.hpp"

namespace flowforge
{

struct LoopInfo
{
  std::string start;
  std::string end;
  std::string entry;           // first body step, or `end` for an empty body
  std::set<std::string> body;  // nested loop steps included
  std::string parent;          // enclosing loop start, empty at top level
  int depth = 1;
};

/// Keyed by StartLoopStep name.
using LoopTable = std::map<std::string, LoopInfo>;

struct LinkedBundle
{
  std::vector<DomainModel> domains;
  DomainModel merged;  // union of the domains the flow uses
  std::vector<AbrModel> abrs;
  FlowModel flow;
  std::map<std::string, Implementation> bindings;  // by service name
  std::string start;
  LoopTable loops;
  std::map<std::string, std::string> loop_of_end;  // EndLoopStep -> StartLoopStep
  std::map<std::string, TypeInfo> variable_types;
  std::vector<EntitySchema> schemas;

  /// Outgoing transitions of `step` in declaration order.
  std::vector<const Transition *> outgoing(std::string_view step) const;
};

struct ValidateOptions
{
  /// Implementation kinds the invoker can execute.
  std::set<std::string> known_kinds = {"REST", "PROCESS", "MOCK"};
};

struct ValidationReport
{
  std::vector<Diagnostic> diagnostics;
  std::optional<std::string> inferred_start;
  std::shared_ptr<const LinkedBundle> bundle;  // only when there are no errors

  bool ok() const { return !has_errors(diagnostics); }
};

/// Runs every pass. Typing and visibility run only when linking, start
/// inference and loop matching came out clean, so one defect does not
/// cascade into unrelated reports.
ValidationReport validate(
  std::vector<DomainModel> domains, std::vector<AbrModel> abrs, FlowModel flow,
  const ValidateOptions & options = {});

LinkedBundle link(
  std::vector<DomainModel> domains, std::vector<AbrModel> abrs, FlowModel flow,
  const ValidateOptions & options, std::vector<Diagnostic> & diags);

std::optional<std::string> infer_start(const FlowModel & flow, std::vector<Diagnostic> & diags);

LoopTable match_loops(const FlowModel & flow, std::vector<Diagnostic> & diags);

/// Types every data-flow root (stored into bundle.variable_types) and checks
/// mappings, overwrites, criteria, scripts and conditions against them.
void check_mappings(LinkedBundle & bundle, std::vector<Diagnostic> & diags);

/// Needs bundle.start and bundle.loops.
void check_dataflow_visibility(const LinkedBundle & bundle, std::vector<Diagnostic> & diags);

TypeInfo type_info(const TypeRef & ref);
DeclaredType declared_type(const TypeRef & ref);

}  // namespace flowforge

#pragma once

#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "flowforge/abr.hpp"
#include "flowforge/domain.hpp"
#include "flowforge/error.hpp"
#include "flowforge/expr.hpp"
#include "flowforge/flow.hpp"

namespace flowforge
{

/// A model value, or at least one ERROR diagnostic and no value.
template <class T>
struct ParseResult
{
  std::optional<T> model;
  std::vector<Diagnostic> diagnostics;

  bool ok() const { return model.has_value(); }
};

struct AbrParseOptions
{
  /// Kinds beyond REST/PROCESS/MOCK accepted as opaque key-value blocks.
  std::set<std::string> custom_kinds;
  /// Accept any kind name; unknown ones are left for the validator.
  bool accept_any_kind = false;
};

ParseResult<DomainModel> parse_domain(std::string_view text, const std::string & file = {});
ParseResult<AbrModel> parse_abr(
  std::string_view text, const std::string & file = {}, const AbrParseOptions & options = {});
ParseResult<FlowModel> parse_flow(std::string_view text, const std::string & file = {});

ParseResult<ExprPtr> parse_expression(std::string_view text);
ParseResult<Script> parse_script(std::string_view text);

std::string print_domain(const DomainModel & model);
std::string print_abr(const AbrModel & model);
std::string print_flow(const FlowModel & model);
std::string print_expression(const Expr & expr);
std::string print_literal(const Value & value);
std::string print_script(const Script & script);

/// Reserved words that cannot serve as names inside expressions.
bool is_expression_keyword(std::string_view word);

}  // namespace flowforge

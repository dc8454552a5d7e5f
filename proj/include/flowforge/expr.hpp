#pragma once

#include <functional>
#include <memory>
#include <string>
#include <variant>
#include <vector>

#include "flowforge/error.hpp"
#include "flowforge/value.hpp"

namespace flowforge
{

class DataFlow;

enum class UnaryOp { Not, Negate };
enum class BinaryOp { Or, And, Eq, Ne, Lt, Le, Gt, Ge, In, Add, Sub, Mul, Div };

std::string_view binary_op_symbol(BinaryOp op);

struct Expr;
using ExprPtr = std::shared_ptr<const Expr>;

struct LiteralExpr
{
  Value value;
};
struct PathExpr
{
  Path path;
};
struct ListExpr
{
  std::vector<ExprPtr> items;
};
struct UnaryExpr
{
  UnaryOp op;
  ExprPtr operand;
};
struct BinaryExpr
{
  BinaryOp op;
  ExprPtr lhs;
  ExprPtr rhs;
};

struct Expr
{
  std::variant<LiteralExpr, PathExpr, ListExpr, UnaryExpr, BinaryExpr> node;
};

bool operator==(const Expr & a, const Expr & b);

ExprPtr make_literal(Value v);
ExprPtr make_path(Path p);
ExprPtr make_list(std::vector<ExprPtr> items);
ExprPtr make_unary(UnaryOp op, ExprPtr operand);
ExprPtr make_binary(BinaryOp op, ExprPtr lhs, ExprPtr rhs);

/// Every data-flow path the expression reads, in evaluation order.
std::vector<Path> expr_reads(const Expr & e);

struct LetStmt
{
  std::string name;
  ExprPtr value;
};
struct AssignStmt
{
  Path target;
  ExprPtr value;
};
struct AppendStmt
{
  Path target;
  ExprPtr value;
};
struct RenameStmt
{
  std::string from;
  std::string to;
};

using Statement = std::variant<LetStmt, AssignStmt, AppendStmt, RenameStmt>;

bool operator==(const Statement & a, const Statement & b);

struct Script
{
  std::vector<Statement> statements;
  friend bool operator==(const Script & a, const Script & b)
  {
    return a.statements == b.statements;
  }
};

/// Read-only access used during expression evaluation.
class ReadView
{
public:
  virtual ~ReadView() = default;
  virtual const Value & read(const Path & path) const = 0;
};

/// `==` semantics: numbers compare across INTEGER/FLOAT, other kinds must
/// match (E_TYPE_MISMATCH otherwise).
bool equal_values(const Value & a, const Value & b);
/// strcmp-style ordering of numbers, strings and dates; E_TYPE_MISMATCH otherwise.
int compare_values(const Value & a, const Value & b);

/// Throws Error with E_NULL_READ, E_DIV_ZERO, E_TYPE_MISMATCH or E_OVERFLOW.
Value eval_expr(const Expr & expr, const ReadView & view);

struct EffectSummary
{
  std::vector<Path> created;
  std::vector<Path> updated;
  std::vector<Path> appended;
  std::vector<Path> removed;

  /// All touched paths, deduplicated and sorted.
  std::vector<Path> touched() const;
};

/// Applies statements in order. Throws E_ASSIGN_UNDECLARED, E_APPEND_NOT_SET
/// plus any evaluation error.
EffectSummary exec_script(const Script & script, DataFlow & df);

// Static typing.

struct TypeInfo
{
  enum class Kind { Unknown, Basic, Record, EmptyList };
  Kind kind = Kind::Unknown;
  BasicType basic = BasicType::String;
  std::string record_type;  // empty when the record has no domain type
  bool is_set = false;

  static TypeInfo unknown() { return {}; }
  static TypeInfo empty_list() { return {Kind::EmptyList, BasicType::String, {}, true}; }
  static TypeInfo of(BasicType b, bool set = false) { return {Kind::Basic, b, {}, set}; }
  static TypeInfo record(std::string name, bool set = false)
  {
    return {Kind::Record, BasicType::String, std::move(name), set};
  }

  bool is_basic(BasicType b) const { return kind == Kind::Basic && basic == b && !is_set; }
  bool is_numeric() const
  {
    return kind == Kind::Basic && !is_set &&
           (basic == BasicType::Integer || basic == BasicType::Float);
  }
  TypeInfo element() const
  {
    TypeInfo t = *this;
    t.is_set = false;
    return t;
  }
  std::string str() const;

  bool operator==(const TypeInfo &) const = default;
};

/// Static type of a concrete value; records keep their type name.
TypeInfo type_of_value(const Value & v);

/// Resolves a path to its static type; return Unknown to skip checking.
using TypeEnv = std::function<TypeInfo(const Path &)>;

/// Infers the type of `expr`, appending E_TYPE_MISMATCH diagnostics for
/// ill-typed operators. Unknown operands suppress checks.
TypeInfo infer_type(
  const Expr & expr, const TypeEnv & env, std::vector<Diagnostic> & diags,
  const SourceSpan & span = {});

/// Whether a value of type `from` may flow into a slot of type `to`
/// (exact match, INTEGER promotes to FLOAT, unknown always accepted).
bool assignable(const TypeInfo & from, const TypeInfo & to);

}  // namespace flowforge

#include "flowforge/expr.hpp"

#include <algorithm>
#include <limits>

#include "flowforge/dataflow.hpp"

namespace flowforge
{

namespace
{

[[noreturn]] void mismatch(const std::string & what) { throw Error("E_TYPE_MISMATCH", what); }

bool is_number(const Value & v) { return v.is<std::int64_t>() || v.is<double>(); }

double as_double(const Value & v)
{
  return v.is<double>() ? v.as<double>() : static_cast<double>(v.as<std::int64_t>());
}

bool values_equal(const Value & a, const Value & b)
{
  if (is_number(a) && is_number(b)) {
    if (a.is<std::int64_t>() && b.is<std::int64_t>()) return a.as<std::int64_t>() == b.as<std::int64_t>();
    return as_double(a) == as_double(b);
  }
  if (a.kind() != b.kind()) {
    mismatch(
      "cannot compare " + std::string(value_kind_name(a.kind())) + " with " +
      std::string(value_kind_name(b.kind())));
  }
  return a == b;
}

// Negative, zero or positive like strcmp.
int compare_ordered(const Value & a, const Value & b)
{
  if (is_number(a) && is_number(b)) {
    if (a.is<std::int64_t>() && b.is<std::int64_t>()) {
      auto x = a.as<std::int64_t>(), y = b.as<std::int64_t>();
      return x < y ? -1 : x > y ? 1 : 0;
    }
    double x = as_double(a), y = as_double(b);
    return x < y ? -1 : x > y ? 1 : 0;
  }
  if (a.is<std::string>() && b.is<std::string>()) return a.as<std::string>().compare(b.as<std::string>());
  if (a.is<Date>() && b.is<Date>()) {
    auto x = a.as<Date>().epoch_ms, y = b.as<Date>().epoch_ms;
    return x < y ? -1 : x > y ? 1 : 0;
  }
  mismatch(
    "cannot order " + std::string(value_kind_name(a.kind())) + " and " +
    std::string(value_kind_name(b.kind())));
}

bool expect_bool(const Value & v, const char * op)
{
  if (!v.is<bool>()) mismatch(std::string("operand of '") + op + "' must be BOOLEAN");
  return v.as<bool>();
}

Value arithmetic(BinaryOp op, const Value & a, const Value & b)
{
  if (op == BinaryOp::Add && a.is<std::string>() && b.is<std::string>()) {
    return Value(a.as<std::string>() + b.as<std::string>());
  }
  if (!is_number(a) || !is_number(b)) {
    mismatch(
      "arithmetic '" + std::string(binary_op_symbol(op)) + "' on " +
      std::string(value_kind_name(a.kind())) + " and " + std::string(value_kind_name(b.kind())));
  }
  if (a.is<std::int64_t>() && b.is<std::int64_t>()) {
    const auto x = a.as<std::int64_t>(), y = b.as<std::int64_t>();
    std::int64_t r = 0;
    bool overflow = false;
    switch (op) {
      case BinaryOp::Add: overflow = __builtin_add_overflow(x, y, &r); break;
      case BinaryOp::Sub: overflow = __builtin_sub_overflow(x, y, &r); break;
      case BinaryOp::Mul: overflow = __builtin_mul_overflow(x, y, &r); break;
      case BinaryOp::Div:
        if (y == 0) throw Error("E_DIV_ZERO", "division by zero");
        if (x == std::numeric_limits<std::int64_t>::min() && y == -1) overflow = true;
        else r = x / y;
        break;
      default: break;
    }
    if (overflow) throw Error("E_OVERFLOW", "integer overflow");
    return Value(r);
  }
  const double x = as_double(a), y = as_double(b);
  switch (op) {
    case BinaryOp::Add: return Value(x + y);
    case BinaryOp::Sub: return Value(x - y);
    case BinaryOp::Mul: return Value(x * y);
    case BinaryOp::Div:
      if (y == 0) throw Error("E_DIV_ZERO", "division by zero");
      return Value(x / y);
    default: break;
  }
  mismatch("bad arithmetic operator");
}

void collect_reads(const Expr & e, std::vector<Path> & out)
{
  std::visit(
    [&](const auto & n) {
      using T = std::decay_t<decltype(n)>;
      if constexpr (std::is_same_v<T, PathExpr>) {
        out.push_back(n.path);
      } else if constexpr (std::is_same_v<T, ListExpr>) {
        for (const auto & item : n.items) collect_reads(*item, out);
      } else if constexpr (std::is_same_v<T, UnaryExpr>) {
        collect_reads(*n.operand, out);
      } else if constexpr (std::is_same_v<T, BinaryExpr>) {
        collect_reads(*n.lhs, out);
        collect_reads(*n.rhs, out);
      }
    },
    e.node);
}

TypeInfo type_of_literal(const Value & v)
{
  if (auto b = v.basic()) return TypeInfo::of(*b);
  if (v.is<Record>()) return TypeInfo::record(v.as<Record>().type_name);
  if (v.is<List>()) {
    if (v.as<List>().empty()) return TypeInfo::empty_list();
    TypeInfo t = type_of_literal(v.as<List>().front());
    t.is_set = true;
    return t;
  }
  return TypeInfo::unknown();
}

bool comparable(const TypeInfo & a, const TypeInfo & b)
{
  if (a.kind == TypeInfo::Kind::Unknown || b.kind == TypeInfo::Kind::Unknown) return true;
  if (a.is_numeric() && b.is_numeric()) return true;
  if (a.kind == TypeInfo::Kind::EmptyList || b.kind == TypeInfo::Kind::EmptyList) {
    return (a.is_set || a.kind == TypeInfo::Kind::EmptyList) &&
           (b.is_set || b.kind == TypeInfo::Kind::EmptyList);
  }
  return a == b;
}

bool ordered(const TypeInfo & t)
{
  if (t.kind == TypeInfo::Kind::Unknown) return true;
  return t.kind == TypeInfo::Kind::Basic && !t.is_set &&
         (t.basic == BasicType::Integer || t.basic == BasicType::Float ||
          t.basic == BasicType::String || t.basic == BasicType::Date);
}

}  // namespace

std::string_view binary_op_symbol(BinaryOp op)
{
  switch (op) {
    case BinaryOp::Or: return "or";
    case BinaryOp::And: return "and";
    case BinaryOp::Eq: return "==";
    case BinaryOp::Ne: return "!=";
    case BinaryOp::Lt: return "<";
    case BinaryOp::Le: return "<=";
    case BinaryOp::Gt: return ">";
    case BinaryOp::Ge: return ">=";
    case BinaryOp::In: return "in";
    case BinaryOp::Add: return "+";
    case BinaryOp::Sub: return "-";
    case BinaryOp::Mul: return "*";
    case BinaryOp::Div: return "/";
  }
  return "?";
}

bool operator==(const Expr & a, const Expr & b)
{
  if (a.node.index() != b.node.index()) return false;
  return std::visit(
    [&](const auto & x) -> bool {
      using T = std::decay_t<decltype(x)>;
      const auto & y = std::get<T>(b.node);
      if constexpr (std::is_same_v<T, LiteralExpr>) {
        return x.value == y.value;
      } else if constexpr (std::is_same_v<T, PathExpr>) {
        return x.path == y.path;
      } else if constexpr (std::is_same_v<T, ListExpr>) {
        return std::equal(
          x.items.begin(), x.items.end(), y.items.begin(), y.items.end(),
          [](const ExprPtr & p, const ExprPtr & q) { return *p == *q; });
      } else if constexpr (std::is_same_v<T, UnaryExpr>) {
        return x.op == y.op && *x.operand == *y.operand;
      } else {
        return x.op == y.op && *x.lhs == *y.lhs && *x.rhs == *y.rhs;
      }
    },
    a.node);
}

ExprPtr make_literal(Value v) { return std::make_shared<Expr>(Expr{LiteralExpr{std::move(v)}}); }
ExprPtr make_path(Path p) { return std::make_shared<Expr>(Expr{PathExpr{std::move(p)}}); }
ExprPtr make_list(std::vector<ExprPtr> items)
{
  return std::make_shared<Expr>(Expr{ListExpr{std::move(items)}});
}
ExprPtr make_unary(UnaryOp op, ExprPtr operand)
{
  return std::make_shared<Expr>(Expr{UnaryExpr{op, std::move(operand)}});
}
ExprPtr make_binary(BinaryOp op, ExprPtr lhs, ExprPtr rhs)
{
  return std::make_shared<Expr>(Expr{BinaryExpr{op, std::move(lhs), std::move(rhs)}});
}

std::vector<Path> expr_reads(const Expr & e)
{
  std::vector<Path> out;
  collect_reads(e, out);
  return out;
}

bool operator==(const Statement & a, const Statement & b)
{
  if (a.index() != b.index()) return false;
  return std::visit(
    [&](const auto & x) -> bool {
      using T = std::decay_t<decltype(x)>;
      const auto & y = std::get<T>(b);
      if constexpr (std::is_same_v<T, LetStmt>) {
        return x.name == y.name && *x.value == *y.value;
      } else if constexpr (std::is_same_v<T, AssignStmt> || std::is_same_v<T, AppendStmt>) {
        return x.target == y.target && *x.value == *y.value;
      } else {
        return x.from == y.from && x.to == y.to;
      }
    },
    a);
}

Value eval_expr(const Expr & expr, const ReadView & view)
{
  return std::visit(
    [&](const auto & n) -> Value {
      using T = std::decay_t<decltype(n)>;
      if constexpr (std::is_same_v<T, LiteralExpr>) {
        return n.value;
      } else if constexpr (std::is_same_v<T, PathExpr>) {
        return view.read(n.path);
      } else if constexpr (std::is_same_v<T, ListExpr>) {
        List items;
        for (const auto & item : n.items) items.push_back(eval_expr(*item, view));
        if (!is_homogeneous(items)) mismatch("set literal mixes element kinds");
        return Value(std::move(items));
      } else if constexpr (std::is_same_v<T, UnaryExpr>) {
        Value v = eval_expr(*n.operand, view);
        if (n.op == UnaryOp::Not) return Value(!expect_bool(v, "not"));
        if (v.is<std::int64_t>()) {
          if (v.as<std::int64_t>() == std::numeric_limits<std::int64_t>::min()) {
            throw Error("E_OVERFLOW", "integer overflow");
          }
          return Value(-v.as<std::int64_t>());
        }
        if (v.is<double>()) return Value(-v.as<double>());
        mismatch("operand of unary '-' must be numeric");
      } else {
        if (n.op == BinaryOp::And) {
          if (!expect_bool(eval_expr(*n.lhs, view), "and")) return Value(false);
          return Value(expect_bool(eval_expr(*n.rhs, view), "and"));
        }
        if (n.op == BinaryOp::Or) {
          if (expect_bool(eval_expr(*n.lhs, view), "or")) return Value(true);
          return Value(expect_bool(eval_expr(*n.rhs, view), "or"));
        }
        Value a = eval_expr(*n.lhs, view);
        Value b = eval_expr(*n.rhs, view);
        switch (n.op) {
          case BinaryOp::Eq: return Value(values_equal(a, b));
          case BinaryOp::Ne: return Value(!values_equal(a, b));
          case BinaryOp::Lt: return Value(compare_ordered(a, b) < 0);
          case BinaryOp::Le: return Value(compare_ordered(a, b) <= 0);
          case BinaryOp::Gt: return Value(compare_ordered(a, b) > 0);
          case BinaryOp::Ge: return Value(compare_ordered(a, b) >= 0);
          case BinaryOp::In:
            if (b.is<List>()) {
              const auto & items = b.as<List>();
              return Value(std::any_of(items.begin(), items.end(), [&](const Value & item) {
                return values_equal(a, item);
              }));
            }
            if (b.is<std::string>() && a.is<std::string>()) {
              return Value(b.as<std::string>().find(a.as<std::string>()) != std::string::npos);
            }
            mismatch("right operand of 'in' must be a set or STRING");
          default: return arithmetic(n.op, a, b);
        }
      }
    },
    expr.node);
}

std::vector<Path> EffectSummary::touched() const
{
  std::vector<Path> all;
  for (const auto * v : {&created, &updated, &appended, &removed}) all.insert(all.end(), v->begin(), v->end());
  std::sort(all.begin(), all.end());
  all.erase(std::unique(all.begin(), all.end()), all.end());
  return all;
}

EffectSummary exec_script(const Script & script, DataFlow & df)
{
  EffectSummary effects;
  for (const auto & stmt : script.statements) {
    std::visit(
      [&](const auto & s) {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, LetStmt>) {
          Value v = eval_expr(*s.value, df);
          const bool existed = df.contains(s.name);
          df.write(Path({s.name}), std::move(v));
          (existed ? effects.updated : effects.created).push_back(Path({s.name}));
        } else if constexpr (std::is_same_v<T, AssignStmt>) {
          if (!df.contains(s.target.root())) {
            throw Error(
              "E_ASSIGN_UNDECLARED", "assignment to undeclared variable '" + s.target.root() + "'");
          }
          Value v = eval_expr(*s.value, df);
          df.write(s.target, std::move(v));
          effects.updated.push_back(s.target);
        } else if constexpr (std::is_same_v<T, AppendStmt>) {
          const Value * current = df.try_read(s.target);
          if (!current || !current->is<List>()) {
            throw Error("E_APPEND_NOT_SET", "'" + s.target.str() + "' is not a set");
          }
          Value item = eval_expr(*s.value, df);
          List items = current->as<List>();
          if (!items.empty() && !conform_kind(items.front(), item)) {
            mismatch("appended element does not match the elements of '" + s.target.str() + "'");
          }
          items.push_back(std::move(item));
          df.write(s.target, Value(std::move(items)));
          effects.appended.push_back(s.target);
        } else {
          Value v = df.read(Path({s.from}));
          df.remove(s.from);
          const bool existed = df.contains(s.to);
          df.write(Path({s.to}), std::move(v));
          effects.removed.push_back(Path({s.from}));
          (existed ? effects.updated : effects.created).push_back(Path({s.to}));
        }
      },
      stmt);
  }
  return effects;
}

bool equal_values(const Value & a, const Value & b) { return values_equal(a, b); }

int compare_values(const Value & a, const Value & b) { return compare_ordered(a, b); }

TypeInfo type_of_value(const Value & v) { return type_of_literal(v); }

std::string TypeInfo::str() const
{
  std::string base;
  switch (kind) {
    case Kind::Unknown: return "?";
    case Kind::EmptyList: return "set ?";
    case Kind::Basic: base = std::string(basic_type_name(basic)); break;
    case Kind::Record: base = record_type.empty() ? "RECORD" : record_type; break;
  }
  return (is_set ? "set " : "") + base;
}

bool assignable(const TypeInfo & from, const TypeInfo & to)
{
  if (from.kind == TypeInfo::Kind::Unknown || to.kind == TypeInfo::Kind::Unknown) return true;
  if (from.kind == TypeInfo::Kind::EmptyList) return to.is_set;
  if (from.is_set != to.is_set) return false;
  if (from.kind != to.kind) return false;
  if (from.kind == TypeInfo::Kind::Record) {
    return from.record_type.empty() || to.record_type.empty() || from.record_type == to.record_type;
  }
  return from.basic == to.basic || (from.basic == BasicType::Integer && to.basic == BasicType::Float);
}

TypeInfo infer_type(
  const Expr & expr, const TypeEnv & env, std::vector<Diagnostic> & diags, const SourceSpan & span)
{
  auto fail = [&](std::string msg) {
    diags.push_back(make_error("E_TYPE_MISMATCH", std::move(msg), span));
    return TypeInfo::unknown();
  };
  return std::visit(
    [&](const auto & n) -> TypeInfo {
      using T = std::decay_t<decltype(n)>;
      if constexpr (std::is_same_v<T, LiteralExpr>) {
        return type_of_literal(n.value);
      } else if constexpr (std::is_same_v<T, PathExpr>) {
        return env(n.path);
      } else if constexpr (std::is_same_v<T, ListExpr>) {
        if (n.items.empty()) return TypeInfo::empty_list();
        TypeInfo first = infer_type(*n.items.front(), env, diags, span);
        for (std::size_t i = 1; i < n.items.size(); ++i) {
          TypeInfo t = infer_type(*n.items[i], env, diags, span);
          if (!comparable(first, t)) return fail("set literal mixes " + first.str() + " and " + t.str());
        }
        if (first.kind == TypeInfo::Kind::Unknown) return first;
        if (first.is_set || first.kind == TypeInfo::Kind::EmptyList) return fail("nested sets are not supported");
        first.is_set = true;
        return first;
      } else if constexpr (std::is_same_v<T, UnaryExpr>) {
        TypeInfo t = infer_type(*n.operand, env, diags, span);
        if (t.kind == TypeInfo::Kind::Unknown) {
          return n.op == UnaryOp::Not ? TypeInfo::of(BasicType::Boolean) : t;
        }
        if (n.op == UnaryOp::Not) {
          if (!t.is_basic(BasicType::Boolean)) return fail("'not' needs BOOLEAN, got " + t.str());
          return t;
        }
        if (!t.is_numeric()) return fail("unary '-' needs a number, got " + t.str());
        return t;
      } else {
        TypeInfo a = infer_type(*n.lhs, env, diags, span);
        TypeInfo b = infer_type(*n.rhs, env, diags, span);
        const bool unknown = a.kind == TypeInfo::Kind::Unknown || b.kind == TypeInfo::Kind::Unknown;
        const auto sym = std::string(binary_op_symbol(n.op));
        switch (n.op) {
          case BinaryOp::And:
          case BinaryOp::Or:
            if ((a.kind != TypeInfo::Kind::Unknown && !a.is_basic(BasicType::Boolean)) ||
                (b.kind != TypeInfo::Kind::Unknown && !b.is_basic(BasicType::Boolean))) {
              return fail("'" + sym + "' needs BOOLEAN operands, got " + a.str() + " and " + b.str());
            }
            return TypeInfo::of(BasicType::Boolean);
          case BinaryOp::Eq:
          case BinaryOp::Ne:
            if (!comparable(a, b)) return fail("cannot compare " + a.str() + " with " + b.str());
            return TypeInfo::of(BasicType::Boolean);
          case BinaryOp::Lt:
          case BinaryOp::Le:
          case BinaryOp::Gt:
          case BinaryOp::Ge:
            if (!ordered(a) || !ordered(b) || !comparable(a, b)) {
              return fail("cannot order " + a.str() + " and " + b.str());
            }
            return TypeInfo::of(BasicType::Boolean);
          case BinaryOp::In:
            if (unknown) return TypeInfo::of(BasicType::Boolean);
            if (b.is_basic(BasicType::String) && a.is_basic(BasicType::String)) {
              return TypeInfo::of(BasicType::Boolean);
            }
            if (b.kind == TypeInfo::Kind::EmptyList) return TypeInfo::of(BasicType::Boolean);
            if (!b.is_set || !comparable(a, b.element())) {
              return fail("cannot test " + a.str() + " membership in " + b.str());
            }
            return TypeInfo::of(BasicType::Boolean);
          default:
            if (unknown) {
              if (n.op == BinaryOp::Add && (a.is_basic(BasicType::String) || b.is_basic(BasicType::String))) {
                return TypeInfo::of(BasicType::String);
              }
              return TypeInfo::unknown();
            }
            if (n.op == BinaryOp::Add && a.is_basic(BasicType::String) && b.is_basic(BasicType::String)) {
              return a;
            }
            if (!a.is_numeric() || !b.is_numeric()) {
              return fail("'" + sym + "' needs numbers, got " + a.str() + " and " + b.str());
            }
            if (a.basic == BasicType::Float || b.basic == BasicType::Float) {
              return TypeInfo::of(BasicType::Float);
            }
            return TypeInfo::of(BasicType::Integer);
        }
      }
    },
    expr.node);
}

}  // namespace flowforge

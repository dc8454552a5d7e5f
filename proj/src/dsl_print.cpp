#include <charconv>
#include <cmath>
#include <cstdio>

#include "flowforge/dsl.hpp"
#include "lexer.hpp"

namespace flowforge
{

namespace
{

std::string quote(std::string_view s)
{
  std::string out = "\"";
  for (char c : s) {
    switch (c) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\t': out += "\\t"; break;
      case '\r': out += "\\r"; break;
      default:
        if (static_cast<unsigned char>(c) < 0x20) {
          char buf[8];
          std::snprintf(buf, sizeof buf, "\\u%04X", static_cast<unsigned>(c));
          out += buf;
        } else {
          out += c;
        }
    }
  }
  out += '"';
  return out;
}

std::string format_double(double d)
{
  if (!std::isfinite(d)) throw Error("E_UNPRINTABLE", "non-finite float has no literal form");
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, d);
  std::string s(buf, res.ptr);
  if (s.find_first_of(".e") == std::string::npos) s += ".0";
  return s;
}

std::string concrete(const std::string & name)
{
  bool dotted = !name.empty();
  std::size_t start = 0;
  while (dotted) {
    auto dot = name.find('.', start);
    dotted = detail::is_identifier(std::string_view(name).substr(start, dot - start));
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  return dotted ? name : quote(name);
}

int precedence(const Expr & e)
{
  if (auto * u = std::get_if<UnaryExpr>(&e.node)) return u->op == UnaryOp::Not ? 3 : 7;
  if (auto * b = std::get_if<BinaryExpr>(&e.node)) {
    switch (b->op) {
      case BinaryOp::Or: return 1;
      case BinaryOp::And: return 2;
      case BinaryOp::Add:
      case BinaryOp::Sub: return 5;
      case BinaryOp::Mul:
      case BinaryOp::Div: return 6;
      default: return 4;
    }
  }
  if (auto * l = std::get_if<LiteralExpr>(&e.node)) {
    const Value & v = l->value;
    if ((v.is<std::int64_t>() && v.as<std::int64_t>() < 0) ||
        (v.is<double>() && std::signbit(v.as<double>()))) {
      return 7;
    }
  }
  return 8;
}

bool positive_number(const Expr & e)
{
  auto * l = std::get_if<LiteralExpr>(&e.node);
  return l && (l->value.is<std::int64_t>() || l->value.is<double>()) && precedence(e) == 8;
}

std::string wrap(const Expr & e, int min_prec)
{
  std::string s = print_expression(e);
  return precedence(e) < min_prec ? "(" + s + ")" : s;
}

void indent(std::string & out, int depth) { out.append(static_cast<std::size_t>(depth) * 2, ' '); }

std::string print_source(const std::variant<Path, Value> & src, const char * arrow)
{
  if (auto * p = std::get_if<Path>(&src)) return std::string(arrow) + " " + p->str();
  return "= " + print_literal(std::get<Value>(src));
}

std::string print_statement(const Statement & st)
{
  return std::visit(
    [](const auto & s) -> std::string {
      using T = std::decay_t<decltype(s)>;
      if constexpr (std::is_same_v<T, LetStmt>) {
        return "let " + s.name + " = " + print_expression(*s.value);
      } else if constexpr (std::is_same_v<T, AssignStmt>) {
        return s.target.str() + " = " + print_expression(*s.value);
      } else if constexpr (std::is_same_v<T, AppendStmt>) {
        return "append " + s.target.str() + " <- " + print_expression(*s.value);
      } else {
        return "rename " + s.from + " -> " + s.to;
      }
    },
    st);
}

std::string print_criterion(const Criterion & c)
{
  std::string out = c.field.str() + " " + std::string(criterion_op_symbol(c.op)) + " ";
  if (auto * v = std::get_if<Value>(&c.value)) out += print_literal(*v);
  else out += std::get<Path>(c.value).str();
  return out;
}

}  // namespace

std::string print_literal(const Value & v)
{
  switch (v.kind()) {
    case ValueKind::String: return quote(v.as<std::string>());
    case ValueKind::Integer: return std::to_string(v.as<std::int64_t>());
    case ValueKind::Float: return format_double(v.as<double>());
    case ValueKind::Boolean: return v.as<bool>() ? "true" : "false";
    case ValueKind::Date: return "date " + quote(format_iso_date(v.as<Date>()));
    case ValueKind::Location: {
      const auto & l = v.as<Location>();
      return "location(" + format_double(l.latitude) + ", " + format_double(l.longitude) + ")";
    }
    case ValueKind::List: {
      std::string out = "[";
      const auto & items = v.as<List>();
      for (std::size_t i = 0; i < items.size(); ++i) {
        if (i) out += ", ";
        out += print_literal(items[i]);
      }
      return out + "]";
    }
    default:
      throw Error(
        "E_UNPRINTABLE", std::string(value_kind_name(v.kind())) + " values have no literal form");
  }
}

std::string print_expression(const Expr & expr)
{
  return std::visit(
    [&](const auto & n) -> std::string {
      using T = std::decay_t<decltype(n)>;
      if constexpr (std::is_same_v<T, LiteralExpr>) {
        return print_literal(n.value);
      } else if constexpr (std::is_same_v<T, PathExpr>) {
        return n.path.str();
      } else if constexpr (std::is_same_v<T, ListExpr>) {
        std::string out = "[";
        for (std::size_t i = 0; i < n.items.size(); ++i) {
          if (i) out += ", ";
          out += print_expression(*n.items[i]);
        }
        return out + "]";
      } else if constexpr (std::is_same_v<T, UnaryExpr>) {
        if (n.op == UnaryOp::Not) return "not " + wrap(*n.operand, 3);
        if (positive_number(*n.operand)) return "-(" + print_expression(*n.operand) + ")";
        return "-" + wrap(*n.operand, 7);
      } else {
        const int p = precedence(expr);
        const bool chain = p != 4;
        return wrap(*n.lhs, chain ? p : p + 1) + " " + std::string(binary_op_symbol(n.op)) + " " +
               wrap(*n.rhs, p + 1);
      }
    },
    expr.node);
}

std::string print_script(const Script & script)
{
  std::string out;
  for (const auto & st : script.statements) out += print_statement(st) + "\n";
  return out;
}

std::string print_domain(const DomainModel & m)
{
  std::string out = "domain " + m.name + " {\n";
  for (const auto & t : m.types) {
    out += "  type " + t.name + " {";
    if (t.attributes.empty()) {
      out += "}\n";
      continue;
    }
    out += "\n";
    for (const auto & a : t.attributes) out += "    " + a.name + ": " + a.type.str() + "\n";
    out += "  }\n";
  }
  for (const auto & s : m.services) {
    out += "  service " + s.name + " {\n";
    for (const auto & p : s.inputs) out += "    in " + p.name + ": " + p.type.str() + "\n";
    for (const auto & p : s.outputs) out += "    out " + p.name + ": " + p.type.str() + "\n";
    out += "  }\n";
  }
  for (const auto & io : m.ios) {
    out += "  io " + io.name + " {\n";
    for (const auto & v : io.variables) {
      out += std::string("    ") + (v.direction == Direction::In ? "in " : "out ") + v.name + ": " +
             v.type.str() + "\n";
    }
    out += "  }\n";
  }
  for (const auto & a : m.activities) {
    out += "  activity " + a.name + " {\n";
    for (const auto & rel : a.relations) {
      if (auto * s = std::get_if<ServiceRelation>(&rel)) {
        out += "    call " + s->service + " {\n";
        for (const auto & mp : s->inputs) out += "      " + mp.endpoint + " " + print_source(mp.source, "<-") + "\n";
        for (const auto & mp : s->outputs) out += "      " + mp.endpoint + " -> " + mp.path().str() + "\n";
      } else {
        const auto & io = std::get<IoRelation>(rel);
        out += "    io " + io.io + " {\n";
        for (const auto & mp : io.output_mappings) {
          out += "      show " + mp.endpoint + " " + print_source(mp.source, "<-") + "\n";
        }
        for (const auto & mp : io.input_mappings) {
          out += "      ask " + mp.endpoint + " -> " + mp.path().str() + "\n";
        }
      }
      out += "    }\n";
    }
    out += "  }\n";
  }
  return out + "}\n";
}

std::string print_abr(const AbrModel & m)
{
  std::string out = "bindings " + m.name + " for " + m.target_domain + " {\n";
  for (const auto & b : m.bindings) {
    out += "  implement " + b.service + " as " + b.kind() + " {\n";
    const bool rest = std::holds_alternative<RestImplementation>(b.details);
    std::visit(
      [&](const auto & d) {
        using T = std::decay_t<decltype(d)>;
        if constexpr (std::is_same_v<T, RestImplementation>) {
          out += "    method " + std::string(http_method_name(d.method)) + "\n";
          out += "    url " + quote(d.url_template) + "\n";
          for (const auto & [k, v] : d.headers) out += "    header " + quote(k) + " " + quote(v) + "\n";
          if (d.timeout_ms != kDefaultTimeoutMs) out += "    timeout " + std::to_string(d.timeout_ms) + "\n";
        } else if constexpr (std::is_same_v<T, ProcessImplementation>) {
          out += "    command " + quote(d.command_line) + "\n";
          if (!d.working_dir.empty()) out += "    workdir " + quote(d.working_dir) + "\n";
          if (d.timeout_ms != kDefaultTimeoutMs) out += "    timeout " + std::to_string(d.timeout_ms) + "\n";
        } else if constexpr (std::is_same_v<T, MockImplementation>) {
          out += "    fixture " + quote(d.fixture_file) + "\n";
        } else {
          for (const auto & [k, v] : d.config) out += "    " + k + " " + quote(v) + "\n";
        }
      },
      b.details);
    for (const auto & p : b.parameters) {
      if (p.direction == Direction::In) {
        out += "    param " + p.abstract_name + " -> ";
        if (rest) out += std::string(param_location_name(p.location)) + " ";
        out += concrete(p.concrete_name) + "\n";
      } else {
        out += "    result " + p.abstract_name + " <- " + concrete(p.concrete_name) + "\n";
      }
    }
    out += "  }\n";
  }
  return out + "}\n";
}

std::string print_flow(const FlowModel & m)
{
  std::string out = "flow " + m.name + " uses ";
  for (std::size_t i = 0; i < m.used_domains.size(); ++i) {
    if (i) out += ", ";
    out += m.used_domains[i];
  }
  out += " {\n";
  for (const auto & v : m.variables) {
    out += std::string("  ") + (v.is_input ? "input " : "var ") + v.name + ": " + v.type.str() + "\n";
  }
  for (const auto & s : m.steps) {
    std::visit(
      [&](const auto & b) {
        using T = std::decay_t<decltype(b)>;
        if constexpr (std::is_same_v<T, StartStep>) {
          out += "  start " + s.name + "\n";
        } else if constexpr (std::is_same_v<T, ActivityStep>) {
          out += "  step " + s.name + " = activity " + b.activity + "\n";
          for (const auto & ow : b.overwrites) {
            out += "    overwrite " + ow.target.str() + " = " + print_literal(ow.value) + "\n";
          }
        } else if constexpr (std::is_same_v<T, StartLoopStep>) {
          out += "  startloop " + s.name + " over " + b.data_flow_set.str() + " as " + b.loop_name + "\n";
        } else if constexpr (std::is_same_v<T, EndLoopStep>) {
          out += "  endloop " + s.name + " of " + b.start_loop + "\n";
        } else if constexpr (std::is_same_v<T, ScriptStep>) {
          out += "  script " + s.name + " {\n";
          for (const auto & st : b.script.statements) {
            indent(out, 2);
            out += print_statement(st) + "\n";
          }
          out += "  }\n";
        } else if constexpr (std::is_same_v<T, StoreStep>) {
          out += "  store " + s.name + " {";
          if (b.variables.empty()) {
            out += "}\n";
            return;
          }
          out += "\n    vars ";
          for (std::size_t i = 0; i < b.variables.size(); ++i) {
            if (i) out += ", ";
            out += b.variables[i];
          }
          out += "\n  }\n";
        } else if constexpr (std::is_same_v<T, RetrieveStep>) {
          out += "  retrieve " + s.name + " {\n";
          out += "    target " + b.target_variable + "\n";
          out += "    type " + b.type + "\n";
          out += std::string("    set ") + (b.is_set ? "true" : "false") + "\n";
          for (const auto & c : b.criteria) out += "    where " + print_criterion(c) + "\n";
          out += "  }\n";
        } else {
          out += "  delete " + s.name + " {\n";
          out += "    type " + b.type + "\n";
          for (const auto & c : b.criteria) out += "    where " + print_criterion(c) + "\n";
          out += "  }\n";
        }
      },
      s.body);
  }
  for (const auto & t : m.transitions) {
    out += "  " + t.source + " -> " + t.target;
    if (t.condition) out += " when " + print_expression(*t.condition);
    out += "\n";
  }
  return out + "}\n";
}

}  // namespace flowforge

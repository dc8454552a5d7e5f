#include <cerrno>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <map>
#include <set>

#include "flowforge/dsl.hpp"
#include "lexer.hpp"

namespace flowforge
{

using detail::SyntaxError;
using detail::Token;
using detail::TokenKind;

namespace
{

constexpr int kMaxNesting = 200;

constexpr std::string_view kExpressionKeywords[] = {"and", "or", "not", "in", "true", "false"};

class Parser
{
public:
  Parser(std::string_view text, std::string file)
  : file_(std::move(file)), toks_(detail::tokenize(text, file_))
  {
  }

  std::vector<Diagnostic> & diagnostics() { return diags_; }

protected:
  const Token & peek(std::size_t k = 0) const
  {
    return toks_[std::min(pos_ + k, toks_.size() - 1)];
  }
  const Token & next()
  {
    const Token & t = toks_[pos_];
    if (pos_ + 1 < toks_.size()) ++pos_;
    return t;
  }
  bool at_end() const { return peek().kind == TokenKind::End; }
  bool at_punct(std::string_view p, std::size_t k = 0) const
  {
    return peek(k).kind == TokenKind::Punct && peek(k).text == p;
  }
  bool at_keyword(std::string_view kw, std::size_t k = 0) const
  {
    return peek(k).kind == TokenKind::Ident && peek(k).text == kw;
  }
  bool accept_punct(std::string_view p)
  {
    if (!at_punct(p)) return false;
    next();
    return true;
  }
  bool accept_keyword(std::string_view kw)
  {
    if (!at_keyword(kw)) return false;
    next();
    return true;
  }

  SourceSpan span_of(const Token & t) const { return SourceSpan{file_, t.line, t.column, t.length}; }

  static std::string describe(const Token & t)
  {
    switch (t.kind) {
      case TokenKind::End: return "end of input";
      case TokenKind::String: return "string literal";
      default: return "'" + t.text + "'";
    }
  }

  [[noreturn]] void fail_at(const Token & t, const std::string & msg, std::string code = "E_SYNTAX")
  {
    throw SyntaxError{make_error(std::move(code), msg, span_of(t))};
  }
  [[noreturn]] void expected(const std::string & what)
  {
    fail_at(peek(), "expected " + what + " but found " + describe(peek()));
  }

  const Token & expect_punct(std::string_view p)
  {
    if (!at_punct(p)) expected("'" + std::string(p) + "'");
    return next();
  }
  const Token & expect_keyword(std::string_view kw)
  {
    if (!at_keyword(kw)) expected("'" + std::string(kw) + "'");
    return next();
  }
  std::string expect_ident(const std::string & what)
  {
    if (peek().kind != TokenKind::Ident) expected(what);
    return next().text;
  }
  std::string expect_string(const std::string & what)
  {
    if (peek().kind != TokenKind::String) expected(what);
    return next().text;
  }

  void duplicate(const Token & at, const std::string & kind, const std::string & name)
  {
    diags_.push_back(make_error(
      "E_DUPLICATE_NAME", kind + " '" + name + "' is declared more than once", span_of(at)));
  }

  TypeRef parse_type_ref()
  {
    TypeRef ref;
    if (at_keyword("set") && peek(1).kind == TokenKind::Ident) {
      next();
      ref.is_set = true;
    }
    const std::string name = expect_ident("a type name");
    if (auto b = basic_type_from_name(name)) ref.target = *b;
    else ref.target = name;
    return ref;
  }

  Path parse_path()
  {
    Path p;
    p.segments.push_back(expect_ident("a data-flow path"));
    while (at_punct(".") && peek(1).kind == TokenKind::Ident) {
      next();
      p.segments.push_back(next().text);
    }
    return p;
  }

  /// Dotted identifier chain or string literal.
  std::string parse_concrete_name()
  {
    if (peek().kind == TokenKind::String) return next().text;
    return parse_path().str();
  }

  bool at_number(std::size_t k = 0) const
  {
    return peek(k).kind == TokenKind::Int || peek(k).kind == TokenKind::Float;
  }

  bool at_literal() const
  {
    const Token & t = peek();
    if (t.kind == TokenKind::String || at_number()) return true;
    if (at_punct("-") && at_number(1)) return true;
    if (at_punct("[")) return true;
    if (at_keyword("true") || at_keyword("false")) return true;
    if (at_keyword("date") && peek(1).kind == TokenKind::String) return true;
    if (at_keyword("location") && at_punct("(", 1)) return true;
    return false;
  }

  Value parse_number(bool negative)
  {
    const Token & t = next();
    const std::string text = (negative ? "-" : "") + t.text;
    if (t.kind == TokenKind::Int) {
      std::int64_t v = 0;
      auto res = std::from_chars(text.data(), text.data() + text.size(), v);
      if (res.ec != std::errc() || res.ptr != text.data() + text.size()) {
        fail_at(t, "integer literal out of range");
      }
      return Value(v);
    }
    // strtod rather than from_chars: libstdc++ rejects subnormals as out of range.
    errno = 0;
    const double d = std::strtod(text.c_str(), nullptr);
    if (errno == ERANGE && std::isinf(d)) fail_at(t, "float literal out of range");
    return Value(d);
  }

  double parse_signed_number()
  {
    const bool neg = accept_punct("-");
    if (!at_number()) expected("a number");
    Value v = parse_number(neg);
    return v.is<double>() ? v.as<double>() : static_cast<double>(v.as<std::int64_t>());
  }

  Value parse_literal()
  {
    enter();
    Value v = parse_literal_inner();
    --depth_;
    return v;
  }

  Value parse_literal_inner()
  {
    const Token & t = peek();
    if (t.kind == TokenKind::String) return Value(next().text);
    if (at_number()) return parse_number(false);
    if (at_punct("-") && at_number(1)) {
      next();
      return parse_number(true);
    }
    if (accept_keyword("true")) return Value(true);
    if (accept_keyword("false")) return Value(false);
    if (at_keyword("date") && peek(1).kind == TokenKind::String) {
      next();
      const Token & s = next();
      auto d = parse_iso_date(s.text);
      if (!d) fail_at(s, "malformed date literal '" + s.text + "'");
      return Value(*d);
    }
    if (at_keyword("location") && at_punct("(", 1)) {
      const Token & kw = next();
      next();
      const double lat = parse_signed_number();
      expect_punct(",");
      const double lon = parse_signed_number();
      expect_punct(")");
      if (!(lat >= -90 && lat <= 90) || !(lon >= -180 && lon <= 180)) {
        fail_at(kw, "location out of range");
      }
      return Value(Location{lat, lon});
    }
    if (at_punct("[")) {
      const Token & open = next();
      List items;
      if (!at_punct("]")) {
        do {
          items.push_back(parse_literal());
        } while (accept_punct(","));
      }
      expect_punct("]");
      if (!is_homogeneous(items)) fail_at(open, "set literal mixes element kinds");
      return Value(std::move(items));
    }
    expected("a literal");
  }

  void enter()
  {
    if (++depth_ > kMaxNesting) fail_at(peek(), "nesting too deep");
  }

  // Expressions, loosest binding first.

  ExprPtr parse_expr()
  {
    enter();
    ExprPtr e = parse_or();
    --depth_;
    return e;
  }

  ExprPtr parse_or()
  {
    const int saved = depth_;
    ExprPtr lhs = parse_and();
    while (accept_keyword("or")) {
      enter();  // left-nested chains count towards the nesting limit
      lhs = make_binary(BinaryOp::Or, lhs, parse_and());
    }
    depth_ = saved;
    return lhs;
  }

  ExprPtr parse_and()
  {
    const int saved = depth_;
    ExprPtr lhs = parse_not();
    while (accept_keyword("and")) {
      enter();
      lhs = make_binary(BinaryOp::And, lhs, parse_not());
    }
    depth_ = saved;
    return lhs;
  }

  ExprPtr parse_not()
  {
    if (accept_keyword("not")) {
      enter();
      ExprPtr operand = parse_not();
      --depth_;
      return make_unary(UnaryOp::Not, operand);
    }
    return parse_comparison();
  }

  ExprPtr parse_comparison()
  {
    ExprPtr lhs = parse_additive();
    static const std::pair<std::string_view, BinaryOp> kOps[] = {
      {"==", BinaryOp::Eq}, {"!=", BinaryOp::Ne}, {"<", BinaryOp::Lt},
      {"<=", BinaryOp::Le}, {">", BinaryOp::Gt},  {">=", BinaryOp::Ge},
    };
    for (auto [sym, op] : kOps) {
      if (accept_punct(sym)) return make_binary(op, lhs, parse_additive());
    }
    if (accept_keyword("in")) return make_binary(BinaryOp::In, lhs, parse_additive());
    return lhs;
  }

  ExprPtr parse_additive()
  {
    const int saved = depth_;
    ExprPtr lhs = parse_multiplicative();
    for (;;) {
      BinaryOp op;
      if (accept_punct("+")) op = BinaryOp::Add;
      else if (accept_punct("-")) op = BinaryOp::Sub;
      else break;
      enter();
      lhs = make_binary(op, lhs, parse_multiplicative());
    }
    depth_ = saved;
    return lhs;
  }

  ExprPtr parse_multiplicative()
  {
    const int saved = depth_;
    ExprPtr lhs = parse_unary();
    for (;;) {
      BinaryOp op;
      if (accept_punct("*")) op = BinaryOp::Mul;
      else if (accept_punct("/")) op = BinaryOp::Div;
      else break;
      enter();
      lhs = make_binary(op, lhs, parse_unary());
    }
    depth_ = saved;
    return lhs;
  }

  ExprPtr parse_unary()
  {
    if (at_punct("-")) {
      if (at_number(1)) {
        next();
        return make_literal(parse_number(true));
      }
      next();
      enter();
      ExprPtr operand = parse_unary();
      --depth_;
      return make_unary(UnaryOp::Negate, operand);
    }
    return parse_primary();
  }

  ExprPtr parse_primary()
  {
    if (accept_punct("(")) {
      ExprPtr e = parse_expr();
      expect_punct(")");
      return e;
    }
    if (at_punct("[")) {
      const Token & open = next();
      std::vector<ExprPtr> items;
      if (!at_punct("]")) {
        do {
          items.push_back(parse_expr());
        } while (accept_punct(","));
      }
      expect_punct("]");
      bool all_literal = true;
      for (const auto & item : items) all_literal = all_literal && std::holds_alternative<LiteralExpr>(item->node);
      if (all_literal) {
        List values;
        for (const auto & item : items) values.push_back(std::get<LiteralExpr>(item->node).value);
        if (!is_homogeneous(values)) fail_at(open, "set literal mixes element kinds");
        return make_literal(Value(std::move(values)));
      }
      return make_list(std::move(items));
    }
    if (at_literal()) return make_literal(parse_literal());
    if (peek().kind == TokenKind::Ident) {
      if (is_expression_keyword(peek().text)) expected("an expression");
      return make_path(parse_path());
    }
    expected("an expression");
  }

  // Script statements: let / append / rename / assignment.

  bool at_statement() const
  {
    return peek().kind == TokenKind::Ident && !is_expression_keyword(peek().text);
  }

  Statement parse_statement()
  {
    if (at_keyword("let") && peek(1).kind == TokenKind::Ident) {
      next();
      std::string name = expect_ident("a variable name");
      expect_punct("=");
      return LetStmt{std::move(name), parse_expr()};
    }
    if (at_keyword("append") && peek(1).kind == TokenKind::Ident) {
      next();
      Path target = parse_path();
      expect_punct("<-");
      return AppendStmt{std::move(target), parse_expr()};
    }
    if (at_keyword("rename") && peek(1).kind == TokenKind::Ident) {
      next();
      std::string from = expect_ident("a variable name");
      expect_punct("->");
      std::string to = expect_ident("a variable name");
      return RenameStmt{std::move(from), std::move(to)};
    }
    Path target = parse_path();
    expect_punct("=");
    return AssignStmt{std::move(target), parse_expr()};
  }

  Script parse_statements(std::string_view terminator)
  {
    Script script;
    while (!at_punct(terminator) && !at_end()) {
      if (accept_punct(";")) continue;
      if (!at_statement()) expected("a statement");
      script.statements.push_back(parse_statement());
    }
    return script;
  }

  void expect_end()
  {
    if (!at_end()) expected("end of input");
  }

  std::string file_;
  std::vector<Token> toks_;
  std::size_t pos_ = 0;
  int depth_ = 0;
  std::vector<Diagnostic> diags_;
};

// ---------------------------------------------------------------------------
// Domain

class DomainParser : public Parser
{
public:
  using Parser::Parser;

  DomainModel run()
  {
    DomainModel m;
    m.span = span_of(expect_keyword("domain"));
    m.name = expect_ident("a domain name");
    expect_punct("{");
    while (!accept_punct("}")) {
      const Token & kw = peek();
      if (accept_keyword("type")) {
        m.types.push_back(parse_type(kw));
        claim(kw, "type", m.types.back().name);
      } else if (accept_keyword("service")) {
        m.services.push_back(parse_service(kw));
        claim(kw, "service", m.services.back().name);
      } else if (accept_keyword("io")) {
        m.ios.push_back(parse_io(kw));
        claim(kw, "io", m.ios.back().name);
      } else if (accept_keyword("activity")) {
        m.activities.push_back(parse_activity(kw));
        claim(kw, "activity", m.activities.back().name);
      } else {
        expected("'type', 'service', 'io', 'activity' or '}'");
      }
    }
    expect_end();
    return m;
  }

private:
  void claim(const Token & at, const std::string & kind, const std::string & name)
  {
    if (!names_.insert(name).second) duplicate(at, kind, name);
  }

  TypeDef parse_type(const Token & kw)
  {
    TypeDef td;
    td.span = span_of(kw);
    const Token & name_tok = peek();
    td.name = expect_ident("a type name");
    if (basic_type_from_name(td.name) || td.name == "set") {
      fail_at(name_tok, "type name '" + td.name + "' is reserved");
    }
    expect_punct("{");
    std::set<std::string> seen;
    while (!accept_punct("}")) {
      const Token & at = peek();
      Attribute attr;
      attr.span = span_of(at);
      attr.name = expect_ident("an attribute name or '}'");
      expect_punct(":");
      attr.type = parse_type_ref();
      if (!seen.insert(attr.name).second) duplicate(at, "attribute", attr.name);
      td.attributes.push_back(std::move(attr));
    }
    return td;
  }

  ServiceDef parse_service(const Token & kw)
  {
    ServiceDef sd;
    sd.span = span_of(kw);
    sd.name = expect_ident("a service name");
    expect_punct("{");
    std::set<std::string> seen;
    while (!accept_punct("}")) {
      const Token & at = peek();
      bool input = false;
      if (accept_keyword("in")) input = true;
      else if (!accept_keyword("out")) expected("'in', 'out' or '}'");
      Parameter p;
      p.span = span_of(at);
      p.name = expect_ident("a parameter name");
      expect_punct(":");
      p.type = parse_type_ref();
      if (!seen.insert(p.name).second) duplicate(at, "parameter", p.name);
      (input ? sd.inputs : sd.outputs).push_back(std::move(p));
    }
    return sd;
  }

  IoDef parse_io(const Token & kw)
  {
    IoDef io;
    io.span = span_of(kw);
    io.name = expect_ident("an io name");
    expect_punct("{");
    std::set<std::string> seen;
    while (!accept_punct("}")) {
      const Token & at = peek();
      IoVariable v;
      v.span = span_of(at);
      if (accept_keyword("in")) v.direction = Direction::In;
      else if (accept_keyword("out")) v.direction = Direction::Out;
      else expected("'in', 'out' or '}'");
      v.name = expect_ident("a variable name");
      expect_punct(":");
      v.type = parse_type_ref();
      if (!seen.insert(v.name).second) duplicate(at, "io variable", v.name);
      io.variables.push_back(std::move(v));
    }
    return io;
  }

  ActivityDef parse_activity(const Token & kw)
  {
    ActivityDef ad;
    ad.span = span_of(kw);
    ad.name = expect_ident("an activity name");
    expect_punct("{");
    while (!accept_punct("}")) {
      const Token & rel_kw = peek();
      if (accept_keyword("call")) {
        ServiceRelation rel;
        rel.span = span_of(rel_kw);
        rel.service = expect_ident("a service name");
        expect_punct("{");
        while (!accept_punct("}")) {
          Mapping m;
          m.span = span_of(peek());
          m.endpoint = expect_ident("a parameter name or '}'");
          if (accept_punct("<-")) {
            m.source = parse_path();
            rel.inputs.push_back(std::move(m));
          } else if (accept_punct("=")) {
            m.source = parse_literal();
            rel.inputs.push_back(std::move(m));
          } else if (accept_punct("->")) {
            m.source = parse_path();
            rel.outputs.push_back(std::move(m));
          } else {
            expected("'<-', '=' or '->'");
          }
        }
        ad.relations.emplace_back(std::move(rel));
      } else if (accept_keyword("io")) {
        IoRelation rel;
        rel.span = span_of(rel_kw);
        rel.io = expect_ident("an io name");
        expect_punct("{");
        while (!accept_punct("}")) {
          Mapping m;
          m.span = span_of(peek());
          if (accept_keyword("show")) {
            m.endpoint = expect_ident("a variable name");
            if (accept_punct("<-")) m.source = parse_path();
            else if (accept_punct("=")) m.source = parse_literal();
            else expected("'<-' or '='");
            rel.output_mappings.push_back(std::move(m));
          } else if (accept_keyword("ask")) {
            m.endpoint = expect_ident("a variable name");
            expect_punct("->");
            m.source = parse_path();
            rel.input_mappings.push_back(std::move(m));
          } else {
            expected("'show', 'ask' or '}'");
          }
        }
        ad.relations.emplace_back(std::move(rel));
      } else {
        expected("'call', 'io' or '}'");
      }
    }
    return ad;
  }

  std::set<std::string> names_;
};

// ---------------------------------------------------------------------------
// ABR

class AbrParser : public Parser
{
public:
  AbrParser(std::string_view text, std::string file, const AbrParseOptions & options)
  : Parser(text, std::move(file)), options_(options)
  {
  }

  AbrModel run()
  {
    AbrModel m;
    m.span = span_of(expect_keyword("bindings"));
    m.name = expect_ident("a bindings name");
    expect_keyword("for");
    m.target_domain = expect_ident("a domain name");
    expect_punct("{");
    std::set<std::string> seen;
    while (!accept_punct("}")) {
      const Token & kw = peek();
      if (!accept_keyword("implement")) expected("'implement' or '}'");
      Implementation impl = parse_implementation(kw);
      if (!seen.insert(impl.service).second) duplicate(kw, "binding", impl.service);
      m.bindings.push_back(std::move(impl));
    }
    expect_end();
    return m;
  }

private:
  Implementation parse_implementation(const Token & kw)
  {
    Implementation impl;
    impl.span = span_of(kw);
    impl.service = expect_ident("a service name");
    expect_keyword("as");
    const Token & kind_tok = peek();
    const std::string kind = expect_ident("an implementation kind");
    const bool rest = kind == "REST";
    if (rest) {
      impl.details = RestImplementation{};
    } else if (kind == "PROCESS") {
      impl.details = ProcessImplementation{};
    } else if (kind == "MOCK") {
      impl.details = MockImplementation{};
    } else if (options_.accept_any_kind || options_.custom_kinds.count(kind)) {
      impl.details = CustomImplementation{kind, {}};
    } else {
      fail_at(kind_tok, "unknown implementation kind '" + kind + "'", "E_UNKNOWN_IMPLEMENTATION_KIND");
    }
    expect_punct("{");
    bool have_main = false;
    while (!accept_punct("}")) {
      const Token & at = peek();
      if (accept_keyword("param")) {
        ServiceParameter p;
        p.span = span_of(at);
        p.direction = Direction::In;
        p.abstract_name = expect_ident("a parameter name");
        expect_punct("->");
        if (rest) {
          if (accept_keyword("body")) p.location = ParamLocation::Body;
          else if (accept_keyword("path")) p.location = ParamLocation::Path;
          else if (accept_keyword("query")) p.location = ParamLocation::Query;
          else expected("'body', 'path' or 'query'");
        }
        p.concrete_name = parse_concrete_name();
        impl.parameters.push_back(std::move(p));
        continue;
      }
      if (accept_keyword("result")) {
        ServiceParameter p;
        p.span = span_of(at);
        p.direction = Direction::Out;
        p.abstract_name = expect_ident("a parameter name");
        expect_punct("<-");
        p.concrete_name = parse_concrete_name();
        impl.parameters.push_back(std::move(p));
        continue;
      }
      have_main |= parse_setting(impl.details);
    }
    if (!have_main) {
      const char * what = rest ? "'url'" : impl.details.index() == 1 ? "'command'" : "'fixture'";
      if (impl.details.index() < 3) fail_at(kw, std::string(kind) + " binding needs " + what);
    }
    return impl;
  }

  // Returns true when the setting is the kind's mandatory one.
  bool parse_setting(ImplementationDetails & details)
  {
    const Token & at = peek();
    if (auto * r = std::get_if<RestImplementation>(&details)) {
      if (accept_keyword("method")) {
        const Token & m = peek();
        const auto name = expect_ident("an HTTP method");
        if (name == "GET") r->method = HttpMethod::Get;
        else if (name == "POST") r->method = HttpMethod::Post;
        else if (name == "PUT") r->method = HttpMethod::Put;
        else if (name == "DELETE") r->method = HttpMethod::Delete;
        else fail_at(m, "unsupported HTTP method '" + name + "'");
        return false;
      }
      if (accept_keyword("url")) {
        r->url_template = expect_string("a URL string");
        return true;
      }
      if (accept_keyword("header")) {
        auto key = expect_string("a header name");
        r->headers.emplace_back(std::move(key), expect_string("a header value"));
        return false;
      }
      if (accept_keyword("timeout")) {
        r->timeout_ms = parse_timeout();
        return false;
      }
      expected("a REST setting");
    }
    if (auto * p = std::get_if<ProcessImplementation>(&details)) {
      if (accept_keyword("command")) {
        p->command_line = expect_string("a command string");
        return true;
      }
      if (accept_keyword("workdir")) {
        p->working_dir = expect_string("a directory string");
        return false;
      }
      if (accept_keyword("timeout")) {
        p->timeout_ms = parse_timeout();
        return false;
      }
      expected("a PROCESS setting");
    }
    if (auto * mk = std::get_if<MockImplementation>(&details)) {
      if (accept_keyword("fixture")) {
        mk->fixture_file = expect_string("a fixture path string");
        return true;
      }
      expected("a MOCK setting");
    }
    auto & custom = std::get<CustomImplementation>(details);
    if (peek().kind != TokenKind::Ident) fail_at(at, "expected a setting name");
    auto key = next().text;
    custom.config.emplace_back(std::move(key), expect_string("a setting value string"));
    return true;
  }

  std::int64_t parse_timeout()
  {
    const Token & t = peek();
    if (t.kind != TokenKind::Int) expected("a timeout in milliseconds");
    Value v = parse_number(false);
    if (v.as<std::int64_t>() <= 0) fail_at(t, "timeout must be positive");
    return v.as<std::int64_t>();
  }

  const AbrParseOptions & options_;
};

// ---------------------------------------------------------------------------
// Flow

class FlowParser : public Parser
{
public:
  using Parser::Parser;

  FlowModel run()
  {
    m_.span = span_of(expect_keyword("flow"));
    m_.name = expect_ident("a flow name");
    expect_keyword("uses");
    do {
      m_.used_domains.push_back(expect_ident("a domain name"));
    } while (accept_punct(","));
    expect_punct("{");
    Scope top;
    parse_items(top);
    expect_end();
    rename_loop_sources(top);
    for (const auto & t : m_.transitions) {
      for (const auto * endpoint : {&t.source, &t.target}) {
        if (!step_names_.count(*endpoint)) {
          diags_.push_back(make_error(
            "E_UNKNOWN_STEP", "transition refers to undeclared step '" + *endpoint + "'", t.span));
        }
      }
    }
    return std::move(m_);
  }

private:
  struct Scope
  {
    std::vector<std::string> nodes;
    std::map<std::string, std::string> loop_end;
    std::vector<std::size_t> transitions;
  };

  void add_step(const Token & kw, Step step, Scope & scope)
  {
    if (!step_names_.insert(step.name).second) duplicate(kw, "step", step.name);
    scope.nodes.push_back(step.name);
    m_.steps.push_back(std::move(step));
  }

  void parse_items(Scope & scope)
  {
    while (!accept_punct("}")) {
      const Token & kw = peek();
      if (kw.kind == TokenKind::Ident && at_punct("->", 1)) {
        parse_transition(scope);
        continue;
      }
      if (accept_keyword("var") || accept_keyword("input")) {
        if (loop_depth_ > 0) fail_at(kw, "declarations belong at flow level");
        VariableDecl d;
        d.span = span_of(kw);
        d.is_input = kw.text == "input";
        d.name = expect_ident("a variable name");
        expect_punct(":");
        d.type = parse_type_ref();
        if (!var_names_.insert(d.name).second) duplicate(kw, "variable", d.name);
        m_.variables.push_back(std::move(d));
        continue;
      }
      Step step;
      step.span = span_of(kw);
      if (accept_keyword("start")) {
        step.name = expect_ident("a step name");
        step.body = StartStep{};
      } else if (accept_keyword("step")) {
        step.name = expect_ident("a step name");
        expect_punct("=");
        expect_keyword("activity");
        ActivityStep as;
        as.activity = expect_ident("an activity name");
        while (accept_keyword("overwrite")) {
          Overwrite ow;
          ow.target = parse_path();
          expect_punct("=");
          ow.value = parse_literal();
          as.overwrites.push_back(std::move(ow));
        }
        step.body = std::move(as);
      } else if (accept_keyword("retrieve")) {
        step.name = expect_ident("a step name");
        step.body = parse_retrieve(kw);
      } else if (accept_keyword("delete")) {
        step.name = expect_ident("a step name");
        expect_punct("{");
        DeleteStep ds;
        expect_keyword("type");
        ds.type = expect_ident("a type name");
        while (accept_keyword("where")) ds.criteria.push_back(parse_criterion());
        expect_punct("}");
        step.body = std::move(ds);
      } else if (accept_keyword("store")) {
        step.name = expect_ident("a step name");
        expect_punct("{");
        StoreStep ss;
        if (accept_keyword("vars")) {
          do {
            ss.variables.push_back(expect_ident("a variable name"));
          } while (accept_punct(","));
        }
        expect_punct("}");
        step.body = std::move(ss);
      } else if (accept_keyword("script")) {
        step.name = expect_ident("a step name");
        expect_punct("{");
        ScriptStep sc{parse_statements("}")};
        expect_punct("}");
        step.body = std::move(sc);
      } else if (accept_keyword("startloop")) {
        step.name = expect_ident("a step name");
        expect_keyword("over");
        StartLoopStep sl;
        sl.data_flow_set = parse_path();
        expect_keyword("as");
        sl.loop_name = expect_ident("a loop variable name");
        step.body = std::move(sl);
      } else if (accept_keyword("endloop")) {
        step.name = expect_ident("a step name");
        expect_keyword("of");
        step.body = EndLoopStep{expect_ident("a startloop step name")};
      } else if (accept_keyword("loop")) {
        parse_loop_block(kw, scope);
        continue;
      } else {
        expected("a step, transition or '}'");
      }
      add_step(kw, std::move(step), scope);
    }
  }

  void parse_transition(Scope & scope)
  {
    Transition t;
    t.span = span_of(peek());
    t.source = next().text;
    expect_punct("->");
    t.target = expect_ident("a target step name");
    if (accept_keyword("when")) t.condition = parse_expr();
    scope.transitions.push_back(m_.transitions.size());
    m_.transitions.push_back(std::move(t));
  }

  RetrieveStep parse_retrieve(const Token & kw)
  {
    RetrieveStep rs;
    bool have_target = false, have_type = false;
    expect_punct("{");
    while (!accept_punct("}")) {
      if (accept_keyword("target")) {
        rs.target_variable = expect_ident("a variable name");
        have_target = true;
      } else if (accept_keyword("type")) {
        rs.type = expect_ident("a type name");
        have_type = true;
      } else if (accept_keyword("set")) {
        if (accept_keyword("true")) rs.is_set = true;
        else if (accept_keyword("false")) rs.is_set = false;
        else expected("'true' or 'false'");
      } else if (accept_keyword("where")) {
        rs.criteria.push_back(parse_criterion());
      } else {
        expected("'target', 'type', 'set', 'where' or '}'");
      }
    }
    if (!have_target || !have_type) fail_at(kw, "retrieve needs 'target' and 'type'");
    return rs;
  }

  Criterion parse_criterion()
  {
    Criterion c;
    c.field = parse_path();
    static const std::pair<std::string_view, CriterionOp> kOps[] = {
      {"==", CriterionOp::Eq}, {"!=", CriterionOp::Ne}, {"<", CriterionOp::Lt},
      {"<=", CriterionOp::Le}, {">", CriterionOp::Gt},  {">=", CriterionOp::Ge},
    };
    bool matched = false;
    for (auto [sym, op] : kOps) {
      if (accept_punct(sym)) {
        c.op = op;
        matched = true;
        break;
      }
    }
    if (!matched) {
      if (accept_keyword("contains")) c.op = CriterionOp::Contains;
      else expected("a criterion operator");
    }
    if (at_literal()) c.value = parse_literal();
    else c.value = parse_path();
    return c;
  }

  void parse_loop_block(const Token & kw, Scope & outer)
  {
    if (++loop_depth_ > kMaxNesting) fail_at(kw, "loops nested too deeply");
    Step start;
    start.span = span_of(kw);
    start.name = expect_ident("a loop name");
    expect_keyword("over");
    StartLoopStep sl;
    sl.data_flow_set = parse_path();
    expect_keyword("as");
    sl.loop_name = expect_ident("a loop variable name");
    start.body = std::move(sl);
    const std::string loop = start.name;
    const std::string end = loop + "_end";
    add_step(kw, std::move(start), outer);
    outer.nodes.pop_back();

    Scope body;
    expect_punct("{");
    parse_items(body);

    std::map<std::string, int> incoming, outgoing;
    for (auto idx : body.transitions) {
      ++incoming[m_.transitions[idx].target];
      ++outgoing[m_.transitions[idx].source];
    }
    std::vector<std::string> entries, exits;
    for (const auto & n : body.nodes) {
      if (!incoming.count(n)) entries.push_back(n);
      if (!outgoing.count(n)) exits.push_back(n);
    }
    if (!body.nodes.empty() && entries.size() != 1) {
      fail_at(kw, "loop '" + loop + "' body must have exactly one entry step");
    }
    rename_loop_sources(body);

    Step finish;
    finish.span = span_of(kw);
    finish.name = end;
    finish.body = EndLoopStep{loop};
    add_step(kw, std::move(finish), outer);
    outer.nodes.pop_back();

    auto synth = [&](std::string from, std::string to) {
      Transition t;
      t.span = span_of(kw);
      t.source = std::move(from);
      t.target = std::move(to);
      m_.transitions.push_back(std::move(t));
    };
    if (body.nodes.empty()) {
      synth(loop, end);
    } else {
      synth(loop, entries.front());
      for (const auto & e : exits) {
        auto it = body.loop_end.find(e);
        synth(it == body.loop_end.end() ? e : it->second, end);
      }
    }
    outer.nodes.push_back(loop);
    outer.loop_end[loop] = end;
    --loop_depth_;
  }

  void rename_loop_sources(const Scope & scope)
  {
    for (auto idx : scope.transitions) {
      auto it = scope.loop_end.find(m_.transitions[idx].source);
      if (it != scope.loop_end.end()) m_.transitions[idx].source = it->second;
    }
  }

  FlowModel m_;
  std::set<std::string> step_names_;
  std::set<std::string> var_names_;
  int loop_depth_ = 0;
};

template <class T, class Fn>
ParseResult<T> run_parser(Fn && fn)
{
  ParseResult<T> result;
  try {
    auto [model, diags] = fn();
    result.diagnostics = std::move(diags);
    if (!has_errors(result.diagnostics)) result.model = std::move(model);
  } catch (const SyntaxError & e) {
    result.diagnostics.push_back(e.diagnostic);
  }
  return result;
}

}  // namespace

bool is_expression_keyword(std::string_view word)
{
  for (auto kw : kExpressionKeywords) {
    if (kw == word) return true;
  }
  return false;
}

ParseResult<DomainModel> parse_domain(std::string_view text, const std::string & file)
{
  return run_parser<DomainModel>([&] {
    DomainParser p(text, file);
    auto m = p.run();
    return std::make_pair(std::move(m), std::move(p.diagnostics()));
  });
}

ParseResult<AbrModel> parse_abr(
  std::string_view text, const std::string & file, const AbrParseOptions & options)
{
  return run_parser<AbrModel>([&] {
    AbrParser p(text, file, options);
    auto m = p.run();
    return std::make_pair(std::move(m), std::move(p.diagnostics()));
  });
}

ParseResult<FlowModel> parse_flow(std::string_view text, const std::string & file)
{
  return run_parser<FlowModel>([&] {
    FlowParser p(text, file);
    auto m = p.run();
    return std::make_pair(std::move(m), std::move(p.diagnostics()));
  });
}

namespace
{

class FragmentParser : public Parser
{
public:
  using Parser::Parser;
  ExprPtr expression()
  {
    ExprPtr e = parse_expr();
    expect_end();
    return e;
  }
  Script script()
  {
    Script s = parse_statements("}");
    expect_end();
    return s;
  }
};

}  // namespace

ParseResult<ExprPtr> parse_expression(std::string_view text)
{
  return run_parser<ExprPtr>([&] {
    FragmentParser p(text, "<expr>");
    auto e = p.expression();
    return std::make_pair(std::move(e), std::move(p.diagnostics()));
  });
}

ParseResult<Script> parse_script(std::string_view text)
{
  return run_parser<Script>([&] {
    FragmentParser p(text, "<script>");
    auto s = p.script();
    return std::make_pair(std::move(s), std::move(p.diagnostics()));
  });
}

}  // namespace flowforge

#include "gen.hpp"

#include <cmath>
#include <cstring>

namespace ffgen
{

using namespace flowforge;

std::int64_t Gen::range(std::int64_t lo, std::int64_t hi)
{
  return std::uniform_int_distribution<std::int64_t>(lo, hi)(rng_);
}

bool Gen::chance(double p) { return std::bernoulli_distribution(p)(rng_); }

std::string Gen::name()
{
  static const std::string kFirst = "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ_";
  static const std::string kRest = kFirst + "0123456789";
  std::string s(1, kFirst[static_cast<std::size_t>(range(0, static_cast<std::int64_t>(kFirst.size()) - 1))]);
  const auto extra = range(0, 6);
  for (std::int64_t i = 0; i < extra; ++i) {
    s += kRest[static_cast<std::size_t>(range(0, static_cast<std::int64_t>(kRest.size()) - 1))];
  }
  return s + std::to_string(counter_++);
}

std::string Gen::text()
{
  static const std::vector<std::string> kPieces = {
    "a", "Z", " ", "\"", "\\", "\n", "\t", "\r", "\x01", "\x1f", "//", "{", "}", "->",
    "\xc3\xa9", "\xe2\x82\xac", "0", "when", "x.y", "#", "**bold**"};
  std::string s;
  const auto n = range(0, 8);
  for (std::int64_t i = 0; i < n; ++i) s += pick(kPieces);
  return s;
}

Path Gen::path(int max_len)
{
  Path p;
  const auto n = range(1, max_len);
  for (std::int64_t i = 0; i < n; ++i) p.segments.push_back(name());
  return p;
}

BasicType Gen::basic_type(bool with_image)
{
  const auto n = static_cast<std::int64_t>(std::size(kAllBasicTypes)) - (with_image ? 1 : 2);
  auto t = kAllBasicTypes[static_cast<std::size_t>(range(0, n))];
  if (!with_image && t == BasicType::Image) t = BasicType::String;
  return t;
}

TypeRef Gen::type_ref(const std::vector<std::string> & type_names)
{
  TypeRef ref;
  ref.is_set = chance(0.3);
  if (!type_names.empty() && chance(0.4)) ref.target = pick(type_names);
  else ref.target = basic_type();
  return ref;
}

Value Gen::value(BasicType t)
{
  switch (t) {
    case BasicType::String: return Value(text());
    case BasicType::Integer: {
      switch (range(0, 3)) {
        case 0: return Value(range(-10, 10));
        case 1: return Value(std::numeric_limits<std::int64_t>::min());
        case 2: return Value(std::numeric_limits<std::int64_t>::max());
        default: return Value(static_cast<std::int64_t>(rng_()));
      }
    }
    case BasicType::Float: {
      if (chance(0.5)) return Value(static_cast<double>(range(-1000, 1000)) / 8.0);
      for (;;) {
        const std::uint64_t bits = rng_();
        double d = 0;
        std::memcpy(&d, &bits, sizeof d);
        if (std::isfinite(d)) return Value(d);
      }
    }
    case BasicType::Boolean: return Value(chance(0.5));
    case BasicType::Date: return Value(Date{range(-62167219200000LL, 253402300799999LL)});
    case BasicType::Location: {
      const double lat = std::uniform_real_distribution<double>(-90, 90)(rng_);
      const double lon = std::uniform_real_distribution<double>(-180, 180)(rng_);
      return Value(Location{lat, lon});
    }
    case BasicType::Image: break;
  }
  return Value(text());
}

Value Gen::literal(int depth)
{
  if (depth < 2 && chance(0.15)) {
    List items;
    const auto n = range(0, 3);
    if (chance(0.2)) {
      for (std::int64_t i = 0; i < n; ++i) items.push_back(literal(depth + 1));
      if (!is_homogeneous(items)) items.clear();
    } else {
      const auto t = basic_type(false);
      for (std::int64_t i = 0; i < n; ++i) items.push_back(value(t));
    }
    return Value(std::move(items));
  }
  return value(basic_type(false));
}

ExprPtr Gen::expr(int depth)
{
  if (depth <= 0 || chance(0.25)) {
    return chance(0.5) ? make_literal(literal()) : make_path(path());
  }
  switch (range(0, 5)) {
    case 0: return make_unary(chance(0.5) ? UnaryOp::Not : UnaryOp::Negate, expr(depth - 1));
    case 1: {
      std::vector<ExprPtr> items;
      const auto n = range(1, 3);
      for (std::int64_t i = 0; i < n; ++i) items.push_back(expr(depth - 1));
      bool all_literal = true;
      for (const auto & it : items) all_literal = all_literal && std::holds_alternative<LiteralExpr>(it->node);
      if (all_literal) items.back() = make_path(path());
      return make_list(std::move(items));
    }
    default: {
      const auto op = static_cast<BinaryOp>(range(0, static_cast<std::int64_t>(BinaryOp::Div)));
      return make_binary(op, expr(depth - 1), expr(depth - 1));
    }
  }
}

Script Gen::script(int max_len)
{
  Script s;
  const auto n = range(0, max_len);
  for (std::int64_t i = 0; i < n; ++i) {
    switch (range(0, 3)) {
      case 0: s.statements.push_back(LetStmt{name(), expr(3)}); break;
      case 1: s.statements.push_back(AssignStmt{path(), expr(3)}); break;
      case 2: s.statements.push_back(AppendStmt{path(), expr(3)}); break;
      default: s.statements.push_back(RenameStmt{name(), name()}); break;
    }
  }
  return s;
}

DomainModel Gen::domain()
{
  DomainModel m;
  m.name = name();
  std::vector<std::string> type_names;
  const auto n_types = range(0, 4);
  for (std::int64_t i = 0; i < n_types; ++i) type_names.push_back(name());
  for (const auto & tn : type_names) {
    TypeDef td;
    td.name = tn;
    const auto n = range(0, 5);
    for (std::int64_t i = 0; i < n; ++i) td.attributes.push_back({name(), type_ref(type_names), {}});
    m.types.push_back(std::move(td));
  }
  std::vector<std::string> services, ios;
  const auto n_services = range(0, 3);
  for (std::int64_t s = 0; s < n_services; ++s) {
    ServiceDef sd;
    sd.name = name();
    for (auto n = range(0, 3); n > 0; --n) sd.inputs.push_back({name(), type_ref(type_names), {}});
    for (auto n = range(0, 3); n > 0; --n) sd.outputs.push_back({name(), type_ref(type_names), {}});
    services.push_back(sd.name);
    m.services.push_back(std::move(sd));
  }
  const auto n_ios = range(0, 3);
  for (std::int64_t s = 0; s < n_ios; ++s) {
    IoDef io;
    io.name = name();
    for (auto n = range(0, 4); n > 0; --n) {
      io.variables.push_back({name(), type_ref(type_names), chance(0.5) ? Direction::In : Direction::Out, {}});
    }
    ios.push_back(io.name);
    m.ios.push_back(std::move(io));
  }
  auto source = [&]() -> std::variant<Path, Value> {
    if (chance(0.3)) return literal();
    return path();
  };
  const auto n_acts = range(0, 3);
  for (std::int64_t a = 0; a < n_acts; ++a) {
    ActivityDef ad;
    ad.name = name();
    for (auto n = range(0, 3); n > 0; --n) {
      if (chance(0.5)) {
        ServiceRelation rel;
        rel.service = services.empty() ? name() : pick(services);
        for (auto k = range(0, 3); k > 0; --k) rel.inputs.push_back({name(), source(), {}});
        for (auto k = range(0, 2); k > 0; --k) rel.outputs.push_back({name(), path(), {}});
        ad.relations.emplace_back(std::move(rel));
      } else {
        IoRelation rel;
        rel.io = ios.empty() ? name() : pick(ios);
        for (auto k = range(0, 3); k > 0; --k) rel.output_mappings.push_back({name(), source(), {}});
        for (auto k = range(0, 3); k > 0; --k) rel.input_mappings.push_back({name(), path(), {}});
        ad.relations.emplace_back(std::move(rel));
      }
    }
    m.activities.push_back(std::move(ad));
  }
  return m;
}

AbrModel Gen::abr()
{
  AbrModel m;
  m.name = name();
  m.target_domain = name();
  auto concrete = [&] { return chance(0.5) ? path().str() : text(); };
  auto timeout = [&] { return chance(0.5) ? kDefaultTimeoutMs : range(1, 120000); };
  for (auto n = range(0, 4); n > 0; --n) {
    Implementation impl;
    impl.service = name();
    const auto kind = range(0, 3);
    switch (kind) {
      case 0: {
        RestImplementation r;
        r.method = static_cast<HttpMethod>(range(0, 3));
        r.url_template = text();
        for (auto k = range(0, 2); k > 0; --k) r.headers.emplace_back(text(), text());
        r.timeout_ms = timeout();
        impl.details = r;
        break;
      }
      case 1: impl.details = ProcessImplementation{text(), chance(0.5) ? text() : "", timeout()}; break;
      case 2: impl.details = MockImplementation{text()}; break;
      default: {
        CustomImplementation c;
        c.kind = "KIND" + name();
        for (auto k = range(0, 2); k > 0; --k) c.config.emplace_back(name(), text());
        impl.details = c;
      }
    }
    for (auto k = range(0, 4); k > 0; --k) {
      ServiceParameter p;
      p.abstract_name = name();
      p.concrete_name = concrete();
      p.direction = chance(0.5) ? Direction::In : Direction::Out;
      if (kind == 0 && p.direction == Direction::In) p.location = static_cast<ParamLocation>(range(0, 2));
      impl.parameters.push_back(std::move(p));
    }
    m.bindings.push_back(std::move(impl));
  }
  return m;
}

FlowModel Gen::flow()
{
  FlowModel m;
  m.name = name();
  for (auto n = range(1, 3); n > 0; --n) m.used_domains.push_back(name());
  for (auto n = range(0, 4); n > 0; --n) {
    m.variables.push_back({name(), type_ref({name()}), chance(0.3), {}});
  }
  auto criteria = [&] {
    std::vector<Criterion> cs;
    for (auto k = range(0, 3); k > 0; --k) {
      Criterion c;
      c.field = path(2);
      c.op = static_cast<CriterionOp>(range(0, 6));
      if (chance(0.5)) c.value = literal();
      else c.value = path();
      cs.push_back(std::move(c));
    }
    return cs;
  };
  std::vector<std::string> names;
  for (auto n = range(1, 8); n > 0; --n) {
    Step s;
    s.name = name();
    switch (range(0, 7)) {
      case 0: s.body = StartStep{}; break;
      case 1: {
        ActivityStep as{name(), {}};
        for (auto k = range(0, 2); k > 0; --k) as.overwrites.push_back({path(), literal()});
        s.body = std::move(as);
        break;
      }
      case 2: s.body = StartLoopStep{path(), name()}; break;
      case 3: s.body = EndLoopStep{names.empty() ? name() : pick(names)}; break;
      case 4: s.body = ScriptStep{script(4)}; break;
      case 5: {
        StoreStep st;
        for (auto k = range(0, 3); k > 0; --k) st.variables.push_back(name());
        s.body = std::move(st);
        break;
      }
      case 6: s.body = RetrieveStep{name(), name(), chance(0.5), criteria()}; break;
      default: s.body = DeleteStep{name(), criteria()}; break;
    }
    names.push_back(s.name);
    m.steps.push_back(std::move(s));
  }
  for (auto n = range(0, 10); n > 0; --n) {
    Transition t;
    t.source = pick(names);
    t.target = pick(names);
    if (chance(0.5)) t.condition = expr(4);
    m.transitions.push_back(std::move(t));
  }
  return m;
}

}  // namespace ffgen

#include "flowforge/validator.hpp"

#include <algorithm>
#include <deque>
#include <functional>

namespace flowforge
{

namespace
{

std::string q(std::string_view s) { return "'" + std::string(s) + "'"; }

void error(std::vector<Diagnostic> & diags, std::string code, std::string msg, const SourceSpan & span)
{
  diags.push_back(make_error(std::move(code), std::move(msg), span));
}

using Adjacency = std::map<std::string, std::vector<const Transition *>>;

Adjacency successors(const FlowModel & flow)
{
  Adjacency out;
  for (const auto & t : flow.transitions) out[t.source].push_back(&t);
  return out;
}

Adjacency predecessors(const FlowModel & flow)
{
  Adjacency in;
  for (const auto & t : flow.transitions) in[t.target].push_back(&t);
  return in;
}

const std::vector<const Transition *> & edges(const Adjacency & adj, const std::string & n)
{
  static const std::vector<const Transition *> kNone;
  auto it = adj.find(n);
  return it == adj.end() ? kNone : it->second;
}

// ---------------------------------------------------------------------------
// Linking

void check_type_refs(const DomainModel & merged, std::vector<Diagnostic> & diags)
{
  auto check = [&](const TypeRef & ref, const SourceSpan & span, const std::string & where) {
    if (ref.is_basic() || merged.find_type(ref.target_name())) return;
    error(diags, "E_UNKNOWN_TYPE", where + " refers to undefined type " + q(ref.target_name()), span);
  };
  for (const auto & t : merged.types) {
    for (const auto & a : t.attributes) check(a.type, a.span, "attribute " + q(t.name + "." + a.name));
  }
  for (const auto & s : merged.services) {
    for (const auto & p : s.inputs) check(p.type, p.span, "parameter " + q(s.name + "." + p.name));
    for (const auto & p : s.outputs) check(p.type, p.span, "parameter " + q(s.name + "." + p.name));
  }
  for (const auto & io : merged.ios) {
    for (const auto & v : io.variables) check(v.type, v.span, "variable " + q(io.name + "." + v.name));
  }
}

// A cycle through scalar record attributes would need an infinite value.
void check_recursive_types(const DomainModel & merged, std::vector<Diagnostic> & diags)
{
  std::map<std::string, int> state;  // 0 unvisited, 1 on stack, 2 done
  std::set<std::string> reported;
  std::function<void(const TypeDef &)> visit = [&](const TypeDef & t) {
    state[t.name] = 1;
    for (const auto & a : t.attributes) {
      if (a.type.is_set || a.type.is_basic()) continue;
      const TypeDef * next = merged.find_type(a.type.target_name());
      if (!next) continue;
      if (state[next->name] == 1) {
        if (reported.insert(next->name).second) {
          error(diags, "E_RECURSIVE_TYPE",
                "type " + q(next->name) + " contains itself through non-set attribute " + q(t.name + "." + a.name),
                a.span);
        }
      } else if (state[next->name] == 0) {
        visit(*next);
      }
    }
    state[t.name] = 2;
  };
  for (const auto & t : merged.types) {
    if (state[t.name] == 0) visit(t);
  }
}

void check_unique_elements(const DomainModel & d, std::vector<Diagnostic> & diags)
{
  std::set<std::string> seen;
  auto claim = [&](const std::string & n, const SourceSpan & span) {
    if (!seen.insert(n).second) {
      error(diags, "E_DUPLICATE_NAME", "domain " + q(d.name) + " declares " + q(n) + " more than once", span);
    }
  };
  for (const auto & x : d.types) claim(x.name, x.span);
  for (const auto & x : d.services) claim(x.name, x.span);
  for (const auto & x : d.ios) claim(x.name, x.span);
  for (const auto & x : d.activities) claim(x.name, x.span);
}

std::vector<std::string> url_placeholders(const std::string & url)
{
  std::vector<std::string> out;
  std::size_t pos = 0;
  while ((pos = url.find('{', pos)) != std::string::npos) {
    const auto close = url.find('}', pos);
    if (close == std::string::npos) break;
    out.push_back(url.substr(pos + 1, close - pos - 1));
    pos = close + 1;
  }
  return out;
}

void check_binding(
  const Implementation & impl, const ServiceDef & svc, const ValidateOptions & options,
  std::vector<Diagnostic> & diags)
{
  const std::string kind = impl.kind();
  if (!options.known_kinds.count(kind)) {
    error(diags, "E_UNKNOWN_KIND", "no executor is registered for implementation kind " + q(kind), impl.span);
  }
  std::set<std::string> seen_in, seen_out;
  for (const auto & p : impl.parameters) {
    const bool in = p.direction == Direction::In;
    const Parameter * target = in ? svc.find_input(p.abstract_name) : svc.find_output(p.abstract_name);
    if (!target) {
      error(diags, "E_PARAM_MISMATCH",
            q(p.abstract_name) + " is not an " + (in ? "input" : "output") + " of service " + q(svc.name),
            p.span);
    } else if (!(in ? seen_in : seen_out).insert(p.abstract_name).second) {
      error(diags, "E_PARAM_MISMATCH", q(p.abstract_name) + " is mapped more than once", p.span);
    }
  }
  for (const auto & p : svc.inputs) {
    if (!seen_in.count(p.name)) {
      error(diags, "E_PARAM_MISMATCH",
            "binding of " + q(svc.name) + " does not map input " + q(p.name), impl.span);
    }
  }
  for (const auto & p : svc.outputs) {
    if (!seen_out.count(p.name)) {
      error(diags, "E_PARAM_MISMATCH",
            "binding of " + q(svc.name) + " does not map output " + q(p.name), impl.span);
    }
  }
  if (const auto * rest = std::get_if<RestImplementation>(&impl.details)) {
    std::set<std::string> path_bound;
    for (const auto & p : impl.parameters) {
      if (p.direction == Direction::In && p.location == ParamLocation::Path) path_bound.insert(p.concrete_name);
    }
    for (const auto & ph : url_placeholders(rest->url_template)) {
      if (!path_bound.count(ph)) {
        error(diags, "E_PARAM_MISMATCH",
              "URL placeholder {" + ph + "} is not bound to a path parameter", impl.span);
      }
    }
    if (rest->timeout_ms <= 0) error(diags, "E_BAD_BINDING", "timeout must be positive", impl.span);
  }
  if (const auto * proc = std::get_if<ProcessImplementation>(&impl.details)) {
    if (proc->timeout_ms <= 0) error(diags, "E_BAD_BINDING", "timeout must be positive", impl.span);
  }
}

// ---------------------------------------------------------------------------
// Typing helpers

bool unknown(const TypeInfo & t) { return t.kind == TypeInfo::Kind::Unknown; }

bool open_record(const TypeInfo & t)
{
  return t.kind == TypeInfo::Kind::Record && t.record_type.empty();
}

bool ordered(const TypeInfo & t)
{
  if (unknown(t)) return true;
  return t.kind == TypeInfo::Kind::Basic && !t.is_set &&
         (t.basic == BasicType::Integer || t.basic == BasicType::Float ||
          t.basic == BasicType::String || t.basic == BasicType::Date);
}

bool comparable(const TypeInfo & a, const TypeInfo & b) { return assignable(a, b) || assignable(b, a); }

class Typer
{
public:
  Typer(LinkedBundle & b, std::vector<Diagnostic> & diags) : b_(b), diags_(diags) {}

  void run()
  {
    for (const auto & v : b_.flow.variables) env_[v.name] = type_info(v.type);
    // Two passes let later producers type roots read by earlier steps.
    for (int pass = 0; pass < 2; ++pass) {
      for (const auto & s : b_.flow.steps) collect(s);
    }
    for (const auto & a : b_.merged.activities) check_activity(a);
    for (const auto & s : b_.flow.steps) check_step(s);
    for (const auto & t : b_.flow.transitions) {
      if (!t.condition) continue;
      TypeInfo ct = infer(*t.condition, t.span);
      if (!unknown(ct) && !ct.is_basic(BasicType::Boolean)) {
        error(diags_, "E_TYPE_MISMATCH",
              "condition on " + q(t.source + " -> " + t.target) + " is " + ct.str() + ", not BOOLEAN", t.span);
      }
    }
    b_.variable_types = env_;
  }

private:
  // Root typing --------------------------------------------------------------

  void set_root(const std::string & root, const TypeInfo & t)
  {
    auto it = env_.find(root);
    if (it == env_.end() || unknown(it->second) ||
        (open_record(it->second) && t.kind == TypeInfo::Kind::Record && !t.is_set)) {
      env_[root] = t;
    }
  }

  /// A producer writes a value of type `t` at `p`.
  void produce(const Path & p, const TypeInfo & t)
  {
    if (p.segments.size() == 1) set_root(p.root(), t);
    else if (!env_.count(p.root())) set_root(p.root(), TypeInfo::record(""));
  }

  TypeInfo root_type(const std::string & root) const
  {
    auto it = env_.find(root);
    return it == env_.end() ? TypeInfo::unknown() : it->second;
  }

  TypeInfo attribute_walk(
    TypeInfo t, const Path & p, std::size_t from, bool report, const SourceSpan & span)
  {
    for (std::size_t i = from; i < p.segments.size(); ++i) {
      if (unknown(t) || open_record(t)) return TypeInfo::unknown();
      const auto & seg = p.segments[i];
      if (t.is_set || t.kind != TypeInfo::Kind::Record) {
        if (report) {
          error(diags_, "E_BAD_PATH",
                q(p.str()) + " selects " + q(seg) + " from a value of type " + t.str(), span);
        }
        return TypeInfo::unknown();
      }
      const TypeDef * td = b_.merged.find_type(t.record_type);
      const Attribute * attr = td ? td->find_attribute(seg) : nullptr;
      if (!attr) {
        if (report) {
          error(diags_, "E_BAD_PATH", q(p.str()) + ": type " + q(t.record_type) + " has no attribute " + q(seg), span);
        }
        return TypeInfo::unknown();
      }
      t = type_info(attr->type);
    }
    return t;
  }

  TypeInfo path_type(const Path & p, bool report, const SourceSpan & span)
  {
    return attribute_walk(root_type(p.root()), p, 1, report, span);
  }

  TypeInfo infer(const Expr & e, const SourceSpan & span, bool report = true)
  {
    std::vector<Diagnostic> scratch;
    auto & sink = report ? diags_ : scratch;
    TypeEnv env = [&](const Path & p) { return path_type(p, report, span); };
    return infer_type(e, env, sink, span);
  }

  void collect(const Step & s)
  {
    std::visit(
      [&](const auto & body) {
        using T = std::decay_t<decltype(body)>;
        if constexpr (std::is_same_v<T, ActivityStep>) {
          const ActivityDef * ad = b_.merged.find_activity(body.activity);
          if (!ad) return;
          for (const auto & ow : body.overwrites) {
            if (!is_endpoint(*ad, ow.target)) produce(ow.target, type_of_value(ow.value));
          }
          for (const auto & rel : ad->relations) {
            if (const auto * sr = std::get_if<ServiceRelation>(&rel)) {
              const ServiceDef * sd = b_.merged.find_service(sr->service);
              for (const auto & m : sr->outputs) {
                const Parameter * p = sd ? sd->find_output(m.endpoint) : nullptr;
                produce(m.path(), p ? type_info(p->type) : TypeInfo::unknown());
              }
            } else {
              const auto & ir = std::get<IoRelation>(rel);
              const IoDef * io = b_.merged.find_io(ir.io);
              for (const auto & m : ir.input_mappings) {
                const IoVariable * v = io ? io->find_variable(m.endpoint) : nullptr;
                produce(m.path(), v ? type_info(v->type) : TypeInfo::unknown());
              }
            }
          }
        } else if constexpr (std::is_same_v<T, RetrieveStep>) {
          set_root(body.target_variable, TypeInfo::record(body.type, body.is_set));
        } else if constexpr (std::is_same_v<T, StartLoopStep>) {
          TypeInfo st = path_type(body.data_flow_set, false, s.span);
          set_root(body.loop_name, st.is_set ? st.element() : TypeInfo::unknown());
          set_root(body.loop_name + "_index", TypeInfo::of(BasicType::Integer));
        } else if constexpr (std::is_same_v<T, ScriptStep>) {
          for (const auto & st : body.script.statements) {
            if (const auto * let = std::get_if<LetStmt>(&st)) {
              set_root(let->name, infer(*let->value, s.span, false));
            } else if (const auto * rn = std::get_if<RenameStmt>(&st)) {
              set_root(rn->to, root_type(rn->from));
            }
          }
        }
      },
      s.body);
  }

  // Checks -------------------------------------------------------------------

  static bool is_endpoint(const ActivityDef & ad, const Path & target)
  {
    if (target.segments.size() != 1) return false;
    for (const auto & rel : ad.relations) {
      if (const auto * sr = std::get_if<ServiceRelation>(&rel)) {
        for (const auto & m : sr->inputs) {
          if (m.endpoint == target.root()) return true;
        }
      } else {
        const auto & ir = std::get<IoRelation>(rel);
        for (const auto & m : ir.output_mappings) {
          if (m.endpoint == target.root()) return true;
        }
        for (const auto & m : ir.input_mappings) {
          if (m.endpoint == target.root()) return true;
        }
      }
    }
    return false;
  }

  void expect(const TypeInfo & from, const TypeInfo & to, const std::string & what, const SourceSpan & span)
  {
    if (assignable(from, to)) return;
    const bool set_mismatch = from.kind != TypeInfo::Kind::EmptyList && from.is_set != to.is_set;
    error(diags_, set_mismatch ? "E_SET_SCALAR_MISMATCH" : "E_TYPE_MISMATCH",
          what + ": " + from.str() + " does not fit " + to.str(), span);
  }

  TypeInfo source_type(const Mapping & m)
  {
    if (m.is_value()) return type_of_value(m.value());
    return path_type(m.path(), true, m.span);
  }

  void check_activity(const ActivityDef & ad)
  {
    int io_relations = 0;
    for (const auto & rel : ad.relations) {
      if (const auto * sr = std::get_if<ServiceRelation>(&rel)) {
        const ServiceDef * sd = b_.merged.find_service(sr->service);
        if (!sd) continue;
        std::set<std::string> seen;
        for (const auto & m : sr->inputs) {
          const Parameter * p = sd->find_input(m.endpoint);
          if (!p) {
            error(diags_, "E_UNKNOWN_ENDPOINT", q(m.endpoint) + " is not an input of service " + q(sd->name), m.span);
            continue;
          }
          if (!seen.insert(m.endpoint).second) {
            error(diags_, "E_DUPLICATE_MAPPING", "input " + q(m.endpoint) + " is mapped more than once", m.span);
          }
          expect(source_type(m), type_info(p->type), "input " + q(sd->name + "." + p->name), m.span);
        }
        for (const auto & p : sd->inputs) {
          if (!seen.count(p.name)) {
            error(diags_, "E_MISSING_MAPPING",
                  "activity " + q(ad.name) + " does not map input " + q(sd->name + "." + p.name), sr->span);
          }
        }
        std::set<std::string> seen_out;
        for (const auto & m : sr->outputs) {
          const Parameter * p = sd->find_output(m.endpoint);
          if (!p) {
            error(diags_, "E_UNKNOWN_ENDPOINT", q(m.endpoint) + " is not an output of service " + q(sd->name), m.span);
            continue;
          }
          if (!seen_out.insert(m.endpoint).second) {
            error(diags_, "E_DUPLICATE_MAPPING", "output " + q(m.endpoint) + " is mapped more than once", m.span);
          }
          expect(type_info(p->type), path_type(m.path(), true, m.span), "output " + q(sd->name + "." + p->name), m.span);
        }
      } else {
        ++io_relations;
        const auto & ir = std::get<IoRelation>(rel);
        const IoDef * io = b_.merged.find_io(ir.io);
        if (!io) continue;
        std::set<std::string> seen;
        auto endpoint = [&](const Mapping & m, Direction want) -> const IoVariable * {
          const IoVariable * v = io->find_variable(m.endpoint);
          if (!v) {
            error(diags_, "E_UNKNOWN_ENDPOINT", q(m.endpoint) + " is not a variable of io " + q(io->name), m.span);
            return nullptr;
          }
          if (v->direction != want) {
            error(diags_, "E_IO_DIRECTION",
                  std::string(want == Direction::Out ? "show" : "ask") + " uses " + q(io->name + "." + v->name) +
                    ", which is an " + (v->direction == Direction::In ? "IN" : "OUT") + " variable",
                  m.span);
            return nullptr;
          }
          if (!seen.insert(m.endpoint).second) {
            error(diags_, "E_DUPLICATE_MAPPING", q(m.endpoint) + " is mapped more than once", m.span);
          }
          return v;
        };
        for (const auto & m : ir.output_mappings) {
          if (const auto * v = endpoint(m, Direction::Out)) {
            expect(source_type(m), type_info(v->type), "io variable " + q(io->name + "." + v->name), m.span);
          }
        }
        for (const auto & m : ir.input_mappings) {
          if (const auto * v = endpoint(m, Direction::In)) {
            expect(type_info(v->type), path_type(m.path(), true, m.span), "io variable " + q(io->name + "." + v->name), m.span);
          }
        }
      }
    }
    if (io_relations > 1) {
      error(diags_, "E_MULTI_IO", "activity " + q(ad.name) + " has more than one io relation", ad.span);
    }
  }

  std::vector<TypeInfo> endpoint_types(const ActivityDef & ad, const std::string & name)
  {
    std::vector<TypeInfo> out;
    for (const auto & rel : ad.relations) {
      if (const auto * sr = std::get_if<ServiceRelation>(&rel)) {
        const ServiceDef * sd = b_.merged.find_service(sr->service);
        const Parameter * p = sd ? sd->find_input(name) : nullptr;
        if (p) out.push_back(type_info(p->type));
      } else {
        const IoDef * io = b_.merged.find_io(std::get<IoRelation>(rel).io);
        const IoVariable * v = io ? io->find_variable(name) : nullptr;
        if (v) out.push_back(type_info(v->type));
      }
    }
    return out;
  }

  void check_criteria(const std::string & type, const std::vector<Criterion> & criteria, const SourceSpan & span)
  {
    const TypeInfo rec = TypeInfo::record(type);
    for (const auto & c : criteria) {
      const TypeInfo ft = attribute_walk(rec, c.field, 0, true, span);
      const TypeInfo vt = std::holds_alternative<Value>(c.value)
                            ? type_of_value(std::get<Value>(c.value))
                            : path_type(std::get<Path>(c.value), true, span);
      const std::string what = "criterion on " + q(c.field.str());
      bool ok = true;
      switch (c.op) {
        case CriterionOp::Contains:
          if (unknown(ft)) break;
          if (ft.is_set) ok = comparable(vt, ft.element());
          else ok = ft.is_basic(BasicType::String) && (unknown(vt) || vt.is_basic(BasicType::String));
          break;
        case CriterionOp::Eq:
        case CriterionOp::Ne: ok = comparable(ft, vt); break;
        default: ok = ordered(ft) && ordered(vt) && comparable(ft, vt);
      }
      if (!ok) {
        error(diags_, "E_TYPE_MISMATCH",
              what + ": cannot apply " + q(criterion_op_symbol(c.op)) + " to " + ft.str() + " and " + vt.str(), span);
      }
    }
  }

  void check_step(const Step & s)
  {
    std::visit(
      [&](const auto & body) {
        using T = std::decay_t<decltype(body)>;
        if constexpr (std::is_same_v<T, ActivityStep>) {
          const ActivityDef * ad = b_.merged.find_activity(body.activity);
          if (!ad) return;
          for (const auto & ow : body.overwrites) {
            const TypeInfo lt = type_of_value(ow.value);
            const std::string what = "overwrite of " + q(ow.target.str());
            if (is_endpoint(*ad, ow.target)) {
              for (const auto & et : endpoint_types(*ad, ow.target.root())) expect(lt, et, what, s.span);
            } else {
              expect(lt, path_type(ow.target, true, s.span), what, s.span);
            }
          }
        } else if constexpr (std::is_same_v<T, RetrieveStep>) {
          check_criteria(body.type, body.criteria, s.span);
          expect(TypeInfo::record(body.type, body.is_set), root_type(body.target_variable),
                 "retrieve target " + q(body.target_variable), s.span);
        } else if constexpr (std::is_same_v<T, DeleteStep>) {
          check_criteria(body.type, body.criteria, s.span);
        } else if constexpr (std::is_same_v<T, StoreStep>) {
          for (const auto & v : body.variables) {
            const TypeInfo t = root_type(v);
            if (unknown(t)) continue;
            if (t.kind != TypeInfo::Kind::Record || t.record_type.empty()) {
              error(diags_, "E_TYPE_MISMATCH",
                    "store needs records of a domain type, " + q(v) + " is " + t.str(), s.span);
            }
          }
        } else if constexpr (std::is_same_v<T, StartLoopStep>) {
          const TypeInfo t = path_type(body.data_flow_set, true, s.span);
          if (!unknown(t) && !t.is_set) {
            error(diags_, "E_SET_SCALAR_MISMATCH",
                  "loop " + q(s.name) + " iterates over " + q(body.data_flow_set.str()) + " of scalar type " + t.str(),
                  s.span);
          }
        } else if constexpr (std::is_same_v<T, ScriptStep>) {
          for (const auto & st : body.script.statements) {
            if (const auto * let = std::get_if<LetStmt>(&st)) {
              infer(*let->value, s.span);
            } else if (const auto * as = std::get_if<AssignStmt>(&st)) {
              expect(infer(*as->value, s.span), path_type(as->target, true, s.span),
                     "assignment to " + q(as->target.str()), s.span);
            } else if (const auto * ap = std::get_if<AppendStmt>(&st)) {
              const TypeInfo vt = infer(*ap->value, s.span);
              const TypeInfo target = path_type(ap->target, true, s.span);
              if (unknown(target)) continue;
              if (!target.is_set) {
                error(diags_, "E_SET_SCALAR_MISMATCH",
                      "append target " + q(ap->target.str()) + " is " + target.str(), s.span);
              } else {
                expect(vt, target.element(), "append to " + q(ap->target.str()), s.span);
              }
            }
          }
        }
      },
      s.body);
  }

  LinkedBundle & b_;
  std::vector<Diagnostic> & diags_;
  std::map<std::string, TypeInfo> env_;
};

// ---------------------------------------------------------------------------
// Visibility

struct Event
{
  enum Kind { Read, Define, Kill } kind;
  std::string root;
};

std::vector<Event> step_events(const LinkedBundle & b, const Step & s)
{
  std::vector<Event> ev;
  auto read_expr = [&](const Expr & e) {
    for (const auto & p : expr_reads(e)) ev.push_back({Event::Read, p.root()});
  };
  auto read_criteria = [&](const std::vector<Criterion> & cs) {
    for (const auto & c : cs) {
      if (const auto * p = std::get_if<Path>(&c.value)) ev.push_back({Event::Read, p->root()});
    }
  };
  std::visit(
    [&](const auto & body) {
      using T = std::decay_t<decltype(body)>;
      if constexpr (std::is_same_v<T, ActivityStep>) {
        const ActivityDef * ad = b.merged.find_activity(body.activity);
        if (!ad) return;
        std::set<std::string> overwritten;
        for (const auto & ow : body.overwrites) {
          if (ow.target.segments.size() == 1) overwritten.insert(ow.target.root());
        }
        for (const auto & ow : body.overwrites) {
          bool endpoint = false;
          for (const auto & rel : ad->relations) {
            if (const auto * sr = std::get_if<ServiceRelation>(&rel)) {
              for (const auto & m : sr->inputs) endpoint |= m.endpoint == ow.target.root();
            } else {
              const auto & ir = std::get<IoRelation>(rel);
              for (const auto & m : ir.output_mappings) endpoint |= m.endpoint == ow.target.root();
              for (const auto & m : ir.input_mappings) {
                if (m.endpoint == ow.target.root() && ow.target.segments.size() == 1) {
                  endpoint = true;
                  ev.push_back({Event::Define, m.path().root()});
                }
              }
            }
          }
          if (!endpoint || ow.target.segments.size() != 1) ev.push_back({Event::Define, ow.target.root()});
        }
        for (const auto & rel : ad->relations) {
          if (const auto * sr = std::get_if<ServiceRelation>(&rel)) {
            for (const auto & m : sr->inputs) {
              if (!m.is_value() && !overwritten.count(m.endpoint)) ev.push_back({Event::Read, m.path().root()});
            }
            for (const auto & m : sr->outputs) ev.push_back({Event::Define, m.path().root()});
          } else {
            const auto & ir = std::get<IoRelation>(rel);
            for (const auto & m : ir.output_mappings) {
              if (!m.is_value() && !overwritten.count(m.endpoint)) ev.push_back({Event::Read, m.path().root()});
            }
            for (const auto & m : ir.input_mappings) {
              if (!overwritten.count(m.endpoint)) ev.push_back({Event::Define, m.path().root()});
            }
          }
        }
      } else if constexpr (std::is_same_v<T, RetrieveStep>) {
        read_criteria(body.criteria);
        ev.push_back({Event::Define, body.target_variable});
      } else if constexpr (std::is_same_v<T, DeleteStep>) {
        read_criteria(body.criteria);
      } else if constexpr (std::is_same_v<T, StoreStep>) {
        for (const auto & v : body.variables) ev.push_back({Event::Read, v});
      } else if constexpr (std::is_same_v<T, StartLoopStep>) {
        ev.push_back({Event::Read, body.data_flow_set.root()});
      } else if constexpr (std::is_same_v<T, ScriptStep>) {
        for (const auto & st : body.script.statements) {
          if (const auto * let = std::get_if<LetStmt>(&st)) {
            read_expr(*let->value);
            ev.push_back({Event::Define, let->name});
          } else if (const auto * as = std::get_if<AssignStmt>(&st)) {
            read_expr(*as->value);
            ev.push_back({Event::Read, as->target.root()});
          } else if (const auto * ap = std::get_if<AppendStmt>(&st)) {
            read_expr(*ap->value);
            ev.push_back({Event::Read, ap->target.root()});
          } else {
            const auto & rn = std::get<RenameStmt>(st);
            ev.push_back({Event::Read, rn.from});
            ev.push_back({Event::Kill, rn.from});
            ev.push_back({Event::Define, rn.to});
          }
        }
      }
    },
    s.body);
  return ev;
}

struct Facts
{
  std::set<std::string> may;
  std::set<std::string> must;
  bool operator==(const Facts &) const = default;
};

void apply_events(Facts & f, const std::vector<Event> & events)
{
  for (const auto & e : events) {
    if (e.kind == Event::Define) {
      f.may.insert(e.root);
      f.must.insert(e.root);
    } else if (e.kind == Event::Kill) {
      f.may.erase(e.root);
      f.must.erase(e.root);
    }
  }
}

}  // namespace

// ---------------------------------------------------------------------------

TypeInfo type_info(const TypeRef & ref)
{
  if (ref.is_basic()) return TypeInfo::of(std::get<BasicType>(ref.target), ref.is_set);
  return TypeInfo::record(ref.target_name(), ref.is_set);
}

DeclaredType declared_type(const TypeRef & ref)
{
  DeclaredType d;
  if (ref.is_basic()) d.basic = std::get<BasicType>(ref.target);
  else d.record_type = ref.target_name();
  d.is_set = ref.is_set;
  return d;
}

std::vector<const Transition *> LinkedBundle::outgoing(std::string_view step) const
{
  std::vector<const Transition *> out;
  for (const auto & t : flow.transitions) {
    if (t.source == step) out.push_back(&t);
  }
  return out;
}

LinkedBundle link(
  std::vector<DomainModel> domains, std::vector<AbrModel> abrs, FlowModel flow,
  const ValidateOptions & options, std::vector<Diagnostic> & diags)
{
  LinkedBundle b;
  b.domains = std::move(domains);
  b.abrs = std::move(abrs);
  b.flow = std::move(flow);
  const FlowModel & f = b.flow;

  auto find_domain = [&](const std::string & name) -> const DomainModel * {
    for (const auto & d : b.domains) {
      if (d.name == name) return &d;
    }
    return nullptr;
  };

  for (const auto & d : b.domains) check_unique_elements(d, diags);

  // Merge the used domains; equal names across domains are rejected.
  std::map<std::string, std::string> owner;
  std::set<std::string> used;
  for (const auto & name : f.used_domains) {
    const DomainModel * d = find_domain(name);
    if (!d) {
      error(diags, "E_UNKNOWN_DOMAIN", "flow " + q(f.name) + " uses unknown domain " + q(name), f.span);
      continue;
    }
    if (!used.insert(name).second) continue;
    b.merged.name = b.merged.name.empty() ? name : b.merged.name + "+" + name;
    auto claim = [&](const std::string & n, const SourceSpan & span) {
      auto [it, fresh] = owner.emplace(n, name);
      if (!fresh && it->second != name) {
        error(diags, "E_NAME_COLLISION",
              q(n) + " is defined in both " + q(it->second) + " and " + q(name), span);
        return false;
      }
      return fresh;
    };
    for (const auto & x : d->types) {
      if (claim(x.name, x.span)) b.merged.types.push_back(x);
    }
    for (const auto & x : d->services) {
      if (claim(x.name, x.span)) b.merged.services.push_back(x);
    }
    for (const auto & x : d->ios) {
      if (claim(x.name, x.span)) b.merged.ios.push_back(x);
    }
    for (const auto & x : d->activities) {
      if (claim(x.name, x.span)) b.merged.activities.push_back(x);
    }
  }
  const DomainModel & m = b.merged;

  check_type_refs(m, diags);
  check_recursive_types(m, diags);
  for (const auto & a : m.activities) {
    for (const auto & rel : a.relations) {
      if (const auto * sr = std::get_if<ServiceRelation>(&rel)) {
        if (!m.find_service(sr->service)) {
          error(diags, "E_UNKNOWN_SERVICE",
                "activity " + q(a.name) + " calls unknown service " + q(sr->service), sr->span);
        }
      } else {
        const auto & ir = std::get<IoRelation>(rel);
        if (!m.find_io(ir.io)) {
          error(diags, "E_UNKNOWN_IO", "activity " + q(a.name) + " uses unknown io " + q(ir.io), ir.span);
        }
      }
    }
  }

  for (const auto & abr : b.abrs) {
    const DomainModel * target = find_domain(abr.target_domain);
    if (!target) {
      error(diags, "E_UNKNOWN_DOMAIN",
            "bindings " + q(abr.name) + " target unknown domain " + q(abr.target_domain), abr.span);
      continue;
    }
    for (const auto & impl : abr.bindings) {
      const ServiceDef * svc = target->find_service(impl.service);
      if (!svc) {
        error(diags, "E_UNKNOWN_SERVICE",
              "domain " + q(target->name) + " has no service " + q(impl.service), impl.span);
        continue;
      }
      check_binding(impl, *svc, options, diags);
      if (!used.count(target->name)) continue;
      if (!b.bindings.emplace(impl.service, impl).second) {
        error(diags, "E_DUPLICATE_BINDING", "service " + q(impl.service) + " is bound more than once", impl.span);
      }
    }
  }

  std::set<std::string> step_names;
  for (const auto & s : f.steps) {
    if (!step_names.insert(s.name).second) {
      error(diags, "E_DUPLICATE_NAME", "step " + q(s.name) + " is declared more than once", s.span);
    }
  }
  std::set<std::string> var_names;
  for (const auto & v : f.variables) {
    if (!var_names.insert(v.name).second) {
      error(diags, "E_DUPLICATE_NAME", "variable " + q(v.name) + " is declared more than once", v.span);
    }
    if (!v.type.is_basic() && !m.find_type(v.type.target_name())) {
      error(diags, "E_UNKNOWN_TYPE", "variable " + q(v.name) + " has undefined type " + q(v.type.target_name()), v.span);
    }
  }

  std::set<std::string> unbound_reported;
  for (const auto & s : f.steps) {
    if (const auto * as = std::get_if<ActivityStep>(&s.body)) {
      const ActivityDef * ad = m.find_activity(as->activity);
      if (!ad) {
        error(diags, "E_UNKNOWN_ACTIVITY", "step " + q(s.name) + " runs unknown activity " + q(as->activity), s.span);
        continue;
      }
      for (const auto & rel : ad->relations) {
        const auto * sr = std::get_if<ServiceRelation>(&rel);
        if (!sr || !m.find_service(sr->service) || b.bindings.count(sr->service)) continue;
        if (unbound_reported.insert(sr->service).second) {
          error(diags, "E_UNBOUND_SERVICE",
                "service " + q(sr->service) + " used by step " + q(s.name) + " has no implementation binding",
                s.span);
        }
      }
    } else if (const auto * rs = std::get_if<RetrieveStep>(&s.body)) {
      if (!m.find_type(rs->type)) {
        error(diags, "E_UNKNOWN_TYPE", "step " + q(s.name) + " retrieves undefined type " + q(rs->type), s.span);
      }
    } else if (const auto * ds = std::get_if<DeleteStep>(&s.body)) {
      if (!m.find_type(ds->type)) {
        error(diags, "E_UNKNOWN_TYPE", "step " + q(s.name) + " deletes undefined type " + q(ds->type), s.span);
      }
    }
  }

  std::map<std::string, int> defaults;
  for (const auto & t : f.transitions) {
    for (const auto * endpoint : {&t.source, &t.target}) {
      if (!step_names.count(*endpoint)) {
        error(diags, "E_UNKNOWN_STEP", "transition refers to undeclared step " + q(*endpoint), t.span);
      }
    }
    if (!t.condition && ++defaults[t.source] == 2) {
      error(diags, "E_MULTIPLE_DEFAULTS",
            "step " + q(t.source) + " has more than one unconditioned outgoing transition", t.span);
    }
  }

  if (!has_errors(diags)) b.schemas = derive_entity_schemas(m);
  return b;
}

std::optional<std::string> infer_start(const FlowModel & flow, std::vector<Diagnostic> & diags)
{
  const auto succ = successors(flow);
  const auto pred = predecessors(flow);
  std::vector<const Step *> starts;
  for (const auto & s : flow.steps) {
    if (s.is<StartStep>()) starts.push_back(&s);
  }
  if (starts.size() > 1) {
    error(diags, "E_MULTIPLE_START_STEPS", "flow " + q(flow.name) + " has more than one start step", starts[1]->span);
    return std::nullopt;
  }
  if (starts.size() == 1) {
    const Step & s = *starts[0];
    if (!edges(pred, s.name).empty()) {
      error(diags, "E_START_HAS_INCOMING", "start step " + q(s.name) + " is the target of a transition",
            edges(pred, s.name).front()->span);
      return std::nullopt;
    }
    const auto & out = edges(succ, s.name);
    if (out.size() != 1 || out[0]->condition) {
      error(diags, "E_AMBIGUOUS_START",
            "start step " + q(s.name) + " needs exactly one unconditioned successor", s.span);
      return std::nullopt;
    }
    return out[0]->target;
  }
  std::vector<std::string> roots;
  for (const auto & s : flow.steps) {
    if (edges(pred, s.name).empty()) roots.push_back(s.name);
  }
  if (roots.size() == 1) return roots[0];
  std::string msg = roots.empty() ? "every step has an incoming transition"
                                  : std::to_string(roots.size()) + " steps have no incoming transition";
  error(diags, "E_AMBIGUOUS_START",
        "cannot infer where flow " + q(flow.name) + " starts: " + msg + "; add a start step", flow.span);
  return std::nullopt;
}

LoopTable match_loops(const FlowModel & flow, std::vector<Diagnostic> & diags)
{
  const auto succ = successors(flow);
  const auto pred = predecessors(flow);
  LoopTable loops;

  for (const auto & s : flow.steps) {
    if (const auto * el = std::get_if<EndLoopStep>(&s.body)) {
      const Step * start = flow.find_step(el->start_loop);
      if (!start || !start->is<StartLoopStep>()) {
        error(diags, "E_UNMATCHED_LOOP", "end loop " + q(s.name) + " names no start loop step " + q(el->start_loop), s.span);
      }
    }
  }

  for (const auto & s : flow.steps) {
    if (!s.is<StartLoopStep>()) continue;
    std::vector<const Step *> ends;
    for (const auto & e : flow.steps) {
      if (e.is<EndLoopStep>() && e.as<EndLoopStep>().start_loop == s.name) ends.push_back(&e);
    }
    if (ends.size() != 1) {
      error(diags, "E_UNMATCHED_LOOP",
            "loop " + q(s.name) + (ends.empty() ? " has no end loop step" : " has more than one end loop step"), s.span);
      continue;
    }
    LoopInfo info;
    info.start = s.name;
    info.end = ends[0]->name;
    const auto & out = edges(succ, s.name);
    if (out.size() != 1 || out[0]->condition) {
      error(diags, "E_LOOP_CROSSING",
            "loop start " + q(s.name) + " needs exactly one unconditioned successor", s.span);
      continue;
    }
    info.entry = out[0]->target;
    bool ok = true;
    if (info.entry == s.name) {
      error(diags, "E_LOOP_CROSSING", "loop start " + q(s.name) + " transitions to itself", out[0]->span);
      continue;
    }
    if (info.entry != info.end) {
      std::deque<std::string> work{info.entry};
      info.body.insert(info.entry);
      bool reached_end = false;
      while (!work.empty()) {
        const auto n = work.front();
        work.pop_front();
        for (const auto * t : edges(succ, n)) {
          if (t->target == info.end) {
            reached_end = true;
          } else if (t->target == s.name) {
            error(diags, "E_LOOP_CROSSING",
                  "transition " + q(n + " -> " + s.name) + " re-enters the loop start from its body", t->span);
            ok = false;
          } else if (info.body.insert(t->target).second) {
            work.push_back(t->target);
          }
        }
      }
      if (!reached_end) {
        error(diags, "E_UNMATCHED_LOOP", "loop " + q(s.name) + " never reaches its end " + q(info.end), s.span);
        continue;
      }
      // Body steps that cannot get back to the end have left the loop.
      std::set<std::string> reaches_end;
      std::deque<std::string> back{info.end};
      while (!back.empty()) {
        const auto n = back.front();
        back.pop_front();
        for (const auto * t : edges(pred, n)) {
          if (info.body.count(t->source) && reaches_end.insert(t->source).second) back.push_back(t->source);
        }
      }
      for (const auto & n : info.body) {
        if (reaches_end.count(n)) continue;
        const Step * leaving = flow.find_step(n);
        error(diags, "E_LOOP_CROSSING",
              "step " + q(n) + " is reachable from loop " + q(s.name) + " but never returns to " + q(info.end),
              leaving ? leaving->span : s.span);
        ok = false;
      }
    }
    for (const auto & n : info.body) {
      for (const auto * t : edges(pred, n)) {
        if (!info.body.count(t->source) && t->source != s.name) {
          error(diags, "E_LOOP_CROSSING",
                "transition " + q(t->source + " -> " + n) + " enters the body of loop " + q(s.name), t->span);
          ok = false;
        }
      }
    }
    for (const auto * t : edges(pred, info.end)) {
      if (!info.body.count(t->source) && t->source != s.name) {
        error(diags, "E_LOOP_CROSSING",
              "transition " + q(t->source + " -> " + info.end) + " reaches the loop end from outside", t->span);
        ok = false;
      }
    }
    if (ok) loops.emplace(s.name, std::move(info));
  }

  // Regions must nest or be disjoint.
  auto region = [](const LoopInfo & l) {
    std::set<std::string> r = l.body;
    r.insert(l.start);
    r.insert(l.end);
    return r;
  };
  auto subset = [](const std::set<std::string> & a, const std::set<std::string> & b) {
    return std::includes(b.begin(), b.end(), a.begin(), a.end());
  };
  std::set<std::string> overlapping;
  for (auto & [name, info] : loops) {
    const auto r = region(info);
    std::size_t best = SIZE_MAX;
    for (const auto & [other, oinfo] : loops) {
      if (other == name) continue;
      const auto ro = region(oinfo);
      std::vector<std::string> common;
      std::set_intersection(r.begin(), r.end(), ro.begin(), ro.end(), std::back_inserter(common));
      if (common.empty() || subset(r, oinfo.body) || subset(ro, info.body)) {
        if (subset(r, oinfo.body) && oinfo.body.size() < best) {
          best = oinfo.body.size();
          info.parent = other;
        }
        continue;
      }
      if (name < other) {
        error(diags, "E_LOOP_OVERLAP", "loops " + q(name) + " and " + q(other) + " overlap without nesting",
              flow.find_step(name)->span);
      }
      overlapping.insert(name);
    }
  }
  for (const auto & n : overlapping) loops.erase(n);
  for (auto & [name, info] : loops) {
    info.depth = 1;
    for (auto p = info.parent; !p.empty() && loops.count(p); p = loops.at(p).parent) ++info.depth;
  }
  return loops;
}

void check_mappings(LinkedBundle & bundle, std::vector<Diagnostic> & diags)
{
  Typer(bundle, diags).run();
}

void check_dataflow_visibility(const LinkedBundle & b, std::vector<Diagnostic> & diags)
{
  const FlowModel & f = b.flow;
  if (b.start.empty()) return;
  const auto succ = successors(f);

  std::map<std::string, std::vector<Event>> events;
  for (const auto & s : f.steps) events[s.name] = step_events(b, s);

  // Roots a loop body may kill; they cannot be relied on after the loop.
  std::map<std::string, std::set<std::string>> kills;
  for (const auto & [start, info] : b.loops) {
    for (const auto & n : info.body) {
      for (const auto & e : events[n]) {
        if (e.kind == Event::Kill) kills[start].insert(e.root);
      }
    }
  }

  Facts initial;
  for (const auto & v : f.variables) {
    if (v.is_input) {
      initial.may.insert(v.name);
      initial.must.insert(v.name);
    }
  }

  std::map<std::string, Facts> in;
  auto out_of = [&](const std::string & n) -> std::optional<Facts> {
    const Step * s = f.find_step(n);
    if (!s || !in.count(n)) return std::nullopt;
    if (s->is<EndLoopStep>()) {
      const auto & start = s->as<EndLoopStep>().start_loop;
      if (!in.count(start)) return std::nullopt;
      Facts r = in.at(start);
      for (const auto & k : kills[start]) r.must.erase(k);
      return r;
    }
    Facts r = in.at(n);
    apply_events(r, events[n]);
    return r;
  };
  // Contribution of edge n -> target.
  auto along = [&](const std::string & n, const std::string & target) -> std::optional<Facts> {
    const Step * s = f.find_step(n);
    if (s && s->is<StartLoopStep>() && b.loops.count(n)) {
      if (!in.count(n)) return std::nullopt;
      Facts r = in.at(n);
      const auto & info = b.loops.at(n);
      if (target == info.end) return r;
      for (const auto & k : kills[n]) r.must.erase(k);
      const auto & item = s->as<StartLoopStep>().loop_name;
      for (const auto & v : {item, item + "_index"}) {
        r.may.insert(v);
        r.must.insert(v);
      }
      return r;
    }
    return out_of(n);
  };

  std::map<std::string, std::vector<std::string>> preds;
  for (const auto & t : f.transitions) preds[t.target].push_back(t.source);

  // Reachable steps from the start, in discovery order.
  std::vector<std::string> order;
  std::set<std::string> reachable{b.start};
  for (std::deque<std::string> work{b.start}; !work.empty(); work.pop_front()) {
    order.push_back(work.front());
    for (const auto * t : edges(succ, work.front())) {
      if (reachable.insert(t->target).second) work.push_back(t->target);
    }
  }

  for (bool changed = true; changed;) {
    changed = false;
    for (const auto & n : order) {
      std::optional<Facts> acc;
      if (n == b.start) acc = initial;
      for (const auto & p : preds[n]) {
        if (!reachable.count(p)) continue;
        auto c = along(p, n);
        if (!c) continue;
        if (!acc) {
          acc = *c;
          continue;
        }
        acc->may.insert(c->may.begin(), c->may.end());
        std::set<std::string> both;
        std::set_intersection(acc->must.begin(), acc->must.end(), c->must.begin(), c->must.end(),
                              std::inserter(both, both.end()));
        acc->must = std::move(both);
      }
      if (!acc) continue;
      auto it = in.find(n);
      if (it == in.end() || !(it->second == *acc)) {
        in[n] = std::move(*acc);
        changed = true;
      }
    }
  }

  std::set<std::pair<std::string, std::string>> reported;
  auto check_read = [&](const Facts & facts, const std::string & where, const std::string & root, const SourceSpan & span) {
    if (facts.must.count(root) || !reported.insert({where, root}).second) return;
    if (!facts.may.count(root)) {
      error(diags, "E_UNREACHABLE_VARIABLE",
            where + " reads " + q(root) + ", which no step before it produces", span);
    } else {
      diags.push_back(make_warning(
        "W_PARTIALLY_DEFINED_VARIABLE", where + " reads " + q(root) + ", which only some paths produce", span));
    }
  };
  for (const auto & n : order) {
    if (!in.count(n)) continue;
    const Step * s = f.find_step(n);
    Facts facts = in.at(n);
    for (const auto & e : events[n]) {
      if (e.kind == Event::Read) check_read(facts, "step " + q(n), e.root, s->span);
      else apply_events(facts, {e});
    }
    for (const auto * t : edges(succ, n)) {
      if (!t->condition) continue;
      auto after = along(n, t->target);
      if (!after) continue;
      for (const auto & p : expr_reads(*t->condition)) {
        check_read(*after, "condition on " + q(t->source + " -> " + t->target), p.root(), t->span);
      }
    }
  }
}

ValidationReport validate(
  std::vector<DomainModel> domains, std::vector<AbrModel> abrs, FlowModel flow,
  const ValidateOptions & options)
{
  ValidationReport report;
  auto & diags = report.diagnostics;
  auto bundle = std::make_shared<LinkedBundle>(link(std::move(domains), std::move(abrs), std::move(flow), options, diags));
  report.inferred_start = infer_start(bundle->flow, diags);
  bundle->loops = match_loops(bundle->flow, diags);
  for (const auto & [start, info] : bundle->loops) bundle->loop_of_end[info.end] = start;
  if (report.inferred_start) {
    bundle->start = *report.inferred_start;
    for (const auto & [start, info] : bundle->loops) {
      if (info.body.count(bundle->start) || info.end == bundle->start) {
        error(diags, "E_LOOP_CROSSING", "flow starts inside the body of loop " + q(start),
              bundle->flow.find_step(bundle->start)->span);
      }
    }
  }
  if (has_errors(diags)) return report;
  check_mappings(*bundle, diags);
  check_dataflow_visibility(*bundle, diags);
  if (!has_errors(diags)) report.bundle = std::move(bundle);
  return report;
}

}  // namespace flowforge

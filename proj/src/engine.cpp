#include "flowforge/engine.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

namespace flowforge
{

namespace fs = std::filesystem;

std::string_view status_name(InstanceStatus s)
{
  switch (s) {
    case InstanceStatus::Running: return "RUNNING";
    case InstanceStatus::WaitingIo: return "WAITING_IO";
    case InstanceStatus::Completed: return "COMPLETED";
    case InstanceStatus::Faulted: return "FAULTED";
  }
  return "RUNNING";
}

std::optional<InstanceStatus> status_from_name(std::string_view name)
{
  for (auto s : {InstanceStatus::Running, InstanceStatus::WaitingIo, InstanceStatus::Completed, InstanceStatus::Faulted}) {
    if (status_name(s) == name) return s;
  }
  return std::nullopt;
}

std::size_t FlowInstance::times_entered(const std::string & step) const
{
  return static_cast<std::size_t>(std::count_if(
    trace.begin(), trace.end(), [&](const TraceEvent & e) { return e.event == "enter" && e.step == step; }));
}

// ---------------------------------------------------------------------------
// Type conformance

namespace
{

[[noreturn]] void mismatch(const std::string & what, const std::string & want, const Value & got)
{
  throw Error("E_TYPE_MISMATCH", what + " must be " + want + ", got " + std::string(value_kind_name(got.kind())));
}

Value conform_scalar(const Value & v, const TypeRef & type, const DomainModel & model, const std::string & what)
{
  if (type.is_basic()) {
    const auto b = std::get<BasicType>(type.target);
    if (b == BasicType::Float && v.is<std::int64_t>()) return Value(static_cast<double>(v.as<std::int64_t>()));
    if (v.basic() != b) mismatch(what, std::string(basic_type_name(b)), v);
    return v;
  }
  const auto & name = std::get<std::string>(type.target);
  if (!v.is<Record>()) mismatch(what, "a " + name + " record", v);
  const auto & rec = v.as<Record>();
  if (!rec.type_name.empty() && rec.type_name != name) {
    throw Error("E_TYPE_MISMATCH", what + " must be a " + name + " record, got " + rec.type_name);
  }
  const TypeDef * td = model.find_type(name);
  if (!td) throw Error("E_TYPE_MISMATCH", what + " has undefined type " + name);
  Record out;
  out.type_name = name;
  for (const auto & [field, fv] : rec.fields) {
    if (field == kIdField && fv.is<std::int64_t>()) {
      out.fields.emplace(field, fv);
      continue;
    }
    const Attribute * attr = td->find_attribute(field);
    if (!attr) throw Error("E_TYPE_MISMATCH", what + ": type " + name + " has no attribute '" + field + "'");
    out.fields.emplace(field, conform_to(fv, attr->type, model, what + "." + field));
  }
  return Value(std::move(out));
}

bool is_endpoint(const ActivityDef & ad, const Path & target)
{
  if (target.size() != 1) return false;
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

void add_unique(std::vector<std::string> & v, const std::string & s)
{
  if (std::find(v.begin(), v.end(), s) == v.end()) v.push_back(s);
}

std::vector<std::string> statement_reads(const Statement & st)
{
  std::vector<std::string> out;
  auto expr = [&](const Expr & e) {
    for (const auto & p : expr_reads(e)) add_unique(out, p.root());
  };
  if (const auto * let = std::get_if<LetStmt>(&st)) expr(*let->value);
  else if (const auto * as = std::get_if<AssignStmt>(&st)) {
    expr(*as->value);
    add_unique(out, as->target.root());
  } else if (const auto * ap = std::get_if<AppendStmt>(&st)) {
    expr(*ap->value);
    add_unique(out, ap->target.root());
  } else {
    add_unique(out, std::get<RenameStmt>(st).from);
  }
  return out;
}

}  // namespace

Value conform_to(const Value & v, const TypeRef & type, const DomainModel & model, const std::string & what)
{
  if (!type.is_set) return conform_scalar(v, type, model, what);
  if (!v.is<List>()) mismatch(what, type.str(), v);
  List items;
  TypeRef element = type;
  element.is_set = false;
  for (const auto & item : v.as<List>()) items.push_back(conform_scalar(item, element, model, what + "[]"));
  return Value(std::move(items));
}

// ---------------------------------------------------------------------------
// Images

namespace
{

[[noreturn]] void corrupt(const std::string & what) { throw Error("E_CORRUPT_IMAGE", "instance image: " + what); }

json values_json(const std::map<std::string, Value> & m)
{
  json j = json::object();
  for (const auto & [k, v] : m) j[k] = to_snapshot_json(v);
  return j;
}

std::map<std::string, Value> values_from(const json & j)
{
  std::map<std::string, Value> m;
  for (const auto & [k, v] : j.items()) m.emplace(k, from_snapshot_json(v));
  return m;
}

TypeRef type_ref_from(const std::string & s)
{
  TypeRef t;
  std::string_view rest = s;
  if (rest.rfind("set ", 0) == 0) {
    t.is_set = true;
    rest.remove_prefix(4);
  }
  if (auto b = basic_type_from_name(rest)) t.target = *b;
  else t.target = std::string(rest);
  return t;
}

json trace_event_json(const TraceEvent & e)
{
  json j = {{"event", e.event}, {"step", e.step}};
  if (!e.detail.empty()) j["detail"] = e.detail;
  if (!e.reads.empty()) j["reads"] = e.reads;
  if (!e.writes.empty()) j["writes"] = e.writes;
  return j;
}

}  // namespace

std::string persist_instance(const FlowInstance & inst)
{
  json j;
  j["format"] = 1;
  j["id"] = inst.id;
  j["flow"] = inst.flow;
  j["status"] = status_name(inst.status);
  j["position"] = inst.position;
  j["relationIndex"] = inst.relation_index;
  j["overrides"] = values_json(inst.overrides);
  json loops = json::array();
  for (const auto & l : inst.loops) {
    json el = json::array();
    for (const auto & v : l.elements) el.push_back(to_snapshot_json(v));
    loops.push_back({{"start", l.start}, {"end", l.end}, {"item", l.item}, {"index", l.index}, {"elements", el}});
  }
  j["loops"] = loops;
  j["dataflow"] = json::parse(inst.dataflow.snapshot());
  if (inst.pending) {
    const auto & p = *inst.pending;
    json expected = json::array();
    for (const auto & e : p.expected) expected.push_back({{"name", e.name}, {"type", e.type.str()}});
    j["pending"] = {{"requestId", p.request_id}, {"instanceId", p.instance_id}, {"io", p.io}, {"step", p.step},
                    {"published", values_json(p.published)}, {"expected", expected}};
  }
  if (inst.fault) j["fault"] = {{"code", inst.fault->code}, {"message", inst.fault->message}, {"step", inst.fault->step}};
  json trace = json::array();
  for (const auto & e : inst.trace) trace.push_back(trace_event_json(e));
  j["trace"] = trace;
  j["ioCount"] = inst.io_count;
  return j.dump();
}

FlowInstance load_instance(std::string_view image)
{
  FlowInstance inst;
  try {
    const json j = json::parse(image);
    if (!j.is_object() || j.value("format", 0) != 1) corrupt("unknown format");
    inst.id = j.at("id").get<std::string>();
    inst.flow = j.at("flow").get<std::string>();
    auto st = status_from_name(j.at("status").get<std::string>());
    if (!st) corrupt("unknown status");
    inst.status = *st;
    inst.position = j.at("position").get<std::string>();
    inst.relation_index = j.at("relationIndex").get<std::size_t>();
    inst.overrides = values_from(j.at("overrides"));
    for (const auto & l : j.at("loops")) {
      LoopState ls;
      ls.start = l.at("start").get<std::string>();
      ls.end = l.at("end").get<std::string>();
      ls.item = l.at("item").get<std::string>();
      ls.index = l.at("index").get<std::int64_t>();
      for (const auto & v : l.at("elements")) ls.elements.push_back(from_snapshot_json(v));
      inst.loops.push_back(std::move(ls));
    }
    inst.dataflow = DataFlow::restore(j.at("dataflow").dump());
    if (j.contains("pending")) {
      const auto & p = j["pending"];
      IoRequest r;
      r.request_id = p.at("requestId").get<std::string>();
      r.instance_id = p.at("instanceId").get<std::string>();
      r.io = p.at("io").get<std::string>();
      r.step = p.at("step").get<std::string>();
      r.published = values_from(p.at("published"));
      for (const auto & e : p.at("expected")) {
        r.expected.push_back({e.at("name").get<std::string>(), type_ref_from(e.at("type").get<std::string>())});
      }
      inst.pending = std::move(r);
    }
    if (j.contains("fault")) {
      const auto & f = j["fault"];
      inst.fault = Fault{f.at("code").get<std::string>(), f.at("message").get<std::string>(), f.at("step").get<std::string>()};
    }
    for (const auto & e : j.at("trace")) {
      TraceEvent t;
      t.event = e.at("event").get<std::string>();
      t.step = e.at("step").get<std::string>();
      t.detail = e.value("detail", "");
      t.reads = e.value("reads", std::vector<std::string>{});
      t.writes = e.value("writes", std::vector<std::string>{});
      inst.trace.push_back(std::move(t));
    }
    inst.io_count = j.at("ioCount").get<std::int64_t>();
  } catch (const json::exception & e) {
    corrupt(e.what());
  } catch (const Error & e) {
    if (e.code() == "E_CORRUPT_IMAGE") throw;
    corrupt(e.what());
  }
  if ((inst.status == InstanceStatus::WaitingIo) != inst.pending.has_value()) {
    corrupt("WAITING_IO and a pending request must go together");
  }
  return inst;
}

std::string trace_jsonl(const FlowInstance & inst)
{
  std::string out;
  for (const auto & e : inst.trace) out += trace_event_json(e).dump() + "\n";
  return out;
}

// ---------------------------------------------------------------------------
// Engine

Engine::Engine(
  const ValidationReport & report, std::shared_ptr<DocumentStore> store,
  std::shared_ptr<const InvokerRegistry> invoker, EngineOptions options)
: bundle_(report.bundle), store_(std::move(store)), invoker_(std::move(invoker)), options_(std::move(options))
{
  if (!report.ok() || !bundle_) {
    std::string first;
    for (const auto & d : report.diagnostics) {
      if (d.severity == Severity::Error) {
        first = format_diagnostic(d);
        break;
      }
    }
    throw Error("E_VALIDATION", "the bundle has validation errors" + (first.empty() ? "" : ": " + first));
  }
}

FlowInstance Engine::start(const std::string & instance_id, const std::map<std::string, Value> & initial) const
{
  const auto & flow = bundle_->flow;
  FlowInstance inst;
  inst.id = instance_id;
  inst.flow = flow.name;
  inst.position = bundle_->start;
  for (const auto & v : flow.variables) inst.dataflow.declare(v.name, declared_type(v.type));
  for (const auto & [name, value] : initial) {
    const VariableDecl * decl = nullptr;
    for (const auto & v : flow.variables) {
      if (v.name == name) decl = &v;
    }
    if (!decl) throw Error("E_UNKNOWN_VARIABLE", "flow '" + flow.name + "' declares no variable '" + name + "'");
    inst.dataflow.write(Path({name}), conform_to(value, decl->type, bundle_->merged, "variable '" + name + "'"));
  }
  run(inst);
  return inst;
}

void Engine::run(FlowInstance & inst) const
{
  std::uint64_t steps = 0;
  while (inst.status == InstanceStatus::Running) {
    if (++steps > options_.max_steps) {
      fault(inst, "E_STEP_LIMIT", "more than " + std::to_string(options_.max_steps) + " steps without suspending");
      return;
    }
    execute_step(inst);
  }
}

void Engine::fault(FlowInstance & inst, std::string code, std::string message) const
{
  inst.status = InstanceStatus::Faulted;
  inst.pending.reset();
  inst.trace.push_back({"fault", inst.position, code, {}, {}});
  inst.fault = Fault{std::move(code), std::move(message), inst.position};
}

void Engine::advance(FlowInstance & inst, const std::string & from) const
{
  const Transition * chosen = nullptr;
  const Transition * fallback = nullptr;
  std::vector<std::string> reads;
  bool any = false;
  for (const auto * t : bundle_->outgoing(from)) {
    any = true;
    if (!t->condition) {
      if (!fallback) fallback = t;
      continue;
    }
    for (const auto & p : expr_reads(*t->condition)) add_unique(reads, p.root());
    const Value v = eval_expr(*t->condition, inst.dataflow);
    if (!v.is<bool>()) {
      throw Error("E_TYPE_MISMATCH", "condition on '" + t->source + " -> " + t->target + "' is not BOOLEAN");
    }
    if (v.as<bool>()) {
      chosen = t;
      break;
    }
  }
  if (!chosen) chosen = fallback;
  if (!any) {
    inst.status = InstanceStatus::Completed;
    inst.trace.push_back({"completed", from, {}, reads, {}});
    return;
  }
  if (!chosen) throw Error("E_NO_TRANSITION", "no transition out of '" + from + "' applies");
  inst.trace.push_back({"transition", from, chosen->target, reads, {}});
  inst.position = chosen->target;
}

void Engine::execute_step(FlowInstance & inst) const
{
  if (inst.status != InstanceStatus::Running) return;
  const Step * step = bundle_->flow.find_step(inst.position);
  if (!step) {
    fault(inst, "E_UNKNOWN_STEP", "no step named '" + inst.position + "'");
    return;
  }
  inst.trace.push_back({"enter", step->name, {}, {}, {}});
  std::vector<std::string> reads, writes;
  auto exit_and_advance = [&](const std::string & from) {
    inst.trace.push_back({"exit", step->name, {}, reads, writes});
    advance(inst, from);
  };
  try {
    std::visit(
      [&](const auto & body) {
        using T = std::decay_t<decltype(body)>;
        if constexpr (std::is_same_v<T, StartStep>) {
          exit_and_advance(step->name);
        } else if constexpr (std::is_same_v<T, ActivityStep>) {
          const ActivityDef & ad = *bundle_->merged.find_activity(body.activity);
          inst.overrides.clear();
          inst.relation_index = 0;
          // Overwrites land before any relation runs.
          for (const auto & ow : body.overwrites) {
            if (is_endpoint(ad, ow.target)) {
              inst.overrides[ow.target.root()] = ow.value;
            } else {
              inst.dataflow.write(ow.target, ow.value);
              add_unique(writes, ow.target.root());
            }
          }
          run_activity(inst, *step, reads, writes);
          if (inst.status == InstanceStatus::Running) {
            inst.overrides.clear();
            inst.relation_index = 0;
            exit_and_advance(step->name);
          }
        } else if constexpr (std::is_same_v<T, StartLoopStep>) {
          const auto & info = bundle_->loops.at(step->name);
          add_unique(reads, body.data_flow_set.root());
          const Value & set = inst.dataflow.read(body.data_flow_set);
          if (!set.is<List>()) {
            throw Error("E_TYPE_MISMATCH", "loop '" + step->name + "' iterates over '" + body.data_flow_set.str() + "', which is not a set");
          }
          const List & elements = set.as<List>();
          if (elements.empty()) {
            inst.trace.push_back({"loop_skip", step->name, {}, {}, {}});
            inst.trace.push_back({"exit", step->name, {}, reads, writes});
            inst.position = info.end;
            advance(inst, info.end);
            return;
          }
          const std::string index = body.loop_name + "_index";
          inst.dataflow.push_frame({{body.loop_name, elements.front()}, {index, Value(std::int64_t{0})}});
          inst.loops.push_back({step->name, info.end, body.loop_name, elements, 0});
          writes = {body.loop_name, index};
          inst.trace.push_back({"loop_enter", step->name, "0", {}, {}});
          inst.trace.push_back({"exit", step->name, {}, reads, writes});
          inst.trace.push_back({"transition", step->name, info.entry, {}, {}});
          inst.position = info.entry;
        } else if constexpr (std::is_same_v<T, EndLoopStep>) {
          if (inst.loops.empty() || inst.loops.back().start != body.start_loop) {
            throw Error("E_LOOP_STATE", "end loop '" + step->name + "' reached outside its loop");
          }
          auto & loop = inst.loops.back();
          const auto & info = bundle_->loops.at(loop.start);
          if (loop.index + 1 < static_cast<std::int64_t>(loop.elements.size())) {
            ++loop.index;
            const std::string index = loop.item + "_index";
            inst.dataflow.reset_frame(
              {{loop.item, loop.elements[static_cast<std::size_t>(loop.index)]}, {index, Value(loop.index)}});
            writes = {loop.item, index};
            inst.trace.push_back({"loop_next", step->name, std::to_string(loop.index), {}, {}});
            inst.trace.push_back({"exit", step->name, {}, reads, writes});
            inst.trace.push_back({"transition", step->name, info.entry, {}, {}});
            inst.position = info.entry;
            return;
          }
          inst.dataflow.pop_frame();
          inst.loops.pop_back();
          inst.trace.push_back({"loop_exit", step->name, {}, {}, {}});
          exit_and_advance(step->name);
        } else if constexpr (std::is_same_v<T, ScriptStep>) {
          for (const auto & st : body.script.statements) {
            for (const auto & r : statement_reads(st)) add_unique(reads, r);
          }
          const auto effects = exec_script(body.script, inst.dataflow);
          for (const auto & p : effects.touched()) add_unique(writes, p.root());
          exit_and_advance(step->name);
        } else if constexpr (std::is_same_v<T, StoreStep>) {
          for (const auto & var : body.variables) {
            add_unique(reads, var);
            const Path root({var});
            Value v = inst.dataflow.read(root);
            std::string type;
            auto decl = inst.dataflow.declarations().find(var);
            if (decl != inst.dataflow.declarations().end()) type = decl->second.record_type;
            if (type.empty() && v.is<Record>()) type = v.as<Record>().type_name;
            if (type.empty() && v.is<List>() && !v.as<List>().empty() && v.as<List>().front().is<Record>()) {
              type = v.as<List>().front().as<Record>().type_name;
            }
            if (type.empty()) throw Error("E_TYPE_MISMATCH", "cannot tell which collection '" + var + "' belongs to");
            const auto ids = store_->store(type, v);
            // The stored records now carry their ids; a later store updates them.
            if (v.is<Record>()) {
              v.as<Record>().fields[std::string(kIdField)] = Value(ids.at(0));
            } else if (v.is<List>()) {
              for (std::size_t i = 0; i < ids.size(); ++i) {
                v.as<List>()[i].as<Record>().fields[std::string(kIdField)] = Value(ids[i]);
              }
            }
            inst.dataflow.write(root, std::move(v));
            add_unique(writes, var);
          }
          exit_and_advance(step->name);
        } else if constexpr (std::is_same_v<T, RetrieveStep> || std::is_same_v<T, DeleteStep>) {
          std::vector<BoundCriterion> bound;
          for (const auto & c : body.criteria) {
            BoundCriterion b{c.field, c.op, {}};
            if (const auto * p = std::get_if<Path>(&c.value)) {
              add_unique(reads, p->root());
              b.value = inst.dataflow.read(*p);
            } else {
              b.value = std::get<Value>(c.value);
            }
            bound.push_back(std::move(b));
          }
          if constexpr (std::is_same_v<T, RetrieveStep>) {
            inst.dataflow.write(Path({body.target_variable}), store_->retrieve(body.type, bound, body.is_set));
            add_unique(writes, body.target_variable);
          } else {
            const auto n = store_->remove(body.type, bound);
            inst.trace.push_back({"deleted", step->name, std::to_string(n), {}, {}});
          }
          exit_and_advance(step->name);
        }
      },
      step->body);
  } catch (const Error & e) {
    fault(inst, e.code(), e.what());
  } catch (const std::exception & e) {
    fault(inst, "E_INTERNAL", e.what());
  }
}

void Engine::run_activity(
  FlowInstance & inst, const Step & step, std::vector<std::string> & reads, std::vector<std::string> & writes) const
{
  const auto & model = bundle_->merged;
  const ActivityDef & ad = *model.find_activity(step.as<ActivityStep>().activity);
  auto source = [&](const Mapping & m) -> Value {
    auto ov = inst.overrides.find(m.endpoint);
    if (ov != inst.overrides.end()) return ov->second;
    if (m.is_value()) return m.value();
    add_unique(reads, m.path().root());
    return inst.dataflow.read(m.path());
  };
  for (std::size_t i = inst.relation_index; i < ad.relations.size(); ++i) {
    const auto & rel = ad.relations[i];
    if (const auto * sr = std::get_if<ServiceRelation>(&rel)) {
      const ServiceDef & svc = *model.find_service(sr->service);
      std::map<std::string, Value> inputs;
      for (const auto & m : sr->inputs) inputs.emplace(m.endpoint, source(m));
      const auto outputs = invoker_->invoke(bundle_->bindings.at(sr->service), svc, model, inputs, options_.invoke_env);
      for (const auto & m : sr->outputs) {
        inst.dataflow.write(m.path(), outputs.at(m.endpoint));
        add_unique(writes, m.path().root());
      }
      inst.trace.push_back({"invoke", step.name, sr->service, reads, writes});
      reads.clear();
      writes.clear();
      continue;
    }
    const auto & ir = std::get<IoRelation>(rel);
    const IoDef & io = *model.find_io(ir.io);
    IoRequest req;
    req.instance_id = inst.id;
    req.io = ir.io;
    req.step = step.name;
    for (const auto & m : ir.output_mappings) req.published.emplace(m.endpoint, source(m));
    for (const auto & m : ir.input_mappings) {
      auto ov = inst.overrides.find(m.endpoint);
      if (ov != inst.overrides.end()) {
        // Fixed at design time: nothing to ask.
        inst.dataflow.write(m.path(), ov->second);
        add_unique(writes, m.path().root());
        continue;
      }
      req.expected.push_back({m.endpoint, io.find_variable(m.endpoint)->type});
    }
    req.request_id = inst.id + "-io-" + std::to_string(++inst.io_count);
    inst.trace.push_back({"io_request", step.name, req.request_id, reads, writes});
    reads.clear();
    writes.clear();
    inst.pending = std::move(req);
    inst.relation_index = i + 1;
    inst.status = InstanceStatus::WaitingIo;
    return;
  }
}

void Engine::resume(
  FlowInstance & inst, const std::string & request_id, const std::map<std::string, Value> & values) const
{
  if (inst.status != InstanceStatus::WaitingIo || !inst.pending || inst.pending->request_id != request_id) {
    throw Error("E_STALE_REQUEST", "instance '" + inst.id + "' is not waiting for request '" + request_id + "'");
  }
  const IoRequest & req = *inst.pending;
  std::map<std::string, Value> accepted;
  for (const auto & e : req.expected) {
    auto it = values.find(e.name);
    if (it == values.end()) throw Error("E_MISSING_VARIABLE", "answer to " + request_id + " lacks '" + e.name + "'");
    accepted.emplace(e.name, conform_to(it->second, e.type, bundle_->merged, "'" + e.name + "'"));
  }
  for (const auto & [name, v] : values) {
    if (!accepted.count(name)) {
      throw Error("E_UNKNOWN_VARIABLE", "request " + request_id + " does not ask for '" + name + "'");
    }
  }

  const Step & step = *bundle_->flow.find_step(inst.position);
  const ActivityDef & ad = *bundle_->merged.find_activity(step.as<ActivityStep>().activity);
  const auto & ir = std::get<IoRelation>(ad.relations.at(inst.relation_index - 1));
  // Apply to a copy so a failed write leaves the instance as it was.
  DataFlow df = inst.dataflow;
  std::vector<std::string> writes;
  for (const auto & m : ir.input_mappings) {
    auto it = accepted.find(m.endpoint);
    if (it == accepted.end()) continue;
    df.write(m.path(), it->second);
    add_unique(writes, m.path().root());
  }
  inst.dataflow = std::move(df);
  inst.trace.push_back({"io_response", step.name, request_id, {}, writes});
  inst.pending.reset();
  inst.status = InstanceStatus::Running;

  std::vector<std::string> reads;
  writes.clear();
  try {
    run_activity(inst, step, reads, writes);
    if (inst.status == InstanceStatus::Running) {
      inst.overrides.clear();
      inst.relation_index = 0;
      inst.trace.push_back({"exit", step.name, {}, reads, writes});
      advance(inst, step.name);
    }
  } catch (const Error & e) {
    fault(inst, e.code(), e.what());
  } catch (const std::exception & e) {
    fault(inst, "E_INTERNAL", e.what());
  }
  run(inst);
}

// ---------------------------------------------------------------------------
// Instance store

namespace
{

bool valid_id(const std::string & id)
{
  if (id.empty() || id.size() > 128) return false;
  return std::all_of(id.begin(), id.end(), [](unsigned char c) { return std::isalnum(c) || c == '-' || c == '_'; });
}

}  // namespace

InstanceStore::InstanceStore(fs::path state_root) : dir_(std::move(state_root) / "instances")
{
  std::error_code ec;
  fs::create_directories(dir_, ec);
  if (ec) throw Error("E_IO", "cannot create " + dir_.string() + ": " + ec.message());
}

void InstanceStore::save(const FlowInstance & inst) const
{
  if (!valid_id(inst.id)) throw Error("E_BAD_ID", "instance id '" + inst.id + "' is not a plain name");
  const fs::path target = dir_ / (inst.id + ".json");
  const fs::path tmp = dir_ / (inst.id + ".json.tmp");
  const std::string image = persist_instance(inst);
  const int fd = ::open(tmp.c_str(), O_WRONLY | O_CREAT | O_TRUNC | O_CLOEXEC, 0644);
  if (fd < 0) throw Error("E_IO", "cannot write " + tmp.string());
  std::size_t done = 0;
  while (done < image.size()) {
    const auto n = ::write(fd, image.data() + done, image.size() - done);
    if (n <= 0) {
      ::close(fd);
      throw Error("E_IO", "cannot write " + tmp.string());
    }
    done += static_cast<std::size_t>(n);
  }
  ::fsync(fd);
  ::close(fd);
  std::error_code ec;
  fs::rename(tmp, target, ec);
  if (ec) throw Error("E_IO", "cannot rename " + tmp.string() + ": " + ec.message());
}

bool InstanceStore::exists(const std::string & id) const
{
  return valid_id(id) && fs::exists(dir_ / (id + ".json"));
}

FlowInstance InstanceStore::load(const std::string & id) const
{
  if (!exists(id)) throw Error("E_NOT_FOUND", "no instance '" + id + "'");
  std::ifstream in(dir_ / (id + ".json"), std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return load_instance(ss.str());
}

std::vector<std::string> InstanceStore::list() const
{
  std::vector<std::string> ids;
  for (const auto & e : fs::directory_iterator(dir_)) {
    if (e.path().extension() == ".json") ids.push_back(e.path().stem().string());
  }
  std::sort(ids.begin(), ids.end());
  return ids;
}

std::string new_instance_id()
{
  static thread_local std::mt19937_64 rng(std::random_device{}());
  static const char * hex = "0123456789abcdef";
  std::string id;
  auto bits = rng();
  for (int i = 0; i < 16; ++i, bits >>= 4) id += hex[bits & 15];
  return id;
}

}  // namespace flowforge

#include "flowforge/runtime.hpp"

namespace flowforge
{

namespace fs = std::filesystem;

std::vector<IoAnswer> parse_io_script(const json & j)
{
  if (!j.is_array()) throw Error("E_BAD_SCRIPT", "an IO script is a JSON array");
  std::vector<IoAnswer> out;
  for (const auto & item : j) {
    if (!item.is_object() || !item.contains("io") || !item["io"].is_string()) {
      throw Error("E_BAD_SCRIPT", "script entry #" + std::to_string(out.size()) + " needs an \"io\" name");
    }
    IoAnswer a;
    a.io = item["io"].get<std::string>();
    if (item.contains("values")) {
      if (!item["values"].is_object()) {
        throw Error("E_BAD_SCRIPT", "script entry #" + std::to_string(out.size()) + ": \"values\" must be an object");
      }
      a.values = item["values"];
    }
    out.push_back(std::move(a));
  }
  return out;
}

std::map<std::string, Value> decode_answers(const IoRequest & request, const json & values, const DomainModel & model)
{
  if (!values.is_object()) throw Error("E_DECODE", "answers must be a JSON object");
  std::map<std::string, Value> out;
  for (const auto & [name, v] : values.items()) {
    const ExpectedVariable * want = nullptr;
    for (const auto & e : request.expected) {
      if (e.name == name) want = &e;
    }
    if (!want) throw Error("E_UNKNOWN_VARIABLE", "request " + request.request_id + " does not ask for '" + name + "'");
    out.emplace(name, from_wire(v, want->type, model));
  }
  return out;
}

json io_request_json(const IoRequest & request)
{
  json published = json::object();
  for (const auto & [k, v] : request.published) published[k] = to_wire(v);
  json expected = json::array();
  for (const auto & e : request.expected) expected.push_back({{"name", e.name}, {"type", e.type.str()}});
  return {{"requestId", request.request_id}, {"instanceId", request.instance_id}, {"io", request.io},
          {"step", request.step}, {"published", published}, {"expected", expected}};
}

json instance_json(const FlowInstance & inst)
{
  json j = {{"id", inst.id}, {"flow", inst.flow}, {"status", status_name(inst.status)}, {"position", inst.position}};
  if (inst.pending) j["pending"] = io_request_json(*inst.pending);
  if (inst.fault) j["fault"] = {{"code", inst.fault->code}, {"message", inst.fault->message}, {"step", inst.fault->step}};
  j["dataflow"] = json::parse(inst.dataflow.snapshot());
  return j;
}

std::vector<std::int64_t> seed_store(
  DocumentStore & store, const LinkedBundle & bundle, const std::string & type, const json & documents)
{
  if (!documents.is_array()) throw Error("E_DECODE", "seed documents must be a JSON array");
  const Value v = from_wire(documents, TypeRef::named(type, true), bundle.merged);
  return store.store(type, v);
}

// ---------------------------------------------------------------------------

Runtime::Runtime(
  const ValidationReport & report, fs::path state_root, std::shared_ptr<const InvokerRegistry> invoker,
  EngineOptions options)
: store_(report.bundle ? std::make_shared<JsonLinesStore>(state_root / "store", report.bundle->schemas) : nullptr),
  instances_(state_root),
  engine_(report, store_, std::move(invoker), std::move(options))
{
}

FlowInstance Runtime::start(const json & initial, std::string id)
{
  std::lock_guard lock(mutex_);
  if (id.empty()) {
    do id = new_instance_id();
    while (instances_.exists(id));
  } else if (instances_.exists(id)) {
    throw Error("E_DUPLICATE_INSTANCE", "instance '" + id + "' already exists");
  }
  if (!initial.is_object()) throw Error("E_DECODE", "initial values must be a JSON object");
  std::map<std::string, Value> values;
  const auto & flow = engine_.bundle().flow;
  for (const auto & [name, v] : initial.items()) {
    const VariableDecl * decl = nullptr;
    for (const auto & var : flow.variables) {
      if (var.name == name) decl = &var;
    }
    if (!decl) throw Error("E_UNKNOWN_VARIABLE", "flow '" + flow.name + "' declares no variable '" + name + "'");
    values.emplace(name, from_wire(v, decl->type, engine_.bundle().merged));
  }
  FlowInstance inst = engine_.start(id, values);
  instances_.save(inst);
  return inst;
}

FlowInstance Runtime::get(const std::string & id) const
{
  std::lock_guard lock(mutex_);
  return instances_.load(id);
}

FlowInstance Runtime::answer(const std::string & id, const std::string & request_id, const json & values)
{
  std::lock_guard lock(mutex_);
  FlowInstance inst = instances_.load(id);
  if (inst.status != InstanceStatus::WaitingIo || !inst.pending || inst.pending->request_id != request_id) {
    throw Error("E_STALE_REQUEST", "instance '" + id + "' is not waiting for request '" + request_id + "'");
  }
  engine_.resume(inst, request_id, decode_answers(*inst.pending, values, engine_.bundle().merged));
  instances_.save(inst);
  return inst;
}

std::vector<std::string> Runtime::list() const
{
  std::lock_guard lock(mutex_);
  return instances_.list();
}

// ---------------------------------------------------------------------------

RunReport run_scripted(Runtime & runtime, const json & initial, const std::vector<IoAnswer> & script)
{
  const auto t0 = std::chrono::steady_clock::now();
  RunReport report;
  report.instance = runtime.start(initial);
  std::size_t next = 0;
  while (report.instance.status == InstanceStatus::WaitingIo) {
    const IoRequest req = *report.instance.pending;
    report.requests.push_back(req);
    if (next >= script.size()) {
      throw Error(
        "E_SCRIPT_EXHAUSTED", "script exhausted at " + req.io + "#" + std::to_string(report.requests.size() - 1) +
                                " (step '" + req.step + "')");
    }
    const auto & a = script[next++];
    if (a.io != req.io) {
      throw Error("E_SCRIPT_MISMATCH", "script entry #" + std::to_string(next - 1) + " answers " + a.io +
                                         " but step '" + req.step + "' asks " + req.io);
    }
    report.instance = runtime.answer(report.instance.id, req.request_id, a.values);
  }
  report.elapsed = std::chrono::steady_clock::now() - t0;
  return report;
}

RunReport cli_run(
  const std::vector<fs::path> & paths, const std::string & flow_name, const fs::path & state_root,
  const json & initial, const std::vector<IoAnswer> & script, std::shared_ptr<const InvokerRegistry> invoker)
{
  const auto report = load_bundle(paths, flow_name);
  Runtime runtime(report, state_root, std::move(invoker));
  return run_scripted(runtime, initial, script);
}

int http_status_for(const std::string & code)
{
  if (code == "E_NOT_FOUND" || code == "E_UNKNOWN_FLOW") return 404;
  if (code == "E_STALE_REQUEST" || code == "E_DUPLICATE_INSTANCE" || code == "E_LOCKED") return 409;
  if (code == "E_BAD_REQUEST") return 400;
  if (code == "E_DECODE" || code == "E_TYPE_MISMATCH" || code == "E_MISSING_VARIABLE" ||
      code == "E_UNKNOWN_VARIABLE") {
    return 422;
  }
  return 500;
}

}  // namespace flowforge

// flowforge validate|run|serve|inspect

#include <CLI11.hpp>
#include <csignal>
#include <cstdlib>
#include <fstream>
#include <iostream>

#include "flowforge/runtime.hpp"

namespace fs = std::filesystem;
using namespace flowforge;

namespace
{

constexpr int kExitOk = 0;
constexpr int kExitInvalid = 1;
constexpr int kExitError = 2;
constexpr int kExitFaulted = 3;

json read_json(const fs::path & p)
{
  std::ifstream in(p);
  if (!in) throw Error("E_IO", "cannot read " + p.string());
  try {
    return json::parse(in);
  } catch (const json::exception & e) {
    throw Error("E_DECODE", p.string() + ": " + e.what());
  }
}

fs::path default_state_root()
{
  if (const char * env = std::getenv("FLOWFORGE_STATE_ROOT"); env && *env) return env;
  return ".flowforge";
}

json diagnostic_json(const Diagnostic & d)
{
  return {{"severity", d.severity == Severity::Error ? "error" : "warning"},
          {"code", d.code},
          {"message", d.message},
          {"file", d.span.file},
          {"line", d.span.line},
          {"column", d.span.column}};
}

void print_diagnostics(const std::vector<Diagnostic> & diags, std::ostream & out)
{
  for (const auto & d : diags) out << format_diagnostic(d) << "\n";
}

ValidationReport load_or_report(const std::vector<fs::path> & paths, const std::string & flow)
{
  auto report = load_bundle(paths, flow);
  if (!report.ok()) print_diagnostics(report.diagnostics, std::cerr);
  return report;
}

// Seeds given as TYPE=FILE.
void seed(Runtime & runtime, const std::vector<std::string> & seeds)
{
  for (const auto & s : seeds) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw Error("E_BAD_REQUEST", "--seed expects TYPE=FILE, got '" + s + "'");
    const auto ids = seed_store(runtime.store(), runtime.bundle(), s.substr(0, eq), read_json(s.substr(eq + 1)));
    std::cerr << "seeded " << ids.size() << " " << s.substr(0, eq) << "\n";
  }
}

ApiServer * g_server = nullptr;

extern "C" void on_signal(int)
{
  if (g_server) g_server->stop();
}

json inspect_bundle(const LinkedBundle & b)
{
  json loops = json::object();
  for (const auto & [name, l] : b.loops) {
    loops[name] = {{"end", l.end}, {"entry", l.entry}, {"depth", l.depth}, {"parent", l.parent}, {"body", l.body}};
  }
  json vars = json::object();
  for (const auto & [name, t] : b.variable_types) vars[name] = t.str();
  json bindings = json::object();
  for (const auto & [service, impl] : b.bindings) bindings[service] = impl.kind();
  json steps = json::array();
  for (const auto & s : b.flow.steps) {
    json out = json::array();
    for (const auto * t : b.outgoing(s.name)) out.push_back(t->target);
    steps.push_back({{"name", s.name}, {"next", out}});
  }
  return {{"flow", b.flow.name},
          {"start", b.start},
          {"steps", steps},
          {"loops", loops},
          {"variables", vars},
          {"bindings", bindings},
          {"schemas", json::parse(serialize_schemas(b.schemas))}};
}

}  // namespace

int main(int argc, char ** argv)
{
  CLI::App app{"Model-driven flow runner"};
  app.require_subcommand(1);

  std::vector<fs::path> paths;
  std::string flow_name;
  std::string state_root = default_state_root().string();

  auto * validate_cmd = app.add_subcommand("validate", "Check a model bundle");
  std::string format = "text";
  validate_cmd->add_option("paths", paths, "Model files or directories")->required();
  validate_cmd->add_option("--flow", flow_name, "Flow to validate when the bundle has several");
  validate_cmd->add_option("--format", format, "text or json")->check(CLI::IsMember({"text", "json"}));

  auto * run_cmd = app.add_subcommand("run", "Run a flow, answering IO from a script");
  fs::path script_path, input_path;
  std::vector<std::string> seeds;
  bool show_trace = false;
  run_cmd->add_option("paths", paths, "Model files or directories")->required();
  run_cmd->add_option("--flow", flow_name, "Flow to run when the bundle has several");
  run_cmd->add_option("--script", script_path, "JSON array of {io, values} answers");
  run_cmd->add_option("--input", input_path, "JSON object of initial variable values");
  run_cmd->add_option("--seed", seeds, "TYPE=FILE: store the JSON array in FILE before running");
  run_cmd->add_option("--state", state_root, "State directory (default $FLOWFORGE_STATE_ROOT or .flowforge)");
  run_cmd->add_flag("--trace", show_trace, "Print the trace as JSON lines on stderr");

  auto * serve_cmd = app.add_subcommand("serve", "Serve the HTTP API");
  std::string host = "127.0.0.1";
  int port = 8080;
  serve_cmd->add_option("paths", paths, "Model files or directories")->required();
  serve_cmd->add_option("--flow", flow_name, "Flow to serve when the bundle has several");
  serve_cmd->add_option("--host", host, "Bind address");
  serve_cmd->add_option("--port", port, "Port; 0 picks a free one");
  serve_cmd->add_option("--state", state_root, "State directory (default $FLOWFORGE_STATE_ROOT or .flowforge)");
  serve_cmd->add_option("--seed", seeds, "TYPE=FILE: store the JSON array in FILE at startup");

  auto * inspect_cmd = app.add_subcommand("inspect", "Show a linked bundle, or a stored instance");
  std::string instance_id;
  inspect_cmd->add_option("paths", paths, "Model files or directories");
  inspect_cmd->add_option("--flow", flow_name, "Flow to show when the bundle has several");
  inspect_cmd->add_option("--instance", instance_id, "Instance id to show instead");
  inspect_cmd->add_option("--state", state_root, "State directory (default $FLOWFORGE_STATE_ROOT or .flowforge)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*validate_cmd) {
      const auto report = load_bundle(paths, flow_name);
      if (format == "json") {
        json diags = json::array();
        for (const auto & d : report.diagnostics) diags.push_back(diagnostic_json(d));
        std::cout << json{{"ok", report.ok()}, {"diagnostics", diags}}.dump(2) << "\n";
      } else {
        print_diagnostics(report.diagnostics, std::cout);
        if (report.ok()) std::cout << "ok: flow " << report.bundle->flow.name << " starts at " << report.bundle->start << "\n";
      }
      return report.ok() ? kExitOk : kExitInvalid;
    }

    if (*run_cmd) {
      const auto report = load_or_report(paths, flow_name);
      if (!report.ok()) return kExitInvalid;
      const auto script = script_path.empty() ? std::vector<IoAnswer>{} : parse_io_script(read_json(script_path));
      const json input = input_path.empty() ? json::object() : read_json(input_path);
      Runtime runtime(report, state_root);
      seed(runtime, seeds);
      const auto result = run_scripted(runtime, input, script);
      json out = instance_json(result.instance);
      out["requests"] = json::array();
      for (const auto & r : result.requests) out["requests"].push_back(io_request_json(r));
      out["elapsedSeconds"] = result.elapsed.count();
      std::cout << out.dump(2) << "\n";
      if (show_trace) std::cerr << trace_jsonl(result.instance);
      return result.instance.status == InstanceStatus::Faulted ? kExitFaulted : kExitOk;
    }

    if (*serve_cmd) {
      const auto report = load_or_report(paths, flow_name);
      if (!report.ok()) return kExitInvalid;
      Runtime runtime(report, state_root);
      seed(runtime, seeds);
      ApiServer server(runtime);
      const int bound = server.bind(host, port);
      g_server = &server;
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      std::cout << "serving flow " << report.bundle->flow.name << " on http://" << host << ":" << bound << std::endl;
      server.serve();
      g_server = nullptr;
      return kExitOk;
    }

    if (*inspect_cmd) {
      if (!instance_id.empty()) {
        const auto inst = InstanceStore(state_root).load(instance_id);
        json out = instance_json(inst);
        out["trace"] = json::array();
        std::istringstream lines(trace_jsonl(inst));
        for (std::string line; std::getline(lines, line);) out["trace"].push_back(json::parse(line));
        std::cout << out.dump(2) << "\n";
        return kExitOk;
      }
      if (paths.empty()) throw Error("E_BAD_REQUEST", "inspect needs model paths or --instance");
      const auto report = load_or_report(paths, flow_name);
      if (!report.ok()) return kExitInvalid;
      std::cout << inspect_bundle(*report.bundle).dump(2) << "\n";
      return kExitOk;
    }
  } catch (const Error & e) {
    std::cerr << "error[" << e.code() << "] " << e.what() << "\n";
    return kExitError;
  } catch (const std::exception & e) {
    std::cerr << "error " << e.what() << "\n";
    return kExitError;
  }
  return kExitOk;
}

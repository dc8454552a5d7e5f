#pragma once

#include <chrono>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "flowforge/bundle.hpp"
#include "flowforge/engine.hpp"

namespace flowforge
{

/// One scripted answer: the IO it is meant for and its values in wire form.
struct IoAnswer
{
  std::string io;
  json values = json::object();
};

/// `[{"io": "ArticleIO", "values": {...}}, ...]`. Throws E_BAD_SCRIPT.
std::vector<IoAnswer> parse_io_script(const json & j);

/// Decodes wire-form answers against what the request expects. Throws
/// E_UNKNOWN_VARIABLE for names it does not ask for, E_DECODE on bad shapes.
std::map<std::string, Value> decode_answers(const IoRequest & request, const json & values, const DomainModel & model);

/// The request as clients see it: published values in wire form.
json io_request_json(const IoRequest & request);

/// Summary view of an instance, including its data-flow snapshot.
json instance_json(const FlowInstance & instance);

/// Stores each element of `documents` (wire form) as a `type` record and
/// returns the ids.
std::vector<std::int64_t> seed_store(DocumentStore & store, const LinkedBundle & bundle, const std::string & type, const json & documents);

/// Validated bundle plus on-disk state: documents under `<root>/store`,
/// instance images under `<root>/instances`. Every transition of an instance
/// is saved before a call returns. Calls are serialized.
class Runtime
{
public:
  /// Throws E_VALIDATION.
  Runtime(
    const ValidationReport & report, std::filesystem::path state_root,
    std::shared_ptr<const InvokerRegistry> invoker = make_default_registry(), EngineOptions options = {});

  const LinkedBundle & bundle() const { return engine_.bundle(); }
  DocumentStore & store() { return *store_; }
  const InstanceStore & instances() const { return instances_; }

  /// `initial` holds wire-form values for declared variables.
  FlowInstance start(const json & initial = json::object(), std::string id = {});
  FlowInstance get(const std::string & id) const;
  /// Throws like Engine::resume, plus E_NOT_FOUND and E_DECODE.
  FlowInstance answer(const std::string & id, const std::string & request_id, const json & values);
  std::vector<std::string> list() const;

private:
  std::shared_ptr<DocumentStore> store_;
  InstanceStore instances_;
  Engine engine_;
  mutable std::mutex mutex_;
};

struct RunReport
{
  FlowInstance instance;
  /// Every request the run was asked to answer, in order.
  std::vector<IoRequest> requests;
  std::chrono::duration<double> elapsed{};
};

/// Drives an instance with scripted answers until it leaves WAITING_IO.
/// Throws E_SCRIPT_MISMATCH when an answer names another IO and
/// E_SCRIPT_EXHAUSTED when answers run out.
RunReport run_scripted(Runtime & runtime, const json & initial, const std::vector<IoAnswer> & script);

/// Loads the bundle from `paths`, opens `state_root` and runs the script.
RunReport cli_run(
  const std::vector<std::filesystem::path> & paths, const std::string & flow_name,
  const std::filesystem::path & state_root, const json & initial, const std::vector<IoAnswer> & script,
  std::shared_ptr<const InvokerRegistry> invoker = make_default_registry());

/// HTTP API over a Runtime:
///   POST /flows/{flow}/instances      {"input": {...}}        -> 201 instance
///   GET  /instances                                           -> [{id, status, position}]
///   GET  /instances/{id}                                      -> instance
///   GET  /instances/{id}/io                                   -> request, or 204
///   POST /instances/{id}/io           {"requestId", "values"} -> instance
///   GET  /instances/{id}/trace                                -> [event]
/// Errors answer `{"code", "message"}` with 400, 404, 409 or 422.
class ApiServer
{
public:
  explicit ApiServer(Runtime & runtime);
  ~ApiServer();
  ApiServer(const ApiServer &) = delete;
  ApiServer & operator=(const ApiServer &) = delete;

  /// Port 0 picks a free port. Returns the bound port; throws E_IO.
  int bind(const std::string & host, int port);
  /// Blocks until stop().
  void serve();
  void stop();

private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// HTTP status for an error code raised by the runtime.
int http_status_for(const std::string & code);

}  // namespace flowforge

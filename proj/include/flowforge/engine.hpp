#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "flowforge/codec.hpp"
#include "flowforge/dataflow.hpp"
#include "flowforge/invoker.hpp"
#include "flowforge/persistence.hpp"
#include "flowforge/validator.hpp"

namespace flowforge
{

enum class InstanceStatus { Running, WaitingIo, Completed, Faulted };

std::string_view status_name(InstanceStatus s);
std::optional<InstanceStatus> status_from_name(std::string_view name);

struct ExpectedVariable
{
  std::string name;
  TypeRef type;
  bool operator==(const ExpectedVariable &) const = default;
};

struct IoRequest
{
  std::string request_id;  // `<instance>-io-<n>`
  std::string instance_id;
  std::string io;
  std::string step;
  std::map<std::string, Value> published;
  std::vector<ExpectedVariable> expected;
  bool operator==(const IoRequest &) const = default;
};

struct Fault
{
  std::string code;
  std::string message;
  std::string step;
  bool operator==(const Fault &) const = default;
};

/// One active loop: the elements captured when the loop started and the
/// position reached.
struct LoopState
{
  std::string start;
  std::string end;
  std::string item;
  List elements;
  std::int64_t index = 0;
  bool operator==(const LoopState &) const = default;
};

/// Trace events: enter, exit (with the roots the step read and wrote),
/// transition, invoke, io_request, io_response, deleted, loop_enter, loop_next, loop_exit,
/// loop_skip, completed, fault.
struct TraceEvent
{
  std::string event;
  std::string step;
  std::string detail;  // transition target, request id, loop index, fault code
  std::vector<std::string> reads;
  std::vector<std::string> writes;
  bool operator==(const TraceEvent &) const = default;
};

struct FlowInstance
{
  std::string id;
  std::string flow;
  InstanceStatus status = InstanceStatus::Running;
  std::string position;
  /// Next relation to run when an activity step resumes after its IO.
  std::size_t relation_index = 0;
  /// Endpoint overwrites of the activity step in progress.
  std::map<std::string, Value> overrides;
  std::vector<LoopState> loops;
  DataFlow dataflow;
  std::optional<IoRequest> pending;
  std::optional<Fault> fault;
  std::vector<TraceEvent> trace;
  std::int64_t io_count = 0;

  bool operator==(const FlowInstance &) const = default;

  /// Number of `enter` events for `step`.
  std::size_t times_entered(const std::string & step) const;
};

/// Canonical JSON image; load(persist(i)) == i.
std::string persist_instance(const FlowInstance & instance);
/// Throws E_CORRUPT_IMAGE.
FlowInstance load_instance(std::string_view image);

/// Line-delimited JSON, one trace event per line.
std::string trace_jsonl(const FlowInstance & instance);

/// Checks `v` against a declared type and returns it normalized (INTEGER
/// widened to FLOAT, record type names filled in). Throws E_TYPE_MISMATCH.
Value conform_to(const Value & v, const TypeRef & type, const DomainModel & model, const std::string & what);

struct EngineOptions
{
  /// Steps one start/resume may execute before the instance faults with
  /// E_STEP_LIMIT.
  std::uint64_t max_steps = 1'000'000;
  InvokeEnv invoke_env;
};

class Engine
{
public:
  /// Throws E_VALIDATION when the report carries errors.
  Engine(
    const ValidationReport & report, std::shared_ptr<DocumentStore> store,
    std::shared_ptr<const InvokerRegistry> invoker, EngineOptions options = {});

  const LinkedBundle & bundle() const { return *bundle_; }

  /// Seeds the base frame and runs until WAITING_IO, COMPLETED or FAULTED.
  FlowInstance start(const std::string & instance_id, const std::map<std::string, Value> & initial = {}) const;

  /// Throws E_STALE_REQUEST, E_MISSING_VARIABLE, E_UNKNOWN_VARIABLE or
  /// E_TYPE_MISMATCH and leaves the instance untouched; otherwise applies
  /// the answers and runs on.
  void resume(FlowInstance & instance, const std::string & request_id, const std::map<std::string, Value> & values) const;

  /// One step of a RUNNING instance.
  void execute_step(FlowInstance & instance) const;

  void run(FlowInstance & instance) const;

private:
  void run_activity(FlowInstance & inst, const Step & step, std::vector<std::string> & reads, std::vector<std::string> & writes) const;
  void advance(FlowInstance & inst, const std::string & from) const;
  void fault(FlowInstance & inst, std::string code, std::string message) const;

  std::shared_ptr<const LinkedBundle> bundle_;
  std::shared_ptr<DocumentStore> store_;
  std::shared_ptr<const InvokerRegistry> invoker_;
  EngineOptions options_;
};

/// Instance images under `<state-root>/instances/<id>.json`.
class InstanceStore
{
public:
  explicit InstanceStore(std::filesystem::path state_root);

  void save(const FlowInstance & instance) const;
  /// Throws E_NOT_FOUND or E_CORRUPT_IMAGE.
  FlowInstance load(const std::string & id) const;
  bool exists(const std::string & id) const;
  std::vector<std::string> list() const;

  const std::filesystem::path & dir() const { return dir_; }

private:
  std::filesystem::path dir_;
};

/// Random 16-hex-digit instance id.
std::string new_instance_id();

}  // namespace flowforge

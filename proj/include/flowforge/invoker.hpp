#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "flowforge/abr.hpp"
#include "flowforge/codec.hpp"
#include "flowforge/domain.hpp"
#include "flowforge/value.hpp"

namespace flowforge
{

/// Implementation-side view of one call. Concrete names are dotted paths
/// into the JSON document; for REST, path and query parameters are pulled
/// out as text.
struct ConcreteRequest
{
  json document = json::object();
  std::vector<std::pair<std::string, std::string>> path_params;
  std::vector<std::pair<std::string, std::string>> query_params;
};

struct InvokeEnv
{
  /// Relative fixture files and working directories resolve against this;
  /// defaults to the directory of the ABR file the binding came from.
  std::filesystem::path base_dir;
  /// When set, IMAGE values travel inline as base64.
  const BlobStore * blobs = nullptr;
};

/// Returns the response document. Throws Error on failure.
using Executor = std::function<json(const Implementation &, const ConcreteRequest &, const InvokeEnv &)>;

class InvokerRegistry
{
public:
  /// Throws E_DUPLICATE_KIND.
  void register_kind(const std::string & kind, Executor executor);
  bool has_kind(const std::string & kind) const;
  std::vector<std::string> kinds() const;

  /// Maps `inputs` (abstract names) to the concrete request, runs the
  /// executor for the binding's kind and decodes every OUT parameter.
  /// Throws E_UNBOUND (missing IN parameter), E_UNKNOWN_KIND, E_DECODE and
  /// whatever the executor throws (E_TIMEOUT, E_REMOTE_STATUS,
  /// E_PROCESS_EXIT, E_CONNECTION, ...).
  std::map<std::string, Value> invoke(
    const Implementation & binding, const ServiceDef & service, const DomainModel & model,
    const std::map<std::string, Value> & inputs, InvokeEnv env = {}) const;

private:
  mutable std::mutex mutex_;
  std::map<std::string, Executor> executors_;
};

/// Registry with REST, PROCESS and MOCK registered.
std::shared_ptr<InvokerRegistry> make_default_registry();

Executor rest_executor();
Executor process_executor();
Executor mock_executor();

/// Mock fixture: `{"cases": [{"request": {...}, "response": {...}}]}`; the
/// first case whose request equals the concrete request document answers.
/// Throws E_NO_FIXTURE_CASE.
json answer_from_fixture(const json & fixture, const json & request);

/// Reads `a.b.c` out of a JSON document; nullptr when absent.
const json * json_at(const json & doc, const std::string & dotted);
void json_put(json & doc, const std::string & dotted, json value);

}  // namespace flowforge

#include "flowforge/invoker.hpp"

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstring>
#include <fstream>
#include <sstream>

namespace flowforge
{

namespace fs = std::filesystem;

namespace
{

std::vector<std::string> split_dots(const std::string & dotted)
{
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const auto dot = dotted.find('.', start);
    out.push_back(dotted.substr(start, dot - start));
    if (dot == std::string::npos) return out;
    start = dot + 1;
  }
}

std::string as_text(const json & j) { return j.is_string() ? j.get<std::string>() : j.dump(); }

fs::path resolve(const fs::path & base, const std::string & p)
{
  fs::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

}  // namespace

const json * json_at(const json & doc, const std::string & dotted)
{
  const json * at = &doc;
  for (const auto & seg : split_dots(dotted)) {
    if (!at->is_object()) return nullptr;
    auto it = at->find(seg);
    if (it == at->end()) return nullptr;
    at = &*it;
  }
  return at;
}

void json_put(json & doc, const std::string & dotted, json value)
{
  json * at = &doc;
  for (const auto & seg : split_dots(dotted)) {
    if (!at->is_object()) *at = json::object();
    at = &(*at)[seg];
  }
  *at = std::move(value);
}

void InvokerRegistry::register_kind(const std::string & kind, Executor executor)
{
  std::lock_guard lock(mutex_);
  if (!executors_.emplace(kind, std::move(executor)).second) {
    throw Error("E_DUPLICATE_KIND", "implementation kind '" + kind + "' is already registered");
  }
}

bool InvokerRegistry::has_kind(const std::string & kind) const
{
  std::lock_guard lock(mutex_);
  return executors_.count(kind) > 0;
}

std::vector<std::string> InvokerRegistry::kinds() const
{
  std::lock_guard lock(mutex_);
  std::vector<std::string> out;
  for (const auto & [k, e] : executors_) out.push_back(k);
  return out;
}

std::map<std::string, Value> InvokerRegistry::invoke(
  const Implementation & binding, const ServiceDef & service, const DomainModel & model,
  const std::map<std::string, Value> & inputs, InvokeEnv env) const
{
  Executor exec;
  {
    std::lock_guard lock(mutex_);
    auto it = executors_.find(binding.kind());
    if (it == executors_.end()) {
      throw Error("E_UNKNOWN_KIND", "no executor is registered for implementation kind '" + binding.kind() + "'");
    }
    exec = it->second;
  }
  if (env.base_dir.empty() && !binding.span.file.empty()) env.base_dir = fs::path(binding.span.file).parent_path();

  WireOptions wire;
  wire.blobs = env.blobs;
  wire.inline_images = env.blobs != nullptr;

  ConcreteRequest req;
  for (const auto & p : service.inputs) {
    auto in = inputs.find(p.name);
    if (in == inputs.end()) {
      throw Error("E_UNBOUND", "input '" + p.name + "' of service '" + service.name + "' has no value");
    }
    const ServiceParameter * sp = nullptr;
    for (const auto & c : binding.parameters) {
      if (c.direction == Direction::In && c.abstract_name == p.name) sp = &c;
    }
    if (!sp) throw Error("E_UNBOUND", "binding of '" + service.name + "' does not map input '" + p.name + "'");
    json encoded = to_wire(in->second, wire);
    switch (sp->location) {
      case ParamLocation::Path: req.path_params.emplace_back(sp->concrete_name, as_text(encoded)); break;
      case ParamLocation::Query: req.query_params.emplace_back(sp->concrete_name, as_text(encoded)); break;
      case ParamLocation::Body: json_put(req.document, sp->concrete_name, std::move(encoded)); break;
    }
  }

  const json response = exec(binding, req, env);

  std::map<std::string, Value> outputs;
  for (const auto & p : service.outputs) {
    const ServiceParameter * sp = nullptr;
    for (const auto & c : binding.parameters) {
      if (c.direction == Direction::Out && c.abstract_name == p.name) sp = &c;
    }
    if (!sp) throw Error("E_UNBOUND", "binding of '" + service.name + "' does not map output '" + p.name + "'");
    const json * field = json_at(response, sp->concrete_name);
    if (!field) {
      throw Error("E_DECODE", "response of '" + service.name + "' lacks field '" + sp->concrete_name + "'");
    }
    outputs.emplace(p.name, from_wire(*field, p.type, model, wire));
  }
  return outputs;
}

// MOCK -----------------------------------------------------------------------

json answer_from_fixture(const json & fixture, const json & request)
{
  if (fixture.is_object() && fixture.contains("cases") && fixture["cases"].is_array()) {
    for (const auto & c : fixture["cases"]) {
      if (c.contains("request") && c["request"] == request) return c.value("response", json::object());
    }
  }
  throw Error("E_NO_FIXTURE_CASE", "no fixture case matches request " + request.dump());
}

Executor mock_executor()
{
  struct Cache
  {
    std::mutex mutex;
    std::map<std::string, std::shared_ptr<const json>> files;
  };
  auto cache = std::make_shared<Cache>();
  return [cache](const Implementation & impl, const ConcreteRequest & req, const InvokeEnv & env) {
    const auto & mock = std::get<MockImplementation>(impl.details);
    const auto file = resolve(env.base_dir, mock.fixture_file).lexically_normal().string();
    std::shared_ptr<const json> fixture;
    {
      std::lock_guard lock(cache->mutex);
      auto & slot = cache->files[file];
      if (!slot) {
        std::ifstream in(file, std::ios::binary);
        if (!in) throw Error("E_IO", "cannot read mock fixture " + file);
        try {
          slot = std::make_shared<const json>(json::parse(in));
        } catch (const json::exception & e) {
          throw Error("E_DECODE", "mock fixture " + file + ": " + e.what());
        }
      }
      fixture = slot;
    }
    json request = req.document;
    for (const auto & [k, v] : req.path_params) json_put(request, k, v);
    for (const auto & [k, v] : req.query_params) json_put(request, k, v);
    return answer_from_fixture(*fixture, request);
  };
}

// PROCESS --------------------------------------------------------------------

namespace
{

struct ProcessResult
{
  int status = 0;
  std::string out;
  std::string err;
};

void set_nonblocking(int fd) { ::fcntl(fd, F_SETFL, ::fcntl(fd, F_GETFL) | O_NONBLOCK); }

ProcessResult run_process(
  const std::string & command, const fs::path & workdir, const std::string & input, std::int64_t timeout_ms)
{
  int in_pipe[2], out_pipe[2], err_pipe[2];
  if (::pipe2(in_pipe, O_CLOEXEC) != 0) throw Error("E_IO", std::string("pipe: ") + std::strerror(errno));
  if (::pipe2(out_pipe, O_CLOEXEC) != 0) {
    ::close(in_pipe[0]);
    ::close(in_pipe[1]);
    throw Error("E_IO", std::string("pipe: ") + std::strerror(errno));
  }
  if (::pipe2(err_pipe, O_CLOEXEC) != 0) {
    for (int fd : {in_pipe[0], in_pipe[1], out_pipe[0], out_pipe[1]}) ::close(fd);
    throw Error("E_IO", std::string("pipe: ") + std::strerror(errno));
  }
  const std::string dir = workdir.string();
  const pid_t pid = ::fork();
  if (pid < 0) {
    for (int fd : {in_pipe[0], in_pipe[1], out_pipe[0], out_pipe[1], err_pipe[0], err_pipe[1]}) ::close(fd);
    throw Error("E_IO", std::string("fork: ") + std::strerror(errno));
  }
  if (pid == 0) {
    ::setpgid(0, 0);
    ::dup2(in_pipe[0], 0);
    ::dup2(out_pipe[1], 1);
    ::dup2(err_pipe[1], 2);
    if (!dir.empty() && ::chdir(dir.c_str()) != 0) ::_exit(126);
    ::execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char *>(nullptr));
    ::_exit(127);
  }
  ::close(in_pipe[0]);
  ::close(out_pipe[1]);
  ::close(err_pipe[1]);
  int to_child = in_pipe[1];
  const int from_child = out_pipe[0];
  const int errors = err_pipe[0];
  set_nonblocking(to_child);
  set_nonblocking(from_child);
  set_nonblocking(errors);

  ProcessResult r;
  std::size_t written = 0;
  bool out_open = true, err_open = true, timed_out = false;
  const auto deadline = std::chrono::steady_clock::now() + std::chrono::milliseconds(timeout_ms);
  if (input.empty()) {
    ::close(to_child);
    to_child = -1;
  }
  while (out_open || err_open) {
    const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
    if (left.count() <= 0) {
      timed_out = true;
      break;
    }
    pollfd fds[3];
    nfds_t n = 0;
    if (to_child >= 0) fds[n++] = {to_child, POLLOUT, 0};
    if (out_open) fds[n++] = {from_child, POLLIN, 0};
    if (err_open) fds[n++] = {errors, POLLIN, 0};
    const int ready = ::poll(fds, n, static_cast<int>(std::min<std::int64_t>(left.count(), 1000)));
    if (ready < 0 && errno != EINTR) break;
    for (nfds_t i = 0; i < n; ++i) {
      if (!fds[i].revents) continue;
      if (fds[i].fd == to_child) {
        const auto k = ::write(to_child, input.data() + written, input.size() - written);
        if (k > 0) written += static_cast<std::size_t>(k);
        if (k < 0 && errno != EAGAIN && errno != EINTR) written = input.size();  // child closed stdin
        if (written == input.size()) {
          ::close(to_child);
          to_child = -1;
        }
        continue;
      }
      char buf[65536];
      const auto k = ::read(fds[i].fd, buf, sizeof buf);
      if (k > 0) (fds[i].fd == from_child ? r.out : r.err).append(buf, static_cast<std::size_t>(k));
      else if (k == 0 || (errno != EAGAIN && errno != EINTR)) (fds[i].fd == from_child ? out_open : err_open) = false;
    }
  }
  if (to_child >= 0) ::close(to_child);
  ::close(from_child);
  ::close(errors);
  if (timed_out) ::kill(-pid, SIGKILL);
  int status = 0;
  while (::waitpid(pid, &status, 0) < 0 && errno == EINTR) {
  }
  if (timed_out) {
    throw Error("E_TIMEOUT", "process '" + command + "' did not finish within " + std::to_string(timeout_ms) + " ms");
  }
  r.status = WIFEXITED(status) ? WEXITSTATUS(status) : 128 + WTERMSIG(status);
  return r;
}

}  // namespace

Executor process_executor()
{
  // A child that exits early must not take us down through SIGPIPE.
  static std::once_flag ignore_sigpipe;
  std::call_once(ignore_sigpipe, [] { ::signal(SIGPIPE, SIG_IGN); });
  return [](const Implementation & impl, const ConcreteRequest & req, const InvokeEnv & env) {
    const auto & proc = std::get<ProcessImplementation>(impl.details);
    json request = req.document;
    for (const auto & [k, v] : req.path_params) json_put(request, k, v);
    for (const auto & [k, v] : req.query_params) json_put(request, k, v);
    const fs::path workdir = proc.working_dir.empty() ? env.base_dir : resolve(env.base_dir, proc.working_dir);
    auto r = run_process(proc.command_line, workdir, request.dump() + "\n", proc.timeout_ms);
    if (r.status != 0) {
      auto err = r.err.size() > 500 ? r.err.substr(r.err.size() - 500) : r.err;
      throw Error("E_PROCESS_EXIT",
                  "process '" + proc.command_line + "' exited with status " + std::to_string(r.status) +
                    (err.empty() ? "" : ": " + err));
    }
    try {
      return json::parse(r.out);
    } catch (const json::exception & e) {
      throw Error("E_DECODE", "process '" + proc.command_line + "' wrote invalid JSON: " + e.what());
    }
  };
}

std::shared_ptr<InvokerRegistry> make_default_registry()
{
  auto r = std::make_shared<InvokerRegistry>();
  r->register_kind("REST", rest_executor());
  r->register_kind("PROCESS", process_executor());
  r->register_kind("MOCK", mock_executor());
  return r;
}

}  // namespace flowforge

#include <httplib.h>

#include "flowforge/runtime.hpp"

namespace flowforge
{

namespace
{

void send_json(httplib::Response & res, int status, const json & body)
{
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response & res, const std::string & code, const std::string & message)
{
  send_json(res, http_status_for(code), {{"code", code}, {"message", message}});
}

json body_of(const httplib::Request & req)
{
  if (req.body.empty()) return json::object();
  try {
    return json::parse(req.body);
  } catch (const json::exception & e) {
    throw Error("E_BAD_REQUEST", std::string("request body is not JSON: ") + e.what());
  }
}

// Wraps a handler so Error and JSON failures become error responses.
template <typename F>
httplib::Server::Handler guarded(F f)
{
  return [f](const httplib::Request & req, httplib::Response & res) {
    try {
      f(req, res);
    } catch (const Error & e) {
      send_error(res, e.code(), e.what());
    } catch (const json::exception & e) {
      send_error(res, "E_BAD_REQUEST", e.what());
    } catch (const std::exception & e) {
      send_error(res, "E_INTERNAL", e.what());
    }
  };
}

}  // namespace

struct ApiServer::Impl
{
  Runtime & runtime;
  httplib::Server server;

  explicit Impl(Runtime & rt) : runtime(rt) { routes(); }

  void routes()
  {
    server.Post(R"(/flows/([^/]+)/instances)", guarded([this](const httplib::Request & req, httplib::Response & res) {
      const std::string flow = req.matches[1];
      if (flow != runtime.bundle().flow.name) {
        throw Error("E_UNKNOWN_FLOW", "this server runs flow '" + runtime.bundle().flow.name + "', not '" + flow + "'");
      }
      const json body = body_of(req);
      if (!body.is_object()) throw Error("E_BAD_REQUEST", "request body must be an object");
      const auto inst = runtime.start(body.value("input", json::object()));
      send_json(res, 201, instance_json(inst));
    }));
    server.Get("/instances", guarded([this](const httplib::Request &, httplib::Response & res) {
      json out = json::array();
      for (const auto & id : runtime.list()) {
        const auto inst = runtime.get(id);
        out.push_back({{"id", inst.id}, {"status", status_name(inst.status)}, {"position", inst.position}});
      }
      send_json(res, 200, out);
    }));
    server.Get(R"(/instances/([^/]+))", guarded([this](const httplib::Request & req, httplib::Response & res) {
      send_json(res, 200, instance_json(runtime.get(req.matches[1])));
    }));
    server.Get(R"(/instances/([^/]+)/io)", guarded([this](const httplib::Request & req, httplib::Response & res) {
      const auto inst = runtime.get(req.matches[1]);
      if (!inst.pending) {
        res.status = 204;
        return;
      }
      send_json(res, 200, io_request_json(*inst.pending));
    }));
    server.Post(R"(/instances/([^/]+)/io)", guarded([this](const httplib::Request & req, httplib::Response & res) {
      const json body = body_of(req);
      if (!body.is_object() || !body.contains("requestId") || !body["requestId"].is_string()) {
        throw Error("E_BAD_REQUEST", "body needs a \"requestId\" string");
      }
      const auto inst =
        runtime.answer(req.matches[1], body["requestId"].get<std::string>(), body.value("values", json::object()));
      send_json(res, 200, instance_json(inst));
    }));
    server.Get(R"(/instances/([^/]+)/trace)", guarded([this](const httplib::Request & req, httplib::Response & res) {
      const auto inst = runtime.get(req.matches[1]);
      json out = json::array();
      std::istringstream lines(trace_jsonl(inst));
      for (std::string line; std::getline(lines, line);) out.push_back(json::parse(line));
      send_json(res, 200, out);
    }));
  }
};

ApiServer::ApiServer(Runtime & runtime) : impl_(std::make_unique<Impl>(runtime)) {}

ApiServer::~ApiServer() { stop(); }

int ApiServer::bind(const std::string & host, int port)
{
  const int bound = port == 0 ? impl_->server.bind_to_any_port(host) : (impl_->server.bind_to_port(host, port) ? port : -1);
  if (bound < 0) throw Error("E_IO", "cannot listen on " + host + ":" + std::to_string(port));
  return bound;
}

void ApiServer::serve() { impl_->server.listen_after_bind(); }

void ApiServer::stop() { impl_->server.stop(); }

}  // namespace flowforge

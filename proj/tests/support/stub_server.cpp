#include "stub_server.hpp"

#include <httplib.h>

#include <fstream>
#include <thread>

#include "flowforge/invoker.hpp"

namespace ffgen
{

struct StubServer::Impl
{
  httplib::Server server;
  std::thread thread;
  int port = 0;
};

StubServer::StubServer(Handler handler) : impl_(std::make_unique<Impl>())
{
  auto serve = [handler](const httplib::Request & req, httplib::Response & res) {
    std::string query;
    for (const auto & [k, v] : req.params) query += (query.empty() ? "" : "&") + k + "=" + v;
    const auto out = handler({req.method, req.path, query, req.body, req.get_header_value("Content-Type")});
    if (out.delay_ms > 0) std::this_thread::sleep_for(std::chrono::milliseconds(out.delay_ms));
    res.status = out.status;
    res.set_content(out.body, "application/json");
  };
  const std::string any = R"(/.*)";
  impl_->server.Get(any, serve);
  impl_->server.Post(any, serve);
  impl_->server.Put(any, serve);
  impl_->server.Delete(any, serve);
  impl_->port = impl_->server.bind_to_any_port("127.0.0.1");
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
}

StubServer::~StubServer()
{
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

int StubServer::port() const { return impl_->port; }

StubServer::Handler markdown_handler(const std::string & fixture_path)
{
  std::ifstream in(fixture_path);
  auto fixture = std::make_shared<flowforge::json>(flowforge::json::parse(in));
  return [fixture](const StubRequest & req) -> StubResponse {
    if (req.method != "POST" || req.path != "/markdown") return {404, R"({"code":"E_NOT_FOUND"})"};
    try {
      return {200, flowforge::answer_from_fixture(*fixture, flowforge::json::parse(req.body)).dump()};
    } catch (const std::exception & e) {
      return {422, flowforge::json{{"message", e.what()}}.dump()};
    }
  };
}

HttpReply http_call(const std::string & origin, const std::string & method, const std::string & path, const std::string & body)
{
  httplib::Client cli(origin);
  cli.set_read_timeout(30, 0);
  httplib::Result res;
  if (method == "GET") res = cli.Get(path);
  else if (method == "POST") res = cli.Post(path, body, "application/json");
  else if (method == "DELETE") res = cli.Delete(path);
  if (!res) return {};
  return {res->status, res->body};
}

}  // namespace ffgen

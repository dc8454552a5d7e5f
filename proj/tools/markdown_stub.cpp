// Canned ProcessMarkdown: answers from a mock fixture file, either once over
// stdin/stdout (process bindings) or as an HTTP server (REST bindings).

#include <httplib.h>

#include <CLI11.hpp>
#include <fstream>
#include <iostream>

#include "flowforge/invoker.hpp"

using flowforge::json;

int main(int argc, char ** argv)
{
  CLI::App app{"Canned markdown renderer"};
  std::string fixture_path;
  bool stdio = false;
  int port = 8089;
  std::string host = "127.0.0.1";
  app.add_option("--fixture", fixture_path, "Mock fixture with request/response cases")->required();
  app.add_flag("--stdio", stdio, "Answer one request from stdin and exit");
  app.add_option("--port", port, "HTTP port; 0 picks a free one");
  app.add_option("--host", host, "HTTP bind address");
  CLI11_PARSE(app, argc, argv);

  json fixture;
  try {
    std::ifstream in(fixture_path);
    fixture = json::parse(in);
  } catch (const std::exception & e) {
    std::cerr << "cannot load " << fixture_path << ": " << e.what() << "\n";
    return 2;
  }

  if (stdio) {
    try {
      const json request = json::parse(std::cin);
      std::cout << flowforge::answer_from_fixture(fixture, request).dump() << "\n";
      return 0;
    } catch (const std::exception & e) {
      std::cerr << e.what() << "\n";
      return 1;
    }
  }

  httplib::Server server;
  server.Post("/markdown", [&](const httplib::Request & req, httplib::Response & res) {
    try {
      const auto answer = flowforge::answer_from_fixture(fixture, json::parse(req.body));
      res.set_content(answer.dump(), "application/json");
    } catch (const std::exception & e) {
      res.status = 422;
      res.set_content(json{{"code", "E_NO_FIXTURE_CASE"}, {"message", e.what()}}.dump(), "application/json");
    }
  });
  if (port == 0) port = server.bind_to_any_port(host);
  else if (!server.bind_to_port(host, port)) port = -1;
  if (port < 0) {
    std::cerr << "cannot bind " << host << "\n";
    return 2;
  }
  std::cout << "listening on " << host << ":" << port << std::endl;
  server.listen_after_bind();
  return 0;
}

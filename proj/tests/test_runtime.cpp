#include <doctest.h>

#include <cstdlib>
#include <thread>

#include "conduit.hpp"
#include "files.hpp"
#include "stub_server.hpp"

using namespace flowforge;

namespace
{

const std::string kSlug = "markdown-in-practice";

std::string code_of(const std::function<void()> & f)
{
  try {
    f();
  } catch (const Error & e) {
    return e.code();
  }
  return "ok";
}

std::string snapshot_of(const FlowInstance & inst) { return inst.dataflow.snapshot(); }

// Final data-flow of the session with the given binding file.
std::string final_snapshot(const std::vector<std::filesystem::path> & paths)
{
  ffgen::TempDir state;
  auto run = ffgen::conduit_cli_run(paths, state.path(), kSlug);
  REQUIRE(run.instance.status == InstanceStatus::Completed);
  return snapshot_of(run.instance);
}

}  // namespace

TEST_CASE("IO scripts")
{
  auto s = parse_io_script(json::parse(R"([{"io":"A","values":{"x":1}},{"io":"B"}])"));
  REQUIRE(s.size() == 2);
  CHECK(s[0].values == json{{"x", 1}});
  CHECK(s[1].values == json::object());
  CHECK(code_of([] { parse_io_script(json::object()); }) == "E_BAD_SCRIPT");
  CHECK(code_of([] { parse_io_script(json::parse(R"([{"values":{}}])")); }) == "E_BAD_SCRIPT");
  CHECK(code_of([] { parse_io_script(json::parse(R"([{"io":"A","values":[]}])")); }) == "E_BAD_SCRIPT");
}

TEST_CASE("conduit end to end through cli_run")
{
  ffgen::TempDir state;
  auto run = ffgen::conduit_cli_run(ffgen::conduit_paths(), state.path(), kSlug);
  const auto & inst = run.instance;
  CHECK(inst.status == InstanceStatus::Completed);
  CHECK(run.elapsed.count() < 5.0);
  REQUIRE(run.requests.size() == 3);
  const auto & last = run.requests.back();
  const auto articles = ffgen::conduit_articles();
  CHECK(last.published.at("html") == Value(ffgen::rendered_html(articles[1]["body"])));
  CHECK(last.published.at("article").as<Record>().fields.at("slug") == Value(kSlug));
  CHECK(inst.times_entered("GetArticles") == 2);

  // The instance image on disk is the final state.
  Runtime reopened(load_bundle(ffgen::conduit_paths()), state.path());
  CHECK(reopened.get(inst.id) == inst);
  CHECK(reopened.list() == std::vector<std::string>{inst.id});
  CHECK(reopened.store().size("Article") == 3);
}

TEST_CASE("scripted runs report script problems")
{
  ffgen::TempDir state;
  const auto paths = ffgen::conduit_paths();
  ffgen::seed_conduit(state.path(), *load_bundle(paths).bundle);
  auto short_script = ffgen::conduit_session(kSlug);
  short_script.pop_back();
  try {
    cli_run(paths, "", state.path(), json::object(), short_script);
    FAIL("ran out of answers without noticing");
  } catch (const Error & e) {
    CHECK(e.code() == "E_SCRIPT_EXHAUSTED");
    CHECK(std::string(e.what()).find("ArticleIO#2") != std::string::npos);
  }
  ffgen::TempDir state2;
  auto wrong = ffgen::conduit_session(kSlug);
  wrong[0].io = "CommentIO";
  CHECK(code_of([&] { cli_run(paths, "", state2.path(), json::object(), wrong); }) == "E_SCRIPT_MISMATCH");
  ffgen::TempDir state3;
  auto bad = ffgen::conduit_session(kSlug);
  bad[0].values["action"] = 3;
  CHECK(code_of([&] { cli_run(paths, "", state3.path(), json::object(), bad); }) == "E_DECODE");
  CHECK(code_of([&] { cli_run(paths, "Nope", state3.path(), json::object(), {}); }) == "E_VALIDATION");
}

TEST_CASE("restarting at any suspension changes nothing")
{
  const auto paths = ffgen::conduit_paths();
  ffgen::TempDir ref_state;
  const auto reference = ffgen::conduit_restarting_run(paths, ref_state.path(), kSlug, {});
  REQUIRE(reference.status == InstanceStatus::Completed);
  const std::vector<std::set<int>> plans = {{1}, {2}, {3}, {1, 2, 3}};
  for (const auto & plan : plans) {
    ffgen::TempDir state;
    const auto inst = ffgen::conduit_restarting_run(paths, state.path(), kSlug, plan);
    CHECK(inst.status == InstanceStatus::Completed);
    CHECK(snapshot_of(inst) == snapshot_of(reference));
  }
}

TEST_CASE("the binding kind does not show in the result")
{
  ::setenv("FF_MARKDOWN_STUB", FF_MARKDOWN_STUB, 1);
  ffgen::StubServer md(ffgen::markdown_handler(ffgen::fixture("conduit/markdown_cases.json").string()));
  ffgen::TempDir abr_dir;
  const auto mock = final_snapshot(ffgen::conduit_paths("conduit_mock.abr"));
  const auto process = final_snapshot(ffgen::conduit_paths("conduit_process.abr"));
  auto rest_paths = ffgen::conduit_paths();
  rest_paths[1] = ffgen::conduit_rest_abr(abr_dir.path(), md.origin());
  const auto rest = final_snapshot(rest_paths);
  CHECK(mock == process);
  CHECK(mock == rest);
}

TEST_CASE("HTTP and CLI runs agree")
{
  const auto paths = ffgen::conduit_paths();
  ffgen::TempDir a, b;
  const auto cli = ffgen::conduit_cli_run(paths, a.path(), kSlug);
  const auto view = ffgen::conduit_http_run(paths, b.path(), kSlug);
  CHECK(view["status"] == "COMPLETED");
  CHECK(view["dataflow"] == json::parse(snapshot_of(cli.instance)));
}

TEST_CASE("HTTP API")
{
  ffgen::TempDir state;
  const auto report = load_bundle(ffgen::conduit_paths());
  ffgen::seed_conduit(state.path(), *report.bundle);
  Runtime runtime(report, state.path());
  ApiServer server(runtime);
  const int port = server.bind("127.0.0.1", 0);
  struct Serving
  {
    ApiServer & server;
    std::thread thread{[this] { server.serve(); }};
    ~Serving()
    {
      server.stop();
      thread.join();
    }
  } serving{server};
  const std::string origin = "http://127.0.0.1:" + std::to_string(port);
  auto call = [&](const std::string & method, const std::string & path, const std::string & body = {}) {
    return ffgen::http_call(origin, method, path, body);
  };
  auto code = [](const ffgen::HttpReply & r) { return json::parse(r.body).value("code", ""); };

  auto r = call("POST", "/flows/ArticleFlow/instances", "{}");
  REQUIRE(r.status == 201);
  const auto view = json::parse(r.body);
  const std::string id = view["id"];
  CHECK(view["status"] == "WAITING_IO");
  CHECK(view["pending"]["published"]["articles"].size() == 3);

  r = call("GET", "/instances");
  CHECK(json::parse(r.body) == json::array({{{"id", id}, {"status", "WAITING_IO"}, {"position", "ShowArticleList"}}}));

  r = call("GET", "/instances/" + id + "/io");
  REQUIRE(r.status == 200);
  const std::string request_id = json::parse(r.body)["requestId"];

  r = call("POST", "/flows/Other/instances", "{}");
  CHECK(r.status == 404);
  CHECK(code(r) == "E_UNKNOWN_FLOW");
  r = call("GET", "/instances/nope");
  CHECK(r.status == 404);
  r = call("POST", "/instances/" + id + "/io", "not json");
  CHECK(r.status == 400);
  r = call("POST", "/instances/" + id + "/io", json{{"requestId", "old"}, {"values", json::object()}}.dump());
  CHECK(r.status == 409);
  CHECK(code(r) == "E_STALE_REQUEST");
  r = call("POST", "/instances/" + id + "/io",
           json{{"requestId", request_id}, {"values", {{"action", 1}, {"selectedSlug", ""}}}}.dump());
  CHECK(r.status == 422);
  r = call("POST", "/instances/" + id + "/io", json{{"requestId", request_id}, {"values", {{"action", "page"}}}}.dump());
  CHECK(r.status == 422);
  CHECK(code(r) == "E_MISSING_VARIABLE");
  r = call("POST", "/instances/" + id + "/io",
           json{{"requestId", request_id}, {"values", {{"action", "page"}, {"selectedSlug", ""}, {"x", 1}}}}.dump());
  CHECK(code(r) == "E_UNKNOWN_VARIABLE");

  r = call("POST", "/instances/" + id + "/io",
           json{{"requestId", request_id}, {"values", {{"action", "select"}, {"selectedSlug", "flows-without-code"}}}}.dump());
  REQUIRE(r.status == 200);
  r = call("GET", "/instances/" + id + "/io");
  const auto req = json::parse(r.body);
  CHECK(req["io"] == "ArticleIO");
  CHECK(req["published"]["article"]["slug"] == "flows-without-code");
  r = call("POST", "/instances/" + id + "/io", json{{"requestId", req["requestId"]}}.dump());
  REQUIRE(r.status == 200);
  CHECK(json::parse(r.body)["status"] == "COMPLETED");
  r = call("GET", "/instances/" + id + "/io");
  CHECK(r.status == 204);
  r = call("GET", "/instances/" + id + "/trace");
  const auto trace = json::parse(r.body);
  CHECK(trace.back()["event"] == "completed");
}

#include <doctest.h>

#include <random>

#include "conduit.hpp"
#include "files.hpp"
#include "flowforge/dsl.hpp"
#include "flowforge/engine.hpp"

using namespace flowforge;

namespace
{

const char * const kScriptDomain = "domain S {\n}\n";
const char * const kEmptyAbr = "bindings B for S {\n}\n";

ValidationReport build(const std::string & domain, const std::string & abr, const std::string & flow)
{
  auto d = parse_domain(domain, "t.domain");
  AbrParseOptions opts;
  opts.accept_any_kind = true;
  auto a = parse_abr(abr, (ffgen::fixture("conduit") / "t.abr").string(), opts);
  auto f = parse_flow(flow, "t.flow");
  REQUIRE(d.ok());
  REQUIRE(a.ok());
  REQUIRE_MESSAGE(f.ok(), (f.diagnostics.empty() ? "" : format_diagnostic(f.diagnostics[0])));
  auto r = validate({*d.model}, {*a.model}, *f.model);
  std::string diags;
  for (const auto & x : r.diagnostics) diags += format_diagnostic(x) + "\n";
  REQUIRE_MESSAGE(r.ok(), diags);
  return r;
}

struct Harness
{
  ffgen::TempDir dir;
  std::shared_ptr<JsonLinesStore> store;
  std::unique_ptr<Engine> engine;

  explicit Harness(const ValidationReport & r)
  {
    store = std::make_shared<JsonLinesStore>(dir.path() / "store", r.bundle->schemas);
    engine = std::make_unique<Engine>(r, store, make_default_registry());
  }

  static Harness scripts(const std::string & flow) { return Harness(build(kScriptDomain, kEmptyAbr, flow)); }
};

ValidationReport conduit(const std::string & flow_text = {})
{
  if (flow_text.empty()) return load_bundle(ffgen::conduit_paths());
  const auto dom = ffgen::read_file(ffgen::fixture("conduit/conduit.domain"));
  const auto abr = ffgen::read_file(ffgen::fixture("conduit/conduit_mock.abr"));
  return build(dom, abr, flow_text);
}

Value ints(std::int64_t n)
{
  List xs;
  for (std::int64_t i = 0; i < n; ++i) xs.push_back(Value(i * 7 + 3));
  return Value(std::move(xs));
}

std::string code_of(const std::function<void()> & f)
{
  try {
    f();
  } catch (const Error & e) {
    return e.code();
  }
  return "ok";
}

std::map<std::string, Value> answer(const std::string & action, const std::string & slug)
{
  return {{"action", Value(action)}, {"selectedSlug", Value(slug)}};
}

// Drives the conduit session; `visit` sees the instance at each suspension.
FlowInstance drive_conduit(const Engine & engine, const std::string & slug, const std::function<void(FlowInstance &)> & visit = {})
{
  FlowInstance inst = engine.start("c1");
  const std::vector<std::map<std::string, Value>> answers = {answer("page", ""), answer("select", slug), {}};
  for (const auto & a : answers) {
    if (inst.status != InstanceStatus::WaitingIo) break;
    if (visit) visit(inst);
    engine.resume(inst, inst.pending->request_id, a);
  }
  return inst;
}

void seed(JsonLinesStore & store, const LinkedBundle & bundle) { seed_store(store, bundle, "Article", ffgen::conduit_articles()); }

}  // namespace

TEST_CASE("a single script runs to completion")
{
  auto h = Harness::scripts("flow F uses S {\n script A { let x = 1 }\n}\n");
  auto inst = h.engine->start("i");
  CHECK(inst.status == InstanceStatus::Completed);
  CHECK(inst.dataflow.read(Path({"x"})) == Value(std::int64_t{1}));
  CHECK(inst.times_entered("A") == 1);
  CHECK(inst.trace.back().event == "completed");
}

TEST_CASE("the engine refuses an invalid bundle")
{
  auto d = parse_domain(kScriptDomain);
  auto f = parse_flow("flow F uses S {\n script A { let x = y }\n}\n");
  auto r = validate({*d.model}, {}, *f.model);
  REQUIRE_FALSE(r.ok());
  CHECK(code_of([&] { Engine e(r, nullptr, make_default_registry()); }) == "E_VALIDATION");
}

TEST_CASE("counting loop yields n and visits every index once")
{
  auto r = build(
    kScriptDomain, kEmptyAbr,
    "flow F uses S {\n input xs: set INTEGER\n var count: INTEGER\n var seen: set INTEGER\n"
    " script Init { let count = 0\n let seen = [] }\n"
    " loop Each over xs as x {\n  script Count { count = count + 1\n append seen <- x_index }\n }\n"
    " Init -> Each\n}\n");
  Harness h(r);
  std::mt19937_64 rng(20261015);
  std::vector<std::int64_t> sizes = {0, 1, 2, 50};
  for (int i = 0; i < 60; ++i) sizes.push_back(std::uniform_int_distribution<std::int64_t>(0, 50)(rng));
  for (const auto n : sizes) {
    INFO("n = " << n);
    auto inst = h.engine->start("i", {{"xs", ints(n)}});
    REQUIRE(inst.status == InstanceStatus::Completed);
    CHECK(inst.dataflow.read(Path({"count"})) == Value(n));
    List expected;
    for (std::int64_t k = 0; k < n; ++k) expected.push_back(Value(k));
    CHECK(inst.dataflow.read(Path({"seen"})) == Value(expected));
    CHECK(inst.times_entered("Count") == static_cast<std::size_t>(n));
    CHECK(inst.loops.empty());
    CHECK_FALSE(inst.dataflow.try_read(Path({"x"})));
  }
}

TEST_CASE("nested loops run the product of their sizes")
{
  auto r = build(
    kScriptDomain, kEmptyAbr,
    "flow F uses S {\n input xs: set INTEGER\n input ys: set INTEGER\n var count: INTEGER\n var pairs: set INTEGER\n"
    " script Init { let count = 0\n let pairs = [] }\n"
    " loop Outer over xs as x {\n  loop Inner over ys as y {\n"
    "   script Count { count = count + 1\n append pairs <- x_index * 100 + y_index }\n  }\n }\n"
    " Init -> Outer\n}\n");
  Harness h(r);
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<std::int64_t> size(0, 8);
  for (int trial = 0; trial < 40; ++trial) {
    const auto a = size(rng), b = size(rng);
    INFO(a << " x " << b);
    auto inst = h.engine->start("i", {{"xs", ints(a)}, {"ys", ints(b)}});
    REQUIRE(inst.status == InstanceStatus::Completed);
    CHECK(inst.dataflow.read(Path({"count"})) == Value(a * b));
    List expected;
    for (std::int64_t i = 0; i < a; ++i) {
      for (std::int64_t j = 0; j < b; ++j) expected.push_back(Value(i * 100 + j));
    }
    CHECK(inst.dataflow.read(Path({"pairs"})) == Value(expected));
  }
}

TEST_CASE("an empty set skips the loop body")
{
  auto h = Harness::scripts(
    "flow F uses S {\n input xs: set INTEGER\n var hit: BOOLEAN\n script Init { let hit = false }\n"
    " loop Each over xs as x {\n  script Body { hit = true }\n }\n script After { let done = true }\n"
    " Init -> Each\n Each_end -> After\n}\n");
  auto inst = h.engine->start("i", {{"xs", ints(0)}});
  REQUIRE(inst.status == InstanceStatus::Completed);
  CHECK(inst.dataflow.read(Path({"hit"})) == Value(false));
  CHECK(inst.times_entered("Body") == 0);
  CHECK(inst.times_entered("After") == 1);
  CHECK(std::any_of(inst.trace.begin(), inst.trace.end(), [](const TraceEvent & e) { return e.event == "loop_skip"; }));
}

TEST_CASE("transitions: the first true condition wins, else the default")
{
  const std::string flow =
    "flow F uses S {\n input n: INTEGER\n script A { let m = n }\n script Big { let r = \"big\" }\n"
    " script Mid { let r = \"mid\" }\n script Other { let r = \"other\" }\n"
    " A -> Big when m > 10\n A -> Mid when m > 2\n A -> Other\n}\n";
  auto h = Harness::scripts(flow);
  auto r_of = [&](std::int64_t n) { return h.engine->start("i", {{"n", Value(n)}}).dataflow.read(Path({"r"})); };
  CHECK(r_of(11) == Value("big"));
  CHECK(r_of(3) == Value("mid"));
  CHECK(r_of(1) == Value("other"));

  auto strict = Harness::scripts(
    "flow F uses S {\n input n: INTEGER\n script A { let m = n }\n script B { let r = 1 }\n A -> B when m > 5\n}\n");
  auto inst = strict.engine->start("i", {{"n", Value(std::int64_t{1})}});
  CHECK(inst.status == InstanceStatus::Faulted);
  REQUIRE(inst.fault);
  CHECK(inst.fault->code == "E_NO_TRANSITION");
  CHECK(inst.fault->step == "A");
}

TEST_CASE("a step budget stops runaway cycles")
{
  auto r = build(
    kScriptDomain, kEmptyAbr,
    "flow F uses S {\n script Init { let n = 0 }\n script Spin { n = n + 1 }\n Init -> Spin\n Spin -> Spin\n}\n");
  ffgen::TempDir dir;
  EngineOptions opts;
  opts.max_steps = 500;
  Engine e(r, std::make_shared<JsonLinesStore>(dir.path(), r.bundle->schemas), make_default_registry(), opts);
  auto inst = e.start("i");
  CHECK(inst.status == InstanceStatus::Faulted);
  CHECK(inst.fault->code == "E_STEP_LIMIT");
}

TEST_CASE("initial values are checked against declarations")
{
  auto h = Harness::scripts("flow F uses S {\n input n: FLOAT\n script A { let m = n }\n}\n");
  CHECK(h.engine->start("i", {{"n", Value(std::int64_t{2})}}).dataflow.read(Path({"m"})) == Value(2.0));
  CHECK(code_of([&] { h.engine->start("i", {{"n", Value("two")}}); }) == "E_TYPE_MISMATCH");
  CHECK(code_of([&] { h.engine->start("i", {{"k", Value(1.0)}}); }) == "E_UNKNOWN_VARIABLE");
}

TEST_CASE("conduit on an empty store stops at the article list")
{
  auto r = conduit();
  Harness h(r);
  auto inst = h.engine->start("c1");
  REQUIRE(inst.status == InstanceStatus::WaitingIo);
  CHECK(inst.position == "ShowArticleList");
  REQUIRE(inst.pending);
  CHECK(inst.pending->io == "ArticleIO");
  CHECK(inst.pending->request_id == "c1-io-1");
  CHECK(inst.pending->published.at("articles") == Value(List{}));
  CHECK(inst.pending->expected ==
        std::vector<ExpectedVariable>{{"action", TypeRef::basic(BasicType::String)}, {"selectedSlug", TypeRef::basic(BasicType::String)}});

  // Selecting anything from the empty list finds nothing.
  h.engine->resume(inst, "c1-io-1", answer("select", "nope"));
  CHECK(inst.status == InstanceStatus::Faulted);
  CHECK(inst.fault->code == "E_NOT_FOUND");
  CHECK(inst.fault->step == "GetArticleDetails");
}

TEST_CASE("conduit session over a seeded store")
{
  auto r = conduit();
  Harness h(r);
  seed(*h.store, *r.bundle);
  const auto articles = ffgen::conduit_articles();
  const std::string slug = articles[1]["slug"];
  auto inst = drive_conduit(*h.engine, slug, [&](FlowInstance & i) {
    if (i.io_count == 3) {
      const auto & art = i.pending->published.at("article").as<Record>();
      CHECK(art.fields.at("slug") == Value(slug));
      CHECK(i.pending->published.at("html") == Value(ffgen::rendered_html(articles[1]["body"])));
      CHECK(i.pending->expected.empty());
    } else {
      CHECK(i.pending->published.at("articles").as<List>().size() == 3);
    }
  });
  CHECK(inst.status == InstanceStatus::Completed);
  CHECK(inst.times_entered("GetArticles") == 2);
  CHECK(inst.times_entered("ShowArticleList") == 2);
  CHECK(inst.times_entered("ShowArticle") == 1);
  CHECK(inst.io_count == 3);
}

TEST_CASE("endpoint overwrites replace what the IO would ask")
{
  auto flow = ffgen::read_file(ffgen::fixture("conduit/conduit.flow"));
  const std::string from = "step ShowArticleList = activity ShowArticleList";
  flow.replace(flow.find(from), from.size(), from + " overwrite action = \"select\"");
  auto r = conduit(flow);
  Harness h(r);
  seed(*h.store, *r.bundle);
  auto inst = h.engine->start("c1");
  REQUIRE(inst.status == InstanceStatus::WaitingIo);
  CHECK(inst.pending->expected == std::vector<ExpectedVariable>{{"selectedSlug", TypeRef::basic(BasicType::String)}});
  CHECK(code_of([&] { h.engine->resume(inst, "c1-io-1", answer("page", "x")); }) == "E_UNKNOWN_VARIABLE");
  h.engine->resume(inst, "c1-io-1", {{"selectedSlug", Value("flows-without-code")}});
  REQUIRE(inst.status == InstanceStatus::WaitingIo);
  CHECK(inst.position == "ShowArticle");
  CHECK(inst.dataflow.read(Path({"action"})) == Value("select"));
}

TEST_CASE("bad answers leave the instance untouched")
{
  auto r = conduit();
  Harness h(r);
  seed(*h.store, *r.bundle);
  auto inst = h.engine->start("c1");
  REQUIRE(inst.status == InstanceStatus::WaitingIo);
  const FlowInstance before = inst;
  auto bad = [&](const std::string & id, std::map<std::string, Value> values) {
    return code_of([&] { h.engine->resume(inst, id, values); });
  };
  CHECK(bad("c1-io-9", answer("page", "")) == "E_STALE_REQUEST");
  CHECK(bad("c1-io-1", {{"action", Value("page")}}) == "E_MISSING_VARIABLE");
  auto extra = answer("page", "");
  extra["title"] = Value("t");
  CHECK(bad("c1-io-1", extra) == "E_UNKNOWN_VARIABLE");
  CHECK(bad("c1-io-1", {{"action", Value(std::int64_t{1})}, {"selectedSlug", Value("")}}) == "E_TYPE_MISMATCH");
  CHECK(inst == before);

  auto done = drive_conduit(*h.engine, "flows-without-code");
  CHECK(code_of([&] { h.engine->resume(done, "c1-io-3", {}); }) == "E_STALE_REQUEST");
}

TEST_CASE("instance images round-trip at every suspension")
{
  auto r = conduit();
  Harness h(r);
  seed(*h.store, *r.bundle);
  int seen = 0;
  auto inst = drive_conduit(*h.engine, "how-to-train-your-dragon", [&](FlowInstance & i) {
    const auto image = persist_instance(i);
    CHECK(load_instance(image) == i);
    CHECK(persist_instance(load_instance(image)) == image);
    ++seen;
  });
  CHECK(seen == 3);
  CHECK(load_instance(persist_instance(inst)) == inst);

  CHECK(code_of([] { load_instance("{"); }) == "E_CORRUPT_IMAGE");
  CHECK(code_of([] { load_instance("[]"); }) == "E_CORRUPT_IMAGE");
  auto j = json::parse(persist_instance(inst));
  j["status"] = "WAITING_IO";
  CHECK(code_of([&] { load_instance(j.dump()); }) == "E_CORRUPT_IMAGE");
  j = json::parse(persist_instance(inst));
  j["dataflow"] = "nonsense";
  CHECK(code_of([&] { load_instance(j.dump()); }) == "E_CORRUPT_IMAGE");
}

TEST_CASE("instance store")
{
  ffgen::TempDir dir;
  InstanceStore s(dir.path());
  auto h = Harness::scripts("flow F uses S {\n script A { let x = 1 }\n}\n");
  auto inst = h.engine->start("abc-1");
  s.save(inst);
  CHECK(s.exists("abc-1"));
  CHECK(s.load("abc-1") == inst);
  CHECK(s.list() == std::vector<std::string>{"abc-1"});
  CHECK(code_of([&] { s.load("zzz"); }) == "E_NOT_FOUND");
  CHECK(code_of([&] { s.load("../x"); }) == "E_NOT_FOUND");
  inst.id = "../escape";
  CHECK(code_of([&] { s.save(inst); }) == "E_BAD_ID");
  const auto a = new_instance_id(), b = new_instance_id();
  CHECK(a.size() == 16);
  CHECK(a != b);
}

TEST_CASE("replaying the same answers is deterministic")
{
  auto r = conduit();
  std::vector<FlowInstance> runs;
  for (int i = 0; i < 2; ++i) {
    Harness h(r);
    seed(*h.store, *r.bundle);
    runs.push_back(drive_conduit(*h.engine, "markdown-in-practice"));
  }
  CHECK(runs[0] == runs[1]);
  CHECK(trace_jsonl(runs[0]) == trace_jsonl(runs[1]));
}

TEST_CASE("every traced read was written before")
{
  auto r = conduit();
  Harness h(r);
  seed(*h.store, *r.bundle);
  auto inst = drive_conduit(*h.engine, "markdown-in-practice");
  REQUIRE(inst.status == InstanceStatus::Completed);
  std::set<std::string> written;
  for (const auto & e : inst.trace) {
    for (const auto & root : e.reads) {
      INFO(e.event << " " << e.step << " reads " << root);
      CHECK(written.count(root) == 1);
    }
    written.insert(e.writes.begin(), e.writes.end());
  }
  CHECK(written.count("articleHtml") == 1);
}

TEST_CASE("store writes ids back and updates in place")
{
  const std::string dom =
    "domain S {\n type Note {\n  text: STRING\n  n: INTEGER\n }\n}\n";
  auto r = build(
    dom, kEmptyAbr,
    "flow F uses S {\n input note: Note\n store Save1 { vars note }\n"
    " script Bump { note.n = note.n + 1 }\n store Save2 { vars note }\n"
    " retrieve Load {\n  target all\n  type Note\n  set true\n }\n"
    " delete Drop {\n  type Note\n  where n >= 2\n }\n"
    " Save1 -> Bump\n Bump -> Save2\n Save2 -> Load\n Load -> Drop\n}\n");
  Harness h(r);
  Record note;
  note.fields = {{"text", Value("a")}, {"n", Value(std::int64_t{1})}};
  auto inst = h.engine->start("i", {{"note", Value(note)}});
  INFO(trace_jsonl(inst));
  REQUIRE(inst.status == InstanceStatus::Completed);
  const auto & all = inst.dataflow.read(Path({"all"})).as<List>();
  REQUIRE(all.size() == 1);
  CHECK(all[0].as<Record>().fields.at("n") == Value(std::int64_t{2}));
  CHECK(all[0].as<Record>().fields.at(std::string(kIdField)) == Value(std::int64_t{1}));
  CHECK(h.store->size("Note") == 0);
}

// Acceptance run: one PASS/FAIL line per criterion, exit status 0 only when
// every line passes. Thresholds are fixed here, not taken from the command
// line.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>

#include "conduit.hpp"
#include "files.hpp"
#include "flowforge/dsl.hpp"
#include "gen.hpp"
#include "store_oracle.hpp"
#include "stub_server.hpp"

using namespace flowforge;
namespace fs = std::filesystem;

namespace
{

constexpr double kMaxConduitSeconds = 5.0;
constexpr int kRoundTripModels = 200;
constexpr int kFuzzInputs = 100000;
constexpr std::size_t kMinDefects = 15;
constexpr int kStoreTrials = 500;
constexpr int kLoopTrials = 200;
constexpr std::int64_t kMaxLoopSize = 50;
constexpr int kNestedTrials = 100;
const std::string kSlug = "markdown-in-practice";

struct Outcome
{
  bool pass = false;
  std::string detail;
};

Outcome fail(std::string why) { return {false, std::move(why)}; }

std::set<std::string> error_codes(const ValidationReport & r)
{
  std::set<std::string> out;
  for (const auto & d : r.diagnostics) {
    if (d.severity == Severity::Error) out.insert(d.code);
  }
  return out;
}

std::string join(const std::set<std::string> & xs)
{
  std::string s;
  for (const auto & x : xs) s += (s.empty() ? "" : ",") + x;
  return s.empty() ? "none" : s;
}

Outcome conduit_end_to_end()
{
  const auto t0 = std::chrono::steady_clock::now();
  const auto paths = ffgen::conduit_paths();
  const auto report = load_bundle(paths);
  if (!error_codes(report).empty()) return fail("fixture has errors: " + join(error_codes(report)));
  ffgen::TempDir state;
  ffgen::seed_conduit(state.path(), *report.bundle);
  const auto run = cli_run(paths, "", state.path(), json::object(), ffgen::conduit_session(kSlug));
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const auto & inst = run.instance;
  if (inst.status != InstanceStatus::Completed) {
    return fail(std::string("final state ") + std::string(status_name(inst.status)) + (inst.fault ? " " + inst.fault->code : ""));
  }
  if (run.requests.size() != 3) return fail(std::to_string(run.requests.size()) + " IO requests, expected 3");
  std::string body;
  for (const auto & a : ffgen::conduit_articles()) {
    if (a["slug"] == kSlug) body = a["body"];
  }
  const auto & published = run.requests.back().published;
  auto html = published.find("html");
  if (html == published.end() || !(html->second == Value(ffgen::rendered_html(body)))) {
    return fail("last IO does not publish the rendered body");
  }
  const auto fetches = inst.times_entered("GetArticles");
  if (fetches != 2) return fail("GetArticles ran " + std::to_string(fetches) + " times");
  if (seconds >= kMaxConduitSeconds) return fail("took " + std::to_string(seconds) + " s");
  std::ostringstream d;
  d << "COMPLETED, 3 IO requests, GetArticles x2, " << seconds << " s";
  return {true, d.str()};
}

Outcome parser_round_trip()
{
  ffgen::Gen gen(0xACCE);
  AbrParseOptions any;
  any.accept_any_kind = true;
  for (int i = 0; i < kRoundTripModels; ++i) {
    auto d = gen.domain();
    auto dr = parse_domain(print_domain(d));
    if (!dr.ok() || !(*dr.model == d)) return fail("domain model #" + std::to_string(i) + " does not round-trip");
    auto a = gen.abr();
    auto ar = parse_abr(print_abr(a), "", any);
    if (!ar.ok() || !(*ar.model == a)) return fail("binding model #" + std::to_string(i) + " does not round-trip");
    auto f = gen.flow();
    auto fr = parse_flow(print_flow(f));
    if (!fr.ok() || !(*fr.model == f)) return fail("flow model #" + std::to_string(i) + " does not round-trip");
  }
  std::mt19937_64 rng(0xF022);
  std::uniform_int_distribution<int> len(0, 512);
  int exceptions = 0;
  for (int i = 0; i < kFuzzInputs; ++i) {
    std::string text(static_cast<std::size_t>(len(rng)), '\0');
    for (auto & c : text) c = static_cast<char>(rng() & 0xFF);
    try {
      auto d = parse_domain(text);
      auto a = parse_abr(text);
      auto f = parse_flow(text);
      if (d.ok() == has_errors(d.diagnostics) || a.ok() == has_errors(a.diagnostics) ||
          f.ok() == has_errors(f.diagnostics)) {
        return fail("fuzz input #" + std::to_string(i) + " gave an inconsistent result");
      }
    } catch (...) {
      ++exceptions;
    }
  }
  if (exceptions) return fail(std::to_string(exceptions) + " fuzz inputs threw");
  return {true, std::to_string(kRoundTripModels) + " models per language round-trip, " + std::to_string(kFuzzInputs) +
                  " random inputs x 3 parsers without a crash"};
}

Outcome validator_corpus()
{
  const auto dir = ffgen::fixture("defects");
  const auto manifest = json::parse(ffgen::read_file(dir / "manifest.json"));
  if (manifest.size() < kMinDefects) return fail("only " + std::to_string(manifest.size()) + " defect bundles");
  for (const auto & entry : manifest) {
    const std::string name = entry["bundle"];
    const std::string expect = entry["expect"];
    const auto codes = error_codes(load_bundle({dir / name}));
    if (codes != std::set<std::string>{expect}) return fail(name + ": expected " + expect + ", got " + join(codes));
  }
  for (const char * abr : {"conduit_mock.abr", "conduit.abr", "conduit_process.abr"}) {
    const auto clean = load_bundle(ffgen::conduit_paths(abr));
    if (!clean.diagnostics.empty()) return fail(std::string("clean fixture with ") + abr + ": " + format_diagnostic(clean.diagnostics[0]));
  }
  return {true, std::to_string(manifest.size()) + " defect bundles each raise exactly their code, clean fixture silent"};
}

Outcome persistence_oracle()
{
  for (int i = 0; i < kStoreTrials; ++i) {
    ffgen::TempDir dir;
    if (auto problem = ffgen::store_oracle_trial(0x5EED0000ull + static_cast<std::uint64_t>(i), dir.path())) {
      return fail("trial " + std::to_string(i) + ": " + *problem);
    }
  }
  return {true, std::to_string(kStoreTrials) + " randomized trials agree with a linear scan, including reopen"};
}

ValidationReport script_bundle(const std::string & flow)
{
  auto d = parse_domain("domain S {\n}\n");
  auto f = parse_flow(flow);
  if (!f.ok()) throw Error("E_SYNTAX", format_diagnostic(f.diagnostics[0]));
  return validate({*d.model}, {}, *f.model);
}

Value ints(std::int64_t n)
{
  List xs;
  for (std::int64_t i = 0; i < n; ++i) xs.push_back(Value(i * 3 - 40));
  return Value(std::move(xs));
}

Outcome loop_exactness()
{
  const auto single = script_bundle(
    "flow F uses S {\n input xs: set INTEGER\n var count: INTEGER\n var seen: set INTEGER\n"
    " script Init { let count = 0\n let seen = [] }\n"
    " loop Each over xs as x {\n  script Count { count = count + 1\n append seen <- x_index }\n }\n"
    " Init -> Each\n}\n");
  const auto nested = script_bundle(
    "flow F uses S {\n input xs: set INTEGER\n input ys: set INTEGER\n var count: INTEGER\n"
    " script Init { let count = 0 }\n"
    " loop Outer over xs as x {\n  loop Inner over ys as y {\n   script Count { count = count + 1 }\n  }\n }\n"
    " Init -> Outer\n}\n");
  ffgen::TempDir dir;
  auto store = std::make_shared<JsonLinesStore>(dir.path(), std::vector<EntitySchema>{});
  const Engine one(single, store, make_default_registry());
  const Engine two(nested, store, make_default_registry());
  std::mt19937_64 rng(0x100B);
  std::uniform_int_distribution<std::int64_t> size(0, kMaxLoopSize);
  for (int t = 0; t < kLoopTrials; ++t) {
    const auto n = t == 0 ? 0 : t == 1 ? kMaxLoopSize : size(rng);
    auto inst = one.start("l", {{"xs", ints(n)}});
    if (inst.status != InstanceStatus::Completed) return fail("n=" + std::to_string(n) + " did not complete");
    if (!(inst.dataflow.read(Path({"count"})) == Value(n))) return fail("n=" + std::to_string(n) + ": wrong count");
    List idx;
    for (std::int64_t k = 0; k < n; ++k) idx.push_back(Value(k));
    if (!(inst.dataflow.read(Path({"seen"})) == Value(idx))) return fail("n=" + std::to_string(n) + ": index does not cover 0..n-1");
  }
  std::uniform_int_distribution<std::int64_t> small(0, 12);
  for (int t = 0; t < kNestedTrials; ++t) {
    const auto a = small(rng), b = small(rng);
    auto inst = two.start("l", {{"xs", ints(a)}, {"ys", ints(b)}});
    if (inst.status != InstanceStatus::Completed || !(inst.dataflow.read(Path({"count"})) == Value(a * b))) {
      return fail(std::to_string(a) + "x" + std::to_string(b) + " nested loop miscounted");
    }
  }
  return {true, std::to_string(kLoopTrials) + " counting loops with n in [0,50], " + std::to_string(kNestedTrials) +
                  " nested pairs yield the product"};
}

Outcome suspension_transparency()
{
  const auto paths = ffgen::conduit_paths();
  ffgen::TempDir ref_dir;
  const auto reference = ffgen::conduit_restarting_run(paths, ref_dir.path(), kSlug, {});
  if (reference.status != InstanceStatus::Completed) return fail("reference run did not complete");
  const auto expected = reference.dataflow.snapshot();
  const auto points = static_cast<int>(reference.io_count);
  std::vector<std::set<int>> plans;
  std::set<int> all;
  for (int k = 1; k <= points; ++k) {
    plans.push_back({k});
    all.insert(k);
  }
  plans.push_back(all);
  for (const auto & plan : plans) {
    ffgen::TempDir dir;
    const auto inst = ffgen::conduit_restarting_run(paths, dir.path(), kSlug, plan);
    if (inst.dataflow.snapshot() != expected) return fail("restart at {" + join([&] {
                                                              std::set<std::string> s;
                                                              for (int k : plan) s.insert(std::to_string(k));
                                                              return s;
                                                            }()) + "} changed the final data-flow");
  }
  return {true, "restart at each of " + std::to_string(points) + " WAITING_IO points and at all of them: identical snapshot"};
}

Outcome binding_opacity()
{
  ::setenv("FF_MARKDOWN_STUB", FF_MARKDOWN_STUB, 1);
  ffgen::StubServer md(ffgen::markdown_handler(ffgen::fixture("conduit/markdown_cases.json").string()));
  ffgen::TempDir abr_dir;
  auto rest_paths = ffgen::conduit_paths();
  rest_paths[1] = ffgen::conduit_rest_abr(abr_dir.path(), md.origin());
  std::vector<std::pair<std::string, std::vector<fs::path>>> variants = {
    {"MOCK", ffgen::conduit_paths("conduit_mock.abr")},
    {"PROCESS", ffgen::conduit_paths("conduit_process.abr")},
    {"REST", rest_paths},
  };
  std::string first;
  for (const auto & [kind, paths] : variants) {
    ffgen::TempDir state;
    const auto run = ffgen::conduit_cli_run(paths, state.path(), kSlug);
    if (run.instance.status != InstanceStatus::Completed) return fail(kind + " run did not complete");
    const auto snap = run.instance.dataflow.snapshot();
    if (first.empty()) first = snap;
    else if (snap != first) return fail(kind + " final data-flow differs from MOCK");
  }
  return {true, "MOCK, PROCESS and REST bindings give identical final data-flows"};
}

Outcome cli_http_equivalence()
{
  const auto paths = ffgen::conduit_paths();
  ffgen::TempDir a, b;
  const auto cli = ffgen::conduit_cli_run(paths, a.path(), kSlug);
  const auto view = ffgen::conduit_http_run(paths, b.path(), kSlug);
  if (view["status"] != "COMPLETED") return fail("HTTP run ended " + view["status"].dump());
  if (view["dataflow"] != json::parse(cli.instance.dataflow.snapshot())) return fail("final data-flows differ");
  return {true, "cli_run and HTTP API give identical final data-flows"};
}

}  // namespace

int main()
{
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
    {"conduit-end-to-end", conduit_end_to_end},
    {"parser-round-trip", parser_round_trip},
    {"validator-defect-corpus", validator_corpus},
    {"persistence-oracle", persistence_oracle},
    {"loop-exactness", loop_exactness},
    {"suspension-transparency", suspension_transparency},
    {"binding-opacity", binding_opacity},
    {"cli-http-equivalence", cli_http_equivalence},
  };
  int failed = 0;
  for (const auto & [name, check] : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = check();
    } catch (const std::exception & e) {
      o = fail(std::string("threw: ") + e.what());
    }
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (!o.pass) ++failed;
    std::printf("%s %-24s %s (%.2fs)\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str(), s);
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria pass\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}

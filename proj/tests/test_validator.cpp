#include <doctest.h>
#include <json.hpp>

#include <random>

#include "files.hpp"
#include "flowforge/bundle.hpp"
#include "flowforge/dsl.hpp"
#include "flowforge/validator.hpp"

using namespace flowforge;

namespace
{

ValidationReport check(const std::string & domain, const std::string & abr, const std::string & flow)
{
  auto d = parse_domain(domain, "t.domain");
  AbrParseOptions opts;
  opts.accept_any_kind = true;
  auto a = parse_abr(abr, "t.abr", opts);
  auto f = parse_flow(flow, "t.flow");
  REQUIRE_MESSAGE(d.ok(), (d.diagnostics.empty() ? "" : format_diagnostic(d.diagnostics[0])));
  REQUIRE_MESSAGE(a.ok(), (a.diagnostics.empty() ? "" : format_diagnostic(a.diagnostics[0])));
  REQUIRE_MESSAGE(f.ok(), (f.diagnostics.empty() ? "" : format_diagnostic(f.diagnostics[0])));
  return validate({*d.model}, {*a.model}, *f.model);
}

std::set<std::string> error_codes(const ValidationReport & r)
{
  std::set<std::string> out;
  for (const auto & d : r.diagnostics) {
    if (d.severity == Severity::Error) out.insert(d.code);
  }
  return out;
}

std::string dump(const ValidationReport & r)
{
  std::string s;
  for (const auto & d : r.diagnostics) s += format_diagnostic(d) + "\n";
  return s;
}

const std::string kEmptyAbr = "bindings B for S {\n}\n";

std::string script_domain() { return "domain S {\n}\n"; }

}  // namespace

TEST_CASE("the conduit bundle validates with no diagnostics")
{
  for (const char * abr : {"conduit/conduit_mock.abr", "conduit/conduit.abr"}) {
    auto r = load_bundle(
      {ffgen::fixture("conduit/conduit.domain"), ffgen::fixture(abr), ffgen::fixture("conduit/conduit.flow")});
    INFO(dump(r));
    CHECK(r.diagnostics.empty());
    REQUIRE(r.bundle);
    CHECK(r.inferred_start == "GetArticles");
    CHECK(r.bundle->start == "GetArticles");
    CHECK(r.bundle->bindings.count("ProcessMarkdown") == 1);
    CHECK(r.bundle->variable_types.at("articles") == TypeInfo::record("Article", true));
    CHECK(r.bundle->variable_types.at("articleHtml") == TypeInfo::of(BasicType::String));
    CHECK(r.bundle->schemas.size() == 2);
  }
}

TEST_CASE("a linear flow without a start step starts at its only root")
{
  auto r = load_bundle({ffgen::fixture("conduit/conduit.domain"), ffgen::fixture("conduit/conduit_mock.abr"),
                        ffgen::fixture("conduit/linear.flow")});
  INFO(dump(r));
  CHECK(r.ok());
  CHECK(r.inferred_start == "GetArticles");
}

TEST_CASE("seeded defect corpus triggers exactly the listed codes")
{
  const auto manifest = nlohmann::json::parse(ffgen::read_file(ffgen::fixture("defects/manifest.json")));
  REQUIRE(manifest.size() >= 15);
  for (const auto & entry : manifest) {
    const std::string name = entry.at("bundle");
    auto r = load_bundle({ffgen::fixture("defects/" + name)});
    INFO(name << "\n" << dump(r));
    CHECK(error_codes(r) == std::set<std::string>{entry.at("expect").get<std::string>()});
    CHECK_FALSE(r.bundle);
  }
}

TEST_CASE("start inference")
{
  const std::string d = script_domain();
  SUBCASE("pure cycle is ambiguous")
  {
    auto r = check(d, kEmptyAbr, "flow F uses S {\n script A { let x = 1 }\n script B { let y = 2 }\n A -> B\n B -> A\n}\n");
    CHECK(error_codes(r) == std::set<std::string>{"E_AMBIGUOUS_START"});
  }
  SUBCASE("start step breaks the tie")
  {
    auto r = check(d, kEmptyAbr,
                   "flow F uses S {\n start Go\n script A { let x = 1 }\n script B { let y = 2 }\n Go -> A\n A -> B\n B -> A when true\n}\n");
    INFO(dump(r));
    CHECK(r.ok());
    CHECK(r.inferred_start == "A");
  }
  SUBCASE("start step with incoming")
  {
    auto r = check(d, kEmptyAbr, "flow F uses S {\n start Go\n script A { let x = 1 }\n Go -> A\n A -> Go\n}\n");
    CHECK(error_codes(r) == std::set<std::string>{"E_START_HAS_INCOMING"});
  }
  SUBCASE("start step with two successors")
  {
    auto r = check(d, kEmptyAbr,
                   "flow F uses S {\n start Go\n script A { let x = 1 }\n script B { let y = 1 }\n Go -> A\n Go -> B when true\n}\n");
    CHECK(error_codes(r) == std::set<std::string>{"E_AMBIGUOUS_START"});
  }
  SUBCASE("two roots")
  {
    auto r = check(d, kEmptyAbr, "flow F uses S {\n script A { let x = 1 }\n script B { let y = 1 }\n}\n");
    CHECK(error_codes(r) == std::set<std::string>{"E_AMBIGUOUS_START"});
  }
  SUBCASE("deterministic")
  {
    const std::string flow = "flow F uses S {\n script A { let x = 1 }\n script B { let y = x }\n A -> B\n}\n";
    for (int i = 0; i < 3; ++i) CHECK(check(d, kEmptyAbr, flow).inferred_start == "A");
  }
}

TEST_CASE("loop pairing and nesting")
{
  const std::string d = script_domain();
  SUBCASE("one loop with two body steps")
  {
    auto r = check(d, kEmptyAbr,
                   "flow F uses S {\n input xs: set INTEGER\n script Init { let total = 0 }\n"
                   " loop Each over xs as x {\n  script A { let y = x }\n  script B { let z = y }\n  A -> B\n }\n"
                   " script Done { let t = total }\n Init -> Each\n Each -> Done\n}\n");
    INFO(dump(r));
    REQUIRE(r.ok());
    REQUIRE(r.bundle->loops.size() == 1);
    const auto & l = r.bundle->loops.at("Each");
    CHECK(l.end == "Each_end");
    CHECK(l.entry == "A");
    CHECK(l.body == std::set<std::string>{"A", "B"});
    CHECK(l.depth == 1);
    CHECK(r.bundle->loop_of_end.at("Each_end") == "Each");
  }
  SUBCASE("two nested loops")
  {
    auto r = check(d, kEmptyAbr,
                   "flow F uses S {\n input xs: set INTEGER\n input ys: set INTEGER\n"
                   " loop Outer over xs as x {\n  loop Inner over ys as y {\n   script Mul { let p = x * y }\n  }\n }\n}\n");
    INFO(dump(r));
    REQUIRE(r.ok());
    REQUIRE(r.bundle->loops.size() == 2);
    CHECK(r.bundle->loops.at("Outer").depth == 1);
    CHECK(r.bundle->loops.at("Inner").depth == 2);
    CHECK(r.bundle->loops.at("Inner").parent == "Outer");
    CHECK(r.bundle->loops.at("Outer").body == std::set<std::string>{"Inner", "Mul", "Inner_end"});
  }
  SUBCASE("empty body")
  {
    auto r = check(d, kEmptyAbr, "flow F uses S {\n input xs: set INTEGER\n loop Each over xs as x {\n }\n}\n");
    INFO(dump(r));
    REQUIRE(r.ok());
    CHECK(r.bundle->loops.at("Each").body.empty());
  }
  SUBCASE("end without start")
  {
    auto r = check(d, kEmptyAbr, "flow F uses S {\n script A { let x = 1 }\n endloop E of A\n A -> E\n}\n");
    CHECK(error_codes(r) == std::set<std::string>{"E_UNMATCHED_LOOP"});
  }
  SUBCASE("overlapping regions")
  {
    auto r = check(d, kEmptyAbr,
                   "flow F uses S {\n input xs: set INTEGER\n"
                   " startloop L1 over xs as a\n startloop L2 over xs as b\n"
                   " endloop E1 of L1\n endloop E2 of L2\n"
                   " L1 -> L2\n L2 -> E1\n E1 -> E2\n}\n");
    CHECK(error_codes(r).count("E_LOOP_CROSSING") + error_codes(r).count("E_LOOP_OVERLAP") > 0);
    CHECK_FALSE(r.ok());
  }
  SUBCASE("looping over a scalar")
  {
    auto r = check(d, kEmptyAbr, "flow F uses S {\n input n: INTEGER\n loop Each over n as x {\n }\n}\n");
    CHECK(error_codes(r) == std::set<std::string>{"E_SET_SCALAR_MISMATCH"});
  }
  SUBCASE("body variables are gone after the loop")
  {
    auto r = check(d, kEmptyAbr,
                   "flow F uses S {\n input xs: set INTEGER\n loop Each over xs as x {\n  script A { let y = x }\n }\n"
                   " script After { let z = y }\n Each -> After\n}\n");
    CHECK(error_codes(r) == std::set<std::string>{"E_UNREACHABLE_VARIABLE"});
  }
}

TEST_CASE("mapping type checks")
{
  const std::string domain =
    "domain S {\n type T { flag: BOOLEAN\n n: INTEGER\n x: FLOAT\n s: STRING\n many: set STRING }\n"
    " service Svc { in b: BOOLEAN\n in f: FLOAT\n out r: STRING }\n"
    " io Form { in t: T\n out r: STRING }\n"
    " activity Ask { io Form { ask t -> t } }\n"
    " activity Call { call Svc { b <- t.FIELD\n f <- t.n\n r -> r } }\n}\n";
  const std::string abr =
    "bindings B for S {\n implement Svc as MOCK {\n  fixture \"f.json\"\n  param b -> b\n  param f -> f\n  result r <- r\n }\n}\n";
  const std::string flow = "flow F uses S {\n step A = activity Ask\n step C = activity Call\n A -> C\n}\n";
  auto with = [&](const std::string & field) {
    auto d = domain;
    d.replace(d.find("FIELD"), 5, field);
    return check(d, abr, flow);
  };
  auto ok = with("flag");
  INFO(dump(ok));
  CHECK(ok.diagnostics.empty());
  CHECK(error_codes(with("s")) == std::set<std::string>{"E_TYPE_MISMATCH"});
  CHECK(error_codes(with("many")) == std::set<std::string>{"E_SET_SCALAR_MISMATCH"});
  CHECK(error_codes(with("nope")) == std::set<std::string>{"E_BAD_PATH"});
  CHECK(error_codes(with("flag.deeper")) == std::set<std::string>{"E_BAD_PATH"});
}

TEST_CASE("binding checks")
{
  const std::string domain = "domain S {\n service Get { in id: STRING\n out r: STRING }\n}\n";
  const std::string flow = "flow F uses S {\n script A { let x = 1 }\n}\n";
  auto rest = [&](const std::string & url, const std::string & params) {
    return check(domain,
                 "bindings B for S {\n implement Get as REST {\n  method GET\n  url \"" + url + "\"\n" + params + " }\n}\n",
                 flow);
  };
  CHECK(rest("http://h/items/{id}", "  param id -> path id\n  result r <- r\n").ok());
  CHECK(error_codes(rest("http://h/items/{key}", "  param id -> path id\n  result r <- r\n")) ==
        std::set<std::string>{"E_PARAM_MISMATCH"});
  CHECK(error_codes(rest("http://h/items", "  param mdText -> query id\n  param id -> query id\n  result r <- r\n")) ==
        std::set<std::string>{"E_PARAM_MISMATCH"});
  CHECK(error_codes(rest("http://h/items", "  param id -> query id\n")) == std::set<std::string>{"E_PARAM_MISMATCH"});
}

// Oracle: enumerate every path of a random DAG of script steps and decide for
// each first read whether all, some or no paths define the variable first.
TEST_CASE("visibility agrees with path enumeration")
{
  std::mt19937_64 rng(7);
  const std::vector<std::string> vars = {"a", "b", "c", "d"};
  int warnings = 0, errors = 0;
  for (int trial = 0; trial < 300; ++trial) {
    const int n = static_cast<int>(rng() % 7) + 2;
    struct Stmt { bool define; std::string var; };
    std::vector<std::vector<Stmt>> steps(n);
    for (auto & s : steps) {
      for (int k = static_cast<int>(rng() % 3); k >= 0; --k) s.push_back({rng() % 2 == 0, vars[rng() % vars.size()]});
    }
    std::set<std::pair<int, int>> edges;
    for (int j = 1; j < n; ++j) {
      edges.insert({static_cast<int>(rng() % j), j});
      for (int i = 0; i < j; ++i) {
        if (rng() % 4 == 0) edges.insert({i, j});
      }
    }

    std::string flow = "flow F uses S {\n";
    for (int i = 0; i < n; ++i) {
      flow += " script N" + std::to_string(i) + " {";
      int tmp = 0;
      for (const auto & st : steps[i]) {
        if (st.define) flow += " let " + st.var + " = 1;";
        else flow += " let tmp" + std::to_string(i) + "_" + std::to_string(tmp++) + " = " + st.var + ";";
      }
      flow += " }\n";
    }
    for (const auto & [i, j] : edges) flow += " N" + std::to_string(i) + " -> N" + std::to_string(j) + " when true\n";
    flow += "}\n";

    // All paths 0 -> target.
    std::function<void(int, int, std::vector<int> &, std::vector<std::vector<int>> &)> paths =
      [&](int at, int target, std::vector<int> & cur, std::vector<std::vector<int>> & out) {
        cur.push_back(at);
        if (at == target) out.push_back(cur);
        for (const auto & [i, j] : edges) {
          if (i == at && at != target) paths(j, target, cur, out);
        }
        cur.pop_back();
      };
    std::set<std::tuple<std::string, std::string, std::string>> expected;
    for (int t = 0; t < n; ++t) {
      std::vector<std::vector<int>> all;
      std::vector<int> cur;
      paths(0, t, cur, all);
      std::set<std::string> seen_read;
      for (std::size_t k = 0; k < steps[t].size(); ++k) {
        const auto & st = steps[t][k];
        if (st.define || !seen_read.insert(st.var).second) continue;
        bool local = false;
        for (std::size_t e = 0; e < k; ++e) local |= steps[t][e].define && steps[t][e].var == st.var;
        if (local) continue;
        int defining = 0;
        for (const auto & p : all) {
          bool def = false;
          for (std::size_t e = 0; e + 1 < p.size(); ++e) {
            for (const auto & s : steps[p[e]]) def |= s.define && s.var == st.var;
          }
          defining += def;
        }
        if (defining == static_cast<int>(all.size())) continue;
        expected.insert({"N" + std::to_string(t), st.var,
                          defining == 0 ? "E_UNREACHABLE_VARIABLE" : "W_PARTIALLY_DEFINED_VARIABLE"});
      }
    }

    auto r = check(script_domain(), kEmptyAbr, flow);
    std::set<std::tuple<std::string, std::string, std::string>> actual;
    for (const auto & dg : r.diagnostics) {
      const auto a = dg.message.find('\'');
      const auto b = dg.message.find('\'', a + 1);
      const auto c = dg.message.find('\'', b + 1);
      const auto e = dg.message.find('\'', c + 1);
      actual.insert({dg.message.substr(a + 1, b - a - 1), dg.message.substr(c + 1, e - c - 1), dg.code});
      (dg.severity == Severity::Error ? errors : warnings)++;
    }
    INFO(flow << dump(r));
    REQUIRE(actual == expected);
  }
  CHECK(warnings > 20);
  CHECK(errors > 20);
}

TEST_CASE("a diamond with one producing branch warns")
{
  auto r = check(script_domain(), kEmptyAbr,
                 "flow F uses S {\n input go: BOOLEAN\n script Top { let x = 1 }\n script Left { let y = 1 }\n"
                 " script Right { let z = 1 }\n script Join { let w = y }\n"
                 " Top -> Left when go\n Top -> Right when not go\n Left -> Join\n Right -> Join\n}\n");
  REQUIRE(r.diagnostics.size() == 1);
  CHECK(r.diagnostics[0].code == "W_PARTIALLY_DEFINED_VARIABLE");
  CHECK(r.diagnostics[0].severity == Severity::Warning);
  CHECK(r.ok());
}

TEST_CASE("adding a producing edge silences an unreachable read")
{
  const std::string base =
    "flow F uses S {\n script A { let x = 1 }\n script P { let y = 1 }\n script R { let z = y }\n"
    " A -> R\n EXTRA}\n";
  auto no_edge = base;
  no_edge.replace(no_edge.find("EXTRA"), 5, "A -> P when false\n");
  auto via_p = base;
  via_p.replace(via_p.find("EXTRA"), 5, "A -> P when false\n P -> R\n");
  CHECK(error_codes(check(script_domain(), kEmptyAbr, no_edge)) == std::set<std::string>{"E_UNREACHABLE_VARIABLE"});
  auto r = check(script_domain(), kEmptyAbr, via_p);
  CHECK(r.ok());
  CHECK(r.diagnostics.size() == 1);
}

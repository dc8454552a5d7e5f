#include "flowforge/bundle.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace flowforge
{

namespace fs = std::filesystem;

namespace
{

bool model_file(const fs::path & p)
{
  const auto ext = p.extension();
  return ext == ".domain" || ext == ".abr" || ext == ".flow";
}

template <class T>
void take(ParseResult<T> && r, std::vector<T> & into, std::vector<Diagnostic> & diags)
{
  diags.insert(diags.end(), r.diagnostics.begin(), r.diagnostics.end());
  if (r.model) into.push_back(std::move(*r.model));
}

}  // namespace

BundleSources parse_bundle_files(const std::vector<fs::path> & paths)
{
  std::vector<fs::path> files;
  for (const auto & p : paths) {
    std::error_code ec;
    if (fs::is_directory(p, ec)) {
      std::vector<fs::path> inner;
      for (const auto & e : fs::directory_iterator(p)) {
        if (e.is_regular_file() && model_file(e.path())) inner.push_back(e.path());
      }
      std::sort(inner.begin(), inner.end());
      files.insert(files.end(), inner.begin(), inner.end());
    } else {
      files.push_back(p);
    }
  }

  BundleSources out;
  AbrParseOptions abr_options;
  abr_options.accept_any_kind = true;
  for (const auto & f : files) {
    std::ifstream in(f, std::ios::binary);
    if (!in) {
      out.diagnostics.push_back(make_error("E_IO", "cannot read " + f.string(), SourceSpan{f.string(), 1, 1, 0}));
      continue;
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    const std::string text = ss.str();
    const auto ext = f.extension();
    if (ext == ".domain") take(parse_domain(text, f.string()), out.domains, out.diagnostics);
    else if (ext == ".abr") take(parse_abr(text, f.string(), abr_options), out.abrs, out.diagnostics);
    else if (ext == ".flow") take(parse_flow(text, f.string()), out.flows, out.diagnostics);
    else {
      out.diagnostics.push_back(make_error(
        "E_IO", f.string() + " is not a .domain, .abr or .flow file", SourceSpan{f.string(), 1, 1, 0}));
    }
  }
  return out;
}

ValidationReport load_bundle(
  const std::vector<fs::path> & paths, const std::string & flow_name, const ValidateOptions & options)
{
  auto src = parse_bundle_files(paths);
  ValidationReport report;
  report.diagnostics = std::move(src.diagnostics);
  if (has_errors(report.diagnostics)) return report;

  std::optional<FlowModel> flow;
  if (flow_name.empty()) {
    if (src.flows.size() == 1) flow = std::move(src.flows.front());
    else {
      report.diagnostics.push_back(make_error(
        "E_UNKNOWN_FLOW", src.flows.empty() ? "no flow file given" : "several flows given; name the one to use"));
      return report;
    }
  } else {
    for (auto & f : src.flows) {
      if (f.name == flow_name) flow = std::move(f);
    }
    if (!flow) {
      report.diagnostics.push_back(make_error("E_UNKNOWN_FLOW", "no flow named '" + flow_name + "'"));
      return report;
    }
  }
  auto validated = validate(std::move(src.domains), std::move(src.abrs), std::move(*flow), options);
  report.diagnostics.insert(report.diagnostics.end(), validated.diagnostics.begin(), validated.diagnostics.end());
  report.inferred_start = validated.inferred_start;
  report.bundle = validated.bundle;
  return report;
}

}  // namespace flowforge

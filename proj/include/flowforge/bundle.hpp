#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "flowforge/dsl.hpp"
#include "flowforge/validator.hpp"

namespace flowforge
{

/// Parsed model files, by extension: .domain, .abr, .flow.
struct BundleSources
{
  std::vector<DomainModel> domains;
  std::vector<AbrModel> abrs;
  std::vector<FlowModel> flows;
  std::vector<Diagnostic> diagnostics;
};

/// Directories expand to their model files in name order. Unknown kinds in
/// ABR files parse as opaque blocks and are left to the validator.
BundleSources parse_bundle_files(const std::vector<std::filesystem::path> & paths);

/// Parses and validates. `flow_name` may be empty when exactly one flow is
/// present. Parse errors short-circuit validation.
ValidationReport load_bundle(
  const std::vector<std::filesystem::path> & paths, const std::string & flow_name = {},
  const ValidateOptions & options = {});

}  // namespace flowforge

#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "flowforge/domain.hpp"

namespace flowforge
{

enum class ParamLocation { Body, Path, Query };

std::string_view param_location_name(ParamLocation l);

/// Maps a domain-side (abstract) parameter name to the implementation's name.
struct ServiceParameter
{
  std::string abstract_name;
  std::string concrete_name;
  Direction direction = Direction::In;
  ParamLocation location = ParamLocation::Body;
  SourceSpan span;
  bool operator==(const ServiceParameter &) const = default;
};

enum class HttpMethod { Get, Post, Put, Delete };

std::string_view http_method_name(HttpMethod m);

inline constexpr std::int64_t kDefaultTimeoutMs = 30000;

struct RestImplementation
{
  HttpMethod method = HttpMethod::Post;
  std::string url_template;
  std::vector<std::pair<std::string, std::string>> headers;
  std::int64_t timeout_ms = kDefaultTimeoutMs;
  bool operator==(const RestImplementation &) const = default;
};

/// Request document on stdin, response document on stdout.
struct ProcessImplementation
{
  std::string command_line;
  std::string working_dir;
  std::int64_t timeout_ms = kDefaultTimeoutMs;
  bool operator==(const ProcessImplementation &) const = default;
};

struct MockImplementation
{
  std::string fixture_file;
  bool operator==(const MockImplementation &) const = default;
};

/// Implementation of a kind registered at runtime; configuration is opaque.
struct CustomImplementation
{
  std::string kind;
  std::vector<std::pair<std::string, std::string>> config;
  bool operator==(const CustomImplementation &) const = default;
};

using ImplementationDetails =
  std::variant<RestImplementation, ProcessImplementation, MockImplementation, CustomImplementation>;

struct Implementation
{
  std::string service;
  ImplementationDetails details;
  std::vector<ServiceParameter> parameters;
  SourceSpan span;

  /// "REST", "PROCESS", "MOCK" or the custom kind name.
  std::string kind() const;
  bool operator==(const Implementation &) const = default;
};

struct AbrModel
{
  std::string name;
  std::string target_domain;
  std::vector<Implementation> bindings;
  SourceSpan span;

  const Implementation * find_binding(std::string_view service) const;
  bool operator==(const AbrModel &) const = default;
};

}  // namespace flowforge

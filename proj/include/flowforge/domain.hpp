#pragma once

#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "flowforge/error.hpp"
#include "flowforge/value.hpp"

namespace flowforge
{

/// Points at a basic kind or at a TypeDef by name, optionally as a set.
struct TypeRef
{
  std::variant<BasicType, std::string> target;
  bool is_set = false;

  static TypeRef basic(BasicType b, bool set = false) { return {b, set}; }
  static TypeRef named(std::string name, bool set = false) { return {std::move(name), set}; }

  bool is_basic() const { return std::holds_alternative<BasicType>(target); }
  std::string target_name() const;
  /// `set Article`, `STRING`
  std::string str() const;

  bool operator==(const TypeRef &) const = default;
};

struct Attribute
{
  std::string name;
  TypeRef type;
  SourceSpan span;
  bool operator==(const Attribute &) const = default;
};

struct TypeDef
{
  std::string name;
  std::vector<Attribute> attributes;
  SourceSpan span;

  const Attribute * find_attribute(std::string_view attr) const;
  bool operator==(const TypeDef &) const = default;
};

struct Parameter
{
  std::string name;
  TypeRef type;
  SourceSpan span;
  bool operator==(const Parameter &) const = default;
};

struct ServiceDef
{
  std::string name;
  std::vector<Parameter> inputs;
  std::vector<Parameter> outputs;
  SourceSpan span;

  const Parameter * find_input(std::string_view n) const;
  const Parameter * find_output(std::string_view n) const;
  bool operator==(const ServiceDef &) const = default;
};

enum class Direction { In, Out };

struct IoVariable
{
  std::string name;
  TypeRef type;
  Direction direction = Direction::In;
  SourceSpan span;
  bool operator==(const IoVariable &) const = default;
};

struct IoDef
{
  std::string name;
  std::vector<IoVariable> variables;
  SourceSpan span;

  const IoVariable * find_variable(std::string_view n) const;
  bool operator==(const IoDef &) const = default;
};

/// Binds an endpoint (service parameter or IO variable) to a data-flow path
/// (ParameterMapping) or to a constant (ValueMapping).
struct Mapping
{
  std::string endpoint;
  std::variant<Path, Value> source;
  SourceSpan span;

  bool is_value() const { return std::holds_alternative<Value>(source); }
  const Path & path() const { return std::get<Path>(source); }
  const Value & value() const { return std::get<Value>(source); }
  bool operator==(const Mapping &) const = default;
};

struct ServiceRelation
{
  std::string service;
  std::vector<Mapping> inputs;   // service input <- path | literal
  std::vector<Mapping> outputs;  // service output -> path (always a path)
  SourceSpan span;
  bool operator==(const ServiceRelation &) const = default;
};

struct IoRelation
{
  std::string io;
  std::vector<Mapping> output_mappings;  // published OUT variables
  std::vector<Mapping> input_mappings;   // requested IN variables -> path
  SourceSpan span;
  bool operator==(const IoRelation &) const = default;
};

using ActivityRelation = std::variant<ServiceRelation, IoRelation>;

struct ActivityDef
{
  std::string name;
  std::vector<ActivityRelation> relations;
  SourceSpan span;
  bool operator==(const ActivityDef &) const = default;
};

struct DomainModel
{
  std::string name;
  std::vector<TypeDef> types;
  std::vector<ServiceDef> services;
  std::vector<IoDef> ios;
  std::vector<ActivityDef> activities;
  SourceSpan span;

  const TypeDef * find_type(std::string_view n) const;
  const ServiceDef * find_service(std::string_view n) const;
  const IoDef * find_io(std::string_view n) const;
  const ActivityDef * find_activity(std::string_view n) const;

  bool operator==(const DomainModel &) const = default;
};

struct ResolvedType
{
  std::variant<BasicType, const TypeDef *> target;
  bool is_set = false;

  bool is_basic() const { return std::holds_alternative<BasicType>(target); }
  BasicType basic() const { return std::get<BasicType>(target); }
  const TypeDef & type_def() const { return *std::get<const TypeDef *>(target); }
};

/// Throws Error("E_UNKNOWN_TYPE") when the target is neither basic nor defined.
ResolvedType resolve_type_ref(const DomainModel & model, const TypeRef & ref);

enum class ElementKind { Type, Service, Io, Activity };

std::string_view element_kind_name(ElementKind k);

using ElementRef =
  std::variant<const TypeDef *, const ServiceDef *, const IoDef *, const ActivityDef *>;

/// Throws Error("E_NOT_FOUND") when no element of that kind has the name.
ElementRef lookup(const DomainModel & model, ElementKind kind, std::string_view name);

/// Field of a derived entity schema. Records are embedded documents; a
/// record type already being expanded is emitted with `recursive` set and no
/// children.
struct FieldDescriptor
{
  std::string name;
  std::string kind;         // basic type name or "RECORD"
  std::string record_type;  // for RECORD
  bool is_set = false;
  bool recursive = false;
  std::vector<FieldDescriptor> fields;

  bool operator==(const FieldDescriptor &) const = default;
};

struct EntitySchema
{
  std::string collection;
  std::string id_field = "_id";
  std::vector<FieldDescriptor> fields;

  const FieldDescriptor * find_field(std::string_view n) const;
  bool operator==(const EntitySchema &) const = default;
};

inline constexpr std::string_view kIdField = "_id";

std::vector<EntitySchema> derive_entity_schemas(const DomainModel & model);

/// Canonical JSON text of the schema list (stable key order, no whitespace).
std::string serialize_schemas(const std::vector<EntitySchema> & schemas);

/// Expands a TypeRef into a descriptor; used for IO request schemas.
FieldDescriptor describe_type(const DomainModel & model, std::string name, const TypeRef & ref);

}  // namespace flowforge

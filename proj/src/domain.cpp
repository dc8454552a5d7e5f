#include "flowforge/domain.hpp"

#include <algorithm>
#include <set>

#include "json.hpp"

#include "flowforge/abr.hpp"
#include "flowforge/flow.hpp"

namespace flowforge
{

namespace
{

template <class T>
const T * find_named(const std::vector<T> & items, std::string_view name)
{
  auto it = std::find_if(items.begin(), items.end(), [&](const T & x) { return x.name == name; });
  return it == items.end() ? nullptr : &*it;
}

void expand_fields(
  const DomainModel & model, const TypeDef & type, std::set<std::string> & expanding,
  std::vector<FieldDescriptor> & out);

FieldDescriptor describe(
  const DomainModel & model, std::string name, const TypeRef & ref,
  std::set<std::string> & expanding)
{
  FieldDescriptor fd;
  fd.name = std::move(name);
  fd.is_set = ref.is_set;
  auto resolved = resolve_type_ref(model, ref);
  if (resolved.is_basic()) {
    fd.kind = std::string(basic_type_name(resolved.basic()));
    return fd;
  }
  const TypeDef & td = resolved.type_def();
  fd.kind = "RECORD";
  fd.record_type = td.name;
  if (expanding.count(td.name)) {
    fd.recursive = true;
    return fd;
  }
  expand_fields(model, td, expanding, fd.fields);
  return fd;
}

void expand_fields(
  const DomainModel & model, const TypeDef & type, std::set<std::string> & expanding,
  std::vector<FieldDescriptor> & out)
{
  expanding.insert(type.name);
  for (const auto & attr : type.attributes) {
    out.push_back(describe(model, attr.name, attr.type, expanding));
  }
  expanding.erase(type.name);
}

nlohmann::ordered_json field_json(const FieldDescriptor & f)
{
  nlohmann::ordered_json j;
  j["name"] = f.name;
  j["kind"] = f.kind;
  if (!f.record_type.empty()) j["recordType"] = f.record_type;
  j["set"] = f.is_set;
  if (f.recursive) j["recursive"] = true;
  if (!f.fields.empty()) {
    auto arr = nlohmann::ordered_json::array();
    for (const auto & c : f.fields) arr.push_back(field_json(c));
    j["fields"] = std::move(arr);
  }
  return j;
}

}  // namespace

std::string TypeRef::target_name() const
{
  if (is_basic()) return std::string(basic_type_name(std::get<BasicType>(target)));
  return std::get<std::string>(target);
}

std::string TypeRef::str() const { return (is_set ? "set " : "") + target_name(); }

const Attribute * TypeDef::find_attribute(std::string_view attr) const
{
  return find_named(attributes, attr);
}

const Parameter * ServiceDef::find_input(std::string_view n) const
{
  return find_named(inputs, n);
}

const Parameter * ServiceDef::find_output(std::string_view n) const
{
  return find_named(outputs, n);
}

const IoVariable * IoDef::find_variable(std::string_view n) const
{
  return find_named(variables, n);
}

const TypeDef * DomainModel::find_type(std::string_view n) const { return find_named(types, n); }
const ServiceDef * DomainModel::find_service(std::string_view n) const
{
  return find_named(services, n);
}
const IoDef * DomainModel::find_io(std::string_view n) const { return find_named(ios, n); }
const ActivityDef * DomainModel::find_activity(std::string_view n) const
{
  return find_named(activities, n);
}

ResolvedType resolve_type_ref(const DomainModel & model, const TypeRef & ref)
{
  if (ref.is_basic()) return {std::get<BasicType>(ref.target), ref.is_set};
  const auto & name = std::get<std::string>(ref.target);
  if (const auto * td = model.find_type(name)) return {td, ref.is_set};
  throw Error("E_UNKNOWN_TYPE", "unknown type '" + name + "'");
}

std::string_view element_kind_name(ElementKind k)
{
  switch (k) {
    case ElementKind::Type: return "type";
    case ElementKind::Service: return "service";
    case ElementKind::Io: return "io";
    case ElementKind::Activity: return "activity";
  }
  return "?";
}

ElementRef lookup(const DomainModel & model, ElementKind kind, std::string_view name)
{
  ElementRef ref;
  bool found = false;
  auto take = [&](auto * p) {
    ref = p;
    found = p != nullptr;
  };
  switch (kind) {
    case ElementKind::Type: take(model.find_type(name)); break;
    case ElementKind::Service: take(model.find_service(name)); break;
    case ElementKind::Io: take(model.find_io(name)); break;
    case ElementKind::Activity: take(model.find_activity(name)); break;
  }
  if (!found) {
    throw Error(
      "E_NOT_FOUND", std::string(element_kind_name(kind)) + " '" + std::string(name) +
                       "' not found in domain '" + model.name + "'");
  }
  return ref;
}

const FieldDescriptor * EntitySchema::find_field(std::string_view n) const
{
  return find_named(fields, n);
}

std::vector<EntitySchema> derive_entity_schemas(const DomainModel & model)
{
  std::vector<EntitySchema> out;
  for (const auto & td : model.types) {
    EntitySchema schema;
    schema.collection = td.name;
    std::set<std::string> expanding;
    expand_fields(model, td, expanding, schema.fields);
    out.push_back(std::move(schema));
  }
  return out;
}

std::string serialize_schemas(const std::vector<EntitySchema> & schemas)
{
  auto arr = nlohmann::ordered_json::array();
  for (const auto & s : schemas) {
    nlohmann::ordered_json j;
    j["collection"] = s.collection;
    j["idField"] = s.id_field;
    auto fields = nlohmann::ordered_json::array();
    for (const auto & f : s.fields) fields.push_back(field_json(f));
    j["fields"] = std::move(fields);
    arr.push_back(std::move(j));
  }
  return arr.dump();
}

FieldDescriptor describe_type(const DomainModel & model, std::string name, const TypeRef & ref)
{
  std::set<std::string> expanding;
  return describe(model, std::move(name), ref, expanding);
}

std::string_view param_location_name(ParamLocation l)
{
  switch (l) {
    case ParamLocation::Body: return "body";
    case ParamLocation::Path: return "path";
    case ParamLocation::Query: return "query";
  }
  return "body";
}

std::string_view http_method_name(HttpMethod m)
{
  switch (m) {
    case HttpMethod::Get: return "GET";
    case HttpMethod::Post: return "POST";
    case HttpMethod::Put: return "PUT";
    case HttpMethod::Delete: return "DELETE";
  }
  return "POST";
}

std::string Implementation::kind() const
{
  switch (details.index()) {
    case 0: return "REST";
    case 1: return "PROCESS";
    case 2: return "MOCK";
    default: return std::get<CustomImplementation>(details).kind;
  }
}

const Implementation * AbrModel::find_binding(std::string_view service) const
{
  auto it = std::find_if(
    bindings.begin(), bindings.end(), [&](const Implementation & i) { return i.service == service; });
  return it == bindings.end() ? nullptr : &*it;
}

std::string_view criterion_op_symbol(CriterionOp op)
{
  switch (op) {
    case CriterionOp::Eq: return "==";
    case CriterionOp::Ne: return "!=";
    case CriterionOp::Lt: return "<";
    case CriterionOp::Le: return "<=";
    case CriterionOp::Gt: return ">";
    case CriterionOp::Ge: return ">=";
    case CriterionOp::Contains: return "contains";
  }
  return "==";
}

std::string_view step_kind_name(const StepBody & body)
{
  static constexpr std::string_view kNames[] = {"start",  "activity", "startloop", "endloop",
                                                "script", "store",    "retrieve",  "delete"};
  return kNames[body.index()];
}

bool operator==(const Transition & a, const Transition & b)
{
  if (a.source != b.source || a.target != b.target) return false;
  if (!a.condition || !b.condition) return !a.condition && !b.condition;
  return *a.condition == *b.condition;
}

const Step * FlowModel::find_step(std::string_view n) const { return find_named(steps, n); }

}  // namespace flowforge

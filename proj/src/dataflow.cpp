#include "flowforge/dataflow.hpp"

#include "flowforge/codec.hpp"
#include "flowforge/error.hpp"

namespace flowforge
{

namespace
{

[[noreturn]] void null_read(const Path & path)
{
  throw Error("E_NULL_READ", "data-flow has no value at '" + path.str() + "'");
}

bool records_compatible(const Record & a, const Record & b)
{
  return a.type_name.empty() || b.type_name.empty() || a.type_name == b.type_name;
}

bool conforms_to_declared(const DeclaredType & decl, Value & v)
{
  auto check_scalar = [&](Value & item) {
    if (decl.basic) {
      if (item.kind() == ValueKind::Integer && *decl.basic == BasicType::Float) {
        item = Value(static_cast<double>(item.as<std::int64_t>()));
        return true;
      }
      return item.basic() == decl.basic;
    }
    if (!item.is<Record>()) return false;
    auto & rec = item.as<Record>();
    if (rec.type_name.empty()) rec.type_name = decl.record_type;
    return rec.type_name == decl.record_type;
  };
  if (decl.is_set) {
    if (!v.is<List>()) return false;
    for (auto & item : v.as<List>()) {
      if (!check_scalar(item)) return false;
    }
    return true;
  }
  return check_scalar(v);
}

json declared_json(const DeclaredType & d)
{
  json j;
  if (d.basic) j["basic"] = std::string(basic_type_name(*d.basic));
  else j["recordType"] = d.record_type;
  j["set"] = d.is_set;
  return j;
}

}  // namespace

bool conform_kind(const Value & existing, Value & v)
{
  if (existing.kind() == ValueKind::Float && v.kind() == ValueKind::Integer) {
    v = Value(static_cast<double>(v.as<std::int64_t>()));
    return true;
  }
  if (existing.kind() != v.kind()) return false;
  if (existing.is<Record>()) return records_compatible(existing.as<Record>(), v.as<Record>());
  if (existing.is<List>()) {
    const auto & old_items = existing.as<List>();
    auto & new_items = v.as<List>();
    if (old_items.empty() || new_items.empty()) return true;
    for (auto & item : new_items) {
      if (!conform_kind(old_items.front(), item)) return false;
    }
  }
  return true;
}

DataFlow::DataFlow() : frames_(1) {}

Frame * DataFlow::owning_frame(std::string_view root)
{
  for (auto it = frames_.rbegin(); it != frames_.rend(); ++it) {
    if (it->count(std::string(root))) return &*it;
  }
  return nullptr;
}

const Frame * DataFlow::owning_frame(std::string_view root) const
{
  for (auto it = frames_.rbegin(); it != frames_.rend(); ++it) {
    if (it->count(std::string(root))) return &*it;
  }
  return nullptr;
}

const Value * DataFlow::try_read(const Path & path) const
{
  if (path.empty()) return nullptr;
  const Frame * frame = owning_frame(path.root());
  if (!frame) return nullptr;
  const Value * cur = &frame->at(path.root());
  for (std::size_t i = 1; i < path.size(); ++i) {
    if (!cur->is<Record>()) return nullptr;
    const auto & fields = cur->as<Record>().fields;
    auto it = fields.find(path.segments[i]);
    if (it == fields.end()) return nullptr;
    cur = &it->second;
  }
  return cur;
}

const Value & DataFlow::read(const Path & path) const
{
  if (path.empty()) null_read(path);
  const Frame * frame = owning_frame(path.root());
  if (!frame) null_read(path);
  const Value * cur = &frame->at(path.root());
  for (std::size_t i = 1; i < path.size(); ++i) {
    if (!cur->is<Record>()) {
      throw Error(
        "E_NOT_A_RECORD", "'" + Path({path.segments.begin(), path.segments.begin() + i}).str() +
                            "' is a " + std::string(value_kind_name(cur->kind())) +
                            ", not a record");
    }
    const auto & fields = cur->as<Record>().fields;
    auto it = fields.find(path.segments[i]);
    if (it == fields.end()) null_read(path);
    cur = &it->second;
  }
  return *cur;
}

bool DataFlow::contains(std::string_view root) const { return owning_frame(root) != nullptr; }

void DataFlow::throw_type_clash(
  const std::string & root, const Value & existing, const Value & incoming) const
{
  throw Error(
    "E_TYPE_MISMATCH", "variable '" + root + "' holds " +
                         std::string(value_kind_name(existing.kind())) + ", cannot store " +
                         std::string(value_kind_name(incoming.kind())));
}

void DataFlow::write(const Path & path, Value value)
{
  if (path.empty()) throw Error("E_BAD_PATH", "empty data-flow path");
  const std::string & root = path.root();
  Frame * frame = owning_frame(root);
  auto decl = declared_.find(root);

  if (path.size() == 1) {
    if (decl != declared_.end() && !conforms_to_declared(decl->second, value)) {
      throw Error(
        "E_TYPE_MISMATCH", "variable '" + root + "' is declared with another type than " +
                             std::string(value_kind_name(value.kind())));
    }
    if (frame) {
      Value & existing = frame->at(root);
      if (!conform_kind(existing, value)) throw_type_clash(root, existing, value);
      existing = std::move(value);
    } else {
      frames_.back()[root] = std::move(value);
    }
    return;
  }

  if (!frame) {
    Record rec;
    if (decl != declared_.end()) {
      if (decl->second.basic || decl->second.is_set) {
        throw Error("E_NOT_A_RECORD", "variable '" + root + "' is not declared as a record");
      }
      rec.type_name = decl->second.record_type;
    }
    frame = &frames_.back();
    (*frame)[root] = Value(std::move(rec));
  }
  Value * cur = &frame->at(root);
  for (std::size_t i = 1; i < path.size(); ++i) {
    if (!cur->is<Record>()) {
      throw Error(
        "E_NOT_A_RECORD", "'" + Path({path.segments.begin(), path.segments.begin() + i}).str() +
                            "' is not a record");
    }
    auto & fields = cur->as<Record>().fields;
    const auto & seg = path.segments[i];
    if (i + 1 == path.size()) {
      auto it = fields.find(seg);
      if (it != fields.end()) {
        if (!conform_kind(it->second, value)) throw_type_clash(path.str(), it->second, value);
        it->second = std::move(value);
      } else {
        fields.emplace(seg, std::move(value));
      }
      return;
    }
    auto it = fields.find(seg);
    if (it == fields.end()) it = fields.emplace(seg, Value(Record{})).first;
    cur = &it->second;
  }
}

bool DataFlow::remove(std::string_view root)
{
  Frame * frame = owning_frame(root);
  if (!frame) return false;
  frame->erase(std::string(root));
  return true;
}

void DataFlow::push_frame(Frame bindings) { frames_.push_back(std::move(bindings)); }

void DataFlow::pop_frame()
{
  if (frames_.size() <= 1) throw Error("E_POP_BASE", "cannot pop the base data-flow frame");
  frames_.pop_back();
}

void DataFlow::reset_frame(Frame bindings)
{
  if (frames_.size() <= 1) throw Error("E_POP_BASE", "cannot reset the base data-flow frame");
  frames_.back() = std::move(bindings);
}

void DataFlow::declare(const std::string & root, DeclaredType type)
{
  declared_[root] = std::move(type);
}

Frame DataFlow::visible() const
{
  Frame out;
  for (const auto & frame : frames_) {
    for (const auto & [k, v] : frame) out[k] = v;
  }
  return out;
}

std::string DataFlow::snapshot() const
{
  json j;
  json decls = json::object();
  for (const auto & [k, d] : declared_) decls[k] = declared_json(d);
  j["declared"] = std::move(decls);
  json frames = json::array();
  for (const auto & frame : frames_) {
    json f = json::object();
    for (const auto & [k, v] : frame) f[k] = to_snapshot_json(v);
    frames.push_back(std::move(f));
  }
  j["frames"] = std::move(frames);
  return j.dump();
}

DataFlow DataFlow::restore(std::string_view image)
{
  json j = json::parse(image, nullptr, false);
  if (j.is_discarded() || !j.is_object()) {
    throw Error("E_CORRUPT_IMAGE", "data-flow image is not a JSON object");
  }
  if (!j.contains("frames") || !j["frames"].is_array() || j["frames"].empty()) {
    throw Error("E_CORRUPT_IMAGE", "data-flow image lacks frames");
  }
  DataFlow df;
  df.frames_.clear();
  for (const auto & f : j["frames"]) {
    if (!f.is_object()) throw Error("E_CORRUPT_IMAGE", "frame is not an object");
    Frame frame;
    for (const auto & [k, v] : f.items()) frame[k] = from_snapshot_json(v);
    df.frames_.push_back(std::move(frame));
  }
  if (j.contains("declared")) {
    if (!j["declared"].is_object()) throw Error("E_CORRUPT_IMAGE", "declarations malformed");
    for (const auto & [k, d] : j["declared"].items()) {
      if (!d.is_object() || !d.contains("set") || !d["set"].is_boolean()) {
        throw Error("E_CORRUPT_IMAGE", "declaration '" + k + "' malformed");
      }
      DeclaredType decl;
      decl.is_set = d["set"].get<bool>();
      if (d.contains("basic") && d["basic"].is_string()) {
        decl.basic = basic_type_from_name(d["basic"].get<std::string>());
        if (!decl.basic) throw Error("E_CORRUPT_IMAGE", "unknown basic type in declaration");
      } else if (d.contains("recordType") && d["recordType"].is_string()) {
        decl.record_type = d["recordType"].get<std::string>();
      } else {
        throw Error("E_CORRUPT_IMAGE", "declaration '" + k + "' lacks a type");
      }
      df.declared_[k] = std::move(decl);
    }
  }
  return df;
}

}  // namespace flowforge

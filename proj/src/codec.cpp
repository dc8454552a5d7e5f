#include "flowforge/codec.hpp"

#include <openssl/evp.h>
#include <openssl/sha.h>

#include <cmath>
#include <fstream>
#include <sstream>

#include "flowforge/error.hpp"

namespace flowforge
{

namespace
{

[[noreturn]] void corrupt(const std::string & what)
{
  throw Error("E_CORRUPT_IMAGE", "corrupt snapshot: " + what);
}

[[noreturn]] void decode_error(const std::string & what) { throw Error("E_DECODE", what); }

double number_field(const json & j, const char * key)
{
  auto it = j.find(key);
  if (it == j.end() || !it->is_number()) corrupt(std::string("missing number '") + key + "'");
  return it->get<double>();
}

Location checked_location(double lat, double lon, bool snapshot)
{
  if (!(lat >= -90 && lat <= 90) || !(lon >= -180 && lon <= 180)) {
    if (snapshot) corrupt("location out of range");
    decode_error("location out of range");
  }
  return Location{lat, lon};
}

Value basic_from_wire(const json & j, BasicType b, const WireOptions & opts)
{
  switch (b) {
    case BasicType::String:
      if (!j.is_string()) decode_error("expected STRING, got " + j.dump());
      return Value(j.get<std::string>());
    case BasicType::Integer:
      if (!j.is_number_integer()) decode_error("expected INTEGER, got " + j.dump());
      return Value(j.get<std::int64_t>());
    case BasicType::Float:
      if (!j.is_number()) decode_error("expected FLOAT, got " + j.dump());
      return Value(j.get<double>());
    case BasicType::Boolean:
      if (!j.is_boolean()) decode_error("expected BOOLEAN, got " + j.dump());
      return Value(j.get<bool>());
    case BasicType::Date: {
      if (!j.is_string()) decode_error("expected DATE text, got " + j.dump());
      auto d = parse_iso_date(j.get<std::string>());
      if (!d) decode_error("malformed DATE '" + j.get<std::string>() + "'");
      return Value(*d);
    }
    case BasicType::Location: {
      if (!j.is_object() || !j.contains("lat") || !j.contains("lon") || !j["lat"].is_number() ||
          !j["lon"].is_number()) {
        decode_error("expected LOCATION {lat, lon}, got " + j.dump());
      }
      return Value(checked_location(j["lat"].get<double>(), j["lon"].get<double>(), false));
    }
    case BasicType::Image: {
      if (!j.is_object() || !j.contains("mediaType") || !j["mediaType"].is_string()) {
        decode_error("expected IMAGE {mediaType, ...}, got " + j.dump());
      }
      const auto media = j["mediaType"].get<std::string>();
      if (j.contains("data")) {
        if (!opts.blobs) decode_error("inline IMAGE data without a blob store");
        if (!j["data"].is_string()) decode_error("IMAGE data must be base64 text");
        return Value(opts.blobs->put(media, base64_decode(j["data"].get<std::string>())));
      }
      if (!j.contains("ref") || !j["ref"].is_string()) decode_error("IMAGE lacks ref or data");
      return Value(Image{media, j["ref"].get<std::string>()});
    }
  }
  decode_error("unsupported type");
}

Value scalar_from_wire(
  const json & j, const TypeRef & type, const DomainModel & model, const WireOptions & opts)
{
  TypeRef scalar = type;
  scalar.is_set = false;
  ResolvedType r = resolve_type_ref(model, scalar);
  if (r.is_basic()) return basic_from_wire(j, r.basic(), opts);
  if (!j.is_object()) decode_error("expected " + r.type_def().name + " object, got " + j.dump());
  Record rec;
  rec.type_name = r.type_def().name;
  for (const auto & [key, fv] : j.items()) {
    if (key == kIdField) {
      if (!fv.is_number_integer()) decode_error("_id must be an integer");
      rec.fields[key] = Value(fv.get<std::int64_t>());
      continue;
    }
    const Attribute * attr = r.type_def().find_attribute(key);
    if (!attr) decode_error("unknown attribute '" + key + "' for type " + rec.type_name);
    rec.fields[key] = from_wire(fv, attr->type, model, opts);
  }
  return Value(std::move(rec));
}

}  // namespace

BlobStore::BlobStore(std::filesystem::path dir) : dir_(std::move(dir))
{
  std::filesystem::create_directories(dir_);
}

Image BlobStore::put(std::string_view media_type, std::string_view bytes) const
{
  Image img{std::string(media_type), sha256_hex(bytes)};
  auto path = dir_ / img.ref;
  if (!std::filesystem::exists(path)) {
    std::ofstream out(path, std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error("E_IO", "cannot write blob " + path.string());
  }
  return img;
}

std::string BlobStore::get(const Image & image) const
{
  std::ifstream in(dir_ / image.ref, std::ios::binary);
  if (!in) throw Error("E_NOT_FOUND", "no blob '" + image.ref + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string sha256_hex(std::string_view bytes)
{
  unsigned char digest[SHA256_DIGEST_LENGTH];
  SHA256(reinterpret_cast<const unsigned char *>(bytes.data()), bytes.size(), digest);
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  for (unsigned char c : digest) {
    out += kHex[c >> 4];
    out += kHex[c & 15];
  }
  return out;
}

std::string base64_encode(std::string_view bytes)
{
  std::string out(4 * ((bytes.size() + 2) / 3), '\0');
  int n = EVP_EncodeBlock(
    reinterpret_cast<unsigned char *>(out.data()),
    reinterpret_cast<const unsigned char *>(bytes.data()), static_cast<int>(bytes.size()));
  out.resize(static_cast<std::size_t>(n));
  return out;
}

std::string base64_decode(std::string_view text)
{
  if (text.size() % 4 != 0) decode_error("base64 length not a multiple of 4");
  std::string out(3 * text.size() / 4, '\0');
  int n = EVP_DecodeBlock(
    reinterpret_cast<unsigned char *>(out.data()),
    reinterpret_cast<const unsigned char *>(text.data()), static_cast<int>(text.size()));
  if (n < 0) decode_error("malformed base64");
  std::size_t pad = 0;
  if (!text.empty() && text.back() == '=') ++pad;
  if (text.size() > 1 && text[text.size() - 2] == '=') ++pad;
  out.resize(static_cast<std::size_t>(n) - pad);
  return out;
}

json to_snapshot_json(const Value & v)
{
  json j;
  j["$kind"] = std::string(value_kind_name(v.kind()));
  switch (v.kind()) {
    case ValueKind::String: j["value"] = v.as<std::string>(); break;
    case ValueKind::Integer: j["value"] = v.as<std::int64_t>(); break;
    case ValueKind::Float: j["value"] = v.as<double>(); break;
    case ValueKind::Boolean: j["value"] = v.as<bool>(); break;
    case ValueKind::Date: j["value"] = format_iso_date(v.as<Date>()); break;
    case ValueKind::Location:
      j["lat"] = v.as<Location>().latitude;
      j["lon"] = v.as<Location>().longitude;
      break;
    case ValueKind::Image:
      j["mediaType"] = v.as<Image>().media_type;
      j["ref"] = v.as<Image>().ref;
      break;
    case ValueKind::Record: {
      j["type"] = v.as<Record>().type_name;
      json fields = json::object();
      for (const auto & [k, fv] : v.as<Record>().fields) fields[k] = to_snapshot_json(fv);
      j["fields"] = std::move(fields);
      break;
    }
    case ValueKind::List: {
      json items = json::array();
      for (const auto & item : v.as<List>()) items.push_back(to_snapshot_json(item));
      j["items"] = std::move(items);
      break;
    }
  }
  return j;
}

Value from_snapshot_json(const json & j)
{
  if (!j.is_object()) corrupt("value is not an object");
  auto kit = j.find("$kind");
  if (kit == j.end() || !kit->is_string()) corrupt("value lacks $kind");
  const auto kind = kit->get<std::string>();
  auto value_of = [&]() -> const json & {
    auto it = j.find("value");
    if (it == j.end()) corrupt("value lacks 'value'");
    return *it;
  };
  if (kind == "STRING") {
    if (!value_of().is_string()) corrupt("STRING value");
    return Value(value_of().get<std::string>());
  }
  if (kind == "INTEGER") {
    if (!value_of().is_number_integer()) corrupt("INTEGER value");
    return Value(value_of().get<std::int64_t>());
  }
  if (kind == "FLOAT") {
    if (!value_of().is_number()) corrupt("FLOAT value");
    return Value(value_of().get<double>());
  }
  if (kind == "BOOLEAN") {
    if (!value_of().is_boolean()) corrupt("BOOLEAN value");
    return Value(value_of().get<bool>());
  }
  if (kind == "DATE") {
    if (!value_of().is_string()) corrupt("DATE value");
    auto d = parse_iso_date(value_of().get<std::string>());
    if (!d) corrupt("DATE text");
    return Value(*d);
  }
  if (kind == "LOCATION") {
    return Value(checked_location(number_field(j, "lat"), number_field(j, "lon"), true));
  }
  if (kind == "IMAGE") {
    if (!j.contains("mediaType") || !j["mediaType"].is_string() || !j.contains("ref") ||
        !j["ref"].is_string()) {
      corrupt("IMAGE fields");
    }
    return Value(Image{j["mediaType"].get<std::string>(), j["ref"].get<std::string>()});
  }
  if (kind == "RECORD") {
    if (!j.contains("type") || !j["type"].is_string() || !j.contains("fields") ||
        !j["fields"].is_object()) {
      corrupt("RECORD fields");
    }
    Record r;
    r.type_name = j["type"].get<std::string>();
    for (const auto & [k, fv] : j["fields"].items()) r.fields[k] = from_snapshot_json(fv);
    return Value(std::move(r));
  }
  if (kind == "SET") {
    if (!j.contains("items") || !j["items"].is_array()) corrupt("SET items");
    List items;
    for (const auto & item : j["items"]) items.push_back(from_snapshot_json(item));
    if (!is_homogeneous(items)) corrupt("heterogeneous SET");
    return Value(std::move(items));
  }
  corrupt("unknown $kind '" + kind + "'");
}

json to_wire(const Value & v, const WireOptions & opts)
{
  switch (v.kind()) {
    case ValueKind::String: return v.as<std::string>();
    case ValueKind::Integer: return v.as<std::int64_t>();
    case ValueKind::Float: return v.as<double>();
    case ValueKind::Boolean: return v.as<bool>();
    case ValueKind::Date: return format_iso_date(v.as<Date>());
    case ValueKind::Location:
      return json{{"lat", v.as<Location>().latitude}, {"lon", v.as<Location>().longitude}};
    case ValueKind::Image: {
      const auto & img = v.as<Image>();
      if (opts.inline_images && opts.blobs) {
        return json{{"mediaType", img.media_type}, {"data", base64_encode(opts.blobs->get(img))}};
      }
      return json{{"mediaType", img.media_type}, {"ref", img.ref}};
    }
    case ValueKind::Record: {
      json obj = json::object();
      for (const auto & [k, fv] : v.as<Record>().fields) obj[k] = to_wire(fv, opts);
      return obj;
    }
    case ValueKind::List: {
      json arr = json::array();
      for (const auto & item : v.as<List>()) arr.push_back(to_wire(item, opts));
      return arr;
    }
  }
  return nullptr;
}

Value from_wire(
  const json & j, const TypeRef & type, const DomainModel & model, const WireOptions & opts)
{
  if (!type.is_set) return scalar_from_wire(j, type, model, opts);
  if (!j.is_array()) decode_error("expected " + type.str() + " array, got " + j.dump());
  List items;
  for (const auto & item : j) items.push_back(scalar_from_wire(item, type, model, opts));
  return Value(std::move(items));
}

}  // namespace flowforge

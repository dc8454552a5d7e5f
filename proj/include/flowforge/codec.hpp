#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "json.hpp"

#include "flowforge/domain.hpp"
#include "flowforge/value.hpp"

namespace flowforge
{

using json = nlohmann::json;

/// Content-addressed image bytes: `<dir>/<sha256>`.
class BlobStore
{
public:
  explicit BlobStore(std::filesystem::path dir);

  Image put(std::string_view media_type, std::string_view bytes) const;
  /// Throws E_NOT_FOUND for an unknown reference.
  std::string get(const Image & image) const;
  const std::filesystem::path & dir() const { return dir_; }

private:
  std::filesystem::path dir_;
};

std::string sha256_hex(std::string_view bytes);
std::string base64_encode(std::string_view bytes);
/// Throws E_DECODE on malformed input.
std::string base64_decode(std::string_view text);

/// Snapshot encoding: `{"$kind": "...", ...}` for every value.
json to_snapshot_json(const Value & v);
/// Throws E_CORRUPT_IMAGE.
Value from_snapshot_json(const json & j);

/// How IMAGE values cross a wire boundary: as `{mediaType, ref}` or, with a
/// blob store, inline as `{mediaType, data}` (base64).
struct WireOptions
{
  const BlobStore * blobs = nullptr;
  bool inline_images = false;
};

/// Wire encoding: snapshot encoding without `$kind` (plain JSON values,
/// records as objects, sets as arrays, DATE as ISO text, LOCATION {lat, lon}).
json to_wire(const Value & v, const WireOptions & opts = {});

/// Decodes against the declared type. Throws E_DECODE on shape mismatch.
Value from_wire(
  const json & j, const TypeRef & type, const DomainModel & model, const WireOptions & opts = {});

}  // namespace flowforge

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "flowforge/domain.hpp"
#include "flowforge/flow.hpp"
#include "flowforge/value.hpp"

namespace flowforge
{

/// A criterion whose value has been resolved against the data-flow.
struct BoundCriterion
{
  Path field;
  CriterionOp op = CriterionOp::Eq;
  Value value;
};

/// Whether `doc` satisfies `c`. A missing field never matches, whatever the
/// operator. Throws E_TYPE_MISMATCH when the value cannot be compared with
/// the field.
bool matches(const Record & doc, const BoundCriterion & c);

/// Storage interface behind store/retrieve/delete steps. Stored records
/// carry an integer "_id" field.
class DocumentStore
{
public:
  virtual ~DocumentStore() = default;

  /// `value` is a record or a list of records. A record whose "_id" names a
  /// stored document replaces it; otherwise it gets a fresh id. Durable on
  /// return. Throws E_SCHEMA_VIOLATION, E_NOT_FOUND, E_IO.
  virtual std::vector<std::int64_t> store(const std::string & type, const Value & value) = 0;

  /// Conjunction of `criteria`, in id order. `want_set` false requires a
  /// single match (E_NOT_FOUND / E_AMBIGUOUS).
  virtual Value retrieve(const std::string & type, const std::vector<BoundCriterion> & criteria, bool want_set) = 0;

  /// Removes what retrieve would return; returns the count.
  virtual std::size_t remove(const std::string & type, const std::vector<BoundCriterion> & criteria) = 0;

  virtual std::size_t size(const std::string & type) = 0;
};

/// `<root>/<Type>.jsonl` per collection plus `<root>/_meta.json`. Each line is
/// a canonical JSON document or a `{"_id":N,"_deleted":true}` tombstone;
/// updates append a newer version. A lock file keeps other processes out.
class JsonLinesStore : public DocumentStore
{
public:
  /// Creates the root when missing. Throws E_LOCKED when another handle owns
  /// the root, E_SCHEMA_CHANGED when the root was created for other schemas,
  /// E_CORRUPT_STORE on unreadable files.
  JsonLinesStore(std::filesystem::path root, std::vector<EntitySchema> schemas);
  ~JsonLinesStore() override;

  JsonLinesStore(const JsonLinesStore &) = delete;
  JsonLinesStore & operator=(const JsonLinesStore &) = delete;

  std::vector<std::int64_t> store(const std::string & type, const Value & value) override;
  Value retrieve(const std::string & type, const std::vector<BoundCriterion> & criteria, bool want_set) override;
  std::size_t remove(const std::string & type, const std::vector<BoundCriterion> & criteria) override;
  std::size_t size(const std::string & type) override;

  const std::filesystem::path & root() const { return root_; }

private:
  struct Collection
  {
    const EntitySchema * schema = nullptr;
    std::map<std::int64_t, Record> docs;
    std::int64_t next_id = 1;
    std::size_t lines = 0;
  };

  Collection & collection(const std::string & type);
  void load(const std::string & type, Collection & c);
  void append(const std::string & type, Collection & c, const std::vector<std::string> & lines);
  void write_meta();
  /// Rewrites the file once dead lines dominate.
  void compact(const std::string & type, Collection & c);

  std::filesystem::path root_;
  std::vector<EntitySchema> schemas_;
  std::string fingerprint_;
  std::map<std::string, Collection> collections_;
  int lock_fd_ = -1;
  std::mutex mutex_;
};

}  // namespace flowforge

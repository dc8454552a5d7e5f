#include "flowforge/persistence.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <fstream>
#include <sstream>

#include "flowforge/codec.hpp"
#include "flowforge/expr.hpp"

namespace flowforge
{

namespace fs = std::filesystem;

namespace
{

[[noreturn]] void io_error(const std::string & what)
{
  throw Error("E_IO", what + ": " + std::strerror(errno));
}

[[noreturn]] void violation(const std::string & what) { throw Error("E_SCHEMA_VIOLATION", what); }

void fsync_path(const fs::path & p, int flags)
{
  const int fd = ::open(p.c_str(), flags);
  if (fd < 0) io_error("cannot open " + p.string());
  ::fsync(fd);
  ::close(fd);
}

void write_all(int fd, const std::string & data, const fs::path & p)
{
  std::size_t done = 0;
  while (done < data.size()) {
    const auto n = ::write(fd, data.data() + done, data.size() - done);
    if (n < 0) {
      if (errno == EINTR) continue;
      io_error("cannot write " + p.string());
    }
    done += static_cast<std::size_t>(n);
  }
}

// Temp file, fsync, rename, fsync the directory.
void replace_file(const fs::path & target, const std::string & content)
{
  const fs::path tmp = target.string() + ".tmp";
  const int fd = ::open(tmp.c_str(), O_WRONLY | O_CREAT | O_TRUNC | O_CLOEXEC, 0644);
  if (fd < 0) io_error("cannot create " + tmp.string());
  write_all(fd, content, tmp);
  if (::fsync(fd) != 0) {
    ::close(fd);
    io_error("cannot sync " + tmp.string());
  }
  ::close(fd);
  if (::rename(tmp.c_str(), target.c_str()) != 0) io_error("cannot rename " + tmp.string());
  fsync_path(target.parent_path(), O_RDONLY | O_DIRECTORY);
}

std::string read_text(const fs::path & p)
{
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Schema conformance ----------------------------------------------------------

class Conformer
{
public:
  explicit Conformer(const std::vector<EntitySchema> & schemas) : schemas_(schemas) {}

  Record top(const Record & r, const EntitySchema & schema)
  {
    return record(r, schema.collection, schema.fields, true);
  }

private:
  const std::vector<FieldDescriptor> & fields_of(const std::string & type)
  {
    for (const auto & s : schemas_) {
      if (s.collection == type) return s.fields;
    }
    violation("no schema for record type '" + type + "'");
  }

  Record record(const Record & r, const std::string & type, const std::vector<FieldDescriptor> & fields, bool top)
  {
    if (!r.type_name.empty() && r.type_name != type) {
      violation("a " + r.type_name + " record cannot be stored as " + type);
    }
    Record out;
    out.type_name = type;
    for (const auto & [name, v] : r.fields) {
      if (top && name == kIdField) {
        if (!v.is<std::int64_t>()) violation("_id must be an INTEGER");
        out.fields.emplace(name, v);
        continue;
      }
      const FieldDescriptor * fd = nullptr;
      for (const auto & f : fields) {
        if (f.name == name) fd = &f;
      }
      if (!fd) violation("type " + type + " has no attribute '" + name + "'");
      out.fields.emplace(name, field(v, *fd));
    }
    return out;
  }

  Value field(const Value & v, const FieldDescriptor & fd)
  {
    if (!fd.is_set) return scalar(v, fd);
    if (!v.is<List>()) violation("attribute '" + fd.name + "' holds a set, got " + std::string(value_kind_name(v.kind())));
    List items;
    for (const auto & item : v.as<List>()) items.push_back(scalar(item, fd));
    return Value(std::move(items));
  }

  Value scalar(const Value & v, const FieldDescriptor & fd)
  {
    const auto got = std::string(value_kind_name(v.kind()));
    if (fd.kind == "RECORD") {
      if (!v.is<Record>()) violation("attribute '" + fd.name + "' holds " + fd.record_type + " records, got " + got);
      return Value(record(v.as<Record>(), fd.record_type, fd.recursive ? fields_of(fd.record_type) : fd.fields, false));
    }
    const auto want = basic_type_from_name(fd.kind);
    if (want == BasicType::Float && v.is<std::int64_t>()) return Value(static_cast<double>(v.as<std::int64_t>()));
    if (v.basic() != want) violation("attribute '" + fd.name + "' is " + fd.kind + ", got " + got);
    return v;
  }

  const std::vector<EntitySchema> & schemas_;
};

json encode(const Record & r)
{
  json j = json::object();
  for (const auto & [k, v] : r.fields) {
    if (k == kIdField) j[k] = v.as<std::int64_t>();
    else j[k] = to_snapshot_json(v);
  }
  return j;
}

Record decode(const json & j, const std::string & type)
{
  Record r;
  r.type_name = type;
  for (const auto & [k, v] : j.items()) {
    if (k == kIdField) r.fields.emplace(k, Value(v.get<std::int64_t>()));
    else r.fields.emplace(k, from_snapshot_json(v));
  }
  return r;
}

const Value * walk(const Record & doc, const Path & p)
{
  const Record * at = &doc;
  const Value * v = nullptr;
  for (std::size_t i = 0; i < p.segments.size(); ++i) {
    if (!at) return nullptr;
    auto it = at->fields.find(p.segments[i]);
    if (it == at->fields.end()) return nullptr;
    v = &it->second;
    at = v->is<Record>() ? &v->as<Record>() : nullptr;
  }
  return v;
}

bool matches_all(const Record & doc, const std::vector<BoundCriterion> & criteria)
{
  for (const auto & c : criteria) {
    if (!matches(doc, c)) return false;
  }
  return true;
}

}  // namespace

bool matches(const Record & doc, const BoundCriterion & c)
{
  const Value * v = walk(doc, c.field);
  if (!v) return false;
  switch (c.op) {
    case CriterionOp::Eq: return equal_values(*v, c.value);
    case CriterionOp::Ne: return !equal_values(*v, c.value);
    case CriterionOp::Lt: return compare_values(*v, c.value) < 0;
    case CriterionOp::Le: return compare_values(*v, c.value) <= 0;
    case CriterionOp::Gt: return compare_values(*v, c.value) > 0;
    case CriterionOp::Ge: return compare_values(*v, c.value) >= 0;
    case CriterionOp::Contains:
      if (v->is<List>()) {
        for (const auto & item : v->as<List>()) {
          if (equal_values(item, c.value)) return true;
        }
        return false;
      }
      if (v->is<std::string>() && c.value.is<std::string>()) {
        return v->as<std::string>().find(c.value.as<std::string>()) != std::string::npos;
      }
      throw Error("E_TYPE_MISMATCH", "'contains' needs a set or STRING attribute and a matching value");
  }
  return false;
}

JsonLinesStore::JsonLinesStore(fs::path root, std::vector<EntitySchema> schemas)
: root_(std::move(root)), schemas_(std::move(schemas)), fingerprint_(sha256_hex(serialize_schemas(schemas_)))
{
  std::error_code ec;
  fs::create_directories(root_, ec);
  if (ec) throw Error("E_IO", "cannot create store root " + root_.string() + ": " + ec.message());
  const fs::path lock = root_ / ".lock";
  lock_fd_ = ::open(lock.c_str(), O_RDWR | O_CREAT | O_CLOEXEC, 0644);
  if (lock_fd_ < 0) io_error("cannot open " + lock.string());
  if (::flock(lock_fd_, LOCK_EX | LOCK_NB) != 0) {
    ::close(lock_fd_);
    lock_fd_ = -1;
    throw Error("E_LOCKED", "store " + root_.string() + " is in use by another handle");
  }

  try {
    const fs::path meta = root_ / "_meta.json";
    if (fs::exists(meta)) {
      json j;
      try {
        j = json::parse(read_text(meta));
      } catch (const json::exception & e) {
        throw Error("E_CORRUPT_STORE", meta.string() + ": " + e.what());
      }
      if (j.value("schema", "") != fingerprint_) {
        throw Error("E_SCHEMA_CHANGED", "store " + root_.string() + " was created for different types");
      }
      const json counters = j.value("next_id", json::object());
      for (const auto & [type, next] : counters.items()) {
        collections_[type].next_id = next.get<std::int64_t>();
      }
    } else {
      write_meta();
    }
  } catch (...) {
    ::close(lock_fd_);
    lock_fd_ = -1;
    throw;
  }
}

JsonLinesStore::~JsonLinesStore()
{
  if (lock_fd_ >= 0) {
    ::flock(lock_fd_, LOCK_UN);
    ::close(lock_fd_);
  }
}

JsonLinesStore::Collection & JsonLinesStore::collection(const std::string & type)
{
  const EntitySchema * schema = nullptr;
  for (const auto & s : schemas_) {
    if (s.collection == type) schema = &s;
  }
  if (!schema) throw Error("E_SCHEMA_VIOLATION", "no collection for type '" + type + "'");
  auto & c = collections_[type];
  if (!c.schema) {
    c.schema = schema;
    load(type, c);
  }
  return c;
}

void JsonLinesStore::load(const std::string & type, Collection & c)
{
  const fs::path file = root_ / (type + ".jsonl");
  if (!fs::exists(file)) return;
  const std::string text = read_text(file);
  std::size_t pos = 0;
  int line_no = 0;
  while (pos < text.size()) {
    const auto nl = text.find('\n', pos);
    ++line_no;
    // A final line without its newline is a torn append; drop it.
    if (nl == std::string::npos) break;
    const auto line = std::string_view(text).substr(pos, nl - pos);
    pos = nl + 1;
    if (line.empty()) continue;
    try {
      const auto j = json::parse(line);
      const auto id = j.at(std::string(kIdField)).get<std::int64_t>();
      if (j.value("_deleted", false)) c.docs.erase(id);
      else c.docs[id] = decode(j, type);
      c.next_id = std::max(c.next_id, id + 1);
      ++c.lines;
    } catch (const std::exception & e) {
      throw Error("E_CORRUPT_STORE", file.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
}

void JsonLinesStore::append(const std::string & type, Collection & c, const std::vector<std::string> & lines)
{
  const fs::path file = root_ / (type + ".jsonl");
  const bool fresh = !fs::exists(file);
  const int fd = ::open(file.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
  if (fd < 0) io_error("cannot open " + file.string());
  std::string data;
  for (const auto & l : lines) data += l + "\n";
  try {
    write_all(fd, data, file);
  } catch (...) {
    ::close(fd);
    throw;
  }
  if (::fsync(fd) != 0) {
    ::close(fd);
    io_error("cannot sync " + file.string());
  }
  ::close(fd);
  if (fresh) fsync_path(root_, O_RDONLY | O_DIRECTORY);
  c.lines += lines.size();
}

void JsonLinesStore::compact(const std::string & type, Collection & c)
{
  if (c.lines <= 64 || c.lines <= 2 * c.docs.size()) return;
  std::string data;
  for (const auto & [id, doc] : c.docs) data += encode(doc).dump() + "\n";
  replace_file(root_ / (type + ".jsonl"), data);
  c.lines = c.docs.size();
}

void JsonLinesStore::write_meta()
{
  json next = json::object();
  for (const auto & [type, c] : collections_) next[type] = c.next_id;
  json j = {{"schema", fingerprint_}, {"next_id", next}};
  replace_file(root_ / "_meta.json", j.dump() + "\n");
}

std::vector<std::int64_t> JsonLinesStore::store(const std::string & type, const Value & value)
{
  std::lock_guard lock(mutex_);
  auto & c = collection(type);
  std::vector<Record> incoming;
  if (value.is<Record>()) incoming.push_back(value.as<Record>());
  else if (value.is<List>()) {
    for (const auto & v : value.as<List>()) {
      if (!v.is<Record>()) violation("only records can be stored, got " + std::string(value_kind_name(v.kind())));
      incoming.push_back(v.as<Record>());
    }
  } else {
    violation("only records can be stored, got " + std::string(value_kind_name(value.kind())));
  }

  Conformer conform(schemas_);
  std::vector<Record> docs;
  std::vector<std::int64_t> ids;
  std::int64_t next = c.next_id;
  for (const auto & r : incoming) {
    Record doc = conform.top(r, *c.schema);
    auto it = doc.fields.find(std::string(kIdField));
    if (it != doc.fields.end()) {
      const auto id = it->second.as<std::int64_t>();
      if (!c.docs.count(id)) throw Error("E_NOT_FOUND", type + " document " + std::to_string(id) + " does not exist");
      ids.push_back(id);
    } else {
      ids.push_back(next);
      doc.fields.emplace(std::string(kIdField), Value(next++));
    }
    docs.push_back(std::move(doc));
  }
  if (docs.empty()) return ids;

  // Claim the ids before writing documents so a crash can only skip ids.
  if (next != c.next_id) {
    const auto saved = c.next_id;
    c.next_id = next;
    try {
      write_meta();
    } catch (...) {
      c.next_id = saved;
      throw;
    }
  }
  std::vector<std::string> lines;
  for (const auto & d : docs) lines.push_back(encode(d).dump());
  append(type, c, lines);
  for (std::size_t i = 0; i < docs.size(); ++i) c.docs[ids[i]] = std::move(docs[i]);
  compact(type, c);
  return ids;
}

Value JsonLinesStore::retrieve(const std::string & type, const std::vector<BoundCriterion> & criteria, bool want_set)
{
  std::lock_guard lock(mutex_);
  auto & c = collection(type);
  List found;
  for (const auto & [id, doc] : c.docs) {
    if (matches_all(doc, criteria)) found.push_back(Value(doc));
  }
  if (want_set) return Value(std::move(found));
  if (found.empty()) throw Error("E_NOT_FOUND", "no " + type + " matches the criteria");
  if (found.size() > 1) {
    throw Error("E_AMBIGUOUS", std::to_string(found.size()) + " " + type + " documents match; expected one");
  }
  return std::move(found.front());
}

std::size_t JsonLinesStore::remove(const std::string & type, const std::vector<BoundCriterion> & criteria)
{
  std::lock_guard lock(mutex_);
  auto & c = collection(type);
  std::vector<std::int64_t> doomed;
  for (const auto & [id, doc] : c.docs) {
    if (matches_all(doc, criteria)) doomed.push_back(id);
  }
  if (doomed.empty()) return 0;
  std::vector<std::string> lines;
  for (auto id : doomed) lines.push_back(json{{std::string(kIdField), id}, {"_deleted", true}}.dump());
  append(type, c, lines);
  for (auto id : doomed) c.docs.erase(id);
  compact(type, c);
  return doomed.size();
}

std::size_t JsonLinesStore::size(const std::string & type)
{
  std::lock_guard lock(mutex_);
  return collection(type).docs.size();
}

}  // namespace flowforge

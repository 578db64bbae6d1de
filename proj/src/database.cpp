#include "ragseg/database.hpp"

#include <cmath>
#include <fstream>
#include <iterator>
#include <sstream>

#include "byte_io.hpp"

namespace ragseg {

namespace detail {

std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open '" + path + "' for reading");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::string& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot open '" + path + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::IoError, "write to '" + path + "' failed");
}

}  // namespace detail

ClassId ClassRegistry::add(std::string_view name) {
  if (name.empty()) throw Error(ErrorCode::InvalidName, "class name must be nonempty");
  if (auto it = ids_.find(std::string(name)); it != ids_.end()) return it->second;
  const auto id = static_cast<ClassId>(names_.size());
  names_.emplace_back(name);
  ids_.emplace(names_.back(), id);
  return id;
}

std::optional<ClassId> ClassRegistry::find(std::string_view name) const {
  if (auto it = ids_.find(std::string(name)); it != ids_.end()) return it->second;
  return std::nullopt;
}

EmbeddingDatabase::EmbeddingDatabase(std::size_t dim, bool normalized)
    : dim_(dim),
      normalized_(normalized),
      vectors_(std::make_shared<std::vector<float>>()),
      class_ids_(std::make_shared<std::vector<ClassId>>()) {}

EmbeddingDatabase EmbeddingDatabase::create(std::size_t dim, bool normalized) {
  if (dim == 0) throw Error(ErrorCode::InvalidConfig, "database dim must be >= 1");
  if (dim > std::numeric_limits<std::uint32_t>::max()) throw Error(ErrorCode::InvalidConfig, "dim too large");
  return EmbeddingDatabase(dim, normalized);
}

ClassId EmbeddingDatabase::register_class(std::string_view name) { return registry_.add(name); }

void EmbeddingDatabase::validate(const EmbeddingRecord& record) const {
  if (static_cast<std::size_t>(record.vector.size()) != dim_) {
    throw Error(ErrorCode::ShapeMismatch, "record dim " + std::to_string(record.vector.size()) +
                                              " != database dim " + std::to_string(dim_));
  }
  if (!registry_.contains(record.class_id)) {
    throw Error(ErrorCode::UnknownClass, "class id " + std::to_string(record.class_id) + " is not registered");
  }
  if (!record.vector.allFinite()) throw Error(ErrorCode::DegenerateEmbedding, "record has non-finite components");
  if (normalized_ && std::abs(record.vector.cast<double>().norm() - 1.0) > 1e-4) {
    throw Error(ErrorCode::DegenerateEmbedding, "database stores unit vectors; record is not normalized");
  }
}

void EmbeddingDatabase::detach() {
  if (vectors_.use_count() > 1) vectors_ = std::make_shared<std::vector<float>>(*vectors_);
  if (class_ids_.use_count() > 1) class_ids_ = std::make_shared<std::vector<ClassId>>(*class_ids_);
}

std::size_t EmbeddingDatabase::insert(const EmbeddingRecord& record) {
  validate(record);
  detach();
  const std::size_t index = size();
  vectors_->insert(vectors_->end(), record.vector.data(), record.vector.data() + dim_);
  class_ids_->push_back(record.class_id);
  source_ids_.push_back(record.source_id);
  return index;
}

std::size_t EmbeddingDatabase::insert_batch(std::span<const EmbeddingRecord> records) {
  for (std::size_t i = 0; i < records.size(); ++i) {
    try {
      validate(records[i]);
    } catch (const Error& e) {
      rethrow_at(e, "batch element", i);
    }
  }
  detach();
  vectors_->reserve(vectors_->size() + records.size() * dim_);
  for (const auto& r : records) {
    vectors_->insert(vectors_->end(), r.vector.data(), r.vector.data() + dim_);
    class_ids_->push_back(r.class_id);
    source_ids_.push_back(r.source_id);
  }
  return records.size();
}

DatabaseStats EmbeddingDatabase::stats() const {
  DatabaseStats s;
  s.total_records = size();
  s.class_count = registry_.size();
  for (ClassId c : *class_ids_) ++s.per_class_counts[c];
  s.vector_bytes_per_record = sizeof(float) * dim_;
  s.approx_bytes = s.total_records * (s.vector_bytes_per_record + kRecordMetadataBytes);
  return s;
}

Snapshot EmbeddingDatabase::snapshot() const { return Snapshot(vectors_, class_ids_, dim_, size(), normalized_); }

Eigen::Map<const Embedding> EmbeddingDatabase::vector(std::size_t i) const {
  if (i >= size()) throw std::out_of_range("record index out of range");
  return Eigen::Map<const Embedding>(vectors_->data() + i * dim_, static_cast<Eigen::Index>(dim_));
}

std::vector<std::uint8_t> EmbeddingDatabase::serialize() const {
  detail::ByteWriter w;
  w.bytes("KNDB");
  w.put<std::uint32_t>(kFormatVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(dim_));
  w.put<std::uint8_t>(normalized_ ? 1 : 0);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(registry_.size()));
  for (const auto& name : registry_.names()) {
    w.put<std::uint32_t>(static_cast<std::uint32_t>(name.size()));
    w.bytes(name);
  }
  w.put<std::uint64_t>(size());
  w.buffer().reserve(w.buffer().size() + size() * (dim_ * sizeof(float) + kRecordMetadataBytes) + 4);
  for (std::size_t i = 0; i < size(); ++i) {
    w.put<std::uint32_t>((*class_ids_)[i]);
    w.put<std::uint64_t>(source_ids_[i]);
    w.floats(std::span<const float>(vectors_->data() + i * dim_, dim_));
  }
  w.put_crc();
  return std::move(w.buffer());
}

EmbeddingDatabase EmbeddingDatabase::deserialize(std::span<const std::uint8_t> bytes) {
  detail::ByteReader r(bytes, Error(Corruption::Truncated, "database ends before its declared contents"));
  if (r.bytes(4) != "KNDB") throw Error(Corruption::BadMagic, "expected magic KNDB");
  const auto version = r.get<std::uint32_t>();
  if (version != kFormatVersion) {
    throw Error(Corruption::VersionMismatch, "file version " + std::to_string(version) + ", supported " +
                                                 std::to_string(kFormatVersion));
  }
  const auto dim = r.get<std::uint32_t>();
  const auto normalized = r.get<std::uint8_t>();
  const auto class_count = r.get<std::uint32_t>();
  std::vector<std::string> names;
  for (std::uint32_t c = 0; c < class_count; ++c) {
    const auto len = r.get<std::uint32_t>();
    names.emplace_back(r.bytes(len));
  }
  const auto record_count = r.get<std::uint64_t>();
  const std::uint64_t record_bytes = std::uint64_t{dim} * sizeof(float) + kRecordMetadataBytes;
  if (record_count > r.remaining() / std::max<std::uint64_t>(record_bytes, 1)) {
    throw Error(Corruption::Truncated, "declares " + std::to_string(record_count) + " records, not enough bytes");
  }

  std::vector<ClassId> classes(record_count);
  std::vector<std::uint64_t> sources(record_count);
  std::vector<float> vectors(record_count * dim);
  for (std::uint64_t i = 0; i < record_count; ++i) {
    classes[i] = r.get<std::uint32_t>();
    sources[i] = r.get<std::uint64_t>();
    r.floats(std::span<float>(vectors.data() + i * dim, dim));
  }
  const std::size_t covered = r.position();
  const auto stored_crc = r.get<std::uint32_t>();
  if (r.remaining() != 0) throw Error(Corruption::Checksum, "trailing bytes after checksum");
  if (detail::crc32_of(bytes.first(covered)) != stored_crc) throw Error(Corruption::Checksum, "CRC32 mismatch");

  if (dim == 0) throw Error(Corruption::Checksum, "dim is zero");
  EmbeddingDatabase db(dim, normalized != 0);
  for (const auto& name : names) {
    if (name.empty() || db.registry_.find(name)) throw Error(Corruption::Checksum, "invalid class registry");
    db.registry_.add(name);
  }
  for (ClassId c : classes) {
    if (c >= class_count) throw Error(Corruption::Checksum, "record references unregistered class");
  }
  *db.vectors_ = std::move(vectors);
  *db.class_ids_ = std::move(classes);
  db.source_ids_ = std::move(sources);
  return db;
}

void EmbeddingDatabase::save(std::ostream& sink) const {
  const auto bytes = serialize();
  sink.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!sink) throw Error(ErrorCode::IoError, "database sink is not writable");
}

void EmbeddingDatabase::save(const std::string& path) const { detail::write_file(path, serialize()); }

EmbeddingDatabase EmbeddingDatabase::load(std::istream& source) {
  const std::vector<std::uint8_t> bytes{std::istreambuf_iterator<char>(source), std::istreambuf_iterator<char>()};
  return deserialize(bytes);
}

EmbeddingDatabase EmbeddingDatabase::load(const std::string& path) { return deserialize(detail::read_file(path)); }

}  // namespace ragseg

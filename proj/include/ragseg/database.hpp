#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "ragseg/features.hpp"

namespace ragseg {

using ClassId = std::uint32_t;

/// Append-only bijection between class names and dense ids 0..C-1.
class ClassRegistry {
 public:
  ClassId add(std::string_view name);
  std::optional<ClassId> find(std::string_view name) const;
  const std::string& name(ClassId id) const { return names_.at(id); }
  std::size_t size() const { return names_.size(); }
  bool contains(ClassId id) const { return id < names_.size(); }
  const std::vector<std::string>& names() const { return names_; }

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, ClassId> ids_;
};

struct EmbeddingRecord {
  Embedding vector;
  ClassId class_id = 0;
  std::uint64_t source_id = 0;
};

/// Immutable view of the first `size()` records at the time it was taken.
/// Vectors are laid out as the columns of a dim x N matrix.
class Snapshot {
 public:
  using Matrix = Eigen::Map<const Eigen::MatrixXf>;

  Snapshot() = default;
  Snapshot(std::shared_ptr<const std::vector<float>> vectors, std::shared_ptr<const std::vector<ClassId>> classes,
           std::size_t dim, std::size_t count, bool normalized)
      : vectors_(std::move(vectors)), classes_(std::move(classes)), dim_(dim), count_(count), normalized_(normalized) {}

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return count_; }
  bool empty() const { return count_ == 0; }
  bool normalized() const { return normalized_; }

  Matrix matrix() const {
    return Matrix(vectors_ ? vectors_->data() : nullptr, static_cast<Eigen::Index>(dim_),
                  static_cast<Eigen::Index>(count_));
  }
  const float* data(std::size_t i) const { return vectors_->data() + i * dim_; }
  Eigen::Map<const Embedding> vector(std::size_t i) const {
    return Eigen::Map<const Embedding>(data(i), static_cast<Eigen::Index>(dim_));
  }
  ClassId class_id(std::size_t i) const { return (*classes_)[i]; }

 private:
  std::shared_ptr<const std::vector<float>> vectors_;
  std::shared_ptr<const std::vector<ClassId>> classes_;
  std::size_t dim_ = 0;
  std::size_t count_ = 0;
  bool normalized_ = true;
};

struct DatabaseStats {
  std::uint64_t total_records = 0;
  std::uint64_t class_count = 0;
  std::map<ClassId, std::uint64_t> per_class_counts;
  std::uint64_t vector_bytes_per_record = 0;
  std::uint64_t approx_bytes = 0;
};

/// The vectorized embedding store: fixed dim, append-only records, and a
/// growing class vocabulary. No image data is ever kept.
///
/// Readers-writer contract: concurrent const access is safe; mutation needs
/// exclusive access. Snapshots stay valid and unchanged across later inserts
/// (storage is copied on the first write after a snapshot is taken).
class EmbeddingDatabase {
 public:
  static constexpr std::uint32_t kFormatVersion = 1;
  static constexpr std::size_t kRecordMetadataBytes = sizeof(std::uint32_t) + sizeof(std::uint64_t);
  static constexpr std::size_t kDefaultDim = 1536;

  static EmbeddingDatabase create(std::size_t dim = kDefaultDim, bool normalized = true);

  ClassId register_class(std::string_view name);
  std::size_t insert(const EmbeddingRecord& record);
  /// All-or-nothing; returns the number of records added.
  std::size_t insert_batch(std::span<const EmbeddingRecord> records);

  DatabaseStats stats() const;
  Snapshot snapshot() const;

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return class_ids_->size(); }
  bool normalized() const { return normalized_; }
  const ClassRegistry& registry() const { return registry_; }
  Eigen::Map<const Embedding> vector(std::size_t i) const;
  ClassId class_id(std::size_t i) const { return class_ids_->at(i); }
  std::uint64_t source_id(std::size_t i) const { return source_ids_.at(i); }

  void save(std::ostream& sink) const;
  void save(const std::string& path) const;
  static EmbeddingDatabase load(std::istream& source);
  static EmbeddingDatabase load(const std::string& path);
  std::vector<std::uint8_t> serialize() const;
  static EmbeddingDatabase deserialize(std::span<const std::uint8_t> bytes);

 private:
  EmbeddingDatabase(std::size_t dim, bool normalized);
  void validate(const EmbeddingRecord& record) const;
  void detach();

  std::size_t dim_;
  bool normalized_;
  ClassRegistry registry_;
  std::shared_ptr<std::vector<float>> vectors_;
  std::shared_ptr<std::vector<ClassId>> class_ids_;
  std::vector<std::uint64_t> source_ids_;
};

}  // namespace ragseg

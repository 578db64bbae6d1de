#pragma once

#include <atomic>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ragseg/database.hpp"

namespace ragseg {

/// One neighbor: position in the snapshot, its class, and cosine similarity.
struct RetrievalHit {
  std::size_t record_index = 0;
  ClassId class_id = 0;
  float similarity = 0.0f;

  friend bool operator==(const RetrievalHit&, const RetrievalHit&) = default;
};

/// Strict weak order used everywhere hits are ranked: higher similarity
/// first, lower record index on ties.
inline bool ranks_before(const RetrievalHit& a, const RetrievalHit& b) {
  if (a.similarity != b.similarity) return a.similarity > b.similarity;
  return a.record_index < b.record_index;
}

/// Plain cosine, accumulated in double. Used to cross-check the dot-product
/// path on normalized data.
template <typename A, typename B>
double cosine_two_pass(const Eigen::MatrixBase<A>& a, const Eigen::MatrixBase<B>& b) {
  const auto ad = a.template cast<double>();
  const auto bd = b.template cast<double>();
  return ad.dot(bd) / (ad.norm() * bd.norm());
}

/// Common query surface. Indexes are immutable after construction, so
/// concurrent queries are safe; `query_count` counts every search issued.
class SearchIndex {
 public:
  SearchIndex() = default;
  SearchIndex(const SearchIndex&) = delete;
  SearchIndex& operator=(const SearchIndex&) = delete;
  virtual ~SearchIndex() = default;

  virtual std::vector<RetrievalHit> search(const Eigen::Ref<const Embedding>& query, std::size_t k) const = 0;
  virtual std::size_t size() const = 0;
  virtual std::size_t dim() const = 0;

  std::uint64_t query_count() const { return queries_.load(std::memory_order_relaxed); }

 protected:
  void count_query() const { queries_.fetch_add(1, std::memory_order_relaxed); }
  // Normalized query in double, after the dimension check.
  Vector<double> prepare_query(const Eigen::Ref<const Embedding>& query, std::size_t k) const;
  // Re-scores candidates in double, orders them, and keeps the best k.
  std::vector<RetrievalHit> finalize(const Vector<double>& query, std::span<const std::uint32_t> candidates,
                                     std::size_t k) const;
  virtual Eigen::Map<const Embedding> stored(std::size_t i) const = 0;
  virtual ClassId stored_class(std::size_t i) const = 0;

 private:
  mutable std::atomic<std::uint64_t> queries_{0};
};

/// Brute-force cosine top-k over a snapshot. Scans in fixed column blocks
/// with a bounded best-k heap.
class ExactIndex final : public SearchIndex {
 public:
  static constexpr Eigen::Index kBlockColumns = 4096;

  explicit ExactIndex(Snapshot snapshot);

  std::vector<RetrievalHit> search(const Eigen::Ref<const Embedding>& query, std::size_t k) const override;
  std::size_t size() const override { return snapshot_.size(); }
  std::size_t dim() const override { return snapshot_.dim(); }
  const Snapshot& snapshot() const { return snapshot_; }

 protected:
  Eigen::Map<const Embedding> stored(std::size_t i) const override;
  ClassId stored_class(std::size_t i) const override { return snapshot_.class_id(i); }

 private:
  Eigen::Map<const Eigen::MatrixXf> unit_vectors() const;

  Snapshot snapshot_;
  Eigen::MatrixXf normalized_copy_;  // only used when the snapshot holds raw-norm vectors
};

std::unique_ptr<ExactIndex> build_exact(const Snapshot& snapshot);
std::vector<RetrievalHit> query_exact(const ExactIndex& index, const Eigen::Ref<const Embedding>& query,
                                      std::size_t k);

/// |approx ∩ exact| / k over record indices. Lists must have the same length.
double recall_at_k(std::span<const RetrievalHit> approx, std::span<const RetrievalHit> exact);

}  // namespace ragseg

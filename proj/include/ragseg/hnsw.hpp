#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "ragseg/index.hpp"

namespace ragseg {

struct HnswConfig {
  std::uint32_t M = 16;
  std::uint32_t ef_construction = 100;
  std::uint32_t ef_search = 64;
  std::uint64_t seed = 42;

  void validate() const;
  friend bool operator==(const HnswConfig&, const HnswConfig&) = default;
};

/// Hierarchical navigable small-world graph over a snapshot.
///
/// Layer 0 keeps up to 2M links per node, upper layers up to M. Neighbors are
/// chosen with the diversity heuristic. Level draws come from a seeded
/// mt19937_64, so a fixed (seed, snapshot) pair always yields the same graph.
class HnswIndex final : public SearchIndex {
 public:
  static constexpr std::uint32_t kCacheVersion = 1;

  HnswIndex(Snapshot snapshot, const HnswConfig& config);

  /// Search with the configured ef_search.
  std::vector<RetrievalHit> search(const Eigen::Ref<const Embedding>& query, std::size_t k) const override;
  std::vector<RetrievalHit> search(const Eigen::Ref<const Embedding>& query, std::size_t k,
                                   std::size_t ef_search) const;

  std::size_t size() const override { return snapshot_.size(); }
  std::size_t dim() const override { return snapshot_.dim(); }
  const HnswConfig& config() const { return config_; }
  int max_level() const { return max_level_; }
  int level_of(std::size_t node) const { return levels_[node]; }
  /// Links of `node` on `level`.
  std::span<const std::uint32_t> neighbors(std::size_t node, int level) const;

  /// Graph cache ("KNHX"). Loading checks the cache against the snapshot and
  /// throws StaleCache when the record count differs.
  void save(const std::string& path) const;
  std::vector<std::uint8_t> serialize() const;
  static std::unique_ptr<HnswIndex> load(Snapshot snapshot, const std::string& path);
  static std::unique_ptr<HnswIndex> deserialize(Snapshot snapshot, std::span<const std::uint8_t> bytes);

 protected:
  Eigen::Map<const Embedding> stored(std::size_t i) const override;
  ClassId stored_class(std::size_t i) const override { return snapshot_.class_id(i); }

 private:
  struct Candidate {
    float distance;
    std::uint32_t id;
    bool operator<(const Candidate& o) const { return distance < o.distance || (distance == o.distance && id < o.id); }
    bool operator>(const Candidate& o) const { return o < *this; }
  };

  HnswIndex(Snapshot snapshot, const HnswConfig& config, bool build);

  const float* unit(std::uint32_t i) const;
  float distance(const float* a, const float* b) const;
  std::size_t capacity(int level) const { return level == 0 ? 2 * config_.M : config_.M; }
  std::vector<std::uint32_t>& links(std::uint32_t node, int level);

  void insert(std::uint32_t node, int level);
  std::uint32_t greedy(const float* query, std::uint32_t entry, int level) const;
  std::vector<Candidate> search_layer(const float* query, std::uint32_t entry, std::size_t ef, int level) const;
  std::vector<std::uint32_t> select_neighbors(std::vector<Candidate> candidates, std::size_t limit) const;

  Snapshot snapshot_;
  HnswConfig config_;
  std::vector<float> normalized_copy_;
  std::vector<int> levels_;
  // links_[node][level] for every level the node lives on.
  std::vector<std::vector<std::vector<std::uint32_t>>> links_;
  std::uint32_t entry_ = 0;
  int max_level_ = -1;
};

std::unique_ptr<HnswIndex> build_hnsw(const Snapshot& snapshot, const HnswConfig& config);
std::vector<RetrievalHit> query_hnsw(const HnswIndex& index, const Eigen::Ref<const Embedding>& query, std::size_t k,
                                     std::size_t ef_search);

}  // namespace ragseg

#include "ragseg/hnsw.hpp"

#include <algorithm>
#include <cmath>
#include <queue>
#include <random>

#include "byte_io.hpp"

namespace ragseg {
namespace {

// Per-thread visited marks; bumping the epoch clears them in O(1).
struct VisitedSet {
  std::vector<std::uint32_t> marks;
  std::uint32_t epoch = 0;

  void reset(std::size_t n) {
    if (marks.size() < n) marks.assign(n, 0);
    if (++epoch == 0) {
      std::fill(marks.begin(), marks.end(), 0);
      epoch = 1;
    }
  }
  bool insert(std::uint32_t id) {
    if (marks[id] == epoch) return false;
    marks[id] = epoch;
    return true;
  }
};

VisitedSet& visited_for_thread() {
  thread_local VisitedSet visited;
  return visited;
}

}  // namespace

void HnswConfig::validate() const {
  if (M < 2) throw Error(ErrorCode::InvalidConfig, "HNSW M must be >= 2");
  if (ef_construction < M) throw Error(ErrorCode::InvalidConfig, "HNSW ef_construction must be >= M");
  if (ef_search < 1) throw Error(ErrorCode::InvalidConfig, "HNSW ef_search must be >= 1");
}

HnswIndex::HnswIndex(Snapshot snapshot, const HnswConfig& config) : HnswIndex(std::move(snapshot), config, true) {}

HnswIndex::HnswIndex(Snapshot snapshot, const HnswConfig& config, bool build)
    : snapshot_(std::move(snapshot)), config_(config) {
  config_.validate();
  if (snapshot_.size() > std::numeric_limits<std::uint32_t>::max()) {
    throw Error(ErrorCode::InvalidConfig, "HNSW supports at most 2^32-1 records");
  }
  if (!snapshot_.normalized() && !snapshot_.empty()) {
    normalized_copy_.resize(snapshot_.size() * snapshot_.dim());
    Eigen::Map<Eigen::MatrixXf>(normalized_copy_.data(), snapshot_.dim(), snapshot_.size()) =
        snapshot_.matrix().colwise().normalized();
  }
  if (!build) return;

  const std::size_t n = snapshot_.size();
  levels_.resize(n);
  links_.resize(n);
  std::mt19937_64 rng(config_.seed);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  const double level_scale = 1.0 / std::log(static_cast<double>(config_.M));
  for (std::size_t i = 0; i < n; ++i) {
    const double u = 1.0 - uniform(rng);  // (0, 1]
    levels_[i] = static_cast<int>(std::floor(-std::log(u) * level_scale));
  }
  for (std::size_t i = 0; i < n; ++i) insert(static_cast<std::uint32_t>(i), levels_[i]);
}

const float* HnswIndex::unit(std::uint32_t i) const {
  return normalized_copy_.empty() ? snapshot_.data(i) : normalized_copy_.data() + std::size_t{i} * snapshot_.dim();
}

Eigen::Map<const Embedding> HnswIndex::stored(std::size_t i) const {
  return Eigen::Map<const Embedding>(unit(static_cast<std::uint32_t>(i)), static_cast<Eigen::Index>(dim()));
}

float HnswIndex::distance(const float* a, const float* b) const {
  const auto d = static_cast<Eigen::Index>(snapshot_.dim());
  return 1.0f - Eigen::Map<const Embedding>(a, d).dot(Eigen::Map<const Embedding>(b, d));
}

std::vector<std::uint32_t>& HnswIndex::links(std::uint32_t node, int level) { return links_[node][level]; }

std::span<const std::uint32_t> HnswIndex::neighbors(std::size_t node, int level) const {
  if (level < 0 || level > levels_.at(node)) return {};
  return links_[node][level];
}

std::uint32_t HnswIndex::greedy(const float* query, std::uint32_t entry, int level) const {
  std::uint32_t current = entry;
  float best = distance(query, unit(current));
  for (bool moved = true; moved;) {
    moved = false;
    for (std::uint32_t next : links_[current][level]) {
      const float d = distance(query, unit(next));
      if (d < best || (d == best && next < current)) {
        best = d;
        current = next;
        moved = true;
      }
    }
  }
  return current;
}

std::vector<HnswIndex::Candidate> HnswIndex::search_layer(const float* query, std::uint32_t entry, std::size_t ef,
                                                          int level) const {
  VisitedSet& visited = visited_for_thread();
  visited.reset(snapshot_.size());

  std::priority_queue<Candidate, std::vector<Candidate>, std::greater<>> frontier;  // nearest on top
  std::priority_queue<Candidate> found;                                            // farthest on top
  const Candidate start{distance(query, unit(entry)), entry};
  visited.insert(entry);
  frontier.push(start);
  found.push(start);

  while (!frontier.empty()) {
    const Candidate current = frontier.top();
    if (current.distance > found.top().distance && found.size() >= ef) break;
    frontier.pop();
    for (std::uint32_t next : links_[current.id][level]) {
      if (!visited.insert(next)) continue;
      const Candidate c{distance(query, unit(next)), next};
      if (found.size() < ef || c < found.top()) {
        frontier.push(c);
        found.push(c);
        if (found.size() > ef) found.pop();
      }
    }
  }

  std::vector<Candidate> out(found.size());
  for (auto it = out.rbegin(); it != out.rend(); ++it, found.pop()) *it = found.top();
  return out;  // ascending distance
}

std::vector<std::uint32_t> HnswIndex::select_neighbors(std::vector<Candidate> candidates, std::size_t limit) const {
  std::sort(candidates.begin(), candidates.end());
  std::vector<std::uint32_t> chosen;
  chosen.reserve(limit);
  // Keep a candidate only if it is closer to the base than to every
  // neighbor already chosen; this spreads links across directions.
  for (const Candidate& c : candidates) {
    if (chosen.size() >= limit) break;
    bool diverse = true;
    for (std::uint32_t kept : chosen) {
      if (distance(unit(c.id), unit(kept)) < c.distance) {
        diverse = false;
        break;
      }
    }
    if (diverse) chosen.push_back(c.id);
  }
  return chosen;
}

void HnswIndex::insert(std::uint32_t node, int level) {
  links_[node].resize(static_cast<std::size_t>(level) + 1);
  if (max_level_ < 0) {
    entry_ = node;
    max_level_ = level;
    return;
  }

  const float* query = unit(node);
  std::uint32_t entry = entry_;
  for (int l = max_level_; l > level; --l) entry = greedy(query, entry, l);

  for (int l = std::min(level, max_level_); l >= 0; --l) {
    std::vector<Candidate> found = search_layer(query, entry, config_.ef_construction, l);
    entry = found.front().id;
    std::vector<std::uint32_t> chosen = select_neighbors(found, config_.M);
    links(node, l) = chosen;

    for (std::uint32_t other : chosen) {
      auto& back = links(other, l);
      back.push_back(node);
      if (back.size() <= capacity(l)) continue;
      std::vector<Candidate> pool;
      pool.reserve(back.size());
      for (std::uint32_t id : back) pool.push_back({distance(unit(other), unit(id)), id});
      back = select_neighbors(std::move(pool), capacity(l));
    }
  }

  if (level > max_level_) {
    max_level_ = level;
    entry_ = node;
  }
}

std::vector<RetrievalHit> HnswIndex::search(const Eigen::Ref<const Embedding>& query, std::size_t k) const {
  return search(query, k, config_.ef_search);
}

std::vector<RetrievalHit> HnswIndex::search(const Eigen::Ref<const Embedding>& query, std::size_t k,
                                            std::size_t ef_search) const {
  if (ef_search < 1) throw Error(ErrorCode::InvalidConfig, "ef_search must be >= 1");
  const Vector<double> q = prepare_query(query, k);
  count_query();
  const std::size_t n = snapshot_.size();
  if (n == 0) return {};

  std::vector<std::uint32_t> ids;
  if (k >= n) {
    ids.resize(n);
    for (std::uint32_t i = 0; i < n; ++i) ids[i] = i;
    return finalize(q, ids, k);
  }

  const Embedding qf = q.cast<float>();
  std::uint32_t entry = entry_;
  for (int l = max_level_; l > 0; --l) entry = greedy(qf.data(), entry, l);
  const auto found = search_layer(qf.data(), entry, std::max(ef_search, k), 0);
  ids.reserve(found.size());
  for (const Candidate& c : found) ids.push_back(c.id);
  return finalize(q, ids, k);
}

std::vector<std::uint8_t> HnswIndex::serialize() const {
  detail::ByteWriter w;
  w.bytes("KNHX");
  w.put<std::uint32_t>(kCacheVersion);
  w.put<std::uint32_t>(config_.M);
  w.put<std::uint32_t>(config_.ef_construction);
  w.put<std::uint32_t>(config_.ef_search);
  w.put<std::uint64_t>(config_.seed);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(snapshot_.dim()));
  w.put<std::uint64_t>(snapshot_.size());
  w.put<std::uint32_t>(entry_);
  w.put<std::int32_t>(max_level_);
  for (std::size_t i = 0; i < links_.size(); ++i) {
    w.put<std::uint32_t>(static_cast<std::uint32_t>(levels_[i]));
    for (const auto& adjacency : links_[i]) {
      w.put<std::uint32_t>(static_cast<std::uint32_t>(adjacency.size()));
      for (std::uint32_t id : adjacency) w.put<std::uint32_t>(id);
    }
  }
  w.put_crc();
  return std::move(w.buffer());
}

void HnswIndex::save(const std::string& path) const { detail::write_file(path, serialize()); }

std::unique_ptr<HnswIndex> HnswIndex::deserialize(Snapshot snapshot, std::span<const std::uint8_t> bytes) {
  detail::ByteReader r(bytes, Error(Corruption::Truncated, "HNSW cache ends early"));
  if (r.bytes(4) != "KNHX") throw Error(Corruption::BadMagic, "expected magic KNHX");
  if (r.get<std::uint32_t>() != kCacheVersion) throw Error(Corruption::VersionMismatch, "unsupported HNSW cache");
  HnswConfig cfg;
  cfg.M = r.get<std::uint32_t>();
  cfg.ef_construction = r.get<std::uint32_t>();
  cfg.ef_search = r.get<std::uint32_t>();
  cfg.seed = r.get<std::uint64_t>();
  const auto dim = r.get<std::uint32_t>();
  const auto count = r.get<std::uint64_t>();
  if (count != snapshot.size() || dim != snapshot.dim()) {
    throw Error(ErrorCode::StaleCache, "cache built for " + std::to_string(count) + " records, snapshot has " +
                                           std::to_string(snapshot.size()));
  }
  std::unique_ptr<HnswIndex> index(new HnswIndex(std::move(snapshot), cfg, false));
  index->entry_ = r.get<std::uint32_t>();
  index->max_level_ = r.get<std::int32_t>();
  index->levels_.resize(count);
  index->links_.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    const auto level = r.get<std::uint32_t>();
    if (level > 64) throw Error(Corruption::Checksum, "implausible node level");
    index->levels_[i] = static_cast<int>(level);
    index->links_[i].resize(level + 1);
    for (auto& adjacency : index->links_[i]) {
      const auto degree = r.get<std::uint32_t>();
      r.need(std::size_t{degree} * sizeof(std::uint32_t));
      adjacency.resize(degree);
      for (auto& id : adjacency) {
        id = r.get<std::uint32_t>();
        if (id >= count) throw Error(Corruption::Checksum, "link points outside the snapshot");
      }
    }
  }
  const std::size_t covered = r.position();
  if (r.get<std::uint32_t>() != detail::crc32_of(bytes.first(covered)) || r.remaining() != 0) {
    throw Error(Corruption::Checksum, "HNSW cache CRC32 mismatch");
  }
  if (count > 0 && (index->entry_ >= count || index->max_level_ != index->levels_[index->entry_])) {
    throw Error(Corruption::Checksum, "inconsistent entry point");
  }
  return index;
}

std::unique_ptr<HnswIndex> HnswIndex::load(Snapshot snapshot, const std::string& path) {
  return deserialize(std::move(snapshot), detail::read_file(path));
}

std::unique_ptr<HnswIndex> build_hnsw(const Snapshot& snapshot, const HnswConfig& config) {
  return std::make_unique<HnswIndex>(snapshot, config);
}

std::vector<RetrievalHit> query_hnsw(const HnswIndex& index, const Eigen::Ref<const Embedding>& query, std::size_t k,
                                     std::size_t ef_search) {
  return index.search(query, k, ef_search);
}

}  // namespace ragseg

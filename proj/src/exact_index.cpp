#include <algorithm>
#include <queue>
#include <unordered_set>

#include "ragseg/index.hpp"

namespace ragseg {

Vector<double> SearchIndex::prepare_query(const Eigen::Ref<const Embedding>& query, std::size_t k) const {
  if (static_cast<std::size_t>(query.size()) != dim()) {
    throw Error(ErrorCode::ShapeMismatch, "query dim " + std::to_string(query.size()) + " != index dim " +
                                              std::to_string(dim()));
  }
  if (k == 0) throw Error(ErrorCode::InvalidConfig, "k must be >= 1");
  return l2_normalize(query.cast<double>());
}

std::vector<RetrievalHit> SearchIndex::finalize(const Vector<double>& query, std::span<const std::uint32_t> candidates,
                                                std::size_t k) const {
  std::vector<RetrievalHit> hits;
  hits.reserve(candidates.size());
  for (std::uint32_t id : candidates) {
    const double sim = stored(id).cast<double>().dot(query);
    hits.push_back({id, stored_class(id), static_cast<float>(std::clamp(sim, -1.0, 1.0))});
  }
  std::sort(hits.begin(), hits.end(), ranks_before);
  if (hits.size() > k) hits.resize(k);
  return hits;
}

ExactIndex::ExactIndex(Snapshot snapshot) : snapshot_(std::move(snapshot)) {
  if (!snapshot_.normalized() && !snapshot_.empty()) {
    normalized_copy_ = snapshot_.matrix().colwise().normalized();
  }
}

Eigen::Map<const Eigen::MatrixXf> ExactIndex::unit_vectors() const {
  if (snapshot_.normalized() || snapshot_.empty()) return snapshot_.matrix();
  return Eigen::Map<const Eigen::MatrixXf>(normalized_copy_.data(), normalized_copy_.rows(), normalized_copy_.cols());
}

Eigen::Map<const Embedding> ExactIndex::stored(std::size_t i) const {
  const auto m = unit_vectors();
  return Eigen::Map<const Embedding>(m.data() + i * m.rows(), m.rows());
}

std::vector<RetrievalHit> ExactIndex::search(const Eigen::Ref<const Embedding>& query, std::size_t k) const {
  const Vector<double> q = prepare_query(query, k);
  count_query();
  if (snapshot_.empty()) return {};

  struct Scored {
    float score;
    std::uint32_t id;
  };
  // Top of the heap is the weakest of the current best-k.
  const auto better = [](const Scored& a, const Scored& b) {
    return a.score > b.score || (a.score == b.score && a.id < b.id);
  };
  std::priority_queue<Scored, std::vector<Scored>, decltype(better)> best(better);

  const Embedding qf = q.cast<float>();
  const auto vectors = unit_vectors();
  const Eigen::Index n = vectors.cols();
  Eigen::VectorXf scores(std::min(kBlockColumns, n));
  for (Eigen::Index start = 0; start < n; start += kBlockColumns) {
    const Eigen::Index width = std::min(kBlockColumns, n - start);
    scores.head(width).noalias() = vectors.middleCols(start, width).transpose() * qf;
    for (Eigen::Index j = 0; j < width; ++j) {
      const Scored s{scores[j], static_cast<std::uint32_t>(start + j)};
      if (best.size() < k) {
        best.push(s);
      } else if (better(s, best.top())) {
        best.pop();
        best.push(s);
      }
    }
  }

  std::vector<std::uint32_t> ids;
  ids.reserve(best.size());
  for (; !best.empty(); best.pop()) ids.push_back(best.top().id);
  return finalize(q, ids, k);
}

std::unique_ptr<ExactIndex> build_exact(const Snapshot& snapshot) { return std::make_unique<ExactIndex>(snapshot); }

std::vector<RetrievalHit> query_exact(const ExactIndex& index, const Eigen::Ref<const Embedding>& query,
                                      std::size_t k) {
  return index.search(query, k);
}

double recall_at_k(std::span<const RetrievalHit> approx, std::span<const RetrievalHit> exact) {
  if (approx.size() != exact.size()) {
    throw Error(ErrorCode::InvalidComparison, "hit lists differ in length: " + std::to_string(approx.size()) +
                                                  " vs " + std::to_string(exact.size()));
  }
  if (exact.empty()) return 1.0;
  std::unordered_set<std::size_t> truth;
  for (const auto& h : exact) truth.insert(h.record_index);
  const auto shared = std::count_if(approx.begin(), approx.end(),
                                    [&](const RetrievalHit& h) { return truth.contains(h.record_index); });
  return static_cast<double>(shared) / static_cast<double>(exact.size());
}

}  // namespace ragseg

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "ragseg/index.hpp"

namespace ragseg {

/// Scores over the current vocabulary. `normalized` is true only when the
/// entries are a distribution (sum to 1).
struct ProbabilityVector {
  Vector<float> values;
  bool normalized = false;

  Eigen::Index size() const { return values.size(); }
  float max() const { return values.size() ? values.maxCoeff() : 0.0f; }
  /// Index of the largest entry; the lowest index wins ties.
  ClassId argmax() const;

  /// Validates a base-model distribution (non-negative, finite, sums to 1
  /// within 1e-5).
  static ProbabilityVector from_distribution(Vector<float> values);
};

struct FusionConfig {
  std::size_t k = 16;
  float lambda = 1.2f;
  float threshold = 0.7f;
  float epsilon = 0.0f;
  bool renormalize = false;  // off: the retrieval branch is emitted as lambda * p_ret

  void validate() const;
};

/// softmax over classes of (sum of neighbor similarities per class + epsilon).
/// No hits gives the uniform distribution.
ProbabilityVector pseudo_logits(std::span<const RetrievalHit> hits, std::size_t class_count, float epsilon = 0.0f);

/// Whole-vector confidence gate: p_base when max(p_base) > threshold,
/// otherwise lambda * p_ret.
ProbabilityVector fuse(const ProbabilityVector& p_ret, const ProbabilityVector& p_base, float lambda, float threshold,
                       bool renormalize = false);

inline bool is_confident(const ProbabilityVector& p_base, float threshold) { return p_base.max() > threshold; }

struct Classification {
  ClassId class_id = 0;
  ProbabilityVector p_final;
  bool used_retrieval = false;
  bool fallback = false;  // non-confident query, but nothing to retrieve from
  std::vector<RetrievalHit> hits;
};

/// Confident queries return the base prediction without touching the index.
Classification classify_query(const Eigen::Ref<const Embedding>& query, const ProbabilityVector& p_base,
                              const SearchIndex& index, const FusionConfig& config, std::size_t class_count);

struct QueryInput {
  Embedding embedding;
  ProbabilityVector p_base;
};

/// Element-wise classify_query in input order. `threads` > 1 fans out over
/// fixed slots, so output does not depend on scheduling.
std::vector<Classification> batch_classify(std::span<const QueryInput> queries, const SearchIndex& index,
                                           const FusionConfig& config, std::size_t class_count,
                                           unsigned threads = 1);

}  // namespace ragseg

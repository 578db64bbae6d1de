#include "ragseg/fusion.hpp"

#include <cmath>
#include <exception>
#include <thread>

namespace ragseg {

ClassId ProbabilityVector::argmax() const {
  if (values.size() == 0) throw Error(ErrorCode::ShapeMismatch, "argmax of an empty vector");
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return static_cast<ClassId>(best);
}

ProbabilityVector ProbabilityVector::from_distribution(Vector<float> values) {
  if (values.size() == 0) throw Error(ErrorCode::ShapeMismatch, "empty probability vector");
  if (!values.allFinite() || (values.array() < 0.0f).any()) {
    throw Error(ErrorCode::ParseError, "probabilities must be finite and non-negative");
  }
  const double total = values.cast<double>().sum();
  if (std::abs(total - 1.0) > 1e-5) {
    throw Error(ErrorCode::ParseError, "probabilities sum to " + std::to_string(total) + ", expected 1");
  }
  return {std::move(values), true};
}

void FusionConfig::validate() const {
  if (k < 1) throw Error(ErrorCode::InvalidConfig, "k must be >= 1");
  if (!(lambda > 0.0f) || !std::isfinite(lambda)) throw Error(ErrorCode::InvalidConfig, "lambda must be > 0");
  if (!(threshold >= 0.0f && threshold <= 1.0f)) throw Error(ErrorCode::InvalidConfig, "threshold must be in [0,1]");
  if (!std::isfinite(epsilon)) throw Error(ErrorCode::InvalidConfig, "epsilon must be finite");
}

ProbabilityVector pseudo_logits(std::span<const RetrievalHit> hits, std::size_t class_count, float epsilon) {
  if (class_count == 0) throw Error(ErrorCode::ShapeMismatch, "class count must be >= 1");
  Vector<double> logits = Vector<double>::Constant(static_cast<Eigen::Index>(class_count), epsilon);
  for (const auto& hit : hits) {
    if (hit.class_id >= class_count) {
      throw Error(ErrorCode::UnknownClass, "hit class " + std::to_string(hit.class_id) + " >= class count " +
                                               std::to_string(class_count));
    }
    logits[hit.class_id] += hit.similarity;
  }
  const Vector<double> shifted = (logits.array() - logits.maxCoeff()).exp();
  return {(shifted / shifted.sum()).cast<float>(), true};
}

ProbabilityVector fuse(const ProbabilityVector& p_ret, const ProbabilityVector& p_base, float lambda, float threshold,
                       bool renormalize) {
  if (p_ret.size() != p_base.size()) {
    throw Error(ErrorCode::ShapeMismatch, "p_ret has " + std::to_string(p_ret.size()) + " classes, p_base " +
                                              std::to_string(p_base.size()));
  }
  if (is_confident(p_base, threshold)) return p_base;
  ProbabilityVector out{lambda * p_ret.values, lambda == 1.0f && p_ret.normalized};
  if (renormalize) {
    out.values /= out.values.sum();
    out.normalized = true;
  }
  return out;
}

Classification classify_query(const Eigen::Ref<const Embedding>& query, const ProbabilityVector& p_base,
                              const SearchIndex& index, const FusionConfig& config, std::size_t class_count) {
  config.validate();
  if (static_cast<std::size_t>(p_base.size()) != class_count) {
    throw Error(ErrorCode::ShapeMismatch, "p_base has " + std::to_string(p_base.size()) + " entries, vocabulary " +
                                              std::to_string(class_count));
  }
  if (static_cast<std::size_t>(query.size()) != index.dim()) {
    throw Error(ErrorCode::ShapeMismatch, "query dim does not match index");
  }

  Classification out;
  if (is_confident(p_base, config.threshold)) {
    out.class_id = p_base.argmax();
    out.p_final = p_base;
    return out;
  }
  if (index.size() == 0) {
    out.class_id = p_base.argmax();
    out.p_final = p_base;
    out.fallback = true;
    return out;
  }

  out.hits = index.search(query, config.k);
  const ProbabilityVector p_ret = pseudo_logits(out.hits, class_count, config.epsilon);
  out.p_final = fuse(p_ret, p_base, config.lambda, config.threshold, config.renormalize);
  out.class_id = out.p_final.argmax();
  out.used_retrieval = true;
  return out;
}

std::vector<Classification> batch_classify(std::span<const QueryInput> queries, const SearchIndex& index,
                                           const FusionConfig& config, std::size_t class_count, unsigned threads) {
  std::vector<Classification> out(queries.size());
  std::vector<std::exception_ptr> failures(queries.size());
  const auto run = [&](std::size_t begin, std::size_t stride) {
    for (std::size_t i = begin; i < queries.size(); i += stride) {
      try {
        out[i] = classify_query(queries[i].embedding, queries[i].p_base, index, config, class_count);
      } catch (...) {
        failures[i] = std::current_exception();
      }
    }
  };

  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::size_t>(queries.size(), 1))));
  if (threads == 1) {
    run(0, 1);
  } else {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(run, t, threads);
  }

  for (std::size_t i = 0; i < failures.size(); ++i) {
    if (!failures[i]) continue;
    try {
      std::rethrow_exception(failures[i]);
    } catch (const Error& e) {
      rethrow_at(e, "query", i);
    }
  }
  return out;
}

}  // namespace ragseg

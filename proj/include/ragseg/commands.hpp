#pragma once

// Orchestration behind the `ragseg` command-line tool. Each command is a
// plain function returning a report so it can be driven from tests.

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "ragseg/database.hpp"
#include "ragseg/fusion.hpp"
#include "ragseg/hnsw.hpp"
#include "ragseg/index.hpp"
#include "ragseg/segmentation.hpp"
#include "ragseg/synthetic.hpp"

namespace ragseg {

enum class IndexKind { Exact, Hnsw };

struct RunConfig {
  std::string db_path;
  FusionConfig fusion;
  IndexKind index = IndexKind::Exact;
  HnswConfig hnsw;
  std::string hnsw_cache;  // optional graph cache file
  StitchStrategy stitch = StitchStrategy::Product;
  float class_threshold = 0.0f;
  float mask_threshold = 0.0f;
  std::uint64_t seed = 0;
  std::string report_path;
  unsigned threads = 1;

  void validate() const;
  nlohmann::json to_json() const;
  static RunConfig from_json(const nlohmann::json& j);
  static RunConfig load(const std::string& path);
};

/// Process exit status for a failure code: 2 config, 3 data, 4 empty database.
int exit_code_for(ErrorCode code);

/// Exact or HNSW index over `snapshot` per the config; HNSW graphs are read
/// from / written to the configured cache when one is set.
std::unique_ptr<SearchIndex> make_index(const Snapshot& snapshot, const RunConfig& config);

// ---------------------------------------------------------------- ingest

struct IngestReport {
  std::size_t images = 0;
  std::size_t records_added = 0;
  std::map<std::string, std::size_t> added_per_class;
  std::size_t total_records = 0;
  nlohmann::json to_json() const;
};

/// Pools every labeled mask of each (feature file, manifest) pair into the
/// database at config.db_path (created when missing). Nothing is saved
/// unless every image succeeds.
IngestReport cmd_ingest(const RunConfig& config, std::span<const std::string> feature_files,
                        std::span<const std::string> mask_manifests);

// ----------------------------------------------------------------- query

struct NamedHit {
  RetrievalHit hit;
  std::string class_name;
};

struct QueryReport {
  std::vector<NamedHit> hits;
  std::optional<double> recall_vs_exact;  // set for HNSW queries
  std::string to_csv() const;
};

QueryReport cmd_query(const RunConfig& config, const std::string& feature_file, const std::string& mask_manifest,
                      std::size_t mask_index, std::size_t k);

// --------------------------------------------------------------- segment

struct MaskDecision {
  std::size_t mask_index = 0;
  ClassId class_id = 0;
  std::string class_name;
  float class_confidence = 0.0f;
  float mask_score = 1.0f;
  float base_confidence = 0.0f;
  bool used_retrieval = false;
  bool fallback = false;
  bool kept = false;
  nlohmann::json to_json() const;
};

struct SegmentReport {
  SemanticMap map;
  std::vector<MaskDecision> decisions;
  std::uint64_t index_queries = 0;
};

/// Classifies every proposal (retrieval only below the confidence gate),
/// filters by the configured thresholds, and stitches a semantic map. Outputs
/// are written when the paths are nonempty.
SegmentReport cmd_segment(const RunConfig& config, const std::string& feature_file, const std::string& mask_manifest,
                          const std::string& probability_file, const std::string& out_map = {},
                          const std::string& out_decisions = {});

/// Same pipeline against a caller-owned database and index.
SegmentReport segment_image(const EmbeddingDatabase& db, const SearchIndex& index, const RunConfig& config,
                            const FeatureMap& features, std::span<const InstanceMask> masks,
                            std::span<const ProbabilityVector> base_probs);

// ------------------------------------------------------------------ eval

struct EvalReport {
  MiouResult miou;
  std::vector<std::int64_t> gt_pixels;
  std::int64_t total_pixels = 0;
  std::size_t images = 0;
  nlohmann::json to_json(std::span<const std::string> class_names = {}) const;
  std::string to_csv(std::span<const std::string> class_names = {}) const;
};

EvalReport cmd_eval(std::span<const std::string> pred_maps, std::span<const std::string> gt_maps,
                    std::size_t class_count, bool ignore_void = true);
EvalReport evaluate_maps(std::span<const SemanticMap> preds, std::span<const SemanticMap> gts,
                         std::size_t class_count, bool ignore_void = true);

// -------------------------------------------------------------- simulate

struct SimulationConfig {
  FusionConfig fusion;
  IndexKind index = IndexKind::Exact;
  HnswConfig hnsw;
  std::size_t queries_per_class = 10;
  /// Logit scale of the simulated base model, a prototype classifier that
  /// only knows the classes present at timestep 0.
  double base_logit_scale = 10.0;
  std::uint64_t seed = 0;
};

struct SimulationRow {
  std::size_t timestep = 0;
  std::size_t classes_so_far = 0;
  double base_acc = 0.0;
  std::optional<double> new_acc;  // no new classes yet at timestep 0
  double overall_acc = 0.0;
  std::size_t db_size = 0;
  double query_latency_us = 0.0;
  double retrieval_fraction = 0.0;
};

/// Training-free continual expansion: each timestep inserts the embeddings
/// of its new classes, then scores held-out queries over every class seen.
std::vector<SimulationRow> cmd_simulate_continual(const SyntheticSpec& spec, const SimulationConfig& config);
std::string simulation_csv(std::span<const SimulationRow> rows);

// ----------------------------------------------------------------- bench

struct BenchRow {
  std::string method;
  std::size_t ef_search = 0;
  std::size_t queries = 0;
  double build_seconds = 0.0;
  double queries_per_second = 0.0;
  double recall = 0.0;
};

struct BenchOptions {
  std::size_t query_count = 1000;
  std::size_t k = 16;
  HnswConfig hnsw;
  std::vector<std::size_t> ef_search = {16, 32, 64, 128};
  double query_noise = 0.05;  // queries are perturbed copies of stored vectors
  std::uint64_t seed = 0;
};

/// Throughput of brute force vs HNSW per ef_search, with recall@k against
/// the exact results.
std::vector<BenchRow> cmd_bench_index(const Snapshot& snapshot, const BenchOptions& options);
std::string bench_csv(std::span<const BenchRow> rows);

/// Database holding gen_synthetic(spec, seed) with classes named "class_<id>".
EmbeddingDatabase synthetic_database(const SyntheticSpec& spec, std::uint64_t seed);

// -------------------------------------------------------------- db-stats

nlohmann::json cmd_db_stats(const RunConfig& config);

}  // namespace ragseg

#include "ragseg/commands.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <random>
#include <sstream>

#include "ragseg/formats.hpp"

namespace ragseg {
namespace {

using nlohmann::json;
using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string index_kind_name(IndexKind kind) { return kind == IndexKind::Hnsw ? "hnsw" : "exact"; }

IndexKind parse_index_kind(const std::string& s) {
  if (s == "exact") return IndexKind::Exact;
  if (s == "hnsw") return IndexKind::Hnsw;
  throw Error(ErrorCode::InvalidConfig, "index kind must be exact or hnsw, got '" + s + "'");
}

StitchStrategy parse_stitch(const std::string& s) {
  if (s == "product") return StitchStrategy::Product;
  if (s == "class-only") return StitchStrategy::ClassOnly;
  throw Error(ErrorCode::InvalidConfig, "stitch strategy must be product or class-only, got '" + s + "'");
}

EmbeddingDatabase load_database(const RunConfig& config) {
  if (config.db_path.empty()) throw Error(ErrorCode::InvalidConfig, "no database path given");
  if (!std::filesystem::exists(config.db_path)) {
    throw Error(ErrorCode::InvalidConfig, "database '" + config.db_path + "' does not exist");
  }
  return EmbeddingDatabase::load(config.db_path);
}

// Masks of `image_id` from a manifest, in file order.
std::vector<MaskEntry> masks_for_image(const std::string& manifest, std::uint64_t image_id) {
  std::vector<MaskEntry> out;
  for (auto& entry : read_mask_manifest(manifest)) {
    if (entry.image_id == image_id) out.push_back(std::move(entry));
  }
  return out;
}

void check_common_resolution(std::span<const MaskEntry> masks, const std::string& origin) {
  for (const auto& m : masks) {
    if (m.mask.rows() != masks.front().mask.rows() || m.mask.cols() != masks.front().mask.cols()) {
      throw Error(ErrorCode::ShapeMismatch, origin + ": masks of one image must share a resolution");
    }
  }
}

std::vector<Embedding> pooled_unit_embeddings(const FeatureMap& map, std::span<const MaskEntry> entries,
                                              const std::string& origin) {
  std::vector<InstanceMask> masks;
  for (const auto& e : entries) masks.push_back(e.mask);
  try {
    auto embeddings = extract_instance_embeddings(map, masks);
    for (auto& e : embeddings) e = l2_normalize(e);
    return embeddings;
  } catch (const Error& e) {
    throw Error(e.code(), origin + ": " + e.what());
  }
}

std::string format_double(double v) {
  std::ostringstream os;
  os << std::setprecision(9) << v;
  return os.str();
}

}  // namespace

// ---------------------------------------------------------------- config

void RunConfig::validate() const {
  fusion.validate();
  hnsw.validate();
  if (!(class_threshold >= 0.0f && class_threshold <= 1.0f) || !(mask_threshold >= 0.0f && mask_threshold <= 1.0f)) {
    throw Error(ErrorCode::InvalidConfig, "mask/class thresholds must be in [0,1]");
  }
  if (threads < 1) throw Error(ErrorCode::InvalidConfig, "threads must be >= 1");
}

json RunConfig::to_json() const {
  return {{"db", db_path},
          {"fusion",
           {{"k", fusion.k},
            {"lambda", fusion.lambda},
            {"threshold", fusion.threshold},
            {"epsilon", fusion.epsilon},
            {"renormalize", fusion.renormalize}}},
          {"index",
           {{"kind", index_kind_name(index)},
            {"hnsw",
             {{"M", hnsw.M}, {"ef_construction", hnsw.ef_construction}, {"ef_search", hnsw.ef_search},
              {"seed", hnsw.seed}}},
            {"cache", hnsw_cache}}},
          {"stitch", stitch == StitchStrategy::Product ? "product" : "class-only"},
          {"class_threshold", class_threshold},
          {"mask_threshold", mask_threshold},
          {"seed", seed},
          {"report", report_path},
          {"threads", threads}};
}

RunConfig RunConfig::from_json(const json& j) {
  RunConfig c;
  try {
    c.db_path = j.value("db", c.db_path);
    if (j.contains("fusion")) {
      const auto& f = j["fusion"];
      c.fusion.k = f.value("k", c.fusion.k);
      c.fusion.lambda = f.value("lambda", c.fusion.lambda);
      c.fusion.threshold = f.value("threshold", c.fusion.threshold);
      c.fusion.epsilon = f.value("epsilon", c.fusion.epsilon);
      c.fusion.renormalize = f.value("renormalize", c.fusion.renormalize);
    }
    if (j.contains("index")) {
      const auto& ix = j["index"];
      c.index = parse_index_kind(ix.value("kind", index_kind_name(c.index)));
      c.hnsw_cache = ix.value("cache", c.hnsw_cache);
      if (ix.contains("hnsw")) {
        const auto& h = ix["hnsw"];
        c.hnsw.M = h.value("M", c.hnsw.M);
        c.hnsw.ef_construction = h.value("ef_construction", c.hnsw.ef_construction);
        c.hnsw.ef_search = h.value("ef_search", c.hnsw.ef_search);
        c.hnsw.seed = h.value("seed", c.hnsw.seed);
      }
    }
    c.stitch = parse_stitch(j.value("stitch", std::string("product")));
    c.class_threshold = j.value("class_threshold", c.class_threshold);
    c.mask_threshold = j.value("mask_threshold", c.mask_threshold);
    c.seed = j.value("seed", c.seed);
    c.report_path = j.value("report", c.report_path);
    c.threads = j.value("threads", c.threads);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, std::string("config: ") + e.what());
  }
  return c;
}

RunConfig RunConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::InvalidConfig, "cannot open config '" + path + "'");
  try {
    return from_json(json::parse(in));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, path + ": " + e.what());
  }
}

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidConfig:
    case ErrorCode::InvalidName:
    case ErrorCode::InfeasibleSpec:
      return 2;
    case ErrorCode::NoRecords:
      return 4;
    default:
      return 3;
  }
}

std::unique_ptr<SearchIndex> make_index(const Snapshot& snapshot, const RunConfig& config) {
  if (config.index == IndexKind::Exact) return build_exact(snapshot);
  if (!config.hnsw_cache.empty() && std::filesystem::exists(config.hnsw_cache)) {
    try {
      auto cached = HnswIndex::load(snapshot, config.hnsw_cache);
      if (cached->config().M == config.hnsw.M && cached->config().ef_construction == config.hnsw.ef_construction &&
          cached->config().seed == config.hnsw.seed) {
        return cached;
      }
    } catch (const Error& e) {
      if (e.code() != ErrorCode::StaleCache && e.code() != ErrorCode::CorruptDatabase) throw;
    }
  }
  auto built = build_hnsw(snapshot, config.hnsw);
  if (!config.hnsw_cache.empty()) built->save(config.hnsw_cache);
  return built;
}

// ---------------------------------------------------------------- ingest

json IngestReport::to_json() const {
  return {{"images", images},
          {"records_added", records_added},
          {"added_per_class", added_per_class},
          {"total_records", total_records}};
}

IngestReport cmd_ingest(const RunConfig& config, std::span<const std::string> feature_files,
                        std::span<const std::string> mask_manifests) {
  if (feature_files.size() != mask_manifests.size()) {
    throw Error(ErrorCode::InvalidDataset, "need one mask manifest per feature file");
  }
  if (config.db_path.empty()) throw Error(ErrorCode::InvalidConfig, "no database path given");

  std::optional<EmbeddingDatabase> db;
  if (std::filesystem::exists(config.db_path)) db = EmbeddingDatabase::load(config.db_path);

  IngestReport report;
  for (std::size_t i = 0; i < feature_files.size(); ++i) {
    const FeatureFile features = read_feature_file(feature_files[i]);
    if (!db) db = EmbeddingDatabase::create(static_cast<std::size_t>(features.map.channels()));
    if (static_cast<std::size_t>(features.map.channels()) != db->dim()) {
      throw Error(ErrorCode::ShapeMismatch, feature_files[i] + ": feature dim " +
                                                std::to_string(features.map.channels()) + " != database dim " +
                                                std::to_string(db->dim()));
    }
    const auto entries = masks_for_image(mask_manifests[i], features.image_id);
    check_common_resolution(entries, mask_manifests[i]);
    for (std::size_t j = 0; j < entries.size(); ++j) {
      if (!entries[j].class_name || entries[j].class_name->empty()) {
        throw Error(ErrorCode::InvalidName, mask_manifests[i] + ": mask " + std::to_string(j) + " has no class");
      }
    }
    const auto embeddings = pooled_unit_embeddings(features.map, entries, mask_manifests[i]);

    std::vector<EmbeddingRecord> records;
    for (std::size_t j = 0; j < entries.size(); ++j) {
      const ClassId id = db->register_class(*entries[j].class_name);
      records.push_back({embeddings[j], id, features.image_id});
      ++report.added_per_class[*entries[j].class_name];
    }
    report.records_added += db->insert_batch(records);
    ++report.images;
  }
  if (!db) throw Error(ErrorCode::InvalidDataset, "nothing to ingest");
  db->save(config.db_path);
  report.total_records = db->size();
  return report;
}

// ----------------------------------------------------------------- query

std::string QueryReport::to_csv() const {
  std::ostringstream os;
  os << "rank,record_index,class_id,class_name,similarity\n";
  for (std::size_t r = 0; r < hits.size(); ++r) {
    os << r + 1 << ',' << hits[r].hit.record_index << ',' << hits[r].hit.class_id << ',' << hits[r].class_name << ','
       << format_double(hits[r].hit.similarity) << '\n';
  }
  if (recall_vs_exact) os << "# recall@" << hits.size() << " vs exact: " << format_double(*recall_vs_exact) << '\n';
  return os.str();
}

QueryReport cmd_query(const RunConfig& config, const std::string& feature_file, const std::string& mask_manifest,
                      std::size_t mask_index, std::size_t k) {
  config.validate();
  const EmbeddingDatabase db = load_database(config);
  if (db.size() == 0) throw Error(ErrorCode::NoRecords, "database '" + config.db_path + "' holds no records");

  const FeatureFile features = read_feature_file(feature_file);
  const auto entries = masks_for_image(mask_manifest, features.image_id);
  if (mask_index >= entries.size()) {
    throw Error(ErrorCode::InvalidDataset, mask_manifest + ": no mask " + std::to_string(mask_index) +
                                               " for image " + std::to_string(features.image_id));
  }
  if (static_cast<std::size_t>(features.map.channels()) != db.dim()) {
    throw Error(ErrorCode::ShapeMismatch, feature_file + ": feature dim does not match the database");
  }
  const Embedding query = pooled_unit_embeddings(features.map, std::span(entries).subspan(mask_index, 1),
                                                 mask_manifest)
                              .front();

  const Snapshot snapshot = db.snapshot();
  const auto index = make_index(snapshot, config);
  QueryReport report;
  const auto hits = index->search(query, k);
  for (const auto& h : hits) report.hits.push_back({h, db.registry().name(h.class_id)});
  if (config.index == IndexKind::Hnsw) {
    report.recall_vs_exact = recall_at_k(hits, build_exact(snapshot)->search(query, k));
  }
  return report;
}

// --------------------------------------------------------------- segment

json MaskDecision::to_json() const {
  return {{"mask_index", mask_index},
          {"class_id", class_id},
          {"class", class_name},
          {"class_confidence", class_confidence},
          {"mask_score", mask_score},
          {"base_confidence", base_confidence},
          {"used_retrieval", used_retrieval},
          {"fallback", fallback},
          {"kept", kept}};
}

SegmentReport segment_image(const EmbeddingDatabase& db, const SearchIndex& index, const RunConfig& config,
                            const FeatureMap& features, std::span<const InstanceMask> masks,
                            std::span<const ProbabilityVector> base_probs) {
  if (masks.size() != base_probs.size()) {
    throw Error(ErrorCode::InvalidDataset, "need one base probability vector per mask");
  }
  const std::size_t class_count = db.registry().size();
  const std::uint64_t queries_before = index.query_count();

  std::vector<QueryInput> inputs;
  for (std::size_t j = 0; j < masks.size(); ++j) {
    if (static_cast<std::size_t>(base_probs[j].size()) != class_count) {
      throw Error(ErrorCode::ShapeMismatch, "mask " + std::to_string(j) + ": " +
                                                std::to_string(base_probs[j].size()) + " probabilities for " +
                                                std::to_string(class_count) + " classes");
    }
  }
  if (!masks.empty()) {
    auto embeddings = extract_instance_embeddings(features, masks);
    for (std::size_t j = 0; j < masks.size(); ++j) inputs.push_back({l2_normalize(embeddings[j]), base_probs[j]});
  }
  const auto results = batch_classify(inputs, index, config.fusion, class_count, config.threads);

  SegmentReport report;
  std::vector<MaskPrediction> preds;
  for (std::size_t j = 0; j < results.size(); ++j) {
    const auto& r = results[j];
    MaskDecision d;
    d.mask_index = j;
    d.class_id = r.class_id;
    d.class_name = db.registry().name(r.class_id);
    // The retrieval branch is lambda-scaled; confidence is read off the
    // normalized distribution.
    d.class_confidence = r.p_final.max() / r.p_final.values.sum();
    d.mask_score = masks[j].mask_score.value_or(1.0f);
    d.base_confidence = base_probs[j].max();
    d.used_retrieval = r.used_retrieval;
    d.fallback = r.fallback;
    preds.push_back({masks[j], d.class_id, d.class_confidence, d.mask_score});
    report.decisions.push_back(std::move(d));
  }

  const auto kept = filter_confident_masks(preds, config.class_threshold, config.mask_threshold);
  for (auto& d : report.decisions) {
    d.kept = d.class_confidence >= config.class_threshold && d.mask_score >= config.mask_threshold;
  }
  const Eigen::Index rows = masks.empty() ? features.rows() : masks.front().rows();
  const Eigen::Index cols = masks.empty() ? features.cols() : masks.front().cols();
  report.map = stitch_semantic_map(kept, rows, cols, config.stitch);
  report.index_queries = index.query_count() - queries_before;
  return report;
}

SegmentReport cmd_segment(const RunConfig& config, const std::string& feature_file, const std::string& mask_manifest,
                          const std::string& probability_file, const std::string& out_map,
                          const std::string& out_decisions) {
  config.validate();
  const EmbeddingDatabase db = load_database(config);
  const FeatureFile features = read_feature_file(feature_file);
  if (static_cast<std::size_t>(features.map.channels()) != db.dim()) {
    throw Error(ErrorCode::ShapeMismatch, feature_file + ": feature dim does not match the database");
  }
  const auto entries = masks_for_image(mask_manifest, features.image_id);
  check_common_resolution(entries, mask_manifest);
  const BaseProbabilityFile probs = read_probability_file(probability_file);

  // Bind the file's class order to registry ids.
  const std::size_t class_count = db.registry().size();
  if (probs.classes.size() != class_count) {
    throw Error(ErrorCode::ShapeMismatch, probability_file + ": " + std::to_string(probs.classes.size()) +
                                              " classes, database vocabulary has " + std::to_string(class_count));
  }
  std::vector<ClassId> to_registry;
  for (const auto& name : probs.classes) {
    const auto id = db.registry().find(name);
    if (!id) throw Error(ErrorCode::ShapeMismatch, probability_file + ": class '" + name + "' is not registered");
    to_registry.push_back(*id);
  }

  std::vector<InstanceMask> masks;
  std::vector<ProbabilityVector> base;
  for (std::size_t j = 0; j < entries.size(); ++j) {
    const auto& raw = probs.at(features.image_id, j);
    Vector<float> values(static_cast<Eigen::Index>(class_count));
    for (std::size_t c = 0; c < raw.size(); ++c) values[to_registry[c]] = static_cast<float>(raw[c]);
    try {
      base.push_back(ProbabilityVector::from_distribution(std::move(values)));
    } catch (const Error& e) {
      throw Error(e.code(), probability_file + ": mask " + std::to_string(j) + ": " + e.what());
    }
    masks.push_back(entries[j].mask);
  }

  const auto index = make_index(db.snapshot(), config);
  SegmentReport report = segment_image(db, *index, config, features.map, masks, base);

  if (!out_map.empty()) write_pgm(out_map, report.map);
  if (!out_decisions.empty()) {
    std::ofstream out(out_decisions, std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoError, "cannot write '" + out_decisions + "'");
    for (const auto& d : report.decisions) out << d.to_json().dump() << '\n';
  }
  return report;
}

// ------------------------------------------------------------------ eval

json EvalReport::to_json(std::span<const std::string> class_names) const {
  json classes = json::array();
  for (std::size_t c = 0; c < miou.per_class_iou.size(); ++c) {
    json row = {{"class_id", c}, {"present", static_cast<bool>(miou.present[c])}, {"gt_pixels", gt_pixels[c]}};
    row["iou"] = miou.present[c] ? json(miou.per_class_iou[c]) : json(nullptr);
    if (c < class_names.size()) row["class"] = class_names[c];
    classes.push_back(std::move(row));
  }
  return {{"images", images}, {"total_pixels", total_pixels}, {"mean_iou", miou.mean}, {"classes", classes}};
}

std::string EvalReport::to_csv(std::span<const std::string> class_names) const {
  std::ostringstream os;
  os << "class_id,class_name,iou,gt_pixels\n";
  for (std::size_t c = 0; c < miou.per_class_iou.size(); ++c) {
    os << c << ',' << (c < class_names.size() ? class_names[c] : "") << ','
       << (miou.present[c] ? format_double(miou.per_class_iou[c]) : "") << ',' << gt_pixels[c] << '\n';
  }
  os << "mean,," << format_double(miou.mean) << ',' << total_pixels << '\n';
  return os.str();
}

EvalReport evaluate_maps(std::span<const SemanticMap> preds, std::span<const SemanticMap> gts,
                         std::size_t class_count, bool ignore_void) {
  if (preds.empty() || preds.size() != gts.size()) {
    throw Error(ErrorCode::InvalidDataset, "need equally many prediction and ground-truth maps, got " +
                                               std::to_string(preds.size()) + " and " + std::to_string(gts.size()));
  }
  ConfusionMatrix cm(class_count);
  EvalReport report;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    try {
      confusion_accumulate(cm, preds[i], gts[i]);
    } catch (const Error& e) {
      rethrow_at(e, "image", i);
    }
    report.total_pixels += gts[i].labels.size();
  }
  report.miou = cm.miou(ignore_void);
  report.gt_pixels = cm.gt_pixels();
  report.images = preds.size();
  return report;
}

EvalReport cmd_eval(std::span<const std::string> pred_maps, std::span<const std::string> gt_maps,
                    std::size_t class_count, bool ignore_void) {
  if (pred_maps.empty() || pred_maps.size() != gt_maps.size()) {
    throw Error(ErrorCode::InvalidDataset, "need equally many prediction and ground-truth maps, got " +
                                               std::to_string(pred_maps.size()) + " and " +
                                               std::to_string(gt_maps.size()));
  }
  ConfusionMatrix cm(class_count);
  EvalReport report;
  for (std::size_t i = 0; i < pred_maps.size(); ++i) {
    const SemanticMap pred = read_pgm(pred_maps[i]);
    const SemanticMap gt = read_pgm(gt_maps[i]);
    try {
      confusion_accumulate(cm, pred, gt);
    } catch (const Error& e) {
      throw Error(e.code(), pred_maps[i] + " vs " + gt_maps[i] + ": " + e.what());
    }
    report.total_pixels += gt.labels.size();
  }
  report.miou = cm.miou(ignore_void);
  report.gt_pixels = cm.gt_pixels();
  report.images = pred_maps.size();
  return report;
}

// -------------------------------------------------------------- simulate

std::vector<SimulationRow> cmd_simulate_continual(const SyntheticSpec& spec, const SimulationConfig& config) {
  config.fusion.validate();
  SyntheticGenerator gen(spec, config.seed);
  const auto steps = spec.increments();
  const std::size_t base_count = steps.front();

  // Prototype classifier standing in for the base model: it knows the
  // base-class centroids and nothing else.
  const Eigen::MatrixXd prototypes = gen.centroids().leftCols(static_cast<Eigen::Index>(base_count)).colwise().normalized();
  const auto base_probs = [&](const Eigen::VectorXf& q, std::size_t class_count) {
    const Eigen::VectorXd logits = config.base_logit_scale * (prototypes.transpose() * q.cast<double>());
    const Eigen::VectorXd e = (logits.array() - logits.maxCoeff()).exp();
    Vector<float> p = Vector<float>::Zero(static_cast<Eigen::Index>(class_count));
    p.head(e.size()) = (e / e.sum()).cast<float>();
    return ProbabilityVector{std::move(p), true};
  };

  EmbeddingDatabase db = EmbeddingDatabase::create(spec.dim);
  std::vector<std::pair<ClassId, Eigen::VectorXf>> held_out;
  std::vector<SimulationRow> rows;
  std::size_t seen = 0;
  for (std::size_t t = 0; t < steps.size(); ++t) {
    std::vector<EmbeddingRecord> records;
    for (std::size_t c = seen; c < seen + steps[t]; ++c) {
      const ClassId id = db.register_class("class_" + std::to_string(c));
      const Eigen::MatrixXf train = gen.sample(c, spec.per_class);
      for (Eigen::Index j = 0; j < train.cols(); ++j) records.push_back({train.col(j), id, t});
      const Eigen::MatrixXf queries = gen.sample(c, config.queries_per_class);
      for (Eigen::Index j = 0; j < queries.cols(); ++j) held_out.emplace_back(id, queries.col(j));
    }
    db.insert_batch(records);
    seen += steps[t];

    RunConfig rc;
    rc.index = config.index;
    rc.hnsw = config.hnsw;
    const auto index = make_index(db.snapshot(), rc);

    std::size_t base_total = 0, base_hit = 0, new_total = 0, new_hit = 0, retrieved = 0;
    const auto start = Clock::now();
    for (const auto& [truth, q] : held_out) {
      const auto r = classify_query(q, base_probs(q, seen), *index, config.fusion, seen);
      const bool correct = r.class_id == truth;
      retrieved += r.used_retrieval;
      if (truth < base_count) {
        ++base_total;
        base_hit += correct;
      } else {
        ++new_total;
        new_hit += correct;
      }
    }
    const double elapsed = seconds_since(start);

    SimulationRow row;
    row.timestep = t;
    row.classes_so_far = seen;
    row.base_acc = static_cast<double>(base_hit) / static_cast<double>(base_total);
    if (new_total) row.new_acc = static_cast<double>(new_hit) / static_cast<double>(new_total);
    row.overall_acc = static_cast<double>(base_hit + new_hit) / static_cast<double>(base_total + new_total);
    row.db_size = db.size();
    row.query_latency_us = 1e6 * elapsed / static_cast<double>(held_out.size());
    row.retrieval_fraction = static_cast<double>(retrieved) / static_cast<double>(held_out.size());
    rows.push_back(row);
  }
  return rows;
}

std::string simulation_csv(std::span<const SimulationRow> rows) {
  std::ostringstream os;
  os << "timestep,classes_so_far,base_acc,new_acc,overall_acc,db_size,query_latency_us,retrieval_fraction\n";
  for (const auto& r : rows) {
    os << r.timestep << ',' << r.classes_so_far << ',' << format_double(r.base_acc) << ','
       << (r.new_acc ? format_double(*r.new_acc) : "") << ',' << format_double(r.overall_acc) << ',' << r.db_size
       << ',' << format_double(r.query_latency_us) << ',' << format_double(r.retrieval_fraction) << '\n';
  }
  return os.str();
}

// ----------------------------------------------------------------- bench

std::vector<BenchRow> cmd_bench_index(const Snapshot& snapshot, const BenchOptions& options) {
  if (snapshot.empty()) throw Error(ErrorCode::NoRecords, "cannot benchmark an empty database");
  if (options.query_count == 0 || options.k == 0) throw Error(ErrorCode::InvalidConfig, "need queries and k >= 1");

  std::mt19937_64 rng(options.seed);
  std::uniform_int_distribution<std::size_t> pick(0, snapshot.size() - 1);
  std::normal_distribution<double> noise(0.0, options.query_noise);
  std::vector<Embedding> queries;
  for (std::size_t i = 0; i < options.query_count; ++i) {
    Vector<double> q = snapshot.vector(pick(rng)).cast<double>();
    for (Eigen::Index j = 0; j < q.size(); ++j) q[j] += noise(rng);
    queries.push_back(l2_normalize(q).cast<float>());
  }

  std::vector<BenchRow> rows;
  auto start = Clock::now();
  const auto exact = build_exact(snapshot);
  const double exact_build = seconds_since(start);
  std::vector<std::vector<RetrievalHit>> truth;
  start = Clock::now();
  for (const auto& q : queries) truth.push_back(exact->search(q, options.k));
  const double exact_time = seconds_since(start);
  rows.push_back({"exact", 0, queries.size(), exact_build, queries.size() / exact_time, 1.0});

  start = Clock::now();
  const auto hnsw = build_hnsw(snapshot, options.hnsw);
  const double hnsw_build = seconds_since(start);
  for (std::size_t ef : options.ef_search) {
    double recall = 0.0;
    start = Clock::now();
    std::vector<std::vector<RetrievalHit>> found;
    found.reserve(queries.size());
    for (const auto& q : queries) found.push_back(hnsw->search(q, options.k, ef));
    const double elapsed = seconds_since(start);
    for (std::size_t i = 0; i < queries.size(); ++i) recall += recall_at_k(found[i], truth[i]);
    rows.push_back({"hnsw", ef, queries.size(), hnsw_build, queries.size() / elapsed, recall / queries.size()});
  }
  return rows;
}

std::string bench_csv(std::span<const BenchRow> rows) {
  std::ostringstream os;
  os << "method,ef_search,queries,build_seconds,queries_per_second,recall\n";
  for (const auto& r : rows) {
    os << r.method << ',' << r.ef_search << ',' << r.queries << ',' << format_double(r.build_seconds) << ','
       << format_double(r.queries_per_second) << ',' << format_double(r.recall) << '\n';
  }
  return os.str();
}

EmbeddingDatabase synthetic_database(const SyntheticSpec& spec, std::uint64_t seed) {
  const SyntheticSet set = gen_synthetic(spec, seed);
  EmbeddingDatabase db = EmbeddingDatabase::create(spec.dim);
  for (std::size_t c = 0; c < spec.class_count; ++c) db.register_class("class_" + std::to_string(c));
  std::vector<EmbeddingRecord> records;
  records.reserve(set.labels.size());
  for (std::size_t i = 0; i < set.labels.size(); ++i) {
    records.push_back({set.vectors.col(static_cast<Eigen::Index>(i)), set.labels[i], i});
  }
  db.insert_batch(records);
  return db;
}

// -------------------------------------------------------------- db-stats

json cmd_db_stats(const RunConfig& config) {
  const EmbeddingDatabase db = load_database(config);
  const DatabaseStats s = db.stats();
  json per_class = json::object();
  for (const auto& [id, count] : s.per_class_counts) per_class[db.registry().name(id)] = count;
  return {{"dim", db.dim()},
          {"normalized", db.normalized()},
          {"total_records", s.total_records},
          {"class_count", s.class_count},
          {"per_class_counts", per_class},
          {"vector_bytes_per_record", s.vector_bytes_per_record},
          {"approx_bytes", s.approx_bytes}};
}

}  // namespace ragseg

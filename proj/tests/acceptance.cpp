// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fail.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <random>
#include <sstream>
#include <string>

#include "ragseg/commands.hpp"
#include "ragseg/formats.hpp"

using namespace ragseg;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  int number;
  std::string name;
  double time_limit_s;  // 0 = no limit
  std::function<Outcome()> run;
};

Embedding random_unit(std::mt19937_64& rng, std::size_t dim) {
  std::normal_distribution<float> n;
  return l2_normalize(Embedding::NullaryExpr(static_cast<Eigen::Index>(dim), [&] { return n(rng); }));
}

std::string fmt(double v, int digits = 4) {
  std::ostringstream os;
  os.precision(digits);
  os << v;
  return os.str();
}

// 1 -----------------------------------------------------------------------

Outcome exact_matches_full_sort() {
  std::mt19937_64 rng(101);
  std::uniform_int_distribution<std::size_t> sizes(1, 1000), dims(2, 64), ks(1, 50);
  std::size_t snapshots = 0, skipped = 0;
  while (snapshots < 120) {
    const std::size_t n = sizes(rng), dim = dims(rng);
    auto db = EmbeddingDatabase::create(dim);
    db.register_class("x");
    for (std::size_t i = 0; i < n; ++i) db.insert({random_unit(rng, dim), 0, i});
    const Embedding q = random_unit(rng, dim);

    std::vector<std::pair<double, std::size_t>> all;
    for (std::size_t i = 0; i < n; ++i) all.emplace_back(cosine_two_pass(db.vector(i), q), i);
    std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) {
      return a.first > b.first || (a.first == b.first && a.second < b.second);
    });
    const std::size_t k = std::min(ks(rng), n);
    bool distinct = true;
    for (std::size_t r = 0; r + 1 < std::min(k + 1, n); ++r) distinct &= all[r].first - all[r + 1].first > 1e-5;
    if (!distinct) {
      ++skipped;
      continue;
    }
    const auto hits = query_exact(*build_exact(db.snapshot()), q, k);
    if (hits.size() != k) return {false, "wrong hit count"};
    for (std::size_t r = 0; r < k; ++r) {
      if (hits[r].record_index != all[r].second) {
        return {false, "snapshot " + std::to_string(snapshots) + " rank " + std::to_string(r) + " differs"};
      }
    }
    ++snapshots;
  }
  return {true, std::to_string(snapshots) + " snapshots match (" + std::to_string(skipped) + " near-tie draws redrawn)"};
}

// 2 -----------------------------------------------------------------------

Outcome zero_forgetting() {
  std::mt19937_64 rng(202);
  const std::size_t dim = 64;
  auto db = EmbeddingDatabase::create(dim);
  for (int c = 0; c < 40; ++c) db.register_class("class_" + std::to_string(c));
  for (int i = 0; i < 1000; ++i) db.insert({random_unit(rng, dim), static_cast<ClassId>(i % 20), 0});
  for (int i = 0; i < 1000; ++i) db.insert({random_unit(rng, dim), static_cast<ClassId>(20 + i % 20), 1});
  const auto index = build_exact(db.snapshot());
  double worst = 0.0;
  for (std::size_t i = 0; i < 1000; ++i) {
    const auto hit = query_exact(*index, db.vector(i), 1).front();
    if (hit.record_index != i) return {false, "record " + std::to_string(i) + " lost top-1"};
    worst = std::max(worst, std::abs(static_cast<double>(hit.similarity) - 1.0));
  }
  return {worst <= 1e-6, "1000/1000 originals top-1 after growth to 2000, max |s-1| = " + fmt(worst)};
}

// 3 -----------------------------------------------------------------------

Outcome pseudo_logit_properties() {
  std::mt19937_64 rng(303);
  std::uniform_int_distribution<std::size_t> classes(1, 50), count(0, 32);
  std::uniform_real_distribution<float> sim(-1.0f, 1.0f);
  double worst_sum = 0.0, worst_shift = 0.0;
  for (int t = 0; t < 10000; ++t) {
    const std::size_t c = classes(rng);
    std::vector<RetrievalHit> hits(count(rng));
    for (std::size_t i = 0; i < hits.size(); ++i) hits[i] = {i, static_cast<ClassId>(rng() % c), sim(rng)};
    const auto base = pseudo_logits(hits, c, 0.0f);
    worst_sum = std::max(worst_sum, std::abs(base.values.cast<double>().sum() - 1.0));
    for (float eps : {1.0f, 5.0f, -3.0f}) {
      worst_shift = std::max(worst_shift,
                             static_cast<double>((pseudo_logits(hits, c, eps).values - base.values).cwiseAbs().maxCoeff()));
    }
  }

  const std::vector<RetrievalHit> three{{0, 0, 0.9f}, {1, 1, 0.8f}, {2, 0, 0.7f}};
  const auto got = pseudo_logits(three, 3);
  const double l0 = static_cast<double>(0.9f) + static_cast<double>(0.7f), l1 = 0.8f;
  const double z = std::exp(l0) + std::exp(l1) + 1.0;
  const double oracle[3] = {std::exp(l0) / z, std::exp(l1) / z, 1.0 / z};
  double worst_example = 0.0;
  for (int j = 0; j < 3; ++j) worst_example = std::max(worst_example, std::abs(got.values[j] - oracle[j]));

  return {worst_sum <= 1e-5 && worst_shift <= 1e-6 && worst_example <= 1e-6,
          "max |sum-1| = " + fmt(worst_sum) + ", max eps shift = " + fmt(worst_shift) +
              ", 3-hit example err = " + fmt(worst_example)};
}

// 4 -----------------------------------------------------------------------

Outcome gate_dichotomy() {
  std::mt19937_64 rng(404);
  std::uniform_real_distribution<float> u(0.0f, 1.0f), lam(0.05f, 4.0f);
  std::size_t to_base = 0, to_ret = 0;
  for (int t = 0; t < 10000; ++t) {
    const auto c = static_cast<Eigen::Index>(2 + rng() % 20);
    const Vector<float> a = Vector<float>::NullaryExpr(c, [&] { return u(rng); }) + Vector<float>::Constant(c, 1e-3f);
    const Vector<float> b = Vector<float>::NullaryExpr(c, [&] { return u(rng); }) + Vector<float>::Constant(c, 1e-3f);
    const ProbabilityVector p_ret{a / a.sum(), true}, p_base{b / b.sum(), true};
    // Every tenth tuple sits exactly on the boundary.
    const float threshold = t % 10 == 0 ? p_base.max() : u(rng);
    const float lambda = lam(rng);
    const auto out = fuse(p_ret, p_base, lambda, threshold);
    const bool base_branch = out.values == p_base.values;
    const bool ret_branch = out.values == (lambda * p_ret.values).eval();
    if (base_branch == ret_branch) return {false, "tuple " + std::to_string(t) + " matches neither or both branches"};
    if (base_branch != (p_base.max() > threshold)) return {false, "tuple " + std::to_string(t) + " took the wrong branch"};
    if (t % 10 == 0 && !ret_branch) return {false, "boundary tuple did not route to retrieval"};
    (base_branch ? to_base : to_ret) += 1;
  }
  return {true, std::to_string(to_base) + " base / " + std::to_string(to_ret) + " retrieval, 1000 boundary ties retrieved"};
}

// 5 -----------------------------------------------------------------------

Outcome confidence_skip() {
  const fs::path dir = fs::temp_directory_path() / "ragseg_acceptance_skip";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const auto p = [&](const char* name) { return (dir / name).string(); };

  std::mt19937_64 rng(505);
  std::normal_distribution<float> n;
  const FeatureFile features{FeatureMap(8, 8, WeightGrid::NullaryExpr(16, 64, [&] { return n(rng); })), "acc", 7};
  write_feature_file(p("img.knfp"), features);
  const std::vector<std::string> names{"wall", "floor", "sky", "tree"};
  std::vector<MaskEntry> masks;
  BaseProbabilityFile probs;
  probs.classes = names;
  for (std::size_t j = 0; j < 12; ++j) {
    MaskEntry e;
    e.image_id = 7;
    e.mask.bits = MaskGrid::NullaryExpr(32, 32, [&] { return static_cast<std::uint8_t>(rng() % 2); });
    e.class_name = names[j % 4];
    masks.push_back(e);
    std::vector<double> row(4, 0.02);
    row[j % 4] = 0.94;
    probs.probs[{7, j}] = row;
  }
  write_mask_manifest(p("masks.jsonl"), masks);
  write_probability_file(p("probs.jsonl"), probs);

  RunConfig config;
  config.db_path = p("db.kndb");
  const std::vector<std::string> f{p("img.knfp")}, m{p("masks.jsonl")};
  cmd_ingest(config, f, m);

  Outcome out;
  for (IndexKind kind : {IndexKind::Exact, IndexKind::Hnsw}) {
    config.index = kind;
    const auto report = cmd_segment(config, p("img.knfp"), p("masks.jsonl"), p("probs.jsonl"));
    const bool any_retrieval =
        std::any_of(report.decisions.begin(), report.decisions.end(), [](const auto& d) { return d.used_retrieval; });
    if (report.index_queries != 0 || any_retrieval || report.decisions.size() != 12) {
      out = {false, std::to_string(report.index_queries) + " index queries issued"};
      break;
    }
    out = {true, "12 confident masks, 0 index queries (exact and hnsw)"};
  }
  fs::remove_all(dir);
  return out;
}

// 6 -----------------------------------------------------------------------

Outcome hnsw_recall() {
  SyntheticSpec spec;
  spec.class_count = 100;
  spec.per_class = 100;
  spec.dim = 64;
  const auto db = synthetic_database(spec, 606);
  HnswConfig cfg;
  cfg.ef_construction = 100;
  const auto hnsw = build_hnsw(db.snapshot(), cfg);
  const auto exact = build_exact(db.snapshot());

  // Held-out draws from the same clusters.
  SyntheticGenerator gen(spec, 606);
  std::vector<Embedding> queries;
  for (std::size_t c = 0; c < spec.class_count; ++c) {
    gen.sample(c, spec.per_class);
  }
  for (std::size_t c = 0; c < spec.class_count; ++c) {
    const Eigen::MatrixXf s = gen.sample(c, 5);
    for (Eigen::Index j = 0; j < s.cols(); ++j) queries.emplace_back(s.col(j));
  }
  std::vector<std::vector<RetrievalHit>> truth;
  for (const auto& q : queries) truth.push_back(query_exact(*exact, q, 16));

  std::vector<double> recalls;
  std::string detail = "recall@16 by ef:";
  for (std::size_t ef : {16, 32, 64, 128}) {
    double sum = 0.0;
    for (std::size_t i = 0; i < queries.size(); ++i) sum += recall_at_k(query_hnsw(*hnsw, queries[i], 16, ef), truth[i]);
    recalls.push_back(sum / static_cast<double>(queries.size()));
    detail += " " + std::to_string(ef) + "=" + fmt(recalls.back());
  }
  bool trend = recalls.back() >= recalls.front();
  for (std::size_t i = 1; i < recalls.size(); ++i) trend &= recalls[i] >= recalls[i - 1] - 0.005;
  return {recalls[2] >= 0.9 && trend, detail};
}

// 7 -----------------------------------------------------------------------

Outcome hnsw_speedup() {
  SyntheticSpec spec;
  spec.class_count = 100;
  spec.per_class = 1000;
  spec.dim = 64;
  const auto db = synthetic_database(spec, 707);
  BenchOptions options;
  options.query_count = 1000;
  options.ef_search = {64};
  options.hnsw.ef_construction = 100;
  const auto rows = cmd_bench_index(db.snapshot(), options);
  const double ratio = rows[1].queries_per_second / rows[0].queries_per_second;
  return {ratio > 1.0, std::to_string(db.size()) + " vectors: exact " + fmt(rows[0].queries_per_second) +
                           " q/s, hnsw " + fmt(rows[1].queries_per_second) + " q/s, ratio " + fmt(ratio) +
                           ", recall " + fmt(rows[1].recall)};
}

// 8 -----------------------------------------------------------------------

Outcome continual_simulation() {
  std::string detail;
  bool pass = true;
  for (std::size_t step : {5, 10, 30}) {
    SyntheticSpec spec;
    spec.class_count = 150;
    spec.per_class = 32;
    spec.dim = 64;
    spec.sigma = 0.1;
    spec.separation = 10.0 * spec.sigma;
    spec.schedule = make_schedule(100, 150, step);
    SimulationConfig config;
    config.seed = 808;
    const auto rows = cmd_simulate_continual(spec, config);
    double min_overall = 1.0, max_drop = 0.0;
    for (const auto& r : rows) {
      min_overall = std::min(min_overall, r.overall_acc);
      max_drop = std::max(max_drop, rows[0].base_acc - r.base_acc);
    }
    pass &= min_overall >= 0.99 && max_drop <= 0.01;
    detail += (detail.empty() ? "" : "; ") + std::string("step ") + std::to_string(step) + ": " +
              std::to_string(rows.size()) + " timesteps, min overall " + fmt(min_overall) + ", max base drop " +
              fmt(max_drop);
  }
  return {pass, detail};
}

// 9 -----------------------------------------------------------------------

Outcome miou_oracle() {
  const SemanticMap pred{LabelGrid{{0, 0}, {1, 1}}};
  const SemanticMap gt{LabelGrid{{0, 1}, {1, 1}}};
  const double worked = miou(pred, gt, 2).mean;
  if (worked != 7.0 / 12.0) return {false, "2x2 example gives " + fmt(worked, 17)};

  std::mt19937_64 rng(909);
  const std::size_t classes = 12;
  std::vector<std::pair<SemanticMap, SemanticMap>> images;
  for (int i = 0; i < 50; ++i) {
    const auto draw = [&] {
      const auto v = static_cast<std::uint32_t>(rng() % (classes + 1));
      return v == classes ? kVoidLabel : v;
    };
    images.emplace_back(SemanticMap{LabelGrid::NullaryExpr(24, 32, draw)}, SemanticMap{LabelGrid::NullaryExpr(24, 32, draw)});
  }

  // Single pass over one tall map holding every image.
  SemanticMap all_pred = SemanticMap::filled(24 * 50, 32), all_gt = SemanticMap::filled(24 * 50, 32);
  for (int i = 0; i < 50; ++i) {
    all_pred.labels.middleRows(24 * i, 24) = images[i].first.labels;
    all_gt.labels.middleRows(24 * i, 24) = images[i].second.labels;
  }
  const auto single = miou(all_pred, all_gt, classes);

  std::shuffle(images.begin(), images.end(), rng);
  ConfusionMatrix streamed(classes);
  for (const auto& [p, g] : images) confusion_accumulate(streamed, p, g);
  const auto r = streamed.miou();
  bool identical = r.mean == single.mean;
  for (std::size_t c = 0; c < classes; ++c) identical &= r.per_class_iou[c] == single.per_class_iou[c];
  return {identical, "2x2 example = 7/12 exactly; 50 permuted images stream to mean " + fmt(r.mean, 17) +
                         (identical ? " (bit-identical)" : " vs single-pass " + fmt(single.mean, 17))};
}

// 10 ----------------------------------------------------------------------

Outcome storage() {
  std::mt19937_64 rng(1010);
  auto db = EmbeddingDatabase::create(1536);
  db.register_class("chair");
  db.register_class("table");
  const auto empty_size = db.serialize().size();
  for (int i = 0; i < 64; ++i) db.insert({random_unit(rng, 1536), static_cast<ClassId>(i % 2), static_cast<std::uint64_t>(i)});
  const auto stats = db.stats();
  const auto bytes = db.serialize();
  const std::size_t per_record = (bytes.size() - empty_size) / 64;
  const std::size_t payload = per_record - EmbeddingDatabase::kRecordMetadataBytes;

  const fs::path path = fs::temp_directory_path() / "ragseg_acceptance.kndb";
  db.save(path.string());
  const auto reloaded = EmbeddingDatabase::load(path.string());
  const auto again = reloaded.serialize();
  fs::remove(path);

  const bool pass = stats.vector_bytes_per_record == 6144 && payload == 6144 && again == bytes;
  char crc[16];
  std::snprintf(crc, sizeof crc, "%02x%02x%02x%02x", bytes[bytes.size() - 1], bytes[bytes.size() - 2],
                bytes[bytes.size() - 3], bytes[bytes.size() - 4]);
  return {pass, "vector payload " + std::to_string(payload) + " B/record; " + std::to_string(bytes.size()) +
                    " B file re-serializes identically (crc " + crc + ")"};
}

// 11 ----------------------------------------------------------------------

Outcome pooling_oracle() {
  std::mt19937_64 rng(1111);
  std::normal_distribution<float> n;
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  double worst = 0.0;
  int fractional = 0;
  for (int t = 0; t < 1000; ++t) {
    const Eigen::Index d = 1 + rng() % 48, h = 1 + rng() % 16, w = 1 + rng() % 16;
    const FeatureMap map(h, w, WeightGrid::NullaryExpr(d, h * w, [&] { return 4.0f * n(rng); }));
    WeightGrid weights;
    if (t % 2 == 0) {
      const Eigen::Index mh = 1 + rng() % 64, mw = 1 + rng() % 64;
      InstanceMask mask{MaskGrid::NullaryExpr(mh, mw, [&] { return static_cast<std::uint8_t>(rng() % 3 == 0); }), {}};
      mask.bits(rng() % mh, rng() % mw) = 1;
      weights = resize_mask(mask, h, w);
      fractional += ((weights.array() > 0.0f) && (weights.array() < 1.0f)).any();
    } else {
      weights = WeightGrid::NullaryExpr(h, w, [&] { return u(rng) < 0.3f ? 0.0f : u(rng); });
      weights(rng() % h, rng() % w) = 0.5f;
    }
    const Embedding got = mask_average_pool(map, weights);

    for (Eigen::Index c = 0; c < d; ++c) {
      double num = 0.0, den = 0.0;
      for (Eigen::Index r = 0; r < h; ++r) {
        for (Eigen::Index col = 0; col < w; ++col) {
          num += static_cast<double>(weights(r, col)) * static_cast<double>(map.at(c, r, col));
          den += static_cast<double>(weights(r, col));
        }
      }
      worst = std::max(worst, std::abs(got[c] - num / den));
    }
  }
  return {worst <= 1e-5, "1000 pairs (" + std::to_string(fractional) + " with fractional resized weights), max err " +
                             fmt(worst)};
}

}  // namespace

int main() {
  const std::vector<Criterion> criteria{
      {1, "exact search equals full-sort oracle", 10.0, exact_matches_full_sort},
      {2, "zero forgetting under growth", 5.0, zero_forgetting},
      {3, "pseudo-logit properties", 0.0, pseudo_logit_properties},
      {4, "confidence gate dichotomy", 0.0, gate_dichotomy},
      {5, "confident masks skip retrieval", 0.0, confidence_skip},
      {6, "hnsw recall on 10k clustered vectors", 60.0, hnsw_recall},
      {7, "hnsw throughput beats brute force at 100k", 0.0, hnsw_speedup},
      {8, "continual expansion keeps accuracy", 120.0, continual_simulation},
      {9, "miou worked example and streaming", 0.0, miou_oracle},
      {10, "record payload and byte-identical round trip", 0.0, storage},
      {11, "mask pooling matches 64-bit oracle", 0.0, pooling_oracle},
  };

  int failed = 0;
  for (const auto& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (c.time_limit_s > 0.0 && secs >= c.time_limit_s) {
      o.pass = false;
      o.detail += "; over the " + fmt(c.time_limit_s) + " s limit";
    }
    failed += !o.pass;
    std::printf("%s %2d  %-48s %7.2f s  %s\n", o.pass ? "PASS" : "FAIL", c.number, c.name.c_str(), secs,
                o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed ? 1 : 0;
}

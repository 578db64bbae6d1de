#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "ragseg/segmentation.hpp"

using namespace ragseg;

namespace {

MaskPrediction prediction(MaskGrid bits, ClassId c, float conf, float score = 1.0f) {
  return {{std::move(bits), score}, c, conf, score};
}

SemanticMap map_of(std::initializer_list<std::initializer_list<std::uint32_t>> rows) {
  LabelGrid g(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.begin()->size()));
  Eigen::Index r = 0;
  for (const auto& row : rows) {
    Eigen::Index c = 0;
    for (auto v : row) g(r, c++) = v;
    ++r;
  }
  return {g};
}

SemanticMap random_map(std::mt19937_64& rng, Eigen::Index h, Eigen::Index w, std::uint32_t classes, bool with_void) {
  SemanticMap m = SemanticMap::filled(h, w, 0);
  for (Eigen::Index i = 0; i < m.labels.size(); ++i) {
    const auto draw = static_cast<std::uint32_t>(rng() % (classes + (with_void ? 1 : 0)));
    m.labels.data()[i] = draw == classes ? kVoidLabel : draw;
  }
  return m;
}

// Per-class IoU by direct pixel counting over a list of image pairs.
std::vector<double> iou_oracle(const std::vector<std::pair<SemanticMap, SemanticMap>>& pairs, std::size_t classes,
                               bool ignore_void) {
  std::vector<double> out(classes, std::nan(""));
  for (std::size_t c = 0; c < classes; ++c) {
    long inter = 0, uni = 0;
    for (const auto& [pred, gt] : pairs) {
      for (Eigen::Index i = 0; i < pred.labels.size(); ++i) {
        const auto p = pred.labels.data()[i], g = gt.labels.data()[i];
        if (ignore_void && g == kVoidLabel) continue;
        inter += p == c && g == c;
        uni += p == c || g == c;
      }
    }
    if (uni > 0) out[c] = static_cast<double>(inter) / static_cast<double>(uni);
  }
  return out;
}

double mean_present(const std::vector<double>& iou) {
  double sum = 0.0;
  int n = 0;
  for (double v : iou) {
    if (!std::isnan(v)) sum += v, ++n;
  }
  return n ? sum / n : 0.0;
}

}  // namespace

TEST_CASE("stitch disjoint masks") {
  MaskGrid a = MaskGrid::Zero(3, 4), b = MaskGrid::Zero(3, 4);
  a.block(0, 0, 2, 2).setOnes();
  b(2, 3) = 1;
  const std::vector<MaskPrediction> preds{prediction(a, 4, 0.9f), prediction(b, 2, 0.3f)};
  const auto m = stitch_semantic_map(preds, 3, 4);
  CHECK(m.labels(0, 0) == 4);
  CHECK(m.labels(1, 1) == 4);
  CHECK(m.labels(2, 3) == 2);
  CHECK(m.labels(0, 3) == kVoidLabel);
  CHECK((m.labels.array() == kVoidLabel).count() == 12 - 5);
}

TEST_CASE("stitch overlap takes the higher score") {
  MaskGrid a = MaskGrid::Ones(2, 2), b = MaskGrid::Zero(2, 2);
  b.row(0).setOnes();
  const std::vector<MaskPrediction> preds{prediction(a, 1, 0.6f), prediction(b, 2, 0.9f)};
  const auto m = stitch_semantic_map(preds, 2, 2);
  CHECK(m.labels(0, 0) == 2);
  CHECK(m.labels(0, 1) == 2);
  CHECK(m.labels(1, 0) == 1);

  // Product vs class-only ordering.
  const std::vector<MaskPrediction> scored{prediction(a, 1, 0.8f, 0.5f), prediction(b, 2, 0.6f, 1.0f)};
  CHECK(stitch_semantic_map(scored, 2, 2).labels(0, 0) == 2);
  CHECK(stitch_semantic_map(scored, 2, 2, StitchStrategy::ClassOnly).labels(0, 0) == 1);
}

TEST_CASE("stitch ties go to the earlier prediction") {
  const std::vector<MaskPrediction> preds{prediction(MaskGrid::Ones(2, 2), 5, 0.5f),
                                          prediction(MaskGrid::Ones(2, 2), 6, 0.5f)};
  CHECK((stitch_semantic_map(preds, 2, 2).labels.array() == 5).all());
}

TEST_CASE("stitch matches a per-pixel max oracle") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  for (int t = 0; t < 50; ++t) {
    std::vector<MaskPrediction> preds;
    for (int i = 0; i < 6; ++i) {
      MaskGrid bits = MaskGrid::NullaryExpr(8, 9, [&] { return static_cast<std::uint8_t>(rng() % 3 == 0); });
      preds.push_back(prediction(bits, static_cast<ClassId>(rng() % 20), u(rng), u(rng)));
    }
    const auto m = stitch_semantic_map(preds, 8, 9);
    for (Eigen::Index r = 0; r < 8; ++r) {
      for (Eigen::Index c = 0; c < 9; ++c) {
        std::uint32_t expected = kVoidLabel;
        float best = -1.0f;
        for (const auto& p : preds) {
          const float score = p.class_confidence * p.mask_score;
          if (p.mask.bits(r, c) && score > best) best = score, expected = p.class_id;
        }
        REQUIRE(m.labels(r, c) == expected);
      }
    }
  }
}

TEST_CASE("stitch edge cases") {
  CHECK((stitch_semantic_map({}, 3, 3).labels.array() == kVoidLabel).all());
  const std::vector<MaskPrediction> wrong{prediction(MaskGrid::Ones(2, 3), 0, 0.5f)};
  try {
    stitch_semantic_map(wrong, 3, 3);
    FAIL("expected ShapeMismatch");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ShapeMismatch);
  }
}

TEST_CASE("filter_confident_masks") {
  const MaskGrid bits = MaskGrid::Ones(1, 1);
  const std::vector<MaskPrediction> preds{prediction(bits, 0, 0.8f, 0.9f), prediction(bits, 1, 0.6f, 0.9f),
                                          prediction(bits, 2, 0.8f, 0.4f)};
  CHECK(filter_confident_masks(preds, 0.0f, 0.0f).size() == 3);
  CHECK(filter_confident_masks(preds, 1.01f, 1.0f).empty());
  const auto kept = filter_confident_masks(preds, 0.7f, 0.5f);
  REQUIRE(kept.size() == 1);
  CHECK(kept[0].class_id == 0);
  CHECK(filter_confident_masks(preds, 0.8f, 0.9f).size() == 1);  // inclusive
}

TEST_CASE("miou examples") {
  const auto pred = map_of({{0, 0}, {1, 1}});
  const auto gt = map_of({{0, 1}, {1, 1}});
  const auto r = miou(pred, gt, 2);
  CHECK(r.per_class_iou[0] == doctest::Approx(0.5));
  CHECK(r.per_class_iou[1] == doctest::Approx(2.0 / 3.0));
  CHECK(r.mean == doctest::Approx(7.0 / 12.0));

  CHECK(miou(gt, gt, 4).mean == 1.0);
  CHECK(std::isnan(miou(gt, gt, 4).per_class_iou[3]));
  CHECK(miou(map_of({{0, 0}}), map_of({{1, 1}}), 2).mean == 0.0);
}

TEST_CASE("void handling") {
  const auto pred = map_of({{0, 1, 1}});
  const auto gt = map_of({{0, 1, kVoidLabel}});
  CHECK(miou(pred, gt, 2).mean == 1.0);
  CHECK(miou(pred, gt, 2, false).per_class_iou[1] == doctest::Approx(0.5));
  const auto blank = SemanticMap::filled(2, 2);
  CHECK(miou(blank, blank, 3).mean == 0.0);
}

TEST_CASE("miou errors") {
  try {
    miou(map_of({{0, 1}}), map_of({{0}, {1}}), 2);
    FAIL("expected ShapeMismatch");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ShapeMismatch);
  }
  try {
    miou(map_of({{0, 5}}), map_of({{0, 1}}), 2);
    FAIL("expected UnknownClass");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::UnknownClass);
  }
}

TEST_CASE("streaming counts match the pixel oracle and are order independent") {
  std::mt19937_64 rng(2);
  std::vector<std::pair<SemanticMap, SemanticMap>> pairs;
  for (int i = 0; i < 20; ++i) pairs.emplace_back(random_map(rng, 6, 7, 5, true), random_map(rng, 6, 7, 5, true));

  ConfusionMatrix forward(5);
  for (const auto& [p, g] : pairs) confusion_accumulate(forward, p, g);
  for (bool ignore : {true, false}) {
    const auto r = forward.miou(ignore);
    const auto oracle = iou_oracle(pairs, 5, ignore);
    for (std::size_t c = 0; c < 5; ++c) CHECK(r.per_class_iou[c] == doctest::Approx(oracle[c]).epsilon(1e-12));
    CHECK(r.mean == doctest::Approx(mean_present(oracle)).epsilon(1e-12));
  }

  std::shuffle(pairs.begin(), pairs.end(), rng);
  ConfusionMatrix shuffled(5);
  for (const auto& [p, g] : pairs) shuffled.accumulate(p, g);
  CHECK(shuffled.counts() == forward.counts());

  ConfusionMatrix a(5), b(5);
  for (std::size_t i = 0; i < pairs.size(); ++i) (i % 2 ? a : b).accumulate(pairs[i].first, pairs[i].second);
  a += b;
  CHECK(a.counts() == forward.counts());

  ConfusionMatrix single(5);
  single.accumulate(pairs[0].first, pairs[0].second);
  CHECK(single.miou().mean == miou(pairs[0].first, pairs[0].second, 5).mean);

  CHECK(ConfusionMatrix(3).counts().isZero());
}

TEST_CASE("mean is invariant under consistent relabeling") {
  std::mt19937_64 rng(3);
  std::vector<std::uint32_t> perm{0, 1, 2, 3, 4, 5};
  for (int t = 0; t < 20; ++t) {
    const auto pred = random_map(rng, 5, 5, 6, false);
    const auto gt = random_map(rng, 5, 5, 6, true);
    std::shuffle(perm.begin(), perm.end(), rng);
    auto relabel = [&](SemanticMap m) {
      for (Eigen::Index i = 0; i < m.labels.size(); ++i) {
        auto& v = m.labels.data()[i];
        if (v != kVoidLabel) v = perm[v];
      }
      return m;
    };
    const auto r = miou(pred, gt, 6);
    CHECK(miou(relabel(pred), relabel(gt), 6).mean == doctest::Approx(r.mean).epsilon(1e-12));
    for (std::size_t c = 0; c < 6; ++c) {
      if (r.present[c]) CHECK((r.per_class_iou[c] >= 0.0 && r.per_class_iou[c] <= 1.0));
    }
  }
}

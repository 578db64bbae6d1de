#pragma once

#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "ragseg/database.hpp"
#include "ragseg/features.hpp"

namespace ragseg {

using LabelGrid = Grid<std::uint32_t>;

inline constexpr std::uint32_t kVoidLabel = std::numeric_limits<std::uint32_t>::max();

/// Per-pixel class ids; kVoidLabel marks unlabeled pixels.
struct SemanticMap {
  LabelGrid labels;

  static SemanticMap filled(Eigen::Index rows, Eigen::Index cols, std::uint32_t label = kVoidLabel) {
    return {LabelGrid::Constant(rows, cols, label)};
  }
  Eigen::Index rows() const { return labels.rows(); }
  Eigen::Index cols() const { return labels.cols(); }
};

struct MaskPrediction {
  InstanceMask mask;
  ClassId class_id = 0;
  float class_confidence = 0.0f;
  float mask_score = 1.0f;
};

enum class StitchStrategy { Product, ClassOnly };

/// Each pixel takes the class of the covering prediction with the highest
/// score (class_confidence * mask_score, or class_confidence alone); ties go
/// to the earlier prediction.
SemanticMap stitch_semantic_map(std::span<const MaskPrediction> preds, Eigen::Index rows, Eigen::Index cols,
                                StitchStrategy strategy = StitchStrategy::Product);

/// Keeps predictions passing both thresholds (>=), in order. Thresholds are
/// clamped to [0,1].
std::vector<MaskPrediction> filter_confident_masks(std::span<const MaskPrediction> preds, float class_threshold,
                                                   float mask_threshold);

struct MiouResult {
  std::vector<double> per_class_iou;  // NaN for classes absent from both maps
  std::vector<bool> present;
  double mean = 0.0;  // 0 when no class is present
};

/// Streaming (C+1)x(C+1) pixel counts, rows = ground truth, cols = prediction;
/// index C collects void pixels.
class ConfusionMatrix {
 public:
  using Counts = Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic>;

  explicit ConfusionMatrix(std::size_t class_count);

  void accumulate(const SemanticMap& pred, const SemanticMap& gt);
  ConfusionMatrix& operator+=(const ConfusionMatrix& other);

  MiouResult miou(bool ignore_void = true) const;
  std::size_t class_count() const { return classes_; }
  const Counts& counts() const { return counts_; }
  /// Ground-truth pixel count per class.
  std::vector<std::int64_t> gt_pixels() const;

 private:
  std::size_t slot(std::uint32_t label) const;

  std::size_t classes_;
  Counts counts_;
};

ConfusionMatrix& confusion_accumulate(ConfusionMatrix& running, const SemanticMap& pred, const SemanticMap& gt);

MiouResult miou(const SemanticMap& pred, const SemanticMap& gt, std::size_t class_count, bool ignore_void = true);

}  // namespace ragseg

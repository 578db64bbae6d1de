#include "ragseg/segmentation.hpp"

#include <algorithm>
#include <cmath>

namespace ragseg {

SemanticMap stitch_semantic_map(std::span<const MaskPrediction> preds, Eigen::Index rows, Eigen::Index cols,
                                StitchStrategy strategy) {
  SemanticMap out = SemanticMap::filled(rows, cols);
  Grid<float> best = Grid<float>::Constant(rows, cols, -1.0f);
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const auto& p = preds[i];
    if (p.mask.rows() != rows || p.mask.cols() != cols) {
      throw Error(ErrorCode::ShapeMismatch, "prediction " + std::to_string(i) + " mask is " +
                                                std::to_string(p.mask.rows()) + "x" + std::to_string(p.mask.cols()));
    }
    const float score = strategy == StitchStrategy::Product ? p.class_confidence * p.mask_score : p.class_confidence;
    // Strict > keeps the earlier prediction on ties.
    const Grid<bool> take = ((p.mask.bits.array() != 0) && (best.array() < score)).matrix();
    best = take.select(Grid<float>::Constant(rows, cols, score), best);
    out.labels = take.select(LabelGrid::Constant(rows, cols, p.class_id), out.labels);
  }
  return out;
}

std::vector<MaskPrediction> filter_confident_masks(std::span<const MaskPrediction> preds, float class_threshold,
                                                   float mask_threshold) {
  class_threshold = std::clamp(class_threshold, 0.0f, 1.0f);
  mask_threshold = std::clamp(mask_threshold, 0.0f, 1.0f);
  std::vector<MaskPrediction> kept;
  std::copy_if(preds.begin(), preds.end(), std::back_inserter(kept), [&](const MaskPrediction& p) {
    return p.class_confidence >= class_threshold && p.mask_score >= mask_threshold;
  });
  return kept;
}

ConfusionMatrix::ConfusionMatrix(std::size_t class_count)
    : classes_(class_count), counts_(Counts::Zero(class_count + 1, class_count + 1)) {}

std::size_t ConfusionMatrix::slot(std::uint32_t label) const {
  if (label == kVoidLabel) return classes_;
  if (label >= classes_) {
    throw Error(ErrorCode::UnknownClass, "label " + std::to_string(label) + " >= class count " +
                                             std::to_string(classes_));
  }
  return label;
}

void ConfusionMatrix::accumulate(const SemanticMap& pred, const SemanticMap& gt) {
  if (pred.rows() != gt.rows() || pred.cols() != gt.cols()) {
    throw Error(ErrorCode::ShapeMismatch, "prediction " + std::to_string(pred.rows()) + "x" +
                                              std::to_string(pred.cols()) + " vs ground truth " +
                                              std::to_string(gt.rows()) + "x" + std::to_string(gt.cols()));
  }
  Counts local = Counts::Zero(counts_.rows(), counts_.cols());
  for (Eigen::Index i = 0; i < gt.labels.size(); ++i) {
    ++local(slot(gt.labels.data()[i]), slot(pred.labels.data()[i]));
  }
  counts_ += local;
}

ConfusionMatrix& ConfusionMatrix::operator+=(const ConfusionMatrix& other) {
  if (other.classes_ != classes_) throw Error(ErrorCode::ShapeMismatch, "confusion matrices differ in class count");
  counts_ += other.counts_;
  return *this;
}

MiouResult ConfusionMatrix::miou(bool ignore_void) const {
  const auto c = static_cast<Eigen::Index>(classes_);
  // Ignoring void drops the ground-truth void row entirely.
  const Counts used = ignore_void ? Counts(counts_.topRows(c)) : counts_;
  const auto gt_totals = used.rowwise().sum();
  const auto pred_totals = used.colwise().sum();

  MiouResult r;
  r.per_class_iou.assign(classes_, std::nan(""));
  r.present.assign(classes_, false);
  // Ratios are re-derived from the integer counts in extended precision so
  // the mean rounds once.
  long double sum = 0.0L;
  std::size_t present = 0;
  for (Eigen::Index k = 0; k < c; ++k) {
    const std::int64_t inter = used(k, k);
    const std::int64_t uni = gt_totals(k) + pred_totals(k) - inter;
    if (uni == 0) continue;
    r.present[k] = true;
    r.per_class_iou[k] = static_cast<double>(inter) / static_cast<double>(uni);
    sum += static_cast<long double>(inter) / static_cast<long double>(uni);
    ++present;
  }
  r.mean = present ? static_cast<double>(sum / static_cast<long double>(present)) : 0.0;
  return r;
}

std::vector<std::int64_t> ConfusionMatrix::gt_pixels() const {
  std::vector<std::int64_t> out(classes_);
  for (std::size_t k = 0; k < classes_; ++k) out[k] = counts_.row(static_cast<Eigen::Index>(k)).sum();
  return out;
}

ConfusionMatrix& confusion_accumulate(ConfusionMatrix& running, const SemanticMap& pred, const SemanticMap& gt) {
  running.accumulate(pred, gt);
  return running;
}

MiouResult miou(const SemanticMap& pred, const SemanticMap& gt, std::size_t class_count, bool ignore_void) {
  ConfusionMatrix cm(class_count);
  cm.accumulate(pred, gt);
  return cm.miou(ignore_void);
}

}  // namespace ragseg

#include "ragseg/features.hpp"

#include <algorithm>

namespace ragseg {
namespace {

// overlap(i, s) / target_len, where target cell i spans [i*src, (i+1)*src) and
// source cell s spans [s*dst, (s+1)*dst) in a common integer unit.
Grid<double> overlap_fractions(Eigen::Index dst, Eigen::Index src) {
  Grid<double> out = Grid<double>::Zero(dst, src);
  for (Eigen::Index i = 0; i < dst; ++i) {
    const Eigen::Index t0 = i * src;
    const Eigen::Index t1 = t0 + src;
    for (Eigen::Index s = t0 / dst; s < src && s * dst < t1; ++s) {
      const Eigen::Index overlap = std::min(t1, (s + 1) * dst) - std::max(t0, s * dst);
      if (overlap > 0) out(i, s) = static_cast<double>(overlap) / static_cast<double>(src);
    }
  }
  return out;
}

}  // namespace

WeightGrid resize_mask(const InstanceMask& mask, Eigen::Index rows, Eigen::Index cols) {
  if (rows < 1 || cols < 1) throw Error(ErrorCode::ShapeMismatch, "target grid must be at least 1x1");
  if (mask.bits.size() == 0 || mask.area() == 0) throw Error(ErrorCode::InvalidMask, "mask has no set cells");

  const Grid<double> binary = (mask.bits.array() != 0).cast<double>();
  const Grid<double> row_mix = overlap_fractions(rows, mask.rows());
  const Grid<double> col_mix = overlap_fractions(cols, mask.cols());
  Grid<double> weights = row_mix * binary * col_mix.transpose();

  // Only reachable through underflow; keeps every proposal classifiable.
  if ((weights.array() == 0.0).all()) {
    double cy = 0.0, cx = 0.0;
    for (Eigen::Index r = 0; r < binary.rows(); ++r) {
      for (Eigen::Index c = 0; c < binary.cols(); ++c) {
        if (binary(r, c) != 0.0) {
          cy += r + 0.5;
          cx += c + 0.5;
        }
      }
    }
    const double n = binary.sum();
    const auto ty = std::min<Eigen::Index>(rows - 1, static_cast<Eigen::Index>(cy / n * rows / mask.rows()));
    const auto tx = std::min<Eigen::Index>(cols - 1, static_cast<Eigen::Index>(cx / n * cols / mask.cols()));
    weights(ty, tx) = 1.0;
  }
  return weights.cwiseMin(1.0).cast<float>();
}

std::vector<Embedding> extract_instance_embeddings(const FeatureMap& map, std::span<const InstanceMask> masks) {
  std::vector<Embedding> out;
  out.reserve(masks.size());
  for (std::size_t j = 0; j < masks.size(); ++j) {
    try {
      if (masks[j].rows() != masks.front().rows() || masks[j].cols() != masks.front().cols()) {
        throw Error(ErrorCode::ShapeMismatch, "masks do not share one image resolution");
      }
      out.push_back(mask_average_pool(map, resize_mask(masks[j], map.rows(), map.cols())));
    } catch (const Error& e) {
      rethrow_at(e, "mask", j);
    }
  }
  return out;
}

}  // namespace ragseg

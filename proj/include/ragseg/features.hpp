#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "ragseg/error.hpp"

namespace ragseg {

template <typename Scalar>
using Grid = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using Embedding = Vector<float>;
using WeightGrid = Grid<float>;
using MaskGrid = Grid<std::uint8_t>;

/// Binary instance mask at image resolution, with the proposal's confidence when known.
struct InstanceMask {
  MaskGrid bits;
  std::optional<float> mask_score;

  Eigen::Index rows() const { return bits.rows(); }
  Eigen::Index cols() const { return bits.cols(); }
  Eigen::Index area() const { return (bits.array() != 0).count(); }
};

/// Dense d x h x w feature tensor, stored channel-major: row c of `values()`
/// holds channel c as a row-major h*w spatial grid.
template <typename Scalar>
class FeatureMapT {
 public:
  FeatureMapT() = default;

  FeatureMapT(Eigen::Index rows, Eigen::Index cols, Grid<Scalar> values)
      : rows_(rows), cols_(cols), values_(std::move(values)) {
    if (rows_ < 1 || cols_ < 1 || values_.rows() < 1 || values_.cols() != rows_ * cols_) {
      throw Error(ErrorCode::ShapeMismatch, "feature map needs d>=1, h>=1, w>=1 and d x (h*w) values");
    }
    if (!values_.allFinite()) throw Error(ErrorCode::ParseError, "feature map contains non-finite values");
  }

  /// Builds from a flat channel-major buffer of d*h*w values.
  static FeatureMapT from_buffer(std::span<const Scalar> buffer, Eigen::Index channels,
                                 Eigen::Index rows, Eigen::Index cols) {
    if (channels < 1 || rows < 1 || cols < 1 ||
        static_cast<Eigen::Index>(buffer.size()) != channels * rows * cols) {
      throw Error(ErrorCode::ShapeMismatch, "feature buffer length does not match d*h*w");
    }
    Grid<Scalar> values = Eigen::Map<const Grid<Scalar>>(buffer.data(), channels, rows * cols);
    return FeatureMapT(rows, cols, std::move(values));
  }

  Eigen::Index channels() const { return values_.rows(); }
  Eigen::Index rows() const { return rows_; }
  Eigen::Index cols() const { return cols_; }
  const Grid<Scalar>& values() const { return values_; }

  Scalar at(Eigen::Index c, Eigen::Index r, Eigen::Index col) const { return values_(c, r * cols_ + col); }

 private:
  Eigen::Index rows_ = 0;
  Eigen::Index cols_ = 0;
  Grid<Scalar> values_;
};

using FeatureMap = FeatureMapT<float>;

/// Area-averages a binary mask onto a (rows x cols) grid. Each target cell
/// receives the fraction of its pre-image covered by the mask.
WeightGrid resize_mask(const InstanceMask& mask, Eigen::Index rows, Eigen::Index cols);

/// Weighted spatial mean of every channel (mask average pooling). Sums are
/// accumulated in double and rounded to Scalar once.
template <typename Scalar, typename Derived>
Vector<Scalar> mask_average_pool(const FeatureMapT<Scalar>& map, const Eigen::MatrixBase<Derived>& weights) {
  if (weights.rows() != map.rows() || weights.cols() != map.cols()) {
    throw Error(ErrorCode::ShapeMismatch, "weight grid " + std::to_string(weights.rows()) + "x" +
                                              std::to_string(weights.cols()) + " vs feature map " +
                                              std::to_string(map.rows()) + "x" + std::to_string(map.cols()));
  }
  const Grid<double> w = weights.template cast<double>();
  if (!w.allFinite() || (w.array() < 0.0).any()) {
    throw Error(ErrorCode::DegenerateMask, "weights must be finite and non-negative");
  }
  const double total = w.sum();
  if (!(total > 0.0)) throw Error(ErrorCode::DegenerateMask, "weight sum is zero");

  const Eigen::Map<const Vector<double>> flat(w.data(), w.size());
  const Vector<double> pooled = (map.values().template cast<double>() * flat) / total;
  return pooled.template cast<Scalar>();
}

/// One embedding per mask, in mask order. Errors carry the mask index.
std::vector<Embedding> extract_instance_embeddings(const FeatureMap& map, std::span<const InstanceMask> masks);

template <typename Derived>
Vector<typename Derived::Scalar> l2_normalize(const Eigen::MatrixBase<Derived>& e) {
  using Scalar = typename Derived::Scalar;
  const Vector<double> v = e.template cast<double>();
  const double norm = v.norm();
  if (!(norm > 0.0) || !std::isfinite(norm)) {
    throw Error(ErrorCode::DegenerateEmbedding, "cannot normalize a zero or non-finite vector");
  }
  return (v / norm).template cast<Scalar>();
}

}  // namespace ragseg

#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "ragseg/database.hpp"

namespace ragseg {

/// Gaussian clusters around well-separated centroids, used in place of real
/// extractor features.
struct SyntheticSpec {
  std::size_t class_count = 10;
  std::size_t per_class = 32;
  std::size_t dim = 64;
  double separation = 1.0;  // minimum pairwise centroid distance
  double sigma = 0.1;       // isotropic noise std per component
  double radius = 1.0;      // centroids live on the sphere of this radius
  /// Class increments in arrival order; must sum to class_count. Empty means
  /// a single increment holding every class.
  std::vector<std::size_t> schedule;

  void validate() const;
  std::vector<std::size_t> increments() const;
};

/// `base` classes first, then steps of `step` until `total` (last step may be short).
std::vector<std::size_t> make_schedule(std::size_t base, std::size_t total, std::size_t step);

class SyntheticGenerator {
 public:
  SyntheticGenerator(const SyntheticSpec& spec, std::uint64_t seed);

  const SyntheticSpec& spec() const { return spec_; }
  /// dim x C, column c is the centroid of class c.
  const Eigen::MatrixXd& centroids() const { return centroids_; }
  /// `count` unit-norm samples of class c, as columns. Advances the stream.
  Eigen::MatrixXf sample(std::size_t class_id, std::size_t count);

 private:
  SyntheticSpec spec_;
  std::mt19937_64 rng_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  Eigen::MatrixXd centroids_;
};

struct SyntheticSet {
  Eigen::MatrixXf vectors;  // dim x N, unit columns
  std::vector<ClassId> labels;
  Eigen::MatrixXd centroids;
};

/// spec.per_class samples per class, classes in id order.
SyntheticSet gen_synthetic(const SyntheticSpec& spec, std::uint64_t seed);

/// Index of the centroid with the highest cosine to `v`.
ClassId nearest_centroid(const Eigen::MatrixXd& centroids, const Eigen::Ref<const Eigen::VectorXf>& v);

}  // namespace ragseg

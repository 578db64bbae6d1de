#include "ragseg/synthetic.hpp"

#include <numeric>

namespace ragseg {

void SyntheticSpec::validate() const {
  if (class_count == 0 || per_class == 0 || dim == 0) {
    throw Error(ErrorCode::InvalidConfig, "synthetic spec needs classes, samples and dim >= 1");
  }
  if (!(sigma >= 0.0) || !(separation >= 0.0) || !(radius > 0.0)) {
    throw Error(ErrorCode::InvalidConfig, "sigma and separation must be >= 0, radius > 0");
  }
  const auto steps = increments();
  if (std::accumulate(steps.begin(), steps.end(), std::size_t{0}) != class_count ||
      std::find(steps.begin(), steps.end(), 0) != steps.end()) {
    throw Error(ErrorCode::InvalidConfig, "schedule must partition exactly class_count classes");
  }
}

std::vector<std::size_t> SyntheticSpec::increments() const {
  return schedule.empty() ? std::vector<std::size_t>{class_count} : schedule;
}

std::vector<std::size_t> make_schedule(std::size_t base, std::size_t total, std::size_t step) {
  if (base == 0 || base > total || (step == 0 && base < total)) {
    throw Error(ErrorCode::InvalidConfig, "schedule needs 0 < base <= total and step >= 1");
  }
  std::vector<std::size_t> out{base};
  for (std::size_t seen = base; seen < total; seen += out.back()) out.push_back(std::min(step, total - seen));
  return out;
}

SyntheticGenerator::SyntheticGenerator(const SyntheticSpec& spec, std::uint64_t seed) : spec_(spec), rng_(seed) {
  spec_.validate();
  if (spec_.separation > 2.0 * spec_.radius || (spec_.dim == 1 && spec_.class_count > 2)) {
    throw Error(ErrorCode::InfeasibleSpec, "separation cannot be met on a sphere of this radius and dim");
  }
  constexpr int kAttempts = 10000;
  const auto d = static_cast<Eigen::Index>(spec_.dim);
  centroids_.resize(d, static_cast<Eigen::Index>(spec_.class_count));
  for (Eigen::Index c = 0; c < centroids_.cols(); ++c) {
    bool placed = false;
    for (int attempt = 0; attempt < kAttempts && !placed; ++attempt) {
      Eigen::VectorXd v(d);
      for (Eigen::Index i = 0; i < d; ++i) v[i] = normal_(rng_);
      const double norm = v.norm();
      if (!(norm > 0.0)) continue;
      v *= spec_.radius / norm;
      placed = c == 0 || (centroids_.leftCols(c).colwise() - v).colwise().norm().minCoeff() >= spec_.separation;
      if (placed) centroids_.col(c) = v;
    }
    if (!placed) {
      throw Error(ErrorCode::InfeasibleSpec, "could not place centroid " + std::to_string(c) + " at separation " +
                                                 std::to_string(spec_.separation));
    }
  }
}

Eigen::MatrixXf SyntheticGenerator::sample(std::size_t class_id, std::size_t count) {
  const auto d = centroids_.rows();
  Eigen::MatrixXf out(d, static_cast<Eigen::Index>(count));
  for (Eigen::Index j = 0; j < out.cols(); ++j) {
    Eigen::VectorXd v = centroids_.col(static_cast<Eigen::Index>(class_id));
    for (Eigen::Index i = 0; i < d; ++i) v[i] += spec_.sigma * normal_(rng_);
    out.col(j) = l2_normalize(v).cast<float>();
  }
  return out;
}

SyntheticSet gen_synthetic(const SyntheticSpec& spec, std::uint64_t seed) {
  SyntheticGenerator gen(spec, seed);
  SyntheticSet set;
  set.vectors.resize(static_cast<Eigen::Index>(spec.dim), static_cast<Eigen::Index>(spec.class_count * spec.per_class));
  for (std::size_t c = 0; c < spec.class_count; ++c) {
    set.vectors.middleCols(static_cast<Eigen::Index>(c * spec.per_class), static_cast<Eigen::Index>(spec.per_class)) =
        gen.sample(c, spec.per_class);
    set.labels.insert(set.labels.end(), spec.per_class, static_cast<ClassId>(c));
  }
  set.centroids = gen.centroids();
  return set;
}

ClassId nearest_centroid(const Eigen::MatrixXd& centroids, const Eigen::Ref<const Eigen::VectorXf>& v) {
  Eigen::Index best = 0;
  (centroids.colwise().normalized().transpose() * v.cast<double>()).maxCoeff(&best);
  return static_cast<ClassId>(best);
}

}  // namespace ragseg

#pragma once

// K-Means over likelihood feature vectors with optional PCA projection.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "hmme/error.hpp"
#include "hmme/random.hpp"

namespace hmme {

using PointSet = std::vector<std::vector<double>>;

struct PcaProjection {
  std::vector<double> mean;
  PointSet components;  // one unit vector per retained component
  std::vector<double> explained_variance;

  std::vector<double> project(std::span<const double> x) const {
    std::vector<double> out(components.size(), 0.0);
    for (std::size_t c = 0; c < components.size(); ++c) {
      for (std::size_t f = 0; f < x.size(); ++f) out[c] += (x[f] - mean[f]) * components[c][f];
    }
    return out;
  }
};

/// Principal components from the eigendecomposition of the sample covariance.
/// Each component's largest-magnitude entry is made positive.
inline PcaProjection fit_pca(const PointSet& points, std::size_t dims) {
  if (points.empty()) throw InputError("PCA needs at least one point");
  const std::size_t n = points.size();
  const std::size_t d = points.front().size();
  if (dims == 0 || dims > d) throw InputError("PCA dimension must lie in [1, feature length]");

  Eigen::MatrixXd x(n, d);
  for (std::size_t i = 0; i < n; ++i) {
    if (points[i].size() != d) throw InputError("feature vectors differ in length");
    for (std::size_t f = 0; f < d; ++f) x(i, f) = points[i][f];
  }
  const Eigen::RowVectorXd mean = x.colwise().mean();
  x.rowwise() -= mean;
  const Eigen::MatrixXd cov = (x.transpose() * x) / static_cast<double>(n);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
  if (solver.info() != Eigen::Success) throw std::runtime_error("covariance eigendecomposition failed");

  PcaProjection pca;
  pca.mean.assign(mean.data(), mean.data() + d);
  // Eigen returns eigenvalues in ascending order.
  for (std::size_t c = 0; c < dims; ++c) {
    const Eigen::Index col = static_cast<Eigen::Index>(d - 1 - c);
    Eigen::VectorXd v = solver.eigenvectors().col(col);
    Eigen::Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v(arg) < 0) v = -v;
    pca.components.emplace_back(v.data(), v.data() + d);
    pca.explained_variance.push_back(solver.eigenvalues()(col));
  }
  return pca;
}

struct KMeansOptions {
  std::size_t k = 2;
  std::uint64_t seed = 0;
  std::size_t max_iters = 300;
  std::optional<std::size_t> pca_dims;
};

struct KMeansResult {
  std::vector<std::size_t> assignments;
  PointSet centroids;  // in the (possibly projected) clustering space
  std::size_t iterations = 0;
  bool converged = false;
  /// Within-cluster sum of squares after each assignment step.
  std::vector<double> objective_trace;
};

namespace detail {

inline double squared_distance(std::span<const double> a, std::span<const double> b) {
  double sum = 0.0;
  for (std::size_t f = 0; f < a.size(); ++f) sum += (a[f] - b[f]) * (a[f] - b[f]);
  return sum;
}

/// Distance-weighted seeding: first centre uniform, each next one drawn with
/// probability proportional to squared distance from the nearest chosen centre.
inline PointSet seed_centroids(const PointSet& points, std::size_t k, Rng& rng) {
  PointSet centroids;
  centroids.push_back(points[rng.below(points.size())]);
  std::vector<double> nearest(points.size(), std::numeric_limits<double>::infinity());
  while (centroids.size() < k) {
    double total = 0.0;
    for (std::size_t i = 0; i < points.size(); ++i) {
      nearest[i] = std::min(nearest[i], squared_distance(points[i], centroids.back()));
      total += nearest[i];
    }
    // All points coincide with chosen centres: fall back to a uniform pick.
    const std::size_t next = total > 0.0 ? rng.categorical(nearest) : rng.below(points.size());
    centroids.push_back(points[next]);
  }
  return centroids;
}

}  // namespace detail

/// Seeded K-Means with Lloyd iterations. Stops when assignments stop changing
/// or after max_iters. A cluster that loses all points keeps its centroid.
inline KMeansResult kmeans(const PointSet& input, const KMeansOptions& options) {
  if (input.empty()) throw InputError("k-means needs at least one point");
  if (options.k == 0) throw InputError("k must be >= 1");
  if (options.k > input.size()) {
    throw InputError("k = " + std::to_string(options.k) + " exceeds the number of points (" +
                     std::to_string(input.size()) + ")");
  }
  const std::size_t d = input.front().size();
  for (const auto& p : input) {
    if (p.size() != d) throw InputError("feature vectors differ in length");
  }

  PointSet projected;
  if (options.pca_dims) {
    const auto pca = fit_pca(input, *options.pca_dims);
    projected.reserve(input.size());
    for (const auto& p : input) projected.push_back(pca.project(p));
  }
  const PointSet& points = options.pca_dims ? projected : input;
  const std::size_t dim = points.front().size();

  Rng rng(options.seed);
  KMeansResult result;
  result.centroids = detail::seed_centroids(points, options.k, rng);
  result.assignments.assign(points.size(), options.k);

  for (std::size_t iter = 0; iter < options.max_iters; ++iter) {
    bool changed = false;
    double wcss = 0.0;
    for (std::size_t i = 0; i < points.size(); ++i) {
      std::size_t best = 0;
      double best_dist = std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < options.k; ++c) {
        const double dist = detail::squared_distance(points[i], result.centroids[c]);
        if (dist < best_dist) {
          best_dist = dist;
          best = c;
        }
      }
      changed |= (result.assignments[i] != best);
      result.assignments[i] = best;
      wcss += best_dist;
    }
    result.objective_trace.push_back(wcss);
    result.iterations = iter + 1;
    if (!changed) {
      result.converged = true;
      break;
    }

    PointSet sums(options.k, std::vector<double>(dim, 0.0));
    std::vector<std::size_t> counts(options.k, 0);
    for (std::size_t i = 0; i < points.size(); ++i) {
      const std::size_t c = result.assignments[i];
      ++counts[c];
      for (std::size_t f = 0; f < dim; ++f) sums[c][f] += points[i][f];
    }
    for (std::size_t c = 0; c < options.k; ++c) {
      if (counts[c] == 0) continue;
      for (std::size_t f = 0; f < dim; ++f) result.centroids[c][f] = sums[c][f] / static_cast<double>(counts[c]);
    }
  }
  return result;
}

/// Within-cluster sum of squares of a labelling against given centroids.
inline double within_cluster_ss(const PointSet& points, std::span<const std::size_t> assignments,
                                const PointSet& centroids) {
  double total = 0.0;
  for (std::size_t i = 0; i < points.size(); ++i) {
    total += detail::squared_distance(points[i], centroids[assignments[i]]);
  }
  return total;
}

}  // namespace hmme

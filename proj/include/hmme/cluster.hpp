#pragma once

#include <vector>

#include "hmme/ensemble.hpp"
#include "hmme/kmeans.hpp"

namespace hmme {

/// K-Means over likelihood feature vectors.
inline KMeansResult cluster_features(const std::vector<LikelihoodFeatures>& features, const KMeansOptions& options) {
  PointSet points;
  points.reserve(features.size());
  for (const auto& f : features) points.push_back(f.values);
  return kmeans(points, options);
}

}  // namespace hmme

#pragma once

#include <cmath>
#include <limits>
#include <vector>

#include "ssp3d/errors.hpp"
#include "ssp3d/rng.hpp"

namespace ssp3d {

struct KMeansResult {
  std::vector<std::vector<double>> centers;
  std::vector<int> assignments;
  std::vector<double> sse_history;  // one entry per Lloyd iteration
};

namespace detail {

inline double sqdist(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

}  // namespace detail

// Lloyd's iterations with k-means++ seeding, run to assignment fixpoint or
// 100 iterations. Within-cluster SSE is non-increasing across iterations.
inline KMeansResult lloyd_kmeans(const std::vector<std::vector<double>>& features, int k,
                                 std::uint64_t seed, int max_iters = 100) {
  const int n = static_cast<int>(features.size());
  if (n < k) throw DataError("lloyd_kmeans: fewer points (" + std::to_string(n) +
                             ") than clusters (" + std::to_string(k) + ")");
  const std::size_t dim = features[0].size();
  Rng rng(seed);

  // k-means++ seeding
  std::vector<std::vector<double>> centers;
  centers.push_back(features[rng.randint(0, n - 1)]);
  std::vector<double> d2(n);
  while (static_cast<int>(centers.size()) < k) {
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& c : centers) best = std::min(best, detail::sqdist(features[i], c));
      d2[i] = best;
      total += best;
    }
    int pick = 0;
    if (total > 0.0) {
      double r = rng.uniform() * total;
      for (int i = 0; i < n; ++i) {
        r -= d2[i];
        if (r <= 0.0) {
          pick = i;
          break;
        }
        pick = i;
      }
    } else {
      pick = static_cast<int>(rng.randint(0, n - 1));
    }
    centers.push_back(features[pick]);
  }

  KMeansResult res;
  res.assignments.assign(n, -1);
  for (int iter = 0; iter < max_iters; ++iter) {
    bool changed = false;
    double sse = 0.0;
    for (int i = 0; i < n; ++i) {
      int best = 0;
      double bd = detail::sqdist(features[i], centers[0]);
      for (int c = 1; c < k; ++c) {
        const double d = detail::sqdist(features[i], centers[c]);
        if (d < bd) {
          bd = d;
          best = c;
        }
      }
      sse += bd;
      if (res.assignments[i] != best) {
        res.assignments[i] = best;
        changed = true;
      }
    }
    res.sse_history.push_back(sse);
    if (!changed && iter > 0) break;

    std::vector<std::vector<double>> sums(k, std::vector<double>(dim, 0.0));
    std::vector<int> counts(k, 0);
    for (int i = 0; i < n; ++i) {
      auto& s = sums[res.assignments[i]];
      for (std::size_t d = 0; d < dim; ++d) s[d] += features[i][d];
      counts[res.assignments[i]]++;
    }
    for (int c = 0; c < k; ++c) {
      if (counts[c] == 0) continue;  // empty cluster keeps its center
      for (std::size_t d = 0; d < dim; ++d) centers[c][d] = sums[c][d] / counts[c];
    }
  }
  res.centers = std::move(centers);
  return res;
}

}  // namespace ssp3d

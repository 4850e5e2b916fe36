#ifndef AACPRED_CORPUS_COVERAGE_HPP
#define AACPRED_CORPUS_COVERAGE_HPP

#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "aacpred/encoder.hpp"
#include "aacpred/error.hpp"
#include "aacpred/rng.hpp"

namespace aacpred::corpus {

struct KMeansResult {
  std::vector<std::size_t> assignment;
  Eigen::MatrixXd centroids;  // k x d
  std::size_t iterations = 0;
};

// k-means++ seeding followed by Lloyd iterations until assignments settle.
// An emptied cluster is re-seeded with the point farthest from its centroid.
inline KMeansResult kmeans(const Eigen::MatrixXd& points, std::size_t k, std::uint64_t seed,
                           std::size_t max_iterations = 300) {
  const auto n = static_cast<std::size_t>(points.rows());
  if (k < 1 || k > n)
    throw Error(Errc::invalid_k, "k=" + std::to_string(k) + " with " + std::to_string(n) + " points");
  Rng rng(seed);
  KMeansResult r;
  r.centroids.resize(static_cast<Eigen::Index>(k), points.cols());
  std::vector<double> d2(n, std::numeric_limits<double>::infinity());
  std::size_t first = uniform_index(rng, n);
  r.centroids.row(0) = points.row(static_cast<Eigen::Index>(first));
  for (std::size_t c = 1; c < k; ++c) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      d2[i] = std::min(d2[i], (points.row(static_cast<Eigen::Index>(i)) - r.centroids.row(static_cast<Eigen::Index>(c - 1))).squaredNorm());
      total += d2[i];
    }
    std::size_t pick = n - 1;
    if (total > 0.0) {
      double target = uniform01(rng) * total;
      for (std::size_t i = 0; i < n; ++i) {
        target -= d2[i];
        if (target < 0.0) {
          pick = i;
          break;
        }
      }
    } else {
      pick = uniform_index(rng, n);
    }
    r.centroids.row(static_cast<Eigen::Index>(c)) = points.row(static_cast<Eigen::Index>(pick));
  }

  r.assignment.assign(n, k);
  for (r.iterations = 0; r.iterations < max_iterations; ++r.iterations) {
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < k; ++c) {
        const double d = (points.row(static_cast<Eigen::Index>(i)) - r.centroids.row(static_cast<Eigen::Index>(c))).squaredNorm();
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
      if (r.assignment[i] != best) {
        r.assignment[i] = best;
        changed = true;
      }
    }
    if (!changed) break;
    Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(k), points.cols());
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      sums.row(static_cast<Eigen::Index>(r.assignment[i])) += points.row(static_cast<Eigen::Index>(i));
      ++counts[r.assignment[i]];
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] > 0) {
        r.centroids.row(static_cast<Eigen::Index>(c)) = sums.row(static_cast<Eigen::Index>(c)) / static_cast<double>(counts[c]);
        continue;
      }
      std::size_t far = 0;
      double far_d = -1.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double d = (points.row(static_cast<Eigen::Index>(i)) - r.centroids.row(static_cast<Eigen::Index>(r.assignment[i]))).squaredNorm();
        if (d > far_d) {
          far_d = d;
          far = i;
        }
      }
      r.centroids.row(static_cast<Eigen::Index>(c)) = points.row(static_cast<Eigen::Index>(far));
    }
  }
  return r;
}

/// Fraction of target vectors sharing a cluster with at least one reference vector.
inline double coverage(const std::vector<Vec>& target, const std::vector<Vec>& reference, std::size_t k,
                       std::uint64_t seed) {
  if (target.empty() || reference.empty()) throw Error(Errc::malformed_input, "coverage needs two non-empty sets");
  const auto n = target.size() + reference.size();
  if (k < 1 || k > n) throw Error(Errc::invalid_k, "k=" + std::to_string(k) + " exceeds " + std::to_string(n) + " sentences");
  const auto d = target.front().size();
  Eigen::MatrixXd points(static_cast<Eigen::Index>(n), d);
  std::size_t row = 0;
  for (const auto* set : {&target, &reference})
    for (const auto& v : *set) {
      if (v.size() != d) throw Error(Errc::dimension_mismatch, "embeddings differ in width");
      points.row(static_cast<Eigen::Index>(row++)) = v.cast<double>().transpose();
    }
  auto km = kmeans(points, k, seed);
  std::vector<char> has_reference(k, 0);
  for (std::size_t i = target.size(); i < n; ++i) has_reference[km.assignment[i]] = 1;
  std::size_t covered = 0;
  for (std::size_t i = 0; i < target.size(); ++i) covered += has_reference[km.assignment[i]];
  return static_cast<double>(covered) / static_cast<double>(target.size());
}

/// Mean of the last four layers at the start marker.
inline Vec sentence_embedding(const EncoderHandle& encoder, std::string_view sentence) {
  return mean_last_layers(encoder.encode(sentence), EncoderHandle::marker_position());
}

using SentenceEmbedder = std::function<Vec(std::string_view)>;

inline double coverage(const std::vector<std::string>& target, const std::vector<std::string>& reference,
                       const SentenceEmbedder& embed, std::size_t k, std::uint64_t seed) {
  std::vector<Vec> t, r;
  for (const auto& s : target) t.push_back(embed(s));
  for (const auto& s : reference) r.push_back(embed(s));
  return coverage(t, r, k, seed);
}

}  // namespace aacpred::corpus

#endif  // AACPRED_CORPUS_COVERAGE_HPP

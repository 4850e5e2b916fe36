#ifndef AACPRED_ENCODER_HPP
#define AACPRED_ENCODER_HPP

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "aacpred/error.hpp"

namespace aacpred {

using Vec = Eigen::VectorXf;
using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// A subtoken and the byte range of the input it covers.
struct Subtoken {
  std::int32_t id = 0;
  std::size_t begin = 0;
  std::size_t end = 0;
};

/// Hidden states of every layer, embedding output first. Each matrix is
/// positions x h. Position 0 is the sentence-start marker and position i + 1
/// holds subtoken i.
struct LayerStates {
  std::vector<RowMat> layers;

  std::size_t positions() const { return layers.empty() ? 0 : static_cast<std::size_t>(layers.front().rows()); }
};

/// Pre-trained text encoder backend.
class EncoderHandle {
 public:
  virtual ~EncoderHandle() = default;

  virtual std::string id() const = 0;
  virtual std::size_t hidden_size() const = 0;
  virtual std::vector<Subtoken> subtokenize(std::string_view text) const = 0;
  virtual Vec input_embedding(std::int32_t subtoken) const = 0;
  virtual LayerStates encode(std::string_view text) const = 0;
  virtual std::int32_t unknown_subtoken() const = 0;

  static constexpr std::size_t marker_position() { return 0; }
};

/// Sum of the last `count` layers at `position`.
inline Vec sum_last_layers(const LayerStates& states, std::size_t position, std::size_t count = 4) {
  if (states.layers.size() < count)
    throw Error(Errc::encoder_failure, "encoder returned " + std::to_string(states.layers.size()) +
                                           " layers, need at least " + std::to_string(count));
  if (position >= states.positions()) throw Error(Errc::encoder_failure, "position beyond encoded length");
  const auto& last = states.layers.back();
  Vec acc = Vec::Zero(last.cols());
  for (std::size_t l = states.layers.size() - count; l < states.layers.size(); ++l)
    acc += states.layers[l].row(static_cast<Eigen::Index>(position)).transpose();
  return acc;
}

inline Vec mean_last_layers(const LayerStates& states, std::size_t position, std::size_t count = 4) {
  return sum_last_layers(states, position, count) / static_cast<float>(count);
}

/// Pictogram bitmap encoder backend.
class ImageEncoderHandle {
 public:
  virtual ~ImageEncoderHandle() = default;
  virtual std::size_t dimension() const = 0;
  virtual Vec encode_image(std::string_view image_bytes) const = 0;
};

inline float cosine_distance(const Vec& a, const Vec& b) {
  const double na = a.cast<double>().norm();
  const double nb = b.cast<double>().norm();
  if (na == 0.0 || nb == 0.0) return 1.0f;
  return static_cast<float>(1.0 - a.cast<double>().dot(b.cast<double>()) / (na * nb));
}

}  // namespace aacpred

#endif  // AACPRED_ENCODER_HPP

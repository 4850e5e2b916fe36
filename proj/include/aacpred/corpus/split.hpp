#ifndef AACPRED_CORPUS_SPLIT_HPP
#define AACPRED_CORPUS_SPLIT_HPP

#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "aacpred/error.hpp"
#include "aacpred/rng.hpp"

namespace aacpred::corpus {

enum class Part { train, test, validation };

inline std::string_view part_name(Part p) {
  switch (p) {
    case Part::train: return "train";
    case Part::test: return "test";
    case Part::validation: return "validation";
  }
  return "train";
}

/// Proportions in train, test, validation order.
using Proportions = std::array<double, 3>;
inline constexpr Proportions kDefaultProportions = {0.68, 0.16, 0.16};

/// Floor of each share; whatever is left over goes to train.
inline std::array<std::size_t, 3> split_sizes(std::size_t n, const Proportions& p) {
  double sum = 0.0;
  for (double x : p) {
    if (!(x >= 0.0)) throw Error(Errc::invalid_proportions, "negative or NaN proportion");
    sum += x;
  }
  if (std::fabs(sum - 1.0) > 1e-9) throw Error(Errc::invalid_proportions, "proportions sum to " + std::to_string(sum));
  std::array<std::size_t, 3> sizes{};
  std::size_t used = 0;
  for (std::size_t i = 0; i < 3; ++i) {
    sizes[i] = static_cast<std::size_t>(std::floor(static_cast<double>(n) * p[i] + 1e-9));
    used += sizes[i];
  }
  sizes[0] += n - used;
  return sizes;
}

/// Seeded assignment of every index to a part.
inline std::vector<Part> split(std::size_t n, const Proportions& p = kDefaultProportions, std::uint64_t seed = 0) {
  const auto sizes = split_sizes(n, p);
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(seed);
  shuffle(order, rng);
  std::vector<Part> out(n, Part::train);
  for (std::size_t i = sizes[0]; i < sizes[0] + sizes[1]; ++i) out[order[i]] = Part::test;
  for (std::size_t i = sizes[0] + sizes[1]; i < n; ++i) out[order[i]] = Part::validation;
  return out;
}

template <typename T>
std::vector<T> select(const std::vector<T>& items, const std::vector<Part>& parts, Part which) {
  std::vector<T> out;
  for (std::size_t i = 0; i < items.size(); ++i)
    if (parts[i] == which) out.push_back(items[i]);
  return out;
}

}  // namespace aacpred::corpus

#endif  // AACPRED_CORPUS_SPLIT_HPP

#ifndef AACPRED_MODEL_MASKING_HPP
#define AACPRED_MODEL_MASKING_HPP

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "aacpred/error.hpp"
#include "aacpred/model/adapted_model.hpp"
#include "aacpred/model/training_config.hpp"
#include "aacpred/nn/transformer.hpp"
#include "aacpred/rng.hpp"
#include "aacpred/wordpiece.hpp"

namespace aacpred::model {

inline constexpr std::int32_t kIgnoreLabel = -100;

/// [start] content [end] then padding up to `length`.
inline std::vector<std::int32_t> frame_sequence(const TokenTable& table, const std::vector<std::int32_t>& content,
                                                std::size_t length) {
  if (content.size() + 2 > length)
    throw Error(Errc::malformed_input, std::to_string(content.size()) + " tokens do not fit a " +
                                           std::to_string(length) + "-position sequence");
  std::vector<std::int32_t> out;
  out.reserve(length);
  out.push_back(table.start());
  out.insert(out.end(), content.begin(), content.end());
  out.push_back(table.end());
  out.resize(length, table.pad());
  return out;
}

struct MaskedBatch {
  nn::Batch input;
  std::vector<std::int32_t> labels;    // gold index where selected, kIgnoreLabel elsewhere
  std::vector<std::uint8_t> selected;  // per flat position

  std::vector<int> selected_rows() const {
    std::vector<int> r;
    for (std::size_t i = 0; i < selected.size(); ++i)
      if (selected[i]) r.push_back(static_cast<int>(i));
    return r;
  }

  std::vector<std::int32_t> targets() const {
    std::vector<std::int32_t> t;
    for (std::size_t i = 0; i < selected.size(); ++i)
      if (selected[i]) t.push_back(labels[i]);
    return t;
  }
};

// Picks floor(fraction x maskable) positions per sequence (at least one),
// uniformly among non-reserved tokens, then corrupts each: [MASK], a uniform
// non-reserved token, or left as is, by `corrupt_split`.
class MaskCollator {
 public:
  MaskCollator(const TokenTable& table, const TrainingConfig& cfg)
      : reserved_(reserved_flags(table)),
        pad_(table.pad()),
        mask_(table.mask()),
        fraction_(cfg.mask_fraction),
        split_(cfg.corrupt_split) {
    for (std::size_t i = 0; i < reserved_.size(); ++i)
      if (!reserved_[i]) pool_.push_back(static_cast<std::int32_t>(i));
  }

  MaskedBatch operator()(const std::vector<std::vector<std::int32_t>>& sequences, Rng& rng) const {
    if (sequences.empty()) throw Error(Errc::malformed_input, "empty batch");
    const std::size_t len = sequences.front().size();
    MaskedBatch mb;
    mb.input.batch = static_cast<int>(sequences.size());
    mb.input.length = static_cast<int>(len);
    mb.input.ids.reserve(sequences.size() * len);
    mb.input.attend.reserve(sequences.size() * len);
    mb.labels.assign(sequences.size() * len, kIgnoreLabel);
    mb.selected.assign(sequences.size() * len, 0);
    std::vector<std::size_t> maskable;
    for (std::size_t s = 0; s < sequences.size(); ++s) {
      const auto& seq = sequences[s];
      if (seq.size() != len) throw Error(Errc::malformed_input, "sequences in a batch must share one length");
      const std::size_t base = s * len;
      maskable.clear();
      for (std::size_t i = 0; i < len; ++i) {
        const auto t = seq[i];
        if (t < 0 || static_cast<std::size_t>(t) >= reserved_.size())
          throw Error(Errc::unknown_token, "token index " + std::to_string(t) + " outside the table");
        mb.input.ids.push_back(t);
        mb.input.attend.push_back(t == pad_ ? 0 : 1);
        if (!reserved_[static_cast<std::size_t>(t)]) maskable.push_back(i);
      }
      if (maskable.empty())
        throw Error(Errc::no_maskable_positions, "sequence " + std::to_string(s) + " has no maskable token");
      auto k = static_cast<std::size_t>(std::floor(fraction_ * static_cast<double>(maskable.size())));
      if (k < 1) k = 1;
      for (auto pick : sample_indices(rng, maskable.size(), k)) {
        const std::size_t flat = base + maskable[pick];
        mb.selected[flat] = 1;
        mb.labels[flat] = mb.input.ids[flat];
        const double u = uniform01(rng);
        if (u < split_[0]) {
          mb.input.ids[flat] = mask_;
        } else if (u < split_[0] + split_[1]) {
          mb.input.ids[flat] = pool_[uniform_index(rng, pool_.size())];
        }
      }
    }
    return mb;
  }

 private:
  std::vector<char> reserved_;
  std::vector<std::int32_t> pool_;
  std::int32_t pad_;
  std::int32_t mask_;
  double fraction_;
  std::array<double, 3> split_;
};

inline MaskedBatch mask_collate(const std::vector<std::vector<std::int32_t>>& sequences, const TokenTable& table,
                                const TrainingConfig& cfg, Rng& rng) {
  return MaskCollator(table, cfg)(sequences, rng);
}

}  // namespace aacpred::model

#endif  // AACPRED_MODEL_MASKING_HPP

#ifndef AACPRED_TESTS_STUB_ENCODER_HPP
#define AACPRED_TESTS_STUB_ENCODER_HPP

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "aacpred/encoder.hpp"
#include "aacpred/hash.hpp"
#include "aacpred/rng.hpp"
#include "aacpred/text.hpp"

namespace aacpred::testing {

// Word-level encoder with hand-set tables. Each word maps to one subtoken
// unless `splits` breaks it into pieces; unknown pieces map to id 0.
class StubEncoder : public EncoderHandle {
 public:
  explicit StubEncoder(std::size_t h, std::size_t layer_count = 5) : h_(h), layer_count_(layer_count) {
    add_piece("[UNK]", Vec::Zero(static_cast<Eigen::Index>(h)));
  }

  std::int32_t add_piece(const std::string& piece, Vec embedding) {
    auto id = static_cast<std::int32_t>(table_.size());
    ids_[piece] = id;
    table_.push_back(std::move(embedding));
    return id;
  }

  void split(const std::string& word, std::vector<std::string> pieces) { splits_[word] = std::move(pieces); }

  /// Overrides the states returned for an exact input text.
  void script(const std::string& text, LayerStates states) { scripted_[text] = std::move(states); }

  std::function<LayerStates(std::string_view)> fallback_states;
  std::string name = "stub";

  std::string id() const override { return name; }
  std::size_t hidden_size() const override { return h_; }
  std::int32_t unknown_subtoken() const override { return 0; }

  std::vector<Subtoken> subtokenize(std::string_view s) const override {
    std::vector<Subtoken> out;
    for (const auto& w : text::word_spans(s)) {
      const auto word = text::to_lower(w.word);
      auto it = splits_.find(word);
      if (it == splits_.end()) {
        out.push_back({lookup(word), w.begin, w.end});
        continue;
      }
      std::size_t pos = w.begin;
      for (const auto& p : it->second) {
        const std::size_t len = text::starts_with(p, "##") ? p.size() - 2 : p.size();
        out.push_back({lookup(p), pos, std::min(pos + len, w.end)});
        pos += len;
      }
    }
    return out;
  }

  Vec input_embedding(std::int32_t subtoken) const override { return table_.at(static_cast<std::size_t>(subtoken)); }

  LayerStates encode(std::string_view s) const override {
    if (auto it = scripted_.find(std::string(s)); it != scripted_.end()) return it->second;
    if (fallback_states) return fallback_states(s);
    return hashed_states(s);
  }

  // Deterministic pseudo-random states seeded by the text.
  LayerStates hashed_states(std::string_view s) const {
    const auto positions = subtokenize(s).size() + 2;
    Rng rng(std::stoull(sha256_hex(s).substr(0, 15), nullptr, 16));
    LayerStates st;
    for (std::size_t l = 0; l < layer_count_; ++l) {
      RowMat m(static_cast<Eigen::Index>(positions), static_cast<Eigen::Index>(h_));
      for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<float>(standard_normal(rng));
      st.layers.push_back(std::move(m));
    }
    return st;
  }

 private:
  std::int32_t lookup(const std::string& piece) const {
    auto it = ids_.find(piece);
    return it == ids_.end() ? 0 : it->second;
  }

  std::size_t h_;
  std::size_t layer_count_;
  std::map<std::string, std::int32_t> ids_;
  std::vector<Vec> table_;
  std::map<std::string, std::vector<std::string>> splits_;
  std::map<std::string, LayerStates> scripted_;
};

/// States whose every layer holds `value` at every position.
inline LayerStates constant_states(std::size_t layers, std::size_t positions, std::size_t h, float value) {
  LayerStates st;
  for (std::size_t l = 0; l < layers; ++l)
    st.layers.push_back(RowMat::Constant(static_cast<Eigen::Index>(positions), static_cast<Eigen::Index>(h), value));
  return st;
}

inline Vec vec(std::initializer_list<float> v) {
  Vec out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (float x : v) out(i++) = x;
  return out;
}

// Image encoder mapping the SHA-256 of the bytes to a vector.
class HashImageEncoder : public ImageEncoderHandle {
 public:
  explicit HashImageEncoder(std::size_t d) : d_(d) {}
  std::size_t dimension() const override { return d_; }
  Vec encode_image(std::string_view bytes) const override {
    Rng rng(std::stoull(sha256_hex(bytes).substr(0, 15), nullptr, 16));
    Vec v(static_cast<Eigen::Index>(d_));
    for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = static_cast<float>(standard_normal(rng));
    return v;
  }

 private:
  std::size_t d_;
};

}  // namespace aacpred::testing

#endif  // AACPRED_TESTS_STUB_ENCODER_HPP

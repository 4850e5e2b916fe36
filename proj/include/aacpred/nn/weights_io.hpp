#ifndef AACPRED_NN_WEIGHTS_IO_HPP
#define AACPRED_NN_WEIGHTS_IO_HPP

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <string>

#include "aacpred/error.hpp"
#include "aacpred/nn/transformer.hpp"

namespace aacpred::nn {

// Weight blob layout (little-endian):
//   "AACW" u32 version u32 count
//   count x { u32 name_len, name, u32 rows, u32 cols, f32[rows*cols] row-major }
inline constexpr std::uint32_t kWeightsVersion = 1;

namespace detail {

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw Error(Errc::checkpoint_io, "truncated weight file");
  return v;
}

}  // namespace detail

inline void save_weights(const Transformer& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::checkpoint_io, "cannot write " + path.string());
  out.write("AACW", 4);
  auto params = model.params();
  detail::put<std::uint32_t>(out, kWeightsVersion);
  detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(params.size()));
  for (const auto* p : params) {
    detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(p->name.size()));
    out.write(p->name.data(), static_cast<std::streamsize>(p->name.size()));
    detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(p->value.rows()));
    detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(p->value.cols()));
    out.write(reinterpret_cast<const char*>(p->value.data()),
              static_cast<std::streamsize>(sizeof(float) * static_cast<std::size_t>(p->value.size())));
  }
  if (!out) throw Error(Errc::checkpoint_io, "write failed for " + path.string());
}

/// Fills `model` (already shaped) from a blob; every tensor must be present with matching shape.
inline void load_weights(Transformer& model, const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::checkpoint_io, "cannot open " + path.string());
  char magic[4] = {};
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "AACW", 4) != 0) throw Error(Errc::checkpoint_io, "bad weight file magic");
  const auto version = detail::get<std::uint32_t>(in);
  if (version != kWeightsVersion)
    throw Error(Errc::version_mismatch, "weight file version " + std::to_string(version));
  const auto count = detail::get<std::uint32_t>(in);
  std::map<std::string, Param*> by_name;
  for (auto* p : model.params()) by_name[p->name] = p;
  std::size_t loaded = 0;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto len = detail::get<std::uint32_t>(in);
    if (len > 4096) throw Error(Errc::checkpoint_io, "corrupt tensor name length");
    std::string name(len, '\0');
    in.read(name.data(), len);
    const auto rows = detail::get<std::uint32_t>(in);
    const auto cols = detail::get<std::uint32_t>(in);
    auto it = by_name.find(name);
    if (it == by_name.end()) throw Error(Errc::version_mismatch, "unexpected tensor " + name);
    Param& p = *it->second;
    if (p.value.rows() != rows || p.value.cols() != cols)
      throw Error(Errc::version_mismatch, "shape mismatch for " + name);
    in.read(reinterpret_cast<char*>(p.value.data()),
            static_cast<std::streamsize>(sizeof(float) * static_cast<std::size_t>(rows) * cols));
    if (!in) throw Error(Errc::checkpoint_io, "truncated tensor " + name);
    ++loaded;
  }
  if (loaded != by_name.size()) throw Error(Errc::checkpoint_io, "weight file is missing tensors");
  in.peek();
  if (!in.eof()) throw Error(Errc::checkpoint_io, "trailing bytes after weights");
}

// Writes a directory by filling a sibling temp directory and renaming it into
// place, so readers never observe a half-written checkpoint.
inline void write_directory_atomically(const std::filesystem::path& dir,
                                       const std::function<void(const std::filesystem::path&)>& fill) {
  namespace fs = std::filesystem;
  const fs::path target = fs::absolute(dir);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  std::random_device rd;
  const fs::path tmp = target.string() + ".tmp-" + std::to_string(rd());
  const fs::path old = target.string() + ".old-" + std::to_string(rd());
  try {
    fs::create_directories(tmp);
    fill(tmp);
    if (fs::exists(target)) fs::rename(target, old);
    fs::rename(tmp, target);
    if (fs::exists(old)) fs::remove_all(old);
  } catch (const fs::filesystem_error& ex) {
    std::error_code ec;
    fs::remove_all(tmp, ec);
    throw Error(Errc::checkpoint_io, ex.what());
  } catch (...) {
    std::error_code ec;
    fs::remove_all(tmp, ec);
    throw;
  }
}

}  // namespace aacpred::nn

#endif  // AACPRED_NN_WEIGHTS_IO_HPP

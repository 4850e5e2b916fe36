#ifndef AACPRED_HASH_HPP
#define AACPRED_HASH_HPP

#include <openssl/evp.h>

#include <array>
#include <string>
#include <string_view>

#include "aacpred/error.hpp"

namespace aacpred {

inline std::string sha256_hex(std::string_view data) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest.data(), &len, EVP_sha256(), nullptr) != 1)
    throw std::runtime_error("sha256 digest failed");
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(len * 2);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(kHex[digest[i] >> 4]);
    out.push_back(kHex[digest[i] & 0xF]);
  }
  return out;
}

}  // namespace aacpred

#endif  // AACPRED_HASH_HPP

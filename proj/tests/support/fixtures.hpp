#ifndef AACPRED_TESTS_FIXTURES_HPP
#define AACPRED_TESTS_FIXTURES_HPP

#include <filesystem>
#include <string>

#include "aacpred/vocabulary.hpp"

namespace aacpred::testing {

inline std::filesystem::path data_path(const std::string& name) {
  return std::filesystem::path(AACPRED_TEST_DATA) / name;
}

inline Vocabulary fixture_vocab() {
  ImageSource images{ImageSource::Kind::local_dir, data_path("images").string()};
  return load_vocabulary(data_path("vocab_fixture.json"), VocabFormat::arasaac_json, images);
}

/// Fresh empty directory under the build tree's temp area.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("aacpred_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace aacpred::testing

#endif  // AACPRED_TESTS_FIXTURES_HPP

#ifndef AACPRED_ERROR_HPP
#define AACPRED_ERROR_HPP

#include <stdexcept>
#include <string>
#include <string_view>

namespace aacpred {

enum class Errc {
  malformed_dump,
  duplicate_id,
  empty_vocabulary,
  malformed_input,
  wrong_group_size,
  wrong_example_count,
  backend_unavailable,
  missing_fixture,
  scorer_failure,
  invalid_k,
  invalid_proportions,
  encoder_failure,
  span_out_of_range,
  unknown_subtoken,
  missing_image,
  dimension_mismatch,
  build_failed,
  missing_row,
  no_maskable_positions,
  divergence_detected,
  checkpoint_io,
  version_mismatch,
  zero_probability,
  unknown_token,
  invalid_config,
};

inline std::string_view errc_name(Errc code) {
  switch (code) {
    case Errc::malformed_dump: return "MalformedDump";
    case Errc::duplicate_id: return "DuplicateId";
    case Errc::empty_vocabulary: return "EmptyVocabulary";
    case Errc::malformed_input: return "MalformedInput";
    case Errc::wrong_group_size: return "WrongGroupSize";
    case Errc::wrong_example_count: return "WrongExampleCount";
    case Errc::backend_unavailable: return "BackendUnavailable";
    case Errc::missing_fixture: return "MissingFixture";
    case Errc::scorer_failure: return "ScorerFailure";
    case Errc::invalid_k: return "InvalidK";
    case Errc::invalid_proportions: return "InvalidProportions";
    case Errc::encoder_failure: return "EncoderFailure";
    case Errc::span_out_of_range: return "SpanOutOfRange";
    case Errc::unknown_subtoken: return "UnknownSubtoken";
    case Errc::missing_image: return "MissingImage";
    case Errc::dimension_mismatch: return "DimensionMismatch";
    case Errc::build_failed: return "BuildFailed";
    case Errc::missing_row: return "MissingRow";
    case Errc::no_maskable_positions: return "NoMaskablePositions";
    case Errc::divergence_detected: return "DivergenceDetected";
    case Errc::checkpoint_io: return "CheckpointIOError";
    case Errc::version_mismatch: return "VersionMismatch";
    case Errc::zero_probability: return "ZeroProbability";
    case Errc::unknown_token: return "UnknownToken";
    case Errc::invalid_config: return "InvalidConfig";
  }
  return "Unknown";
}

/// Exception carrying a machine-checkable error kind.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace aacpred

#endif  // AACPRED_ERROR_HPP

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace wavecube {

enum class Errc {
  unknown_wavelet,
  unknown_arch,
  invalid_argument,
  odd_extent,
  too_small,
  shape_mismatch,
  indivisible_extent,
  channel_mismatch,
  bad_magic,
  truncated_payload,
  extent_mismatch,
  malformed_line,
  duplicate_id,
  dangling_parent,
  cycle,
  label_out_of_range,
  non_finite_gradient,
  consumed_tape,
  io,
};

constexpr std::string_view errc_name(Errc c) noexcept {
  switch (c) {
    case Errc::unknown_wavelet: return "UnknownWavelet";
    case Errc::unknown_arch: return "UnknownArch";
    case Errc::invalid_argument: return "InvalidArgument";
    case Errc::odd_extent: return "OddExtent";
    case Errc::too_small: return "TooSmall";
    case Errc::shape_mismatch: return "ShapeMismatch";
    case Errc::indivisible_extent: return "IndivisibleExtent";
    case Errc::channel_mismatch: return "ChannelMismatch";
    case Errc::bad_magic: return "BadMagic";
    case Errc::truncated_payload: return "TruncatedPayload";
    case Errc::extent_mismatch: return "ExtentMismatch";
    case Errc::malformed_line: return "MalformedLine";
    case Errc::duplicate_id: return "DuplicateId";
    case Errc::dangling_parent: return "DanglingParent";
    case Errc::cycle: return "Cycle";
    case Errc::label_out_of_range: return "LabelOutOfRange";
    case Errc::non_finite_gradient: return "NonFiniteGradient";
    case Errc::consumed_tape: return "ConsumedTape";
    case Errc::io: return "IoError";
  }
  return "Error";
}

// Single exception type for the library; the code drives CLI exit status.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code), message_(what) {}

  Errc code() const noexcept { return code_; }
  // what() without the leading code name.
  const std::string& message() const noexcept { return message_; }

 private:
  Errc code_;
  std::string message_;
};

}  // namespace wavecube

#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace milvad {

/// Error identities surfaced by the library. Tests match on these rather
/// than on message text.
enum class Errc {
  BadMagic,
  TruncatedPayload,
  NonFiniteValue,
  IoFailure,
  ClipCountMismatch,
  StreamMismatch,
  EmptyTensor,
  DimensionMismatch,
  TraceMismatch,
  LengthMismatch,
  EmptyBag,
  EmptyBatch,
  ShapeMismatch,
  NonFiniteGradient,
  InsufficientBags,
  NonFiniteLoss,
  DegenerateLabels,
  ManifestError,
  ConfigError,
};

class Error : public std::runtime_error {
 public:
  Error(Errc code, std::string what)
      : std::runtime_error(std::move(what)), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

[[noreturn]] inline void raise(Errc code, std::string what) {
  throw Error(code, std::move(what));
}

}  // namespace milvad

#include "reef/canonical.hpp"

#include "reef/error.hpp"

#include <openssl/evp.h>

#include <algorithm>

namespace reef {

std::string_view to_string(ErrorKind kind) noexcept {
  switch (kind) {
  case ErrorKind::MissingMeta: return "MissingMeta";
  case ErrorKind::SchemaViolation: return "SchemaViolation";
  case ErrorKind::PathEscape: return "PathEscape";
  case ErrorKind::DuplicatePath: return "DuplicatePath";
  case ErrorKind::UnknownComponent: return "UnknownComponent";
  case ErrorKind::NoMatchingVersion: return "NoMatchingVersion";
  case ErrorKind::VersionConflict: return "VersionConflict";
  case ErrorKind::CycleDetected: return "CycleDetected";
  case ErrorKind::DuplicateVersion: return "DuplicateVersion";
  case ErrorKind::DigestMismatch: return "DigestMismatch";
  case ErrorKind::StorageFailure: return "StorageFailure";
  case ErrorKind::TransportFailure: return "TransportFailure";
  case ErrorKind::InvalidRule: return "InvalidRule";
  case ErrorKind::NoSatisfyingEnvironment: return "NoSatisfyingEnvironment";
  case ErrorKind::PreconditionViolation: return "PreconditionViolation";
  case ErrorKind::NoVariantForPlatform: return "NoVariantForPlatform";
  case ErrorKind::FetchDigestMismatch: return "FetchDigestMismatch";
  case ErrorKind::StepFailed: return "StepFailed";
  case ErrorKind::MissingEnvDependency: return "MissingEnvDependency";
  case ErrorKind::SandboxEscape: return "SandboxEscape";
  case ErrorKind::UnknownPlaceholder: return "UnknownPlaceholder";
  case ErrorKind::StageFailed: return "StageFailed";
  case ErrorKind::RenderError: return "RenderError";
  case ErrorKind::NonZeroExit: return "NonZeroExit";
  case ErrorKind::MalformedOutput: return "MalformedOutput";
  case ErrorKind::BenchmarkFailed: return "BenchmarkFailed";
  case ErrorKind::EmptySamples: return "EmptySamples";
  case ErrorKind::DuplicateRecord: return "DuplicateRecord";
  case ErrorKind::MissingMetric: return "MissingMetric";
  case ErrorKind::EmptyStore: return "EmptyStore";
  case ErrorKind::InvalidArgument: return "InvalidArgument";
  case ErrorKind::IoError: return "IoError";
  }
  return "Unknown";
}

std::string canonical_json(nlohmann::json const &value) {
  // nlohmann::json keeps objects in a std::map, so keys already come out in
  // byte order; dump() without indent emits no insignificant whitespace.
  return value.dump(-1, ' ', false, nlohmann::json::error_handler_t::strict);
}

Sha256::Sha256() : ctx_(EVP_MD_CTX_new()) {
  if (ctx_ == nullptr || EVP_DigestInit_ex(static_cast<EVP_MD_CTX *>(ctx_), EVP_sha256(), nullptr) != 1) {
    throw Error(ErrorKind::IoError, "cannot initialise SHA-256 context");
  }
}

Sha256::~Sha256() { EVP_MD_CTX_free(static_cast<EVP_MD_CTX *>(ctx_)); }

void Sha256::update(std::string_view bytes) {
  EVP_DigestUpdate(static_cast<EVP_MD_CTX *>(ctx_), bytes.data(), bytes.size());
}

std::string Sha256::finish_hex() {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(static_cast<EVP_MD_CTX *>(ctx_), md, &len);
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out(len * 2, '0');
  for (unsigned int i = 0; i < len; ++i) {
    out[2 * i] = kHex[md[i] >> 4];
    out[2 * i + 1] = kHex[md[i] & 0x0f];
  }
  return out;
}

std::string sha256_hex(std::string_view bytes) {
  Sha256 h;
  h.update(bytes);
  return h.finish_hex();
}

std::string sha256_hex(std::span<std::uint8_t const> bytes) {
  return sha256_hex(std::string_view(reinterpret_cast<char const *>(bytes.data()), bytes.size()));
}

bool is_hex_digest(std::string_view s) noexcept {
  return s.size() == 64 && std::all_of(s.begin(), s.end(), [](char c) {
           return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'f');
         });
}

} // namespace reef

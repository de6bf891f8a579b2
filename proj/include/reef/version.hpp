#pragma once

#include <compare>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace reef {

/// `major.minor.patch`, totally ordered lexicographically.
struct Version {
  std::uint64_t major = 0;
  std::uint64_t minor = 0;
  std::uint64_t patch = 0;

  auto operator<=>(Version const &) const = default;

  std::string str() const;

  /// Strict `M.m.p`. Throws Error(InvalidArgument) otherwise.
  static Version parse(std::string_view text);
  static std::optional<Version> try_parse(std::string_view text);

  /// Accepts `M`, `M.m` or `M.m.p` and zero-extends the missing parts.
  static std::optional<Version> parse_lenient(std::string_view text);
};

/// A version requirement: `*`, exact `M.m.p`, wildcard `M.*` / `M.m.*`, or a
/// comma-separated conjunction of `>=V` and `<V` terms (V may be partial).
class VersionReq {
public:
  VersionReq() = default; // matches everything

  static VersionReq parse(std::string_view text);
  static VersionReq any() { return VersionReq(); }
  static VersionReq exact(Version v);

  bool satisfies(Version const &v) const noexcept;
  std::string const &str() const noexcept { return text_; }

  bool operator==(VersionReq const &other) const noexcept { return text_ == other.text_; }

private:
  struct Bound {
    Version version;
    bool inclusive_lower; // true: `>=`, false: `<`
  };

  std::string text_ = "*";
  std::vector<Bound> bounds_;
};

} // namespace reef

#include "reef/version.hpp"

#include "reef/error.hpp"

#include <charconv>

namespace reef {
namespace {

std::optional<std::uint64_t> parse_number(std::string_view s) {
  if (s.empty() || s.size() > 18) {
    return std::nullopt;
  }
  if (s.size() > 1 && s.front() == '0') {
    return std::nullopt;
  }
  std::uint64_t value = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    return std::nullopt;
  }
  return value;
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  while (true) {
    auto pos = s.find(sep, start);
    parts.push_back(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) {
      break;
    }
    start = pos + 1;
  }
  return parts;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) {
    s.remove_prefix(1);
  }
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) {
    s.remove_suffix(1);
  }
  return s;
}

Version bump(Version v, std::size_t position) {
  if (position == 0) {
    return Version{v.major + 1, 0, 0};
  }
  return Version{v.major, v.minor + 1, 0};
}

[[noreturn]] void bad_req(std::string_view text, std::string_view why) {
  throw Error(ErrorKind::InvalidArgument,
              "invalid version requirement '" + std::string(text) + "': " + std::string(why),
              {{"req", std::string(text)}});
}

} // namespace

std::string Version::str() const {
  return std::to_string(major) + "." + std::to_string(minor) + "." + std::to_string(patch);
}

std::optional<Version> Version::try_parse(std::string_view text) {
  auto parts = split(text, '.');
  if (parts.size() != 3) {
    return std::nullopt;
  }
  auto a = parse_number(parts[0]);
  auto b = parse_number(parts[1]);
  auto c = parse_number(parts[2]);
  if (!a || !b || !c) {
    return std::nullopt;
  }
  return Version{*a, *b, *c};
}

Version Version::parse(std::string_view text) {
  if (auto v = try_parse(text)) {
    return *v;
  }
  throw Error(ErrorKind::InvalidArgument, "invalid version '" + std::string(text) + "' (expected M.m.p)",
              {{"version", std::string(text)}});
}

std::optional<Version> Version::parse_lenient(std::string_view text) {
  auto parts = split(text, '.');
  if (parts.empty() || parts.size() > 3) {
    return std::nullopt;
  }
  std::uint64_t fields[3] = {0, 0, 0};
  for (std::size_t i = 0; i < parts.size(); ++i) {
    auto n = parse_number(parts[i]);
    if (!n) {
      return std::nullopt;
    }
    fields[i] = *n;
  }
  return Version{fields[0], fields[1], fields[2]};
}

VersionReq VersionReq::exact(Version v) { return parse(v.str()); }

VersionReq VersionReq::parse(std::string_view raw) {
  std::string_view text = trim(raw);
  VersionReq req;
  req.text_ = std::string(text);
  if (text.empty()) {
    bad_req(raw, "empty");
  }
  if (text == "*") {
    return req;
  }

  if (text.front() == '>' || text.front() == '<') {
    for (auto term : split(text, ',')) {
      term = trim(term);
      bool lower;
      if (term.starts_with(">=")) {
        lower = true;
        term.remove_prefix(2);
      } else if (term.starts_with("<") && !term.starts_with("<=")) {
        lower = false;
        term.remove_prefix(1);
      } else {
        bad_req(raw, "range terms must be '>=V' or '<V'");
      }
      auto v = Version::parse_lenient(trim(term));
      if (!v) {
        bad_req(raw, "bad version in range term");
      }
      req.bounds_.push_back({*v, lower});
    }
    return req;
  }

  auto parts = split(text, '.');
  if (parts.back() == "*") {
    // `M.*` or `M.m.*`
    if (parts.size() != 2 && parts.size() != 3) {
      bad_req(raw, "wildcard must be M.* or M.m.*");
    }
    Version base;
    auto major = parse_number(parts[0]);
    if (!major) {
      bad_req(raw, "bad major");
    }
    base.major = *major;
    if (parts.size() == 3) {
      auto minor = parse_number(parts[1]);
      if (!minor) {
        bad_req(raw, "bad minor");
      }
      base.minor = *minor;
    }
    req.bounds_.push_back({base, true});
    req.bounds_.push_back({bump(base, parts.size() - 2), false});
    return req;
  }

  auto v = Version::try_parse(text);
  if (!v) {
    bad_req(raw, "expected *, M.m.p, M.*, M.m.* or >=/< terms");
  }
  req.bounds_.push_back({*v, true});
  req.bounds_.push_back({Version{v->major, v->minor, v->patch + 1}, false});
  return req;
}

bool VersionReq::satisfies(Version const &v) const noexcept {
  for (auto const &b : bounds_) {
    if (b.inclusive_lower ? !(v >= b.version) : !(v < b.version)) {
      return false;
    }
  }
  return true;
}

} // namespace reef

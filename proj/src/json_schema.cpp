#include "reef/json_schema.hpp"

#include "reef/error.hpp"

#include <cmath>
#include <regex>

namespace reef {
namespace {

using nlohmann::json;

bool type_matches(std::string const &type, json const &doc) {
  if (type == "object") return doc.is_object();
  if (type == "array") return doc.is_array();
  if (type == "string") return doc.is_string();
  if (type == "boolean") return doc.is_boolean();
  if (type == "null") return doc.is_null();
  if (type == "number") return doc.is_number();
  if (type == "integer") {
    if (doc.is_number_integer()) return true;
    if (doc.is_number_float()) {
      double d = doc.get<double>();
      return std::isfinite(d) && std::floor(d) == d;
    }
    return false;
  }
  return false;
}

std::string member_path(std::string const &base, std::string const &key) {
  bool plain = !key.empty();
  for (char c : key) {
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-')) {
      plain = false;
      break;
    }
  }
  return plain ? base + "." + key : base + "[" + json(key).dump() + "]";
}

} // namespace

SchemaValidator::SchemaValidator(json schema) : root_(std::move(schema)) {}

std::vector<Violation> SchemaValidator::validate(json const &doc) const {
  std::vector<Violation> out;
  check(root_, doc, "$", out);
  return out;
}

json const &SchemaValidator::deref(json const &schema) const {
  json const *s = &schema;
  for (int hops = 0; s->is_object() && s->contains("$ref"); ++hops) {
    if (hops > 32) {
      throw Error(ErrorKind::InvalidArgument, "schema $ref chain too deep");
    }
    auto ref = (*s)["$ref"].get<std::string>();
    if (!ref.starts_with("#/")) {
      throw Error(ErrorKind::InvalidArgument, "only local $ref supported: " + ref);
    }
    s = &root_.at(json::json_pointer(ref.substr(1)));
  }
  return *s;
}

void SchemaValidator::check(json const &raw_schema, json const &doc, std::string const &path,
                            std::vector<Violation> &out) const {
  json const &schema = deref(raw_schema);
  if (schema.is_boolean()) {
    if (!schema.get<bool>()) {
      out.push_back({path, "not allowed"});
    }
    return;
  }

  if (auto it = schema.find("type"); it != schema.end()) {
    bool ok = false;
    if (it->is_string()) {
      ok = type_matches(it->get<std::string>(), doc);
    } else {
      for (auto const &t : *it) {
        ok = ok || type_matches(t.get<std::string>(), doc);
      }
    }
    if (!ok) {
      out.push_back({path, "expected type " + it->dump()});
      return;
    }
  }

  if (auto it = schema.find("const"); it != schema.end() && doc != *it) {
    out.push_back({path, "expected constant " + it->dump()});
  }
  if (auto it = schema.find("enum"); it != schema.end()) {
    if (std::find(it->begin(), it->end(), doc) == it->end()) {
      out.push_back({path, "expected one of " + it->dump()});
    }
  }

  if (doc.is_string()) {
    auto const &s = doc.get_ref<std::string const &>();
    if (auto it = schema.find("minLength"); it != schema.end() && s.size() < it->get<std::size_t>()) {
      out.push_back({path, "shorter than " + it->dump()});
    }
    if (auto it = schema.find("maxLength"); it != schema.end() && s.size() > it->get<std::size_t>()) {
      out.push_back({path, "longer than " + it->dump()});
    }
    if (auto it = schema.find("pattern"); it != schema.end()) {
      std::regex re(it->get<std::string>(), std::regex::ECMAScript);
      if (!std::regex_search(s, re)) {
        out.push_back({path, "does not match pattern " + it->dump()});
      }
    }
  }

  if (doc.is_number()) {
    double v = doc.get<double>();
    if (auto it = schema.find("minimum"); it != schema.end() && v < it->get<double>()) {
      out.push_back({path, "below minimum " + it->dump()});
    }
    if (auto it = schema.find("maximum"); it != schema.end() && v > it->get<double>()) {
      out.push_back({path, "above maximum " + it->dump()});
    }
    if (auto it = schema.find("exclusiveMinimum"); it != schema.end() && v <= it->get<double>()) {
      out.push_back({path, "not above " + it->dump()});
    }
  }

  if (doc.is_array()) {
    if (auto it = schema.find("minItems"); it != schema.end() && doc.size() < it->get<std::size_t>()) {
      out.push_back({path, "fewer than " + it->dump() + " items"});
    }
    if (auto it = schema.find("maxItems"); it != schema.end() && doc.size() > it->get<std::size_t>()) {
      out.push_back({path, "more than " + it->dump() + " items"});
    }
    if (auto it = schema.find("items"); it != schema.end()) {
      for (std::size_t i = 0; i < doc.size(); ++i) {
        check(*it, doc[i], path + "[" + std::to_string(i) + "]", out);
      }
    }
  }

  if (doc.is_object()) {
    if (auto it = schema.find("required"); it != schema.end()) {
      for (auto const &key : *it) {
        auto const &k = key.get_ref<std::string const &>();
        if (!doc.contains(k)) {
          out.push_back({member_path(path, k), "required property missing"});
        }
      }
    }
    json const *props = nullptr;
    if (auto it = schema.find("properties"); it != schema.end()) {
      props = &*it;
    }
    auto additional = schema.find("additionalProperties");
    for (auto const &[key, value] : doc.items()) {
      if (props != nullptr && props->contains(key)) {
        check((*props)[key], value, member_path(path, key), out);
      } else if (additional != schema.end()) {
        if (additional->is_boolean()) {
          if (!additional->get<bool>()) {
            out.push_back({member_path(path, key), "unknown property"});
          }
        } else {
          check(*additional, value, member_path(path, key), out);
        }
      }
    }
  }

  // "`.b` required property missing" rather than repeating the full path
  auto relative = [&](Violation const &v) {
    auto rest = v.path.substr(std::min(path.size(), v.path.size()));
    return rest.empty() ? std::string() : "`" + rest + "` ";
  };

  auto run_branches = [&](json const &branches) {
    std::size_t matches = 0;
    std::vector<Violation> closest;
    bool have_closest = false;
    for (auto const &branch : branches) {
      std::vector<Violation> sub;
      check(branch, doc, path, sub);
      if (sub.empty()) {
        ++matches;
      } else if (!have_closest || sub.size() < closest.size()) {
        closest = std::move(sub);
        have_closest = true;
      }
    }
    return std::make_pair(matches, closest);
  };

  if (auto it = schema.find("oneOf"); it != schema.end()) {
    auto [matches, closest] = run_branches(*it);
    if (matches != 1) {
      std::string msg = matches == 0 ? "matches none of the allowed forms" : "matches more than one allowed form";
      if (matches == 0 && !closest.empty()) {
        msg += " (closest: " + relative(closest.front()) + closest.front().message + ")";
      }
      out.push_back({path, msg});
    }
  }
  if (auto it = schema.find("anyOf"); it != schema.end()) {
    auto [matches, closest] = run_branches(*it);
    if (matches == 0) {
      std::string msg = "matches none of the allowed forms";
      if (!closest.empty()) {
        msg += " (closest: " + relative(closest.front()) + closest.front().message + ")";
      }
      out.push_back({path, msg});
    }
  }
}

} // namespace reef

#pragma once

#include <nlohmann/json.hpp>

#include <string>
#include <vector>

namespace reef {

/// One failed constraint, located by a JSONPath-style pointer (`$.a[0].b`).
struct Violation {
  std::string path;
  std::string message;

  bool operator==(Violation const &) const = default;
};

/// Validates documents against the JSON Schema subset used by the kind
/// schemas: type, properties, required, additionalProperties, items, enum,
/// const, pattern, min/maxItems, min/maxLength, minimum, maximum,
/// exclusiveMinimum, oneOf, anyOf and local `$ref` into `$defs`.
class SchemaValidator {
public:
  explicit SchemaValidator(nlohmann::json schema);

  std::vector<Violation> validate(nlohmann::json const &doc) const;

private:
  void check(nlohmann::json const &schema, nlohmann::json const &doc, std::string const &path,
             std::vector<Violation> &out) const;
  nlohmann::json const &deref(nlohmann::json const &schema) const;

  nlohmann::json root_;
};

} // namespace reef

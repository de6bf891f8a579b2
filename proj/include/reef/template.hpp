#pragma once

#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace reef {

/// Placeholder context. Keys are the text between `${` and `}`, e.g.
/// `prefix`, `env:CC`, `dep:mock/tf:root`, `input:items`.
using TemplateContext = std::map<std::string, std::string, std::less<>>;

/// Names of all `${...}` placeholders in order of appearance. Throws
/// RenderError on an unterminated placeholder.
std::vector<std::string> placeholders(std::string_view text);

/// Substitutes every placeholder. Throws UnknownPlaceholder(key).
std::string render(std::string_view text, TemplateContext const &context);

struct ExportTemplate {
  std::string name;
  std::string value;
};

std::map<std::string, std::string> render_exports(std::vector<ExportTemplate> const &templates,
                                                  TemplateContext const &context);

/// `prefix` + `key` upper-cased with non-alphanumerics mapped to `_`
/// (`env_var_name("REEF_PARAM_", "count")` is `REEF_PARAM_COUNT`).
std::string env_var_name(std::string_view prefix, std::string_view key);

} // namespace reef

#include "reef/template.hpp"

#include "reef/error.hpp"

#include <cctype>

namespace reef {
namespace {

template <typename OnText, typename OnKey>
void scan(std::string_view text, OnText on_text, OnKey on_key) {
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto open = text.find("${", pos);
    if (open == std::string_view::npos) {
      on_text(text.substr(pos));
      return;
    }
    on_text(text.substr(pos, open - pos));
    auto close = text.find('}', open + 2);
    if (close == std::string_view::npos) {
      throw Error(ErrorKind::RenderError, "unterminated placeholder in '" + std::string(text) + "'",
                  {{"template", std::string(text)}});
    }
    on_key(text.substr(open + 2, close - open - 2));
    pos = close + 1;
  }
}

} // namespace

std::vector<std::string> placeholders(std::string_view text) {
  std::vector<std::string> keys;
  scan(text, [](std::string_view) {}, [&](std::string_view key) { keys.emplace_back(key); });
  return keys;
}

std::string render(std::string_view text, TemplateContext const &context) {
  std::string out;
  out.reserve(text.size());
  scan(
      text, [&](std::string_view chunk) { out.append(chunk); },
      [&](std::string_view key) {
        auto it = context.find(key);
        if (it == context.end()) {
          throw Error(ErrorKind::UnknownPlaceholder, "unknown placeholder ${" + std::string(key) + "}",
                      {{"key", std::string(key)}});
        }
        out.append(it->second);
      });
  return out;
}

std::map<std::string, std::string> render_exports(std::vector<ExportTemplate> const &templates,
                                                  TemplateContext const &context) {
  std::map<std::string, std::string> out;
  for (auto const &t : templates) {
    out[t.name] = render(t.value, context);
  }
  return out;
}

std::string env_var_name(std::string_view prefix, std::string_view key) {
  std::string out(prefix);
  for (char c : key) {
    auto u = static_cast<unsigned char>(c);
    out += std::isalnum(u) ? static_cast<char>(std::toupper(u)) : '_';
  }
  return out;
}

} // namespace reef

#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace clarifykit {

namespace templates {
/// Files of the repository's templates/ directory, compiled in.
const std::map<std::string, std::string>& embedded();
}  // namespace templates

/// Named prompt/driver templates. Starts from the compiled-in set; a
/// directory overlay replaces files by name.
class TemplateStore {
 public:
  static TemplateStore builtin();
  /// Builtin templates overridden by every regular file found in `dir`.
  static TemplateStore with_overrides(const std::filesystem::path& dir);

  /// Raw file content. Throws Error for unknown names.
  const std::string& raw(std::string_view name) const;
  /// Content with trailing whitespace removed.
  std::string text(std::string_view name) const;

  void set(std::string name, std::string content);
  bool contains(std::string_view name) const;

  /// Digest over the named files (all files when `names` is empty), for
  /// pinning templates in reports.
  std::string digest(const std::vector<std::string>& names = {}) const;

 private:
  std::map<std::string, std::string, std::less<>> files_;
};

/// Substitutes `{name}` placeholders from `values`. Single pass over the
/// template: substituted text is never rescanned, and braces that do not
/// name a known value are copied through.
std::string render(std::string_view tmpl, const std::map<std::string, std::string>& values);

/// Placeholder names ({identifier}) that occur in `tmpl`.
std::vector<std::string> placeholders(std::string_view tmpl);

}  // namespace clarifykit

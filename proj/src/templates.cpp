#include "clarifykit/templates.hpp"

#include <algorithm>
#include <cctype>

#include "clarifykit/io.hpp"

namespace clarifykit {

TemplateStore TemplateStore::builtin() {
  TemplateStore store;
  for (const auto& [name, content] : templates::embedded()) {
    store.files_.emplace(name, content);
  }
  return store;
}

TemplateStore TemplateStore::with_overrides(const std::filesystem::path& dir) {
  TemplateStore store = builtin();
  if (!std::filesystem::is_directory(dir)) {
    throw Error("template directory not found: " + dir.string());
  }
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file()) {
      store.set(entry.path().filename().string(), io::read_file(entry.path()));
    }
  }
  return store;
}

const std::string& TemplateStore::raw(std::string_view name) const {
  const auto it = files_.find(name);
  if (it == files_.end()) {
    throw Error("unknown template '" + std::string(name) + "'");
  }
  return it->second;
}

std::string TemplateStore::text(std::string_view name) const {
  std::string s = raw(name);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.pop_back();
  return s;
}

void TemplateStore::set(std::string name, std::string content) {
  files_[std::move(name)] = std::move(content);
}

bool TemplateStore::contains(std::string_view name) const {
  return files_.find(name) != files_.end();
}

std::string TemplateStore::digest(const std::vector<std::string>& names) const {
  std::string buf;
  auto add = [&](const std::string& name, const std::string& content) {
    buf += name;
    buf += '\0';
    buf += std::to_string(content.size());
    buf += '\0';
    buf += content;
  };
  if (names.empty()) {
    for (const auto& [name, content] : files_) add(name, content);
  } else {
    auto sorted = names;
    std::sort(sorted.begin(), sorted.end());
    for (const auto& name : sorted) add(name, raw(name));
  }
  return io::sha256_hex(buf);
}

namespace {

bool is_ident_char(char c) {
  return std::islower(static_cast<unsigned char>(c)) || c == '_' ||
         std::isdigit(static_cast<unsigned char>(c));
}

// Length of `{identifier}` starting at tmpl[pos], or 0.
std::size_t placeholder_len(std::string_view tmpl, std::size_t pos) {
  if (tmpl[pos] != '{') return 0;
  std::size_t end = pos + 1;
  while (end < tmpl.size() && is_ident_char(tmpl[end])) ++end;
  if (end == pos + 1 || end >= tmpl.size() || tmpl[end] != '}') return 0;
  return end - pos + 1;
}

}  // namespace

std::string render(std::string_view tmpl, const std::map<std::string, std::string>& values) {
  std::string out;
  out.reserve(tmpl.size());
  for (std::size_t i = 0; i < tmpl.size();) {
    if (const auto len = placeholder_len(tmpl, i); len > 0) {
      const auto it = values.find(std::string(tmpl.substr(i + 1, len - 2)));
      if (it != values.end()) {
        out += it->second;
        i += len;
        continue;
      }
    }
    out += tmpl[i++];
  }
  return out;
}

std::vector<std::string> placeholders(std::string_view tmpl) {
  std::vector<std::string> names;
  for (std::size_t i = 0; i < tmpl.size(); ++i) {
    if (const auto len = placeholder_len(tmpl, i); len > 0) {
      names.emplace_back(tmpl.substr(i + 1, len - 2));
      i += len - 1;
    }
  }
  return names;
}

}  // namespace clarifykit

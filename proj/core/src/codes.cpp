#include "ktraj/codes.hpp"

#include <algorithm>
#include <cctype>

namespace ktraj {

std::string normalize_code(std::string_view raw) {
  std::string out;
  out.reserve(raw.size());
  for (char c : raw) {
    if (c == '.' || std::isspace(static_cast<unsigned char>(c))) continue;
    out.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
  }
  return out;
}

CodeSystem parse_code_system(std::string_view raw) {
  std::string s = normalize_code(raw);
  if (s == "09" || s == "9" || s == "ICD9" || s == "ICD9CM" || s == "ICD-9") return CodeSystem::icd9;
  if (s == "10" || s == "ICD10" || s == "ICD10CM" || s == "ICD10PCS" || s == "ICD-10") return CodeSystem::icd10;
  if (s == "CH" || s == "CPT" || s == "HCPCS" || s == "C4") return CodeSystem::cpt;
  return CodeSystem::other;
}

std::string_view to_string(CodeSystem system) {
  switch (system) {
    case CodeSystem::icd9: return "ICD9";
    case CodeSystem::icd10: return "ICD10";
    case CodeSystem::cpt: return "CPT";
    case CodeSystem::other: break;
  }
  return "OTHER";
}

CodeList::CodeList(std::string name, const std::vector<std::string>& patterns) : name_(std::move(name)) {
  for (const auto& raw : patterns) {
    std::string_view text = raw;
    Scope scope = Scope::any;
    if (text.size() > 3 && text[2] == ':') {
      const std::string q = normalize_code(text.substr(0, 2));
      if (q == "DX") {
        scope = Scope::diagnosis;
        text.remove_prefix(3);
      } else if (q == "PX") {
        scope = Scope::procedure;
        text.remove_prefix(3);
      }
    }
    std::string code = normalize_code(text);
    const bool prefix = !code.empty() && code.back() == '*';
    if (prefix) code.pop_back();
    if (code.empty()) continue;
    if (!prefix && !exact_.insert(static_cast<char>(scope) + code).second) continue;
    if (prefix && std::any_of(patterns_.begin(), patterns_.end(), [&](const Pattern& p) {
          return p.prefix && p.scope == scope && p.stem == code;
        })) {
      continue;
    }
    patterns_.push_back({scope, std::move(code), prefix});
  }
}

bool CodeList::matches(std::string_view code, std::optional<CodeContext> context) const {
  if (code.empty() || patterns_.empty()) return false;
  std::string key;
  key.reserve(code.size() + 1);
  key.push_back(static_cast<char>(Scope::any));
  key.append(code);
  if (exact_.count(key) > 0) return true;
  if (context) {
    key[0] = static_cast<char>(*context == CodeContext::diagnosis ? Scope::diagnosis : Scope::procedure);
    if (exact_.count(key) > 0) return true;
  }
  for (const auto& p : patterns_) {
    if (!p.prefix) continue;
    if (p.scope != Scope::any) {
      if (!context) continue;
      const Scope wanted = *context == CodeContext::diagnosis ? Scope::diagnosis : Scope::procedure;
      if (p.scope != wanted) continue;
    }
    if (code.substr(0, p.stem.size()) == p.stem) return true;
  }
  return false;
}

std::vector<std::string> CodeList::patterns() const {
  std::vector<std::string> out;
  out.reserve(patterns_.size());
  for (const auto& p : patterns_) {
    std::string s;
    if (p.scope == Scope::diagnosis) s = "dx:";
    if (p.scope == Scope::procedure) s = "px:";
    s += p.stem;
    if (p.prefix) s += '*';
    out.push_back(std::move(s));
  }
  return out;
}

std::pair<std::string, std::optional<CodeContext>> CodeList::representative() const {
  auto context_of = [](Scope s) -> std::optional<CodeContext> {
    if (s == Scope::diagnosis) return CodeContext::diagnosis;
    if (s == Scope::procedure) return CodeContext::procedure;
    return std::nullopt;
  };
  for (const auto& p : patterns_) {
    if (!p.prefix) return {p.stem, context_of(p.scope)};
  }
  if (!patterns_.empty()) return {patterns_.front().stem, context_of(patterns_.front().scope)};
  return {};
}

}  // namespace ktraj

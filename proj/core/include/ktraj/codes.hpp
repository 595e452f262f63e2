#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <unordered_set>
#include <utility>
#include <vector>

namespace ktraj {

enum class CodeSystem { icd9, icd10, cpt, other };
enum class CodeContext { diagnosis, procedure };

/// Uppercase, trimmed, dots removed: "96.70" and "9670" compare equal.
std::string normalize_code(std::string_view raw);

CodeSystem parse_code_system(std::string_view raw);
std::string_view to_string(CodeSystem system);

/// A named set of codes. Patterns ending in '*' match by prefix, all others
/// match exactly; both are normalized on construction. A "dx:" or "px:"
/// qualifier restricts a pattern to diagnosis or procedure records, which
/// keeps e.g. procedure 96.70 apart from diagnosis 967.0.
class CodeList {
 public:
  CodeList() = default;
  CodeList(std::string name, const std::vector<std::string>& patterns);

  /// Unqualified patterns always apply; qualified ones only for their context.
  bool matches(std::string_view normalized_code, std::optional<CodeContext> context = std::nullopt) const;
  bool empty() const noexcept { return patterns_.empty(); }
  const std::string& name() const noexcept { return name_; }

  /// Patterns in normalized form, qualifiers and '*' preserved.
  std::vector<std::string> patterns() const;

  /// Some code accepted by this list (first exact code, else a prefix stem),
  /// together with the context it requires, if any.
  std::pair<std::string, std::optional<CodeContext>> representative() const;

 private:
  enum class Scope : char { any = 'A', diagnosis = 'D', procedure = 'P' };
  struct Pattern {
    Scope scope;
    std::string stem;
    bool prefix;
  };

  std::string name_;
  // Keyed by scope character + code.
  std::unordered_set<std::string> exact_;
  std::vector<Pattern> patterns_;
};

}  // namespace ktraj

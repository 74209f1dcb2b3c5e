#pragma once

#include <compare>
#include <functional>
#include <set>
#include <string>
#include <string_view>

namespace absrl {

/// Lower-cases ASCII letters, trims, and collapses internal whitespace runs
/// to a single space.
std::string normalize_symbol(std::string_view raw);

/// Name of an object or class. Always stored normalized and never empty.
class Symbol {
 public:
  Symbol() = default;
  explicit Symbol(std::string_view raw);
  Symbol(const char* raw) : Symbol(std::string_view(raw)) {}  // NOLINT: literal convenience

  const std::string& str() const { return name_; }
  bool empty() const { return name_.empty(); }

  friend bool operator==(const Symbol&, const Symbol&) = default;
  friend std::strong_ordering operator<=>(const Symbol& a, const Symbol& b) {
    return a.name_ <=> b.name_;
  }

 private:
  std::string name_;
};

using SymbolSet = std::set<Symbol>;

}  // namespace absrl

template <>
struct std::hash<absrl::Symbol> {
  std::size_t operator()(const absrl::Symbol& s) const noexcept {
    return std::hash<std::string>{}(s.str());
  }
};

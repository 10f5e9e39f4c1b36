#pragma once

#include <algorithm>
#include <cstddef>
#include <initializer_list>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "coind/numkit/error.hpp"
#include "coind/numkit/rng.hpp"

namespace coind {

/// One concrete value code per attribute.
using AttributeTuple = std::vector<int>;

/// The attribute sets C_1 x ... x C_n plus the tuples observed in training.
///
/// Attribute values are arbitrary labels; internally each value is its index in
/// the label list.
class AttributeSpace {
 public:
  AttributeSpace(std::vector<std::vector<std::string>> value_labels, std::vector<AttributeTuple> train_support,
                 std::vector<std::string> attribute_names = {})
      : labels_(std::move(value_labels)), support_(std::move(train_support)), names_(std::move(attribute_names)) {
    if (labels_.empty()) throw ConfigError("AttributeSpace: at least one attribute is required");
    for (std::size_t i = 0; i < labels_.size(); ++i) {
      if (labels_[i].empty()) throw ConfigError("AttributeSpace: attribute " + std::to_string(i) + " has no values");
    }
    if (names_.empty()) {
      for (std::size_t i = 0; i < labels_.size(); ++i) names_.push_back("c" + std::to_string(i + 1));
    }
    if (names_.size() != labels_.size()) throw ConfigError("AttributeSpace: one name per attribute required");
    if (support_.empty()) throw ConfigError("AttributeSpace: training support is empty");
    for (const auto& t : support_) validate(t);
    std::set<AttributeTuple> unique(support_.begin(), support_.end());
    if (unique.size() != support_.size()) throw ConfigError("AttributeSpace: duplicate training tuple");
  }

  /// n binary attributes labelled "-1" / "+1" (codes 0 / 1) with the given support.
  static AttributeSpace binary(std::size_t n, std::vector<AttributeTuple> support) {
    return AttributeSpace(std::vector<std::vector<std::string>>(n, {"-1", "+1"}), std::move(support));
  }

  /// Binary x binary with every tuple observed.
  static AttributeSpace binary_full_2() { return binary(2, {{0, 0}, {0, 1}, {1, 0}, {1, 1}}); }

  /// Binary x binary with (+1,+1) unseen.
  static AttributeSpace binary_orthogonal_2() { return binary(2, {{0, 0}, {0, 1}, {1, 0}}); }

  [[nodiscard]] std::size_t attribute_count() const noexcept { return labels_.size(); }
  [[nodiscard]] std::size_t value_count(std::size_t attribute) const { return labels_.at(attribute).size(); }
  [[nodiscard]] std::vector<std::size_t> value_counts() const {
    std::vector<std::size_t> out;
    for (const auto& l : labels_) out.push_back(l.size());
    return out;
  }
  [[nodiscard]] const std::string& label(std::size_t attribute, int code) const {
    return labels_.at(attribute).at(static_cast<std::size_t>(code));
  }
  [[nodiscard]] const std::vector<std::vector<std::string>>& labels() const noexcept { return labels_; }
  [[nodiscard]] const std::string& name(std::size_t attribute) const { return names_.at(attribute); }
  [[nodiscard]] const std::vector<std::string>& names() const noexcept { return names_; }

  /// Value code for `label`; throws ConfigError if unknown.
  [[nodiscard]] int code_of(std::size_t attribute, const std::string& label) const {
    const auto& l = labels_.at(attribute);
    const auto it = std::find(l.begin(), l.end(), label);
    if (it == l.end()) {
      throw ConfigError("attribute '" + names_[attribute] + "' has no value '" + label + "'");
    }
    return static_cast<int>(it - l.begin());
  }

  [[nodiscard]] const std::vector<AttributeTuple>& train_support() const noexcept { return support_; }

  [[nodiscard]] bool in_support(const AttributeTuple& t) const {
    return std::find(support_.begin(), support_.end(), t) != support_.end();
  }

  /// Every tuple of the full Cartesian product, in lexicographic code order.
  [[nodiscard]] std::vector<AttributeTuple> all_tuples() const {
    std::vector<AttributeTuple> out;
    AttributeTuple cur(labels_.size(), 0);
    for (;;) {
      out.push_back(cur);
      std::size_t i = labels_.size();
      while (i-- > 0) {
        if (static_cast<std::size_t>(++cur[i]) < labels_[i].size()) break;
        cur[i] = 0;
        if (i == 0) return out;
      }
    }
  }

  /// Tuples of the product that are absent from the training support.
  [[nodiscard]] std::vector<AttributeTuple> unseen_tuples() const {
    std::vector<AttributeTuple> out;
    for (auto& t : all_tuples()) {
      if (!in_support(t)) out.push_back(std::move(t));
    }
    return out;
  }

  /// Same attributes, different support.
  [[nodiscard]] AttributeSpace with_support(std::vector<AttributeTuple> support) const {
    return AttributeSpace(labels_, std::move(support), names_);
  }

  [[nodiscard]] AttributeSpace with_full_support() const { return with_support(all_tuples()); }

  void validate(const AttributeTuple& t) const {
    if (t.size() != labels_.size()) {
      throw ConfigError("attribute tuple has arity " + std::to_string(t.size()) + ", expected " +
                        std::to_string(labels_.size()));
    }
    for (std::size_t i = 0; i < t.size(); ++i) {
      if (t[i] < 0 || static_cast<std::size_t>(t[i]) >= labels_[i].size()) {
        throw ConfigError("attribute tuple value " + std::to_string(t[i]) + " out of range for attribute " +
                          names_[i]);
      }
    }
  }

  bool operator==(const AttributeSpace&) const = default;

 private:
  std::vector<std::vector<std::string>> labels_;
  std::vector<AttributeTuple> support_;
  std::vector<std::string> names_;
};

/// Per-attribute slot holding either a value code or the null token.
class ConditionVector {
 public:
  static constexpr int kNull = -1;

  ConditionVector() = default;
  /// All slots null.
  explicit ConditionVector(std::size_t arity) : slots_(arity, kNull) {}
  explicit ConditionVector(AttributeTuple values) : slots_(std::move(values)) {}

  /// Keeps only the listed slots of `tuple`; every other slot is null.
  static ConditionVector keep(const AttributeTuple& tuple, std::initializer_list<std::size_t> slots) {
    ConditionVector c(tuple.size());
    for (std::size_t s : slots) c.slots_.at(s) = tuple.at(s);
    return c;
  }

  [[nodiscard]] std::size_t arity() const noexcept { return slots_.size(); }
  [[nodiscard]] bool is_null(std::size_t i) const { return slots_.at(i) == kNull; }
  [[nodiscard]] int value(std::size_t i) const { return slots_.at(i); }
  [[nodiscard]] bool all_null() const noexcept {
    return std::all_of(slots_.begin(), slots_.end(), [](int v) { return v == kNull; });
  }
  void set(std::size_t i, int v) { slots_.at(i) = v; }
  void clear(std::size_t i) { slots_.at(i) = kNull; }

  /// True iff every observed slot agrees with `tuple`.
  [[nodiscard]] bool consistent_with(const AttributeTuple& tuple) const {
    if (tuple.size() != slots_.size()) return false;
    for (std::size_t i = 0; i < slots_.size(); ++i) {
      if (slots_[i] != kNull && slots_[i] != tuple[i]) return false;
    }
    return true;
  }

  [[nodiscard]] const std::vector<int>& slots() const noexcept { return slots_; }

  bool operator==(const ConditionVector&) const = default;

 private:
  std::vector<int> slots_;
};

struct MissingValue {
  std::size_t attribute;
  int value;
  bool operator==(const MissingValue&) const = default;
};

struct SupportCoverReport {
  /// Every value of every attribute occurs in some training tuple.
  bool covers = false;
  std::vector<MissingValue> missing;
  /// Every training tuple has another training tuple differing in exactly one attribute.
  bool has_one_attribute_neighbors = false;
  std::vector<AttributeTuple> tuples_without_neighbor;
};

inline SupportCoverReport check_support_cover(const AttributeSpace& space) {
  SupportCoverReport report;
  for (std::size_t i = 0; i < space.attribute_count(); ++i) {
    std::set<int> seen;
    for (const auto& t : space.train_support()) seen.insert(t[i]);
    for (int v = 0; v < static_cast<int>(space.value_count(i)); ++v) {
      if (!seen.contains(v)) report.missing.push_back({i, v});
    }
  }
  report.covers = report.missing.empty();

  const auto& support = space.train_support();
  for (const auto& a : support) {
    const bool found = std::any_of(support.begin(), support.end(), [&](const AttributeTuple& b) {
      std::size_t diff = 0;
      for (std::size_t i = 0; i < a.size(); ++i) diff += a[i] != b[i] ? 1 : 0;
      return diff == 1;
    });
    if (!found) report.tuples_without_neighbor.push_back(a);
  }
  report.has_one_attribute_neighbors = report.tuples_without_neighbor.empty();
  return report;
}

}  // namespace coind

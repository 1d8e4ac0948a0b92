#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "sfg/tensor.hpp"

namespace sfg {

/// Ordered collection of named tensors. Insertion order is the iteration
/// order, which makes checkpoints and gradient updates deterministic.
class ParamSet {
 public:
  Tensor& add(std::string name, Tensor value);

  Tensor& at(std::string_view name);
  const Tensor& at(std::string_view name) const;
  bool contains(std::string_view name) const;

  std::size_t size() const { return entries_.size(); }
  std::size_t scalar_count() const;

  const std::string& name(std::size_t i) const { return entries_[i].name; }
  Tensor& tensor(std::size_t i) { return entries_[i].value; }
  const Tensor& tensor(std::size_t i) const { return entries_[i].value; }

  /// Same names and shapes, every value zero.
  ParamSet zeros_like() const;
  /// this += alpha · other; names and shapes must match.
  void axpy(double alpha, const ParamSet& other);
  void fill(double v);

  /// Entries whose name starts with `prefix`, with the prefix stripped.
  ParamSet with_prefix_stripped(std::string_view prefix) const;
  /// Append all of `other`'s entries, each name prefixed.
  void merge(const ParamSet& other, std::string_view prefix);

  friend bool operator==(const ParamSet& a, const ParamSet& b) { return a.entries_ == b.entries_; }

 private:
  struct Entry {
    std::string name;
    Tensor value;
    friend bool operator==(const Entry&, const Entry&) = default;
  };
  std::vector<Entry> entries_;
  std::map<std::string, std::size_t, std::less<>> index_;
};

}  // namespace sfg

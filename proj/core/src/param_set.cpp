#include "sfg/param_set.hpp"

#include "sfg/errors.hpp"

namespace sfg {

Tensor& ParamSet::add(std::string name, Tensor value) {
  if (index_.contains(name)) throw ConfigError("duplicate parameter name: " + name);
  index_.emplace(name, entries_.size());
  entries_.push_back({std::move(name), std::move(value)});
  return entries_.back().value;
}

Tensor& ParamSet::at(std::string_view name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw FormatError("missing parameter: " + std::string(name));
  return entries_[it->second].value;
}

const Tensor& ParamSet::at(std::string_view name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw FormatError("missing parameter: " + std::string(name));
  return entries_[it->second].value;
}

bool ParamSet::contains(std::string_view name) const { return index_.find(name) != index_.end(); }

std::size_t ParamSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.value.size();
  return n;
}

ParamSet ParamSet::zeros_like() const {
  ParamSet out;
  for (const auto& e : entries_) out.add(e.name, Tensor(e.value.shape()));
  return out;
}

void ParamSet::axpy(double alpha, const ParamSet& other) {
  if (other.size() != size()) throw DimensionError("ParamSet::axpy: entry count mismatch");
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].name != other.entries_[i].name) {
      throw DimensionError("ParamSet::axpy: name mismatch at " + entries_[i].name);
    }
    require_same_shape(entries_[i].value, other.entries_[i].value, "ParamSet::axpy");
    sfg::axpy(alpha, other.entries_[i].value, entries_[i].value);
  }
}

void ParamSet::fill(double v) {
  for (auto& e : entries_)
    for (double& x : e.value.values()) x = v;
}

ParamSet ParamSet::with_prefix_stripped(std::string_view prefix) const {
  ParamSet out;
  for (const auto& e : entries_) {
    if (e.name.starts_with(prefix)) out.add(e.name.substr(prefix.size()), e.value);
  }
  return out;
}

void ParamSet::merge(const ParamSet& other, std::string_view prefix) {
  for (const auto& e : other.entries_) add(std::string(prefix) + e.name, e.value);
}

}  // namespace sfg

#pragma once

#include <map>
#include <string>

#include "ssmvae/types.hpp"

namespace ssmvae::nn {

/// Named trainable tensors. Iteration is lexicographic by name, so flattening
/// and every reduction over entries is reproducible.
class ParamStore {
 public:
  using Map = std::map<std::string, Matrix>;

  void insert(const std::string& name, Matrix value);
  /// Adds every entry of `other` under `prefix + name`.
  void merge(const std::string& prefix, const ParamStore& other);

  bool contains(const std::string& name) const { return entries_.count(name) != 0; }
  Matrix& at(const std::string& name);
  const Matrix& at(const std::string& name) const;

  Map::const_iterator begin() const { return entries_.begin(); }
  Map::const_iterator end() const { return entries_.end(); }
  Map::iterator begin() { return entries_.begin(); }
  Map::iterator end() { return entries_.end(); }

  std::size_t size() const { return entries_.size(); }
  Eigen::Index total_elements() const;
  bool all_finite() const;
  ParamStore zeros_like() const;

  bool operator==(const ParamStore& other) const;

 private:
  Map entries_;
};

}  // namespace ssmvae::nn

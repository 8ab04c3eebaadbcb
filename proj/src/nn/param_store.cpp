#include "ssmvae/nn/param_store.hpp"

#include "ssmvae/errors.hpp"

namespace ssmvae::nn {

void ParamStore::insert(const std::string& name, Matrix value) {
  if (!entries_.emplace(name, std::move(value)).second) {
    throw ContractViolation("ParamStore: duplicate entry '" + name + "'");
  }
}

void ParamStore::merge(const std::string& prefix, const ParamStore& other) {
  for (const auto& [name, value] : other) insert(prefix + name, value);
}

Matrix& ParamStore::at(const std::string& name) {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw ContractViolation("ParamStore: no entry '" + name + "'");
  return it->second;
}

const Matrix& ParamStore::at(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw ContractViolation("ParamStore: no entry '" + name + "'");
  return it->second;
}

Eigen::Index ParamStore::total_elements() const {
  Eigen::Index n = 0;
  for (const auto& [_, v] : entries_) n += v.size();
  return n;
}

bool ParamStore::all_finite() const {
  for (const auto& [_, v] : entries_) {
    if (!v.allFinite()) return false;
  }
  return true;
}

ParamStore ParamStore::zeros_like() const {
  ParamStore out;
  for (const auto& [name, v] : entries_) out.insert(name, Matrix::Zero(v.rows(), v.cols()));
  return out;
}

bool ParamStore::operator==(const ParamStore& other) const {
  if (entries_.size() != other.entries_.size()) return false;
  auto a = entries_.begin();
  auto b = other.entries_.begin();
  for (; a != entries_.end(); ++a, ++b) {
    if (a->first != b->first) return false;
    if (a->second.rows() != b->second.rows() || a->second.cols() != b->second.cols()) return false;
    if (a->second != b->second) return false;
  }
  return true;
}

}  // namespace ssmvae::nn

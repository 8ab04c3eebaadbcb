#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ssmvae/nn/param_store.hpp"
#include "ssmvae/nn/tape.hpp"

namespace ssmvae::nn {

enum class Activation { kRelu };

struct MLPSpec {
  int in_dim = 0;
  std::vector<int> hidden_dims = {512, 512};
  int out_dim = 0;
  Activation activation = Activation::kRelu;

  void validate() const;
  int num_layers() const { return static_cast<int>(hidden_dims.size()) + 1; }
};

std::string weight_name(int layer);
std::string bias_name(int layer);

/// Weights i.i.d. N(0, 0.001^2), biases exactly zero. Layer l stores
/// "l<l>.weight" (in x out) and "l<l>.bias" (1 x out).
ParamStore init_params(const MLPSpec& spec, std::uint64_t seed);

/// dense -> relu -> ... -> dense; the output layer has no activation.
Matrix mlp_forward(const ParamStore& params, const MLPSpec& spec, const Matrix& x);

/// Same network recorded on a tape, reading entries `prefix + name`.
Var mlp_forward(Tape& tape, const ParamStore& params, const MLPSpec& spec,
                const std::string& prefix, Var x);

}  // namespace ssmvae::nn

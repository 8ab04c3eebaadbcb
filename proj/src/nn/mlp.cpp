#include "ssmvae/nn/mlp.hpp"

#include "ssmvae/errors.hpp"
#include "ssmvae/random.hpp"

namespace ssmvae::nn {

namespace {
constexpr double kInitStd = 0.001;

int layer_in(const MLPSpec& spec, int layer) {
  return layer == 0 ? spec.in_dim : spec.hidden_dims[static_cast<std::size_t>(layer - 1)];
}
int layer_out(const MLPSpec& spec, int layer) {
  return layer == static_cast<int>(spec.hidden_dims.size())
             ? spec.out_dim
             : spec.hidden_dims[static_cast<std::size_t>(layer)];
}
}  // namespace

void MLPSpec::validate() const {
  if (in_dim < 1 || out_dim < 1) throw ContractViolation("MLPSpec: dims must be positive");
  for (int h : hidden_dims) {
    if (h < 1) throw ContractViolation("MLPSpec: hidden widths must be positive");
  }
}

std::string weight_name(int layer) { return "l" + std::to_string(layer) + ".weight"; }
std::string bias_name(int layer) { return "l" + std::to_string(layer) + ".bias"; }

ParamStore init_params(const MLPSpec& spec, std::uint64_t seed) {
  spec.validate();
  Rng rng(seed);
  ParamStore store;
  for (int l = 0; l < spec.num_layers(); ++l) {
    Matrix w(layer_in(spec, l), layer_out(spec, l));
    for (Eigen::Index j = 0; j < w.cols(); ++j) {
      for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = kInitStd * rng.normal();
    }
    store.insert(weight_name(l), std::move(w));
    store.insert(bias_name(l), Matrix::Zero(1, layer_out(spec, l)));
  }
  return store;
}

Matrix mlp_forward(const ParamStore& params, const MLPSpec& spec, const Matrix& x) {
  if (x.cols() != spec.in_dim) {
    throw ContractViolation("mlp_forward: input has " + std::to_string(x.cols()) +
                            " columns, expected " + std::to_string(spec.in_dim));
  }
  Matrix h = x;
  for (int l = 0; l < spec.num_layers(); ++l) {
    const Matrix& w = params.at(weight_name(l));
    const Matrix& b = params.at(bias_name(l));
    if (w.rows() != h.cols() || b.cols() != w.cols()) {
      throw ContractViolation("mlp_forward: parameter shapes disagree with spec at layer " +
                              std::to_string(l));
    }
    Matrix next = h * w;
    next.rowwise() += b.row(0);
    if (l + 1 < spec.num_layers()) next = next.cwiseMax(0.0);
    h = std::move(next);
  }
  return h;
}

Var mlp_forward(Tape& tape, const ParamStore& params, const MLPSpec& spec,
                const std::string& prefix, Var x) {
  if (x.cols() != spec.in_dim) {
    throw ContractViolation("mlp_forward: input has " + std::to_string(x.cols()) +
                            " columns, expected " + std::to_string(spec.in_dim));
  }
  Var h = x;
  for (int l = 0; l < spec.num_layers(); ++l) {
    Var w = tape.parameter(params, prefix + weight_name(l));
    Var b = tape.parameter(params, prefix + bias_name(l));
    h = tape.matmul(h, w) + b;
    if (l + 1 < spec.num_layers()) h = tape.relu(h);
  }
  return h;
}

}  // namespace ssmvae::nn

#include "ssmvae/nn/adam.hpp"

#include <cmath>
#include <vector>

#include "ssmvae/errors.hpp"

namespace ssmvae::nn {

AdamState AdamState::for_params(const ParamStore& params, double lr) {
  AdamState s;
  s.first_moment = params.zeros_like();
  s.second_moment = params.zeros_like();
  s.lr = lr;
  return s;
}

void adam_step(ParamStore& params, const ParamStore& grads, AdamState& state) {
  for (const auto& [name, g] : grads) {
    if (!g.allFinite()) throw NonFiniteError("adam_step: non-finite gradient for '" + name + "'");
  }
  const std::int64_t t = state.step_count + 1;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(t));

  struct Pending {
    Matrix* param;
    Matrix* m;
    Matrix* v;
    Matrix new_param, new_m, new_v;
  };
  std::vector<Pending> pending;
  pending.reserve(params.size());
  for (auto& [name, p] : params) {
    if (!grads.contains(name)) continue;
    const Matrix& g = grads.at(name);
    if (g.rows() != p.rows() || g.cols() != p.cols()) {
      throw ContractViolation("adam_step: gradient shape mismatch for '" + name + "'");
    }
    Matrix& m = state.first_moment.at(name);
    Matrix& v = state.second_moment.at(name);
    Pending u{&p, &m, &v, {}, {}, {}};
    u.new_m = state.beta1 * m + (1.0 - state.beta1) * g;
    u.new_v = state.beta2 * v + (1.0 - state.beta2) * g.cwiseProduct(g);
    const auto m_hat = u.new_m.array() / bc1;
    const auto v_hat = u.new_v.array() / bc2;
    u.new_param = (p.array() - state.lr * m_hat / (v_hat.sqrt() + state.epsilon)).matrix();
    if (!u.new_param.allFinite()) {
      throw NonFiniteError("adam_step: update produced non-finite values for '" + name + "'");
    }
    pending.push_back(std::move(u));
  }
  for (auto& u : pending) {
    *u.param = std::move(u.new_param);
    *u.m = std::move(u.new_m);
    *u.v = std::move(u.new_v);
  }
  state.step_count = t;
}

}  // namespace ssmvae::nn

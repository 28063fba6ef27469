#include "dnp/optim.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <numbers>

namespace dnp {

AdamWState make_adamw(const ModelParameters& params, const AdamWConfig& hp) {
  AdamWState s;
  s.hp = hp;
  for (const auto& [name, a] : params.arrays) {
    s.m[name] = Array(a.rows, a.cols, 0.0);
    s.v[name] = Array(a.rows, a.cols, 0.0);
  }
  return s;
}

void adamw_step(ModelParameters& params, const ParameterMap& grads, AdamWState& state, double lr) {
  if (!(lr >= 0.0)) throw DomainError("learning rate must be non-negative");
  for (const auto& [name, a] : params.arrays) {
    auto it = grads.find(name);
    if (it == grads.end()) throw Error("no gradient for parameter '" + name + "'");
    if (!it->second.same_shape(a)) throw ShapeError("gradient shape mismatch for '" + name + "'");
    for (double g : it->second.data) {
      if (!std::isfinite(g)) throw DivergenceError("non-finite gradient for parameter '" + name + "'");
    }
  }
  const AdamWConfig& hp = state.hp;
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(hp.beta1, t);
  const double bc2 = 1.0 - std::pow(hp.beta2, t);
  for (auto& [name, theta] : params.arrays) {
    const Array& g = grads.at(name);
    Array& m = state.m.at(name);
    Array& v = state.v.at(name);
    for (std::size_t i = 0; i < theta.size(); ++i) {
      theta.data[i] -= lr * hp.weight_decay * theta.data[i];
      m.data[i] = hp.beta1 * m.data[i] + (1.0 - hp.beta1) * g.data[i];
      v.data[i] = hp.beta2 * v.data[i] + (1.0 - hp.beta2) * g.data[i] * g.data[i];
      const double mhat = m.data[i] / bc1;
      const double vhat = v.data[i] / bc2;
      theta.data[i] -= lr * mhat / (std::sqrt(vhat) + hp.eps);
    }
  }
}

std::size_t warmup_steps(std::size_t total_steps, double warmup_fraction) {
  if (total_steps < 2) return total_steps;
  auto w = static_cast<std::size_t>(std::floor(warmup_fraction * static_cast<double>(total_steps)));
  return std::clamp<std::size_t>(w, 1, total_steps - 1);
}

double lr_at(std::size_t step, std::size_t total_steps, double lr_max, double warmup_fraction) {
  if (total_steps == 0) return 0.0;
  step = std::min(step, total_steps);
  const std::size_t w = warmup_steps(total_steps, warmup_fraction);
  if (step <= w) return lr_max * static_cast<double>(step) / static_cast<double>(w);
  const double progress = static_cast<double>(step - w) / static_cast<double>(total_steps - w);
  return lr_max * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

LossGrad reduce_chunks(std::size_t n, std::size_t chunk_size, bool parallel,
                       const std::function<LossGrad(std::size_t, std::size_t)>& chunk) {
  if (chunk_size == 0) chunk_size = 1;
  const std::size_t n_chunks = (n + chunk_size - 1) / chunk_size;
  std::vector<LossGrad> parts(n_chunks);
  std::vector<std::exception_ptr> errors(n_chunks);
  const auto nc = static_cast<std::ptrdiff_t>(n_chunks);
#pragma omp parallel for schedule(dynamic) if (parallel && n_chunks > 1)
  for (std::ptrdiff_t c = 0; c < nc; ++c) {
    const std::size_t b = static_cast<std::size_t>(c) * chunk_size;
    try {
      parts[static_cast<std::size_t>(c)] = chunk(b, std::min(n, b + chunk_size));
    } catch (...) {
      errors[static_cast<std::size_t>(c)] = std::current_exception();
    }
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  LossGrad total;
  for (LossGrad& p : parts) {
    total.loss_sum += p.loss_sum;
    total.count += p.count;
    for (auto& [name, g] : p.grads) {
      auto [it, inserted] = total.grads.try_emplace(name, std::move(g));
      if (!inserted) {
        for (std::size_t i = 0; i < g.size(); ++i) it->second.data[i] += g.data[i];
      }
    }
  }
  return total;
}

}  // namespace dnp

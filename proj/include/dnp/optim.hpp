#pragma once

#include <cstddef>
#include <functional>

#include "dnp/model.hpp"

namespace dnp {

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

struct AdamWState {
  AdamWConfig hp;
  std::size_t step = 0;
  ParameterMap m;
  ParameterMap v;
};

AdamWState make_adamw(const ModelParameters& params, const AdamWConfig& hp);

// One AdamW update with bias-corrected moments and decoupled weight decay
// (theta -= lr * wd * theta, applied separately from the adaptive step).
// Throws DivergenceError naming the parameter when a gradient is not finite.
void adamw_step(ModelParameters& params, const ParameterMap& grads, AdamWState& state, double lr);

// Number of linear warmup steps for a run of total_steps.
std::size_t warmup_steps(std::size_t total_steps, double warmup_fraction);

// Linear warmup from 0 to lr_max, then cosine decay to 0 at total_steps.
double lr_at(std::size_t step, std::size_t total_steps, double lr_max, double warmup_fraction);

// Sum of a per-item loss and its parameter gradients over a batch.
struct LossGrad {
  double loss_sum = 0.0;
  std::size_t count = 0;  // normalization units (components or molecules)
  ParameterMap grads;
};

// Evaluates chunk(begin, end) for consecutive chunks of [0, n) and adds the
// results in chunk order. Chunks run on OpenMP threads when parallel is set;
// the fixed chunking and ordered reduction make the sum independent of the
// thread count, so the serial path is an exact reference for the parallel one.
LossGrad reduce_chunks(std::size_t n, std::size_t chunk_size, bool parallel,
                       const std::function<LossGrad(std::size_t, std::size_t)>& chunk);

}  // namespace dnp

#include "dnp/pretrain.hpp"

#include <cmath>
#include <limits>
#include <numeric>

namespace dnp {

void PretrainConfig::validate() const {
  if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw ConfigError("sigma must be non-negative");
  if (batch_size == 0) throw ConfigError("batch size must be at least 1");
  if (!(lr_max >= 0.0)) throw ConfigError("learning rate must be non-negative");
  if (!(warmup_fraction > 0.0 && warmup_fraction < 1.0)) {
    throw ConfigError("warmup fraction must lie in (0, 1)");
  }
  if (!(weight_decay >= 0.0)) throw ConfigError("weight decay must be non-negative");
}

DenoiseSample make_denoise_sample(const Conformation& conf, double sigma, double cutoff, Rng& rng) {
  for (int attempt = 0;; ++attempt) {
    Perturbation p = perturb(conf, sigma, rng);
    DenoiseSample s;
    s.perturbed.species = conf.species;
    s.perturbed.coords = std::move(p.perturbed);
    s.perturbed.mol_id = conf.mol_id;
    try {
      s.graph = build_graph(s.perturbed, cutoff);
    } catch (const GeometryError&) {
      if (attempt >= 1) throw;
      continue;
    }
    s.noise = std::move(p.noise);
    return s;
  }
}

ad::Value denoise_loss_from_prediction(ad::Value prediction, const Array& noise) {
  ad::Tape& tape = *prediction.tape();
  ad::Value sse = ad::sum(ad::square(prediction - tape.constant(noise)));
  return sse * (1.0 / static_cast<double>(noise.size()));
}

namespace {

Array stack_noise(std::span<const DenoiseSample> samples) {
  std::size_t n = 0;
  for (const auto& s : samples) n += s.noise.rows;
  Array out(n, 3);
  std::size_t off = 0;
  for (const auto& s : samples) {
    std::copy(s.noise.data.begin(), s.noise.data.end(), out.data.begin() + off * 3);
    off += s.noise.rows;
  }
  return out;
}

GraphBatch batch_of(std::span<const DenoiseSample> samples) {
  std::vector<Conformation> confs;
  std::vector<MolecularGraph> graphs;
  confs.reserve(samples.size());
  graphs.reserve(samples.size());
  for (const auto& s : samples) {
    confs.push_back(s.perturbed);
    graphs.push_back(s.graph);
  }
  return make_batch(confs, graphs);
}

LossGrad denoise_chunk(const ModelConfig& config, const ModelParameters& params,
                       std::span<const DenoiseSample> samples, bool with_grad) {
  const GraphBatch batch = batch_of(samples);
  ad::Tape tape;
  BoundParameters p(tape, params, with_grad);
  ad::Value x = tape.leaf(batch.coords, config.kind == ModelKind::invariant);
  ad::Value pred = predict_noise(config, p, batch, x);
  ad::Value sse = ad::sum(ad::square(pred - tape.constant(stack_noise(samples))));
  LossGrad lg;
  lg.loss_sum = sse.item();
  lg.count = 3 * batch.n_atoms;
  if (with_grad) {
    std::vector<Array> g = ad::gradients(sse, p.values());
    for (std::size_t i = 0; i < g.size(); ++i) lg.grads.emplace(p.names()[i], std::move(g[i]));
  }
  return lg;
}

}  // namespace

ad::Value denoise_loss(ad::Tape& tape, const ModelConfig& config, const BoundParameters& params,
                       std::span<const Conformation> batch, double sigma, Rng& rng) {
  std::vector<DenoiseSample> samples;
  samples.reserve(batch.size());
  for (const auto& c : batch) samples.push_back(make_denoise_sample(c, sigma, config.cutoff, rng));
  const GraphBatch gb = batch_of(samples);
  ad::Value x = tape.leaf(gb.coords, config.kind == ModelKind::invariant);
  ad::Value pred = predict_noise(config, params, gb, x);
  return denoise_loss_from_prediction(pred, stack_noise(samples));
}

LossGrad denoise_loss_and_grad(const ModelConfig& config, const ModelParameters& params,
                               std::span<const DenoiseSample> samples, std::size_t chunk_size,
                               bool parallel) {
  return reduce_chunks(samples.size(), chunk_size, parallel, [&](std::size_t b, std::size_t e) {
    return denoise_chunk(config, params, samples.subspan(b, e - b), true);
  });
}

double denoise_loss_value(const ModelConfig& config, const ModelParameters& params,
                          std::span<const DenoiseSample> samples, std::size_t chunk_size,
                          bool parallel) {
  const LossGrad lg = reduce_chunks(samples.size(), chunk_size, parallel, [&](std::size_t b, std::size_t e) {
    return denoise_chunk(config, params, samples.subspan(b, e - b), false);
  });
  if (lg.count == 0) throw DataError("denoising loss of an empty set");
  return lg.loss_sum / static_cast<double>(lg.count);
}

PretrainResult run_pretraining(const ModelConfig& config, const ModelParameters& init,
                               std::span<const Conformation> dataset, const PretrainConfig& pc) {
  config.validate();
  pc.validate();
  if (dataset.empty()) throw DataError("pretraining dataset is empty");
  PretrainResult res;
  res.params = init;
  res.best_val_loss = std::numeric_limits<double>::quiet_NaN();
  if (pc.epochs == 0) return res;

  Rng split_rng = make_rng(pc.seed, {0x51u});
  const double ratios[] = {0.95, 0.05};
  auto parts = split_conformations(dataset, ratios, split_rng);
  const std::vector<std::size_t>& train = parts[0];
  const std::vector<std::size_t>& val = parts[1];
  res.n_train = train.size();
  res.n_val = val.size();

  std::vector<DenoiseSample> val_samples;
  val_samples.reserve(val.size());
  for (std::size_t i : val) {
    Rng r = make_rng(pc.seed, {0x7a1u, i});
    val_samples.push_back(make_denoise_sample(dataset[i], pc.sigma, config.cutoff, r));
  }

  const std::size_t steps_per_epoch = (train.size() + pc.batch_size - 1) / pc.batch_size;
  const std::size_t total_steps = steps_per_epoch * pc.epochs;
  AdamWConfig hp;
  hp.weight_decay = pc.weight_decay;
  AdamWState opt = make_adamw(res.params, hp);
  ModelParameters params = init;
  std::size_t step = 0;
  double best = std::numeric_limits<double>::infinity();

  for (std::size_t epoch = 1; epoch <= pc.epochs; ++epoch) {
    std::vector<std::size_t> order = train;
    Rng order_rng = make_rng(pc.seed, {0x0du, epoch});
    shuffle_indices(order, order_rng);
    double epoch_loss = 0.0;
    std::size_t epoch_count = 0;

    for (std::size_t b = 0; b < order.size(); b += pc.batch_size) {
      const std::size_t e = std::min(order.size(), b + pc.batch_size);
      LossGrad lg = reduce_chunks(e - b, pc.chunk_size, pc.parallel, [&](std::size_t cb, std::size_t ce) {
        std::vector<DenoiseSample> samples;
        samples.reserve(ce - cb);
        for (std::size_t k = b + cb; k < b + ce; ++k) {
          Rng r = make_rng(pc.seed, {0xe9u, epoch, order[k]});
          samples.push_back(make_denoise_sample(dataset[order[k]], pc.sigma, config.cutoff, r));
        }
        return denoise_chunk(config, params, samples, true);
      });
      const double loss = lg.loss_sum / static_cast<double>(lg.count);
      ++step;
      if (!std::isfinite(loss)) {
        throw DivergenceError("pretraining diverged at step " + std::to_string(step) +
                              " (loss = " + std::to_string(loss) + ")");
      }
      const double scale = 1.0 / static_cast<double>(lg.count);
      for (auto& [_, g] : lg.grads) {
        for (double& v : g.data) v *= scale;
      }
      try {
        adamw_step(params, lg.grads, opt, lr_at(step, total_steps, pc.lr_max, pc.warmup_fraction));
      } catch (const DivergenceError& ex) {
        throw DivergenceError("pretraining diverged at step " + std::to_string(step) + ": " + ex.what());
      }
      res.metrics.add(step, epoch, "train", "loss", loss);
      epoch_loss += lg.loss_sum;
      epoch_count += lg.count;
    }

    // Without a validation split the epoch's training loss drives selection.
    const double val_loss = val_samples.empty()
                                ? epoch_loss / static_cast<double>(epoch_count)
                                : denoise_loss_value(config, params, val_samples, pc.chunk_size, pc.parallel);
    if (!std::isfinite(val_loss)) {
      throw DivergenceError("pretraining diverged: validation loss " + std::to_string(val_loss) +
                            " after epoch " + std::to_string(epoch));
    }
    res.metrics.add(step, epoch, "val", "loss", val_loss);
    if (val_loss < best) {
      best = val_loss;
      res.params = params;
      res.best_epoch = epoch;
      res.best_val_loss = val_loss;
    }
  }
  return res;
}

double gaussian_denoiser_floor(double sigma, double tau) {
  const double s2 = sigma * sigma, t2 = tau * tau;
  if (s2 + t2 == 0.0) return 0.0;
  return s2 * t2 / (t2 + s2);
}

namespace {

// coth(a) - 1/a
double langevin(double a) {
  if (a < 1e-4) return a / 3.0 - a * a * a / 45.0;
  return 1.0 / std::tanh(a) - 1.0 / a;
}

// log of sinh(a)/a * exp(-a) = log((1 - e^{-2a}) / (2a))
double log_sinhc_scaled(double a) {
  if (a < 1e-8) return -a;
  return std::log(-std::expm1(-2.0 * a) / (2.0 * a));
}

}  // namespace

double well_posterior_relative_noise(double rho, double sigma, const HarmonicWell& well) {
  const double s2 = 2.0 * sigma * sigma;  // variance of noise_1 - noise_2 per component
  if (s2 == 0.0) return 0.0;
  if (well.tau == 0.0) return rho - well.d0 * langevin(rho * well.d0 / s2);

  constexpr int kPoints = 201;
  const double lo = std::max(1e-9, well.d0 - 8.0 * well.tau);
  const double hi = well.d0 + 8.0 * well.tau;
  const double h = (hi - lo) / (kPoints - 1);
  std::vector<double> logw(kPoints), dl(kPoints);
  double max_logw = -std::numeric_limits<double>::infinity();
  for (int k = 0; k < kPoints; ++k) {
    const double d = lo + h * k;
    const double a = rho * d / s2;
    const double u = (d - well.d0) / well.tau;
    logw[k] = -0.5 * u * u - (rho - d) * (rho - d) / (2.0 * s2) + log_sinhc_scaled(a);
    dl[k] = d * langevin(a);
    max_logw = std::max(max_logw, logw[k]);
  }
  double num = 0.0, den = 0.0;
  for (int k = 0; k < kPoints; ++k) {
    const double w = std::exp(logw[k] - max_logw) * (k == 0 || k == kPoints - 1 ? 0.5 : 1.0);
    num += w * dl[k];
    den += w;
  }
  return rho - num / den;
}

double oracle_denoiser_mse(double sigma, const HarmonicWell& well, std::size_t n_samples, Rng& rng) {
  if (!(sigma > 0.0)) throw DomainError("oracle denoiser floor needs sigma > 0");
  if (n_samples == 0) throw DomainError("need at least one sample");
  std::normal_distribution<double> normal(0.0, 1.0);
  double total = 0.0;
  for (std::size_t i = 0; i < n_samples; ++i) {
    const double d = well.d0 + well.tau * normal(rng);
    double n[3] = {normal(rng), normal(rng), normal(rng)};
    const double len = std::sqrt(n[0] * n[0] + n[1] * n[1] + n[2] * n[2]);
    double e1[3], e2[3], obs[3];
    for (int k = 0; k < 3; ++k) e1[k] = sigma * normal(rng);
    for (int k = 0; k < 3; ++k) e2[k] = sigma * normal(rng);
    for (int k = 0; k < 3; ++k) obs[k] = d * n[k] / len + e1[k] - e2[k];
    const double rho = std::sqrt(obs[0] * obs[0] + obs[1] * obs[1] + obs[2] * obs[2]);
    const double g = well_posterior_relative_noise(rho, sigma, well);
    for (int k = 0; k < 3; ++k) {
      const double half = 0.5 * g * obs[k] / rho;
      total += (e1[k] - half) * (e1[k] - half) + (e2[k] + half) * (e2[k] + half);
    }
  }
  return total / (6.0 * static_cast<double>(n_samples));
}

}  // namespace dnp

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "dnp/metrics.hpp"
#include "dnp/model.hpp"
#include "dnp/optim.hpp"
#include "dnp/perturb.hpp"
#include "dnp/synth.hpp"

namespace dnp {

struct PretrainConfig {
  double sigma = 0.2;  // Angstrom
  std::size_t epochs = 5;
  std::size_t batch_size = 256;
  double lr_max = 2e-4;
  double warmup_fraction = 0.05;
  double weight_decay = 0.0;
  std::uint64_t seed = 0;
  // Conformations per tape; chunks of a batch are evaluated in parallel.
  std::size_t chunk_size = 32;
  bool parallel = true;

  void validate() const;
};

// A perturbed conformation (graph rebuilt on the perturbed coordinates) and
// the noise that produced it.
struct DenoiseSample {
  Conformation perturbed;
  MolecularGraph graph;
  Array noise;
};

// Perturbs conf and builds the graph on the result. If the perturbed atoms
// coincide the noise is drawn once more; a second failure is rethrown.
DenoiseSample make_denoise_sample(const Conformation& conf, double sigma, double cutoff, Rng& rng);

// sum ||prediction - noise||^2 / (3 * sum N) as a recorded scalar.
ad::Value denoise_loss_from_prediction(ad::Value prediction, const Array& noise);

// Mean squared noise-prediction error per coordinate component over the
// batch. Each conformation is perturbed with rng (in batch order), the graph
// is rebuilt on the perturbed geometry and the noise is predicted with the
// model's strategy (energy gradient for invariant, coordinate difference for
// equivariant).
ad::Value denoise_loss(ad::Tape& tape, const ModelConfig& config, const BoundParameters& params,
                       std::span<const Conformation> batch, double sigma, Rng& rng);

// Sum of squared errors (count = 3 * atoms) and its parameter gradients for
// prepared samples, evaluated chunk by chunk.
LossGrad denoise_loss_and_grad(const ModelConfig& config, const ModelParameters& params,
                               std::span<const DenoiseSample> samples, std::size_t chunk_size,
                               bool parallel);
// Loss value only.
double denoise_loss_value(const ModelConfig& config, const ModelParameters& params,
                          std::span<const DenoiseSample> samples, std::size_t chunk_size,
                          bool parallel);

struct PretrainResult {
  ModelParameters params;   // from the epoch with the lowest validation loss
  RunMetrics metrics;
  std::size_t best_epoch = 0;
  double best_val_loss = 0.0;
  std::size_t n_train = 0;
  std::size_t n_val = 0;
};

// 95/5 per-molecule split, AdamW with warmup + cosine decay on the denoising
// loss. Fresh noise every epoch from a stream keyed by (seed, epoch,
// conformation); validation noise is fixed across epochs. Throws
// DivergenceError on a non-finite loss.
PretrainResult run_pretraining(const ModelConfig& config, const ModelParameters& init,
                               std::span<const Conformation> dataset, const PretrainConfig& pc);

// Closed-form Bayes floor per component for a 1-D Gaussian prior N(mu, tau^2)
// observed with N(0, sigma^2) noise: sigma^2 tau^2 / (tau^2 + sigma^2).
double gaussian_denoiser_floor(double sigma, double tau);

// Optimal denoiser for the diatomic harmonic well, given a perturbed
// relative vector (x1 - x2) of length rho: E[noise_1 - noise_2 | observed]
// is along the observed bond with this signed length. Computed by quadrature
// over the bond length with the orientation integrated analytically.
double well_posterior_relative_noise(double rho, double sigma, const HarmonicWell& well);

// Irreducible denoising loss per component, E||E[eps|X^] - eps||^2 / 6, for
// the diatomic harmonic well under a translation-invariant prior (the
// centroid noise cannot be recovered). Monte-Carlo over n_samples draws.
double oracle_denoiser_mse(double sigma, const HarmonicWell& well, std::size_t n_samples, Rng& rng);

}  // namespace dnp

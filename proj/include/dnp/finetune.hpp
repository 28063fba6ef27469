#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dnp/checkpoint.hpp"
#include "dnp/metrics.hpp"
#include "dnp/model.hpp"
#include "dnp/optim.hpp"

namespace dnp {

struct FinetuneConfig {
  std::size_t epochs = 10;
  std::size_t batch_size = 256;
  double lr_max = 2e-4;
  double warmup_fraction = 0.05;
  double weight_decay = 0.0;
  std::uint64_t seed = 0;
  // Share of the training split actually used (seeded subsample).
  double train_fraction = 1.0;
  std::size_t chunk_size = 32;
  bool parallel = true;
  // Start the head's output bias at the mean training energy.
  bool center_head_bias = true;

  void validate() const;
};

// Copies embedding and message-passing arrays from the checkpoint bit-exactly
// and attaches a freshly initialized head. Throws TransferError listing every
// differing field among kind, F, T, n_rbf and cutoff.
ModelParameters transfer_for_finetune(const Checkpoint& pretrained, const ModelConfig& target,
                                      Rng& head_rng);

// Starting point of a fine-tuning run: the transferred checkpoint when given,
// otherwise init_parameters. The generator is keyed by seed.
ModelParameters finetune_start(const Checkpoint* pretrained, const ModelConfig& config,
                               std::uint64_t seed);

// Mean over the batch of (E_pred - E_ref)^2. Throws DataError naming the
// first conformation without an energy.
ad::Value energy_loss(ad::Tape& tape, const ModelConfig& config, const BoundParameters& params,
                      std::span<const Conformation> batch);

// Summed squared energy error (count = molecules) with parameter gradients.
LossGrad energy_loss_and_grad(const ModelConfig& config, const ModelParameters& params,
                              std::span<const Conformation> batch, std::size_t chunk_size,
                              bool parallel);

struct EvalResult {
  double rmse = 0.0;  // kcal/mol
  double mae = 0.0;   // kcal/mol
};

EvalResult error_metrics(std::span<const double> predicted, std::span<const double> reference);
// Throws EvaluationError on an empty set and DataError on a missing energy.
EvalResult evaluate(const ModelConfig& config, const ModelParameters& params,
                    std::span<const Conformation> confs, std::size_t batch_size = 64);

struct FinetuneResult {
  ModelParameters params;  // from the epoch with the lowest validation MAE
  RunMetrics metrics;
  std::size_t best_epoch = 0;
  double best_val_mae = 0.0;
  std::optional<EvalResult> test;  // absent when the test split is empty
  std::size_t n_train = 0;
  std::size_t n_val = 0;
  std::size_t n_test = 0;
};

// 80/10/10 per-molecule split, AdamW with warmup + cosine decay on the energy
// loss, validation loss/RMSE/MAE before training (epoch 0) and after every
// epoch, test metrics once for the selected parameters.
FinetuneResult run_finetune(const ModelConfig& config, const ModelParameters& init,
                            std::span<const Conformation> dataset, const FinetuneConfig& fc);

struct SweepRow {
  double fraction = 0.0;
  std::uint64_t seed = 0;
  std::string variant;  // pretrained or scratch
  double test_mae = 0.0;
  double test_rmse = 0.0;
  std::size_t n_train = 0;

  friend bool operator==(const SweepRow&, const SweepRow&) = default;
};

// For every fraction and seed, fine-tunes the transferred checkpoint and a
// scratch model with identical settings on the same training subset. Rows are
// sorted by fraction, then seed, then variant. Throws SweepError for a
// fraction outside (0, 1] or one that leaves no training conformations.
std::vector<SweepRow> data_efficiency_sweep(const Checkpoint& pretrained, const ModelConfig& config,
                                            std::span<const Conformation> dataset,
                                            std::span<const double> fractions,
                                            std::span<const std::uint64_t> seeds,
                                            const FinetuneConfig& fc);

// Columns fraction,seed,variant,test_mae,test_rmse.
std::string sweep_csv(std::span<const SweepRow> rows);

}  // namespace dnp

#include "dnp/finetune.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <tuple>

#include "dnp/perturb.hpp"
#include "dnp/xyz.hpp"

namespace dnp {

void FinetuneConfig::validate() const {
  if (batch_size == 0) throw ConfigError("batch size must be at least 1");
  if (!(lr_max >= 0.0)) throw ConfigError("learning rate must be non-negative");
  if (!(warmup_fraction > 0.0 && warmup_fraction < 1.0)) {
    throw ConfigError("warmup fraction must lie in (0, 1)");
  }
  if (!(weight_decay >= 0.0)) throw ConfigError("weight decay must be non-negative");
  if (!(train_fraction > 0.0 && train_fraction <= 1.0)) {
    throw ConfigError("train fraction must lie in (0, 1]");
  }
}

ModelParameters transfer_for_finetune(const Checkpoint& pretrained, const ModelConfig& target,
                                      Rng& head_rng) {
  const ModelConfig& src = pretrained.config;
  std::vector<std::string> diff;
  auto note = [&](bool differs, const std::string& field, const std::string& a, const std::string& b) {
    if (differs) diff.push_back(field + " (" + a + " vs " + b + ")");
  };
  note(src.kind != target.kind, "kind", model_kind_name(src.kind), model_kind_name(target.kind));
  note(src.feature_width != target.feature_width, "F", std::to_string(src.feature_width),
       std::to_string(target.feature_width));
  note(src.n_layers != target.n_layers, "T", std::to_string(src.n_layers), std::to_string(target.n_layers));
  note(src.n_rbf != target.n_rbf, "n_rbf", std::to_string(src.n_rbf), std::to_string(target.n_rbf));
  note(src.cutoff != target.cutoff, "cutoff", format_double(src.cutoff), format_double(target.cutoff));
  if (!diff.empty()) {
    std::string msg = "checkpoint does not match the target model:";
    for (std::size_t i = 0; i < diff.size(); ++i) msg += (i ? ", " : " ") + diff[i];
    throw TransferError(msg);
  }
  target.validate();
  ModelParameters out;
  for (const auto& [name, a] : pretrained.params.arrays) {
    if (!ModelParameters::is_head(name)) out.arrays.emplace(name, a);
  }
  for (auto& [name, a] : init_head(target, head_rng)) out.arrays[name] = std::move(a);
  validate_parameters(target, out);
  return out;
}

ModelParameters finetune_start(const Checkpoint* pretrained, const ModelConfig& config,
                               std::uint64_t seed) {
  if (pretrained) {
    Rng rng = make_rng(seed, {0x4eadu});
    return transfer_for_finetune(*pretrained, config, rng);
  }
  Rng rng = make_rng(seed, {0x1417u});
  return init_parameters(config, rng);
}

namespace {

void require_energies(std::span<const Conformation> confs, std::size_t offset = 0) {
  for (std::size_t i = 0; i < confs.size(); ++i) {
    if (!confs[i].energy) {
      throw DataError("conformation " + std::to_string(offset + i) + " has no reference energy");
    }
  }
}

struct EnergyBatch {
  GraphBatch batch;
  Array reference;  // B x 1
};

EnergyBatch energy_batch(std::span<const Conformation> confs, double cutoff) {
  std::vector<MolecularGraph> graphs;
  graphs.reserve(confs.size());
  EnergyBatch eb;
  eb.reference = Array(confs.size(), 1);
  for (std::size_t i = 0; i < confs.size(); ++i) {
    graphs.push_back(build_graph(confs[i], cutoff));
    eb.reference.data[i] = *confs[i].energy;
  }
  eb.batch = make_batch(confs, graphs);
  return eb;
}

LossGrad energy_chunk(const ModelConfig& config, const ModelParameters& params,
                      std::span<const Conformation> confs) {
  const EnergyBatch eb = energy_batch(confs, config.cutoff);
  ad::Tape tape;
  BoundParameters p(tape, params, true);
  ad::Value x = tape.constant(eb.batch.coords);
  ad::Value energy = forward(config, p, eb.batch, x).energy;
  ad::Value sse = ad::sum(ad::square(energy - tape.constant(eb.reference)));
  LossGrad lg;
  lg.loss_sum = sse.item();
  lg.count = confs.size();
  std::vector<Array> g = ad::gradients(sse, p.values());
  for (std::size_t i = 0; i < g.size(); ++i) lg.grads.emplace(p.names()[i], std::move(g[i]));
  return lg;
}

std::vector<Conformation> gather(std::span<const Conformation> dataset, const std::vector<std::size_t>& idx) {
  std::vector<Conformation> out;
  out.reserve(idx.size());
  for (std::size_t i : idx) out.push_back(dataset[i]);
  return out;
}

}  // namespace

ad::Value energy_loss(ad::Tape& tape, const ModelConfig& config, const BoundParameters& params,
                      std::span<const Conformation> batch) {
  require_energies(batch);
  if (batch.empty()) throw DataError("energy loss of an empty batch");
  const EnergyBatch eb = energy_batch(batch, config.cutoff);
  ad::Value energy = forward(config, params, eb.batch, tape.constant(eb.batch.coords)).energy;
  return ad::mean(ad::square(energy - tape.constant(eb.reference)));
}

LossGrad energy_loss_and_grad(const ModelConfig& config, const ModelParameters& params,
                              std::span<const Conformation> batch, std::size_t chunk_size,
                              bool parallel) {
  require_energies(batch);
  return reduce_chunks(batch.size(), chunk_size, parallel, [&](std::size_t b, std::size_t e) {
    return energy_chunk(config, params, batch.subspan(b, e - b));
  });
}

EvalResult error_metrics(std::span<const double> predicted, std::span<const double> reference) {
  if (predicted.size() != reference.size()) throw ShapeError("prediction and reference lengths differ");
  if (predicted.empty()) throw EvaluationError("cannot evaluate an empty set");
  double se = 0.0, ae = 0.0;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    const double err = predicted[i] - reference[i];
    se += err * err;
    ae += std::abs(err);
  }
  const double n = static_cast<double>(predicted.size());
  return {std::sqrt(se / n), ae / n};
}

EvalResult evaluate(const ModelConfig& config, const ModelParameters& params,
                    std::span<const Conformation> confs, std::size_t batch_size) {
  if (confs.empty()) throw EvaluationError("cannot evaluate an empty set");
  require_energies(confs);
  const std::vector<double> pred = predict_energies(config, params, confs, batch_size);
  std::vector<double> ref(confs.size());
  for (std::size_t i = 0; i < confs.size(); ++i) ref[i] = *confs[i].energy;
  return error_metrics(pred, ref);
}

FinetuneResult run_finetune(const ModelConfig& config, const ModelParameters& init,
                            std::span<const Conformation> dataset, const FinetuneConfig& fc) {
  config.validate();
  fc.validate();
  validate_parameters(config, init);
  if (dataset.empty()) throw DataError("fine-tuning dataset is empty");
  require_energies(dataset);

  Rng split_rng = make_rng(fc.seed, {0x5f17u});
  const double ratios[] = {0.8, 0.1, 0.1};
  auto parts = split_conformations(dataset, ratios, split_rng);
  std::vector<std::size_t> train_idx = parts[0];
  if (fc.train_fraction < 1.0) {
    const auto keep = static_cast<std::size_t>(std::floor(fc.train_fraction * train_idx.size() + 1e-9));
    if (keep == 0) throw SweepError("train fraction leaves no training conformations");
    Rng sub_rng = make_rng(fc.seed, {0x5bu});
    shuffle_indices(train_idx, sub_rng);
    train_idx.resize(keep);
    std::sort(train_idx.begin(), train_idx.end());
  }
  const std::vector<Conformation> train = gather(dataset, train_idx);
  const std::vector<Conformation> val = gather(dataset, parts[1]);
  const std::vector<Conformation> test = gather(dataset, parts[2]);

  FinetuneResult res;
  res.n_train = train.size();
  res.n_val = val.size();
  res.n_test = test.size();
  if (train.empty()) throw DataError("training split is empty");

  ModelParameters params = init;
  if (fc.center_head_bias && fc.epochs > 0) {
    double mean = 0.0;
    for (const auto& c : train) mean += *c.energy;
    params.at("head.l2.b").data[0] = mean / static_cast<double>(train.size());
  }

  std::size_t step = 0;
  auto record_val = [&](std::size_t epoch) -> double {
    if (val.empty()) return std::numeric_limits<double>::quiet_NaN();
    const EvalResult ev = evaluate(config, params, val);
    res.metrics.add(step, epoch, "val", "loss", ev.rmse * ev.rmse);
    res.metrics.add(step, epoch, "val", "rmse_kcal_mol", ev.rmse);
    res.metrics.add(step, epoch, "val", "mae_kcal_mol", ev.mae);
    return ev.mae;
  };

  double best = record_val(0);
  res.params = params;
  res.best_epoch = 0;
  res.best_val_mae = best;
  if (std::isnan(best)) best = std::numeric_limits<double>::infinity();

  const std::size_t steps_per_epoch = (train.size() + fc.batch_size - 1) / fc.batch_size;
  const std::size_t total_steps = steps_per_epoch * fc.epochs;
  AdamWConfig hp;
  hp.weight_decay = fc.weight_decay;
  AdamWState opt = make_adamw(params, hp);
  const std::span<const Conformation> train_span(train);

  for (std::size_t epoch = 1; epoch <= fc.epochs; ++epoch) {
    std::vector<std::size_t> order(train.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng order_rng = make_rng(fc.seed, {0x0eu, epoch});
    shuffle_indices(order, order_rng);

    for (std::size_t b = 0; b < order.size(); b += fc.batch_size) {
      const std::size_t e = std::min(order.size(), b + fc.batch_size);
      std::vector<Conformation> batch;
      batch.reserve(e - b);
      for (std::size_t k = b; k < e; ++k) batch.push_back(train_span[order[k]]);
      LossGrad lg = energy_loss_and_grad(config, params, batch, fc.chunk_size, fc.parallel);
      const double loss = lg.loss_sum / static_cast<double>(lg.count);
      ++step;
      if (!std::isfinite(loss)) {
        throw DivergenceError("fine-tuning diverged at step " + std::to_string(step) +
                              " (loss = " + std::to_string(loss) + ")");
      }
      const double scale = 1.0 / static_cast<double>(lg.count);
      for (auto& [_, g] : lg.grads) {
        for (double& v : g.data) v *= scale;
      }
      try {
        adamw_step(params, lg.grads, opt, lr_at(step, total_steps, fc.lr_max, fc.warmup_fraction));
      } catch (const DivergenceError& ex) {
        throw DivergenceError("fine-tuning diverged at step " + std::to_string(step) + ": " + ex.what());
      }
      res.metrics.add(step, epoch, "train", "loss", loss);
    }

    const double mae = record_val(epoch);
    // Without a validation split the last epoch is kept.
    if (std::isnan(mae) || mae < best) {
      if (!std::isnan(mae)) best = mae;
      res.params = params;
      res.best_epoch = epoch;
      res.best_val_mae = mae;
    }
  }

  if (!test.empty()) res.test = evaluate(config, res.params, test);
  return res;
}

std::vector<SweepRow> data_efficiency_sweep(const Checkpoint& pretrained, const ModelConfig& config,
                                            std::span<const Conformation> dataset,
                                            std::span<const double> fractions,
                                            std::span<const std::uint64_t> seeds,
                                            const FinetuneConfig& fc) {
  if (fractions.empty() || seeds.empty()) throw SweepError("sweep needs at least one fraction and one seed");
  for (double f : fractions) {
    if (!(f > 0.0 && f <= 1.0)) throw SweepError("fraction " + format_double(f) + " is outside (0, 1]");
  }
  std::vector<SweepRow> rows;
  for (double f : fractions) {
    for (std::uint64_t seed : seeds) {
      FinetuneConfig run = fc;
      run.seed = seed;
      run.train_fraction = f;
      for (const char* variant : {"pretrained", "scratch"}) {
        const bool use_pretrained = std::string(variant) == "pretrained";
        const ModelParameters init = finetune_start(use_pretrained ? &pretrained : nullptr, config, seed);
        FinetuneResult r;
        try {
          r = run_finetune(config, init, dataset, run);
        } catch (const SweepError& ex) {
          throw SweepError("fraction " + format_double(f) + ": " + ex.what());
        }
        if (!r.test) throw SweepError("fraction " + format_double(f) + ": test split is empty");
        rows.push_back({f, seed, variant, r.test->mae, r.test->rmse, r.n_train});
      }
    }
  }
  std::stable_sort(rows.begin(), rows.end(), [](const SweepRow& a, const SweepRow& b) {
    return std::tie(a.fraction, a.seed, a.variant) < std::tie(b.fraction, b.seed, b.variant);
  });
  return rows;
}

std::string sweep_csv(std::span<const SweepRow> rows) {
  std::ostringstream out;
  out << "fraction,seed,variant,test_mae,test_rmse\n";
  for (const auto& r : rows) {
    out << format_double(r.fraction) << ',' << r.seed << ',' << r.variant << ','
        << format_double(r.test_mae) << ',' << format_double(r.test_rmse) << '\n';
  }
  return out.str();
}

}  // namespace dnp

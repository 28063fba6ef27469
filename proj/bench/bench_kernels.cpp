// Serial reference kernels against the OpenMP versions, and serial against
// chunk-parallel batch gradients.
#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <omp.h>
#include <random>

#include "dnp/finetune.hpp"
#include "dnp/kernels.hpp"
#include "dnp/pretrain.hpp"
#include "dnp/synth.hpp"

using namespace dnp;

namespace {

template <class F>
double best_ms(int reps, F&& f) {
  double best = 1e300;
  for (int r = 0; r < reps; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    f();
    best = std::min(best, std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count());
  }
  return best;
}

Array random_array(std::size_t r, std::size_t c, std::mt19937_64& rng) {
  std::normal_distribution<double> n;
  Array a(r, c);
  for (double& v : a.data) v = n(rng);
  return a;
}

double max_diff(const Array& a, const Array& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.data[i] - b.data[i]));
  return m;
}

double max_diff(const ParameterMap& a, const ParameterMap& b) {
  double m = 0.0;
  for (const auto& [k, v] : a) m = std::max(m, max_diff(v, b.at(k)));
  return m;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"kernel benchmark"};
  int reps = 5;
  int threads = 0;
  std::size_t batch = 64;
  app.add_option("--reps", reps, "repetitions (best time is reported)");
  app.add_option("--threads", threads, "OpenMP threads (0 = default)");
  app.add_option("--batch", batch, "conformations per gradient batch");
  CLI11_PARSE(app, argc, argv);
  if (threads > 0) omp_set_num_threads(threads);
  std::printf("threads %d\n\n", omp_get_max_threads());

  std::mt19937_64 rng(7);
  std::printf("%-28s %12s %12s %8s %10s\n", "matmul", "reference ms", "openmp ms", "speedup", "max diff");
  for (std::size_t n : {64, 256, 512}) {
    const Array a = random_array(n, n, rng);
    const Array b = random_array(n, n, rng);
    Array ref, par;
    const double t_ref = best_ms(reps, [&] { kernels::reference::matmul(a, false, b, false, ref); });
    const double t_par = best_ms(reps, [&] { kernels::matmul(a, false, b, false, par); });
    char label[64];
    std::snprintf(label, sizeof label, "%zux%zu * %zux%zu", n, n, n, n);
    std::printf("%-28s %12.3f %12.3f %8.2f %10.2e\n", label, t_ref, t_par, t_ref / t_par, max_diff(ref, par));
  }

  SamplingSpec spec;
  spec.n_molecules = 4;
  spec.conformations_per_molecule = batch / 4 + 1;
  spec.seed = 11;
  auto data = sample_dataset(OraclePotential::lennard_jones(1.0, 1.35), spec);
  data.resize(batch);

  std::printf("\n%-28s %12s %12s %8s %10s\n", "batch gradient", "serial ms", "parallel ms", "speedup",
              "max diff");
  for (ModelKind kind : {ModelKind::invariant, ModelKind::equivariant}) {
    ModelConfig cfg;
    cfg.kind = kind;
    Rng init = make_rng(1, {});
    const ModelParameters params = init_parameters(cfg, init);

    std::vector<DenoiseSample> samples;
    Rng noise = make_rng(2, {});
    for (const auto& c : data) samples.push_back(make_denoise_sample(c, 0.2, cfg.cutoff, noise));
    LossGrad s, p;
    const double ts = best_ms(reps, [&] { s = denoise_loss_and_grad(cfg, params, samples, 32, false); });
    const double tp = best_ms(reps, [&] { p = denoise_loss_and_grad(cfg, params, samples, 32, true); });
    std::string label = std::string("denoise ") + model_kind_name(kind);
    std::printf("%-28s %12.3f %12.3f %8.2f %10.2e\n", label.c_str(), ts, tp, ts / tp, max_diff(s.grads, p.grads));

    const double es = best_ms(reps, [&] { s = energy_loss_and_grad(cfg, params, data, 32, false); });
    const double ep = best_ms(reps, [&] { p = energy_loss_and_grad(cfg, params, data, 32, true); });
    label = std::string("energy ") + model_kind_name(kind);
    std::printf("%-28s %12.3f %12.3f %8.2f %10.2e\n", label.c_str(), es, ep, es / ep, max_diff(s.grads, p.grads));
  }
  return 0;
}

#include "cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <deque>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <omp.h>
#include <sstream>

#include "dnp/checkpoint.hpp"
#include "dnp/errors.hpp"
#include "dnp/finetune.hpp"
#include "dnp/perturb.hpp"
#include "dnp/pretrain.hpp"
#include "dnp/synth.hpp"
#include "dnp/xyz.hpp"

namespace dnp::cli {
namespace {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

enum class KeyType { text, boolean, count, real, reals, counts };

struct KeySpec {
  const char* key;
  KeyType type;
  const char* fallback;
};

const std::vector<KeySpec>& schema() {
  static const std::vector<KeySpec> keys = {
      {"seed", KeyType::count, "0"},
      {"seeds", KeyType::counts, ""},
      {"threads", KeyType::count, "0"},
      {"out", KeyType::text, ""},
      {"data", KeyType::text, ""},
      {"pretrain_data", KeyType::text, ""},
      {"pretrained", KeyType::text, ""},
      {"from_scratch", KeyType::boolean, "false"},
      {"checkpoint", KeyType::text, ""},
      {"corrupt", KeyType::boolean, "false"},
      {"data.potential", KeyType::text, "lj"},
      {"data.molecules", KeyType::count, "10"},
      {"data.confs", KeyType::count, "100"},
      {"data.displacement", KeyType::real, "0.05"},
      {"data.min_atoms", KeyType::count, "5"},
      {"data.max_atoms", KeyType::count, "9"},
      {"data.tau", KeyType::real, "0.15"},
      {"model.kind", KeyType::text, "invariant"},
      {"model.features", KeyType::count, "32"},
      {"model.layers", KeyType::count, "3"},
      {"model.rbf", KeyType::count, "16"},
      {"model.cutoff", KeyType::real, "5"},
      {"model.head_hidden", KeyType::count, "32"},
      {"pretrain.sigma", KeyType::real, "0.2"},
      {"pretrain.epochs", KeyType::count, "5"},
      {"pretrain.batch_size", KeyType::count, "256"},
      {"pretrain.lr", KeyType::real, "0.0002"},
      {"pretrain.warmup_fraction", KeyType::real, "0.05"},
      {"pretrain.weight_decay", KeyType::real, "0"},
      {"finetune.epochs", KeyType::count, "10"},
      {"finetune.batch_size", KeyType::count, "256"},
      {"finetune.lr", KeyType::real, "0.0002"},
      {"finetune.warmup_fraction", KeyType::real, "0.05"},
      {"finetune.weight_decay", KeyType::real, "0"},
      {"ablate.sigmas", KeyType::reals, "0,0.01,0.02,0.05,0.1,0.2,0.5,1.0"},
      {"sweep.fractions", KeyType::reals, "0.05,0.2,0.5,1.0"},
  };
  return keys;
}

const KeySpec* find_key(const std::string& key) {
  for (const auto& k : schema()) {
    if (key == k.key) return &k;
  }
  return nullptr;
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

double parse_real(const std::string& key, const std::string& text) {
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (used == text.size() && std::isfinite(v)) return v;
  } catch (const std::exception&) {
  }
  throw ConfigError(key + ": expected a number, got '" + text + "'");
}

std::uint64_t parse_count(const std::string& key, const std::string& text) {
  if (!text.empty() && std::all_of(text.begin(), text.end(), [](char c) { return c >= '0' && c <= '9'; })) {
    try {
      return std::stoull(text);
    } catch (const std::exception&) {
    }
  }
  throw ConfigError(key + ": expected a non-negative integer, got '" + text + "'");
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1" || text == "yes") return true;
  if (text == "false" || text == "0" || text == "no") return false;
  throw ConfigError(key + ": expected true or false, got '" + text + "'");
}

// Resolved key = value settings over the closed schema.
class Settings {
 public:
  Settings() {
    for (const auto& k : schema()) values_[k.key] = k.fallback;
  }

  void set(const std::string& key, const std::string& value) {
    const KeySpec* spec = find_key(key);
    if (!spec) throw ConfigError("unknown configuration key '" + key + "'");
    check(*spec, value);
    values_[key] = value;
  }

  void load_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file " + path.string());
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
      ++n;
      const auto hash = line.find('#');
      if (hash != std::string::npos) line.resize(hash);
      line = trim(line);
      if (line.empty()) continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos) {
        throw ConfigError(path.string() + ":" + std::to_string(n) + ": expected key = value");
      }
      try {
        set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
      } catch (const ConfigError& e) {
        throw ConfigError(path.string() + ":" + std::to_string(n) + ": " + e.what());
      }
    }
  }

  const std::string& text(const std::string& key) const { return values_.at(key); }
  bool flag(const std::string& key) const { return parse_bool(key, text(key)); }
  std::size_t count(const std::string& key) const { return parse_count(key, text(key)); }
  std::uint64_t u64(const std::string& key) const { return parse_count(key, text(key)); }
  double real(const std::string& key) const { return parse_real(key, text(key)); }
  std::vector<double> reals(const std::string& key) const {
    std::vector<double> out;
    for (const auto& s : split_list(text(key))) out.push_back(parse_real(key, s));
    return out;
  }
  std::vector<std::uint64_t> counts(const std::string& key) const {
    std::vector<std::uint64_t> out;
    for (const auto& s : split_list(text(key))) out.push_back(parse_count(key, s));
    return out;
  }

  std::string echo() const {
    std::string out = "# resolved configuration\n";
    for (const auto& k : schema()) out += std::string(k.key) + " = " + values_.at(k.key) + "\n";
    return out;
  }

  json to_json() const {
    json j = json::object();
    for (const auto& k : schema()) j[k.key] = values_.at(k.key);
    return j;
  }

 private:
  static void check(const KeySpec& spec, const std::string& value) {
    switch (spec.type) {
      case KeyType::text: break;
      case KeyType::boolean: parse_bool(spec.key, value); break;
      case KeyType::count: parse_count(spec.key, value); break;
      case KeyType::real: parse_real(spec.key, value); break;
      case KeyType::reals:
        for (const auto& s : split_list(value)) parse_real(spec.key, s);
        break;
      case KeyType::counts:
        for (const auto& s : split_list(value)) parse_count(spec.key, s);
        break;
    }
  }

  std::map<std::string, std::string> values_;
};

ModelConfig model_config(const Settings& s) {
  ModelConfig c;
  c.kind = parse_model_kind(s.text("model.kind"));
  c.feature_width = s.count("model.features");
  c.n_layers = s.count("model.layers");
  c.n_rbf = s.count("model.rbf");
  c.cutoff = s.real("model.cutoff");
  c.head_hidden = s.count("model.head_hidden");
  c.validate();
  return c;
}

PretrainConfig pretrain_config(const Settings& s) {
  PretrainConfig pc;
  pc.sigma = s.real("pretrain.sigma");
  pc.epochs = s.count("pretrain.epochs");
  pc.batch_size = s.count("pretrain.batch_size");
  pc.lr_max = s.real("pretrain.lr");
  pc.warmup_fraction = s.real("pretrain.warmup_fraction");
  pc.weight_decay = s.real("pretrain.weight_decay");
  pc.seed = s.u64("seed");
  pc.validate();
  return pc;
}

FinetuneConfig finetune_config(const Settings& s) {
  FinetuneConfig fc;
  fc.epochs = s.count("finetune.epochs");
  fc.batch_size = s.count("finetune.batch_size");
  fc.lr_max = s.real("finetune.lr");
  fc.warmup_fraction = s.real("finetune.warmup_fraction");
  fc.weight_decay = s.real("finetune.weight_decay");
  fc.seed = s.u64("seed");
  fc.validate();
  return fc;
}

std::vector<std::uint64_t> sweep_seeds(const Settings& s) {
  auto seeds = s.counts("seeds");
  if (seeds.empty()) {
    const std::uint64_t base = s.u64("seed");
    seeds = {base, base + 1, base + 2};
  }
  std::sort(seeds.begin(), seeds.end());
  seeds.erase(std::unique(seeds.begin(), seeds.end()), seeds.end());
  return seeds;
}

std::vector<double> sorted_unique(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  return v;
}

std::string require_path(const Settings& s, const std::string& key, const std::string& flag) {
  const std::string& p = s.text(key);
  if (p.empty()) throw ConfigError(flag + " is required");
  return p;
}

std::vector<Conformation> load_dataset(const Settings& s, const std::string& key, const std::string& flag) {
  const fs::path path = require_path(s, key, flag);
  if (!fs::exists(path)) throw ConfigError("dataset " + path.string() + " does not exist");
  auto data = read_xyz_file(path);
  if (data.empty()) throw DataError("dataset " + path.string() + " has no conformations");
  return data;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot write " + path.string());
  f << text;
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

// Creates the run directory and echoes the resolved settings into it.
fs::path prepare_out(const Settings& s, bool force, bool required) {
  const std::string& out = s.text("out");
  if (out.empty()) {
    if (required) throw ConfigError("--out is required");
    return {};
  }
  const fs::path dir(out);
  if (fs::exists(dir)) {
    if (!fs::is_directory(dir)) throw ConfigError(out + " exists and is not a directory");
    if (!fs::is_empty(dir) && !force) {
      throw ConfigError("output directory " + out + " is not empty (use --force to overwrite)");
    }
  }
  fs::create_directories(dir);
  write_text(dir / "config.txt", s.echo());
  return dir;
}

json model_json(const ModelConfig& c) {
  return {{"kind", model_kind_name(c.kind)}, {"features", c.feature_width}, {"layers", c.n_layers},
          {"rbf", c.n_rbf},                   {"cutoff", c.cutoff},         {"head_hidden", c.head_hidden}};
}

int cmd_gen_data(const Settings& s, bool force, std::ostream& out) {
  const std::string kind = s.text("data.potential");
  const std::size_t molecules = s.count("data.molecules");
  const std::size_t confs = s.count("data.confs");
  if (molecules == 0) throw ConfigError("--molecules must be at least 1");
  if (confs == 0) throw ConfigError("--confs must be at least 1");
  if (kind != "lj" && kind != "morse" && kind != "well") {
    throw ConfigError("unknown potential '" + kind + "' (expected lj, morse or well)");
  }
  SamplingSpec spec;
  spec.n_molecules = molecules;
  spec.conformations_per_molecule = confs;
  spec.displacement_std = s.real("data.displacement");
  spec.min_atoms = s.count("data.min_atoms");
  spec.max_atoms = s.count("data.max_atoms");
  spec.seed = s.u64("seed");
  if (kind != "well") spec.validate();
  const HarmonicWell well{1.2, s.real("data.tau"), 5.0};
  if (kind == "well" && !(well.tau > 0.0)) throw ConfigError("--tau must be positive");

  const fs::path dir = prepare_out(s, force, true);
  json manifest;
  std::vector<Conformation> data;
  if (kind == "well") {
    Rng rng = make_rng(spec.seed, {0x3e11u});
    data = harmonic_well_dataset(well, molecules * confs, rng);
    manifest["potential"] = {{"kind", "harmonic_well"},
                             {"d0", well.d0},
                             {"tau", well.tau},
                             {"stiffness", 1.0 / (2.0 * well.tau * well.tau)},
                             {"box", well.box}};
  } else {
    const OraclePotential pot = kind == "lj" ? OraclePotential::lennard_jones(1.0, 1.35)
                                             : OraclePotential::morse(1.0, 2.0, 1.5);
    data = sample_dataset(pot, spec);
    if (kind == "lj") {
      manifest["potential"] = {{"kind", "lennard_jones"}, {"epsilon", pot.lj_epsilon}, {"sigma", pot.lj_sigma}};
    } else {
      manifest["potential"] = {{"kind", "morse"},
                               {"depth", pot.morse_depth},
                               {"width", pot.morse_width},
                               {"r0", pot.morse_r0}};
    }
  }
  manifest["sampling"] = {{"molecules", molecules},
                      {"conformations_per_molecule", confs},
                      {"displacement_std", spec.displacement_std},
                      {"min_atoms", spec.min_atoms},
                      {"max_atoms", spec.max_atoms},
                      {"max_steps", spec.max_steps},
                      {"tolerance", spec.tolerance},
                      {"seed", spec.seed}};
  manifest["units"] = {{"length", "angstrom"}, {"energy", "kcal/mol"}};
  manifest["file"] = "dataset.xyz";
  manifest["n_conformations"] = data.size();
  write_xyz_file(dir / "dataset.xyz", data);
  write_json(dir / "manifest.json", manifest);
  out << "wrote " << data.size() << " conformations to " << (dir / "dataset.xyz").string() << "\n";
  return kOk;
}

int cmd_pretrain(const Settings& s, bool force, std::ostream& out, std::ostream& err) {
  const ModelConfig cfg = model_config(s);
  const PretrainConfig pc = pretrain_config(s);
  const auto data = load_dataset(s, "data", "--data");
  const fs::path dir = prepare_out(s, force, true);

  Rng init = make_rng(pc.seed, {0x9e7u});
  const auto res = run_pretraining(cfg, init_parameters(cfg, init), data, pc);
  save_checkpoint(res.params, cfg, dir / "checkpoint.bin");
  res.metrics.write_csv(dir / "metrics.csv");

  json warnings = json::array();
  if (pc.sigma == 0.0) {
    warnings.push_back("sigma = 0: degenerate noise, the denoising target is identically zero");
    err << "warning: sigma = 0 gives a degenerate denoising objective\n";
  }
  json summary = {{"command", "pretrain"},
                  {"best_epoch", res.best_epoch},
                  {"best_val_loss", std::isfinite(res.best_val_loss) ? json(res.best_val_loss) : json(nullptr)},
                  {"n_train", res.n_train},
                  {"n_val", res.n_val},
                  {"sigma", pc.sigma},
                  {"model", model_json(cfg)},
                  {"warnings", warnings},
                  {"config", s.to_json()}};
  write_json(dir / "summary.json", summary);
  out << "pretrained " << res.n_train << " conformations, best epoch " << res.best_epoch
      << ", validation loss " << format_double(res.best_val_loss) << "\n";
  return kOk;
}

int cmd_finetune(const Settings& s, bool force, std::ostream& out) {
  const bool scratch = s.flag("from_scratch");
  const std::string pretrained = s.text("pretrained");
  if (scratch && !pretrained.empty()) throw ConfigError("--pretrained and --from-scratch are mutually exclusive");
  if (!scratch && pretrained.empty()) throw ConfigError("one of --pretrained or --from-scratch is required");
  const ModelConfig cfg = model_config(s);
  const FinetuneConfig fc = finetune_config(s);
  const auto data = load_dataset(s, "data", "--data");

  std::optional<Checkpoint> ck;
  if (!pretrained.empty()) ck = load_checkpoint(pretrained);
  const ModelParameters init = finetune_start(ck ? &*ck : nullptr, cfg, fc.seed);
  const fs::path dir = prepare_out(s, force, true);

  const auto res = run_finetune(cfg, init, data, fc);
  save_checkpoint(res.params, cfg, dir / "checkpoint.bin");
  res.metrics.write_csv(dir / "metrics.csv");
  json summary = {{"command", "finetune"},
                  {"variant", scratch ? "scratch" : "pretrained"},
                  {"test_rmse_kcal_mol", res.test ? json(res.test->rmse) : json(nullptr)},
                  {"test_mae_kcal_mol", res.test ? json(res.test->mae) : json(nullptr)},
                  {"best_epoch", res.best_epoch},
                  {"best_val_mae_kcal_mol", std::isfinite(res.best_val_mae) ? json(res.best_val_mae) : json(nullptr)},
                  {"n_train", res.n_train},
                  {"n_val", res.n_val},
                  {"n_test", res.n_test},
                  {"model", model_json(cfg)},
                  {"config", s.to_json()}};
  write_json(dir / "summary.json", summary);
  out << "fine-tuned (" << (scratch ? "scratch" : "pretrained") << "), best epoch " << res.best_epoch;
  if (res.test) out << ", test RMSE " << format_double(res.test->rmse) << " MAE " << format_double(res.test->mae);
  out << " kcal/mol\n";
  return kOk;
}

int cmd_eval(const Settings& s, bool force, std::ostream& out) {
  const Checkpoint ck = load_checkpoint(require_path(s, "checkpoint", "--checkpoint"));
  const auto data = load_dataset(s, "data", "--data");
  const fs::path dir = prepare_out(s, force, false);
  const EvalResult r = evaluate(ck.config, ck.params, data);
  out << "rmse_kcal_mol " << format_double(r.rmse) << "\nmae_kcal_mol " << format_double(r.mae) << "\n";
  if (!dir.empty()) {
    json summary = {{"command", "eval"}, {"n", data.size()}, {"rmse_kcal_mol", r.rmse}, {"mae_kcal_mol", r.mae},
                    {"model", model_json(ck.config)}, {"config", s.to_json()}};
    write_json(dir / "summary.json", summary);
  }
  return kOk;
}

// Property checks on a model.

struct Rotation {
  double m[3][3];
};

Rotation random_rotation(Rng& rng, bool reflect) {
  std::normal_distribution<double> n(0.0, 1.0);
  double q[4] = {n(rng), n(rng), n(rng), n(rng)};
  const double len = std::sqrt(q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]);
  for (double& v : q) v /= len;
  const double w = q[0], x = q[1], y = q[2], z = q[3];
  Rotation r{{{1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)},
              {2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)},
              {2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)}}};
  if (reflect) {
    for (auto& row : r.m) row[2] = -row[2];
  }
  return r;
}

Array apply(const Rotation& r, const Array& x, const double* t = nullptr) {
  Array out(x.rows, 3);
  for (std::size_t i = 0; i < x.rows; ++i) {
    for (int a = 0; a < 3; ++a) {
      double v = t ? t[a] : 0.0;
      for (int b = 0; b < 3; ++b) v += r.m[a][b] * x(i, b);
      out(i, a) = v;
    }
  }
  return out;
}

double max_abs_diff(const Array& a, const Array& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = std::abs(a.data[i] - b.data[i]);
    if (!(d <= m)) m = d;  // NaN sticks
  }
  return m;
}

Conformation random_molecule(Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 2.8);
  const std::size_t n = 2 + rng() % 15;
  static const int kSpecies[] = {1, 6, 7, 8};
  Conformation c;
  c.coords = Array(n, 3);
  for (std::size_t i = 0; i < n; ++i) {
    c.species.push_back(kSpecies[rng() % 4]);
    for (int attempt = 0; attempt < 1000; ++attempt) {
      for (int a = 0; a < 3; ++a) c.coords(i, a) = u(rng);
      bool ok = true;
      for (std::size_t j = 0; j < i && ok; ++j) {
        double d2 = 0.0;
        for (int a = 0; a < 3; ++a) d2 += std::pow(c.coords(i, a) - c.coords(j, a), 2);
        ok = d2 > 0.49;
      }
      if (ok) break;
    }
  }
  return c;
}

struct CheckLine {
  std::string name;
  double value;
  double tolerance;
  bool pass() const { return value <= tolerance; }
};

std::vector<CheckLine> property_checks(const ModelConfig& cfg, const ModelParameters& params, std::uint64_t seed) {
  Rng rng = make_rng(seed, {0xc4ecu});
  double rot = 0.0, refl = 0.0, trans = 0.0, perm = 0.0, noise = 0.0, noise_perm = 0.0, grad = 0.0;
  auto worse = [](double& acc, double v) {
    if (!(v <= acc)) acc = v;
  };
  for (int trial = 0; trial < 100; ++trial) {
    Conformation c = random_molecule(rng);
    const double e = predict_energy(cfg, params, c);
    const Array eps = predict_noise(cfg, params, c);
    const Rotation r = random_rotation(rng, false);
    const Rotation f = random_rotation(rng, true);
    std::uniform_real_distribution<double> shift(-10.0, 10.0);
    const double t[3] = {shift(rng), shift(rng), shift(rng)};
    const Rotation id{{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}};

    Conformation m = c;
    m.coords = apply(r, c.coords);
    worse(rot, std::abs(predict_energy(cfg, params, m) - e));
    m.coords = apply(f, c.coords);
    worse(refl, std::abs(predict_energy(cfg, params, m) - e));
    m.coords = apply(id, c.coords, t);
    worse(trans, std::abs(predict_energy(cfg, params, m) - e));
    m.coords = apply(r, c.coords, t);
    worse(noise, max_abs_diff(predict_noise(cfg, params, m), apply(r, eps)));

    std::vector<std::size_t> order(c.size());
    std::iota(order.begin(), order.end(), 0);
    shuffle_indices(order, rng);
    Conformation p = c;
    Array permuted_eps(c.size(), 3);
    for (std::size_t i = 0; i < c.size(); ++i) {
      p.species[i] = c.species[order[i]];
      for (int a = 0; a < 3; ++a) {
        p.coords(i, a) = c.coords(order[i], a);
        permuted_eps(i, a) = eps(order[i], a);
      }
    }
    worse(perm, std::abs(predict_energy(cfg, params, p) - e));
    worse(noise_perm, max_abs_diff(predict_noise(cfg, params, p), permuted_eps));

    if (trial < 10) {
      const Array g = predict_energy_gradient(cfg, params, c);
      Array fd(c.size(), 3);
      const double h = 1e-5;
      for (std::size_t i = 0; i < c.coords.size(); ++i) {
        Conformation q = c;
        q.coords.data[i] += h;
        const double ep = predict_energy(cfg, params, q);
        q.coords.data[i] -= 2 * h;
        const double em = predict_energy(cfg, params, q);
        fd.data[i] = (ep - em) / (2 * h);
      }
      double scale = 0.0;
      for (double v : fd.data) scale = std::max(scale, std::abs(v));
      worse(grad, max_abs_diff(g, fd) / std::max(scale, 1e-12));
    }
  }
  return {{"energy_rotation_max_abs_dE", rot, 1e-9},
          {"energy_reflection_max_abs_dE", refl, 1e-9},
          {"energy_translation_max_abs_dE", trans, 1e-9},
          {"energy_permutation_max_abs_dE", perm, 1e-9},
          {"noise_rigid_motion_max_dev", noise, 1e-8},
          {"noise_permutation_max_dev", noise_perm, 1e-8},
          {"energy_gradient_rel_err", grad, 1e-5}};
}

int cmd_check(const Settings& s, bool force, std::ostream& out) {
  ModelConfig cfg;
  ModelParameters params;
  const std::string path = s.text("checkpoint");
  if (!path.empty()) {
    Checkpoint ck = load_checkpoint(path);
    cfg = ck.config;
    params = std::move(ck.params);
  } else {
    cfg = model_config(s);
    Rng init = make_rng(s.u64("seed"), {0x9e7u});
    params = init_parameters(cfg, init);
  }
  if (s.flag("corrupt")) {
    // Fault injection for the test harness.
    params.at("head.l2.b").data[0] = std::numeric_limits<double>::quiet_NaN();
  }
  const fs::path dir = prepare_out(s, force, false);
  const auto lines = property_checks(cfg, params, s.u64("seed"));
  std::ostringstream report;
  report << "model " << model_kind_name(cfg.kind) << " F=" << cfg.feature_width << " T=" << cfg.n_layers
         << (path.empty() ? " (random init)" : " (" + path + ")") << "\n";
  bool all = true;
  for (const auto& l : lines) {
    report << (l.pass() ? "PASS " : "FAIL ") << l.name << " = " << format_double(l.value)
           << " (tolerance " << l.tolerance << ")\n";
    all = all && l.pass();
  }
  out << report.str();
  if (!dir.empty()) write_text(dir / "report.txt", report.str());
  return all ? kOk : kCheckFailed;
}

int cmd_ablate_sigma(const Settings& s, bool force, std::ostream& out) {
  const ModelConfig cfg = model_config(s);
  PretrainConfig pc = pretrain_config(s);
  const FinetuneConfig base = finetune_config(s);
  const auto sigmas = sorted_unique(s.reals("ablate.sigmas"));
  if (sigmas.empty()) throw ConfigError("--sigmas needs at least one value");
  for (double v : sigmas) {
    if (v < 0.0) throw ConfigError("sigma values must be non-negative");
  }
  const auto seeds = sweep_seeds(s);
  const auto pre = load_dataset(s, "pretrain_data", "--pretrain-data");
  const auto data = load_dataset(s, "data", "--data");
  const fs::path dir = prepare_out(s, force, true);

  std::string csv = "sigma,seed,test_rmse,test_mae\n";
  json per_sigma = json::array();
  for (double sigma : sigmas) {
    std::optional<Checkpoint> ck;
    if (sigma > 0.0) {
      pc.sigma = sigma;
      Rng init = make_rng(pc.seed, {0x9e7u});
      ck = Checkpoint{cfg, run_pretraining(cfg, init_parameters(cfg, init), pre, pc).params};
    }
    double mae = 0.0, rmse = 0.0;
    for (std::uint64_t seed : seeds) {
      FinetuneConfig fc = base;
      fc.seed = seed;
      const auto res = run_finetune(cfg, finetune_start(ck ? &*ck : nullptr, cfg, seed), data, fc);
      if (!res.test) throw DataError("fine-tuning dataset leaves an empty test split");
      csv += format_double(sigma) + "," + std::to_string(seed) + "," + format_double(res.test->rmse) + "," +
             format_double(res.test->mae) + "\n";
      mae += res.test->mae;
      rmse += res.test->rmse;
    }
    const double n = static_cast<double>(seeds.size());
    per_sigma.push_back({{"sigma", sigma}, {"mean_test_mae", mae / n}, {"mean_test_rmse", rmse / n}});
    out << "sigma " << format_double(sigma) << ": mean test MAE " << format_double(mae / n) << " kcal/mol\n";
  }
  write_text(dir / "sigma_ablation.csv", csv);
  write_json(dir / "summary.json", {{"command", "ablate-sigma"}, {"results", per_sigma}, {"config", s.to_json()}});
  return kOk;
}

int cmd_sweep_data(const Settings& s, bool force, std::ostream& out) {
  const ModelConfig cfg = model_config(s);
  const FinetuneConfig fc = finetune_config(s);
  const auto fractions = sorted_unique(s.reals("sweep.fractions"));
  const auto seeds = sweep_seeds(s);
  const Checkpoint ck = load_checkpoint(require_path(s, "pretrained", "--pretrained"));
  const auto data = load_dataset(s, "data", "--data");
  const fs::path dir = prepare_out(s, force, true);

  const auto rows = data_efficiency_sweep(ck, cfg, data, fractions, seeds, fc);
  write_text(dir / "data_efficiency.csv", sweep_csv(rows));
  json results = json::array();
  for (double f : fractions) {
    double pre = 0.0, scratch = 0.0;
    for (const auto& r : rows) {
      if (r.fraction != f) continue;
      (r.variant == "pretrained" ? pre : scratch) += r.test_mae;
    }
    const double n = static_cast<double>(seeds.size());
    results.push_back({{"fraction", f}, {"pretrained_mean_test_mae", pre / n}, {"scratch_mean_test_mae", scratch / n}});
    out << "fraction " << format_double(f) << ": pretrained " << format_double(pre / n) << ", scratch "
        << format_double(scratch / n) << " kcal/mol\n";
  }
  write_json(dir / "summary.json", {{"command", "sweep-data"}, {"results", results}, {"config", s.to_json()}});
  return kOk;
}

// Flag -> key bindings of one subcommand.
struct Bindings {
  std::deque<std::string> storage;
  std::vector<std::pair<std::string, CLI::Option*>> options;
  std::vector<std::pair<std::string, CLI::Option*>> flags;

  void option(CLI::App* app, const std::string& name, const std::string& key, const std::string& help) {
    storage.emplace_back();
    options.emplace_back(key, app->add_option(name, storage.back(), help));
  }
  void flag(CLI::App* app, const std::string& name, const std::string& key, const std::string& help) {
    flags.emplace_back(key, app->add_flag(name, help));
  }
  void apply(Settings& s) const {
    std::size_t i = 0;
    for (const auto& [key, opt] : options) {
      const std::string& value = storage[i++];
      if (opt->count() > 0) s.set(key, value);
    }
    for (const auto& [key, opt] : flags) {
      if (opt->count() > 0) s.set(key, "true");
    }
  }
};

void model_flags(CLI::App* app, Bindings& b) {
  b.option(app, "--kind", "model.kind", "invariant or equivariant");
  b.option(app, "--features", "model.features", "feature width F");
  b.option(app, "--layers", "model.layers", "message-passing layers T");
  b.option(app, "--rbf", "model.rbf", "radial basis functions");
  b.option(app, "--cutoff", "model.cutoff", "neighbor cutoff (Angstrom)");
  b.option(app, "--head-hidden", "model.head_hidden", "hidden width of the energy head");
}

void pretrain_flags(CLI::App* app, Bindings& b, const std::string& prefix) {
  b.option(app, "--sigma", "pretrain.sigma", "noise scale (Angstrom)");
  b.option(app, "--" + prefix + "epochs", "pretrain.epochs", "pretraining epochs");
  b.option(app, "--" + prefix + "batch-size", "pretrain.batch_size", "pretraining batch size");
  b.option(app, "--" + prefix + "lr", "pretrain.lr", "pretraining peak learning rate");
  b.option(app, "--" + prefix + "warmup", "pretrain.warmup_fraction", "pretraining warmup fraction");
  b.option(app, "--" + prefix + "weight-decay", "pretrain.weight_decay", "pretraining weight decay");
}

void finetune_flags(CLI::App* app, Bindings& b) {
  b.option(app, "--epochs", "finetune.epochs", "fine-tuning epochs");
  b.option(app, "--batch-size", "finetune.batch_size", "fine-tuning batch size");
  b.option(app, "--lr", "finetune.lr", "fine-tuning peak learning rate");
  b.option(app, "--warmup", "finetune.warmup_fraction", "fine-tuning warmup fraction");
  b.option(app, "--weight-decay", "finetune.weight_decay", "fine-tuning weight decay");
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Denoise pretraining of graph neural network potentials", "dnp"};
  app.require_subcommand(1);

  struct Verb {
    CLI::App* app;
    Bindings bindings;
    std::string config;
    bool force = false;
  };
  std::map<std::string, Verb> verbs;
  auto add_verb = [&](const std::string& name, const std::string& help) -> Verb& {
    Verb& v = verbs[name];
    v.app = app.add_subcommand(name, help);
    v.app->add_option("--config", v.config, "key = value configuration file");
    v.app->add_flag("--force", v.force, "write into a non-empty output directory");
    v.bindings.option(v.app, "--out", "out", "output directory");
    v.bindings.option(v.app, "--seed", "seed", "random seed");
    v.bindings.option(v.app, "--threads", "threads", "OpenMP threads (0 = default)");
    return v;
  };

  {
    Verb& v = add_verb("gen-data", "sample a synthetic dataset from an oracle potential");
    v.bindings.option(v.app, "--potential", "data.potential", "lj, morse or well");
    v.bindings.option(v.app, "--molecules", "data.molecules", "number of molecules");
    v.bindings.option(v.app, "--confs", "data.confs", "conformations per molecule");
    v.bindings.option(v.app, "--displacement", "data.displacement", "displacement std (Angstrom)");
    v.bindings.option(v.app, "--min-atoms", "data.min_atoms", "smallest cluster");
    v.bindings.option(v.app, "--max-atoms", "data.max_atoms", "largest cluster");
    v.bindings.option(v.app, "--tau", "data.tau", "bond-length std of the harmonic well");
  }
  {
    Verb& v = add_verb("pretrain", "denoise pretraining");
    v.bindings.option(v.app, "--data", "data", "extended-XYZ dataset");
    model_flags(v.app, v.bindings);
    pretrain_flags(v.app, v.bindings, "");
  }
  {
    Verb& v = add_verb("finetune", "supervised energy fine-tuning");
    v.bindings.option(v.app, "--data", "data", "extended-XYZ dataset with energies");
    v.bindings.option(v.app, "--pretrained", "pretrained", "pretrained checkpoint");
    v.bindings.flag(v.app, "--from-scratch", "from_scratch", "start from random initialization");
    model_flags(v.app, v.bindings);
    finetune_flags(v.app, v.bindings);
  }
  {
    Verb& v = add_verb("eval", "energy RMSE and MAE of a checkpoint");
    v.bindings.option(v.app, "--checkpoint", "checkpoint", "checkpoint to evaluate");
    v.bindings.option(v.app, "--data", "data", "extended-XYZ dataset with energies");
  }
  {
    Verb& v = add_verb("check", "invariance, equivariance and gradient checks");
    v.bindings.option(v.app, "--checkpoint", "checkpoint", "checkpoint (random init when absent)");
    v.bindings.flag(v.app, "--corrupt", "corrupt", "inject a non-finite parameter");
    model_flags(v.app, v.bindings);
  }
  {
    Verb& v = add_verb("ablate-sigma", "pretrain at several noise scales and fine-tune each");
    v.bindings.option(v.app, "--pretrain-data", "pretrain_data", "dataset for pretraining");
    v.bindings.option(v.app, "--data", "data", "dataset for fine-tuning");
    v.bindings.option(v.app, "--sigmas", "ablate.sigmas", "comma-separated noise scales");
    v.bindings.option(v.app, "--seeds", "seeds", "comma-separated fine-tuning seeds");
    model_flags(v.app, v.bindings);
    pretrain_flags(v.app, v.bindings, "pretrain-");
    finetune_flags(v.app, v.bindings);
  }
  {
    Verb& v = add_verb("sweep-data", "data-efficiency sweep, pretrained against scratch");
    v.bindings.option(v.app, "--pretrained", "pretrained", "pretrained checkpoint");
    v.bindings.option(v.app, "--data", "data", "dataset for fine-tuning");
    v.bindings.option(v.app, "--fractions", "sweep.fractions", "comma-separated training fractions");
    v.bindings.option(v.app, "--seeds", "seeds", "comma-separated fine-tuning seeds");
    model_flags(v.app, v.bindings);
    finetune_flags(v.app, v.bindings);
  }

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    for (auto& [name, verb] : verbs) {
      if (!verb.app->parsed()) continue;
      Settings s;
      if (!verb.config.empty()) s.load_file(verb.config);
      verb.bindings.apply(s);
      if (const std::size_t threads = s.count("threads"); threads > 0) {
        omp_set_num_threads(static_cast<int>(threads));
      }
      if (name == "gen-data") return cmd_gen_data(s, verb.force, out);
      if (name == "pretrain") return cmd_pretrain(s, verb.force, out, err);
      if (name == "finetune") return cmd_finetune(s, verb.force, out);
      if (name == "eval") return cmd_eval(s, verb.force, out);
      if (name == "check") return cmd_check(s, verb.force, out);
      if (name == "ablate-sigma") return cmd_ablate_sigma(s, verb.force, out);
      if (name == "sweep-data") return cmd_sweep_data(s, verb.force, out);
    }
  } catch (const DivergenceError& e) {
    err << "error: " << e.what() << "\n";
    return kDiverged;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  }
  return kUsage;
}

}  // namespace dnp::cli

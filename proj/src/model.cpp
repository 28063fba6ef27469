#include "dnp/model.hpp"

#include <cmath>
#include <exception>
#include <string>

namespace dnp {

const char* model_kind_name(ModelKind kind) {
  return kind == ModelKind::invariant ? "invariant" : "equivariant";
}

ModelKind parse_model_kind(std::string_view name) {
  if (name == "invariant") return ModelKind::invariant;
  if (name == "equivariant") return ModelKind::equivariant;
  throw ConfigError("unknown model kind '" + std::string(name) + "'");
}

void ModelConfig::validate() const {
  if (feature_width == 0 || n_layers == 0 || n_rbf == 0 || head_hidden == 0) {
    throw ConfigError("model sizes must all be at least 1");
  }
  if (kind == ModelKind::invariant && n_rbf < 2) {
    throw ConfigError("the invariant model needs n_rbf >= 2");
  }
  if (!(cutoff > 0.0) || !std::isfinite(cutoff)) throw ConfigError("cutoff must be positive");
}

const Array& ModelParameters::at(const std::string& name) const {
  auto it = arrays.find(name);
  if (it == arrays.end()) throw Error("no parameter named '" + name + "'");
  return it->second;
}

Array& ModelParameters::at(const std::string& name) {
  auto it = arrays.find(name);
  if (it == arrays.end()) throw Error("no parameter named '" + name + "'");
  return it->second;
}

std::size_t ModelParameters::count() const {
  std::size_t n = 0;
  for (const auto& [_, a] : arrays) n += a.size();
  return n;
}

namespace {

void add_dense(ParameterMap& p, const std::string& prefix, std::size_t in, std::size_t out,
               Rng& rng, bool bias = true) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  std::uniform_real_distribution<double> u(-bound, bound);
  Array w(in, out);
  for (double& v : w.data) v = u(rng);
  p[prefix + ".w"] = std::move(w);
  if (bias) p[prefix + ".b"] = Array(1, out, 0.0);
}

std::string layer(std::size_t t) { return "layer" + std::to_string(t); }

}  // namespace

ParameterMap init_head(const ModelConfig& config, Rng& rng) {
  ParameterMap p;
  add_dense(p, "head.l1", config.feature_width, config.head_hidden, rng);
  add_dense(p, "head.l2", config.head_hidden, 1, rng);
  return p;
}

ModelParameters init_parameters(const ModelConfig& config, Rng& rng) {
  config.validate();
  const std::size_t f = config.feature_width;
  ModelParameters params;
  ParameterMap& p = params.arrays;

  Array emb(kMaxAtomicNumber + 1, f);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (double& v : emb.data) v = normal(rng);
  p["embedding"] = std::move(emb);

  for (std::size_t t = 0; t < config.n_layers; ++t) {
    const std::string l = layer(t);
    if (config.kind == ModelKind::invariant) {
      add_dense(p, l + ".filter1", config.n_rbf, f, rng);
      add_dense(p, l + ".filter2", f, f, rng);
      add_dense(p, l + ".in", f, f, rng, false);
      add_dense(p, l + ".update1", f, f, rng);
      add_dense(p, l + ".update2", f, f, rng);
    } else {
      add_dense(p, l + ".message1", 2 * f + 1, f, rng);
      add_dense(p, l + ".message2", f, f, rng);
      add_dense(p, l + ".coord1", f, f, rng);
      add_dense(p, l + ".coord2", f, 1, rng, false);
      add_dense(p, l + ".update1", 2 * f, f, rng);
      add_dense(p, l + ".update2", f, f, rng);
    }
  }
  for (auto& [name, a] : init_head(config, rng)) p[name] = std::move(a);
  return params;
}

void validate_parameters(const ModelConfig& config, const ModelParameters& params) {
  Rng rng(0);
  const ModelParameters expected = init_parameters(config, rng);
  for (const auto& [name, a] : expected.arrays) {
    auto it = params.arrays.find(name);
    if (it == params.arrays.end()) throw Error("missing parameter '" + name + "'");
    if (!it->second.same_shape(a)) {
      throw Error("parameter '" + name + "' has shape " + it->second.shape_str() + ", expected " +
                  a.shape_str());
    }
  }
  for (const auto& [name, a] : params.arrays) {
    if (!expected.arrays.contains(name)) throw Error("unexpected parameter '" + name + "'");
    for (double v : a.data) {
      if (!std::isfinite(v)) throw Error("parameter '" + name + "' has a non-finite value");
    }
  }
}

GraphBatch make_batch(std::span<const Conformation> confs, std::span<const MolecularGraph> graphs) {
  if (confs.size() != graphs.size()) throw ShapeError("make_batch: conformation/graph count mismatch");
  GraphBatch b;
  b.n_mols = confs.size();
  std::vector<std::size_t> species, src, dst, atom_mol;
  std::size_t n_atoms = 0;
  for (const auto& c : confs) n_atoms += c.size();
  b.coords = Array(n_atoms, 3);
  b.atom_offset.push_back(0);
  std::size_t off = 0;
  for (std::size_t m = 0; m < confs.size(); ++m) {
    const Conformation& c = confs[m];
    const MolecularGraph& g = graphs[m];
    if (g.n_atoms != c.size()) throw ShapeError("make_batch: graph does not match conformation");
    for (std::size_t a = 0; a < c.size(); ++a) {
      const int z = c.species[a];
      if (!is_supported_element(z)) {
        throw UnknownElementError("atomic number " + std::to_string(z) + " has no embedding");
      }
      species.push_back(static_cast<std::size_t>(z));
      atom_mol.push_back(m);
      for (std::size_t k = 0; k < 3; ++k) b.coords(off + a, k) = c.coords(a, k);
    }
    for (std::size_t e = 0; e < g.n_edges(); ++e) {
      src.push_back(off + g.src[e]);
      dst.push_back(off + g.dst[e]);
    }
    off += c.size();
    b.atom_offset.push_back(off);
  }
  b.n_atoms = n_atoms;
  b.species = ad::make_index(std::move(species));
  b.src = ad::make_index(std::move(src));
  b.dst = ad::make_index(std::move(dst));
  b.atom_mol = ad::make_index(std::move(atom_mol));
  return b;
}

GraphBatch make_batch(const Conformation& conf, const MolecularGraph& graph) {
  return make_batch(std::span<const Conformation>(&conf, 1),
                    std::span<const MolecularGraph>(&graph, 1));
}

BoundParameters::BoundParameters(ad::Tape& tape, const ModelParameters& params,
                                 bool requires_grad) {
  for (const auto& [name, a] : params.arrays) {
    lookup_[name] = names_.size();
    names_.push_back(name);
    values_.push_back(tape.leaf(a, requires_grad));
  }
}

ad::Value BoundParameters::operator[](const std::string& name) const {
  auto it = lookup_.find(name);
  if (it == lookup_.end()) throw Error("model parameter '" + name + "' is missing");
  return values_[it->second];
}

namespace {

using ad::Value;

// Row-broadcast of a 1 x n value to rows x n.
Value expand_rows(Value row, std::size_t rows) {
  return ad::matmul(row.tape()->ones(rows, 1), row);
}

// Column-broadcast of a rows x 1 value to rows x n.
Value expand_cols(Value col, std::size_t cols) {
  return ad::matmul(col, col.tape()->ones(1, cols));
}

Value dense(const BoundParameters& p, const std::string& prefix, Value x, bool bias = true) {
  Value y = ad::matmul(x, p[prefix + ".w"]);
  if (bias) y = y + expand_rows(p[prefix + ".b"], x.rows());
  return y;
}

Value mlp2(const BoundParameters& p, const std::string& prefix, Value x) {
  return dense(p, prefix + "2", ad::ssp(dense(p, prefix + "1", x)));
}

Value energy_head(const BoundParameters& p, const GraphBatch& batch, Value h) {
  Value pooled = ad::segment_sum(h, batch.atom_mol, batch.n_mols);
  return dense(p, "head.l2", ad::ssp(dense(p, "head.l1", pooled)));
}

Value squared_lengths(Value r) {
  return ad::matmul(ad::square(r), r.tape()->ones(3, 1));
}

// 1 - 10u^3 + 15u^4 - 6u^5 with u = d / cutoff: one at d = 0, zero with zero
// first and second derivatives at the cutoff.
Value cutoff_envelope(Value d, double cutoff) {
  Value u = d * (1.0 / cutoff);
  Value inner = (u * -6.0 + 15.0) * u + (-10.0);
  return (ad::square(u) * u) * inner + 1.0;
}


void check_coords(const GraphBatch& batch, Value coords) {
  if (coords.rows() != batch.n_atoms || coords.cols() != 3) {
    throw ShapeError("coordinates of shape " + coords.data().shape_str() + " for " +
                     std::to_string(batch.n_atoms) + " atoms");
  }
}

}  // namespace

EnergyOutput forward_invariant(const ModelConfig& config, const BoundParameters& p,
                               const GraphBatch& batch, Value coords) {
  check_coords(batch, coords);
  ad::Tape& tape = *coords.tape();
  const std::size_t e = batch.n_edges();
  const std::size_t f = config.feature_width;

  Value h = ad::gather_rows(p["embedding"], batch.species);
  Value r = ad::gather_rows(coords, batch.src) - ad::gather_rows(coords, batch.dst);
  Value d = ad::sqrt(squared_lengths(r));

  const RbfBasis basis = rbf_basis(config.n_rbf, config.cutoff);
  Array centers(e, config.n_rbf);
  for (std::size_t i = 0; i < e; ++i) {
    for (std::size_t k = 0; k < config.n_rbf; ++k) centers(i, k) = basis.centers[k];
  }
  Value shifted = expand_cols(d, config.n_rbf) - tape.constant(std::move(centers));
  Value rbf = ad::exp(ad::square(shifted) * -basis.gamma);
  Value envelope = expand_cols(cutoff_envelope(d, config.cutoff), f);

  for (std::size_t t = 0; t < config.n_layers; ++t) {
    const std::string l = layer(t);
    Value filter = mlp2(p, l + ".filter", rbf) * envelope;
    Value x = dense(p, l + ".in", h, false);
    Value msg = filter * ad::gather_rows(x, batch.dst);
    Value agg = ad::segment_sum(msg, batch.src, batch.n_atoms);
    h = h + mlp2(p, l + ".update", agg);
  }
  return {energy_head(p, batch, h), h, std::nullopt};
}

EnergyOutput forward_equivariant(const ModelConfig& config, const BoundParameters& p,
                                 const GraphBatch& batch, Value coords) {
  check_coords(batch, coords);
  Value h = ad::gather_rows(p["embedding"], batch.species);
  Value x = coords;
  for (std::size_t t = 0; t < config.n_layers; ++t) {
    const std::string l = layer(t);
    Value r = ad::gather_rows(x, batch.src) - ad::gather_rows(x, batch.dst);
    Value d2 = squared_lengths(r);
    Value edge_in = ad::concat_cols(
        {ad::gather_rows(h, batch.src), ad::gather_rows(h, batch.dst), d2});
    Value m = ad::ssp(mlp2(p, l + ".message", edge_in));

    Value s = dense(p, l + ".coord2", ad::ssp(dense(p, l + ".coord1", m)), false);
    Value dir = r / expand_cols(ad::sqrt(d2) + 1.0, 3);
    Value shift = ad::segment_sum(dir * expand_cols(s, 3), batch.src, batch.n_atoms);

    Value agg = ad::segment_sum(m, batch.src, batch.n_atoms);
    h = h + mlp2(p, l + ".update", ad::concat_cols({h, agg}));
    x = x + shift;
  }
  return {energy_head(p, batch, h), h, x};
}

EnergyOutput forward(const ModelConfig& config, const BoundParameters& params,
                     const GraphBatch& batch, Value coords) {
  return config.kind == ModelKind::invariant ? forward_invariant(config, params, batch, coords)
                                             : forward_equivariant(config, params, batch, coords);
}

Value predict_noise_gradient(const ModelConfig& config, const BoundParameters& params,
                             const GraphBatch& batch, Value coords) {
  if (!coords.requires_grad()) throw Error("gradient noise head needs coordinates that require grad");
  EnergyOutput out = forward(config, params, batch, coords);
  Value total = ad::sum(out.energy);
  const Value wrt[] = {coords};
  return -ad::backward(total, wrt, true)[0];
}

Value predict_noise_coordinate(const ModelConfig& config, const BoundParameters& params,
                               const GraphBatch& batch, Value coords) {
  if (config.kind != ModelKind::equivariant) {
    throw Error("coordinate noise head needs the equivariant model");
  }
  EnergyOutput out = forward_equivariant(config, params, batch, coords);
  return *out.final_coords - coords;
}

Value predict_noise(const ModelConfig& config, const BoundParameters& params,
                    const GraphBatch& batch, Value coords) {
  return config.kind == ModelKind::invariant ? predict_noise_gradient(config, params, batch, coords)
                                             : predict_noise_coordinate(config, params, batch, coords);
}

double predict_energy(const ModelConfig& config, const ModelParameters& params,
                      const Conformation& conf) {
  const MolecularGraph g = build_graph(conf, config.cutoff);
  const GraphBatch batch = make_batch(conf, g);
  ad::Tape tape;
  BoundParameters p(tape, params, false);
  Value x = tape.constant(batch.coords);
  return forward(config, p, batch, x).energy.item();
}

Array predict_energy_gradient(const ModelConfig& config, const ModelParameters& params,
                              const Conformation& conf) {
  const MolecularGraph g = build_graph(conf, config.cutoff);
  const GraphBatch batch = make_batch(conf, g);
  ad::Tape tape;
  BoundParameters p(tape, params, false);
  Value x = tape.leaf(batch.coords, true);
  Value e = ad::sum(forward(config, p, batch, x).energy);
  const Value wrt[] = {x};
  return ad::gradients(e, wrt)[0];
}

Array predict_noise(const ModelConfig& config, const ModelParameters& params,
                    const Conformation& perturbed) {
  const MolecularGraph g = build_graph(perturbed, config.cutoff);
  const GraphBatch batch = make_batch(perturbed, g);
  ad::Tape tape;
  BoundParameters p(tape, params, false);
  Value x = tape.leaf(batch.coords, config.kind == ModelKind::invariant);
  return predict_noise(config, p, batch, x).data();
}

std::vector<double> predict_energies(const ModelConfig& config, const ModelParameters& params,
                                     std::span<const Conformation> confs, std::size_t batch_size) {
  if (batch_size == 0) batch_size = 1;
  const std::size_t n_chunks = (confs.size() + batch_size - 1) / batch_size;
  std::vector<double> out(confs.size());
  std::vector<std::exception_ptr> errors(n_chunks);
  const auto nc = static_cast<std::ptrdiff_t>(n_chunks);
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t c = 0; c < nc; ++c) {
    try {
      const std::size_t b = static_cast<std::size_t>(c) * batch_size;
      const std::size_t e = std::min(confs.size(), b + batch_size);
      const auto chunk = confs.subspan(b, e - b);
      std::vector<MolecularGraph> graphs;
      graphs.reserve(chunk.size());
      for (const auto& conf : chunk) graphs.push_back(build_graph(conf, config.cutoff));
      const GraphBatch batch = make_batch(chunk, graphs);
      ad::Tape tape;
      BoundParameters p(tape, params, false);
      Value x = tape.constant(batch.coords);
      const Array& energy = forward(config, p, batch, x).energy.data();
      for (std::size_t i = 0; i < chunk.size(); ++i) out[b + i] = energy.data[i];
    } catch (...) {
      errors[static_cast<std::size_t>(c)] = std::current_exception();
    }
  }
  for (const auto& err : errors) {
    if (err) std::rethrow_exception(err);
  }
  return out;
}

}  // namespace dnp

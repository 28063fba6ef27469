#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dnp/autodiff.hpp"
#include "dnp/conformation.hpp"
#include "dnp/graph.hpp"
#include "dnp/rng.hpp"

namespace dnp {

enum class ModelKind { invariant, equivariant };

const char* model_kind_name(ModelKind kind);
ModelKind parse_model_kind(std::string_view name);

struct ModelConfig {
  ModelKind kind = ModelKind::invariant;
  std::size_t feature_width = 32;
  std::size_t n_layers = 3;
  std::size_t n_rbf = 16;
  double cutoff = 5.0;
  std::size_t head_hidden = 32;

  // Throws ConfigError on any zero size or non-positive cutoff.
  void validate() const;
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

// Named parameter arrays. Names are stable across save/load:
//   embedding            (kMaxAtomicNumber + 1) x F, row = atomic number
//   layer<t>.<block>.w   weight, fan_in x fan_out   (message-passing body)
//   layer<t>.<block>.b   bias, 1 x fan_out
//   head.l1.*, head.l2.* energy MLP
using ParameterMap = std::map<std::string, Array>;

struct ModelParameters {
  ParameterMap arrays;

  const Array& at(const std::string& name) const;
  Array& at(const std::string& name);
  std::size_t count() const;  // total number of scalars
  static bool is_head(const std::string& name) { return name.rfind("head.", 0) == 0; }
};

// Weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), biases zero, embedding rows
// ~ N(0, 1). Deterministic in the generator state.
ModelParameters init_parameters(const ModelConfig& config, Rng& rng);
// Throws Error unless params has exactly the names and shapes that
// init_parameters(config) produces and every value is finite.
void validate_parameters(const ModelConfig& config, const ModelParameters& params);

// Only the head.* arrays, initialized with the same rules.
ParameterMap init_head(const ModelConfig& config, Rng& rng);

// Several molecular graphs packed into one disjoint graph.
struct GraphBatch {
  std::size_t n_atoms = 0;
  std::size_t n_mols = 0;
  ad::IndexList species;   // per atom: atomic number (embedding row)
  ad::IndexList src;       // per edge
  ad::IndexList dst;       // per edge
  ad::IndexList atom_mol;  // per atom: molecule index within the batch
  std::vector<std::size_t> atom_offset;  // n_mols + 1 entries
  Array coords;            // n_atoms x 3

  std::size_t n_edges() const { return src->size(); }
};

// Packs conformations with their graphs (graph[i] must have been built on
// confs[i].coords). Throws UnknownElementError for species outside the table.
GraphBatch make_batch(std::span<const Conformation> confs, std::span<const MolecularGraph> graphs);
GraphBatch make_batch(const Conformation& conf, const MolecularGraph& graph);

// Parameters as tape leaves.
class BoundParameters {
 public:
  BoundParameters(ad::Tape& tape, const ModelParameters& params, bool requires_grad);
  ad::Value operator[](const std::string& name) const;
  const std::vector<std::string>& names() const { return names_; }
  const std::vector<ad::Value>& values() const { return values_; }

 private:
  std::vector<std::string> names_;
  std::vector<ad::Value> values_;
  std::map<std::string, std::size_t> lookup_;
};

struct EnergyOutput {
  ad::Value energy;                       // n_mols x 1, kcal/mol
  ad::Value node_features;                // n_atoms x F after T layers
  std::optional<ad::Value> final_coords;  // equivariant model only
};

// Invariant continuous-filter model: messages are a learned distance filter
// (Gaussian RBF -> MLP, times a smooth polynomial cutoff envelope) multiplied
// elementwise with transformed neighbor features; residual MLP update; sum
// pooling; MLP head. Geometry enters only through distances.
EnergyOutput forward_invariant(const ModelConfig& config, const BoundParameters& params,
                               const GraphBatch& batch, ad::Value coords);

// Equivariant coordinate-updating model: m_ij = MLP(h_i | h_j | d_ij^2),
// x_i += sum_j r_ij / (d_ij + 1) * s(m_ij), h_i += MLP(h_i | sum_j m_ij).
// The edge set stays fixed; distances are recomputed from updated coordinates.
EnergyOutput forward_equivariant(const ModelConfig& config, const BoundParameters& params,
                                 const GraphBatch& batch, ad::Value coords);

EnergyOutput forward(const ModelConfig& config, const BoundParameters& params,
                     const GraphBatch& batch, ad::Value coords);

// -dE/dX recorded with create_graph, so a loss built on it can be
// differentiated w.r.t. the parameters. coords must require grad.
ad::Value predict_noise_gradient(const ModelConfig& config, const BoundParameters& params,
                                 const GraphBatch& batch, ad::Value coords);
// X^(T) - X for the equivariant model.
ad::Value predict_noise_coordinate(const ModelConfig& config, const BoundParameters& params,
                                   const GraphBatch& batch, ad::Value coords);
// Strategy matching the model kind.
ad::Value predict_noise(const ModelConfig& config, const BoundParameters& params,
                        const GraphBatch& batch, ad::Value coords);

// Convenience wrappers on plain arrays for a single conformation.
double predict_energy(const ModelConfig& config, const ModelParameters& params,
                      const Conformation& conf);
Array predict_energy_gradient(const ModelConfig& config, const ModelParameters& params,
                              const Conformation& conf);
Array predict_noise(const ModelConfig& config, const ModelParameters& params,
                    const Conformation& perturbed);
// Per-molecule energies for many conformations, batched.
std::vector<double> predict_energies(const ModelConfig& config, const ModelParameters& params,
                                     std::span<const Conformation> confs,
                                     std::size_t batch_size = 64);

}  // namespace dnp

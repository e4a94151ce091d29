#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "ept/autodiff.hpp"
#include "ept/blockgraph.hpp"
#include "ept/tensor.hpp"

namespace ept {

/// Backbone hyperparameters. Defaults are the full-size profile; desk() is
/// the small profile everything in tests and the verification suite runs at.
struct ModelConfig {
  std::int64_t h = 512;
  std::int64_t h_ffn = 512;
  std::int64_t h_edge = 64;
  std::int64_t h_rbf = 64;
  std::int64_t layers = 6;
  std::int64_t heads = 8;
  double delta_max = 10.0;

  std::int64_t head_dim() const { return h / heads; }
  void validate() const;  // throws invalid_argument on bad combinations

  static ModelConfig desk();

  /// Canonical key=value text used as the checkpoint header; parse() inverts
  /// it. Equality of text() implies interchangeable parameter shapes.
  std::string text() const;
  static ModelConfig parse(const std::string& text);
  bool operator==(const ModelConfig&) const = default;
};

/// Flat ordered registry of named parameter tensors. Order is fixed by the
/// config alone so optimizer state and checkpoints can align by index.
class ModelParams {
 public:
  explicit ModelParams(const ModelConfig& cfg);  // zero-initialized
  /// Symmetric-uniform init scaled by 1/sqrt(fan-in); gains 1, biases 0.
  static ModelParams init(const ModelConfig& cfg, std::uint64_t seed);

  const ModelConfig& config() const { return cfg_; }
  std::int64_t count() const { return static_cast<std::int64_t>(tensors_.size()); }
  std::int64_t scalar_count() const;
  const std::string& name(std::int64_t i) const { return names_[static_cast<std::size_t>(i)]; }
  Tensor& tensor(std::int64_t i) { return tensors_[static_cast<std::size_t>(i)]; }
  const Tensor& tensor(std::int64_t i) const { return tensors_[static_cast<std::size_t>(i)]; }
  std::int64_t index_of(const std::string& name) const;  // throws on unknown name
  Tensor& tensor(const std::string& name) { return tensor(index_of(name)); }
  const Tensor& tensor(const std::string& name) const { return tensor(index_of(name)); }

 private:
  ModelConfig cfg_;
  std::vector<std::string> names_;
  std::vector<Tensor> tensors_;
  std::map<std::string, std::int64_t> by_name_;
};

/// One model instance: rows [0, n_real) are real atoms, the rest padding.
/// Padding carries the pad vocabulary codes, zero coordinates, and no edges.
struct ModelInput {
  std::vector<std::uint16_t> atom_code, block_of, pos_code;  // per row
  std::vector<std::uint16_t> block_code;                     // per block
  Tensor coords;                                             // rows x 3
  std::vector<Edge> edges;
  std::int64_t m = 0;
  std::int64_t n_real = 0;
  std::int64_t n_total() const { return coords.rows(); }
};

ModelInput model_input(const MolGraph& g);
ModelInput model_input(const GraphBatch::Member& member);

/// Parameters registered as leaves on a tape, in registry order.
class ParamVars {
 public:
  ParamVars(Tape& tape, const ModelParams& p);
  const ModelParams& params() const { return *p_; }
  Var at(std::int64_t i) const { return vars_[static_cast<std::size_t>(i)]; }
  Var operator[](const std::string& name) const { return at(p_->index_of(name)); }

 private:
  const ModelParams* p_;
  std::vector<Var> vars_;
};

/// Features after any stage: H (n x h) scalars, V (3n x h) vector channels
/// stored as three stacked n-row slices.
struct TapedState {
  Var h;
  Var v;
  std::int64_t n = 0;
};

struct FeatureState {
  Tensor h;
  Tensor v;
};

// Stage functions. The deltas apply their own pre-norm; forward_taped wires
// embed -> layers x (attention, ffn) with residuals and keeps padded rows
// exactly zero after every sublayer.
TapedState embed_taped(Tape& tape, const ParamVars& pv, const ModelInput& in);
TapedState attention_delta_taped(Tape& tape, const ParamVars& pv, const TapedState& st,
                                 const ModelInput& in, std::int64_t layer);
TapedState ffn_delta_taped(Tape& tape, const ParamVars& pv, const TapedState& st,
                           std::int64_t layer);
TapedState forward_taped(Tape& tape, const ParamVars& pv, const ModelInput& in);

/// Per-atom output vectors (n x 3); padded rows come out zero.
Var force_head_taped(Tape& tape, const ParamVars& pv, const TapedState& st);

enum class PoolMode { kAtom, kBlock, kGraph };
enum class PhiEKind { kMlp, kLinear };

/// Scalar property prediction pooled over real atoms only.
Var pooled_head_taped(Tape& tape, const ParamVars& pv, const TapedState& st,
                      const ModelInput& in, PoolMode mode, PhiEKind kind);

// Untaped conveniences: run a private tape and return values.
FeatureState forward(const ModelParams& p, const ModelInput& in);
Tensor forces(const ModelParams& p, const ModelInput& in);
double pooled(const ModelParams& p, const ModelInput& in, PoolMode mode, PhiEKind kind);

/// Gaussian radial basis over [0, delta_max]: centers evenly spaced, width =
/// spacing; one row per distance.
Tensor rbf_expand(const std::vector<double>& d, std::int64_t h_rbf, double delta_max);

/// Attention bias shared by every head of one layer: phi_r on edges minus the
/// pairwise distance matrix, with -inf on padded key columns.
Tensor attention_bias(const ModelParams& p, std::int64_t layer, const ModelInput& in);

}  // namespace ept

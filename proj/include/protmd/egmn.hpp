#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "protmd/geom.hpp"
#include "protmd/params.hpp"
#include "protmd/tape.hpp"

namespace protmd {

enum class Mode { kTrain, kEval };

struct EgmnConfig {
  int layers = 6;
  int feature_width = 256;  // psi_h + psi_prompt, constant across layers
  int hidden_width = 256;
  int attention_width = 0;  // 0 -> hidden_width
  double dropout_rate = 0.15;
  double coord_clamp = 2.0;
  bool normalize_coord_updates = true;

  int attention_dim() const { return attention_width > 0 ? attention_width : hidden_width; }
  void validate() const;
};

struct EncoderOutput {
  Eigen::MatrixXd features;     // invariant, n x feature_width
  Eigen::MatrixXd coordinates;  // equivariant, n x 3; read as the next-timeframe prediction
};

// E(3)-equivariant graph matching encoder. Intra-graph edges carry plain
// messages; cross-graph edges carry attention-weighted, distance-gated
// messages; both feed scalar gates on relative-position coordinate updates.
class Egmn {
 public:
  explicit Egmn(EgmnConfig config);

  const EgmnConfig& config() const { return config_; }

  // Registers every per-layer weight group ("egmn.layer<l>.phi_*") in `params`.
  void init(ParamSet& params, RngStream& rng) const;

  // Directed edge arrays derived from an EdgeSet; senders in `src`, receivers
  // in `dst`, both in global atom indices, both directions materialized.
  struct EdgeArrays {
    std::vector<int> intra_src, intra_dst;
    std::vector<int> cross_src, cross_dst;
    std::vector<double> inv_neighbor_count;  // 1/deg, 0 for isolated atoms
    int atom_count = 0;
  };
  static EdgeArrays prepare_edges(const ComplexSnapshot& snapshot);

  struct TapeOutput {
    ad::Var h;
    ad::Var x;
  };

  TapeOutput layer_forward(ad::Tape& tape, const BoundParams& bound, int layer, ad::Var h,
                           ad::Var x, const EdgeArrays& edges, Mode mode,
                           RngStream* dropout_rng) const;

  TapeOutput encode(ad::Tape& tape, const BoundParams& bound, ad::Var h0, ad::Var x0,
                    const EdgeArrays& edges, Mode mode, RngStream* dropout_rng) const;

  // Plain eval-mode run over a prompt-augmented snapshot.
  EncoderOutput encode(const ParamSet& params, const ComplexSnapshot& snapshot) const;

  // Attention weights a_{j->i} for one layer, aligned with the directed
  // cross-edge arrays; the weights of each receiver's edges sum to 1.
  ad::Var cross_attention_on_tape(ad::Tape& tape, const BoundParams& bound, int layer, ad::Var h,
                                  const EdgeArrays& edges) const;
  Eigen::VectorXd cross_attention(const ParamSet& params, const Eigen::MatrixXd& features,
                                  const EdgeArrays& edges, int layer) const;

  Mlp phi_e(int layer) const;
  Mlp phi_d(int layer) const;
  Mlp phi_h(int layer) const;
  Mlp phi_m(int layer) const;
  Mlp phi_mu(int layer) const;
  Mlp phi_q(int layer) const;
  Mlp phi_k(int layer) const;

 private:
  std::string layer_prefix(int layer) const;
  EgmnConfig config_;
};

}  // namespace protmd

#include "protmd/egmn.hpp"

namespace protmd {

void EgmnConfig::validate() const {
  if (layers < 1) throw InvalidParameter("egmn needs at least one layer");
  if (feature_width < 1 || hidden_width < 1) throw InvalidParameter("egmn widths must be >= 1");
  if (coord_clamp <= 0.0) throw InvalidParameter("coordinate clamp must be > 0");
  if (dropout_rate < 0.0 || dropout_rate >= 1.0) throw InvalidParameter("dropout rate must be in [0, 1)");
}

Egmn::Egmn(EgmnConfig config) : config_(config) { config_.validate(); }

std::string Egmn::layer_prefix(int layer) const {
  if (layer < 0 || layer >= config_.layers) throw InvalidParameter("egmn layer index out of range");
  return "egmn.layer" + std::to_string(layer);
}

Mlp Egmn::phi_e(int layer) const {
  const int f = config_.feature_width, w = config_.hidden_width;
  return Mlp(layer_prefix(layer) + ".phi_e", {2 * f + 1, w, w});
}
Mlp Egmn::phi_d(int layer) const {
  return Mlp(layer_prefix(layer) + ".phi_d", {1, config_.hidden_width, config_.feature_width});
}
Mlp Egmn::phi_h(int layer) const {
  const int f = config_.feature_width, w = config_.hidden_width;
  return Mlp(layer_prefix(layer) + ".phi_h", {f + w + f, w, f});
}
Mlp Egmn::phi_m(int layer) const {
  return Mlp(layer_prefix(layer) + ".phi_m", {config_.hidden_width, config_.hidden_width, 1});
}
Mlp Egmn::phi_mu(int layer) const {
  return Mlp(layer_prefix(layer) + ".phi_mu", {config_.feature_width, config_.hidden_width, 1});
}
Mlp Egmn::phi_q(int layer) const {
  return Mlp(layer_prefix(layer) + ".phi_q", {config_.feature_width, config_.attention_dim()});
}
Mlp Egmn::phi_k(int layer) const {
  return Mlp(layer_prefix(layer) + ".phi_k", {config_.feature_width, config_.attention_dim()});
}

void Egmn::init(ParamSet& params, RngStream& rng) const {
  for (int l = 0; l < config_.layers; ++l) {
    phi_e(l).init(params, rng);
    phi_d(l).init(params, rng);
    phi_h(l).init(params, rng);
    phi_m(l).init(params, rng);
    phi_mu(l).init(params, rng);
    phi_q(l).init(params, rng);
    phi_k(l).init(params, rng);
  }
}

Egmn::EdgeArrays Egmn::prepare_edges(const ComplexSnapshot& snapshot) {
  EdgeArrays arrays;
  arrays.atom_count = snapshot.atom_count();
  const int n_lig = snapshot.ligand_count();
  for (const auto& [i, j] : snapshot.edges.intra) {
    // Unordered pair; messages flow both ways.
    arrays.intra_src.push_back(j);
    arrays.intra_dst.push_back(i);
    arrays.intra_src.push_back(i);
    arrays.intra_dst.push_back(j);
  }
  for (const auto& [li, rj] : snapshot.edges.cross) {
    const int lig = li;
    const int rec = n_lig + rj;
    if (lig >= n_lig || rec >= arrays.atom_count)
      throw ShapeError("cross edge index out of range for snapshot");
    arrays.cross_src.push_back(rec);
    arrays.cross_dst.push_back(lig);
    arrays.cross_src.push_back(lig);
    arrays.cross_dst.push_back(rec);
  }
  std::vector<int> degree(static_cast<std::size_t>(arrays.atom_count), 0);
  for (int d : arrays.intra_dst) ++degree[static_cast<std::size_t>(d)];
  for (int d : arrays.cross_dst) ++degree[static_cast<std::size_t>(d)];
  arrays.inv_neighbor_count.resize(degree.size());
  for (std::size_t i = 0; i < degree.size(); ++i)
    arrays.inv_neighbor_count[i] = degree[i] > 0 ? 1.0 / static_cast<double>(degree[i]) : 0.0;
  return arrays;
}

ad::Var Egmn::cross_attention_on_tape(ad::Tape& tape, const BoundParams& bound, int layer,
                                      ad::Var h, const EdgeArrays& edges) const {
  const ad::Var h_recv = tape.gather_rows(h, edges.cross_dst);
  const ad::Var h_send = tape.gather_rows(h, edges.cross_src);
  const ad::Var q = phi_q(layer).apply(tape, bound, h_recv);
  const ad::Var k = phi_k(layer).apply(tape, bound, h_send);
  const ad::Var scores = tape.rows_dot(q, k);
  return tape.segment_softmax(scores, edges.cross_dst, edges.atom_count);
}

Eigen::VectorXd Egmn::cross_attention(const ParamSet& params, const Eigen::MatrixXd& features,
                                      const EdgeArrays& edges, int layer) const {
  ad::Tape tape;
  BoundParams bound = bind_params(tape, params, false);
  const ad::Var h = tape.leaf(features, false);
  return tape.value(cross_attention_on_tape(tape, bound, layer, h, edges)).col(0);
}

Egmn::TapeOutput Egmn::layer_forward(ad::Tape& tape, const BoundParams& bound, int layer,
                                     ad::Var h, ad::Var x, const EdgeArrays& edges, Mode mode,
                                     RngStream* dropout_rng) const {
  const int n = edges.atom_count;
  if (tape.value(h).rows() != n || tape.value(x).rows() != n)
    throw ShapeError("layer_forward: node arrays do not match the edge arrays");
  if (tape.value(h).cols() != config_.feature_width)
    throw ShapeError("layer_forward: feature width != configured width");

  ad::Var displacement = tape.leaf(Eigen::MatrixXd::Zero(n, 3), false);
  ad::Var intra_sum = tape.leaf(Eigen::MatrixXd::Zero(n, config_.hidden_width), false);
  ad::Var cross_sum = tape.leaf(Eigen::MatrixXd::Zero(n, config_.feature_width), false);

  if (!edges.intra_dst.empty()) {
    const ad::Var h_recv = tape.gather_rows(h, edges.intra_dst);
    const ad::Var h_send = tape.gather_rows(h, edges.intra_src);
    const ad::Var rel = tape.sub(tape.gather_rows(x, edges.intra_dst),
                                 tape.gather_rows(x, edges.intra_src));
    const ad::Var dist = tape.row_norms(rel);
    const ad::Var msg = phi_e(layer).apply(tape, bound, tape.concat_cols({h_recv, h_send, dist}));
    const ad::Var gate = phi_m(layer).apply(tape, bound, msg);
    const ad::Var edge_disp = tape.clamp_rows_by_norm(tape.scale_rows(rel, gate), config_.coord_clamp);
    displacement = tape.add(displacement, tape.scatter_add_rows(edge_disp, edges.intra_dst, n));
    intra_sum = tape.add(intra_sum, tape.scatter_add_rows(msg, edges.intra_dst, n));
  }

  if (!edges.cross_dst.empty()) {
    const ad::Var h_send = tape.gather_rows(h, edges.cross_src);
    const ad::Var rel = tape.sub(tape.gather_rows(x, edges.cross_dst),
                                 tape.gather_rows(x, edges.cross_src));
    const ad::Var dist = tape.row_norms(rel);
    const ad::Var attention = cross_attention_on_tape(tape, bound, layer, h, edges);
    const ad::Var msg =
        tape.scale_rows(tape.mul(h_send, phi_d(layer).apply(tape, bound, dist)), attention);
    const ad::Var gate = phi_mu(layer).apply(tape, bound, msg);
    const ad::Var edge_disp = tape.clamp_rows_by_norm(tape.scale_rows(rel, gate), config_.coord_clamp);
    displacement = tape.add(displacement, tape.scatter_add_rows(edge_disp, edges.cross_dst, n));
    cross_sum = tape.add(cross_sum, tape.scatter_add_rows(msg, edges.cross_dst, n));
  }

  if (config_.normalize_coord_updates) {
    Eigen::MatrixXd inv_deg(n, 1);
    for (int i = 0; i < n; ++i) inv_deg(i, 0) = edges.inv_neighbor_count[static_cast<std::size_t>(i)];
    displacement = tape.scale_rows(displacement, tape.leaf(std::move(inv_deg), false));
  }

  const ad::Var x_new = tape.add(x, displacement);
  ad::Var h_new = phi_h(layer).apply(tape, bound, tape.concat_cols({h, intra_sum, cross_sum}));
  if (mode == Mode::kTrain && config_.dropout_rate > 0.0) {
    if (dropout_rng == nullptr) throw InvalidParameter("train mode needs a dropout rng");
    h_new = tape.dropout(h_new, config_.dropout_rate, true, *dropout_rng);
  }
  return {h_new, x_new};
}

Egmn::TapeOutput Egmn::encode(ad::Tape& tape, const BoundParams& bound, ad::Var h0, ad::Var x0,
                              const EdgeArrays& edges, Mode mode, RngStream* dropout_rng) const {
  TapeOutput state{h0, x0};
  for (int l = 0; l < config_.layers; ++l)
    state = layer_forward(tape, bound, l, state.h, state.x, edges, mode, dropout_rng);
  return state;
}

EncoderOutput Egmn::encode(const ParamSet& params, const ComplexSnapshot& snapshot) const {
  ad::Tape tape;
  BoundParams bound = bind_params(tape, params, false);
  const ad::Var h0 = tape.leaf(snapshot.features(), false);
  const ad::Var x0 = tape.leaf(snapshot.positions(), false);
  const EdgeArrays edges = prepare_edges(snapshot);
  const TapeOutput out = encode(tape, bound, h0, x0, edges, Mode::kEval, nullptr);
  EncoderOutput result{tape.value(out.h), tape.value(out.x)};
  if (!result.features.allFinite() || !result.coordinates.allFinite())
    throw NumericalError("encoder produced non-finite output");
  return result;
}

}  // namespace protmd

#pragma once

#include <cstdint>
#include <span>
#include <string>

#include "matformer/featurize.hpp"
#include "matformer/graph.hpp"
#include "matformer/tensor.hpp"

namespace matformer {

/// How the attention coefficients of one head become the gate on its
/// edge message.
enum class AttentionVariant {
  sigmoid_norm,    ///< sigmoid(LayerNorm(alpha)) per edge, no softmax
  softmax_scalar,  ///< softmax over the neighbourhood of mean(alpha), broadcast
  softmax_vector,  ///< component-wise softmax over the neighbourhood
};

AttentionVariant attention_variant_from_string(std::string_view name);
std::string_view to_string(AttentionVariant v);

struct ModelConfig {
  int n_layers = 5;
  int n_heads = 4;
  int d_model = 128;
  int readout_hidden = 128;
  AttentionVariant attention = AttentionVariant::sigmoid_norm;
  tensor::Activation activation = tensor::Activation::silu;
  int n_kernels = 128;
  double rbf_lo = 0.0;
  double rbf_hi = 8.0;

  FeaturizeConfig featurize_config() const { return {n_kernels, rbf_lo, rbf_hi, d_model, activation}; }
  void validate() const;
};

/// Gate for every edge given the attention coefficients `alpha` (E x 3d) of
/// one head and the destination node of each edge.
tensor::Tensor attention_gate(const tensor::Tensor& alpha, std::span<const int> dst, tensor::Index n_nodes,
                              AttentionVariant variant, const tensor::Tensor& norm_gamma,
                              const tensor::Tensor& norm_beta);

/// Per-node sum of gate * value over incoming edges, without the message
/// projection that follows in the full layer.
tensor::Tensor aggregate_gated_values(const tensor::Tensor& alpha, const tensor::Tensor& values,
                                      std::span<const int> dst, tensor::Index n_nodes, AttentionVariant variant,
                                      const tensor::Tensor& norm_gamma, const tensor::Tensor& norm_beta);

/// Registers every parameter of one message-passing layer under `layer<l>.`.
void init_layer_params(tensor::ParameterStore& store, int layer, const ModelConfig& config, Rng& rng);

/// One edge-wise attention message-passing layer.
///
/// Per head h: q = LN_Q(f), k = LN_K(f), v = LN_V(f), e' = LN_E(e);
/// alpha_ij = (q_i|q_i|q_i) * (k_i|k_j|e'_ij) / sqrt(3d);
/// m_ij = gate(alpha_ij) * LN_update(v_i|v_j|e'_ij);
/// msg_ij = LayerNorm(LN_msg(m_ij)).
/// Heads are concatenated, summed over incoming edges, merged by one linear
/// map to m_i, and f' = LN_fea(f) + act(BN(m_i)).
tensor::Tensor layer_forward(const tensor::Tensor& node_feats, const tensor::Tensor& edge_feats,
                             std::span<const int> src, std::span<const int> dst, tensor::ParameterStore& params,
                             int layer, const ModelConfig& config, tensor::Mode mode);

class MatformerModel {
 public:
  MatformerModel(ModelConfig config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  tensor::ParameterStore& parameters() { return params_; }
  const tensor::ParameterStore& parameters() const { return params_; }

  FeaturizedGraph featurize(const CrystalGraph& graph) const;
  FeaturizedGraph featurize(std::span<const CrystalGraph* const> graphs) const;

  /// Node features after the last layer (n x d_model).
  tensor::Tensor encode(const FeaturizedGraph& input, tensor::Mode mode);
  /// One prediction per graph (num_graphs x 1).
  tensor::Tensor forward(const FeaturizedGraph& input, tensor::Mode mode);
  /// Eval-mode scalar prediction for a single graph.
  double predict(const CrystalGraph& graph);

  std::string save_checkpoint() const { return params_.to_json(); }
  void load_checkpoint(std::string_view text) { params_.load_json(text); }

 private:
  ModelConfig config_;
  tensor::ParameterStore params_;
};

}  // namespace matformer

#include "matformer/model.hpp"

#include <cmath>
#include <vector>

namespace matformer {

using tensor::Index;
using tensor::Matrix;
using tensor::Mode;
using tensor::Tensor;

AttentionVariant attention_variant_from_string(std::string_view name) {
  if (name == "sigmoid_norm") return AttentionVariant::sigmoid_norm;
  if (name == "softmax_scalar") return AttentionVariant::softmax_scalar;
  if (name == "softmax_vector") return AttentionVariant::softmax_vector;
  throw std::invalid_argument("unknown attention variant '" + std::string(name) + "'");
}

std::string_view to_string(AttentionVariant v) {
  switch (v) {
    case AttentionVariant::sigmoid_norm: return "sigmoid_norm";
    case AttentionVariant::softmax_scalar: return "softmax_scalar";
    case AttentionVariant::softmax_vector: return "softmax_vector";
  }
  return "?";
}

void ModelConfig::validate() const {
  if (n_layers < 1) throw std::invalid_argument("n_layers must be at least 1");
  if (n_heads < 1) throw std::invalid_argument("n_heads must be at least 1");
  if (d_model < 2) throw std::invalid_argument("d_model must be at least 2 (layer norm over the message)");
  if (readout_hidden < 1) throw std::invalid_argument("readout_hidden must be at least 1");
  if (n_kernels < 2) throw std::invalid_argument("n_kernels must be at least 2");
}

namespace {

std::string key(int layer, const std::string& name) { return "layer" + std::to_string(layer) + "." + name; }

std::string head_key(int layer, int head, const std::string& name) {
  return key(layer, "head" + std::to_string(head) + "." + name);
}

Tensor linear(const Tensor& x, const tensor::ParameterStore& p, const std::string& prefix) {
  return tensor::add_row(tensor::matmul(x, p.get(prefix + ".W")), p.get(prefix + ".b"));
}

void add_linear(tensor::ParameterStore& store, const std::string& prefix, Index in, Index out, Rng& rng) {
  store.add(prefix + ".W", uniform_init(in, out, in, rng));
  store.add(prefix + ".b", uniform_init(1, out, in, rng));
}

void add_affine(tensor::ParameterStore& store, const std::string& prefix, Index width) {
  store.add(prefix + ".gamma", Matrix::Ones(1, width));
  store.add(prefix + ".beta", Matrix::Zero(1, width));
}

Tensor affine_layer_norm(const Tensor& x, const tensor::ParameterStore& p, const std::string& prefix) {
  return tensor::add_row(tensor::mul_row(tensor::layer_norm(x), p.get(prefix + ".gamma")), p.get(prefix + ".beta"));
}

}  // namespace

Tensor attention_gate(const Tensor& alpha, std::span<const int> dst, Index n_nodes, AttentionVariant variant,
                      const Tensor& norm_gamma, const Tensor& norm_beta) {
  switch (variant) {
    case AttentionVariant::sigmoid_norm:
      return tensor::sigmoid(tensor::add_row(tensor::mul_row(tensor::layer_norm(alpha), norm_gamma), norm_beta));
    case AttentionVariant::softmax_vector:
      return tensor::segment_softmax(alpha, dst, n_nodes);
    case AttentionVariant::softmax_scalar: {
      const Tensor score = tensor::scale(tensor::row_sum(alpha), 1.0 / static_cast<double>(alpha.cols()));
      return tensor::broadcast_cols(tensor::segment_softmax(score, dst, n_nodes), alpha.cols());
    }
  }
  throw std::invalid_argument("unknown attention variant");
}

Tensor aggregate_gated_values(const Tensor& alpha, const Tensor& values, std::span<const int> dst, Index n_nodes,
                              AttentionVariant variant, const Tensor& norm_gamma, const Tensor& norm_beta) {
  const Tensor gate = attention_gate(alpha, dst, n_nodes, variant, norm_gamma, norm_beta);
  return tensor::scatter_sum(tensor::hadamard(gate, values), dst, n_nodes);
}

void init_layer_params(tensor::ParameterStore& store, int layer, const ModelConfig& config, Rng& rng) {
  const Index d = config.d_model;
  for (int h = 0; h < config.n_heads; ++h) {
    for (const char* name : {"q", "k", "v", "e"}) add_linear(store, head_key(layer, h, name), d, d, rng);
  }
  add_affine(store, key(layer, "att_norm"), 3 * d);
  add_linear(store, key(layer, "update"), 3 * d, 3 * d, rng);
  add_linear(store, key(layer, "msg"), 3 * d, d, rng);
  add_affine(store, key(layer, "msg_norm"), d);
  add_linear(store, key(layer, "merge"), config.n_heads * d, d, rng);
  add_linear(store, key(layer, "fea"), d, d, rng);
  add_affine(store, key(layer, "bn"), d);
  store.add_batch_norm(key(layer, "bn"), d);
}

Tensor layer_forward(const Tensor& node_feats, const Tensor& edge_feats, std::span<const int> src,
                     std::span<const int> dst, tensor::ParameterStore& params, int layer, const ModelConfig& config,
                     Mode mode) {
  const Index n = node_feats.rows();
  const Index d = config.d_model;
  if (node_feats.cols() != d || edge_feats.cols() != d) throw tensor::TensorError("layer_forward: width mismatch");
  if (src.size() != dst.size() || static_cast<Index>(src.size()) != edge_feats.rows()) {
    throw tensor::TensorError("layer_forward: edge list and edge features disagree");
  }
  std::vector<int> indegree(static_cast<std::size_t>(n), 0);
  for (int i : dst) {
    if (i < 0 || i >= n) throw tensor::TensorError("layer_forward: edge endpoint out of range");
    ++indegree[static_cast<std::size_t>(i)];
  }
  for (Index i = 0; i < n; ++i) {
    if (indegree[static_cast<std::size_t>(i)] == 0) {
      throw tensor::TensorError("layer_forward: node " + std::to_string(i) + " has no incoming edge");
    }
  }

  const double inv_sqrt = 1.0 / std::sqrt(3.0 * static_cast<double>(d));
  const Tensor& att_gamma = params.get(key(layer, "att_norm.gamma"));
  const Tensor& att_beta = params.get(key(layer, "att_norm.beta"));

  std::vector<Tensor> head_messages;
  head_messages.reserve(static_cast<std::size_t>(config.n_heads));
  for (int h = 0; h < config.n_heads; ++h) {
    const Tensor q = linear(node_feats, params, head_key(layer, h, "q"));
    const Tensor k = linear(node_feats, params, head_key(layer, h, "k"));
    const Tensor v = linear(node_feats, params, head_key(layer, h, "v"));
    const Tensor e = linear(edge_feats, params, head_key(layer, h, "e"));

    const Tensor q_i = tensor::gather_rows(q, dst);
    const Tensor query_parts[] = {q_i, q_i, q_i};
    const Tensor key_parts[] = {tensor::gather_rows(k, dst), tensor::gather_rows(k, src), e};
    const Tensor alpha = tensor::scale(
        tensor::hadamard(tensor::concat_cols(query_parts), tensor::concat_cols(key_parts)), inv_sqrt);

    const Tensor value_parts[] = {tensor::gather_rows(v, dst), tensor::gather_rows(v, src), e};
    const Tensor update = linear(tensor::concat_cols(value_parts), params, key(layer, "update"));
    const Tensor gate = attention_gate(alpha, dst, n, config.attention, att_gamma, att_beta);
    const Tensor message = tensor::hadamard(gate, update);

    head_messages.push_back(affine_layer_norm(linear(message, params, key(layer, "msg")), params,
                                              key(layer, "msg_norm")));
  }
  const Tensor per_edge = tensor::concat_cols(head_messages);
  const Tensor summed = tensor::scatter_sum(per_edge, dst, n);
  const Tensor m = linear(summed, params, key(layer, "merge"));

  tensor::BatchNormStats& stats = params.batch_norm(key(layer, "bn"));
  const Tensor normed = tensor::add_row(tensor::mul_row(tensor::batch_norm(m, stats, mode), params.get(key(layer, "bn.gamma"))),
                                        params.get(key(layer, "bn.beta")));
  return tensor::add(linear(node_feats, params, key(layer, "fea")), tensor::activate(normed, config.activation));
}

MatformerModel::MatformerModel(ModelConfig config, std::uint64_t seed) : config_(std::move(config)) {
  config_.validate();
  Rng rng(seed);
  init_embedding_params(params_, config_.featurize_config(), rng);
  for (int l = 0; l < config_.n_layers; ++l) init_layer_params(params_, l, config_, rng);
  add_linear(params_, "readout.hidden", config_.d_model, config_.readout_hidden, rng);
  add_linear(params_, "readout.out", config_.readout_hidden, 1, rng);
}

FeaturizedGraph MatformerModel::featurize(const CrystalGraph& graph) const {
  return featurize_graph(graph, params_, config_.featurize_config());
}

FeaturizedGraph MatformerModel::featurize(std::span<const CrystalGraph* const> graphs) const {
  return featurize_batch(graphs, params_, config_.featurize_config());
}

Tensor MatformerModel::encode(const FeaturizedGraph& input, Mode mode) {
  Tensor h = input.node_input;
  for (int l = 0; l < config_.n_layers; ++l) {
    h = layer_forward(h, input.edge_input, input.src, input.dst, params_, l, config_, mode);
  }
  return h;
}

Tensor MatformerModel::forward(const FeaturizedGraph& input, Mode mode) {
  const Tensor h = encode(input, mode);
  const Tensor pooled = tensor::segment_mean(h, input.node_graph, input.num_graphs);
  const Tensor hidden = tensor::activate(linear(pooled, params_, "readout.hidden"), config_.activation);
  return linear(hidden, params_, "readout.out");
}

double MatformerModel::predict(const CrystalGraph& graph) {
  return forward(featurize(graph), Mode::eval).item();
}

}  // namespace matformer

#pragma once

#include <span>
#include <vector>

#include "matformer/graph.hpp"
#include "matformer/synthetic.hpp"
#include "matformer/tensor.hpp"

namespace matformer {

struct FeaturizeConfig {
  int n_kernels = 128;
  double rbf_lo = 0.0;
  double rbf_hi = 8.0;
  int d_model = 128;
  tensor::Activation activation = tensor::Activation::silu;
};

/// Gaussian radial basis: component k = exp(-(d - mu_k)^2 / delta^2) with
/// mu_k = lo + k * delta and delta = (hi - lo) / (n_kernels - 1).
Eigen::RowVectorXd rbf_expand(double d, int n_kernels = 128, double lo = 0.0, double hi = 8.0);

/// One-hot row of width 119 with the 1 at column z.
Eigen::RowVectorXd embed_atom(int z);

/// Registers embed.node.{W,b} and embed.edge.{W1,b1,W2,b2}.
void init_embedding_params(tensor::ParameterStore& store, const FeaturizeConfig& config, Rng& rng);

/// Disjoint union of one or more crystal graphs in tensor form. Edge
/// features depend on edge distance only.
struct FeaturizedGraph {
  tensor::Tensor node_input;  // n x d_model
  tensor::Tensor edge_input;  // E x d_model
  std::vector<int> src;
  std::vector<int> dst;
  std::vector<int> node_graph;  // graph id per node
  int num_nodes = 0;
  int num_graphs = 0;
};

FeaturizedGraph featurize_graph(const CrystalGraph& graph, const tensor::ParameterStore& params,
                                const FeaturizeConfig& config);
FeaturizedGraph featurize_batch(std::span<const CrystalGraph* const> graphs, const tensor::ParameterStore& params,
                                const FeaturizeConfig& config);

/// PyTorch-style default: U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
tensor::Matrix uniform_init(tensor::Index rows, tensor::Index cols, tensor::Index fan_in, Rng& rng);

}  // namespace matformer

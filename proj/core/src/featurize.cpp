#include "matformer/featurize.hpp"

#include <cmath>

#include "matformer/elements.hpp"

namespace matformer {

using tensor::Matrix;
using tensor::Tensor;

Eigen::RowVectorXd rbf_expand(double d, int n_kernels, double lo, double hi) {
  if (n_kernels < 2) throw std::invalid_argument("rbf_expand needs at least two kernels");
  if (!(hi > lo)) throw std::invalid_argument("rbf_expand needs hi > lo");
  if (!(d >= 0.0)) throw std::invalid_argument("rbf_expand needs a non-negative distance");
  const double delta = (hi - lo) / (n_kernels - 1);
  Eigen::RowVectorXd out(n_kernels);
  for (int k = 0; k < n_kernels; ++k) {
    const double x = (d - (lo + k * delta)) / delta;
    out[k] = std::exp(-x * x);
  }
  return out;
}

Eigen::RowVectorXd embed_atom(int z) {
  return one_hot_atomic_numbers({z}).row(0);
}

Matrix uniform_init(tensor::Index rows, tensor::Index cols, tensor::Index fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::uniform_real_distribution<double> u(-bound, bound);
  Matrix m(rows, cols);
  for (tensor::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
  return m;
}

void init_embedding_params(tensor::ParameterStore& store, const FeaturizeConfig& config, Rng& rng) {
  const int d = config.d_model;
  const int k = config.n_kernels;
  store.add("embed.node.W", uniform_init(kOneHotWidth, d, kOneHotWidth, rng));
  store.add("embed.node.b", uniform_init(1, d, kOneHotWidth, rng));
  store.add("embed.edge.W1", uniform_init(k, d, k, rng));
  store.add("embed.edge.b1", uniform_init(1, d, k, rng));
  store.add("embed.edge.W2", uniform_init(d, d, d, rng));
  store.add("embed.edge.b2", uniform_init(1, d, d, rng));
}

FeaturizedGraph featurize_graph(const CrystalGraph& graph, const tensor::ParameterStore& params,
                                const FeaturizeConfig& config) {
  const CrystalGraph* one[] = {&graph};
  return featurize_batch(one, params, config);
}

FeaturizedGraph featurize_batch(std::span<const CrystalGraph* const> graphs, const tensor::ParameterStore& params,
                                const FeaturizeConfig& config) {
  const Tensor& w_node = params.get("embed.node.W");
  if (w_node.rows() != kOneHotWidth || w_node.cols() != config.d_model ||
      params.get("embed.edge.W1").rows() != config.n_kernels) {
    throw tensor::TensorError("featurize: embedding parameters do not match the configuration");
  }
  FeaturizedGraph out;
  std::vector<int> z;
  std::vector<double> distances;
  for (std::size_t g = 0; g < graphs.size(); ++g) {
    const CrystalGraph& graph = *graphs[g];
    validate_graph(graph);
    const int offset = out.num_nodes;
    for (int a : graph.node_atomic_numbers) {
      z.push_back(a);
      out.node_graph.push_back(static_cast<int>(g));
    }
    for (const Edge& e : graph.edges) {
      out.src.push_back(e.src + offset);
      out.dst.push_back(e.dst + offset);
      distances.push_back(e.distance);
    }
    out.num_nodes += static_cast<int>(graph.num_nodes());
  }
  out.num_graphs = static_cast<int>(graphs.size());

  Matrix rbf(static_cast<tensor::Index>(distances.size()), config.n_kernels);
  for (std::size_t e = 0; e < distances.size(); ++e) {
    rbf.row(static_cast<tensor::Index>(e)) = rbf_expand(distances[e], config.n_kernels, config.rbf_lo, config.rbf_hi);
  }
  const Tensor onehot = Tensor::constant(one_hot_atomic_numbers(z));
  out.node_input = tensor::add_row(tensor::matmul(onehot, w_node), params.get("embed.node.b"));

  const Tensor hidden = tensor::activate(
      tensor::add_row(tensor::matmul(Tensor::constant(std::move(rbf)), params.get("embed.edge.W1")),
                      params.get("embed.edge.b1")),
      config.activation);
  out.edge_input = tensor::add_row(tensor::matmul(hidden, params.get("embed.edge.W2")), params.get("embed.edge.b2"));
  return out;
}

}  // namespace matformer

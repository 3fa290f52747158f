#include "matformer/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include <json.hpp>

namespace matformer::tensor {

void Node::accumulate(const Matrix& g) {
  if (grad.size() == 0) {
    grad = g;
  } else {
    grad += g;
  }
}

namespace {

std::string shape_str(const Matrix& m) { return std::to_string(m.rows()) + "x" + std::to_string(m.cols()); }

void require(bool cond, std::string_view op, const std::string& msg) {
  if (!cond) throw TensorError(std::string(op) + ": " + msg);
}

void require_same_shape(const Tensor& a, const Tensor& b, std::string_view op) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), op,
          "shape mismatch " + shape_str(a.value()) + " vs " + shape_str(b.value()));
}

void require_finite(const Matrix& m, std::string_view op) {
  require(m.allFinite(), op, "produced non-finite values");
}

Tensor make(Matrix value, std::vector<Tensor> parents, std::string_view op, std::function<void(Node&)> backward) {
  require_finite(value, op);
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->op = op;
  bool needs = false;
  for (const auto& p : parents) needs = needs || p.requires_grad();
  node->requires_grad = needs;
  if (needs) {
    node->parents.reserve(parents.size());
    for (auto& p : parents) node->parents.push_back(p.node());
    node->backward = std::move(backward);
  }
  return Tensor(std::move(node));
}

Node& parent(Node& self, std::size_t k) { return *self.parents[k]; }

void check_index(std::span<const int> index, Index bound, std::string_view op) {
  for (int i : index) require(i >= 0 && i < bound, op, "index out of range");
}

}  // namespace

Tensor Tensor::constant(Matrix value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  return Tensor(std::move(node));
}

Tensor Tensor::parameter(Matrix value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->requires_grad = true;
  return Tensor(std::move(node));
}

Tensor Tensor::scalar(double v) {
  Matrix m(1, 1);
  m(0, 0) = v;
  return constant(std::move(m));
}

double Tensor::item() const {
  require(rows() == 1 && cols() == 1, "item", "tensor is not a scalar");
  return value()(0, 0);
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require(a.cols() == b.rows(), "matmul", "inner dimensions differ: " + shape_str(a.value()) + " * " + shape_str(b.value()));
  Matrix out = a.value() * b.value();
  return make(std::move(out), {a, b}, "matmul", [](Node& self) {
    Node& x = parent(self, 0);
    Node& w = parent(self, 1);
    if (x.requires_grad) x.accumulate(self.grad * w.value.transpose());
    if (w.requires_grad) w.accumulate(x.value.transpose() * self.grad);
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  return make(a.value() + b.value(), {a, b}, "add", [](Node& self) {
    for (std::size_t k = 0; k < 2; ++k) {
      if (parent(self, k).requires_grad) parent(self, k).accumulate(self.grad);
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  return make(a.value() - b.value(), {a, b}, "sub", [](Node& self) {
    if (parent(self, 0).requires_grad) parent(self, 0).accumulate(self.grad);
    if (parent(self, 1).requires_grad) parent(self, 1).accumulate(-self.grad);
  });
}

Tensor hadamard(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "hadamard");
  return make(a.value().cwiseProduct(b.value()), {a, b}, "hadamard", [](Node& self) {
    Node& x = parent(self, 0);
    Node& y = parent(self, 1);
    if (x.requires_grad) x.accumulate(self.grad.cwiseProduct(y.value));
    if (y.requires_grad) y.accumulate(self.grad.cwiseProduct(x.value));
  });
}

Tensor scale(const Tensor& a, double s) {
  return make(a.value() * s, {a}, "scale", [s](Node& self) { parent(self, 0).accumulate(self.grad * s); });
}

Tensor add_row(const Tensor& a, const Tensor& row) {
  require(row.rows() == 1 && row.cols() == a.cols(), "add_row", "row must be 1x" + std::to_string(a.cols()));
  Matrix out = a.value();
  out.rowwise() += row.value().row(0);
  return make(std::move(out), {a, row}, "add_row", [](Node& self) {
    if (parent(self, 0).requires_grad) parent(self, 0).accumulate(self.grad);
    if (parent(self, 1).requires_grad) parent(self, 1).accumulate(self.grad.colwise().sum());
  });
}

Tensor mul_row(const Tensor& a, const Tensor& row) {
  require(row.rows() == 1 && row.cols() == a.cols(), "mul_row", "row must be 1x" + std::to_string(a.cols()));
  Matrix out = a.value().array().rowwise() * row.value().row(0).array();
  return make(std::move(out), {a, row}, "mul_row", [](Node& self) {
    Node& x = parent(self, 0);
    Node& r = parent(self, 1);
    if (x.requires_grad) {
      Matrix g = self.grad.array().rowwise() * r.value.row(0).array();
      x.accumulate(g);
    }
    if (r.requires_grad) r.accumulate(self.grad.cwiseProduct(x.value).colwise().sum());
  });
}

Tensor concat_cols(std::span<const Tensor> parts) {
  require(!parts.empty(), "concat_cols", "no inputs");
  const Index n = parts[0].rows();
  Index total = 0;
  for (const auto& p : parts) {
    require(p.rows() == n, "concat_cols", "row counts differ");
    total += p.cols();
  }
  Matrix out(n, total);
  std::vector<Index> offsets;
  Index off = 0;
  for (const auto& p : parts) {
    out.middleCols(off, p.cols()) = p.value();
    offsets.push_back(off);
    off += p.cols();
  }
  std::vector<Tensor> parents(parts.begin(), parts.end());
  return make(std::move(out), std::move(parents), "concat_cols", [offsets](Node& self) {
    for (std::size_t k = 0; k < self.parents.size(); ++k) {
      Node& p = parent(self, k);
      if (p.requires_grad) p.accumulate(self.grad.middleCols(offsets[k], p.value.cols()));
    }
  });
}

Tensor slice_cols(const Tensor& a, Index begin, Index count) {
  require(begin >= 0 && count >= 0 && begin + count <= a.cols(), "slice_cols", "range out of bounds");
  Matrix out = a.value().middleCols(begin, count);
  return make(std::move(out), {a}, "slice_cols", [begin, count](Node& self) {
    Node& x = parent(self, 0);
    Matrix g = Matrix::Zero(x.value.rows(), x.value.cols());
    g.middleCols(begin, count) = self.grad;
    x.accumulate(g);
  });
}

namespace {

double sigmoid_scalar(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double softplus_scalar(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

}  // namespace

Tensor sigmoid(const Tensor& a) {
  Matrix out = a.value().unaryExpr(&sigmoid_scalar);
  return make(out, {a}, "sigmoid", [out](Node& self) {
    parent(self, 0).accumulate(self.grad.cwiseProduct(out.unaryExpr([](double s) { return s * (1.0 - s); })));
  });
}

Tensor silu(const Tensor& a) {
  const Matrix x = a.value();
  Matrix out = x.unaryExpr([](double v) { return v * sigmoid_scalar(v); });
  return make(std::move(out), {a}, "silu", [x](Node& self) {
    const Matrix d = x.unaryExpr([](double v) {
      const double s = sigmoid_scalar(v);
      return s * (1.0 + v * (1.0 - s));
    });
    parent(self, 0).accumulate(self.grad.cwiseProduct(d));
  });
}

Tensor softplus(const Tensor& a) {
  const Matrix x = a.value();
  Matrix out = x.unaryExpr(&softplus_scalar);
  return make(std::move(out), {a}, "softplus", [x](Node& self) {
    parent(self, 0).accumulate(self.grad.cwiseProduct(x.unaryExpr(&sigmoid_scalar)));
  });
}

Tensor activate(const Tensor& a, Activation act) {
  switch (act) {
    case Activation::silu: return silu(a);
    case Activation::softplus: return softplus(a);
    case Activation::sigmoid: return sigmoid(a);
  }
  throw TensorError("unknown activation");
}

Activation activation_from_string(std::string_view name) {
  if (name == "silu") return Activation::silu;
  if (name == "softplus") return Activation::softplus;
  if (name == "sigmoid") return Activation::sigmoid;
  throw TensorError("unknown activation '" + std::string(name) + "'");
}

std::string_view to_string(Activation act) {
  switch (act) {
    case Activation::silu: return "silu";
    case Activation::softplus: return "softplus";
    case Activation::sigmoid: return "sigmoid";
  }
  return "?";
}

Tensor layer_norm(const Tensor& a, double eps) {
  const Index m = a.cols();
  require(m >= 2, "layer_norm", "needs at least two features per row (variance undefined)");
  const Matrix& x = a.value();
  Matrix xhat(x.rows(), m);
  Eigen::VectorXd inv_std(x.rows());
  for (Index r = 0; r < x.rows(); ++r) {
    const double mu = x.row(r).mean();
    const double var = (x.row(r).array() - mu).square().mean();
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    xhat.row(r) = (x.row(r).array() - mu) * inv_std[r];
  }
  return make(xhat, {a}, "layer_norm", [xhat, inv_std](Node& self) {
    const Index m = xhat.cols();
    Matrix g(xhat.rows(), m);
    for (Index r = 0; r < xhat.rows(); ++r) {
      const auto dy = self.grad.row(r).array();
      const double sum_dy = dy.sum();
      const double sum_dy_xhat = (dy * xhat.row(r).array()).sum();
      g.row(r) = (inv_std[r] / static_cast<double>(m)) *
                 (static_cast<double>(m) * dy - sum_dy - xhat.row(r).array() * sum_dy_xhat);
    }
    parent(self, 0).accumulate(g);
  });
}

Tensor batch_norm(const Tensor& a, BatchNormStats& stats, Mode mode, double eps, double momentum) {
  const Index n = a.rows();
  const Index m = a.cols();
  require(stats.running_mean.rows() == 1 && stats.running_mean.cols() == m && stats.running_var.cols() == m,
          "batch_norm", "running statistics must be 1x" + std::to_string(m));
  const Matrix& x = a.value();
  if (mode == Mode::eval) {
    const Eigen::RowVectorXd inv_std = (stats.running_var.row(0).array() + eps).rsqrt();
    Matrix out = (x.rowwise() - stats.running_mean.row(0)).array().rowwise() * inv_std.array();
    return make(std::move(out), {a}, "batch_norm_eval", [inv_std](Node& self) {
      Matrix g = self.grad.array().rowwise() * inv_std.array();
      parent(self, 0).accumulate(g);
    });
  }
  require(n >= 1, "batch_norm", "empty batch");
  const Eigen::RowVectorXd mu = x.colwise().mean();
  const Matrix centered = x.rowwise() - mu;
  const Eigen::RowVectorXd var = centered.array().square().colwise().mean();
  const Eigen::RowVectorXd inv_std = (var.array() + eps).rsqrt();
  Matrix xhat = centered.array().rowwise() * inv_std.array();

  const double unbias = n > 1 ? static_cast<double>(n) / static_cast<double>(n - 1) : 1.0;
  stats.running_mean.row(0) = (1.0 - momentum) * stats.running_mean.row(0) + momentum * mu;
  stats.running_var.row(0) = (1.0 - momentum) * stats.running_var.row(0) + momentum * unbias * var;

  return make(xhat, {a}, "batch_norm_train", [xhat, inv_std](Node& self) {
    const double count = static_cast<double>(xhat.rows());
    const Eigen::RowVectorXd sum_dy = self.grad.colwise().sum();
    const Eigen::RowVectorXd sum_dy_xhat = self.grad.cwiseProduct(xhat).colwise().sum();
    Matrix g = (count * self.grad).rowwise() - sum_dy;
    g -= Matrix(xhat.array().rowwise() * sum_dy_xhat.array());
    g = g.array().rowwise() * (inv_std.array() / count);
    parent(self, 0).accumulate(g);
  });
}

Tensor sum(const Tensor& a) {
  Matrix out(1, 1);
  out(0, 0) = a.value().sum();
  return make(std::move(out), {a}, "sum", [](Node& self) {
    Node& x = parent(self, 0);
    x.accumulate(Matrix::Constant(x.value.rows(), x.value.cols(), self.grad(0, 0)));
  });
}

Tensor mean(const Tensor& a) {
  require(a.value().size() > 0, "mean", "empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(a.value().size()));
}

Tensor mean_rows(const Tensor& a) {
  require(a.rows() > 0, "mean_rows", "no rows");
  Matrix out = a.value().colwise().mean();
  return make(std::move(out), {a}, "mean_rows", [](Node& self) {
    Node& x = parent(self, 0);
    const double inv = 1.0 / static_cast<double>(x.value.rows());
    Matrix g = Matrix::Zero(x.value.rows(), x.value.cols());
    g.rowwise() += self.grad.row(0) * inv;
    x.accumulate(g);
  });
}

Tensor row_sum(const Tensor& a) {
  Matrix out = a.value().rowwise().sum();
  return make(std::move(out), {a}, "row_sum", [](Node& self) {
    Node& x = parent(self, 0);
    Matrix g = self.grad.col(0).replicate(1, x.value.cols());
    x.accumulate(g);
  });
}

Tensor broadcast_cols(const Tensor& a, Index m) {
  require(a.cols() == 1, "broadcast_cols", "input must have one column");
  Matrix out = a.value().col(0).replicate(1, m);
  return make(std::move(out), {a}, "broadcast_cols", [](Node& self) {
    parent(self, 0).accumulate(self.grad.rowwise().sum());
  });
}

Tensor gather_rows(const Tensor& a, std::span<const int> index) {
  check_index(index, a.rows(), "gather_rows");
  Matrix out(static_cast<Index>(index.size()), a.cols());
  for (std::size_t r = 0; r < index.size(); ++r) out.row(static_cast<Index>(r)) = a.value().row(index[r]);
  std::vector<int> idx(index.begin(), index.end());
  return make(std::move(out), {a}, "gather_rows", [idx](Node& self) {
    Node& x = parent(self, 0);
    Matrix g = Matrix::Zero(x.value.rows(), x.value.cols());
    for (std::size_t r = 0; r < idx.size(); ++r) g.row(idx[r]) += self.grad.row(static_cast<Index>(r));
    x.accumulate(g);
  });
}

Tensor scatter_sum(const Tensor& a, std::span<const int> index, Index n) {
  require(static_cast<Index>(index.size()) == a.rows(), "scatter_sum", "index length must equal row count");
  check_index(index, n, "scatter_sum");
  Matrix out = Matrix::Zero(n, a.cols());
  for (std::size_t r = 0; r < index.size(); ++r) out.row(index[r]) += a.value().row(static_cast<Index>(r));
  std::vector<int> idx(index.begin(), index.end());
  return make(std::move(out), {a}, "scatter_sum", [idx](Node& self) {
    Node& x = parent(self, 0);
    Matrix g(x.value.rows(), x.value.cols());
    for (std::size_t r = 0; r < idx.size(); ++r) g.row(static_cast<Index>(r)) = self.grad.row(idx[r]);
    x.accumulate(g);
  });
}

Tensor segment_mean(const Tensor& a, std::span<const int> segment, Index n_segments) {
  require(static_cast<Index>(segment.size()) == a.rows(), "segment_mean", "segment length must equal row count");
  check_index(segment, n_segments, "segment_mean");
  std::vector<double> counts(static_cast<std::size_t>(n_segments), 0.0);
  for (int s : segment) counts[static_cast<std::size_t>(s)] += 1.0;
  for (double c : counts) require(c > 0.0, "segment_mean", "empty segment");
  Matrix out = Matrix::Zero(n_segments, a.cols());
  for (std::size_t r = 0; r < segment.size(); ++r) out.row(segment[r]) += a.value().row(static_cast<Index>(r));
  for (Index s = 0; s < n_segments; ++s) out.row(s) /= counts[static_cast<std::size_t>(s)];
  std::vector<int> seg(segment.begin(), segment.end());
  return make(std::move(out), {a}, "segment_mean", [seg, counts](Node& self) {
    Node& x = parent(self, 0);
    Matrix g(x.value.rows(), x.value.cols());
    for (std::size_t r = 0; r < seg.size(); ++r) {
      g.row(static_cast<Index>(r)) = self.grad.row(seg[r]) / counts[static_cast<std::size_t>(seg[r])];
    }
    x.accumulate(g);
  });
}

Tensor segment_softmax(const Tensor& a, std::span<const int> segment, Index n_segments) {
  require(static_cast<Index>(segment.size()) == a.rows(), "segment_softmax", "segment length must equal row count");
  check_index(segment, n_segments, "segment_softmax");
  const Matrix& x = a.value();
  Matrix maxv = Matrix::Constant(n_segments, x.cols(), -std::numeric_limits<double>::infinity());
  for (std::size_t r = 0; r < segment.size(); ++r) {
    maxv.row(segment[r]) = maxv.row(segment[r]).cwiseMax(x.row(static_cast<Index>(r)));
  }
  Matrix e(x.rows(), x.cols());
  Matrix denom = Matrix::Zero(n_segments, x.cols());
  for (std::size_t r = 0; r < segment.size(); ++r) {
    const Index row = static_cast<Index>(r);
    e.row(row) = (x.row(row) - maxv.row(segment[r])).array().exp();
    denom.row(segment[r]) += e.row(row);
  }
  Matrix y(x.rows(), x.cols());
  for (std::size_t r = 0; r < segment.size(); ++r) {
    const Index row = static_cast<Index>(r);
    y.row(row) = e.row(row).cwiseQuotient(denom.row(segment[r]));
  }
  std::vector<int> seg(segment.begin(), segment.end());
  return make(y, {a}, "segment_softmax", [seg, y, n_segments](Node& self) {
    Matrix dot = Matrix::Zero(n_segments, y.cols());
    for (std::size_t r = 0; r < seg.size(); ++r) {
      dot.row(seg[r]) += self.grad.row(static_cast<Index>(r)).cwiseProduct(y.row(static_cast<Index>(r)));
    }
    Matrix g(y.rows(), y.cols());
    for (std::size_t r = 0; r < seg.size(); ++r) {
      const Index row = static_cast<Index>(r);
      g.row(row) = y.row(row).cwiseProduct(self.grad.row(row) - dot.row(seg[r]));
    }
    parent(self, 0).accumulate(g);
  });
}

void backward(const Tensor& root) {
  require(root.defined() && root.rows() == 1 && root.cols() == 1, "backward", "root must be a scalar");
  if (!root.requires_grad()) return;

  // Iterative post-order DFS gives a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack{{root.node().get(), 0}};
  visited.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (p->requires_grad && visited.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  Matrix seed(1, 1);
  seed(0, 0) = 1.0;
  root.node()->accumulate(seed);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (node->backward && node->grad.size() != 0) node->backward(*node);
  }
}

Tensor& ParameterStore::add(const std::string& name, Matrix init) {
  auto [it, inserted] = params_.try_emplace(name, Tensor::parameter(std::move(init)));
  if (!inserted) throw TensorError("duplicate parameter '" + name + "'");
  return it->second;
}

Tensor& ParameterStore::get(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw TensorError("unknown parameter '" + name + "'");
  return it->second;
}

const Tensor& ParameterStore::get(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw TensorError("unknown parameter '" + name + "'");
  return it->second;
}

BatchNormStats& ParameterStore::add_batch_norm(const std::string& name, Index width) {
  BatchNormStats s{Matrix::Zero(1, width), Matrix::Ones(1, width)};
  auto [it, inserted] = stats_.try_emplace(name, std::move(s));
  if (!inserted) throw TensorError("duplicate batch norm '" + name + "'");
  return it->second;
}

BatchNormStats& ParameterStore::batch_norm(const std::string& name) {
  auto it = stats_.find(name);
  if (it == stats_.end()) throw TensorError("unknown batch norm '" + name + "'");
  return it->second;
}

const BatchNormStats& ParameterStore::batch_norm(const std::string& name) const {
  auto it = stats_.find(name);
  if (it == stats_.end()) throw TensorError("unknown batch norm '" + name + "'");
  return it->second;
}

std::size_t ParameterStore::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : params_) n += static_cast<std::size_t>(t.value().size());
  return n;
}

void ParameterStore::zero_grad() {
  for (auto& [name, t] : params_) t.zero_grad();
}

void ParameterStore::set_all(double value) {
  for (auto& [name, t] : params_) t.mutable_value().setConstant(value);
}

namespace {

nlohmann::json matrix_json(const Matrix& m) {
  return {{"shape", {m.rows(), m.cols()}}, {"values", std::vector<double>(m.data(), m.data() + m.size())}};
}

void load_matrix(const nlohmann::json& j, Matrix& m, const std::string& name) {
  const auto shape = j.at("shape").get<std::array<Index, 2>>();
  const auto values = j.at("values").get<std::vector<double>>();
  if (shape[0] != m.rows() || shape[1] != m.cols() || static_cast<Index>(values.size()) != m.size()) {
    throw TensorError("checkpoint shape mismatch for '" + name + "'");
  }
  std::copy(values.begin(), values.end(), m.data());
}

}  // namespace

std::string ParameterStore::to_json() const {
  nlohmann::json j;
  j["parameters"] = nlohmann::json::object();
  for (const auto& [name, t] : params_) j["parameters"][name] = matrix_json(t.value());
  j["buffers"] = nlohmann::json::object();
  for (const auto& [name, s] : stats_) {
    j["buffers"][name + ".running_mean"] = matrix_json(s.running_mean);
    j["buffers"][name + ".running_var"] = matrix_json(s.running_var);
  }
  return j.dump();
}

void ParameterStore::load_json(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
    const auto& params = j.at("parameters");
    for (auto& [name, t] : params_) {
      if (!params.contains(name)) throw TensorError("checkpoint lacks parameter '" + name + "'");
      load_matrix(params.at(name), t.mutable_value(), name);
    }
    const auto& buffers = j.at("buffers");
    for (auto& [name, s] : stats_) {
      load_matrix(buffers.at(name + ".running_mean"), s.running_mean, name);
      load_matrix(buffers.at(name + ".running_var"), s.running_var, name);
    }
  } catch (const nlohmann::json::exception& e) {
    throw TensorError(std::string("invalid checkpoint: ") + e.what());
  }
}

}  // namespace matformer::tensor

#pragma once

#include <Eigen/Dense>

#include <functional>
#include <map>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace matformer::tensor {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Index = Eigen::Index;

class TensorError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// One value in the computation graph. Gradients are allocated on first
/// accumulation.
struct Node {
  Matrix value;
  Matrix grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;
  std::string_view op = "leaf";

  void accumulate(const Matrix& g);
};

/// Handle to a 2-D f64 array taking part in forward evaluation and
/// reverse-mode differentiation. Copies share the underlying node.
class Tensor {
 public:
  Tensor() = default;

  static Tensor constant(Matrix value);
  static Tensor parameter(Matrix value);
  static Tensor scalar(double v);

  const Matrix& value() const { return node_->value; }
  /// Direct write access for optimizers; must not be used on nodes that are
  /// part of a live graph.
  Matrix& mutable_value() { return node_->value; }
  const Matrix& grad() const { return node_->grad; }
  bool has_grad() const { return node_ && node_->grad.size() != 0; }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  void zero_grad() { node_->grad.resize(0, 0); }

  Index rows() const { return node_->value.rows(); }
  Index cols() const { return node_->value.cols(); }
  double item() const;
  bool defined() const { return static_cast<bool>(node_); }

  const std::shared_ptr<Node>& node() const { return node_; }
  explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

 private:
  std::shared_ptr<Node> node_;
};

// Elementwise and linear algebra.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor hadamard(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
/// a (n x m) + row (1 x m), broadcast over rows.
Tensor add_row(const Tensor& a, const Tensor& row);
/// a (n x m) * row (1 x m), broadcast over rows.
Tensor mul_row(const Tensor& a, const Tensor& row);
/// Column concatenation: (n x m1) | (n x m2) | ...
Tensor concat_cols(std::span<const Tensor> parts);
/// Columns [begin, begin + count) of a.
Tensor slice_cols(const Tensor& a, Index begin, Index count);

// Activations.
Tensor sigmoid(const Tensor& a);
Tensor silu(const Tensor& a);
Tensor softplus(const Tensor& a);

enum class Activation { silu, softplus, sigmoid };
Tensor activate(const Tensor& a, Activation act);
Activation activation_from_string(std::string_view name);
std::string_view to_string(Activation act);

// Normalization.
inline constexpr double kNormEps = 1e-5;
inline constexpr double kBatchNormMomentum = 0.1;

/// Per-row standardisation (x - mean) / sqrt(var + eps), no affine part.
Tensor layer_norm(const Tensor& a, double eps = kNormEps);

enum class Mode { train, eval };

/// Running statistics owned by the caller; updated in train mode only.
struct BatchNormStats {
  Matrix running_mean;  // 1 x m
  Matrix running_var;   // 1 x m
};

/// Per-column standardisation. Train mode uses batch statistics (biased
/// variance) and folds them into `stats` with momentum 0.1 (unbiased
/// variance); eval mode uses `stats` as constants.
Tensor batch_norm(const Tensor& a, BatchNormStats& stats, Mode mode, double eps = kNormEps,
                  double momentum = kBatchNormMomentum);

// Reductions and graph plumbing.
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
/// 1 x m column means.
Tensor mean_rows(const Tensor& a);
/// n x 1 row sums.
Tensor row_sum(const Tensor& a);
/// (n x 1) -> (n x m) by repeating the single column.
Tensor broadcast_cols(const Tensor& a, Index m);
/// out.row(r) = a.row(index[r]).
Tensor gather_rows(const Tensor& a, std::span<const int> index);
/// out.row(index[r]) += a.row(r), out has `n` rows; accumulation follows row order.
Tensor scatter_sum(const Tensor& a, std::span<const int> index, Index n);
/// Mean of the rows sharing a segment id; out has `n_segments` rows.
Tensor segment_mean(const Tensor& a, std::span<const int> segment, Index n_segments);
/// Softmax over the rows of each segment, independently per column.
Tensor segment_softmax(const Tensor& a, std::span<const int> segment, Index n_segments);

/// Accumulates d(root)/d(x) into every reachable node that requires grad.
void backward(const Tensor& root);

/// Named trainable parameters plus non-trainable buffers (e.g. running
/// statistics). Iteration order is by name.
class ParameterStore {
 public:
  Tensor& add(const std::string& name, Matrix init);
  Tensor& get(const std::string& name);
  const Tensor& get(const std::string& name) const;
  bool contains(const std::string& name) const { return params_.contains(name); }

  BatchNormStats& add_batch_norm(const std::string& name, Index width);
  BatchNormStats& batch_norm(const std::string& name);
  const BatchNormStats& batch_norm(const std::string& name) const;

  std::map<std::string, Tensor>& parameters() { return params_; }
  const std::map<std::string, Tensor>& parameters() const { return params_; }
  const std::map<std::string, BatchNormStats>& batch_norms() const { return stats_; }

  std::size_t parameter_count() const;
  void zero_grad();
  void set_all(double value);

  /// {"parameters": {name: {"shape": [r, c], "values": [...]}}, "buffers": {...}}
  /// Doubles are written with round-trip precision.
  std::string to_json() const;
  /// Loads values into an identically shaped store.
  void load_json(std::string_view text);

 private:
  std::map<std::string, Tensor> params_;
  std::map<std::string, BatchNormStats> stats_;
};

}  // namespace matformer::tensor

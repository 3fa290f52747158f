#include "matformer/training.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numbers>
#include <numeric>
#include <sstream>

#include "matformer/synthetic.hpp"

namespace matformer {

using tensor::Matrix;
using tensor::Mode;
using tensor::Tensor;

void adam_step(tensor::ParameterStore& params, AdamState& state, double lr, const AdamConfig& config) {
  for (const auto& [name, p] : params.parameters()) {
    if (p.has_grad() && !p.grad().allFinite()) {
      throw TrainingError("non-finite gradient for parameter '" + name + "'; step rejected");
    }
  }
  ++state.step;
  const double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.step));
  for (auto& [name, p] : params.parameters()) {
    Matrix& w = p.mutable_value();
    auto [mit, m_new] = state.m.try_emplace(name, Matrix::Zero(w.rows(), w.cols()));
    auto [vit, v_new] = state.v.try_emplace(name, Matrix::Zero(w.rows(), w.cols()));
    Matrix& m = mit->second;
    Matrix& v = vit->second;
    const Matrix g = p.has_grad() ? p.grad() : Matrix::Zero(w.rows(), w.cols());

    w *= (1.0 - lr * config.weight_decay);
    m = config.beta1 * m + (1.0 - config.beta1) * g;
    v = config.beta2 * v + (1.0 - config.beta2) * g.cwiseProduct(g);
    const Matrix m_hat = m / bc1;
    const Matrix v_hat = v / bc2;
    w.array() -= lr * m_hat.array() / (v_hat.array().sqrt() + config.eps);
  }
}

double one_cycle_lr(long step, long total_steps, double lr_max, double pct_start, double div, double final_div) {
  if (total_steps <= 0) return lr_max / div;
  const double s = std::clamp(static_cast<double>(step), 0.0, static_cast<double>(total_steps));
  const double peak = pct_start * static_cast<double>(total_steps);
  auto anneal = [](double from, double to, double t) { return to + (from - to) * 0.5 * (1.0 + std::cos(std::numbers::pi * t)); };
  if (s <= peak && peak > 0.0) return anneal(lr_max / div, lr_max, s / peak);
  const double span = static_cast<double>(total_steps) - peak;
  return anneal(lr_max, lr_max / final_div, span > 0.0 ? (s - peak) / span : 1.0);
}

namespace {

void check_metric_input(std::span<const double> preds, std::span<const double> targets) {
  if (preds.empty()) throw std::invalid_argument("metric needs at least one prediction");
  if (preds.size() != targets.size()) throw std::invalid_argument("predictions and targets differ in length");
}

}  // namespace

double mae(std::span<const double> preds, std::span<const double> targets) {
  check_metric_input(preds, targets);
  double s = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) s += std::abs(preds[i] - targets[i]);
  return s / static_cast<double>(preds.size());
}

double ewt(std::span<const double> preds, std::span<const double> targets, double threshold) {
  check_metric_input(preds, targets);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (std::abs(preds[i] - targets[i]) < threshold) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(preds.size());
}

namespace {

template <class T>
void read_number(const std::map<std::string, std::string>& entries, const std::string& k, T& field) {
  auto it = entries.find(k);
  if (it == entries.end()) return;
  std::size_t used = 0;
  try {
    if constexpr (std::is_integral_v<T>) {
      field = static_cast<T>(std::stoll(it->second, &used));
    } else {
      field = std::stod(it->second, &used);
    }
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != it->second.size()) {
    throw std::invalid_argument("config value for '" + k + "' is not a number: " + it->second);
  }
}

}  // namespace

TrainConfig train_config_from(const std::map<std::string, std::string>& entries, TrainConfig c) {
  read_number(entries, "lr_max", c.lr_max);
  read_number(entries, "epochs", c.epochs);
  read_number(entries, "batch_size", c.batch_size);
  read_number(entries, "weight_decay", c.weight_decay);
  read_number(entries, "pct_start", c.pct_start);
  read_number(entries, "div_factor", c.div_factor);
  read_number(entries, "final_div", c.final_div);
  read_number(entries, "seed", c.seed);
  read_number(entries, "max_steps", c.max_steps);
  if (auto it = entries.find("grad_clip"); it != entries.end() && it->second != "none") {
    double clip = 0.0;
    read_number(entries, "grad_clip", clip);
    if (!(clip > 0.0)) throw std::invalid_argument("grad_clip must be positive");
    c.grad_clip = clip;
  }
  if (c.lr_max < 0.0 || c.epochs < 1 || c.batch_size < 1) {
    throw std::invalid_argument("lr_max must be >= 0, epochs and batch_size >= 1");
  }
  return c;
}

ModelConfig model_config_from(const std::map<std::string, std::string>& entries, ModelConfig c) {
  read_number(entries, "n_layers", c.n_layers);
  read_number(entries, "n_heads", c.n_heads);
  read_number(entries, "d_model", c.d_model);
  read_number(entries, "readout_hidden", c.readout_hidden);
  read_number(entries, "n_kernels", c.n_kernels);
  read_number(entries, "rbf_lo", c.rbf_lo);
  read_number(entries, "rbf_hi", c.rbf_hi);
  if (auto it = entries.find("attention"); it != entries.end()) c.attention = attention_variant_from_string(it->second);
  c.validate();
  return c;
}

namespace {

std::vector<const CrystalGraph*> pick(const GraphDataset& data, std::span<const std::size_t> idx) {
  std::vector<const CrystalGraph*> out;
  out.reserve(idx.size());
  for (std::size_t i : idx) out.push_back(&data.graphs[i]);
  return out;
}

void clip_gradients(tensor::ParameterStore& params, double max_norm) {
  double total = 0.0;
  for (const auto& [name, p] : params.parameters()) {
    if (p.has_grad()) total += p.grad().squaredNorm();
  }
  total = std::sqrt(total);
  if (total <= max_norm || total == 0.0) return;
  const double factor = max_norm / total;
  for (auto& [name, p] : params.parameters()) {
    if (p.has_grad()) p.node()->grad *= factor;
  }
}

}  // namespace

std::vector<double> predict(MatformerModel& model, const GraphDataset& data, int batch_size) {
  std::vector<double> out;
  out.reserve(data.size());
  std::vector<std::size_t> idx(data.size());
  std::iota(idx.begin(), idx.end(), 0);
  for (std::size_t start = 0; start < idx.size(); start += static_cast<std::size_t>(batch_size)) {
    const std::size_t end = std::min(idx.size(), start + static_cast<std::size_t>(batch_size));
    const auto graphs = pick(data, std::span(idx).subspan(start, end - start));
    const Tensor pred = model.forward(model.featurize(graphs), Mode::eval);
    for (tensor::Index r = 0; r < pred.rows(); ++r) out.push_back(pred.value()(r, 0));
  }
  return out;
}

TrainResult train(MatformerModel& model, const GraphDataset& train_set, const GraphDataset& val,
                  const TrainConfig& config) {
  if (train_set.size() == 0) throw TrainingError("training set is empty");
  if (train_set.targets.size() != train_set.size()) throw TrainingError("training targets do not match graphs");
  const GraphDataset& val_set = val.size() > 0 ? val : train_set;

  const std::size_t batch = static_cast<std::size_t>(config.batch_size);
  const long batches_per_epoch = static_cast<long>((train_set.size() + batch - 1) / batch);
  long total_steps = static_cast<long>(config.epochs) * batches_per_epoch;
  if (config.max_steps > 0) total_steps = std::min(total_steps, config.max_steps);
  const AdamConfig adam{0.9, 0.999, 1e-8, config.weight_decay};

  TrainResult result;
  result.best_val_mae = std::numeric_limits<double>::infinity();
  AdamState state;
  Rng rng(config.seed);
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);

  long step = 0;
  for (int epoch = 1; epoch <= config.epochs && step < total_steps; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    int loss_count = 0;
    double lr = 0.0;
    for (std::size_t start = 0; start < order.size() && step < total_steps; start += batch) {
      const std::size_t end = std::min(order.size(), start + batch);
      const auto idx = std::span(order).subspan(start, end - start);
      Matrix target(static_cast<tensor::Index>(idx.size()), 1);
      for (std::size_t r = 0; r < idx.size(); ++r) target(static_cast<tensor::Index>(r), 0) = train_set.targets[idx[r]];

      model.parameters().zero_grad();
      Tensor loss;
      try {
        const Tensor pred = model.forward(model.featurize(pick(train_set, idx)), Mode::train);
        const Tensor diff = tensor::sub(pred, Tensor::constant(std::move(target)));
        loss = tensor::mean(tensor::hadamard(diff, diff));
        if (!std::isfinite(loss.item())) throw tensor::TensorError("loss is not finite");
        tensor::backward(loss);
      } catch (const tensor::TensorError& e) {
        // The engine refuses non-finite values; the step is abandoned before any update.
        std::ostringstream os;
        os << "non-finite loss at epoch " << epoch << ", step " << step << ": " << e.what();
        throw TrainingError(os.str());
      }
      if (config.grad_clip) clip_gradients(model.parameters(), *config.grad_clip);
      lr = one_cycle_lr(step, total_steps, config.lr_max, config.pct_start, config.div_factor, config.final_div);
      adam_step(model.parameters(), state, lr, adam);
      loss_sum += loss.item();
      ++loss_count;
      ++step;
    }

    const std::vector<double> preds = predict(model, val_set, config.batch_size);
    EpochLog entry;
    entry.epoch = epoch;
    entry.lr = lr;
    entry.train_loss = loss_sum / std::max(loss_count, 1);
    entry.val_mae = mae(preds, val_set.targets);
    entry.ewt_001 = ewt(preds, val_set.targets, 0.01);
    entry.ewt_002 = ewt(preds, val_set.targets, 0.02);
    result.log.push_back(entry);
    if (entry.val_mae < result.best_val_mae) {
      result.best_val_mae = entry.val_mae;
      result.best_epoch = epoch;
      result.best_checkpoint = model.save_checkpoint();
    }
  }
  result.steps = step;
  return result;
}

std::string training_log_csv(const std::vector<EpochLog>& log) {
  std::ostringstream os;
  os << std::setprecision(17);
  os << "epoch,lr,train_loss,val_mae,ewt_0.01,ewt_0.02\n";
  for (const auto& e : log) {
    os << e.epoch << ',' << e.lr << ',' << e.train_loss << ',' << e.val_mae << ',' << e.ewt_001 << ',' << e.ewt_002
       << '\n';
  }
  return os.str();
}

DatasetSplit split_indices(std::size_t n, double train_fraction, double val_fraction, std::uint64_t seed) {
  if (train_fraction < 0.0 || val_fraction < 0.0 || train_fraction + val_fraction > 1.0) {
    throw std::invalid_argument("split fractions must be non-negative and sum to at most 1");
  }
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  const auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(n)));
  const auto n_val = std::min(n - n_train, static_cast<std::size_t>(std::llround(val_fraction * static_cast<double>(n))));
  DatasetSplit s;
  s.train.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_train));
  s.val.assign(idx.begin() + static_cast<std::ptrdiff_t>(n_train),
               idx.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
  s.test.assign(idx.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), idx.end());
  return s;
}

GraphDataset subset(const GraphDataset& data, std::span<const std::size_t> indices) {
  GraphDataset out;
  for (std::size_t i : indices) {
    if (!data.ids.empty()) out.ids.push_back(data.ids[i]);
    out.graphs.push_back(data.graphs[i]);
    out.targets.push_back(data.targets[i]);
  }
  return out;
}

}  // namespace matformer

// Acceptance suite: one PASS/FAIL line per criterion. Criteria with several
// parts can be run part by part, e.g. `--criterion 1.tfc_supercell`.

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cmath>
#include <functional>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "matformer/audit.hpp"
#include "matformer/training.hpp"
#include "matformer/synthetic.hpp"
#include "oracles.hpp"

using namespace matformer;
using tensor::Matrix;
using tensor::Mode;
using tensor::Tensor;

namespace {

struct Outcome {
  bool pass = false;
  std::string summary;
  std::vector<std::string> details;
};

struct Part {
  int criterion;
  std::string name;
  std::function<Outcome()> run;
  // Wall-clock budget for the whole criterion, summed over its parts.
  double budget_seconds = 0.0;
};

constexpr std::uint64_t kCorpusSeed = 20240101;
constexpr int kCorpusSize = 100;
const std::array<std::array<int, 3>, 4> kAlphas = {{{1, 1, 1}, {2, 1, 1}, {2, 2, 1}, {2, 2, 2}}};

const std::vector<Crystal>& corpus() {
  static const std::vector<Crystal> c = random_corpus(kCorpusSize, kCorpusSeed);
  return c;
}

std::string fmt(double x) {
  std::ostringstream os;
  os << std::setprecision(3) << x;
  return os.str();
}

std::string alpha_str(const std::array<int, 3>& a) {
  return "(" + std::to_string(a[0]) + "," + std::to_string(a[1]) + "," + std::to_string(a[2]) + ")";
}

void perturb_batch_norms(MatformerModel& model, Rng& rng) {
  std::uniform_real_distribution<double> mean(-0.3, 0.3);
  std::uniform_real_distribution<double> var(0.5, 2.0);
  for (int l = 0; l < model.config().n_layers; ++l) {
    auto& s = model.parameters().batch_norm("layer" + std::to_string(l) + ".bn");
    for (Eigen::Index k = 0; k < s.running_mean.cols(); ++k) {
      s.running_mean(0, k) = mean(rng);
      s.running_var(0, k) = var(rng);
    }
  }
}

CrystalGraph with_self_edges(const Crystal& c) { return add_self_connecting_edges(build_radius_graph(c), c); }

ModelConfig small_model(int d_model, int layers, int heads) {
  ModelConfig m;
  m.d_model = d_model;
  m.n_layers = layers;
  m.n_heads = heads;
  m.readout_hidden = d_model;
  return m;
}

// ---------------------------------------------------------------- 1

Outcome periodic_audit(const GraphBuilder& builder, const std::string& name,
                       const std::vector<std::array<int, 3>>& alphas) {
  Outcome o;
  int violations = 0;
  for (std::size_t a = 0; a < alphas.size(); ++a) {
    PeriodicAuditOptions opts;
    opts.alphas = {alphas[a]};
    const AuditReport r = audit_periodic_invariance(builder, name, corpus(), 20, kCorpusSeed + a, opts);
    violations += r.violations;
    o.details.push_back(name + " alpha=" + alpha_str(alphas[a]) + ": " + audit_report_summary(r));
  }
  o.pass = violations == 0;
  o.summary = std::to_string(violations) + " violations";
  return o;
}

Outcome criterion1_radius() {
  const std::vector<std::array<int, 3>> all(kAlphas.begin(), kAlphas.end());
  Outcome o = periodic_audit(radius_builder(12, false), "radius", all);
  // Self-connecting edges belong to the chosen cell, so they are audited
  // against boundary shifts only.
  const Outcome self = periodic_audit(radius_builder(12, true), "radius+self", {{1, 1, 1}});
  o.details.insert(o.details.end(), self.details.begin(), self.details.end());
  o.pass = o.pass && self.pass;
  o.summary = "radius graph: " + o.summary + " over 4 supercell factors, " + self.summary + " with self edges";
  return o;
}

Outcome criterion1_tfc_unit() {
  Outcome o = periodic_audit(tfc_builder(12), "tfc(12)", {{1, 1, 1}});
  o.summary = "t-fully-connected, boundary shifts only: " + o.summary;
  return o;
}

Outcome criterion1_tfc_supercell() {
  Outcome o = periodic_audit(tfc_builder(12), "tfc(12)", {{2, 1, 1}, {2, 2, 1}, {2, 2, 2}});
  o.summary = "t-fully-connected under supercells: " + o.summary;
  o.details.push_back(
      "analysis: t-FC keeps the t smallest images per ordered atom pair. Replicating the cell by alpha splits each "
      "pair (i,j) into alpha1*alpha2*alpha3 pairs that each keep t edges, so a supercell node receives "
      "alpha1*alpha2*alpha3*t edges to copies of j where the unit cell gives t. The graphs differ by construction, "
      "not by numerical noise.");
  return o;
}

// ---------------------------------------------------------------- 2

Outcome criterion2() {
  Outcome o;
  int violations = 0;
  for (const auto& [builder, name] : std::vector<std::pair<GraphBuilder, std::string>>{
           {radius_builder(12, true), "radius+self"}, {tfc_builder(12), "tfc(12)"}}) {
    const AuditReport r = audit_e3_invariance(builder, name, corpus(), 20, kCorpusSeed + 7);
    violations += r.violations;
    o.details.push_back(audit_report_summary(r));
  }

  Rng rng(kCorpusSeed + 8);
  MatformerModel model(small_model(16, 2, 2), 11);
  perturb_batch_norms(model, rng);
  double worst = 0.0;
  for (const Crystal& c : corpus()) {
    const double ref = model.predict(with_self_edges(c));
    for (int t = 0; t < 20; ++t) {
      const Crystal moved = apply_e3(c, random_e3(rng));
      worst = std::max(worst, std::abs(model.predict(with_self_edges(moved)) - ref));
    }
  }
  o.details.push_back("model eval-mode max |delta| over 2000 transforms: " + fmt(worst));
  o.pass = violations == 0 && worst < 1e-6;
  o.summary = std::to_string(violations) + " signature violations, model delta " + fmt(worst);
  return o;
}

// ---------------------------------------------------------------- 3

Outcome criterion3() {
  Outcome o;
  const auto adversarial = adversarial_corpus();
  const AuditReport oc = audit_periodic_invariance([](const Crystal& c) { return ocgraph_builder(c, 0.5); },
                                                   "ocgraph(r=0.5)", adversarial, 50, kCorpusSeed + 3);
  o.details.push_back(audit_report_summary(oc));
  bool witness_ok = false;
  if (oc.witness) {
    const auto j = nlohmann::json::parse(audit_report_json(oc));
    witness_ok = j.at("witness").is_object() && j.at("witness").contains("crystal");
  }

  const std::vector<Crystal> ties{tie_crystal()};
  const AuditReport knn = audit_determinism(
      [](const Crystal& c, std::uint64_t s) { return knn_distance_only_builder(c, 12, s); }, "knn_distance_only(12)",
      ties, 8, kCorpusSeed + 4);
  o.details.push_back(audit_report_summary(knn));
  o.pass = oc.violations >= 1 && witness_ok && knn.violations >= 1;
  o.summary = "ocgraph violations=" + std::to_string(oc.violations) + (witness_ok ? " with witness" : " NO witness") +
              ", knn flagged=" + (knn.violations >= 1 ? "yes" : "no");
  return o;
}

// ---------------------------------------------------------------- 4

// Radius graph by exhaustive search over |k_a| <= K_a + 2.
std::vector<std::tuple<int, int, LatticeImage, double>> brute_force_radius_edges(const Crystal& c) {
  std::vector<std::tuple<int, int, LatticeImage, double>> edges;
  const Mat3& L = c.lattice();
  for (std::size_t i = 0; i < c.size(); ++i) {
    const double r = oracle::brute_force_radius(c, i, kDefaultNeighborRank);
    const auto K = image_bound(L, r);
    for (std::size_t j = 0; j < c.size(); ++j) {
      for (int a = -K[0] - 2; a <= K[0] + 2; ++a) {
        for (int b = -K[1] - 2; b <= K[1] + 2; ++b) {
          for (int g = -K[2] - 2; g <= K[2] + 2; ++g) {
            const LatticeImage k{a, b, g};
            if (i == j && k.is_zero()) continue;
            const Vec3 p = c.position(j) + L.transpose() * k.as_vector();
            const double d = (p - c.position(i)).norm();
            if (d <= r + kRadiusSlack) edges.emplace_back(static_cast<int>(j), static_cast<int>(i), k, d);
          }
        }
      }
    }
  }
  std::sort(edges.begin(), edges.end());
  return edges;
}

Outcome criterion4() {
  Outcome o;
  const auto cells = random_corpus(200, kCorpusSeed + 40);
  int bad_cells = 0;
  std::size_t total = 0;
  double worst_d = 0.0;
  for (std::size_t n = 0; n < cells.size(); ++n) {
    const Crystal& c = cells[n];
    const auto want = brute_force_radius_edges(c);
    std::vector<std::tuple<int, int, LatticeImage, double>> got;
    for (const Edge& e : build_radius_graph(c).edges) got.emplace_back(e.src, e.dst, e.image, e.distance);
    std::sort(got.begin(), got.end());
    total += want.size();
    bool same = want.size() == got.size();
    for (std::size_t k = 0; same && k < want.size(); ++k) {
      same = std::get<0>(want[k]) == std::get<0>(got[k]) && std::get<1>(want[k]) == std::get<1>(got[k]) &&
             std::get<2>(want[k]) == std::get<2>(got[k]);
      if (same) worst_d = std::max(worst_d, std::abs(std::get<3>(want[k]) - std::get<3>(got[k])));
    }
    if (!same || worst_d > 1e-12) {
      ++bad_cells;
      if (bad_cells <= 3) o.details.push_back("cell " + std::to_string(n) + " differs");
    }
  }
  o.details.push_back(std::to_string(total) + " edges compared, worst distance difference " + fmt(worst_d));
  o.pass = bad_cells == 0;
  o.summary = std::to_string(bad_cells) + " of 200 cells with discrepancies";
  return o;
}

// ---------------------------------------------------------------- 5

Outcome criterion5() {
  Outcome o;
  Rng rng(kCorpusSeed + 50);
  double worst = 0.0;
  for (int n = 0; n < 100; ++n) {
    const Mat3 Q = random_orthogonal(rng);
    const Mat3 L = random_crystal(rng).lattice() * Q.transpose();
    const Vec3 l1 = L.row(0), l2 = L.row(1), l3 = L.row(2);
    const std::array<double, 6> six = {l1.norm(), l2.norm(), l3.norm(), (l1 + l2).norm(), (l1 + l3).norm(),
                                       (l2 + l3).norm()};
    const Mat3 gram = lattice_gram_from_six(six);
    worst = std::max(worst, (gram - L * L.transpose()).cwiseAbs().maxCoeff());
  }
  o.pass = worst < 1e-9;
  o.summary = "max Gram entry error " + fmt(worst) + " over 100 lattices";
  return o;
}

// ---------------------------------------------------------------- 6

Outcome criterion6() {
  Outcome o;
  MatformerModel model(small_model(8, 2, 2), 61);
  Rng rng(kCorpusSeed + 60);
  perturb_batch_norms(model, rng);
  RandomCrystalOptions opts;
  opts.max_atoms = 3;
  const auto crystals = random_corpus(2, kCorpusSeed + 61, opts);
  std::vector<CrystalGraph> graphs;
  for (const auto& c : crystals) graphs.push_back(with_self_edges(c));
  std::vector<const CrystalGraph*> ptrs;
  for (const auto& g : graphs) ptrs.push_back(&g);
  Matrix target(2, 1);
  target << 0.3, -0.2;

  bool pass = true;
  for (Mode mode : {Mode::train, Mode::eval}) {
    // Train mode updates running statistics; keep them fixed across probes.
    const auto saved = model.parameters().batch_norms();
    auto loss = [&]() {
      for (const auto& [name, s] : saved) model.parameters().batch_norm(name) = s;
      const Tensor diff = tensor::sub(model.forward(model.featurize(ptrs), mode), Tensor::constant(target));
      return tensor::mean(tensor::hadamard(diff, diff));
    };
    const auto r = oracle::grad_check(model.parameters(), loss);
    bool zeros_ok = true;
    for (const auto& name : r.zero_params) zeros_ok = zeros_ok && mode == Mode::train && name.ends_with("merge.b");
    pass = pass && r.worst_tensor_rel < 1e-4 && r.worst_entry_rel < 1e-4 && r.unresolved_max_abs < 1e-9 && zeros_ok;
    std::string zero_names;
    for (const auto& name : r.zero_params) zero_names += (zero_names.empty() ? "" : ",") + name;
    o.details.push_back(std::string(mode == Mode::train ? "train" : "eval") + " mode: " + std::to_string(r.checked) +
                        " entries; worst tensor rel err " + fmt(r.worst_tensor_rel) + " (" + r.worst_tensor +
                        "); worst entry rel err " + fmt(r.worst_entry_rel) + " (" + r.worst_entry + "); " +
                        std::to_string(r.unresolved) + " entries below 1e-6 agree to " +
                        fmt(r.unresolved_max_abs) + " absolute" +
                        (zero_names.empty() ? "" : "; zero-gradient tensors: " + zero_names));
  }
  o.pass = pass;
  o.summary = pass ? "all parameters within rel err 1e-4" : "finite-difference mismatch";
  return o;
}

// ---------------------------------------------------------------- 7

Outcome criterion7() {
  Outcome o;
  Rng rng(kCorpusSeed + 70);
  MatformerModel model(small_model(16, 2, 2), 71);
  perturb_batch_norms(model, rng);
  const auto crystals = random_corpus(20, kCorpusSeed + 71);
  double worst = 0.0;
  double worst_self = 0.0;
  for (const Crystal& c : crystals) {
    const Crystal big = supercell(c, {2, 2, 2});
    worst = std::max(worst, std::abs(model.predict(build_radius_graph(c)) - model.predict(build_radius_graph(big))));
    worst_self = std::max(worst_self, std::abs(model.predict(with_self_edges(c)) - model.predict(with_self_edges(big))));
  }
  o.details.push_back("radius graph without self edges: max |delta| " + fmt(worst));
  o.details.push_back("for reference, with self edges of the chosen cell: max |delta| " + fmt(worst_self) +
                      " (the six lattice edges double in a (2,2,2) supercell)");
  o.pass = worst < 1e-5;
  o.summary = "max |f(c) - f(supercell)| = " + fmt(worst);
  return o;
}

// ---------------------------------------------------------------- 8

Outcome criterion8() {
  Outcome o;
  RandomCrystalOptions opts;
  opts.max_atoms = 4;
  const auto crystals = random_corpus(32, kCorpusSeed + 80, opts);
  GraphDataset data;
  for (std::size_t k = 0; k < crystals.size(); ++k) {
    data.ids.push_back(std::to_string(k));
    data.graphs.push_back(with_self_edges(crystals[k]));
    data.targets.push_back(mean_lattice_length(crystals[k]));
  }
  double mean = 0.0;
  for (double t : data.targets) mean += t / static_cast<double>(data.targets.size());
  double var = 0.0;
  for (double t : data.targets) var += (t - mean) * (t - mean) / static_cast<double>(data.targets.size() - 1);
  const double sd = std::sqrt(var);

  TrainConfig cfg;
  cfg.lr_max = 3e-3;
  cfg.epochs = 500;
  cfg.batch_size = 32;
  cfg.weight_decay = 0.0;
  cfg.seed = 81;
  const ModelConfig m = small_model(16, 2, 2);
  MatformerModel a(m, 82);
  MatformerModel b(m, 82);
  const TrainResult ra = train(a, data, data, cfg);
  const TrainResult rb = train(b, data, data, cfg);
  const bool same_logs = training_log_csv(ra.log) == training_log_csv(rb.log);
  const double final_mae = mae(predict(a, data), data.targets);
  o.details.push_back("target mean_lattice_length: sd " + fmt(sd) + ", steps " + std::to_string(ra.steps) +
                      ", final train MAE " + fmt(final_mae) + ", best " + fmt(ra.best_val_mae) + " at epoch " +
                      std::to_string(ra.best_epoch));
  o.details.push_back(std::string("seeded runs produce ") + (same_logs ? "identical" : "DIFFERENT") + " logs");
  o.pass = ra.steps <= 500 && final_mae < 0.05 * sd && same_logs;
  o.summary = "train MAE " + fmt(final_mae) + " vs 5% of sd " + fmt(0.05 * sd);
  return o;
}

// ---------------------------------------------------------------- 9

Outcome criterion9() {
  Outcome o;
  bool pass = true;
  for (int n = 2; n <= 8; ++n) {
    const LineGraphSize closed = line_graph_size(n, 12);
    const LineGraphSize built = explicit_line_graph_size(regular_multigraph(n, 12));
    const bool ok = closed == built && closed.nodes == 6LL * n && closed.edges == 66LL * n;
    pass = pass && ok;
    o.details.push_back("n=" + std::to_string(n) + ": formula " + std::to_string(closed.nodes) + "/" +
                        std::to_string(closed.edges) + ", explicit " + std::to_string(built.nodes) + "/" +
                        std::to_string(built.edges));
  }
  o.pass = pass;
  o.summary = pass ? "6n nodes and 66n edges for n = 2..8" : "mismatch";
  return o;
}

// ---------------------------------------------------------------- 10

Outcome criterion10() {
  Outcome o;
  const std::vector<double> errors = {0.005, 0.03, 0.015};
  const std::vector<double> zeros = {0.0, 0.0, 0.0};
  const double e = ewt(errors, zeros, 0.02);
  Rng rng(kCorpusSeed + 100);
  std::normal_distribution<double> n(0.0, 3.0);
  std::vector<double> x(50);
  for (double& v : x) v = n(rng);
  const double self = mae(x, x);
  o.pass = e == 2.0 / 3.0 && self == 0.0;
  o.summary = "ewt = " + fmt(e) + ", mae(x,x) = " + fmt(self);
  return o;
}

// ---------------------------------------------------------------- 11

Outcome criterion11() {
  Outcome o;
  o.pass = true;
  o.summary = "statement recorded";
  o.details.push_back(
      "The published benchmark tables (absolute MAE and EwT on Materials Project and JARVIS tasks, e.g. a formation "
      "energy MAE of 0.021 eV/atom) are not reproducible at desk scale and are excluded. No such number is claimed "
      "here. Criteria 1-10 and 12 replace them with property-based checks of the method's own correctness claims.");
  return o;
}

// ---------------------------------------------------------------- 12

Outcome criterion12() {
  Outcome o;
  Rng rng(kCorpusSeed + 120);
  const Crystal c = random_corpus(1, kCorpusSeed + 121)[0];
  const CrystalGraph g = with_self_edges(c);
  CrystalGraph doubled = g;
  doubled.edges.insert(doubled.edges.end(), g.edges.begin(), g.edges.end());
  canonicalize_edge_order(doubled);

  const int d = 8;
  const auto n = static_cast<tensor::Index>(g.num_nodes());
  std::normal_distribution<double> normal(0.0, 1.0);
  auto random_rows = [&](tensor::Index rows, tensor::Index cols) {
    Matrix m(rows, cols);
    for (auto& v : m.reshaped()) v = normal(rng);
    return m;
  };
  const auto E = static_cast<tensor::Index>(g.edges.size());
  const Matrix alpha = random_rows(E, 3 * d);
  const Matrix values = random_rows(E, 3 * d);
  std::vector<int> dst;
  for (const Edge& e : g.edges) dst.push_back(e.dst);
  std::vector<int> dst2 = dst;
  dst2.insert(dst2.end(), dst.begin(), dst.end());
  Matrix alpha2(2 * E, 3 * d), values2(2 * E, 3 * d);
  alpha2 << alpha, alpha;
  values2 << values, values;
  const Tensor gamma = Tensor::constant(Matrix::Ones(1, 3 * d));
  const Tensor beta = Tensor::constant(Matrix::Zero(1, 3 * d));

  auto delta = [&](AttentionVariant v) {
    const Matrix once =
        aggregate_gated_values(Tensor::constant(alpha), Tensor::constant(values), dst, n, v, gamma, beta).value();
    const Matrix twice =
        aggregate_gated_values(Tensor::constant(alpha2), Tensor::constant(values2), dst2, n, v, gamma, beta).value();
    return (once - twice).cwiseAbs().maxCoeff();
  };
  const double d_default = delta(AttentionVariant::sigmoid_norm);
  const double d_softmax = delta(AttentionVariant::softmax_vector);
  o.details.push_back("gated aggregation, every edge duplicated: sigmoid_norm max |delta| " + fmt(d_default) +
                      ", softmax_vector max |delta| " + fmt(d_softmax));

  // Whole-model view, for context: per-edge message normalisation follows the
  // gate, so neither variant is exactly degree-invariant end to end.
  for (AttentionVariant v : {AttentionVariant::sigmoid_norm, AttentionVariant::softmax_vector}) {
    ModelConfig m = small_model(16, 2, 2);
    m.attention = v;
    MatformerModel model(m, 121);
    perturb_batch_norms(model, rng);
    const double dm = std::abs(model.predict(g) - model.predict(doubled));
    o.details.push_back("full model (" + std::string(to_string(v)) + "): |delta prediction| " + fmt(dm));
  }
  o.pass = d_default > 1e-3 && d_softmax < 1e-12;
  o.summary = "sigmoid_norm delta " + fmt(d_default) + ", softmax_vector delta " + fmt(d_softmax);
  return o;
}

std::vector<Part> all_parts() {
  return {
      {1, "radius", criterion1_radius, 120.0},
      {1, "tfc_unit_alpha", criterion1_tfc_unit, 120.0},
      {1, "tfc_supercell", criterion1_tfc_supercell, 120.0},
      {2, "", criterion2},
      {3, "", criterion3},
      {4, "", criterion4},
      {5, "", criterion5},
      {6, "", criterion6, 60.0},
      {7, "", criterion7},
      {8, "", criterion8},
      {9, "", criterion9},
      {10, "", criterion10},
      {11, "", criterion11},
      {12, "", criterion12},
  };
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria 1-12"};
  std::string only;
  bool list = false;
  app.add_option("--criterion,-c", only, "Run one criterion (e.g. 6) or one part (e.g. 1.radius)");
  app.add_flag("--list", list, "List criteria and parts");
  CLI11_PARSE(app, argc, argv);

  const auto parts = all_parts();
  if (list) {
    for (const Part& p : parts) std::cout << p.criterion << (p.name.empty() ? "" : "." + p.name) << '\n';
    return 0;
  }

  bool any = false;
  bool all_pass = true;
  for (int id = 1; id <= 12; ++id) {
    std::vector<const Part*> selected;
    for (const Part& p : parts) {
      if (p.criterion != id) continue;
      const std::string full = std::to_string(id) + (p.name.empty() ? "" : "." + p.name);
      if (only.empty() || only == std::to_string(id) || only == full) selected.push_back(&p);
    }
    if (selected.empty()) continue;
    any = true;

    bool pass = true;
    double seconds = 0.0;
    double budget = 0.0;
    std::vector<std::string> summaries;
    for (const Part* p : selected) {
      const auto t0 = std::chrono::steady_clock::now();
      const Outcome out = p->run();
      const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      seconds += s;
      budget = p->budget_seconds;
      pass = pass && out.pass;
      const std::string label = p->name.empty() ? "" : "[" + p->name + "] ";
      for (const auto& line : out.details) std::cout << "    " << label << line << '\n';
      if (selected.size() > 1 || !p->name.empty()) {
        std::cout << "  part " << id << '.' << p->name << ": " << (out.pass ? "PASS" : "FAIL") << " (" << out.summary
                  << ", " << fmt(s) << " s)\n";
      }
      summaries.push_back(label + out.summary);
    }
    std::string why;
    for (const auto& s : summaries) why += (why.empty() ? "" : "; ") + s;
    if (budget > 0.0) {
      const bool in_time = seconds < budget;
      why += "; runtime " + fmt(seconds) + " s of " + fmt(budget) + " s";
      pass = pass && in_time;
    }
    std::cout << "criterion " << id << ": " << (pass ? "PASS" : "FAIL") << " (" << why << ")" << std::endl;
    all_pass = all_pass && pass;
  }
  if (!any) {
    std::cerr << "no criterion matches '" << only << "'\n";
    return 2;
  }
  return all_pass ? 0 : 1;
}

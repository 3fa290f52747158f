#include "commands.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <limits>
#include <set>
#include <sstream>

#include "matformer/audit.hpp"
#include "matformer/io.hpp"
#include "matformer/synthetic.hpp"
#include "matformer/training.hpp"

namespace matformer::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::vector<std::pair<std::string, Crystal>> load_input(const std::string& path) {
  try {
    auto out = load_crystals(path);
    if (out.empty()) throw UsageError("no crystal files (.json, .poscar, .vasp, POSCAR*) in " + path);
    return out;
  } catch (const ParseError& e) {
    throw UsageError(e.what());
  }
}

void emit(const std::string& out, const std::string& text) {
  if (out.empty()) {
    std::cout << text;
    if (!text.empty() && text.back() != '\n') std::cout << '\n';
  } else {
    write_file_atomic(out, text);
  }
}

std::string render_graph(const CrystalGraph& g, const std::string& format) {
  return format == "text" ? write_graph_text(g) : write_graph_json(g) + "\n";
}

GraphBuilder graph_builder_for(const BuildGraphOptions& o) {
  if (o.method == "radius") {
    if (o.rank < 1) throw UsageError("--rank must be >= 1");
    return radius_builder(o.rank, o.self_edges.value_or(true));
  }
  if (o.method == "tfc") {
    if (o.t < 1) throw UsageError("--method tfc needs --t >= 1");
    return tfc_builder(o.t, o.self_edges.value_or(false));
  }
  throw UsageError("unknown --method '" + o.method + "' (expected radius or tfc)");
}

struct RunSettings {
  ModelConfig model;
  TrainConfig train;
  int neighbor_rank = kDefaultNeighborRank;
  double train_frac = 0.8;
  double val_frac = 0.1;
};

RunSettings read_settings(const std::string& path) {
  RunSettings s;
  try {
    const RunConfig cfg = parse_run_config(read_text_file(path));
    static const std::set<std::string> known = {
        "n_layers",   "n_heads",    "d_model",      "readout_hidden", "n_kernels", "rbf_lo",
        "rbf_hi",     "attention",  "lr_max",       "epochs",         "batch_size", "weight_decay",
        "pct_start",  "div_factor", "final_div",    "seed",           "max_steps", "grad_clip",
        "train_frac", "val_frac",   "neighbor_rank"};
    for (const auto& [key, value] : cfg) {
      if (!known.contains(key)) throw UsageError(path + ": unknown config key '" + key + "'");
    }
    s.model = model_config_from(cfg);
    s.train = train_config_from(cfg);
    auto number = [&](const char* key, auto& field) {
      if (auto it = cfg.find(key); it != cfg.end()) {
        std::istringstream is(it->second);
        if (!(is >> field) || !is.eof()) throw UsageError(path + ": '" + key + "' is not a number");
      }
    };
    number("neighbor_rank", s.neighbor_rank);
    number("train_frac", s.train_frac);
    number("val_frac", s.val_frac);
  } catch (const ParseError& e) {
    throw UsageError(path + ": " + e.what());
  } catch (const std::invalid_argument& e) {
    throw UsageError(path + ": " + e.what());
  }
  return s;
}

GraphDataset load_graph_dataset(const std::string& dir, int neighbor_rank) {
  std::vector<DatasetRecord> records;
  try {
    records = load_dataset(dir);
  } catch (const ParseError& e) {
    throw UsageError(e.what());
  }
  if (records.empty()) throw UsageError(dir + "/targets.csv lists no crystals");
  std::vector<Crystal> crystals;
  GraphDataset data;
  for (auto& r : records) {
    data.ids.push_back(r.id);
    data.targets.push_back(r.target);
    crystals.push_back(std::move(r.crystal));
  }
  data.graphs = build_graphs(crystals, radius_builder(neighbor_rank, true));
  return data;
}

std::string format_double(double x) {
  std::ostringstream os;
  os << std::setprecision(6) << x;
  return os.str();
}

}  // namespace

std::vector<std::array<int, 3>> parse_alphas(const std::string& text) {
  std::vector<std::array<int, 3>> out;
  std::stringstream groups(text);
  std::string group;
  while (std::getline(groups, group, ';')) {
    std::array<int, 3> a{};
    char c1 = 0;
    char c2 = 0;
    std::istringstream is(group);
    if (!(is >> a[0] >> c1 >> a[1] >> c2 >> a[2]) || c1 != ',' || c2 != ',' || !(is >> std::ws).eof()) {
      throw UsageError("--alphas expects groups like '1,1,1;2,2,1', got '" + group + "'");
    }
    if (a[0] < 1 || a[1] < 1 || a[2] < 1) throw UsageError("supercell factors must be >= 1");
    out.push_back(a);
  }
  if (out.empty()) throw UsageError("--alphas is empty");
  return out;
}

int run_build_graph(const BuildGraphOptions& o) {
  if (o.format != "json" && o.format != "text") throw UsageError("--format must be json or text");
  const GraphBuilder builder = graph_builder_for(o);
  const auto inputs = load_input(o.input);

  if (!fs::is_directory(o.input)) {
    emit(o.out, render_graph(builder(inputs.front().second), o.format));
    return kExitOk;
  }
  if (o.out.empty()) throw UsageError("a directory input needs --out <directory>");
  fs::create_directories(o.out);
  std::vector<Crystal> crystals;
  for (const auto& [id, c] : inputs) crystals.push_back(c);
  const auto graphs = build_graphs(crystals, builder);
  const std::string ext = o.format == "text" ? ".graph.txt" : ".graph.json";
  for (std::size_t k = 0; k < graphs.size(); ++k) {
    write_file_atomic(fs::path(o.out) / (inputs[k].first + ext), render_graph(graphs[k], o.format));
  }
  std::cout << "wrote " << graphs.size() << " graphs to " << o.out << '\n';
  return kExitOk;
}

int run_audit(const AuditOptions& o) {
  if (o.trials < 1) throw UsageError("--trials must be >= 1");
  if (o.check != "periodic" && o.check != "e3" && o.check != "all") {
    throw UsageError("--check must be periodic, e3 or all");
  }
  const auto alphas = parse_alphas(o.alphas);
  const bool supercells = std::any_of(alphas.begin(), alphas.end(), [](const auto& a) { return a != std::array{1, 1, 1}; });

  std::vector<Crystal> crystals;
  for (auto& [id, c] : load_input(o.input)) crystals.push_back(std::move(c));

  std::vector<AuditReport> reports;
  if (o.builder == "knn") {
    if (o.k < 1) throw UsageError("--k must be >= 1");
    const int k = o.k;
    reports.push_back(audit_determinism(
        [k](const Crystal& c, std::uint64_t s) { return knn_distance_only_builder(c, k, s); },
        "knn_distance_only(k=" + std::to_string(k) + ")", crystals, o.trials, o.seed));
  } else {
    GraphBuilder builder;
    std::string name;
    if (o.builder == "radius") {
      const bool self_edges = !o.no_self_edges;
      // Self-connecting edges are taken from one particular cell, so a
      // supercell legitimately gets different ones.
      if (self_edges && supercells) {
        throw UsageError("self-connecting edges depend on the chosen cell; add --no-self-edges for supercell audits");
      }
      builder = radius_builder(o.rank, self_edges);
      name = "radius(rank=" + std::to_string(o.rank) + (self_edges ? ",self_edges" : "") + ")";
    } else if (o.builder == "tfc") {
      builder = tfc_builder(o.t, false);
      name = "tfc(t=" + std::to_string(o.t) + ")";
    } else if (o.builder == "ocgraph") {
      if (!(o.cutoff > 0.0)) throw UsageError("--cutoff must be positive");
      const double r = o.cutoff;
      builder = [r](const Crystal& c) { return ocgraph_builder(c, r); };
      name = "ocgraph(r=" + format_double(r) + ")";
    } else {
      throw UsageError("unknown --builder '" + o.builder + "' (expected radius, tfc, ocgraph or knn)");
    }
    if (o.check != "e3") {
      PeriodicAuditOptions opts;
      opts.alphas = alphas;
      reports.push_back(audit_periodic_invariance(builder, name + " periodic", crystals, o.trials, o.seed, opts));
    }
    if (o.check != "periodic") {
      reports.push_back(audit_e3_invariance(builder, name + " e3", crystals, o.trials, o.seed));
    }
  }

  bool violated = false;
  json all = json::array();
  for (const auto& r : reports) {
    std::cerr << audit_report_summary(r) << '\n';
    all.push_back(json::parse(audit_report_json(r)));
    violated = violated || !r.passed();
  }
  const json doc = all.size() == 1 ? all.front() : json{{"reports", all}};
  emit(o.out, doc.dump(1) + "\n");
  return violated ? kExitViolation : kExitOk;
}

int run_featurize(const FeaturizeOptions& o) {
  FeaturizeConfig cfg;
  cfg.d_model = o.d_model;
  cfg.n_kernels = o.kernels;
  if (cfg.d_model < 1 || cfg.n_kernels < 2) throw UsageError("--d-model must be >= 1 and --kernels >= 2");
  const auto inputs = load_input(o.input);
  if (inputs.size() != 1) throw UsageError("featurize takes a single crystal file");
  const Crystal& c = inputs.front().second;
  const CrystalGraph g = add_self_connecting_edges(build_radius_graph(c, o.rank), c);

  Rng rng(o.seed);
  tensor::ParameterStore params;
  init_embedding_params(params, cfg, rng);
  const FeaturizedGraph f = featurize_graph(g, params, cfg);

  auto rows = [](const auto& m) {
    json out = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      out.push_back(std::vector<double>(m.row(r).data(), m.row(r).data() + m.cols()));
    }
    return out;
  };
  // Row-major copies; Eigen stores column-major.
  const tensor::Matrix node = f.node_input.value();
  const tensor::Matrix edge = f.edge_input.value();
  json doc;
  doc["d_model"] = cfg.d_model;
  doc["n_kernels"] = cfg.n_kernels;
  doc["seed"] = o.seed;
  doc["src"] = f.src;
  doc["dst"] = f.dst;
  doc["node_input"] = rows(Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>(node));
  doc["edge_input"] = rows(Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>(edge));
  emit(o.out, doc.dump(1) + "\n");
  return kExitOk;
}

int run_train(const TrainOptions& o) {
  const RunSettings s = read_settings(o.config);
  const GraphDataset data = load_graph_dataset(o.dataset, s.neighbor_rank);
  DatasetSplit split;
  try {
    split = split_indices(data.size(), s.train_frac, s.val_frac, s.train.seed);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  if (split.train.empty()) throw UsageError("train_frac leaves no training crystals");
  const GraphDataset train_set = subset(data, split.train);
  const GraphDataset val_set = subset(data, split.val);

  MatformerModel model(s.model, s.train.seed);
  const TrainResult r = train(model, train_set, val_set, s.train);
  write_file_atomic(o.out, r.best_checkpoint);
  if (!o.log.empty()) write_file_atomic(o.log, training_log_csv(r.log));

  std::cout << "train=" << split.train.size() << " val=" << split.val.size() << " test=" << split.test.size()
            << " steps=" << r.steps << '\n';
  std::cout << "best_epoch=" << r.best_epoch << " best_val_mae=" << format_double(r.best_val_mae) << '\n';
  if (!split.test.empty()) {
    model.load_checkpoint(r.best_checkpoint);
    const GraphDataset test_set = subset(data, split.test);
    const auto preds = predict(model, test_set, s.train.batch_size);
    std::cout << "test_mae=" << format_double(mae(preds, test_set.targets)) << '\n';
  }
  return kExitOk;
}

int run_predict(const PredictOptions& o) {
  const RunSettings s = read_settings(o.config);
  const GraphDataset data = load_graph_dataset(o.dataset, s.neighbor_rank);
  MatformerModel model(s.model, s.train.seed);
  try {
    model.load_checkpoint(read_text_file(o.checkpoint));
  } catch (const tensor::TensorError& e) {
    throw UsageError(o.checkpoint + " does not match the configured model: " + e.what());
  }
  const auto preds = predict(model, data, s.train.batch_size);
  std::vector<PredictionRow> rows;
  for (std::size_t k = 0; k < preds.size(); ++k) rows.push_back({data.ids[k], preds[k], data.targets[k]});
  write_file_atomic(o.out, write_predictions_csv(rows));
  std::cout << "n=" << preds.size() << " mae=" << format_double(mae(preds, data.targets))
            << " ewt_0.01=" << format_double(ewt(preds, data.targets, 0.01))
            << " ewt_0.02=" << format_double(ewt(preds, data.targets, 0.02)) << '\n';
  return kExitOk;
}

int run_bench(const BenchOptions& o) {
  if (o.count < 1 || o.repeats < 1) throw UsageError("--count and --repeats must be >= 1");
  RandomCrystalOptions opts;
  opts.max_atoms = o.max_atoms;
  const auto corpus = random_corpus(static_cast<std::size_t>(o.count), o.seed, opts);

  struct Case {
    std::string name;
    GraphBuilder builder;
  };
  const std::vector<Case> cases = {
      {"radius(12)", radius_builder(12, false)},
      {"radius(12)+self", radius_builder(12, true)},
      {"tfc(12)", tfc_builder(12)},
  };
  std::ostringstream os;
  os << std::left << std::setw(18) << "method" << std::right << std::setw(10) << "crystals" << std::setw(12)
     << "edges" << std::setw(12) << "best_ms" << std::setw(14) << "crystals/s" << '\n';
  for (const Case& c : cases) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t edges = 0;
    for (int r = 0; r < o.repeats; ++r) {
      const auto t0 = std::chrono::steady_clock::now();
      const auto graphs = build_graphs(corpus, c.builder, 1);
      const auto t1 = std::chrono::steady_clock::now();
      best = std::min(best, std::chrono::duration<double>(t1 - t0).count());
      edges = 0;
      for (const auto& g : graphs) edges += g.edges.size();
    }
    os << std::left << std::setw(18) << c.name << std::right << std::setw(10) << corpus.size() << std::setw(12)
       << edges << std::setw(12) << std::fixed << std::setprecision(2) << best * 1e3 << std::setw(14)
       << std::setprecision(1) << static_cast<double>(corpus.size()) / best << '\n'
       << std::defaultfloat;
  }
  emit(o.out, os.str());
  if (!o.out.empty()) std::cout << os.str();
  return kExitOk;
}

int run_line_graph_size(const LineGraphOptions& o) {
  if (o.n < 1) throw UsageError("--n must be >= 1");
  const LineGraphSize s = line_graph_size(o.n, o.degree);
  std::cout << "nodes=" << s.nodes << " edges=" << s.edges << '\n';
  return kExitOk;
}

}  // namespace matformer::cli

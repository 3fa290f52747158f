#include <CLI11.hpp>

#include <iostream>

#include "commands.hpp"
#include "matformer/graph.hpp"
#include "matformer/io.hpp"
#include "matformer/training.hpp"

using namespace matformer::cli;

int main(int argc, char** argv) {
  CLI::App app{"Periodic crystal graphs, invariance audits and a graph transformer for property regression"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "matformer 0.1.0");

  BuildGraphOptions bg;
  auto* build = app.add_subcommand("build-graph", "Build the multi-edge crystal graph of a crystal file or directory");
  build->add_option("input", bg.input, "POSCAR or crystal JSON file, or a directory of them")
      ->required()
      ->check(CLI::ExistingPath);
  build->add_option("--method", bg.method, "radius (12th-neighbour adaptive radius) or tfc (t smallest per pair)")
      ->capture_default_str();
  build->add_option("--rank", bg.rank, "Neighbour rank defining the adaptive radius")->capture_default_str();
  build->add_option("--t", bg.t, "Edges per ordered atom pair for --method tfc");
  build->add_flag("--self-edges,!--no-self-edges", bg.self_edges,
                  "Add the six self-connecting lattice edges (default: on for radius, off for tfc)");
  build->add_option("--format", bg.format, "json or text")->capture_default_str();
  build->add_option("--out,-o", bg.out, "Output file (directory for directory input); stdout when omitted");

  AuditOptions au;
  auto* audit = app.add_subcommand("audit", "Fuzz a graph construction for periodic or E(3) invariance");
  audit->add_option("input", au.input, "Crystal file or directory")->required()->check(CLI::ExistingPath);
  audit->add_option("--builder", au.builder, "radius, tfc, ocgraph or knn")->capture_default_str();
  audit->add_option("--check", au.check, "periodic, e3 or all (ignored for knn)")->capture_default_str();
  audit->add_option("--trials", au.trials, "Random transforms per crystal (runs per crystal for knn)")
      ->capture_default_str();
  audit->add_option("--seed", au.seed, "Seed for the random transforms")->capture_default_str();
  audit->add_option("--alphas", au.alphas, "Supercell factors sampled per trial, e.g. '1,1,1;2,2,2'")
      ->capture_default_str();
  audit->add_option("--rank", au.rank, "Neighbour rank for the radius builder")->capture_default_str();
  audit->add_option("--t", au.t, "t for the tfc builder")->capture_default_str();
  audit->add_option("--k", au.k, "k for the knn builder")->capture_default_str();
  audit->add_option("--cutoff", au.cutoff, "Fixed radius for the ocgraph builder")->capture_default_str();
  audit->add_flag("--no-self-edges", au.no_self_edges, "Audit the radius graph without self-connecting edges");
  audit->add_option("--out,-o", au.out, "Report JSON path; stdout when omitted");

  FeaturizeOptions fe;
  auto* feat = app.add_subcommand("featurize", "Embed nodes and RBF-expanded edge distances of one crystal");
  feat->add_option("input", fe.input, "Crystal file")->required()->check(CLI::ExistingFile);
  feat->add_option("--d-model", fe.d_model, "Embedding width")->capture_default_str();
  feat->add_option("--kernels", fe.kernels, "Number of RBF kernels on [0, 8]")->capture_default_str();
  feat->add_option("--rank", fe.rank, "Neighbour rank for the radius graph")->capture_default_str();
  feat->add_option("--seed", fe.seed, "Seed for the embedding weights")->capture_default_str();
  feat->add_option("--out,-o", fe.out, "Output JSON path; stdout when omitted");

  TrainOptions tr;
  auto* trn = app.add_subcommand("train", "Train on a dataset directory holding targets.csv and crystal files");
  trn->add_option("dataset", tr.dataset, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  trn->add_option("--config", tr.config, "Run config (key = value)")->required()->check(CLI::ExistingFile);
  trn->add_option("--out,-o", tr.out, "Checkpoint JSON (best validation MAE)")->required();
  trn->add_option("--log", tr.log, "Per-epoch CSV log");

  PredictOptions pr;
  auto* pred = app.add_subcommand("predict", "Predict a dataset with a trained checkpoint");
  pred->add_option("dataset", pr.dataset, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  pred->add_option("--config", pr.config, "Run config used for training")->required()->check(CLI::ExistingFile);
  pred->add_option("--checkpoint", pr.checkpoint, "Checkpoint JSON")->required()->check(CLI::ExistingFile);
  pred->add_option("--out,-o", pr.out, "Predictions CSV")->required();

  BenchOptions be;
  auto* bench = app.add_subcommand("bench", "Graph-construction throughput on a synthetic corpus");
  bench->add_option("--count", be.count, "Crystals in the corpus")->capture_default_str();
  bench->add_option("--repeats", be.repeats, "Timed repetitions; the best is reported")->capture_default_str();
  bench->add_option("--max-atoms", be.max_atoms, "Largest cell in the corpus")->capture_default_str();
  bench->add_option("--seed", be.seed, "Corpus seed")->capture_default_str();
  bench->add_option("--out,-o", be.out, "Also write the table here");

  LineGraphOptions lg;
  auto* analyze = app.add_subcommand("analyze", "Closed-form analyses");
  analyze->require_subcommand(1);
  auto* lgs = analyze->add_subcommand("line-graph-size", "Nodes and edges of the line graph of a regular graph");
  lgs->add_option("--n", lg.n, "Number of atoms")->required();
  lgs->add_option("--degree", lg.degree, "Edges per atom")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*build) return run_build_graph(bg);
    if (*audit) return run_audit(au);
    if (*feat) return run_featurize(fe);
    if (*trn) return run_train(tr);
    if (*pred) return run_predict(pr);
    if (*bench) return run_bench(be);
    if (*lgs) return run_line_graph_size(lg);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const matformer::ParseError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const matformer::GraphError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const matformer::TrainingError& e) {
    std::cerr << "training failed: " << e.what() << '\n';
    return kExitFailure;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitUsage;
}

#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace matformer::cli {

// Exit codes shared by every subcommand.
inline constexpr int kExitOk = 0;
inline constexpr int kExitViolation = 1;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitFailure = 3;

/// Bad flag combinations or unreadable inputs; mapped to kExitUsage.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct BuildGraphOptions {
  std::string input;
  std::string method = "radius";
  int rank = 12;
  int t = 0;
  std::optional<bool> self_edges;  // default depends on the method
  std::string format = "json";
  std::string out;
};

struct AuditOptions {
  std::string input;
  std::string builder = "radius";
  std::string check = "periodic";
  int trials = 20;
  std::uint64_t seed = 0;
  std::string alphas = "1,1,1";
  int rank = 12;
  int t = 12;
  int k = 12;
  double cutoff = 0.5;
  bool no_self_edges = false;
  std::string out;
};

struct FeaturizeOptions {
  std::string input;
  int d_model = 128;
  int kernels = 128;
  std::uint64_t seed = 0;
  int rank = 12;
  std::string out;
};

struct TrainOptions {
  std::string dataset;
  std::string config;
  std::string out;
  std::string log;
};

struct PredictOptions {
  std::string dataset;
  std::string config;
  std::string checkpoint;
  std::string out;
};

struct BenchOptions {
  int count = 200;
  int repeats = 3;
  std::uint64_t seed = 0;
  int max_atoms = 6;
  std::string out;
};

struct LineGraphOptions {
  long long n = 1;
  int degree = 12;
};

int run_build_graph(const BuildGraphOptions& o);
int run_audit(const AuditOptions& o);
int run_featurize(const FeaturizeOptions& o);
int run_train(const TrainOptions& o);
int run_predict(const PredictOptions& o);
int run_bench(const BenchOptions& o);
int run_line_graph_size(const LineGraphOptions& o);

/// "1,1,1;2,1,1" -> {{1,1,1},{2,1,1}}
std::vector<std::array<int, 3>> parse_alphas(const std::string& text);

}  // namespace matformer::cli

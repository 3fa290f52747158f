#include <benchmark/benchmark.h>

#include <map>

#include "matformer/audit.hpp"
#include "matformer/graph.hpp"
#include "matformer/synthetic.hpp"

using namespace matformer;

namespace {

const std::vector<Crystal>& corpus(int max_atoms) {
  static std::map<int, std::vector<Crystal>> cache;
  auto it = cache.find(max_atoms);
  if (it == cache.end()) {
    RandomCrystalOptions opts;
    opts.min_atoms = max_atoms;
    opts.max_atoms = max_atoms;
    it = cache.emplace(max_atoms, random_corpus(64, 7, opts)).first;
  }
  return it->second;
}

void run(benchmark::State& state, const GraphBuilder& builder) {
  const auto& crystals = corpus(static_cast<int>(state.range(0)));
  std::size_t k = 0;
  std::size_t edges = 0;
  for (auto _ : state) {
    const CrystalGraph g = builder(crystals[k++ % crystals.size()]);
    edges += g.edges.size();
    benchmark::DoNotOptimize(g.edges.data());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations()));
  state.counters["edges/crystal"] = static_cast<double>(edges) / static_cast<double>(state.iterations());
}

void BM_RadiusGraph(benchmark::State& state) { run(state, radius_builder(12, false)); }
void BM_RadiusGraphSelfEdges(benchmark::State& state) { run(state, radius_builder(12, true)); }
void BM_TFullyConnected(benchmark::State& state) { run(state, tfc_builder(12)); }

void BM_RadiusGraphSupercell(benchmark::State& state) {
  const auto& crystals = corpus(4);
  const int f = static_cast<int>(state.range(0));
  std::vector<Crystal> big;
  for (const auto& c : crystals) big.push_back(supercell(c, {f, f, f}));
  std::size_t k = 0;
  for (auto _ : state) {
    const CrystalGraph g = build_radius_graph(big[k++ % big.size()]);
    benchmark::DoNotOptimize(g.edges.data());
  }
  state.counters["atoms"] = 4.0 * f * f * f;
}

void BM_PeriodicAudit(benchmark::State& state) {
  const auto& crystals = corpus(4);
  PeriodicAuditOptions opts;
  opts.alphas = {{2, 1, 1}};
  for (auto _ : state) {
    const AuditReport r = audit_periodic_invariance(radius_builder(12, false), "radius", crystals, 1, 3, opts);
    benchmark::DoNotOptimize(r.violations);
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * crystals.size()));
}

}  // namespace

BENCHMARK(BM_RadiusGraph)->Arg(1)->Arg(4)->Arg(8)->Arg(16);
BENCHMARK(BM_RadiusGraphSelfEdges)->Arg(4);
BENCHMARK(BM_TFullyConnected)->Arg(1)->Arg(4)->Arg(8);
BENCHMARK(BM_RadiusGraphSupercell)->Arg(1)->Arg(2)->Arg(3);
BENCHMARK(BM_PeriodicAudit)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();

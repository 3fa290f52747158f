#include <benchmark/benchmark.h>

#include "matformer/model.hpp"
#include "matformer/synthetic.hpp"

using namespace matformer;

namespace {

struct Fixture {
  std::vector<CrystalGraph> graphs;
  std::vector<const CrystalGraph*> ptrs;

  explicit Fixture(std::size_t n) {
    RandomCrystalOptions opts;
    opts.max_atoms = 6;
    for (const Crystal& c : random_corpus(n, 11, opts)) {
      graphs.push_back(add_self_connecting_edges(build_radius_graph(c), c));
    }
    for (const auto& g : graphs) ptrs.push_back(&g);
  }
};

ModelConfig config(int d_model) {
  ModelConfig m;
  m.d_model = d_model;
  m.readout_hidden = d_model;
  m.n_layers = 3;
  m.n_heads = 2;
  return m;
}

void BM_Featurize(benchmark::State& state) {
  const Fixture fx(static_cast<std::size_t>(state.range(0)));
  MatformerModel model(config(32), 1);
  for (auto _ : state) {
    const FeaturizedGraph f = model.featurize(fx.ptrs);
    benchmark::DoNotOptimize(f.edge_input.value().data());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * state.range(0)));
}

void BM_ForwardEval(benchmark::State& state) {
  const Fixture fx(32);
  MatformerModel model(config(static_cast<int>(state.range(0))), 1);
  const FeaturizedGraph f = model.featurize(fx.ptrs);
  for (auto _ : state) {
    const tensor::Tensor y = model.forward(f, tensor::Mode::eval);
    benchmark::DoNotOptimize(y.value().data());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * 32));
}

void BM_ForwardBackward(benchmark::State& state) {
  const Fixture fx(32);
  MatformerModel model(config(static_cast<int>(state.range(0))), 1);
  const tensor::Tensor target = tensor::Tensor::constant(tensor::Matrix::Ones(32, 1));
  for (auto _ : state) {
    model.parameters().zero_grad();
    const tensor::Tensor diff = tensor::sub(model.forward(model.featurize(fx.ptrs), tensor::Mode::train), target);
    const tensor::Tensor loss = tensor::mean(tensor::hadamard(diff, diff));
    tensor::backward(loss);
    benchmark::DoNotOptimize(loss.item());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * 32));
}

}  // namespace

BENCHMARK(BM_Featurize)->Arg(8)->Arg(32);
BENCHMARK(BM_ForwardEval)->Arg(16)->Arg(64)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ForwardBackward)->Arg(16)->Arg(64)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();

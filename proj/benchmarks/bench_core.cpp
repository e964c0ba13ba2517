#include <benchmark/benchmark.h>

#include "sigmasr/analysis.hpp"
#include "sigmasr/data.hpp"
#include "sigmasr/image.hpp"
#include "sigmasr/losses.hpp"
#include "sigmasr/models.hpp"
#include "sigmasr/trainer.hpp"

namespace sigmasr {
namespace {

Tensor leaf(const Tensor& t) {
  const auto v = t.values();
  return Tensor::from(t.shape(), std::vector<double>(v.begin(), v.end()), true);
}

void BM_Conv2dForwardBackward(benchmark::State& state) {
  const auto ch = static_cast<std::size_t>(state.range(0));
  Rng rng(1);
  Tensor x = sample_uniform(rng, {8, ch, 16, 16}, -1.0, 1.0);
  Tensor w = leaf(sample_uniform(rng, {ch, ch, 3, 3}, -0.1, 0.1));
  Tensor b = leaf(sample_uniform(rng, {ch}, -0.1, 0.1));
  for (auto _ : state) {
    w.zero_grad();
    b.zero_grad();
    backward(sum(conv2d(x, w, b)));
    const auto g = w.grad();
    benchmark::DoNotOptimize(g.data());
  }
}
BENCHMARK(BM_Conv2dForwardBackward)->Arg(8)->Arg(32);

void BM_DataAdaptiveLoss(benchmark::State& state) {
  Rng rng(2);
  const Shape s{8, 3, 32, 32};
  Tensor mu = leaf(sample_uniform(rng, s, 0.0, 1.0));
  const Tensor t = sample_uniform(rng, s, 0.0, 1.0);
  const Tensor z = sample_standard_normal(rng, s);
  const LossSpec spec;
  for (auto _ : state) {
    mu.zero_grad();
    backward(data_adaptive_loss(mu, t, z, spec));
    const auto g = mu.grad();
    benchmark::DoNotOptimize(g.data());
  }
}
BENCHMARK(BM_DataAdaptiveLoss);

void BM_BicubicDownscale(benchmark::State& state) {
  Rng rng(3);
  const Image img = synth_dataset(1, static_cast<int>(state.range(0)), rng).front();
  for (auto _ : state) benchmark::DoNotOptimize(bicubic_resize(img, 2.0, ResizeDirection::down).values.data());
}
BENCHMARK(BM_BicubicDownscale)->Arg(64)->Arg(256);

// One optimizer step of the desk configuration, data-adaptive + aux.
void BM_DeskTrainingStep(benchmark::State& state) {
  const DeskSetup desk;
  Rng data_rng(4);
  std::vector<TrainingImage> images;
  for (const auto& img : synth_dataset(desk.n_images, desk.image_size, data_rng))
    images.push_back(make_training_image(img, desk.trunk.scale));
  Rng init(5);
  TwoBranchModel model = TwoBranchModel::build(desk.trunk, desk.sigma, init);
  Rng batch_rng(6), z_rng(7);
  AdamState adam = AdamState::for_parameters(model.parameters());
  for (auto _ : state) {
    const Batch batch = sample_batch(images, desk.train.batch, desk.train.patch, true, batch_rng);
    for (auto& p : model.parameters()) p.value.zero_grad();
    backward(compute_step_loss(model, batch, desk.train, 0, z_rng).loss);
    adam_step(model.parameters(), adam, desk.train.lr0);
  }
}
BENCHMARK(BM_DeskTrainingStep)->Unit(benchmark::kMillisecond);

}  // namespace
}  // namespace sigmasr
BENCHMARK_MAIN();

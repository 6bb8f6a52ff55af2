#include <benchmark/benchmark.h>

#include <random>
#include <thread>

#include "smokenet/bounded_queue.hpp"
#include "smokenet/image.hpp"
#include "smokenet/metrics.hpp"
#include "smokenet/model.hpp"
#include "smokenet/tensor.hpp"

using namespace smokenet;

namespace {

Tensor random_tensor(Shape shape, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> d(-1.0f, 1.0f);
  Tensor t(shape);
  for (float& v : t.data()) v = d(rng);
  return t;
}

// Args: input channels, spatial extent, output channels, stride.
void BM_Conv2d(benchmark::State& state) {
  const auto ic = static_cast<std::size_t>(state.range(0));
  const auto hw = static_cast<std::size_t>(state.range(1));
  const auto oc = static_cast<std::size_t>(state.range(2));
  const auto stride = static_cast<std::size_t>(state.range(3));
  const Tensor x = random_tensor({ic, hw, hw}, 1);
  const ConvParams p{random_tensor({oc, ic, 3, 3}, 2), random_tensor({oc}, 3), stride, 1};
  for (auto _ : state) benchmark::DoNotOptimize(conv2d(x, p));
  const double out = static_cast<double>(conv_output_extent(hw, 3, stride, 1));
  state.counters["MAC/s"] = benchmark::Counter(
      out * out * static_cast<double>(oc * ic * 9), benchmark::Counter::kIsIterationInvariantRate);
}
BENCHMARK(BM_Conv2d)
    ->Args({3, 64, 8, 2})
    ->Args({64, 80, 128, 2})
    ->Args({512, 20, 1024, 1})
    ->Unit(benchmark::kMillisecond);

void BM_CompactForward(benchmark::State& state) {
  const ProposedModel model = build(ModelConfig::compact(64), 1);
  const Tensor image = random_tensor({3, 64, 64}, 4);
  for (auto _ : state) benchmark::DoNotOptimize(model.forward(image));
}
BENCHMARK(BM_CompactForward)->Unit(benchmark::kMicrosecond);

void BM_CompactTrainStep(benchmark::State& state) {
  const ProposedModel model = build(ModelConfig::compact(64), 1);
  const Tensor image = random_tensor({3, 64, 64}, 5);
  for (auto _ : state) benchmark::DoNotOptimize(loss_gradients(model, image, 1));
}
BENCHMARK(BM_CompactTrainStep)->Unit(benchmark::kMicrosecond);

// Arg: detections per class on 100 images with 3 ground truths each.
void BM_Map50(benchmark::State& state) {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(0.1, 0.9);
  std::vector<GroundTruth> gts;
  std::vector<Detection> dets;
  for (int img = 0; img < 100; ++img) {
    for (int k = 0; k < 3; ++k) {
      gts.push_back({"i" + std::to_string(img), k % 2, {u(rng), u(rng), 0.1, 0.1}});
    }
  }
  for (std::int64_t i = 0; i < 2 * state.range(0); ++i) {
    const GroundTruth& g = gts[static_cast<std::size_t>(i) % gts.size()];
    dets.push_back({g.image_id, static_cast<int>(i % 2), u(rng),
                    {g.box.cx + 0.02, g.box.cy, 0.1, 0.1}});
  }
  const std::vector<int> classes{0, 1};
  for (auto _ : state) benchmark::DoNotOptimize(map50(dets, gts, classes));
}
BENCHMARK(BM_Map50)->Arg(100)->Arg(1000)->Unit(benchmark::kMicrosecond);

void BM_Letterbox(benchmark::State& state) {
  const auto w = static_cast<std::size_t>(state.range(0));
  const auto h = static_cast<std::size_t>(state.range(1));
  const ImageBuffer frame(w, h, 90);
  for (auto _ : state) benchmark::DoNotOptimize(letterbox_resize(frame, 640));
}
BENCHMARK(BM_Letterbox)->Args({640, 480})->Args({800, 480})->Unit(benchmark::kMicrosecond);

void BM_QueueHandoff(benchmark::State& state) {
  const auto capacity = static_cast<std::size_t>(state.range(0));
  constexpr int kItems = 10000;
  for (auto _ : state) {
    BoundedQueue<int> q(capacity);
    std::jthread producer([&] {
      for (int i = 0; i < kItems; ++i) q.push(i);
      q.close();
    });
    int sum = 0;
    while (auto v = q.pop()) sum += *v;
    benchmark::DoNotOptimize(sum);
  }
  state.SetItemsProcessed(state.iterations() * kItems);
}
BENCHMARK(BM_QueueHandoff)->Arg(1)->Arg(16)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();

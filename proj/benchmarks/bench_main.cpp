/*
 * Copyright 2026 The iqagent Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */


#include <benchmark/benchmark.h>

#include <cmath>
#include <random>

#include "iqagent/calibration.hpp"
#include "iqagent/eval.hpp"
#include "iqagent/summarizer.hpp"
#include "iqagent/tools.hpp"

using namespace iqagent;

namespace {

Image textured(int size, uint64_t seed, double noise) {
  Image img(size, size, 3);
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> n(0.0f, static_cast<float>(noise));
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const float base = 128.0f + 60.0f * std::sin(x * 0.07f) * std::cos(y * 0.05f);
      for (int c = 0; c < 3; ++c) img.at(x, y, c) = std::clamp(base + 10.0f * c + n(rng), 0.0f, 255.0f);
    }
  }
  return img;
}

template <double (*Kernel)(const Image&, const Image&)>
void BM_Kernel(benchmark::State& state) {
  const int size = static_cast<int>(state.range(0));
  const auto ref = textured(size, 1, 0.0), dist = textured(size, 1, 8.0);
  for (auto _ : state) benchmark::DoNotOptimize(Kernel(dist, ref));
  state.SetItemsProcessed(state.iterations() * size * size);
}

double psnr_default(const Image& a, const Image& b) { return psnr(a, b); }
double gmsd_default(const Image& a, const Image& b) { return gmsd(a, b); }

void BM_Fusion(benchmark::State& state) {
  std::map<int, double> lp{{1, -4.0}, {2, -1.5}, {3, -0.4}, {4, -1.9}, {5, -5.0}};
  const FusionInputs in{{2.7, 3.4, 3.1}, lp, 1.0};
  for (auto _ : state) benchmark::DoNotOptimize(fuse_scores(in, FusionMode::kNormalized).q);
}

void BM_FitLogistic(benchmark::State& state) {
  const std::array<double, 5> beta{3.0, 12.0, 0.75, 1.5, 1.2};
  std::vector<std::pair<double, double>> pairs;
  const int n = static_cast<int>(state.range(0));
  for (int i = 0; i < n; ++i) {
    const double x = 0.4 + 0.6 * i / (n - 1);
    pairs.emplace_back(x, logistic_value(x, beta, LogisticForm::kStandard));
  }
  for (auto _ : state) benchmark::DoNotOptimize(fit_logistic(pairs).report.rss);
}

void BM_Srcc(benchmark::State& state) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n;
  std::vector<double> a(static_cast<size_t>(state.range(0))), b(a.size());
  for (size_t i = 0; i < a.size(); ++i) {
    a[i] = n(rng);
    b[i] = a[i] + n(rng);
  }
  for (auto _ : state) benchmark::DoNotOptimize(srcc(a, b));
}

}  // namespace

BENCHMARK(BM_Kernel<psnr_default>)->Name("psnr")->Arg(256)->Arg(512);
BENCHMARK(BM_Kernel<ssim>)->Name("ssim")->Arg(256)->Arg(512);
BENCHMARK(BM_Kernel<ms_ssim>)->Name("ms_ssim")->Arg(256)->Arg(512);
BENCHMARK(BM_Kernel<gmsd_default>)->Name("gmsd")->Arg(256)->Arg(512);
BENCHMARK(BM_Fusion);
BENCHMARK(BM_FitLogistic)->Arg(40)->Arg(400);
BENCHMARK(BM_Srcc)->Arg(1000)->Arg(10000);
BENCHMARK_MAIN();

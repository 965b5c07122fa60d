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


#include <gtest/gtest.h>

#include <cmath>

#include "iqagent/error.hpp"
#include "iqagent/tools.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

using namespace iqagent;
using namespace iqagent::testing;

namespace {

Errc code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return Errc::kIo;
}

Image fixture(const std::string& name) { return ImageHandle::from_file(fixture_dir() / name).raster(); }

}  // namespace

TEST(Psnr, IdentityIsCap) {
  const auto a = make_scene(32, 32, 1);
  EXPECT_EQ(psnr(a, a), 100.0);
  EXPECT_EQ(psnr(a, a, {60.0, 170.0}), 60.0);
}

TEST(Psnr, UnitOffset) {
  const auto a = constant_image(8, 8, 100.0f);
  const auto b = constant_image(8, 8, 101.0f);
  EXPECT_NEAR(psnr(a, b), 48.1308, 1e-3);
  EXPECT_NEAR(psnr(a, b), 20.0 * std::log10(255.0), 1e-12);
}

TEST(Psnr, Mismatch) {
  EXPECT_EQ(code_of([] { psnr(constant_image(8, 8, 0), constant_image(8, 9, 0)); }), Errc::kDimensionMismatch);
  EXPECT_EQ(code_of([] { psnr(constant_image(8, 8, 0, 1), constant_image(8, 8, 0, 3)); }), Errc::kDimensionMismatch);
}

TEST(Ssim, IdentityAndMinimumSize) {
  const auto a = make_scene(40, 30, 2);
  EXPECT_DOUBLE_EQ(ssim(a, a), 1.0);
  const auto small = random_image(11, 11, 1, 5);
  EXPECT_DOUBLE_EQ(ssim(small, small), 1.0);
  EXPECT_EQ(code_of([] { ssim(random_image(10, 20, 1, 1), random_image(10, 20, 1, 2)); }), Errc::kImageTooSmall);
}

TEST(Ssim, ConstantVersusConstantClosedForm) {
  const double c1 = std::pow(0.01 * 255.0, 2);
  EXPECT_NEAR(ssim(constant_image(16, 16, 0.0f), constant_image(16, 16, 255.0f)), c1 / (255.0 * 255.0 + c1), 1e-9);
}

TEST(Kernels, SymmetryOnRandomPairs) {
  for (uint64_t seed = 0; seed < 50; ++seed) {
    const auto a = random_image(24, 20, 1, 2 * seed);
    const auto b = random_image(24, 20, 1, 2 * seed + 1);
    EXPECT_DOUBLE_EQ(psnr(a, b), psnr(b, a));
    EXPECT_NEAR(ssim(a, b), ssim(b, a), 1e-12);
    EXPECT_NEAR(gmsd(a, b), gmsd(b, a), 1e-12);
  }
}

TEST(MsSsim, IdentityAndScaleCount) {
  const auto a = make_scene(192, 192, 3);
  const auto r = ms_ssim_detailed(a, a);
  EXPECT_DOUBLE_EQ(r.value, 1.0);
  EXPECT_EQ(r.scales, 5);
  EXPECT_EQ(ms_ssim_detailed(make_scene(64, 64, 1), make_scene(64, 64, 1)).scales, 3);
}

TEST(MsSsim, SingleScaleEqualsSsim) {
  const auto a = random_image(20, 20, 1, 8), b = random_image(20, 20, 1, 9);
  EXPECT_EQ(ms_ssim_detailed(a, b).scales, 1);
  EXPECT_DOUBLE_EQ(ms_ssim(a, b), ssim(a, b));
}

TEST(Gmsd, IdentityAndNonNegative) {
  const auto a = make_scene(64, 64, 4);
  EXPECT_EQ(gmsd(a, a), 0.0);
  EXPECT_GE(gmsd(a, add_noise(a, 10.0, 1)), 0.0);
  EXPECT_EQ(code_of([] { gmsd(random_image(4, 4, 1, 1), random_image(4, 4, 1, 2)); }), Errc::kImageTooSmall);
}

TEST(Oracle, GrayFixturePair) {
  const auto d = fixture("gray_dist.png"), r = fixture("gray_ref.png");
  EXPECT_NEAR(ssim(d, r), static_cast<double>(oracle::ssim(d, r)), 1e-6);
  EXPECT_NEAR(ms_ssim(d, r), static_cast<double>(oracle::ms_ssim(d, r)), 1e-6);
  EXPECT_NEAR(gmsd(d, r), static_cast<double>(oracle::gmsd(d, r)), 1e-6);
}

TEST(Oracle, ColorFixturePairs) {
  const auto r = fixture("scene_ref.png");
  for (const char* name : {"scene_noise.png", "scene_blur.png"}) {
    const auto d = fixture(name);
    EXPECT_NEAR(ms_ssim(d, r), static_cast<double>(oracle::ms_ssim(d, r)), 1e-6) << name;
    EXPECT_NEAR(gmsd(d, r), static_cast<double>(oracle::gmsd(d, r)), 1e-6) << name;
  }
}

TEST(Kernels, MonotoneUnderIncreasingNoise) {
  const auto ref = make_scene(64, 64, 10, 1);
  int gmsd_drops = 0;
  for (uint64_t trial = 0; trial < 5; ++trial) {
    double last_psnr = 1e9, last_gmsd = -1.0;
    for (double sigma : {2.0, 5.0, 10.0, 20.0, 40.0}) {
      const auto d = add_noise(ref, sigma, 1000 * trial + static_cast<uint64_t>(sigma));
      const double p = psnr(d, ref), g = gmsd(d, ref);
      EXPECT_LT(p, last_psnr);
      if (g < last_gmsd) ++gmsd_drops;
      last_psnr = p;
      last_gmsd = g;
    }
  }
  EXPECT_EQ(gmsd_drops, 0);
}

TEST(Kernels, RunNativeDispatch) {
  const auto a = make_scene(32, 32, 6), b = add_noise(a, 5.0, 2);
  EXPECT_EQ(run_native(NativeKernel::kPsnr, a, b), psnr(a, b));
  EXPECT_EQ(run_native(NativeKernel::kSsim, a, b), ssim(a, b));
  EXPECT_EQ(run_native(NativeKernel::kMsSsim, a, b), ms_ssim(a, b));
  EXPECT_EQ(run_native(NativeKernel::kGmsd, a, b), gmsd(a, b));
}

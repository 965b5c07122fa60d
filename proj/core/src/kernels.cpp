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

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "iqagent/error.hpp"
#include "iqagent/tools.hpp"

namespace iqagent {

namespace {

// Single-channel double plane.
struct Plane {
  int w = 0;
  int h = 0;
  std::vector<double> v;

  Plane() = default;
  Plane(int w_, int h_) : w(w_), h(h_), v(static_cast<size_t>(w_) * h_, 0.0) {}
  double& operator()(int x, int y) { return v[static_cast<size_t>(y) * w + x]; }
  double operator()(int x, int y) const { return v[static_cast<size_t>(y) * w + x]; }
};

void check_same_size(const Image& a, const Image& b) {
  if (a.empty() || b.empty()) throw Error(Errc::kImageDecode, "empty image");
  if (a.width != b.width || a.height != b.height) {
    throw Error(Errc::kDimensionMismatch, "image sizes differ: " + std::to_string(a.width) + "x" +
                                              std::to_string(a.height) + " vs " +
                                              std::to_string(b.width) + "x" +
                                              std::to_string(b.height));
  }
}

Plane luma(const Image& img) {
  const Image g = to_gray(img);
  Plane p(g.width, g.height);
  for (size_t i = 0; i < p.v.size(); ++i) p.v[i] = g.pixels[i];
  return p;
}

Plane block_mean2(const Plane& p) {
  Plane out(p.w / 2, p.h / 2);
  for (int y = 0; y < out.h; ++y) {
    for (int x = 0; x < out.w; ++x) {
      out(x, y) = 0.25 * (p(2 * x, 2 * y) + p(2 * x + 1, 2 * y) + p(2 * x, 2 * y + 1) +
                          p(2 * x + 1, 2 * y + 1));
    }
  }
  return out;
}

const std::array<double, 11>& gaussian11() {
  static const std::array<double, 11> kernel = [] {
    std::array<double, 11> k{};
    double sum = 0.0;
    for (int i = 0; i < 11; ++i) {
      const double d = i - 5;
      k[i] = std::exp(-d * d / (2.0 * 1.5 * 1.5));
      sum += k[i];
    }
    for (auto& x : k) x /= sum;
    return k;
  }();
  return kernel;
}

// Separable 'valid' filtering with the 11-tap Gaussian.
Plane gauss_valid(const Plane& p) {
  const auto& k = gaussian11();
  Plane tmp(p.w - 10, p.h);
  for (int y = 0; y < p.h; ++y) {
    for (int x = 0; x < tmp.w; ++x) {
      double s = 0.0;
      for (int i = 0; i < 11; ++i) s += k[i] * p(x + i, y);
      tmp(x, y) = s;
    }
  }
  Plane out(tmp.w, p.h - 10);
  for (int y = 0; y < out.h; ++y) {
    for (int x = 0; x < out.w; ++x) {
      double s = 0.0;
      for (int i = 0; i < 11; ++i) s += k[i] * tmp(x, y + i);
      out(x, y) = s;
    }
  }
  return out;
}

struct SsimStats {
  double ssim = 0.0;
  double cs = 0.0;
};

SsimStats ssim_stats(const Plane& a, const Plane& b) {
  if (a.w < 11 || a.h < 11) {
    throw Error(Errc::kImageTooSmall, "SSIM needs at least 11x11 pixels");
  }
  constexpr double kC1 = (0.01 * 255.0) * (0.01 * 255.0);
  constexpr double kC2 = (0.03 * 255.0) * (0.03 * 255.0);
  Plane aa(a.w, a.h), bb(a.w, a.h), ab(a.w, a.h);
  for (size_t i = 0; i < a.v.size(); ++i) {
    aa.v[i] = a.v[i] * a.v[i];
    bb.v[i] = b.v[i] * b.v[i];
    ab.v[i] = a.v[i] * b.v[i];
  }
  const Plane mu1 = gauss_valid(a), mu2 = gauss_valid(b);
  const Plane s11 = gauss_valid(aa), s22 = gauss_valid(bb), s12 = gauss_valid(ab);
  double ssim_sum = 0.0;
  double cs_sum = 0.0;
  for (size_t i = 0; i < mu1.v.size(); ++i) {
    const double m1 = mu1.v[i], m2 = mu2.v[i];
    const double v1 = s11.v[i] - m1 * m1;
    const double v2 = s22.v[i] - m2 * m2;
    const double cov = s12.v[i] - m1 * m2;
    const double cs = (2.0 * cov + kC2) / (v1 + v2 + kC2);
    ssim_sum += ((2.0 * m1 * m2 + kC1) / (m1 * m1 + m2 * m2 + kC1)) * cs;
    cs_sum += cs;
  }
  const auto n = static_cast<double>(mu1.v.size());
  return {ssim_sum / n, cs_sum / n};
}

}  // namespace

double psnr(const Image& distorted, const Image& reference, const KernelOptions& opt) {
  check_same_size(distorted, reference);
  if (distorted.channels != reference.channels) {
    throw Error(Errc::kDimensionMismatch, "channel counts differ");
  }
  double sse = 0.0;
  for (size_t i = 0; i < distorted.pixels.size(); ++i) {
    const double d = static_cast<double>(distorted.pixels[i]) - reference.pixels[i];
    sse += d * d;
  }
  const double mse = sse / static_cast<double>(distorted.pixels.size());
  if (mse == 0.0) return opt.psnr_cap_db;
  return std::min(opt.psnr_cap_db, 10.0 * std::log10(255.0 * 255.0 / mse));
}

double ssim(const Image& distorted, const Image& reference) {
  check_same_size(distorted, reference);
  return ssim_stats(luma(distorted), luma(reference)).ssim;
}

MsSsimResult ms_ssim_detailed(const Image& distorted, const Image& reference) {
  check_same_size(distorted, reference);
  Plane a = luma(distorted), b = luma(reference);
  if (std::min(a.w, a.h) < 11) {
    throw Error(Errc::kImageTooSmall, "MS-SSIM needs at least 11x11 pixels");
  }
  int scales = 1;
  for (int d = std::min(a.w, a.h); scales < 5 && d / 2 >= 11; d /= 2) ++scales;

  double weight_sum = 0.0;
  for (int i = 0; i < scales; ++i) weight_sum += kMsSsimWeights[i];

  double value = 1.0;
  for (int i = 0; i < scales; ++i) {
    const auto stats = ssim_stats(a, b);
    const double w = kMsSsimWeights[i] / weight_sum;
    if (i + 1 < scales) {
      value *= std::pow(std::max(stats.cs, 0.0), w);
      a = block_mean2(a);
      b = block_mean2(b);
    } else {
      value *= scales == 1 ? stats.ssim : std::pow(std::max(stats.ssim, 0.0), w);
    }
  }
  return {value, scales};
}

double ms_ssim(const Image& distorted, const Image& reference) {
  return ms_ssim_detailed(distorted, reference).value;
}

double gmsd(const Image& distorted, const Image& reference, const KernelOptions& opt) {
  check_same_size(distorted, reference);
  const Plane a = block_mean2(luma(distorted));
  const Plane b = block_mean2(luma(reference));
  if (a.w < 3 || a.h < 3) throw Error(Errc::kImageTooSmall, "GMSD needs at least 6x6 pixels");

  auto magnitude = [](const Plane& p, int x, int y) {
    double gx = 0.0, gy = 0.0;
    for (int k = -1; k <= 1; ++k) {
      gx += p(x + 1, y + k) - p(x - 1, y + k);
      gy += p(x + k, y + 1) - p(x + k, y - 1);
    }
    gx /= 3.0;
    gy /= 3.0;
    return std::sqrt(gx * gx + gy * gy);
  };

  std::vector<double> gms;
  gms.reserve(static_cast<size_t>(a.w - 2) * (a.h - 2));
  for (int y = 1; y + 1 < a.h; ++y) {
    for (int x = 1; x + 1 < a.w; ++x) {
      const double m1 = magnitude(a, x, y), m2 = magnitude(b, x, y);
      gms.push_back((2.0 * m1 * m2 + opt.gmsd_c) / (m1 * m1 + m2 * m2 + opt.gmsd_c));
    }
  }
  const double mean = std::accumulate(gms.begin(), gms.end(), 0.0) / static_cast<double>(gms.size());
  double var = 0.0;
  for (double g : gms) var += (g - mean) * (g - mean);
  return std::sqrt(var / static_cast<double>(gms.size()));
}

double run_native(NativeKernel kernel, const Image& distorted, const Image& reference,
                  const KernelOptions& opt) {
  switch (kernel) {
    case NativeKernel::kPsnr: return psnr(distorted, reference, opt);
    case NativeKernel::kSsim: return ssim(distorted, reference);
    case NativeKernel::kMsSsim: return ms_ssim(distorted, reference);
    case NativeKernel::kGmsd: return gmsd(distorted, reference, opt);
  }
  throw Error(Errc::kUnknownTool, "unknown native kernel");
}

}  // namespace iqagent

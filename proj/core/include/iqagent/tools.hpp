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

#pragma once

#include <array>
#include <chrono>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "iqagent/model.hpp"

namespace iqagent {

enum class ToolMode { kFR, kNR };

std::string_view to_string(ToolMode mode);
ToolMode to_tool_mode(ReferenceMode mode);

enum class NativeKernel { kPsnr, kSsim, kMsSsim, kGmsd };

struct BestAt {
  // Free text: the published lists include groups outside the seven
  // detection categories ("Spatial distortions").
  std::string category;
  std::optional<std::string> subtype;

  friend bool operator==(const BestAt&, const BestAt&) = default;
};

struct ToolBinding {
  enum class Kind { kNative, kAdapter, kUnavailable };
  Kind kind = Kind::kUnavailable;
  NativeKernel kernel = NativeKernel::kPsnr;
  // Empty endpoint means "use the engine's default adapter endpoint".
  std::string endpoint;

  friend bool operator==(const ToolBinding&, const ToolBinding&) = default;
};

struct ToolDescriptor {
  std::string name;
  std::vector<std::string> aliases;
  ToolMode mode = ToolMode::kNR;
  std::vector<BestAt> best_at;
  std::string description;
  std::optional<std::array<double, 5>> beta;
  ToolBinding binding;
  // Used by the linear calibration fallback when beta is absent.
  std::optional<std::array<double, 2>> native_range;
  bool higher_better = true;

  friend bool operator==(const ToolDescriptor&, const ToolDescriptor&) = default;
};

json encode(const ToolDescriptor& d);
ToolDescriptor decode_descriptor(const json& j);

class ToolRegistry {
 public:
  ToolRegistry() = default;
  explicit ToolRegistry(std::vector<ToolDescriptor> tools);

  // Throws kDuplicateTool, kMalformedDescriptor, kIo.
  static ToolRegistry load(const std::string& path);
  static ToolRegistry from_json(const json& j);

  // Overwrites beta for the named tools from a patch file written by `calibrate`.
  void apply_patch(const json& patch);

  const std::vector<ToolDescriptor>& tools() const { return tools_; }
  bool empty() const { return tools_.empty(); }
  size_t size() const { return tools_.size(); }
  // Exact name, then alias, then case-insensitive name.
  const ToolDescriptor* find(std::string_view name) const;
  const ToolDescriptor& at(std::string_view name) const;

  json to_json() const;

 private:
  std::vector<ToolDescriptor> tools_;
};

// ---------------------------------------------------------------------------
// Native full-reference kernels. Inputs are on the 0..255 scale; color input
// is converted with Rec.601 luma where the kernel is defined on luminance.

struct KernelOptions {
  double psnr_cap_db = 100.0;
  double gmsd_c = 170.0;
};

double psnr(const Image& distorted, const Image& reference, const KernelOptions& opt = {});
double ssim(const Image& distorted, const Image& reference);

struct MsSsimResult {
  double value = 0.0;
  int scales = 0;
};
MsSsimResult ms_ssim_detailed(const Image& distorted, const Image& reference);
double ms_ssim(const Image& distorted, const Image& reference);
double gmsd(const Image& distorted, const Image& reference, const KernelOptions& opt = {});

inline constexpr std::array<double, 5> kMsSsimWeights = {0.0448, 0.2856, 0.3001, 0.2363,
                                                         0.1333};

double run_native(NativeKernel kernel, const Image& distorted, const Image& reference,
                  const KernelOptions& opt = {});

// Selects a tool for one distortion without consulting a model: among tools of
// the requested mode, subtype match scores 2, category match 1; ties go to
// registry order; all-zero falls back to the mode default.
struct RankerDefaults {
  std::string fr_default = "TOPIQ_FR";
  std::string nr_default = "QAlign";
};

std::string rank_tool(const DistortionCategory& distortion, ToolMode mode,
                      const ToolRegistry& registry, const RankerDefaults& defaults = {},
                      const std::vector<std::string>* allowed = nullptr);

// ---------------------------------------------------------------------------
// Adapter wire protocol

inline constexpr std::string_view kAdapterProtocolVersion = "agentiqa-adapter/1";

struct AdapterImage {
  std::string data;  // raw encoded bytes
  std::string format;

  friend bool operator==(const AdapterImage&, const AdapterImage&) = default;
};

struct AdapterScoreRequest {
  std::string tool;
  AdapterImage distorted;
  std::optional<AdapterImage> reference;
  std::string request_id;
  json metadata = json::object();

  friend bool operator==(const AdapterScoreRequest&, const AdapterScoreRequest&) = default;
};

struct AdapterScoreResponse {
  std::string request_id;
  std::optional<double> raw_score;
  std::string status;  // "ok" or "error"
  std::string message;

  bool ok() const { return status == "ok"; }
  friend bool operator==(const AdapterScoreResponse&, const AdapterScoreResponse&) = default;
};

json encode(const AdapterScoreRequest& r);
json encode(const AdapterScoreResponse& r);
AdapterScoreRequest decode_adapter_request(const json& j);
// Throws kAdapterProtocolError on a malformed reply.
AdapterScoreResponse decode_adapter_response(const json& j);

struct AdapterHandshake {
  std::string version;
  std::vector<std::string> tools;
};

// One connection (HTTP) or child process (stdio) per endpoint. Endpoints are
// "http://host:port" or "stdio:<command line>".
class AdapterClient {
 public:
  virtual ~AdapterClient() = default;
  virtual AdapterHandshake handshake() = 0;
  virtual AdapterScoreResponse score(const AdapterScoreRequest& req) = 0;
};

std::unique_ptr<AdapterClient> make_adapter_client(const std::string& endpoint,
                                                   std::chrono::milliseconds timeout);

// Sends the request (clients handshake before their first request) and checks
// the id echo.
AdapterScoreResponse adapter_score(AdapterClient& client, const AdapterScoreRequest& req);

// Caches one client per endpoint; clients are created lazily and shared.
class AdapterPool {
 public:
  explicit AdapterPool(std::chrono::milliseconds timeout) : timeout_(timeout) {}
  AdapterScoreResponse score(const std::string& endpoint, const AdapterScoreRequest& req);

 private:
  struct Slot {
    std::mutex mutex;
    std::unique_ptr<AdapterClient> client;
  };
  std::chrono::milliseconds timeout_;
  std::mutex mutex_;
  std::map<std::string, std::shared_ptr<Slot>> slots_;
};

}  // namespace iqagent

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

// iqagent command-line tool. Results go to stdout as JSON, logs and errors to
// stderr. Exit codes: 0 success, 1 partial failure, 2 fatal.

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <fstream>
#include <iostream>
#include <sstream>

#include "iqagent/calibration.hpp"
#include "iqagent/engine.hpp"
#include "iqagent/error.hpp"
#include "iqagent/eval.hpp"
#include "iqagent/json_io.hpp"
#include "iqagent/util.hpp"

using namespace iqagent;

namespace {

constexpr int kOk = 0;
constexpr int kPartial = 1;
constexpr int kFatal = 2;

int fail(std::string_view code, const std::string& message) {
  std::cerr << json{{"error", code}, {"message", message}}.dump() << '\n';
  return kFatal;
}

struct GlobalOptions {
  std::optional<std::string> config_file;
  std::vector<std::string> settings;
  std::map<std::string, std::string> flags;
};

EngineConfig make_config(const GlobalOptions& g) {
  auto flags = g.flags;
  for (const auto& s : g.settings) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw Error(Errc::kConfig, "--set expects key=value, got '" + s + "'");
    flags[s.substr(0, eq)] = s.substr(eq + 1);
  }
  return load_config(g.config_file, environment_settings(), flags);
}

void write_output(const std::optional<std::string>& path, const std::string& body) {
  if (path) {
    write_file_atomic(*path, body);
  } else {
    std::cout << body << '\n';
  }
}

std::vector<std::pair<double, double>> load_pairs(const std::string& path) {
  std::istringstream in(read_file(path));
  std::string line;
  std::vector<std::pair<double, double>> out;
  bool header_seen = false;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw Error(Errc::kLoadError, path + ": expected raw,mos per line");
    try {
      size_t a = 0, b = 0;
      const auto raw_s = line.substr(0, comma), mos_s = line.substr(comma + 1);
      const double raw = std::stod(raw_s, &a);
      const double mos = std::stod(mos_s, &b);
      out.emplace_back(raw, mos);
    } catch (const std::logic_error&) {
      if (header_seen || !out.empty()) throw Error(Errc::kLoadError, path + ": bad line '" + line + "'");
      header_seen = true;
    }
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Agentic image quality assessment"};
  app.require_subcommand(1);
  GlobalOptions g;
  app.add_option("--config", g.config_file, "JSON configuration file")->check(CLI::ExistingFile);
  app.add_option("--set", g.settings, "Override a configuration key (key=value)");
  for (const auto& [key, help] : config_keys()) {
    std::string flag = "--" + key;
    std::replace(flag.begin(), flag.end(), '_', '-');
    app.add_option_function<std::string>(flag, [&g, key = key](const std::string& v) { g.flags[key] = v; }, help)
        ->group("Configuration");
  }

  // assess
  auto* assess = app.add_subcommand("assess", "Answer one query about one image");
  std::string image;
  std::optional<std::string> ref, query, kind_name;
  bool with_state = false;
  assess->add_option("image", image, "Distorted image")->required();
  assess->add_option("--ref", ref, "Reference image");
  assess->add_option("--query", query, "Question about the image");
  assess->add_option("--kind", kind_name, "Force the answer kind")
      ->check(CLI::IsMember({"score", "choice", "text"}));
  assess->add_flag("--state", with_state, "Also print the plan and intermediate state");

  // score
  auto* score = app.add_subcommand("score", "Score a MOS manifest and report SRCC/PLCC");
  std::string manifest;
  std::optional<std::string> out_json, out_csv;
  int workers = 1;
  score->add_option("--manifest", manifest, "CSV or JSON-lines manifest")->required();
  score->add_option("--out-json", out_json, "Write the JSON report here");
  score->add_option("--out-csv", out_csv, "Write the per-row CSV here");
  score->add_option("--workers", workers, "Concurrent rows")->check(CLI::PositiveNumber);
  std::optional<std::string> score_query;
  score->add_option("--query", score_query, "Query used for every row");

  // eval
  auto* eval = app.add_subcommand("eval", "Run a multiple-choice benchmark file");
  std::string mcq;
  eval->add_option("--mcq", mcq, "JSON array of items")->required();
  eval->add_option("--out-json", out_json, "Write the JSON report here");
  eval->add_option("--workers", workers, "Concurrent items")->check(CLI::PositiveNumber);

  // calibrate
  auto* calibrate = app.add_subcommand("calibrate", "Fit a tool's logistic mapping to MOS");
  std::string tool, pairs;
  std::optional<std::string> patch_out;
  calibrate->add_option("--tool", tool, "Registry tool name")->required();
  calibrate->add_option("--pairs", pairs, "CSV of raw,mos pairs")->required()->check(CLI::ExistingFile);
  calibrate->add_option("--out", patch_out, "Patch file (default <tool>.patch.json)");

  // tools
  auto* tools = app.add_subcommand("tools", "Inspect the tool registry");
  tools->require_subcommand(1);
  auto* tools_list = tools->add_subcommand("list", "Tool names, one per line");
  auto* tools_describe = tools->add_subcommand("describe", "Descriptor JSON for one tool");
  auto* tools_probe = tools->add_subcommand("probe", "Adapter handshake for one tool");
  std::string tool_name;
  std::optional<std::string> probe_endpoint;
  tools_describe->add_option("name", tool_name)->required();
  tools_probe->add_option("name", tool_name)->required();
  tools_probe->add_option("--endpoint", probe_endpoint, "Endpoint to probe instead of the binding's");

  auto* config_cmd = app.add_subcommand("config", "Print the effective configuration keys");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kFatal;
  }

  try {
    if (*config_cmd) {
      make_config(g);
      json out = json::object();
      for (const auto& [k, help] : config_keys()) out[k] = help;
      std::cout << out.dump(2) << '\n';
      return kOk;
    }

    auto config = make_config(g);

    if (*assess) {
      Engine engine(config);
      QueryContext ctx;
      ctx.distorted_image = ImageHandle::from_file(image);
      if (ref) ctx.reference_image = ImageHandle::from_file(*ref);
      ctx.query_text = query.value_or(config.default_query);
      std::optional<AnswerKind> kind;
      if (kind_name) {
        kind = *kind_name == "score" ? AnswerKind::kScore
               : *kind_name == "choice" ? AnswerKind::kChoice
                                        : AnswerKind::kFreeText;
      }
      const auto run = engine.run(ctx, kind);
      engine.flush();
      json out = encode(run.answer);
      if (with_state) {
        out = {{"answer", out}, {"plan", encode(run.plan)}, {"state", encode(run.state)}};
      }
      std::cout << out.dump(2) << '\n';
      return kOk;
    }

    if (*score) {
      Engine engine(config);
      ScoringOptions opt;
      opt.workers = workers;
      opt.query = score_query.value_or(config.default_query);
      const auto report = run_scoring(load_manifest(manifest), engine, opt);
      engine.flush();
      if (out_csv) write_file_atomic(*out_csv, report.to_csv());
      write_output(out_json, report.to_json().dump(2));
      return report.failures ? kPartial : kOk;
    }

    if (*eval) {
      Engine engine(config);
      const auto report = run_mcq(load_mcq(mcq), engine, workers);
      engine.flush();
      const auto j = report.to_json();
      if (out_json) write_file_atomic(*out_json, j.dump(2));
      std::cout << "track\taccuracy\titems\n";
      for (const auto& [track, n] : j["items_per_track"].items()) {
        std::cout << track << '\t' << j["accuracy"][track].get<double>() << '\t' << n.get<long>() << '\n';
      }
      std::cout << "overall\t" << report.accuracy() << '\t' << report.items.size() << '\n';
      return report.failures() ? kPartial : kOk;
    }

    if (*calibrate) {
      const auto registry = ToolRegistry::load(
          config.registry.empty()
              ? (config.asset_dir.empty() ? default_asset_dir() : std::filesystem::path(config.asset_dir)) /
                    "registry.json"
              : std::filesystem::path(config.registry));
      const auto& desc = registry.at(tool);
      const auto fit = fit_logistic(load_pairs(pairs), config.executor.logistic_form);
      const json patch = {{"tools", {{desc.name, {{"beta", fit.params.beta}}}}}};
      const auto path = patch_out.value_or(desc.name + ".patch.json");
      write_file_atomic(path, patch.dump(2) + "\n");
      std::cout << json{{"tool", desc.name},
                        {"beta", fit.params.beta},
                        {"form", to_string(fit.params.form)},
                        {"rss", fit.report.rss},
                        {"plcc", fit.report.plcc},
                        {"iterations", fit.report.iterations},
                        {"converged", fit.report.converged},
                        {"patch", path}}
                       .dump(2)
                << '\n';
      return fit.report.converged ? kOk : kPartial;
    }

    if (*tools) {
      auto registry = ToolRegistry::load(
          config.registry.empty()
              ? (config.asset_dir.empty() ? default_asset_dir() : std::filesystem::path(config.asset_dir)) /
                    "registry.json"
              : std::filesystem::path(config.registry));
      for (const auto& p : config.registry_patches) registry.apply_patch(json::parse(read_file(p)));
      if (*tools_list) {
        for (const auto& t : registry.tools()) std::cout << t.name << '\n';
        return kOk;
      }
      const auto& desc = registry.at(tool_name);
      if (*tools_describe) {
        std::cout << encode(desc).dump(2) << '\n';
        return kOk;
      }
      std::string endpoint = probe_endpoint.value_or(desc.binding.endpoint);
      if (endpoint.empty()) endpoint = config.executor.default_adapter_endpoint;
      json out = {{"tool", desc.name}, {"endpoint", endpoint}};
      if (desc.binding.kind == ToolBinding::Kind::kNative && !probe_endpoint) {
        out["reachable"] = true;
        out["native"] = true;
        std::cout << out.dump(2) << '\n';
        return kOk;
      }
      if (endpoint.empty()) throw Error(Errc::kConfig, "no adapter endpoint configured for " + desc.name);
      try {
        auto client = make_adapter_client(
            endpoint, std::chrono::milliseconds(config.executor.policy.per_tool_timeout_ms));
        const auto hs = client->handshake();
        out["reachable"] = true;
        out["version"] = hs.version;
        out["tools"] = hs.tools;
        out["serves_tool"] = std::any_of(hs.tools.begin(), hs.tools.end(),
                                         [&](const std::string& t) { return t == desc.name || t == "*"; });
      } catch (const Error& e) {
        out["reachable"] = false;
        out["error"] = std::string(to_string(e.code())) + ": " + e.what();
      }
      std::cout << out.dump(2) << '\n';
      return out["reachable"].get<bool>() ? kOk : kPartial;
    }
  } catch (const Error& e) {
    return fail(to_string(e.code()), e.what());
  } catch (const std::exception& e) {
    return fail("Internal", e.what());
  }
  return kOk;
}

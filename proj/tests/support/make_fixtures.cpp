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


// Regenerates everything under tests/fixtures: synthetic images, manifests,
// the MCQ file, calibration pairs, cassettes recorded against the scripted
// backend and the golden answers of the replay scenarios.
//
//   make_fixtures [output_dir]

#include <cmath>
#include <fstream>
#include <iostream>

#include "iqagent/calibration.hpp"
#include "iqagent/error.hpp"
#include "iqagent/eval.hpp"
#include "iqagent/json_io.hpp"
#include "iqagent/util.hpp"
#include "scenarios.hpp"
#include "test_support.hpp"

namespace fs = std::filesystem;
using namespace iqagent;
using namespace iqagent::testing;

namespace {

void write_text(const fs::path& p, const std::string& s) {
  write_file_atomic(p.string(), s);
  std::cout << "wrote " << p.filename().string() << '\n';
}

void images(const fs::path& dir) {
  const Image ref = make_scene(192, 192, 7);
  write_image(ref, dir / "scene_ref.png");
  write_image(add_noise(ref, 12.0, 11), dir / "scene_noise.png");
  write_image(box_blur(ref, 2), dir / "scene_blur.png");
  for (int i = 1; i <= 10; ++i) {
    char name[16];
    std::snprintf(name, sizeof name, "m%02d.png", i);
    write_image(add_noise(ref, 3.0 * i, 100 + i), dir / name);
  }
  // Gray pair for the kernel oracles.
  const Image g = make_scene(96, 80, 21, 1);
  write_image(g, dir / "gray_ref.png");
  write_image(add_noise(box_blur(g, 1), 6.0, 22), dir / "gray_dist.png");
  std::cout << "wrote images\n";
}

void manifest(const fs::path& dir) {
  std::string csv = "image_path,reference_path,mos\n";
  for (int i = 1; i <= 10; ++i) {
    char line[64];
    std::snprintf(line, sizeof line, "m%02d.png,scene_ref.png,%.2f\n", i, 4.8 - 0.37 * (i - 1));
    csv += line;
  }
  write_text(dir / "manifest.csv", csv);
}

void calibration_pairs(const fs::path& dir) {
  // Noise-free samples of a known standard-form curve over SSIM's range.
  const std::array<double, 5> beta = {3.0, 12.0, 0.75, 1.5, 1.2};
  std::string csv = "raw,mos\n";
  for (int i = 0; i < 40; ++i) {
    // Round raw first so the written pair is exactly on the curve.
    const double raw = std::round((0.4 + 0.6 * i / 39.0) * 1e6) / 1e6;
    char line[64];
    std::snprintf(line, sizeof line, "%.6f,%.9f\n", raw, logistic_value(raw, beta, LogisticForm::kStandard));
    csv += line;
  }
  write_text(dir / "pairs_ssim.csv", csv);
}

json mcq_items() {
  json items = json::array();
  for (const auto& m : mcq_fixture()) {
    json o = {{"id", m.id}, {"track", m.track}, {"question", m.question}, {"options", m.options},
              {"answer", m.answer}, {"image_path", "scene_noise.png"}};
    if (m.with_reference) o["reference_path"] = "scene_ref.png";
    if (!m.context.empty()) o["context"] = m.context;
    items.push_back(o);
  }
  return items;
}

void record_scenarios(const fs::path& dir) {
  const auto cassette = dir / "e2e.cassette.json";
  fs::remove(cassette);
  auto backend = std::make_shared<ScriptedBackend>();
  script_scenarios(*backend);
  auto config = replay_config(cassette, kScenarioEchoArgs);
  config.backend = BackendKind::kRecord;
  {
    Engine recorder(config, backend);
    for (const auto& s : scenarios()) recorder.assess(scenario_context(s, dir));
    recorder.flush();
  }
  // Goldens come from the first replay of the fresh cassette.
  Engine engine(replay_config(cassette, kScenarioEchoArgs));
  for (const auto& s : scenarios()) {
    const auto answer = engine.assess(scenario_context(s, dir));
    write_text(dir / ("golden_" + s.id + ".json"), encode(answer).dump(2) + "\n");
  }
}

void record_scoring(const fs::path& dir) {
  const auto cassette = dir / "scoring.cassette.json";
  fs::remove(cassette);
  auto backend = std::make_shared<ScriptedBackend>();
  script_scoring(*backend);
  auto config = replay_config(cassette, "");
  config.backend = BackendKind::kRecord;
  Engine engine(config, backend);
  const auto report = run_scoring(load_manifest((dir / "manifest.csv").string()), engine);
  engine.flush();
  std::cout << report.correlations.dump(2) << '\n';
}

void record_mcq(const fs::path& dir) {
  const auto cassette = dir / "mcq.cassette.json";
  fs::remove(cassette);
  auto backend = std::make_shared<ScriptedBackend>();
  script_mcq(*backend);
  auto config = replay_config(cassette, "");
  config.backend = BackendKind::kRecord;
  Engine engine(config, backend);
  const auto report = run_mcq(load_mcq((dir / "mcq.json").string()), engine);
  engine.flush();
  std::cout << report.to_json()["accuracy"].dump() << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  const fs::path dir = argc > 1 ? fs::path(argv[1]) : fixture_dir();
  try {
    fs::create_directories(dir);
    images(dir);
    manifest(dir);
    calibration_pairs(dir);
    write_text(dir / "mcq.json", mcq_items().dump(2) + "\n");
    record_scenarios(dir);
    record_scoring(dir);
    record_mcq(dir);
  } catch (const Error& e) {
    std::cerr << to_string(e.code()) << ": " << e.what() << '\n';
    return 2;
  }
  return 0;
}

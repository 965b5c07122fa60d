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


#include "scenarios.hpp"

#include "iqagent/error.hpp"

namespace iqagent::testing {

namespace {

const char* kAllFlags =
    R"("plan":{"distortion_detection":true,"distortion_analysis":true,"tool_selection":true,"tool_execute":true})";

}  // namespace

const std::vector<Scenario>& scenarios() {
  static const std::vector<Scenario> list = {
      {"global_nr", "scene_noise.png", std::nullopt, "Rate the overall quality of this image."},
      {"explicit_fr", "scene_blur.png", "scene_ref.png",
       "Compared with the reference, which distortion dominates this image?\n"
       "A. JPEG compression\nB. Blur\nC. Neither is visible"},
      {"non_iqa", "scene_noise.png", std::nullopt, "Does this photo evoke a calm mood?"},
  };
  return list;
}

const Scenario& scenario(const std::string& id) {
  for (const auto& s : scenarios()) {
    if (s.id == id) return s;
  }
  throw Error(Errc::kConfig, "no scenario " + id);
}

QueryContext scenario_context(const Scenario& s, const std::filesystem::path& dir) {
  QueryContext ctx;
  ctx.distorted_image = ImageHandle::from_file(dir / s.image);
  if (s.reference) ctx.reference_image = ImageHandle::from_file(dir / *s.reference);
  ctx.query_text = s.query;
  return ctx;
}

void script_scenarios(ScriptedBackend& b) {
  const auto& nr = scenario("global_nr").query;
  b.add({Stage::kDetection, nr, R"({"distortion_set":{"Global":["Noise","Blurs"]}})", {}});
  b.add({Stage::kSelection, nr, R"({"selected_tools":{"Global":{"Noise":"QAlign","Blurs":"MUSIQ"}}})", {}});

  const std::string fr = "which distortion dominates this image?";
  b.add({Stage::kPlanner, fr,
         std::string(R"({"query_type":"IQA","query_scope":"Global","distortion_source":"Explicit",)"
                     R"("distortions":{"Global":["JPEG compression","Blurs"]},"reference_mode":"Full-Reference",)"
                     R"("required_tool":null,)") + kAllFlags + "}",
         {}});
  b.add({Stage::kSelection, fr,
         R"({"selected_tools":{"Global":{"JPEG compression":"TOPIQ_FR","Blurs":"SSIM"}}})", {}});
  b.add({Stage::kSummaryChoice, fr,
         R"({"final_answer":"B","quality_reasoning":"Edges are soft throughout while block artifacts are faint; )"
         R"(SSIM reports the larger structural loss."})",
         {}});

  const auto& other = scenario("non_iqa").query;
  b.add({Stage::kPlanner, other,
         R"({"query_type":"Other","query_scope":"Global","distortion_source":"Inferred","distortions":null,)"
         R"("reference_mode":"No-Reference","required_tool":null,"plan":{"distortion_detection":false,)"
         R"("distortion_analysis":false,"tool_selection":false,"tool_execute":false}})",
         {}});
  b.add({Stage::kSummaryExplain, other,
         R"({"final_answer":"Mostly yes: the smooth gradients and muted palette read as calm.",)"
         R"("quality_reasoning":"Judged from the image content alone."})",
         {}});
}

void script_scoring(ScriptedBackend& b) {
  b.add({Stage::kDetection, kScoringQuery, R"({"distortion_set":{"Global":["Noise","Blurs"]}})", {}});
  b.add({Stage::kSelection, kScoringQuery,
         R"({"selected_tools":{"Global":{"Noise":"PSNR","Blurs":"SSIM"}}})", {}});
}

const std::vector<McqCase>& mcq_fixture() {
  static const std::vector<McqCase> items = {
      // planner: 4 of 5
      {"p1", "planner", "Should distortion detection run for the query 'Is the sky noisy?'",
       {"A. No", "B. Yes"}, "A", R"({"final_answer":"A"})", "", false},
      {"p2", "planner", "What is the reference mode when a pristine image is supplied?",
       {"A. No-Reference", "B. Full-Reference"}, "B", "(B)", "", true},
      {"p3", "planner", "Which query type fits 'Is this portrait beautiful?'",
       {"A. IQA", "B. Not applicable", "C. Other"}, "C", "The answer is C.", "", false},
      {"p4", "planner", "With a region but no tool named, should tool execution run?",
       {"A. No", "B. Yes"}, "A", R"({"final_answer":"B"})", "", false},
      {"p5", "planner", "What does an explicit blur mention change in the plan?",
       {"A. Tool selection is disabled", "B. Analysis is disabled", "C. Nothing changes",
        "D. Distortion detection is disabled"},
       "D", "I think distortion detection is disabled here.", "", false},
      // executor distortion: 3 of 5, one unparseable
      {"d1", "executor_distortion", "Which distortion is most visible in the image?",
       {"A. Contrast", "B. Noise", "C. Compression"}, "B", R"({"final_answer":"B"})",
       R"({"scope":"Global"})", false},
      {"d2", "executor_distortion", "How severe is the noise in the sky region?",
       {"A. Moderate", "B. Extreme", "C. None"}, "A", "A.", "", false},
      {"d3", "executor_distortion", "Is there visible color shift in the foreground?",
       {"A. Yes", "B. No", "C. Only at edges"}, "C", "I cannot tell from this view.", "", false},
      {"d4", "executor_distortion", "Which category does ringing around edges belong to?",
       {"A. Noise", "B. Compression", "C. Contrast"}, "B", "(A)", "", false},
      {"d5", "executor_distortion", "What degrades the lower half of the image?",
       {"A. Brightness change", "B. Sharpness", "C. Contrast", "D. Gaussian noise"}, "D",
       "Mostly gaussian noise, visible as grain.", "", false},
      // executor tool: 5 of 5
      {"t1", "executor_tool", "Which tool suits Gaussian blur with a reference?",
       {"A. DISTS", "B. NIQE", "C. BRISQUE"}, "A", R"({"final_answer":"A"})", "", true},
      {"t2", "executor_tool", "Which tool suits color diffusion without a reference?",
       {"A. PSNR", "B. LIQE", "C. SSIM"}, "B", R"(```json
{"final_answer": "B"}
```)", "", false},
      {"t3", "executor_tool", "Which tool suits white noise without a reference?",
       {"A. GMSD", "B. VIF", "C. QAlign"}, "C", "(C) QAlign", "", false},
      {"t4", "executor_tool", "Which tool suits JPEG artifacts with a reference?",
       {"A. TOPIQ_FR", "B. MUSIQ"}, "A", "Answer: A", "", true},
      {"t5", "executor_tool", "Which tool is a no-reference model?",
       {"A. SSIM", "B. PSNR", "C. MANIQA", "D. VIF"}, "C", "The best option is MANIQA.", "", false},
      // summarizer: 3 of 5
      {"s1", "summarizer", "How is the overall quality of this picture?",
       {"A. Good", "B. Fair", "C. Bad"}, "B", R"({"final_answer":"B","quality_reasoning":"moderate noise"})",
       "", false},
      {"s2", "summarizer", "Is the image sharp enough for printing?",
       {"A. Yes", "B. No"}, "B", R"({"final_answer":"B","quality_reasoning":"visible grain"})", "", false},
      {"s3", "summarizer", "Does noise affect the textured area?",
       {"A. Yes", "B. No"}, "A", R"({"final_answer":"B","quality_reasoning":"looks clean"})", "", false},
      {"s4", "summarizer", "Which part of the picture is least degraded?",
       {"A. The bright rectangle", "B. The left edge", "C. The corners"}, "A",
       "The bright rectangle holds up best.", "", false},
      {"s5", "summarizer", "Is the lighting of the scene adequate?",
       {"A. Too dark", "B. Adequate", "C. Overexposed"}, "B", "(C)", "", false},
  };
  return items;
}

void script_mcq(ScriptedBackend& b) {
  for (const auto& m : mcq_fixture()) {
    b.add({m.track == "summarizer" ? Stage::kSummaryChoice : Stage::kMcq, m.question, m.reply, {}});
  }
}

}  // namespace iqagent::testing

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

#include "iqagent/eval.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <regex>
#include <sstream>
#include <thread>

#include "iqagent/error.hpp"
#include "iqagent/json_io.hpp"
#include "iqagent/util.hpp"
#include "text.hpp"

namespace iqagent {

namespace fs = std::filesystem;

std::vector<double> average_ranks(std::span<const double> values) {
  std::vector<size_t> idx(values.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](size_t a, size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(values.size());
  for (size_t i = 0; i < idx.size();) {
    size_t j = i;
    while (j + 1 < idx.size() && values[idx[j + 1]] == values[idx[i]]) ++j;
    const double r = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (size_t k = i; k <= j; ++k) ranks[idx[k]] = r;
    i = j + 1;
  }
  return ranks;
}

namespace {

void check_pair(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw Error(Errc::kDegenerateInput, "vectors differ in length");
  if (a.size() < 3) throw Error(Errc::kDegenerateInput, "need at least 3 points");
  for (size_t i = 0; i < a.size(); ++i) {
    if (!std::isfinite(a[i]) || !std::isfinite(b[i])) throw Error(Errc::kDegenerateInput, "non-finite value");
  }
}

double pearson(std::span<const double> a, std::span<const double> b) {
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) throw Error(Errc::kDegenerateInput, "constant vector has no correlation");
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

// Runs fn(i) for i in [0, n) on up to `workers` threads.
void parallel_for(size_t n, int workers, const std::function<void(size_t)>& fn) {
  const auto count = std::clamp<size_t>(static_cast<size_t>(std::max(workers, 1)), 1, std::max<size_t>(n, 1));
  if (count == 1) {
    for (size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<size_t> next{0};
  std::vector<std::jthread> pool;
  for (size_t t = 0; t < count; ++t) {
    pool.emplace_back([&] {
      for (size_t i = next++; i < n; i = next++) fn(i);
    });
  }
}

std::string resolve(const fs::path& base, const std::string& p) {
  if (p.empty()) return p;
  const fs::path path(p);
  return path.is_absolute() ? p : (base / path).lexically_normal().string();
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out(1);
  bool quoted = false;
  for (size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        out.back().push_back('"');
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        out.back().push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.emplace_back();
    } else if (c != '\r') {
      out.back().push_back(c);
    }
  }
  for (auto& f : out) f = std::string(text::trim(f));
  return out;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  return "\"" + text::replace_all(s, "\"", "\"\"") + "\"";
}

}  // namespace

double srcc(std::span<const double> pred, std::span<const double> mos) {
  check_pair(pred, mos);
  const auto rp = average_ranks(pred);
  const auto rm = average_ranks(mos);
  return pearson(rp, rm);
}

double plcc(std::span<const double> pred, std::span<const double> mos) {
  check_pair(pred, mos);
  return pearson(pred, mos);
}

// ---------------------------------------------------------------------------

std::vector<MosRow> load_manifest(const std::string& path) {
  std::string body;
  try {
    body = read_file(path);
  } catch (const Error& e) {
    throw Error(Errc::kLoadError, e.what());
  }
  const fs::path base = fs::path(path).parent_path();
  std::vector<MosRow> rows;
  std::istringstream in(body);
  std::string line;
  size_t line_no = 0;
  auto fail = [&](const std::string& why) {
    throw Error(Errc::kLoadError, path + ":" + std::to_string(line_no) + ": " + why);
  };
  auto finish = [&](MosRow r) {
    if (r.image_path.empty()) fail("empty image_path");
    if (!std::isfinite(r.mos)) fail("mos is not finite");
    r.image_path = resolve(base, r.image_path);
    if (r.reference_path) r.reference_path = resolve(base, *r.reference_path);
    rows.push_back(std::move(r));
  };

  const auto ext = text::lower(fs::path(path).extension().string());
  if (ext == ".jsonl" || ext == ".ndjson" || ext == ".json") {
    while (std::getline(in, line)) {
      ++line_no;
      if (text::trim(line).empty()) continue;
      json j;
      try {
        j = json::parse(line);
        MosRow r;
        r.image_path = j.at("image_path").get<std::string>();
        if (j.contains("reference_path") && !j["reference_path"].is_null()) {
          r.reference_path = j["reference_path"].get<std::string>();
          if (r.reference_path->empty()) r.reference_path.reset();
        }
        r.mos = j.at("mos").get<double>();
        if (j.contains("split") && !j["split"].is_null()) r.split = j["split"].get<std::string>();
        finish(std::move(r));
      } catch (const json::exception& e) {
        fail(e.what());
      }
    }
  } else {
    std::vector<std::string> header;
    while (std::getline(in, line)) {
      ++line_no;
      if (text::trim(line).empty()) continue;
      auto fields = split_csv_line(line);
      if (header.empty()) {
        for (auto& f : fields) f = text::lower(f);
        header = fields;
        if (std::find(header.begin(), header.end(), "image_path") == header.end() ||
            std::find(header.begin(), header.end(), "mos") == header.end()) {
          fail("header must name image_path and mos");
        }
        continue;
      }
      if (fields.size() != header.size()) fail("expected " + std::to_string(header.size()) + " fields");
      MosRow r;
      for (size_t i = 0; i < header.size(); ++i) {
        const auto& h = header[i];
        const auto& v = fields[i];
        if (h == "image_path") {
          r.image_path = v;
        } else if (h == "reference_path") {
          if (!v.empty()) r.reference_path = v;
        } else if (h == "mos") {
          try {
            size_t used = 0;
            r.mos = std::stod(v, &used);
            if (used != v.size()) fail("bad mos '" + v + "'");
          } catch (const std::logic_error&) {
            fail("bad mos '" + v + "'");
          }
        } else if (h == "split") {
          if (!v.empty()) r.split = v;
        } else {
          fail("unknown column '" + h + "'");
        }
      }
      finish(std::move(r));
    }
  }
  if (rows.empty()) throw Error(Errc::kLoadError, path + ": manifest has no rows");
  return rows;
}

namespace {

json correlation_block(const std::vector<double>& pred, const std::vector<double>& mos) {
  json b = {{"n", pred.size()}};
  try {
    b["srcc"] = srcc(pred, mos);
    b["plcc"] = plcc(pred, mos);
  } catch (const Error& e) {
    b["srcc"] = nullptr;
    b["plcc"] = nullptr;
    b["error"] = e.what();
  }
  return b;
}

}  // namespace

ScoringReport run_scoring(const std::vector<MosRow>& manifest, Engine& engine, const ScoringOptions& opt) {
  ScoringReport report;
  report.rows.resize(manifest.size());
  parallel_for(manifest.size(), opt.workers, [&](size_t i) {
    auto& out = report.rows[i];
    out.row = manifest[i];
    try {
      QueryContext ctx;
      ctx.distorted_image = ImageHandle::from_file(out.row.image_path);
      if (out.row.reference_path) ctx.reference_image = ImageHandle::from_file(*out.row.reference_path);
      ctx.query_text = opt.query;
      const auto ans = engine.assess(ctx, AnswerKind::kScore);
      if (!ans.score) throw Error(Errc::kEmptyScores, "pipeline produced no score");
      const auto& d = ans.diagnostics;
      if (d.contains("fusion")) {
        out.q_normalized = d["fusion"]["q_normalized"].get<double>();
        out.q_literal = d["fusion"]["q_literal"].get<double>();
        out.q_uniform = d["fusion"]["q_uniform"].get<double>();
      } else {
        out.q_normalized = out.q_literal = out.q_uniform = *ans.score;
      }
      out.state_digest = ans.state_digest;
      out.ok = true;
    } catch (const Error& e) {
      out.error = std::string(to_string(e.code())) + ": " + e.what();
    } catch (const std::exception& e) {
      out.error = e.what();
    }
  });

  std::vector<double> mos, qn, ql, qu, mos_all, qn_all;
  for (const auto& r : report.rows) {
    mos_all.push_back(r.row.mos);
    qn_all.push_back(r.ok ? r.q_normalized : opt.impute_score);
    if (!r.ok) {
      ++report.failures;
      continue;
    }
    mos.push_back(r.row.mos);
    qn.push_back(r.q_normalized);
    ql.push_back(r.q_literal);
    qu.push_back(r.q_uniform);
  }
  if (report.failures == report.rows.size()) {
    throw Error(Errc::kAllRowsFailed, "all " + std::to_string(report.rows.size()) + " rows failed");
  }
  report.correlations["hvs_normalized"] = correlation_block(qn, mos);
  if (opt.include_literal) report.correlations["hvs_literal"] = correlation_block(ql, mos);
  report.correlations["uniform"] = correlation_block(qu, mos);
  json imputed = correlation_block(qn_all, mos_all);
  imputed["impute_score"] = opt.impute_score;
  report.correlations["hvs_normalized_imputed"] = imputed;
  return report;
}

json ScoringReport::to_json() const {
  json rows_j = json::array();
  for (const auto& r : rows) {
    json j = {{"image_path", r.row.image_path}, {"mos", r.row.mos}, {"ok", r.ok}};
    if (r.row.reference_path) j["reference_path"] = *r.row.reference_path;
    if (r.row.split) j["split"] = *r.row.split;
    if (r.ok) {
      j["q_normalized"] = r.q_normalized;
      j["q_literal"] = r.q_literal;
      j["q_uniform"] = r.q_uniform;
      j["state_digest"] = r.state_digest;
    } else {
      j["error"] = r.error;
    }
    rows_j.push_back(std::move(j));
  }
  return {{"rows", rows_j}, {"correlations", correlations}, {"failures", failures}};
}

std::string ScoringReport::to_csv() const {
  std::ostringstream out;
  out.precision(17);
  out << "image_path,reference_path,mos,ok,q_normalized,q_literal,q_uniform,state_digest,error\n";
  for (const auto& r : rows) {
    out << csv_field(r.row.image_path) << ',' << csv_field(r.row.reference_path.value_or("")) << ','
        << r.row.mos << ',' << (r.ok ? "true" : "false") << ',';
    if (r.ok) {
      out << r.q_normalized << ',' << r.q_literal << ',' << r.q_uniform << ',' << r.state_digest << ",";
    } else {
      out << ",,,," << csv_field(r.error);
    }
    out << '\n';
  }
  return out.str();
}

// ---------------------------------------------------------------------------

std::string_view to_string(McqTrack track) {
  switch (track) {
    case McqTrack::kPlanner: return "planner";
    case McqTrack::kExecutorDistortion: return "executor_distortion";
    case McqTrack::kExecutorTool: return "executor_tool";
    case McqTrack::kSummarizer: return "summarizer";
  }
  return "planner";
}

McqTrack parse_track(std::string_view s) {
  const auto k = text::lower(text::trim(s));
  for (auto t : {McqTrack::kPlanner, McqTrack::kExecutorDistortion, McqTrack::kExecutorTool, McqTrack::kSummarizer}) {
    if (k == to_string(t)) return t;
  }
  throw Error(Errc::kLoadError, "unknown MCQ track '" + std::string(s) + "'");
}

McqOption parse_option(std::string_view labeled) {
  static const std::regex kLabel(R"(^\s*\(?([A-Za-z])[.):]\s*([\s\S]*)$)");
  const std::string s(labeled);
  std::smatch m;
  if (!std::regex_match(s, m, kLabel)) {
    throw Error(Errc::kLoadError, "option '" + s + "' has no letter label");
  }
  return {static_cast<char>(std::toupper(static_cast<unsigned char>(m[1].str()[0]))),
          std::string(text::trim(m[2].str()))};
}

std::vector<McqItem> load_mcq(const std::string& path) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw Error(Errc::kLoadError, path + ": " + e.what());
  } catch (const Error& e) {
    throw Error(Errc::kLoadError, e.what());
  }
  if (!j.is_array()) throw Error(Errc::kLoadError, path + ": expected a JSON array of items");
  const fs::path base = fs::path(path).parent_path();
  std::vector<McqItem> items;
  for (size_t i = 0; i < j.size(); ++i) {
    const auto& o = j[i];
    const std::string where = path + " item " + std::to_string(i);
    try {
      McqItem it;
      it.id = o.at("id").get<std::string>();
      it.track = parse_track(o.at("track").get<std::string>());
      it.question = o.at("question").get<std::string>();
      for (const auto& opt : o.at("options")) it.options.push_back(parse_option(opt.get<std::string>()));
      const auto ans = std::string(text::trim(o.at("answer").get<std::string>()));
      if (ans.size() != 1) throw Error(Errc::kLoadError, "answer must be one letter");
      it.answer = static_cast<char>(std::toupper(static_cast<unsigned char>(ans[0])));
      it.image_path = resolve(base, o.at("image_path").get<std::string>());
      if (o.contains("reference_path") && !o["reference_path"].is_null()) {
        it.reference_path = resolve(base, o["reference_path"].get<std::string>());
      }
      if (o.contains("context") && !o["context"].is_null()) {
        it.context = o["context"].is_string() ? o["context"].get<std::string>() : o["context"].dump();
      }
      if (it.options.size() < 2 || it.options.size() > 4) {
        throw Error(Errc::kLoadError, "items need 2 to 4 options");
      }
      std::set<char> letters;
      for (const auto& op : it.options) {
        if (!letters.insert(op.letter).second) throw Error(Errc::kLoadError, "duplicate option letter");
      }
      if (!letters.contains(it.answer)) {
        throw Error(Errc::kLoadError, std::string("answer '") + it.answer + "' is not an option");
      }
      items.push_back(std::move(it));
    } catch (const json::exception& e) {
      throw Error(Errc::kLoadError, where + ": " + e.what());
    } catch (const Error& e) {
      throw Error(Errc::kLoadError, where + ": " + e.what());
    }
  }
  return items;
}

namespace {

bool valid_letter(char c, const std::vector<McqOption>& options) {
  return std::any_of(options.begin(), options.end(), [&](const McqOption& o) { return o.letter == c; });
}

std::optional<char> letter_pattern(const std::string& s, const std::vector<McqOption>& options) {
  const auto t = std::string(text::trim(s));
  // Bare letter, optionally punctuated: "B", "B.", "(B)".
  static const std::regex kBare(R"(^\(?([A-Za-z])[.):]?$)");
  std::smatch m;
  if (std::regex_match(t, m, kBare)) {
    const char c = static_cast<char>(std::toupper(static_cast<unsigned char>(m[1].str()[0])));
    if (valid_letter(c, options)) return c;
  }
  // "(B)" anywhere, then a leading "B." / "B)", then "answer is B".
  static const std::regex kParen(R"(\(([A-Z])\))");
  static const std::regex kLead(R"(^([A-Z])[.):](?:\s|$))");
  static const std::regex kAnswerIs(R"((?:answer|option|choice)\s*(?:is|:)?\s*:?\s*([A-Z])\b)",
                                    std::regex::icase);
  for (const auto* re : {&kParen, &kLead, &kAnswerIs}) {
    for (std::sregex_iterator it(t.begin(), t.end(), *re), end; it != end; ++it) {
      const char c = static_cast<char>(std::toupper(static_cast<unsigned char>((*it)[1].str()[0])));
      if (valid_letter(c, options)) return c;
    }
  }
  return std::nullopt;
}

std::optional<char> option_text_match(const std::string& s, const std::vector<McqOption>& options) {
  const auto hay = text::words(s);
  const McqOption* best = nullptr;
  size_t best_len = 0;
  for (const auto& o : options) {
    const auto needle = text::words(o.text);
    if (needle.size() > best_len && text::contains_phrase(hay, needle)) {
      best = &o;
      best_len = needle.size();
    }
  }
  if (best) return best->letter;
  return std::nullopt;
}

}  // namespace

char parse_choice(std::string_view model_text, const std::vector<McqOption>& options) {
  if (options.empty()) throw Error(Errc::kNoChoiceFound, "no options to choose from");
  const std::string s(model_text);
  if (auto obj = extract_json_object(s); obj && obj->contains("final_answer")) {
    const auto& fa = (*obj)["final_answer"];
    const auto v = fa.is_string() ? fa.get<std::string>() : fa.dump();
    if (auto c = letter_pattern(v, options)) return *c;
    if (auto c = option_text_match(v, options)) return *c;
  }
  if (auto c = letter_pattern(s, options)) return *c;
  if (auto c = option_text_match(s, options)) return *c;
  throw Error(Errc::kNoChoiceFound, "no option letter or text found in reply");
}

std::vector<ChatMessage> build_mcq_prompt(const McqItem& item, const QueryContext& ctx, const Engine& engine) {
  std::string question = item.question;
  for (const auto& o : item.options) question += "\n" + std::string(1, o.letter) + ". " + o.text;
  const std::string context = item.context.value_or("none");

  std::map<std::string, std::string> vars{{"query", question}, {"scope", "Global"},
                                          {"distortion_set", context}, {"analysis", context},
                                          {"tool_scores", "none"}};
  std::string name;
  switch (item.track) {
    case McqTrack::kPlanner: name = "planner"; break;
    case McqTrack::kExecutorDistortion: name = "detection"; break;
    case McqTrack::kExecutorTool: {
      name = "selection";
      std::string tools;
      for (const auto& t : engine.registry().tools()) tools += (tools.empty() ? "" : ", ") + t.name;
      vars["tool_description"] = tools;
      break;
    }
    case McqTrack::kSummarizer: name = "summary_choice"; break;
  }
  const auto& tpl = engine.assets().prompt(name);
  std::string user = fill_template(tpl.user, vars);
  if (item.track != McqTrack::kSummarizer) {
    if (item.context) user += "\nContext: " + *item.context;
    user +=
        "\nThis is a multiple-choice question. Return a valid JSON object: "
        "{\"final_answer\": \"<one option letter>\"}";
  }
  ChatMessage msg{Role::kUser, user, {}};
  if (ctx.distorted_image.valid()) msg.images.push_back(ctx.distorted_image);
  if (ctx.reference_image && ctx.reference_image->valid()) msg.images.push_back(*ctx.reference_image);
  return {{Role::kSystem, fill_template(tpl.system, vars), {}}, std::move(msg)};
}

McqReport run_mcq(const std::vector<McqItem>& items, Engine& engine, int workers) {
  McqReport report;
  report.items.resize(items.size());
  parallel_for(items.size(), workers, [&](size_t i) {
    const auto& item = items[i];
    auto& r = report.items[i];
    r.id = item.id;
    r.track = item.track;
    r.expected = item.answer;
    try {
      if (!engine.gateway()) throw Error(Errc::kBackendUnsupported, "MCQ runs need a model backend");
      QueryContext ctx;
      ctx.distorted_image = ImageHandle::from_file(item.image_path);
      if (item.reference_path) ctx.reference_image = ImageHandle::from_file(*item.reference_path);
      ctx.query_text = item.question;
      const auto resp = engine.gateway()->chat({build_mcq_prompt(item, ctx, engine), {0.0, 64}, std::nullopt});
      r.predicted = parse_choice(resp.text, item.options);
      r.correct = *r.predicted == item.answer;
    } catch (const Error& e) {
      r.error = std::string(to_string(e.code())) + ": " + e.what();
    } catch (const std::exception& e) {
      r.error = e.what();
    }
  });
  return report;
}

double McqReport::accuracy(std::optional<McqTrack> track) const {
  size_t total = 0, correct = 0;
  for (const auto& r : items) {
    if (track && r.track != *track) continue;
    ++total;
    correct += r.correct ? 1 : 0;
  }
  return total == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(total);
}

size_t McqReport::failures() const {
  return static_cast<size_t>(std::count_if(items.begin(), items.end(), [](const auto& r) { return !r.error.empty(); }));
}

json McqReport::to_json() const {
  json acc = {{"overall", accuracy()}};
  json counts = json::object();
  for (auto t : {McqTrack::kPlanner, McqTrack::kExecutorDistortion, McqTrack::kExecutorTool, McqTrack::kSummarizer}) {
    const auto n = std::count_if(items.begin(), items.end(), [&](const auto& r) { return r.track == t; });
    if (n == 0) continue;
    acc[std::string(to_string(t))] = accuracy(t);
    counts[std::string(to_string(t))] = n;
  }
  json list = json::array();
  for (const auto& r : items) {
    json j = {{"id", r.id}, {"track", to_string(r.track)}, {"expected", std::string(1, r.expected)},
              {"correct", r.correct}};
    j["predicted"] = r.predicted ? json(std::string(1, *r.predicted)) : json(nullptr);
    if (!r.error.empty()) j["error"] = r.error;
    list.push_back(std::move(j));
  }
  return {{"accuracy", acc}, {"items_per_track", counts}, {"failures", failures()}, {"items", list}};
}

}  // namespace iqagent

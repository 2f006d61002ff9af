// Copyright 2026 The ppcl Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
#include "ppcl/pipeline.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>

#include "ppcl/cka.h"
#include "ppcl/io.h"
#include "ppcl/log.h"

namespace ppcl {

using nlohmann::json;

namespace {

constexpr const char* kTeacherFile = "teacher.ppcl";
constexpr const char* kProbesFile = "probes.ppcl";
constexpr const char* kPartsFile = "parts.ppcl";
constexpr const char* kPlanFile = "plan.json";
constexpr const char* kReportFile = "report.json";
constexpr const char* kStudentFile = "student.ppcl";
constexpr const char* kTimingFile = "timing.json";

template <typename Fn>
auto run_stage(const std::string& name, Fn&& fn) -> decltype(fn()) {
  info("stage " + name);
  try {
    return fn();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(name, e.what());
  }
}

template <typename T>
void read_field(const json& j, const char* key, T& target, const std::string& path) {
  if (!j.contains(key)) return;
  try {
    target = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw std::invalid_argument(path + "." + key + ": " + e.what());
  }
}

void read_train(const json& j, TrainConfig& t, const std::string& path) {
  if (!j.is_object()) throw std::invalid_argument(path + ": expected an object");
  read_field(j, "steps", t.steps, path);
  read_field(j, "lr", t.lr, path);
  read_field(j, "batch_cells", t.batch_cells, path);
  read_field(j, "eval_every", t.eval_every, path);
  read_field(j, "cosine", t.cosine, path);
}

json train_to_json(const TrainConfig& t) {
  return json{{"steps", t.steps},
              {"lr", t.lr},
              {"batch_cells", t.batch_cells},
              {"eval_every", t.eval_every},
              {"cosine", t.cosine}};
}

void check_known(const json& j, std::initializer_list<const char*> keys, const std::string& path) {
  for (const auto& [k, v] : j.items()) {
    if (std::find_if(keys.begin(), keys.end(), [&](const char* x) { return k == x; }) ==
        keys.end()) {
      throw std::invalid_argument(path + "." + k + ": unknown key");
    }
  }
}

double quantile(std::vector<double> sorted, double q) {
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

json curve_json(const std::vector<double>& curve) { return json(curve); }

std::filesystem::path artifact(const RunConfig& c, const char* name) { return c.out / name; }

void ensure_out_dir(const RunConfig& c) { std::filesystem::create_directories(c.out); }

void merge_report(const RunConfig& c, const std::string& key, const json& value) {
  const auto path = artifact(c, kReportFile);
  json report = std::filesystem::exists(path) ? read_json(path) : json::object();
  report["schema_version"] = kReportSchemaVersion;
  report[key] = value;
  write_report(report, path);
}

}  // namespace

StageToggles StageToggles::parse(const std::string& preset) {
  if (preset == "all") return StageToggles{};
  if (preset == "detect-only") return StageToggles{true, true, false, false, false};
  throw std::invalid_argument("unknown stage preset '" + preset + "' (use all or detect-only)");
}

void RunConfig::apply_seed(std::uint64_t s) {
  seed = s;
  model.seed = s;
  depth.seed = s;
  width.seed = s;
  fine_tune.seed = s + 3;
}

void RunConfig::validate() const {
  model.validate();
  auto positive = [](bool ok, const char* what) {
    if (!ok) throw std::invalid_argument(std::string("config: ") + what);
  };
  positive(train_samples >= 1 && calib_samples >= 1, "sample counts must be >= 1");
  positive(!timesteps.empty(), "timesteps must not be empty");
  positive(probes.steps >= 0 && probes.lr >= 0.0, "probe steps and lr must be >= 0");
  positive(tau >= 0.0 && tau <= 1.0, "tau must lie in [0, 1]");
  positive(theta > 0.0, "theta must be > 0");
  positive(first_layer >= 1 && first_layer <= model.layers, "first_layer out of range");
  positive(depth.steps >= 0 && depth.lr >= 0.0 && depth.eval_every >= 1, "depth settings invalid");
  positive(width.steps >= 0 && width.lr >= 0.0 && width.eval_every >= 1, "width settings invalid");
  positive(width_selection.k_ffn >= 0 && width_selection.k_txt >= 0, "k_ffn/k_txt must be >= 0");
  positive(fine_tune.steps >= 0 && fine_tune.lr >= 0.0 && fine_tune.batch_samples >= 1,
           "fine-tune settings invalid");
  positive(latency_warmup >= 0 && latency_runs >= 1, "latency runs must be >= 1");
}

RunConfig config_from_json(const json& j, RunConfig c) {
  if (!j.is_object()) throw std::invalid_argument("config: expected a JSON object");
  check_known(j, {"seed", "model", "data", "stages", "probes", "detect", "depth", "width",
                  "fine_tune", "eval"},
              "$");
  if (j.contains("model")) c.model = spec_from_json(j.at("model"), c.model);
  std::uint64_t seed = c.seed;
  read_field(j, "seed", seed, "$");
  if (j.contains("data")) {
    const json& d = j.at("data");
    check_known(d, {"train_samples", "calib_samples", "timesteps"}, "$.data");
    read_field(d, "train_samples", c.train_samples, "$.data");
    read_field(d, "calib_samples", c.calib_samples, "$.data");
    read_field(d, "timesteps", c.timesteps, "$.data");
  }
  if (j.contains("stages")) {
    const json& s = j.at("stages");
    if (s.is_string()) {
      c.stages = StageToggles::parse(s.get<std::string>());
    } else {
      check_known(s, {"probes", "detect", "depth", "width", "fine_tune"}, "$.stages");
      read_field(s, "probes", c.stages.probes, "$.stages");
      read_field(s, "detect", c.stages.detect, "$.stages");
      read_field(s, "depth", c.stages.depth, "$.stages");
      read_field(s, "width", c.stages.width, "$.stages");
      read_field(s, "fine_tune", c.stages.fine_tune, "$.stages");
    }
  }
  if (j.contains("probes")) {
    const json& p = j.at("probes");
    check_known(p, {"steps", "lr", "damping"}, "$.probes");
    read_field(p, "steps", c.probes.steps, "$.probes");
    read_field(p, "lr", c.probes.lr, "$.probes");
    if (p.contains("damping") && !p.at("damping").is_null()) {
      c.probes.damping = p.at("damping").get<double>();
    }
  }
  if (j.contains("detect")) {
    const json& d = j.at("detect");
    check_known(d, {"tau", "theta", "first_layer"}, "$.detect");
    read_field(d, "tau", c.tau, "$.detect");
    read_field(d, "theta", c.theta, "$.detect");
    read_field(d, "first_layer", c.first_layer, "$.detect");
  }
  if (j.contains("depth")) {
    check_known(j.at("depth"), {"steps", "lr", "batch_cells", "eval_every", "cosine"}, "$.depth");
    read_train(j.at("depth"), c.depth, "$.depth");
  }
  if (j.contains("width")) {
    const json& w = j.at("width");
    check_known(w, {"steps", "lr", "batch_cells", "eval_every", "cosine", "k_ffn", "k_txt",
                    "text_cka_threshold"},
                "$.width");
    read_train(w, c.width, "$.width");
    read_field(w, "k_ffn", c.width_selection.k_ffn, "$.width");
    read_field(w, "k_txt", c.width_selection.k_txt, "$.width");
    read_field(w, "text_cka_threshold", c.width_selection.text_cka_threshold, "$.width");
  }
  if (j.contains("fine_tune")) {
    const json& f = j.at("fine_tune");
    check_known(f, {"steps", "lr", "batch_samples"}, "$.fine_tune");
    read_field(f, "steps", c.fine_tune.steps, "$.fine_tune");
    read_field(f, "lr", c.fine_tune.lr, "$.fine_tune");
    read_field(f, "batch_samples", c.fine_tune.batch_samples, "$.fine_tune");
  }
  if (j.contains("eval")) {
    const json& e = j.at("eval");
    check_known(e, {"warmup", "runs"}, "$.eval");
    read_field(e, "warmup", c.latency_warmup, "$.eval");
    read_field(e, "runs", c.latency_runs, "$.eval");
  }
  c.fine_tune.timesteps = c.timesteps;
  c.apply_seed(seed);
  c.validate();
  return c;
}

json config_to_json(const RunConfig& c) {
  json probes{{"steps", c.probes.steps}, {"lr", c.probes.lr}};
  probes["damping"] = c.probes.damping ? json(*c.probes.damping) : json(nullptr);
  json width = train_to_json(c.width);
  width["k_ffn"] = c.width_selection.k_ffn;
  width["k_txt"] = c.width_selection.k_txt;
  width["text_cka_threshold"] = c.width_selection.text_cka_threshold;
  return json{{"seed", c.seed},
              {"model", spec_to_json(c.model)},
              {"data",
               {{"train_samples", c.train_samples},
                {"calib_samples", c.calib_samples},
                {"timesteps", c.timesteps}}},
              {"stages",
               {{"probes", c.stages.probes},
                {"detect", c.stages.detect},
                {"depth", c.stages.depth},
                {"width", c.stages.width},
                {"fine_tune", c.stages.fine_tune}}},
              {"probes", probes},
              {"detect", {{"tau", c.tau}, {"theta", c.theta}, {"first_layer", c.first_layer}}},
              {"depth", train_to_json(c.depth)},
              {"width", width},
              {"fine_tune",
               {{"steps", c.fine_tune.steps},
                {"lr", c.fine_tune.lr},
                {"batch_samples", c.fine_tune.batch_samples}}},
              {"eval", {{"warmup", c.latency_warmup}, {"runs", c.latency_runs}}}};
}

RunConfig load_config(const std::filesystem::path& path, RunConfig base) {
  return config_from_json(read_json(path), std::move(base));
}

CalibrationSet training_set(const RunConfig& c) {
  return CalibrationSet::generate(c.model, static_cast<std::size_t>(c.train_samples), c.timesteps,
                                  c.seed + 1);
}

CalibrationSet calibration_set(const RunConfig& c) {
  return CalibrationSet::generate(c.model, static_cast<std::size_t>(c.calib_samples), c.timesteps,
                                  c.seed + 2);
}

LatencyStats measure_latency(const DualStreamModel& model, const CalibrationSet& data, int warmup,
                             int runs) {
  if (runs < 1 || data.samples.empty()) throw std::invalid_argument("measure_latency: no runs");
  const Tensor& x = data.samples.front();
  const double t = data.timesteps.front();
  for (int i = 0; i < warmup; ++i) run_model(model, x, t);
  std::vector<double> ms;
  ms.reserve(static_cast<std::size_t>(runs));
  for (int i = 0; i < runs; ++i) {
    const auto start = std::chrono::steady_clock::now();
    run_model(model, x, t);
    const auto stop = std::chrono::steady_clock::now();
    ms.push_back(std::chrono::duration<double, std::milli>(stop - start).count());
  }
  const double mean = std::accumulate(ms.begin(), ms.end(), 0.0) / static_cast<double>(runs);
  std::ranges::sort(ms);
  return {mean, quantile(ms, 0.5), quantile(ms, 0.75) - quantile(ms, 0.25), runs};
}

EvalMetrics evaluate(const DualStreamModel& student, const DualStreamModel& teacher,
                     const CalibrationSet& calib) {
  const ModelSpec& s = student.spec();
  const ModelSpec& t = teacher.spec();
  if (s.dim != t.dim || s.text_tokens != t.text_tokens || s.image_tokens != t.image_tokens) {
    throw ShapeError("evaluate: student and teacher token shapes differ");
  }
  const auto student_blocks = block_outputs(student, calib);
  const auto teacher_blocks = block_outputs(teacher, calib);
  EvalMetrics m;
  m.final_cka = cka_avg(student_blocks.back(), teacher_blocks.back());
  double mse_total = 0.0;
  for (std::size_t c = 0; c < calib.cell_count(); ++c) {
    const Tensor diff = mat::sub(student_blocks.back()[c], teacher_blocks.back()[c]);
    mse_total += mat::frobenius_dot(diff, diff) / static_cast<double>(diff.size());
  }
  m.mse = mse_total / static_cast<double>(calib.cell_count());
  for (std::size_t b = 0; b < student.depth(); ++b) {
    const Interval span = student.spans()[b];
    const auto& target = teacher_blocks.at(static_cast<std::size_t>(span.last - 1));
    m.layer_cka.emplace_back(span, cka_avg(student_blocks[b], target));
  }
  m.student_params = param_count(student);
  m.teacher_params = param_count(teacher);
  return m;
}

json eval_to_json(const EvalMetrics& m) {
  json layers = json::array();
  for (const auto& [span, value] : m.layer_cka) {
    layers.push_back({{"u", span.first}, {"v", span.last}, {"cka", value}});
  }
  const double reduction =
      1.0 - static_cast<double>(m.student_params) / static_cast<double>(m.teacher_params);
  return json{{"final_cka", m.final_cka},
              {"mse", m.mse},
              {"layer_cka", layers},
              {"student_params", m.student_params},
              {"teacher_params", m.teacher_params},
              {"param_reduction", reduction}};
}

json table_to_json(const CkaTable& table, int first_u) {
  json cka = json::array(), deltas = json::array();
  for (int u = first_u; u < table.layers(); ++u) {
    json values = json::array(), d = json::array();
    for (int k = u; k <= table.layers(); ++k) {
      values.push_back(table.cka(u, k));
      if (k > u) d.push_back(delta(table, u, k));
    }
    cka.push_back({{"u", u}, {"k_from", u}, {"values", values}});
    deltas.push_back({{"u", u}, {"k_from", u + 1}, {"values", d}});
  }
  return json{{"cka", cka}, {"delta", deltas}};
}

json intervals_to_json(const IntervalSet& set) {
  json out = json::array();
  for (const auto& d : set.intervals) {
    json e{{"u", d.span.first}, {"v", d.span.last}};
    e["cka"] = d.cka ? json(*d.cka) : json(nullptr);
    out.push_back(std::move(e));
  }
  return json{{"strategy", strategy_name(set.strategy)}, {"intervals", out}};
}

namespace {

json depth_part_json(const DepthStudentPart& p) {
  return json{{"u", p.span.first},
              {"v", p.span.last},
              {"initial_loss", p.initial_loss},
              {"final_loss", p.final_loss},
              {"curve", curve_json(p.curve)},
              {"params", param_count(p.block)}};
}

json width_part_json(const ProjectorPart& p) {
  return json{{"kind", width_kind_name(p.kind)},
              {"layer", p.layer},
              {"source", p.source},
              {"initial_loss", p.initial_loss},
              {"final_loss", p.final_loss},
              {"curve", curve_json(p.curve)}};
}

std::vector<DepthStudentPart> train_depth_parts(const DualStreamModel& teacher,
                                                const ActivationTrace& trace,
                                                const PruningPlan& plan, const TrainConfig& cfg) {
  std::vector<DepthStudentPart> parts;
  for (const auto& p : plan.intervals) {
    if (p.binding != Binding::kStudent) continue;
    parts.push_back(depth_distill(init_depth_part(teacher, p.interval.span), teacher, trace, cfg));
    info("depth part [" + std::to_string(p.interval.span.first) + "," +
         std::to_string(p.interval.span.last) + "] loss " + std::to_string(parts.back().final_loss));
  }
  return parts;
}

std::vector<ProjectorPart> train_width_parts(const DualStreamModel& teacher,
                                             const ActivationTrace& trace,
                                             const PruningPlan& plan, const TrainConfig& cfg) {
  std::vector<ProjectorPart> parts;
  for (const auto& w : plan.width) {
    if (w.binding != Binding::kStudent) continue;
    parts.push_back(
        width_distill(init_projector_part(trace, w, teacher.spec()), teacher, trace, cfg));
  }
  return parts;
}

json width_selection_json(const WidthCandidates& c) {
  json text = json::array(), ffn = json::array();
  for (const auto& [j, v] : c.text_cka) text.push_back({{"layer", j}, {"cka", v}});
  for (const auto& [j, v] : c.ffn_fit) ffn.push_back({{"layer", j}, {"mse", v}});
  return json{{"text_cka", text}, {"ffn_fit_mse", ffn}};
}

// Width pruning needs survivors; a plan that removes every layer skips it.
WidthCandidates select_for_plan(const ActivationTrace& trace, const PruningPlan& plan,
                                const WidthSelection& selection) {
  if (plan.survivors().empty()) {
    warn("width-distill: the depth plan leaves no surviving layers, no width targets");
    return {};
  }
  return select_width_targets(trace, plan, selection);
}

json latency_json(const LatencyStats& s) {
  return json{{"mean_ms", s.mean_ms}, {"median_ms", s.median_ms}, {"iqr_ms", s.iqr_ms}, {"runs", s.runs}};
}

}  // namespace

PipelineResult run_pipeline(const RunConfig& config, const StageHook& on_stage) {
  auto done = [&](const PipelineResult& r, const std::string& stage) {
    if (on_stage) on_stage(r, stage);
  };
  config.validate();
  PipelineResult r;
  r.report = json::object();
  r.report["schema_version"] = kReportSchemaVersion;
  r.report["config"] = config_to_json(config);

  CalibrationSet train, calib;
  ForwardResult train_fwd, calib_fwd;
  run_stage("build", [&] {
    r.teacher = build_teacher(config.model);
    train = training_set(config);
    calib = calibration_set(config);
    train_fwd = forward_model(r.teacher, train, true);
    calib_fwd = forward_model(r.teacher, calib, true);
  });
  const ActivationTrace& train_trace = *train_fwd.trace;
  const ActivationTrace& calib_trace = *calib_fwd.trace;
  r.report["data"] = {{"train_seed", config.seed + 1},
                      {"calib_seed", config.seed + 2},
                      {"train_cells", train.cell_count()},
                      {"calib_cells", calib.cell_count()}};
  const std::int64_t teacher_params = param_count(r.teacher);
  json params{{"teacher", teacher_params}};

  r.plan = make_plan(config.model, IntervalSet{});
  if (config.stages.probes) {
    run_stage("probe-train", [&] {
      r.probes = train_probes(train_trace, config.probes);
      json probes = json::array();
      for (const auto& p : r.probes) probes.push_back({{"layer", p.layer}, {"final_loss", p.final_loss}});
      r.report["probes"] = probes;
    });
    done(r, "probe-train");
  }
  if (config.stages.detect) {
    run_stage("detect", [&] {
      if (r.probes.empty()) throw std::invalid_argument("detection needs trained probes");
      r.detection = detect_intervals(r.teacher, calib_trace, r.probes, config.tau, config.first_layer);
      r.plan = make_plan(config.model, r.detection->intervals);
      const IntervalSet threshold =
          extract_intervals_threshold(r.detection->table, config.theta, config.tau, config.first_layer);
      r.report["detection"] = {{"tau", config.tau},
                               {"first_layer", config.first_layer},
                               {"table", table_to_json(r.detection->table, config.first_layer)},
                               {"intervals", intervals_to_json(r.detection->intervals)}};
      r.report["strategy_comparison"] = {{"theta", config.theta},
                                         {"LP", intervals_to_json(r.detection->intervals)},
                                         {"LP-a", intervals_to_json(threshold)}};
    });
    done(r, "detect");
  }
  if (config.stages.depth) {
    run_stage("depth-distill", [&] {
      r.parts.depth = train_depth_parts(r.teacher, train_trace, r.plan, config.depth);
      json parts = json::array();
      for (const auto& p : r.parts.depth) parts.push_back(depth_part_json(p));
      r.report["depth_parts"] = parts;
      params["depth_only"] = param_count(assemble_student(r.teacher, r.plan, r.parts));
    });
    done(r, "depth-distill");
  }
  if (config.stages.width) {
    run_stage("width-distill", [&] {
      const WidthCandidates cand = select_for_plan(calib_trace, r.plan, config.width_selection);
      r.plan.width = cand.targets;
      r.plan.validate();
      r.parts.width = train_width_parts(r.teacher, train_trace, r.plan, config.width);
      json parts = json::array();
      for (const auto& p : r.parts.width) parts.push_back(width_part_json(p));
      r.report["width_selection"] = width_selection_json(cand);
      r.report["width_parts"] = parts;
    });
    done(r, "width-distill");
  }
  if (config.stages.depth || config.stages.width) {
    run_stage("assemble", [&] {
      r.student = assemble_student(r.teacher, r.plan, r.parts);
      params["student"] = param_count(*r.student);
      r.report["eval"]["assembled"] = eval_to_json(evaluate(*r.student, r.teacher, calib));
    });
    done(r, "assemble");
    if (config.stages.fine_tune) {
      run_stage("fine-tune", [&] {
        FineTuneResult ft = fine_tune(std::move(*r.student), r.teacher, config.fine_tune);
        r.student = std::move(ft.student);
        r.report["fine_tune"] = {{"curve", curve_json(ft.curve)}, {"steps", config.fine_tune.steps}};
        r.report["eval"]["fine_tuned"] = eval_to_json(evaluate(*r.student, r.teacher, calib));
      });
      done(r, "fine-tune");
    }
    run_stage("eval", [&] {
      r.timing = {{"teacher", latency_json(measure_latency(r.teacher, calib, config.latency_warmup,
                                                            config.latency_runs))},
                  {"student", latency_json(measure_latency(*r.student, calib, config.latency_warmup,
                                                            config.latency_runs))}};
    });
  }
  r.report["param_counts"] = params;
  r.report["plan"] = plan_to_json(r.plan);
  if (!r.timing.is_null()) r.report["latency"] = {{"file", kTimingFile}};
  run_stage("report", [&] { check_finite_json(r.report); });
  done(r, "report");
  return r;
}

PipelineResult cmd_pipeline(const RunConfig& config) {
  for (const char* name : {kTeacherFile, kProbesFile, kPartsFile, kPlanFile, kReportFile,
                           kStudentFile, kTimingFile}) {
    if (!config.force && std::filesystem::exists(artifact(config, name))) {
      throw StageError("pipeline", artifact(config, name).string() +
                                       " already exists; pass --force to overwrite");
    }
  }
  run_stage("pipeline", [&] { ensure_out_dir(config); });
  auto write = [&](const PipelineResult& r, const std::string& stage) {
    run_stage("write", [&] {
      if (stage == "probe-train") {
        save_container(model_to_container(r.teacher), artifact(config, kTeacherFile));
        save_container(probes_to_container(r.probes), artifact(config, kProbesFile));
      } else if (stage == "detect") {
        save_plan(r.plan, artifact(config, kPlanFile));
      } else if (stage == "depth-distill" || stage == "width-distill") {
        save_plan(r.plan, artifact(config, kPlanFile));
        save_container(parts_to_container(r.parts), artifact(config, kPartsFile));
      } else if (stage == "assemble" || stage == "fine-tune") {
        save_container(model_to_container(*r.student), artifact(config, kStudentFile));
      } else if (stage == "report") {
        if (!std::filesystem::exists(artifact(config, kTeacherFile))) {
          save_container(model_to_container(r.teacher), artifact(config, kTeacherFile));
        }
        save_plan(r.plan, artifact(config, kPlanFile));
        write_report(r.report, artifact(config, kReportFile));
        if (!r.timing.is_null()) write_report(r.timing, artifact(config, kTimingFile));
        return;
      }
      write_report(r.report, artifact(config, kReportFile));
    });
  };
  return run_pipeline(config, write);
}

void cmd_probe_train(const RunConfig& config) {
  config.validate();
  run_stage("probe-train", [&] {
    ensure_out_dir(config);
    const DualStreamModel teacher = build_teacher(config.model);
    const ForwardResult fwd = forward_model(teacher, training_set(config), true);
    const auto probes = train_probes(*fwd.trace, config.probes);
    save_container(model_to_container(teacher), artifact(config, kTeacherFile));
    save_container(probes_to_container(probes), artifact(config, kProbesFile));
    json out = json::array();
    for (const auto& p : probes) out.push_back({{"layer", p.layer}, {"final_loss", p.final_loss}});
    merge_report(config, "probes", out);
  });
}

namespace {

DualStreamModel load_teacher(const RunConfig& c) {
  return model_from_container(load_container(artifact(c, kTeacherFile)));
}

}  // namespace

void cmd_detect(const RunConfig& config) {
  config.validate();
  run_stage("detect", [&] {
    const DualStreamModel teacher = load_teacher(config);
    const auto probes = probes_from_container(load_container(artifact(config, kProbesFile)));
    if (probes.empty()) throw std::invalid_argument("no probes in " + std::string(kProbesFile));
    RunConfig c = config;
    c.model = teacher.spec();
    const ForwardResult fwd = forward_model(teacher, calibration_set(c), true);
    const Detection d = detect_intervals(teacher, *fwd.trace, probes, config.tau, config.first_layer);
    save_plan(make_plan(teacher.spec(), d.intervals), artifact(config, kPlanFile));
    merge_report(config, "detection",
                 {{"tau", config.tau},
                  {"first_layer", config.first_layer},
                  {"table", table_to_json(d.table, config.first_layer)},
                  {"intervals", intervals_to_json(d.intervals)}});
  });
}

void cmd_depth_distill(const RunConfig& config) {
  config.validate();
  run_stage("depth-distill", [&] {
    const DualStreamModel teacher = load_teacher(config);
    const PruningPlan plan = load_plan(artifact(config, kPlanFile));
    RunConfig c = config;
    c.model = teacher.spec();
    const ForwardResult fwd = forward_model(teacher, training_set(c), true);
    TrainedParts parts;
    if (std::filesystem::exists(artifact(config, kPartsFile))) {
      parts = parts_from_container(load_container(artifact(config, kPartsFile)), teacher.spec());
    }
    parts.depth = train_depth_parts(teacher, *fwd.trace, plan, config.depth);
    save_container(parts_to_container(parts), artifact(config, kPartsFile));
    json out = json::array();
    for (const auto& p : parts.depth) out.push_back(depth_part_json(p));
    merge_report(config, "depth_parts", out);
  });
}

void cmd_width_distill(const RunConfig& config) {
  config.validate();
  run_stage("width-distill", [&] {
    const DualStreamModel teacher = load_teacher(config);
    PruningPlan plan = load_plan(artifact(config, kPlanFile));
    RunConfig c = config;
    c.model = teacher.spec();
    const ForwardResult train = forward_model(teacher, training_set(c), true);
    const ForwardResult calib = forward_model(teacher, calibration_set(c), true);
    TrainedParts parts;
    if (std::filesystem::exists(artifact(config, kPartsFile))) {
      parts = parts_from_container(load_container(artifact(config, kPartsFile)), teacher.spec());
    }
    const WidthCandidates cand = select_for_plan(*calib.trace, plan, config.width_selection);
    plan.width = cand.targets;
    plan.validate();
    parts.width = train_width_parts(teacher, *train.trace, plan, config.width);
    save_plan(plan, artifact(config, kPlanFile));
    save_container(parts_to_container(parts), artifact(config, kPartsFile));
    json out = json::array();
    for (const auto& p : parts.width) out.push_back(width_part_json(p));
    merge_report(config, "width_selection", width_selection_json(cand));
    merge_report(config, "width_parts", out);
  });
}

std::int64_t cmd_assemble(const AssembleOptions& o) {
  return run_stage("assemble", [&] {
    const DualStreamModel teacher = model_from_container(load_container(o.teacher));
    PruningPlan plan = load_plan(o.plan);
    TrainedParts parts;
    if (std::filesystem::exists(o.parts)) {
      parts = parts_from_container(load_container(o.parts), teacher.spec());
    }
    if (o.max_params) plan = bind_for_budget(teacher, plan, parts, *o.max_params);
    const DualStreamModel student = assemble_student(teacher, plan, parts);
    save_container(model_to_container(student), o.output);
    return param_count(student);
  });
}

json cmd_eval(const RunConfig& config, const std::filesystem::path& student_path,
              const std::filesystem::path& teacher_path) {
  return run_stage("eval", [&] {
    const DualStreamModel teacher = model_from_container(load_container(teacher_path));
    const DualStreamModel student = model_from_container(load_container(student_path));
    if (!(student.spec() == teacher.spec())) {
      throw ShapeError("student and teacher were built from different ModelSpecs");
    }
    RunConfig c = config;
    c.model = teacher.spec();
    const CalibrationSet calib = calibration_set(c);
    json out = eval_to_json(evaluate(student, teacher, calib));
    out["latency"] = {
        {"teacher", latency_json(measure_latency(teacher, calib, config.latency_warmup,
                                                 config.latency_runs))},
        {"student", latency_json(measure_latency(student, calib, config.latency_warmup,
                                                 config.latency_runs))}};
    return out;
  });
}

json compare_strategies(const RunConfig& config, const DualStreamModel& teacher,
                        std::span<const LinearProbe> probes,
                        const std::optional<PruningPlan>& manual) {
  if (probes.empty()) throw std::invalid_argument("compare_strategies: no probes");
  RunConfig c = config;
  c.model = teacher.spec();
  const ForwardResult train = forward_model(teacher, training_set(c), true);
  const CalibrationSet calib_set = calibration_set(c);
  const ForwardResult calib = forward_model(teacher, calib_set, true);
  const CkaTable table = compute_cka_table(teacher, *calib.trace, probes, config.first_layer);

  std::vector<IntervalSet> sets{extract_intervals(table, config.tau, config.first_layer),
                                extract_intervals_threshold(table, config.theta, config.tau,
                                                            config.first_layer)};
  if (manual) sets.push_back(manual->interval_set());

  std::map<std::pair<int, int>, DepthStudentPart> trained;
  json strategies = json::array();
  for (const IntervalSet& set : sets) {
    TrainedParts parts;
    for (const auto& d : set.intervals) {
      const auto key = std::make_pair(d.span.first, d.span.last);
      if (!trained.contains(key)) {
        trained.emplace(key, depth_distill(init_depth_part(teacher, d.span), teacher,
                                           *train.trace, config.depth));
      }
      parts.depth.push_back(trained.at(key));
    }
    const DualStreamModel student = assemble_student(teacher, make_plan(teacher.spec(), set), parts);
    const EvalMetrics m = evaluate(student, teacher, calib_set);
    json entry = intervals_to_json(set);
    entry["final_cka"] = m.final_cka;
    entry["student_params"] = m.student_params;
    strategies.push_back(std::move(entry));
  }
  return json{{"tau", config.tau},
              {"theta", config.theta},
              {"table", table_to_json(table, config.first_layer)},
              {"strategies", strategies}};
}

json cmd_compare_strategies(const RunConfig& config,
                            const std::optional<std::filesystem::path>& manual_plan) {
  config.validate();
  return run_stage("compare-strategies", [&] {
    const DualStreamModel teacher = load_teacher(config);
    const auto probes = probes_from_container(load_container(artifact(config, kProbesFile)));
    std::optional<PruningPlan> manual;
    if (manual_plan) {
      manual = load_plan(*manual_plan);
      manual->strategy = Strategy::kManual;
    }
    const json out = compare_strategies(config, teacher, probes, manual);
    merge_report(config, "strategy_comparison", out);
    return out;
  });
}

}  // namespace ppcl

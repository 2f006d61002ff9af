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
// ppcl: command-line driver for the pruning pipeline.

#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "ppcl/io.h"
#include "ppcl/log.h"
#include "ppcl/pipeline.h"

namespace {

struct GlobalOptions {
  std::optional<std::string> config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::string> stages;
  bool force = false;
  int verbosity = 1;
};

ppcl::RunConfig resolve(const GlobalOptions& g) {
  ppcl::RunConfig c;
  if (g.config) c = ppcl::load_config(*g.config);
  if (g.seed) c.apply_seed(*g.seed);
  if (g.out) c.out = *g.out;
  if (g.stages) c.stages = ppcl::StageToggles::parse(*g.stages);
  c.force = g.force;
  c.validate();
  return c;
}

void print_json(const nlohmann::json& j) { std::cout << ppcl::dump_json(j); }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Structured pruning of dual-stream transformers via linear-probe CKA"};
  app.require_subcommand(1);
  app.fallthrough();
  GlobalOptions g;
  app.add_option("--config", g.config, "JSON run configuration")->check(CLI::ExistingFile);
  app.add_option("--seed", g.seed, "Seed for model, data and training (default 42)");
  app.add_option("--out", g.out, "Output directory (default ppcl_out)");
  app.add_option("--stages", g.stages, "Stage preset: all or detect-only")
      ->check(CLI::IsMember({"all", "detect-only"}));
  app.add_flag("--force", g.force, "Overwrite existing artifacts");
  app.add_option("-v,--verbosity", g.verbosity, "0 warnings only, 1 info, 2 debug")
      ->check(CLI::Range(0, 2));

  auto* probe_train = app.add_subcommand("probe-train", "Build the teacher and train probes");
  auto* detect = app.add_subcommand("detect", "Compute the CKA table and write plan.json");
  auto* depth = app.add_subcommand("depth-distill", "Distill one student block per interval");
  auto* width = app.add_subcommand("width-distill", "Select and train width projectors");

  auto* assemble = app.add_subcommand("assemble", "Assemble a student from plan and parts");
  std::optional<std::string> plan_path, parts_path, teacher_path, output_path;
  std::optional<std::int64_t> max_params;
  assemble->add_option("--plan", plan_path, "Plan file (default <out>/plan.json)");
  assemble->add_option("--parts", parts_path, "Parts container (default <out>/parts.ppcl)");
  assemble->add_option("--teacher", teacher_path, "Teacher container (default <out>/teacher.ppcl)");
  assemble->add_option("--output", output_path, "Student container (default <out>/student.ppcl)");
  assemble->add_option("--max-params", max_params,
                       "Bind parts by lowest distill loss until the model fits")
      ->check(CLI::PositiveNumber);

  auto* eval = app.add_subcommand("eval", "Compare a student against the teacher");
  std::optional<std::string> eval_student, eval_teacher;
  eval->add_option("--student", eval_student, "Student container (default <out>/student.ppcl)");
  eval->add_option("--teacher", eval_teacher, "Teacher container (default <out>/teacher.ppcl)");

  auto* compare = app.add_subcommand("compare-strategies", "LP vs LP-a (and a manual plan)");
  std::optional<std::string> manual_plan;
  compare->add_option("--manual-plan", manual_plan, "Plan file used as the LP-b strategy")
      ->check(CLI::ExistingFile);

  auto* pipeline = app.add_subcommand("pipeline", "Run every stage and write all artifacts");

  CLI11_PARSE(app, argc, argv);
  ppcl::set_verbosity(g.verbosity);

  try {
    const ppcl::RunConfig c = resolve(g);
    auto in_out = [&](const std::optional<std::string>& v, const char* name) {
      return v ? std::filesystem::path(*v) : c.out / name;
    };
    if (*pipeline) {
      const auto r = ppcl::cmd_pipeline(c);
      std::cout << "wrote artifacts to " << c.out.string() << "\n";
      if (r.report.contains("eval")) print_json(r.report.at("eval"));
    } else if (*probe_train) {
      ppcl::cmd_probe_train(c);
    } else if (*detect) {
      ppcl::cmd_detect(c);
      print_json(ppcl::plan_to_json(ppcl::load_plan(c.out / "plan.json")));
    } else if (*depth) {
      ppcl::cmd_depth_distill(c);
    } else if (*width) {
      ppcl::cmd_width_distill(c);
    } else if (*assemble) {
      const std::int64_t params = ppcl::cmd_assemble({in_out(plan_path, "plan.json"),
                                                      in_out(parts_path, "parts.ppcl"),
                                                      in_out(teacher_path, "teacher.ppcl"),
                                                      in_out(output_path, "student.ppcl"),
                                                      max_params});
      std::cout << "params " << params << "\n";
    } else if (*eval) {
      print_json(ppcl::cmd_eval(c, in_out(eval_student, "student.ppcl"),
                                in_out(eval_teacher, "teacher.ppcl")));
    } else if (*compare) {
      std::optional<std::filesystem::path> manual;
      if (manual_plan) manual = *manual_plan;
      print_json(ppcl::cmd_compare_strategies(c, manual).at("strategies"));
    }
  } catch (const ppcl::StageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: stage config: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

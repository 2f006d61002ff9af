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
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <limits>

#include "ppcl/assembly.h"
#include "ppcl/io.h"
#include "support.h"

using namespace ppcl;

namespace {

namespace fs = std::filesystem;

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "ppcl_test_io";
  fs::create_directories(dir);
  return dir / name;
}

TensorContainer odd_values() {
  Tensor t = Tensor::matrix(2, 3);
  t[0] = -0.0;
  t[1] = std::numeric_limits<double>::denorm_min();
  t[2] = std::numeric_limits<double>::infinity();
  t[3] = std::numeric_limits<double>::max();
  t[4] = std::numeric_limits<double>::quiet_NaN();
  t[5] = 1.0 / 3.0;
  TensorContainer c;
  c.add("odd", t);
  return c;
}

}  // namespace

TEST_SUITE("container") {
  TEST_CASE("one-tensor save/load is bit-identical, special values included") {
    const TensorContainer c = odd_values();
    const fs::path p = scratch("one.ppcl");
    save_container(c, p);
    CHECK(load_container(p) == c);
    CHECK(decode_container(encode_container(c)) == c);
  }

  TEST_CASE("a file short by one byte is a truncated payload") {
    const fs::path p = scratch("short.ppcl");
    save_container(odd_values(), p);
    fs::resize_file(p, fs::file_size(p) - 1);
    CHECK_THROWS_AS(load_container(p), TruncatedPayloadError);
  }

  TEST_CASE("every prefix of a valid encoding is rejected") {
    TensorContainer c = odd_values();
    c.add("second", Tensor::matrix(1, 2, 4.0));
    const auto bytes = encode_container(c);
    for (std::size_t n = 0; n < bytes.size(); ++n) {
      CHECK_THROWS_AS(decode_container(std::span(bytes.data(), n)), ContainerError);
    }
  }

  TEST_CASE("header and entry corruption map to distinct errors") {
    TensorContainer c;
    c.add("a", Tensor::matrix(1, 1, 1.0));
    c.add("b", Tensor::matrix(1, 1, 2.0));
    const auto good = encode_container(c);
    // Layout: magic(4) version(4) count(4) | len(2) 'a' rank(1) dims(16) dtype(1) f64 | ...
    auto bad_magic = good;
    bad_magic[0] = 'X';
    CHECK_THROWS_AS(decode_container(bad_magic), BadMagicError);
    auto bad_version = good;
    bad_version[4] = 9;
    CHECK_THROWS_AS(decode_container(bad_version), UnsupportedVersionError);
    auto bad_dtype = good;
    bad_dtype[12 + 2 + 1 + 1 + 16] = 7;
    CHECK_THROWS_AS(decode_container(bad_dtype), UnknownDtypeError);
    auto duplicate = good;
    duplicate[12 + 29 + 2] = 'a';
    CHECK_THROWS_AS(decode_container(duplicate), DuplicateNameError);
    auto huge = good;
    huge[12 + 2 + 1 + 1 + 7] = 0x7f;  // first dim becomes enormous
    CHECK_THROWS_AS(decode_container(huge), TruncatedPayloadError);
    auto trailing = good;
    trailing.push_back(0);
    CHECK_THROWS_AS(decode_container(trailing), ContainerError);
    CHECK(decode_container(good) == c);
  }

  TEST_CASE("duplicate names cannot be added") {
    TensorContainer c;
    c.add("x", Tensor::matrix(1, 1));
    CHECK_THROWS_AS(c.add("x", Tensor::matrix(1, 1)), DuplicateNameError);
    CHECK_THROWS_AS(c.at("y"), MissingTensorError);
  }

  TEST_CASE("teacher, probes and parts round-trip and reassemble identically") {
    ModelSpec spec = test::small_spec();
    spec.linear_ffn_layers = {6};
    const DualStreamModel m = build_teacher(spec);
    const auto data = CalibrationSet::generate(spec, 2, {0.3, 0.7}, 5);
    const auto trace = *forward_model(m, data, true).trace;
    ProbeTrainConfig pc;
    pc.steps = 5;
    const auto probes = train_probes(trace, pc);
    IntervalSet set;
    set.intervals = {{{2, 4}, 0.99}};
    const PruningPlan plan = make_plan(spec, set,
                                       {{WidthKind::kText, 6, 5, Binding::kStudent},
                                        {WidthKind::kFfn, 1, 0, Binding::kStudent}});
    TrainedParts parts;
    TrainConfig tc;
    tc.steps = 3;
    parts.depth.push_back(depth_distill(init_depth_part(m, {2, 4}), m, trace, tc));
    for (const auto& w : plan.width) {
      parts.width.push_back(width_distill(init_projector_part(trace, w, spec), m, trace, tc));
    }

    save_container(model_to_container(m), scratch("teacher.ppcl"));
    save_container(probes_to_container(probes), scratch("probes.ppcl"));
    save_container(parts_to_container(parts), scratch("parts.ppcl"));
    save_plan(plan, scratch("plan.json"));

    const DualStreamModel m2 = model_from_container(load_container(scratch("teacher.ppcl")));
    const auto probes2 = probes_from_container(load_container(scratch("probes.ppcl")));
    const TrainedParts parts2 = parts_from_container(load_container(scratch("parts.ppcl")), spec);
    const PruningPlan plan2 = load_plan(scratch("plan.json"));

    CHECK(m2.spec() == spec);
    CHECK(model_to_container(m2) == model_to_container(m));
    REQUIRE(probes2.size() == probes.size());
    for (std::size_t i = 0; i < probes.size(); ++i) {
      CHECK(probes2[i].weight.bit_equal(probes[i].weight));
      CHECK(probes2[i].final_loss == probes[i].final_loss);
      CHECK(probes2[i].trained);
    }
    CHECK(plan2 == plan);
    CHECK(parts_to_container(parts2) == parts_to_container(parts));
    CHECK(parts2.depth[0].curve == parts.depth[0].curve);

    const DualStreamModel s1 = assemble_student(m, plan, parts);
    const DualStreamModel s2 = assemble_student(m2, plan2, parts2);
    const DualStreamModel s3 = model_from_container(model_to_container(s1));
    CHECK(s3.spans() == s1.spans());
    for (std::size_t c = 0; c < data.cell_count(); ++c) {
      const Tensor y = run_model(s1, data.cell_input(c), data.cell_timestep(c));
      CHECK(run_model(s2, data.cell_input(c), data.cell_timestep(c)).bit_equal(y));
      CHECK(run_model(s3, data.cell_input(c), data.cell_timestep(c)).bit_equal(y));
    }
  }

  TEST_CASE("a container missing a model tensor is rejected") {
    TensorContainer c = model_to_container(build_teacher(test::small_spec()));
    TensorContainer partial;
    for (const auto& e : c.entries()) {
      if (e.name != "block.2.image.q.weight") partial.add(e.name, e.value);
    }
    CHECK_THROWS_AS(model_from_container(partial), MissingTensorError);
  }
}

TEST_SUITE("plan file") {
  TEST_CASE("published 60-layer interval set parses and validates") {
    const PruningPlan plan = load_plan(fs::path(PPCL_FIXTURE_DIR) / "iq_plan.json");
    CHECK(plan.spec.layers == 60);
    REQUIRE(plan.intervals.size() == 13);
    CHECK(plan.intervals[4].interval.span == Interval{15, 24});
    CHECK(plan.intervals[12].interval.span == Interval{56, 57});
    CHECK_FALSE(plan.intervals[0].interval.cka.has_value());
    CHECK_NOTHROW(plan.validate());
    CHECK(plan_from_json(plan_to_json(plan)) == plan);
  }

  TEST_CASE("overlap, empty and malformed plans") {
    nlohmann::json j = plan_to_json(make_plan(ModelSpec{}, IntervalSet{}));
    CHECK(plan_from_json(j).intervals.empty());
    j["intervals"] = {{{"u", 5}, {"v", 7}, {"cka", nullptr}, {"binding", "student"}},
                      {{"u", 6}, {"v", 9}, {"cka", nullptr}, {"binding", "student"}}};
    CHECK_THROWS_AS(plan_from_json(j), IntervalError);
    nlohmann::json bad = plan_to_json(make_plan(ModelSpec{}, IntervalSet{}));
    bad["format"] = "other";
    CHECK_THROWS_AS(plan_from_json(bad), PlanFormatError);
    bad = plan_to_json(make_plan(ModelSpec{}, IntervalSet{}));
    bad.erase("model");
    CHECK_THROWS_AS(plan_from_json(bad), PlanFormatError);
    bad = plan_to_json(make_plan(ModelSpec{}, IntervalSet{}));
    bad["model"]["bogus"] = 1;
    CHECK_THROWS(plan_from_json(bad));
  }

  TEST_CASE("plan round trip is byte-exact on disk") {
    IntervalSet set;
    set.intervals = {{{1, 2}, 0.1 + 0.2}, {{3, 5}, 0.9999999906337125}};
    const PruningPlan plan = make_plan(ModelSpec{}, set, {{WidthKind::kFfn, 12, 0, Binding::kTeacher}});
    save_plan(plan, scratch("a.json"));
    const PruningPlan back = load_plan(scratch("a.json"));
    CHECK(back == plan);
    save_plan(back, scratch("b.json"));
    CHECK(read_file(scratch("a.json")) == read_file(scratch("b.json")));
  }
}

TEST_SUITE("reports") {
  TEST_CASE("NaN is refused with its field path") {
    nlohmann::json r = {{"a", {1.0, std::nan("")}}, {"b", 2}};
    try {
      write_report(r, scratch("r.json"));
      FAIL("expected NonFiniteFieldError");
    } catch (const NonFiniteFieldError& e) {
      CHECK(std::string(e.what()).find("$.a[1]") != std::string::npos);
    }
    CHECK_FALSE(fs::exists(scratch("r.json")));
  }

  TEST_CASE("writes are atomic and leave no temporaries") {
    const fs::path dir = scratch("atomic");
    fs::remove_all(dir);
    fs::create_directories(dir);
    write_report({{"x", 1}}, dir / "r.json");
    write_report({{"x", 2}}, dir / "r.json");
    CHECK(read_json(dir / "r.json")["x"] == 2);
    CHECK(std::distance(fs::directory_iterator(dir), fs::directory_iterator{}) == 1);
  }
}

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

#include <algorithm>

#include "ppcl/distill.h"
#include "support.h"

using namespace ppcl;

namespace {

ActivationTrace trace_of(const DualStreamModel& m, std::size_t samples,
                         std::vector<double> timesteps, std::uint64_t seed) {
  return *forward_model(m, CalibrationSet::generate(m.spec(), samples, std::move(timesteps), seed),
                        true)
              .trace;
}

bool blocks_bit_equal(const Block& a, const Block& b) {
  std::vector<const Tensor*> pa, pb;
  visit_block("b", a, [&](const std::string&, const Tensor& t) { pa.push_back(&t); });
  visit_block("b", b, [&](const std::string&, const Tensor& t) { pb.push_back(&t); });
  if (pa.size() != pb.size()) return false;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    if (!pa[i]->bit_equal(*pb[i])) return false;
  }
  return true;
}

double column_variance(const Tensor& x) {
  double total = 0.0;
  for (std::size_t c = 0; c < x.cols(); ++c) {
    double mean = 0.0;
    for (std::size_t r = 0; r < x.rows(); ++r) mean += x(r, c);
    mean /= static_cast<double>(x.rows());
    for (std::size_t r = 0; r < x.rows(); ++r) total += (x(r, c) - mean) * (x(r, c) - mean);
  }
  return total / static_cast<double>(x.size());
}

}  // namespace

TEST_SUITE("depth distillation") {
  TEST_CASE("identity plant: initialization already has zero loss") {
    ModelSpec spec = test::small_spec();
    spec.epsilon = 0.0;
    const DualStreamModel m = build_teacher(spec);
    const auto trace = trace_of(m, 3, {0.2, 0.8}, 1);
    const DepthStudentPart part = init_depth_part(m, {2, 4});
    CHECK(depth_loss(part, m, trace) == 0.0);
    CHECK(blocks_bit_equal(part.block, m.layer(2)));
  }

  TEST_CASE("planted interval: 300 steps cut the loss below 20% of the start") {
    const ModelSpec spec;
    const DualStreamModel m = build_teacher(spec);
    const auto trace = trace_of(m, 4, {0.1, 0.4, 0.7, 1.0}, 43);
    TrainConfig cfg;
    cfg.steps = 300;
    cfg.batch_cells = 8;
    const DepthStudentPart p = depth_distill(init_depth_part(m, {3, 5}), m, trace, cfg);
    INFO("initial ", p.initial_loss, " final ", p.final_loss);
    CHECK(p.initial_loss > 0.0);
    CHECK(p.final_loss < 0.2 * p.initial_loss);
    CHECK(p.final_loss == doctest::Approx(depth_loss(p, m, trace)).epsilon(1e-12));
    CHECK(p.curve.front() == p.initial_loss);
    CHECK(p.final_loss == *std::ranges::min_element(p.curve));
    CHECK(p.curve.size() == 7);
  }

  TEST_CASE("parts are isolated from one another") {
    const ModelSpec spec = test::small_spec();
    const DualStreamModel m = build_teacher(spec);
    const auto trace = trace_of(m, 2, {0.3, 0.6}, 2);
    TrainConfig cfg;
    cfg.steps = 20;
    cfg.lr = 1e-3;
    const DepthStudentPart b0 = init_depth_part(m, {4, 5});
    const double before = depth_loss(b0, m, trace);
    const DepthStudentPart b_alone = depth_distill(b0, m, trace, cfg);
    // Train and perturb a neighbouring interval; b must not notice.
    DepthStudentPart a = depth_distill(init_depth_part(m, {2, 3}), m, trace, cfg);
    for (Tensor* t : block_parameters(a.block)) {
      for (double& v : t->values()) v += 0.5;
    }
    CHECK(depth_loss(b0, m, trace) == before);
    const DepthStudentPart b_after = depth_distill(b0, m, trace, cfg);
    CHECK(blocks_bit_equal(b_alone.block, b_after.block));
    CHECK(b_alone.final_loss == b_after.final_loss);
  }

  TEST_CASE("zero steps leave the part bit-unchanged") {
    const ModelSpec spec = test::small_spec();
    const DualStreamModel m = build_teacher(spec);
    const auto trace = trace_of(m, 2, {0.5}, 3);
    TrainConfig cfg;
    cfg.steps = 0;
    const DepthStudentPart p0 = init_depth_part(m, {2, 4});
    const DepthStudentPart p1 = depth_distill(p0, m, trace, cfg);
    CHECK(blocks_bit_equal(p0.block, p1.block));
    CHECK(p1.initial_loss == p1.final_loss);
  }

  TEST_CASE("bad spans and configs are rejected") {
    const DualStreamModel m = build_teacher(test::small_spec());
    CHECK_THROWS(init_depth_part(m, {3, 3}));
    CHECK_THROWS(init_depth_part(m, {5, 7}));
    const auto trace = trace_of(m, 1, {0.5}, 3);
    TrainConfig cfg;
    cfg.lr = -1.0;
    CHECK_THROWS(depth_distill(init_depth_part(m, {2, 3}), m, trace, cfg));
  }
}

TEST_SUITE("width selection") {
  TEST_CASE("duplicated text outputs select the deeper layer") {
    ModelSpec spec = test::small_spec();
    spec.epsilon = 0.0;
    const DualStreamModel m = build_teacher(spec);
    const auto trace = trace_of(m, 2, {0.4}, 4);
    const PruningPlan plan = make_plan(spec, {});
    // Every layer of this small toy clears 0.999, so only exact duplicates
    // are admitted here.
    const WidthCandidates c = select_width_targets(trace, plan, {0, 1, 1.0 - 1e-9});
    REQUIRE(c.targets.size() == 1);
    CHECK(c.targets[0] == WidthTarget{WidthKind::kText, 4, 3, Binding::kStudent});
    for (const auto& [j, v] : c.text_cka) {
      if (j == 3 || j == 4) CHECK(v == doctest::Approx(1.0).epsilon(1e-12));
    }
  }

  TEST_CASE("no two adjacent text targets") {
    ModelSpec spec = test::small_spec();
    spec.epsilon = 0.0;
    const DualStreamModel m = build_teacher(spec);
    const auto trace = trace_of(m, 2, {0.4}, 4);
    const WidthCandidates c = select_width_targets(trace, make_plan(spec, {}), {0, 3, 0.999});
    std::vector<int> text;
    for (const auto& t : c.targets) text.push_back(t.layer);
    for (std::size_t i = 1; i < text.size(); ++i) CHECK(text[i] - text[i - 1] >= 2);
    CHECK_NOTHROW(make_plan(spec, {}, c.targets));
  }

  TEST_CASE("a planted linear FFN ranks first; k_ffn = 0 selects none") {
    ModelSpec spec = test::small_spec();
    spec.linear_ffn_layers = {5};
    const DualStreamModel m = build_teacher(spec);
    // Enough rows that every affine fit is overdetermined.
    const auto trace = trace_of(m, 16, {0.3, 0.9}, 5);
    IntervalSet set;
    set.intervals = {{{2, 4}, 0.99}};
    const PruningPlan plan = make_plan(spec, set);
    const WidthCandidates c = select_width_targets(trace, plan, {1, 0, 0.999});
    REQUIRE(c.targets.size() == 1);
    CHECK(c.targets[0].layer == 5);
    CHECK(c.targets[0].kind == WidthKind::kFfn);
    double best = 1e300;
    int best_layer = 0;
    for (const auto& [j, mse] : c.ffn_fit) {
      if (mse < best) best = mse, best_layer = j;
    }
    CHECK(best_layer == 5);
    CHECK(select_width_targets(trace, plan, {0, 0, 0.999}).targets.empty());
  }

  TEST_CASE("a plan without survivors is rejected") {
    const ModelSpec spec = test::small_spec();
    const auto trace = trace_of(build_teacher(spec), 1, {0.5}, 5);
    IntervalSet set;
    set.intervals = {{{1, 6}, 0.99}};
    CHECK_THROWS(select_width_targets(trace, make_plan(spec, set), {}));
  }

  TEST_CASE("only survivors are candidates") {
    const ModelSpec spec = test::small_spec();
    const DualStreamModel m = build_teacher(spec);
    const auto trace = trace_of(m, 2, {0.3}, 6);
    IntervalSet set;
    set.intervals = {{{2, 4}, 0.99}};
    const WidthCandidates c = select_width_targets(trace, make_plan(spec, set), {6, 6, 0.0});
    for (const auto& t : c.targets) CHECK((t.layer < 2 || t.layer > 4));
    for (const auto& [j, v] : c.text_cka) CHECK(j != 5);  // layer 4 is inside the interval
  }
}

TEST_SUITE("width distillation") {
  TEST_CASE("text stream exactly linear in its inputs: init fits it") {
    ModelSpec spec = test::small_spec();
    spec.epsilon = 0.0;
    const DualStreamModel m = build_teacher(spec);
    const auto trace = trace_of(m, 3, {0.6}, 7);
    const ProjectorPart p =
        init_projector_part(trace, {WidthKind::kText, 4, 3, Binding::kStudent}, spec);
    const WidthLoss l = width_loss(p, m, trace);
    INFO("linear ", l.linear);
    CHECK(l.linear <= 1e-8);
  }

  TEST_CASE("planted linear FFN: trained projector beats the constant baseline tenfold") {
    ModelSpec spec = test::small_spec();
    spec.linear_ffn_layers = {5};
    const DualStreamModel m = build_teacher(spec);
    const auto trace = trace_of(m, 3, {0.2, 0.7}, 8);
    TrainConfig cfg;
    cfg.steps = 50;
    ProjectorPart p = init_projector_part(trace, {WidthKind::kFfn, 5, 0, Binding::kStudent}, spec);
    p = width_distill(p, m, trace, cfg);
    std::vector<Tensor> ft, fi;
    for (std::size_t c = 0; c < trace.cell_count(); ++c) {
      ft.push_back(trace.record(5, c).f_text);
      fi.push_back(trace.record(5, c).f_image);
    }
    const double baseline = column_variance(mat::vstack(ft)) + column_variance(mat::vstack(fi));
    const WidthLoss l = width_loss(p, m, trace);
    INFO("linear ", l.linear, " baseline ", baseline);
    CHECK(l.linear < 0.1 * baseline);
    CHECK(p.final_loss <= p.initial_loss);
  }

  TEST_CASE("zero steps leave projectors bit-unchanged") {
    const ModelSpec spec = test::small_spec();
    const DualStreamModel m = build_teacher(spec);
    const auto trace = trace_of(m, 2, {0.5}, 9);
    TrainConfig cfg;
    cfg.steps = 0;
    for (const WidthTarget t : {WidthTarget{WidthKind::kFfn, 6, 0, Binding::kStudent},
                                WidthTarget{WidthKind::kText, 6, 5, Binding::kStudent}}) {
      const ProjectorPart p0 = init_projector_part(trace, t, spec);
      const ProjectorPart p1 = width_distill(p0, m, trace, cfg);
      CHECK(p1.first.weight.bit_equal(p0.first.weight));
      CHECK(p1.second.bias.bit_equal(p0.second.bias));
    }
  }

  TEST_CASE("text part training does not raise the loss") {
    const ModelSpec spec = test::small_spec();
    const DualStreamModel m = build_teacher(spec);
    const auto trace = trace_of(m, 2, {0.3, 0.8}, 10);
    TrainConfig cfg;
    cfg.steps = 20;
    cfg.lr = 1e-5;
    cfg.batch_cells = 0;
    const ProjectorPart p = width_distill(
        init_projector_part(trace, {WidthKind::kText, 6, 5, Binding::kStudent}, spec), m, trace,
        cfg);
    CHECK(p.final_loss <= p.initial_loss);
  }

  TEST_CASE("text target must read from the previous layer") {
    const ModelSpec spec = test::small_spec();
    const DualStreamModel m = build_teacher(spec);
    const auto trace = trace_of(m, 1, {0.5}, 11);
    CHECK_THROWS(init_projector_part(trace, {WidthKind::kText, 5, 3, Binding::kStudent}, spec));
  }
}

TEST_SUITE("fine-tune") {
  TEST_CASE("teacher copy starts at zero loss and one step only applies weight decay") {
    const ModelSpec spec = test::small_spec();
    const DualStreamModel m = build_teacher(spec);
    FineTuneConfig cfg;
    cfg.steps = 1;
    cfg.lr = 1e-3;
    const FineTuneResult r = fine_tune(m, m, cfg);
    REQUIRE(r.curve.size() == 1);
    CHECK(r.curve[0] == 0.0);
    std::vector<const Tensor*> before, after;
    visit_model(m, [&](const std::string&, const Tensor& t) { before.push_back(&t); });
    visit_model(r.student, [&](const std::string&, const Tensor& t) { after.push_back(&t); });
    const double factor = 1.0 - cfg.lr * cfg.adam.weight_decay;
    double worst = 0.0;
    for (std::size_t i = 0; i < before.size(); ++i) {
      for (std::size_t j = 0; j < before[i]->size(); ++j) {
        worst = std::max(worst, std::abs((*after[i])[j] - factor * (*before[i])[j]));
      }
    }
    CHECK(worst <= 1e-15);
  }

  TEST_CASE("zero steps are the identity") {
    const DualStreamModel m = build_teacher(test::small_spec());
    FineTuneConfig cfg;
    cfg.steps = 0;
    const FineTuneResult r = fine_tune(m, m, cfg);
    CHECK(r.curve.empty());
    std::mt19937_64 rng(1);
    const Tensor x = Tensor::randn(12, 16, rng);
    CHECK(run_model(r.student, x, 0.5).bit_equal(run_model(m, x, 0.5)));
  }
}

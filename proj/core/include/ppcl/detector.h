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
// Redundant-interval detection from probe surrogates.
//
// For a start layer u and k > u, the surrogate runs teacher layer u on the
// traced input T_{u-1}, then probes u+1..k. cka(u, k) compares its output with
// the teacher's T_u, averaged over calibration cells; cka(u, u) = 1.
// Delta(u, k) = cka(u, k-1) - cka(u, k). An interval [u, v] ends just before
// the first k in [u+2, M] whose Delta rises, or at M when none does. The scan
// continues at v + 1 and keeps intervals with cka(u, v) >= tau.

#pragma once

#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "ppcl/model.h"
#include "ppcl/probes.h"

namespace ppcl {

enum class Strategy { kLinearProbe, kThreshold, kManual, kBaseline };

/// "LP", "LP-a", "LP-b", "baseline".
std::string_view strategy_name(Strategy s);
Strategy parse_strategy(std::string_view name);

struct DetectedInterval {
  Interval span;
  /// cka(u, v) at detection time; absent for hand-written plans.
  std::optional<double> cka;

  friend bool operator==(const DetectedInterval&, const DetectedInterval&) = default;
};

class IntervalError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct IntervalSet {
  std::vector<DetectedInterval> intervals;
  Strategy strategy = Strategy::kLinearProbe;

  std::vector<Interval> spans() const;
  /// Sorted, non-overlapping, 1 <= u, v >= u + 1, v <= layers.
  void validate(int layers) const;

  friend bool operator==(const IntervalSet&, const IntervalSet&) = default;
};

/// cka(u, k) for 1 <= u <= k <= M. Missing entries are absent, not NaN.
class CkaTable {
 public:
  CkaTable() = default;
  explicit CkaTable(int layers);

  int layers() const { return layers_; }
  bool has(int u, int k) const;
  /// cka(u, u) is 1 by convention and always present.
  double cka(int u, int k) const;
  void set(int u, int k, double value);

 private:
  std::size_t index(int u, int k) const;

  int layers_ = 0;
  std::vector<std::optional<double>> values_;
};

/// Delta(u, k) = -(cka(u, k) - cka(u, k - 1)); throws if either entry is missing.
double delta(const CkaTable& table, int u, int k);

/// Surrogate outputs of layers u..k on every calibration cell (index 0 is
/// teacher layer u's own output).
std::vector<std::vector<Tensor>> surrogate_outputs(const DualStreamModel& teacher,
                                                   const ActivationTrace& calib,
                                                   std::span<const LinearProbe> probes, int u,
                                                   int k);

double surrogate_cka(const DualStreamModel& teacher, const ActivationTrace& calib,
                     std::span<const LinearProbe> probes, int u, int k);

/// Fills rows u = first_u..M-1 (all k in [u, M]).
CkaTable compute_cka_table(const DualStreamModel& teacher, const ActivationTrace& calib,
                           std::span<const LinearProbe> probes, int first_u = 1);

int find_interval_end(const CkaTable& table, int u);

/// Gapless scan from first_u using find_interval_end, filtered by tau.
IntervalSet extract_intervals(const CkaTable& table, double tau = 0.9, int first_u = 1);

/// Threshold variant: v = max{k > u | cka(u, k) >= theta}; a start with no
/// such k advances by one layer.
IntervalSet extract_intervals_threshold(const CkaTable& table, double theta, double tau = 0.9,
                                        int first_u = 1);

struct Detection {
  CkaTable table;
  IntervalSet intervals;
};

Detection detect_intervals(const DualStreamModel& teacher, const ActivationTrace& calib,
                           std::span<const LinearProbe> probes, double tau = 0.9, int first_u = 1);

Detection detect_intervals_threshold(const DualStreamModel& teacher, const ActivationTrace& calib,
                                     std::span<const LinearProbe> probes, double theta,
                                     double tau = 0.9, int first_u = 1);

}  // namespace ppcl

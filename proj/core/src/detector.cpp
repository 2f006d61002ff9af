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
#include "ppcl/detector.h"

#include <algorithm>
#include <string>

#include "ppcl/cka.h"

namespace ppcl {

std::string_view strategy_name(Strategy s) {
  switch (s) {
    case Strategy::kLinearProbe:
      return "LP";
    case Strategy::kThreshold:
      return "LP-a";
    case Strategy::kManual:
      return "LP-b";
    case Strategy::kBaseline:
      return "baseline";
  }
  return "LP";
}

Strategy parse_strategy(std::string_view name) {
  if (name == "LP") return Strategy::kLinearProbe;
  if (name == "LP-a") return Strategy::kThreshold;
  if (name == "LP-b") return Strategy::kManual;
  if (name == "baseline") return Strategy::kBaseline;
  throw IntervalError("unknown strategy tag '" + std::string(name) + "'");
}

std::vector<Interval> IntervalSet::spans() const {
  std::vector<Interval> out;
  out.reserve(intervals.size());
  for (const auto& i : intervals) out.push_back(i.span);
  return out;
}

void IntervalSet::validate(int layers) const {
  int prev_last = 0;
  for (const auto& d : intervals) {
    const Interval& s = d.span;
    const std::string label = "[" + std::to_string(s.first) + "," + std::to_string(s.last) + "]";
    if (s.first < 1 || s.last > layers) {
      throw IntervalError("interval " + label + " outside layers 1.." + std::to_string(layers));
    }
    if (s.last < s.first + 1) throw IntervalError("interval " + label + " shorter than 2 layers");
    if (s.first <= prev_last) {
      throw IntervalError("interval " + label + " overlaps or precedes the previous interval");
    }
    prev_last = s.last;
  }
}

CkaTable::CkaTable(int layers)
    : layers_(layers),
      values_(static_cast<std::size_t>(layers) * static_cast<std::size_t>(layers)) {
  if (layers < 1) throw std::invalid_argument("CkaTable: layers must be >= 1");
}

std::size_t CkaTable::index(int u, int k) const {
  if (u < 1 || k < u || k > layers_) {
    throw std::out_of_range("CkaTable: (" + std::to_string(u) + "," + std::to_string(k) +
                            ") outside 1 <= u <= k <= " + std::to_string(layers_));
  }
  return static_cast<std::size_t>(u - 1) * static_cast<std::size_t>(layers_) +
         static_cast<std::size_t>(k - 1);
}

bool CkaTable::has(int u, int k) const {
  if (u < 1 || k < u || k > layers_) return false;
  return u == k || values_[index(u, k)].has_value();
}

double CkaTable::cka(int u, int k) const {
  const std::size_t i = index(u, k);
  if (u == k) return 1.0;
  const auto& v = values_[i];
  if (!v) {
    throw std::out_of_range("CkaTable: cka(" + std::to_string(u) + "," + std::to_string(k) +
                            ") was not computed");
  }
  return *v;
}

void CkaTable::set(int u, int k, double value) {
  if (u == k) throw std::invalid_argument("CkaTable: cka(u, u) is fixed at 1");
  values_[index(u, k)] = value;
}

double delta(const CkaTable& table, int u, int k) {
  return -(table.cka(u, k) - table.cka(u, k - 1));
}

namespace {

const LinearProbe& probe_for(std::span<const LinearProbe> probes, int layer) {
  for (const auto& p : probes) {
    if (p.layer == layer) {
      if (!p.trained) {
        throw std::invalid_argument("probe " + std::to_string(layer) + " is untrained");
      }
      return p;
    }
  }
  throw std::invalid_argument("no probe for layer " + std::to_string(layer));
}

void check_range(const DualStreamModel& teacher, const ActivationTrace& calib, int u, int k) {
  const int m = static_cast<int>(teacher.depth());
  if (calib.layers != m) {
    throw ShapeError("surrogate: trace has " + std::to_string(calib.layers) +
                     " layers, teacher has " + std::to_string(m));
  }
  if (u < 1 || k < u || k > m) {
    throw std::out_of_range("surrogate: need 1 <= u <= k <= M, got u=" + std::to_string(u) +
                            " k=" + std::to_string(k));
  }
}

}  // namespace

std::vector<std::vector<Tensor>> surrogate_outputs(const DualStreamModel& teacher,
                                                   const ActivationTrace& calib,
                                                   std::span<const LinearProbe> probes, int u,
                                                   int k) {
  check_range(teacher, calib, u, k);
  std::vector<const LinearProbe*> chain;
  for (int j = u + 1; j <= k; ++j) chain.push_back(&probe_for(probes, j));
  std::vector<std::vector<Tensor>> out(static_cast<std::size_t>(k - u + 1));
  for (auto& level : out) level.reserve(calib.cell_count());
  for (std::size_t c = 0; c < calib.cell_count(); ++c) {
    Tensor x = run_block(teacher.layer(u), teacher.spec(), teacher.embedding(),
                         calib.state(u - 1, c), calib.cells[c].timestep);
    out[0].push_back(x);
    for (std::size_t j = 0; j < chain.size(); ++j) {
      x = probe_forward(*chain[j], x);
      out[j + 1].push_back(x);
    }
  }
  return out;
}

double surrogate_cka(const DualStreamModel& teacher, const ActivationTrace& calib,
                     std::span<const LinearProbe> probes, int u, int k) {
  if (u == k) return 1.0;
  const auto outs = surrogate_outputs(teacher, calib, probes, u, k);
  return cka_avg(outs.front(), outs.back());
}

CkaTable compute_cka_table(const DualStreamModel& teacher, const ActivationTrace& calib,
                           std::span<const LinearProbe> probes, int first_u) {
  const int m = static_cast<int>(teacher.depth());
  if (first_u < 1) throw std::out_of_range("compute_cka_table: first_u must be >= 1");
  CkaTable table(m);
  for (int u = first_u; u < m; ++u) {
    const auto outs = surrogate_outputs(teacher, calib, probes, u, m);
    for (int k = u + 1; k <= m; ++k) {
      table.set(u, k, cka_avg(outs.front(), outs[static_cast<std::size_t>(k - u)]));
    }
  }
  return table;
}

int find_interval_end(const CkaTable& table, int u) {
  const int m = table.layers();
  for (int k = u + 2; k <= m; ++k) {
    if (delta(table, u, k) > delta(table, u, k - 1)) return k - 1;
  }
  return m;
}

IntervalSet extract_intervals(const CkaTable& table, double tau, int first_u) {
  IntervalSet set{{}, Strategy::kLinearProbe};
  int u = std::max(first_u, 1);
  while (u < table.layers()) {
    const int v = find_interval_end(table, u);
    const double c = table.cka(u, v);
    if (c >= tau) set.intervals.push_back({{u, v}, c});
    u = v + 1;
  }
  return set;
}

IntervalSet extract_intervals_threshold(const CkaTable& table, double theta, double tau,
                                        int first_u) {
  IntervalSet set{{}, Strategy::kThreshold};
  int u = std::max(first_u, 1);
  while (u < table.layers()) {
    int v = u;
    for (int k = u + 1; k <= table.layers(); ++k) {
      if (table.cka(u, k) >= theta) v = k;
    }
    if (v == u) {
      ++u;
      continue;
    }
    const double c = table.cka(u, v);
    if (c >= tau) set.intervals.push_back({{u, v}, c});
    u = v + 1;
  }
  return set;
}

Detection detect_intervals(const DualStreamModel& teacher, const ActivationTrace& calib,
                           std::span<const LinearProbe> probes, double tau, int first_u) {
  Detection d{compute_cka_table(teacher, calib, probes, first_u), {}};
  d.intervals = extract_intervals(d.table, tau, first_u);
  return d;
}

Detection detect_intervals_threshold(const DualStreamModel& teacher, const ActivationTrace& calib,
                                     std::span<const LinearProbe> probes, double theta,
                                     double tau, int first_u) {
  Detection d{compute_cka_table(teacher, calib, probes, first_u), {}};
  d.intervals = extract_intervals_threshold(d.table, theta, tau, first_u);
  return d;
}

}  // namespace ppcl

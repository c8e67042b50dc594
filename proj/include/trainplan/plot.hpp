// Copyright 2026 The trainplan Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <array>
#include <charconv>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "trainplan/cluster_sim.hpp"

namespace trainplan {

// Shortest round-trip decimal form of a double.
inline std::string format_number(double v) {
  std::array<char, 64> buf{};
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return ec == std::errc() ? std::string(buf.data(), ptr) : std::string("nan");
}

inline std::string step_series_csv(const SimReport& report) {
  std::ostringstream os;
  os << "step,batch_id,makespan_ms,imbalance_ratio,idle_fraction,planning_stall_ms\n";
  for (std::size_t i = 0; i < report.per_step.size(); ++i) {
    const auto& s = report.per_step[i];
    os << i << ',' << s.batch_id << ',' << format_number(s.makespan_ms) << ','
       << format_number(s.imbalance_ratio) << ',' << format_number(s.idle_fraction) << ','
       << format_number(s.planning_stall_ms) << '\n';
  }
  return os.str();
}

/// Line chart of per-step makespan, one polyline per report.
inline std::string makespan_svg(const std::vector<std::pair<std::string, SimReport>>& series) {
  constexpr double kWidth = 640, kHeight = 320, kPad = 40;
  static constexpr std::array<const char*, 4> kColors = {"#1f77b4", "#ff7f0e", "#2ca02c",
                                                         "#d62728"};
  std::size_t steps = 1;
  double top = 0.0;
  for (const auto& [name, r] : series) {
    steps = std::max(steps, r.per_step.size());
    for (const auto& s : r.per_step) top = std::max(top, s.makespan_ms);
  }
  if (top <= 0.0) top = 1.0;
  const double dx = steps > 1 ? (kWidth - 2 * kPad) / static_cast<double>(steps - 1) : 0.0;

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\""
     << kHeight << "\">\n";
  os << "  <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "  <line x1=\"" << kPad << "\" y1=\"" << kHeight - kPad << "\" x2=\"" << kWidth - kPad
     << "\" y2=\"" << kHeight - kPad << "\" stroke=\"black\"/>\n";
  os << "  <line x1=\"" << kPad << "\" y1=\"" << kPad << "\" x2=\"" << kPad << "\" y2=\""
     << kHeight - kPad << "\" stroke=\"black\"/>\n";
  os << "  <text x=\"" << kPad << "\" y=\"" << kPad - 10 << "\" font-size=\"12\">makespan (ms), max "
     << format_number(top) << "</text>\n";
  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& [name, r] = series[k];
    const char* color = kColors[k % kColors.size()];
    os << "  <polyline fill=\"none\" stroke=\"" << color << "\" points=\"";
    for (std::size_t i = 0; i < r.per_step.size(); ++i) {
      const double x = kPad + dx * static_cast<double>(i);
      const double y = kHeight - kPad - (kHeight - 2 * kPad) * r.per_step[i].makespan_ms / top;
      os << (i ? " " : "") << format_number(x) << ',' << format_number(y);
    }
    os << "\"/>\n";
    os << "  <text x=\"" << kWidth - kPad - 80 << "\" y=\"" << kPad + 14 * static_cast<double>(k)
       << "\" font-size=\"12\" fill=\"" << color << "\">" << name << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

}  // namespace trainplan

/******************************************************************************
 * Copyright 2026 The OpenSpace Planner Authors. All Rights Reserved.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 *****************************************************************************/

/**
 * @file
 * @brief CSV and SVG writers for plans and benchmarks.
 *
 * Numbers in CSV files are printed with %.9g; negative zero prints as 0.
 */

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "openspace/errors.hpp"
#include "openspace/harness.hpp"
#include "openspace/scenario.hpp"
#include "openspace/trajectory.hpp"

namespace openspace {

inline std::string FormatNumber(double v) {
  if (v == 0.0) v = 0.0;
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

inline std::string CsvQuote(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c == '\n' ? ' ' : c;
  }
  return out + "\"";
}

inline constexpr const char* kTrajectoryHeader = "t,x,y,theta,kappa,v,a,jerk,gear";

/// gear is 1 for forward and -1 for backward.
inline void WriteTrajectoryCsv(std::ostream& os, const Trajectory& traj) {
  os << kTrajectoryHeader << '\n';
  for (const auto& p : traj.points) {
    os << FormatNumber(p.t) << ',' << FormatNumber(p.pose.position.x) << ','
       << FormatNumber(p.pose.position.y) << ',' << FormatNumber(p.pose.heading) << ','
       << FormatNumber(p.kappa) << ',' << FormatNumber(p.v) << ',' << FormatNumber(p.a) << ','
       << FormatNumber(p.jerk) << ',' << (p.gear == Gear::kForward ? 1 : -1) << '\n';
  }
}

namespace internal {

struct ReportColumn {
  const char* name;
  std::function<std::string(const RunReport&)> get;
};

inline std::vector<ReportColumn> MetricColumns() {
  auto num = [](double RunReport::*m) {
    return [m](const RunReport& r) { return FormatNumber(r.*m); };
  };
  return {
      {"success", [](const RunReport& r) { return std::string(r.success ? "1" : "0"); }},
      {"failure_stage", [](const RunReport& r) { return r.failure_stage; }},
      {"max_abs_kappa", num(&RunReport::max_abs_kappa)},
      {"max_abs_v", num(&RunReport::max_abs_v)},
      {"max_abs_a", num(&RunReport::max_abs_a)},
      {"max_abs_jerk", num(&RunReport::max_abs_jerk)},
      {"min_clearance", num(&RunReport::min_clearance)},
      {"duration", num(&RunReport::duration)},
      {"path_length", num(&RunReport::path_length)},
      {"gear_switches", [](const RunReport& r) { return std::to_string(r.gear_switches); }},
      {"path_max_abs_kappa", num(&RunReport::path_max_abs_kappa)},
      {"max_constraint", num(&RunReport::max_constraint)},
      {"max_merit_increase", num(&RunReport::max_merit_increase)},
      {"max_dynamics_residual", num(&RunReport::max_dynamics_residual)},
      {"max_arrival_gap", num(&RunReport::max_arrival_gap)},
      {"max_boundary_speed", num(&RunReport::max_boundary_speed)},
      {"smoothing_converged",
       [](const RunReport& r) { return std::string(r.smoothing_converged ? "1" : "0"); }},
  };
}

inline std::ofstream OpenForWrite(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  return out;
}

inline void Close(std::ofstream& out, const std::filesystem::path& path) {
  out.close();
  if (!out) throw IoError("error while writing " + path.string());
}

}  // namespace internal

inline void WriteReportCsv(std::ostream& os, const RunReport& r) {
  const auto cols = internal::MetricColumns();
  os << "scenario";
  for (const auto& c : cols) os << ',' << c.name;
  os << ",search_s,smoothing_s,speed_s,total_s,message\n";
  os << CsvQuote(r.scenario);
  for (const auto& c : cols) os << ',' << CsvQuote(c.get(r));
  os << ',' << FormatNumber(r.timings.search) << ',' << FormatNumber(r.timings.smoothing) << ','
     << FormatNumber(r.timings.speed) << ',' << FormatNumber(r.timings.total) << ','
     << CsvQuote(r.message) << '\n';
}

/**
 * One row per case, then a blank line and an aggregate block. Timings are
 * left out so that repeated runs give identical files; see WriteBenchTimingCsv.
 */
inline void WriteBenchCsv(std::ostream& os, const BenchResult& bench) {
  const bool ces = bench.mode == SmoothMode::kCes;
  const auto cols = internal::MetricColumns();
  os << "index,x,y,heading,mode";
  for (const auto& c : cols) os << ',' << c.name;
  if (ces) os << ",dliaps_path_max_abs_kappa";
  os << ",message\n";
  double max_kappa = 0.0, max_g = 0.0, max_res = 0.0, max_merit = 0.0, max_v = 0.0;
  double max_a = 0.0, max_jerk = 0.0, max_stop = 0.0;
  double min_clear = std::numeric_limits<double>::infinity();
  for (const auto& c : bench.cases) {
    const RunReport& r = c.result.report;
    os << c.index << ',' << FormatNumber(c.start.position.x) << ','
       << FormatNumber(c.start.position.y) << ',' << FormatNumber(c.start.heading) << ','
       << SmoothModeName(bench.mode);
    for (const auto& col : cols) os << ',' << CsvQuote(col.get(r));
    if (ces) os << ',' << FormatNumber(c.dliaps_max_abs_kappa);
    os << ',' << CsvQuote(r.message) << '\n';
    if (!r.success) continue;
    max_kappa = std::max(max_kappa, r.max_abs_kappa);
    max_g = std::max(max_g, r.max_constraint);
    max_res = std::max(max_res, r.max_dynamics_residual);
    max_merit = std::max(max_merit, r.max_merit_increase);
    max_v = std::max(max_v, r.max_abs_v);
    max_a = std::max(max_a, r.max_abs_a);
    max_jerk = std::max(max_jerk, r.max_abs_jerk);
    max_stop = std::max(max_stop, r.max_boundary_speed);
    min_clear = std::min(min_clear, r.min_clearance);
  }
  const int n = static_cast<int>(bench.cases.size());
  const int ok = bench.Successes();
  os << "\naggregate,value\n";
  os << "cases," << n << '\n';
  os << "successes," << ok << '\n';
  os << "success_rate," << FormatNumber(n > 0 ? static_cast<double>(ok) / n : 0.0) << '\n';
  os << "max_abs_kappa," << FormatNumber(max_kappa) << '\n';
  os << "max_constraint," << FormatNumber(max_g) << '\n';
  os << "max_merit_increase," << FormatNumber(max_merit) << '\n';
  os << "max_dynamics_residual," << FormatNumber(max_res) << '\n';
  os << "max_abs_v," << FormatNumber(max_v) << '\n';
  os << "max_abs_a," << FormatNumber(max_a) << '\n';
  os << "max_abs_jerk," << FormatNumber(max_jerk) << '\n';
  os << "max_boundary_speed," << FormatNumber(max_stop) << '\n';
  os << "min_clearance," << FormatNumber(ok > 0 ? min_clear : 0.0) << '\n';
}

/// Per-case stage timings, then mean/min/max rows over successful cases.
inline void WriteBenchTimingCsv(std::ostream& os, const BenchResult& bench) {
  os << "index,success,search_s,smoothing_s,speed_s,total_s\n";
  for (const auto& c : bench.cases) {
    const auto& t = c.result.report.timings;
    os << c.index << ',' << (c.result.report.success ? 1 : 0) << ',' << FormatNumber(t.search)
       << ',' << FormatNumber(t.smoothing) << ',' << FormatNumber(t.speed) << ','
       << FormatNumber(t.total) << '\n';
  }
  const auto search = bench.Stats([](const StageTimings& t) { return t.search; });
  const auto smooth = bench.Stats([](const StageTimings& t) { return t.smoothing; });
  const auto speed = bench.Stats([](const StageTimings& t) { return t.speed; });
  const auto total = bench.Stats([](const StageTimings& t) { return t.total; });
  const auto both = bench.Stats([](const StageTimings& t) { return t.smoothing + t.speed; });
  os << "\nstat,search_s,smoothing_s,speed_s,smoothing_plus_speed_s,total_s\n";
  auto row = [&](const char* name, double TimingStats::*m) {
    os << name << ',' << FormatNumber(search.*m) << ',' << FormatNumber(smooth.*m) << ','
       << FormatNumber(speed.*m) << ',' << FormatNumber(both.*m) << ','
       << FormatNumber(total.*m) << '\n';
  };
  row("mean", &TimingStats::mean);
  row("min", &TimingStats::min);
  row("max", &TimingStats::max);
}

namespace internal {

class SvgCanvas {
 public:
  SvgCanvas(double width, double height) : width_(width), height_(height) {}

  void Add(const std::string& element) { body_ << element << '\n'; }

  std::string Finish() const {
    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << Num(width_) << "\" height=\""
       << Num(height_) << "\" viewBox=\"0 0 " << Num(width_) << ' ' << Num(height_)
       << "\" font-family=\"sans-serif\" font-size=\"11\">\n"
       << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
       << body_.str() << "</svg>\n";
    return os.str();
  }

  static std::string Num(double v) {
    if (v == 0.0) v = 0.0;
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return buf;
  }

 private:
  double width_, height_;
  std::ostringstream body_;
};

inline std::string Polyline(const std::vector<Point2>& pts, const std::string& style,
                            bool closed = false) {
  std::string s = closed ? "<polygon points=\"" : "<polyline points=\"";
  for (const auto& p : pts) s += SvgCanvas::Num(p.x) + "," + SvgCanvas::Num(p.y) + " ";
  return s + "\" " + style + "/>";
}

inline std::string Text(double x, double y, const std::string& text,
                        const char* anchor = "start") {
  return "<text x=\"" + SvgCanvas::Num(x) + "\" y=\"" + SvgCanvas::Num(y) +
         "\" text-anchor=\"" + anchor + "\">" + text + "</text>";
}

inline const char* GearColor(Gear g) { return g == Gear::kForward ? "#1f5fbf" : "#c0392b"; }
inline const char* GearShade(Gear g) { return g == Gear::kForward ? "#e3ecfa" : "#fae5e3"; }

}  // namespace internal

/// Top view: bounds, obstacles, reference and smoothed paths, footprints at
/// the start, the goal and every gear switch.
inline std::string PathSvg(const Scenario& sc, const PlanResult& plan) {
  const Aabb box = sc.bounds.bounding_box();
  const double pad = 20.0;
  const double scale = std::min(900.0 / (box.max_x - box.min_x), 600.0 / (box.max_y - box.min_y));
  auto map = [&](Point2 p) {
    return Point2{pad + (p.x - box.min_x) * scale, pad + (box.max_y - p.y) * scale};
  };
  auto mapped = [&](const auto& pts) {
    std::vector<Point2> out;
    for (const auto& p : pts) out.push_back(map(p));
    return out;
  };
  internal::SvgCanvas svg(2 * pad + (box.max_x - box.min_x) * scale,
                          2 * pad + (box.max_y - box.min_y) * scale + 20.0);
  svg.Add(internal::Polyline(mapped(sc.bounds.vertices()),
                             "fill=\"#fbfbfb\" stroke=\"black\" stroke-width=\"1.5\"", true));
  for (const auto& o : sc.obstacles) {
    svg.Add(internal::Polyline(mapped(o.vertices()), "fill=\"#9a9a9a\" stroke=\"#555\"", true));
  }
  auto footprint = [&](const Pose& pose, const char* color) {
    const auto c = internal::FootprintCorners(pose, sc.vehicle);
    svg.Add(internal::Polyline(mapped(std::vector<Point2>(c.begin(), c.end())),
                               std::string("fill=\"none\" stroke=\"") + color +
                                   "\" stroke-width=\"1\"",
                               true));
  };
  footprint(sc.start, "#2e8b57");
  footprint(sc.goal, "#8e44ad");
  if (!plan.reference.poses.empty()) {
    std::vector<Point2> ref;
    for (const auto& p : plan.reference.poses) ref.push_back(p.position);
    svg.Add(internal::Polyline(mapped(ref),
                               "fill=\"none\" stroke=\"#777\" stroke-dasharray=\"4 3\""));
  }
  for (const auto& r : plan.smoothed) {
    svg.Add(internal::Polyline(mapped(r.points), std::string("fill=\"none\" stroke=\"") +
                                                     internal::GearColor(r.gear) +
                                                     "\" stroke-width=\"2\""));
  }
  for (std::size_t b : plan.trajectory.segment_boundaries) {
    footprint(plan.trajectory.points[b].pose, "#e67e22");
  }
  const double y = 2 * pad + (box.max_y - box.min_y) * scale + 8.0;
  svg.Add(internal::Text(pad, y,
                         sc.name + ": dashed reference, blue forward, red backward, orange "
                                   "footprints at gear switches"));
  return svg.Finish();
}

/// Curvature over arc length, then speed, acceleration and jerk over time,
/// each with gear shading.
inline std::string ProfileSvg(const Trajectory& traj) {
  const auto& pts = traj.points;
  std::vector<double> s(pts.size(), 0.0);
  for (std::size_t k = 1; k < pts.size(); ++k) {
    s[k] = s[k - 1] + Distance(pts[k - 1].pose.position, pts[k].pose.position);
  }
  std::vector<double> t;
  for (const auto& p : pts) t.push_back(p.t);

  const double w = 900.0, ph = 150.0, left = 70.0, right = 20.0, top = 20.0, gap = 40.0;
  internal::SvgCanvas svg(w, top + 4 * (ph + gap));
  struct Panel {
    const char* label;
    const std::vector<double>* x;
    std::function<double(const TrajectoryPoint&)> y;
  };
  const std::vector<Panel> panels{
      {"kappa [1/m] vs s [m]", &s, [](const TrajectoryPoint& p) { return p.kappa; }},
      {"v [m/s] vs t [s]", &t, [](const TrajectoryPoint& p) { return p.v; }},
      {"a [m/s^2] vs t [s]", &t, [](const TrajectoryPoint& p) { return p.a; }},
      {"jerk [m/s^3] vs t [s]", &t, [](const TrajectoryPoint& p) { return p.jerk; }},
  };
  for (std::size_t i = 0; i < panels.size(); ++i) {
    const auto& panel = panels[i];
    const auto& xs = *panel.x;
    const double y0 = top + i * (ph + gap);
    const double x_lo = xs.empty() ? 0.0 : xs.front();
    const double x_hi = xs.empty() || xs.back() <= x_lo ? x_lo + 1.0 : xs.back();
    double y_lo = 0.0, y_hi = 0.0;
    for (const auto& p : pts) {
      y_lo = std::min(y_lo, panel.y(p));
      y_hi = std::max(y_hi, panel.y(p));
    }
    if (y_hi - y_lo < 1e-9) y_hi = y_lo + 1.0;
    const double margin = 0.05 * (y_hi - y_lo);
    y_lo -= margin;
    y_hi += margin;
    auto mx = [&](double x) { return left + (x - x_lo) / (x_hi - x_lo) * (w - left - right); };
    auto my = [&](double y) { return y0 + (y_hi - y) / (y_hi - y_lo) * ph; };

    // Gear shading, one band per segment.
    std::vector<std::size_t> starts{0};
    for (std::size_t b : traj.segment_boundaries) starts.push_back(b);
    starts.push_back(pts.size() - 1);
    for (std::size_t j = 0; j + 1 < starts.size(); ++j) {
      const double a = mx(xs[starts[j]]), b = mx(xs[starts[j + 1]]);
      svg.Add("<rect x=\"" + internal::SvgCanvas::Num(a) + "\" y=\"" +
              internal::SvgCanvas::Num(y0) + "\" width=\"" +
              internal::SvgCanvas::Num(std::max(0.0, b - a)) + "\" height=\"" +
              internal::SvgCanvas::Num(ph) + "\" fill=\"" +
              internal::GearShade(pts[starts[j]].gear) + "\"/>");
    }
    svg.Add("<rect x=\"" + internal::SvgCanvas::Num(left) + "\" y=\"" +
            internal::SvgCanvas::Num(y0) + "\" width=\"" +
            internal::SvgCanvas::Num(w - left - right) + "\" height=\"" +
            internal::SvgCanvas::Num(ph) + "\" fill=\"none\" stroke=\"black\"/>");
    svg.Add(internal::Polyline({{left, my(0.0)}, {w - right, my(0.0)}},
                               "stroke=\"#999\" stroke-dasharray=\"2 2\""));
    std::vector<Point2> line;
    for (std::size_t k = 0; k < pts.size(); ++k) line.push_back({mx(xs[k]), my(panel.y(pts[k]))});
    svg.Add(internal::Polyline(line, "fill=\"none\" stroke=\"black\" stroke-width=\"1.2\""));
    svg.Add(internal::Text(left, y0 - 5.0, panel.label));
    svg.Add(internal::Text(left - 5.0, y0 + 10.0, FormatNumber(y_hi - margin), "end"));
    svg.Add(internal::Text(left - 5.0, y0 + ph, FormatNumber(y_lo + margin), "end"));
    svg.Add(internal::Text(w - right, y0 + ph + 14.0, FormatNumber(x_hi), "end"));
  }
  return svg.Finish();
}

/// Writes trajectory.csv, report.csv, path.svg and profile.svg. A failed plan
/// without a trajectory gets report.csv and path.svg only. With `traces`, each
/// smoothed segment also gets trace_<k>.csv.
inline void Emit(const Scenario& sc, const PlanResult& plan, const std::filesystem::path& dir,
                 bool traces = false) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  auto write = [&](const char* name, const std::function<void(std::ostream&)>& body) {
    const auto path = dir / name;
    auto out = internal::OpenForWrite(path);
    body(out);
    internal::Close(out, path);
  };
  write("report.csv", [&](std::ostream& os) { WriteReportCsv(os, plan.report); });
  write("path.svg", [&](std::ostream& os) { os << PathSvg(sc, plan); });
  if (traces) {
    for (std::size_t k = 0; k < plan.smoothed.size(); ++k) {
      const auto name = "trace_" + std::to_string(k) + ".csv";
      write(name.c_str(), [&](std::ostream& os) { WriteTrace(os, plan.smoothed[k].trace); });
    }
  }
  if (plan.trajectory.points.empty()) return;
  write("trajectory.csv", [&](std::ostream& os) { WriteTrajectoryCsv(os, plan.trajectory); });
  write("profile.svg", [&](std::ostream& os) { os << ProfileSvg(plan.trajectory); });
}

/// bench.csv, bench_timing.csv and, when `trajectories` is set, one
/// trajectory CSV per successful case under trajectories/.
inline void EmitBench(const BenchResult& bench, const std::filesystem::path& dir,
                      bool trajectories) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  auto write = [&](const std::filesystem::path& path,
                   const std::function<void(std::ostream&)>& body) {
    auto out = internal::OpenForWrite(path);
    body(out);
    internal::Close(out, path);
  };
  write(dir / "bench.csv", [&](std::ostream& os) { WriteBenchCsv(os, bench); });
  write(dir / "bench_timing.csv", [&](std::ostream& os) { WriteBenchTimingCsv(os, bench); });
  if (!trajectories) return;
  const auto sub = dir / "trajectories";
  std::filesystem::create_directories(sub, ec);
  if (ec) throw IoError("cannot create " + sub.string() + ": " + ec.message());
  for (const auto& c : bench.cases) {
    if (c.result.trajectory.points.empty()) continue;
    char name[32];
    std::snprintf(name, sizeof(name), "case_%03d.csv", c.index);
    write(sub / name, [&](std::ostream& os) { WriteTrajectoryCsv(os, c.result.trajectory); });
  }
}

}  // namespace openspace

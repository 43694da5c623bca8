// deltaview: benchmark harness. Replays one event stream through an engine
// per (query, mode) cell: one warm-up replay, then timed replays whose median
// is reported. A per-cell timeout stops the replay and the cell reports the
// prefix it managed, marked as `processed/total` in the events column.
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <chrono>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "deltaview/engine.hpp"
#include "deltaview/streams.hpp"

namespace deltaview {

struct BenchOptions {
  double timeoutSeconds = 60;
  int runs = 3;
  bool warmup = true;
  std::size_t seriesPoints = 50;
};

struct BenchCell {
  std::string query;
  std::string mode;
  std::size_t eventsProcessed = 0;
  std::size_t eventsTotal = 0;
  double seconds = 0;
  double refreshesPerSec = 0;
  std::size_t peakEntries = 0;
  bool timedOut = false;
  std::vector<std::pair<std::size_t, double>> series;  // event index, cumulative rate
};

namespace benchdetail {

struct Run {
  std::size_t processed = 0;
  double seconds = 0;
  double rps = 0;
  std::size_t peak = 0;
  std::vector<std::pair<std::size_t, double>> series;
};

inline Run timed_replay(Engine& eng, const std::vector<StreamEvent>& events,
                        const std::map<std::string, Gmr>& initial, const BenchOptions& opt) {
  eng.initialize(initial);
  eng.reset_counters();
  Run r;
  std::size_t step = std::max<std::size_t>(1, events.size() / std::max<std::size_t>(
                                                                  1, opt.seriesPoints));
  auto t0 = std::chrono::steady_clock::now();
  for (std::size_t i = 0; i < events.size(); ++i) {
    const auto& ev = events[i];
    eng.apply(ev.sign, ev.relation, ev.vals);
    if ((i + 1) % step == 0 || i + 1 == events.size()) {
      double el = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      r.series.push_back({i + 1, el > 0 ? static_cast<double>(i + 1) / el : 0});
      if (el > opt.timeoutSeconds) {
        r.processed = i + 1;
        break;
      }
    }
  }
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (r.processed == 0) r.processed = events.size();
  r.rps = r.seconds > 0 ? static_cast<double>(r.processed) / r.seconds : 0;
  r.peak = eng.counters().peakEntries;
  return r;
}

}  // namespace benchdetail

/// Runs one benchmark cell. The engine is reinitialized (same compiled
/// program, fresh state) for the warm-up and for each timed run.
inline BenchCell run_bench_cell(Engine& eng, const std::string& query, const std::string& mode,
                                const std::vector<StreamEvent>& events,
                                const std::map<std::string, Gmr>& initial,
                                const BenchOptions& opt = {}) {
  BenchCell cell;
  cell.query = query;
  cell.mode = mode;
  cell.eventsTotal = events.size();
  if (opt.warmup) benchdetail::timed_replay(eng, events, initial, opt);
  std::vector<benchdetail::Run> runs;
  for (int i = 0; i < std::max(1, opt.runs); ++i)
    runs.push_back(benchdetail::timed_replay(eng, events, initial, opt));
  std::sort(runs.begin(), runs.end(),
            [](const benchdetail::Run& a, const benchdetail::Run& b) { return a.rps < b.rps; });
  const benchdetail::Run& med = runs[runs.size() / 2];
  cell.eventsProcessed = med.processed;
  cell.seconds = med.seconds;
  cell.refreshesPerSec = med.rps;
  cell.peakEntries = med.peak;
  cell.timedOut = med.processed < events.size();
  cell.series = med.series;
  return cell;
}

/// Replays the whole stream once, reporting wall time per segment; cutpoints
/// are event indexes splitting [0, n). Used for warm-up and steady-state
/// shape checks.
inline std::vector<double> time_segments(Engine& eng, const std::vector<StreamEvent>& events,
                                         const std::map<std::string, Gmr>& initial,
                                         const std::vector<std::size_t>& cutpoints) {
  eng.initialize(initial);
  std::vector<double> seconds;
  std::size_t from = 0;
  std::vector<std::size_t> cuts = cutpoints;
  cuts.push_back(events.size());
  for (std::size_t cut : cuts) {
    auto t0 = std::chrono::steady_clock::now();
    for (std::size_t i = from; i < cut && i < events.size(); ++i)
      eng.apply(events[i].sign, events[i].relation, events[i].vals);
    seconds.push_back(
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    from = cut;
  }
  return seconds;
}

inline std::string bench_table(const std::vector<BenchCell>& cells) {
  std::ostringstream os;
  os << "query\tmode\tevents\tseconds\trefreshes_per_sec\tpeak_entries\n";
  for (const auto& c : cells) {
    os << c.query << '\t' << c.mode << '\t';
    if (c.timedOut)
      os << c.eventsProcessed << '/' << c.eventsTotal;
    else
      os << c.eventsProcessed;
    os << '\t';
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.3f", c.seconds);
    os << buf << '\t';
    std::snprintf(buf, sizeof buf, "%.1f", c.refreshesPerSec);
    os << buf << '\t' << c.peakEntries << '\n';
  }
  return os.str();
}

inline void write_series_csv(std::ostream& out, const BenchCell& cell) {
  out << "event_index,cumulative_throughput\n";
  for (const auto& [i, rate] : cell.series) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%zu,%.1f", i, rate);
    out << buf << '\n';
  }
}

}  // namespace deltaview

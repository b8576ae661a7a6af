#pragma once

// Latency quantities computed from a trace: per-view latency, finalisation
// latency, end-to-end transaction latency, and per-region breakdowns.
//
// The per-event representative is the median over correct processors (the
// lower median for even counts), which keeps stragglers from skewing the
// clock and treats regions symmetrically. The first two views are warmup
// and excluded from every summary.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "minimmit/trace.hpp"
#include "minimmit/types.hpp"

namespace minimmit::metrics {

using sim::BlockRegistry;
using sim::Trace;
using sim::TraceEvent;
using sim::TraceKind;
using sim::WireKind;

inline constexpr View kWarmupViews = 2;

struct Summary {
  std::size_t count = 0;
  double mean = 0;
  double stddev = 0;
  double p50 = 0;
  double p99 = 0;

  bool empty() const { return count == 0; }
};

inline double median_of(std::vector<TimeUs> v) {
  std::sort(v.begin(), v.end());
  return sim::to_ms(v[(v.size() - 1) / 2]);
}

inline Summary summarize(std::vector<double> samples) {
  Summary s;
  if (samples.empty()) return s;
  std::sort(samples.begin(), samples.end());
  s.count = samples.size();
  double sum = 0;
  for (double x : samples) sum += x;
  s.mean = sum / static_cast<double>(s.count);
  double var = 0;
  for (double x : samples) var += (x - s.mean) * (x - s.mean);
  s.stddev = std::sqrt(var / static_cast<double>(s.count));
  auto rank = [&](double q) {
    const auto idx = static_cast<std::size_t>(std::ceil(q * static_cast<double>(s.count)));
    return samples[std::min(s.count - 1, idx == 0 ? 0 : idx - 1)];
  };
  s.p50 = rank(0.50);
  s.p99 = rank(0.99);
  return s;
}

namespace detail {

// view -> proc -> entry time, correct processors only.
inline std::map<View, std::map<ProcessorId, TimeUs>> entries(const Trace& t) {
  std::map<View, std::map<ProcessorId, TimeUs>> out;
  for (const TraceEvent& e : t.events)
    if (e.kind == TraceKind::EnterView && t.header.is_correct(e.proc))
      out[e.view].emplace(e.proc, e.time);
  return out;
}

inline std::uint32_t correct_count(const Trace& t) {
  return t.header.params.processors - static_cast<std::uint32_t>(t.header.corrupted.size());
}

// Median correct entry time for views entered by every correct processor.
inline std::map<View, double> median_entries(const Trace& t,
                                             std::optional<std::uint32_t> region = {}) {
  const auto per_view = entries(t);
  const auto n_correct = correct_count(t);
  std::map<View, double> out;
  for (const auto& [v, per_proc] : per_view) {
    if (per_proc.size() < n_correct) continue;  // incomplete views are still in flight
    std::vector<TimeUs> times;
    for (const auto& [p, tm] : per_proc) {
      if (region && t.header.assignment[p] != *region) continue;
      times.push_back(tm);
    }
    if (!times.empty()) out[v] = median_of(std::move(times));
  }
  return out;
}

}  // namespace detail

// Latency of view v is the median correct entry of v+1 minus that of v.
inline Summary view_latency(const Trace& t, std::optional<std::uint32_t> region = {}) {
  const auto medians = detail::median_entries(t, region);
  std::vector<double> samples;
  for (const auto& [v, tm] : medians) {
    if (v <= kWarmupViews) continue;
    auto next = medians.find(v + 1);
    if (next == medians.end()) continue;
    samples.push_back(next->second - tm);
  }
  return summarize(std::move(samples));
}

// Latency of a finalized block: median correct finalisation time minus the
// time its proposal was first sent.
inline Summary finalization_latency(const Trace& t, std::optional<std::uint32_t> region = {}) {
  std::map<Hash, TimeUs> proposed_at;
  std::map<Hash, View> block_view;
  std::map<Hash, std::map<ProcessorId, TimeUs>> finalized_at;
  const auto n_correct = detail::correct_count(t);
  for (const TraceEvent& e : t.events) {
    if (e.kind == TraceKind::Send && e.msg.kind == WireKind::Proposal) {
      proposed_at.emplace(e.msg.block_hash, e.time);
      block_view.emplace(e.msg.block_hash, e.msg.view);
    } else if (e.kind == TraceKind::Finalize && t.header.is_correct(e.proc)) {
      finalized_at[e.block_hash].emplace(e.proc, e.time);
    }
  }
  std::vector<double> samples;
  for (const auto& [h, per_proc] : finalized_at) {
    auto pit = proposed_at.find(h);
    if (pit == proposed_at.end()) continue;
    if (block_view[h] <= kWarmupViews) continue;
    if (per_proc.size() < n_correct) continue;  // still propagating at the horizon
    std::vector<TimeUs> times;
    for (const auto& [p, tm] : per_proc) {
      if (region && t.header.assignment[p] != *region) continue;
      times.push_back(tm);
    }
    if (times.empty()) continue;
    samples.push_back(median_of(std::move(times)) - sim::to_ms(pit->second));
  }
  return summarize(std::move(samples));
}

// End-to-end transaction latency: median correct log-inclusion time minus
// the injection time.
inline Summary end_to_end_tx_latency(const Trace& t) {
  std::map<TxId, TimeUs> injected;
  for (const TraceEvent& e : t.events)
    if (e.kind == TraceKind::TxArrival) injected.emplace(e.tx_id, e.time);
  if (injected.empty()) return {};

  const BlockRegistry registry(t);
  const auto n_correct = detail::correct_count(t);
  // Inclusion time per (tx, proc): the finalisation that first brought the
  // tx into that processor's log.
  std::map<TxId, std::map<ProcessorId, TimeUs>> included;
  std::map<ProcessorId, std::set<TxId>> log_so_far;
  for (const TraceEvent& e : t.events) {
    if (e.kind != TraceKind::Finalize || !t.header.is_correct(e.proc)) continue;
    auto ext = registry.extended_tx_ids(e.block_hash);
    if (!ext) continue;
    auto& seen = log_so_far[e.proc];
    for (TxId id : *ext) {
      if (seen.insert(id).second) included[id].emplace(e.proc, e.time);
    }
  }
  std::vector<double> samples;
  for (const auto& [id, per_proc] : included) {
    auto iit = injected.find(id);
    if (iit == injected.end()) continue;
    if (per_proc.size() < n_correct) continue;
    std::vector<TimeUs> times;
    times.reserve(per_proc.size());
    for (const auto& [p, tm] : per_proc) times.push_back(tm);
    samples.push_back(median_of(std::move(times)) - sim::to_ms(iit->second));
  }
  return summarize(std::move(samples));
}

struct MetricsReport {
  Summary view;
  Summary finalization;
  Summary e2e;
  std::map<std::string, Summary> view_by_region;
  std::map<std::string, Summary> finalization_by_region;

  nlohmann::json to_json() const {
    auto dump = [](const Summary& s) {
      nlohmann::json j;
      j["count"] = s.count;
      if (s.count > 0) {
        j["mean"] = s.mean;
        j["stddev"] = s.stddev;
        j["p50"] = s.p50;
        j["p99"] = s.p99;
      }
      return j;
    };
    nlohmann::json j;
    j["schema"] = 1;
    j["view_latency_ms"] = dump(view);
    j["finalization_latency_ms"] = dump(finalization);
    j["e2e_tx_latency_ms"] = dump(e2e);
    nlohmann::json regions = nlohmann::json::object();
    for (const auto& [name, s] : view_by_region) regions[name]["view_latency_ms"] = dump(s);
    for (const auto& [name, s] : finalization_by_region)
      regions[name]["finalization_latency_ms"] = dump(s);
    j["per_region"] = std::move(regions);
    return j;
  }

  std::string to_csv() const {
    std::string out = "metric,region,stat,value\n";
    auto emit = [&out](const std::string& metric, const std::string& region, const Summary& s) {
      auto row = [&](const char* stat, double v) {
        out += metric + "," + region + "," + stat + "," + std::to_string(v) + "\n";
      };
      row("count", static_cast<double>(s.count));
      if (s.count > 0) {
        row("mean_ms", s.mean);
        row("stddev_ms", s.stddev);
        row("p50_ms", s.p50);
        row("p99_ms", s.p99);
      }
    };
    emit("view_latency", "all", view);
    for (const auto& [name, s] : view_by_region) emit("view_latency", name, s);
    emit("finalization_latency", "all", finalization);
    for (const auto& [name, s] : finalization_by_region) emit("finalization_latency", name, s);
    emit("e2e_tx_latency", "all", e2e);
    return out;
  }
};

inline MetricsReport compute(const Trace& t) {
  MetricsReport r;
  r.view = view_latency(t);
  r.finalization = finalization_latency(t);
  r.e2e = end_to_end_tx_latency(t);
  for (std::uint32_t reg = 0; reg < t.header.regions.size(); ++reg) {
    Summary v = view_latency(t, reg);
    if (!v.empty()) r.view_by_region.emplace(t.header.regions[reg], v);
    Summary f = finalization_latency(t, reg);
    if (!f.empty()) r.finalization_by_region.emplace(t.header.regions[reg], f);
  }
  return r;
}

}  // namespace minimmit::metrics

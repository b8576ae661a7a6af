#pragma once

// Run configuration: protocol parameters, the region/latency model, GST and
// the pre-GST delay policy, corruption assignments, the transaction
// schedule, and the stopping rule. Loadable from versioned JSON; presets
// under presets/ use exactly this schema.

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "minimmit/trace.hpp"
#include "minimmit/types.hpp"

namespace minimmit::sim {

inline constexpr int kConfigSchema = 1;

enum class PreGstPolicy : std::uint8_t {
  None,      // latency matrix applies before GST too (still clamped)
  MaxDelay,  // every pre-GST delivery to a targeted recipient lands at max{GST, t} + delta
};

enum class Strategy : std::uint8_t {
  Silent,
  EquivocatingLeader,
  DoubleVoter,
  NullifySpammer,
  Withholder,
};

inline const char* strategy_name(Strategy s) {
  switch (s) {
    case Strategy::Silent: return "silent";
    case Strategy::EquivocatingLeader: return "equivocating_leader";
    case Strategy::DoubleVoter: return "double_voter";
    case Strategy::NullifySpammer: return "nullify_spammer";
    case Strategy::Withholder: return "withholder";
  }
  return "?";
}

inline Strategy strategy_from_name(const std::string& s) {
  if (s == "silent") return Strategy::Silent;
  if (s == "equivocating_leader") return Strategy::EquivocatingLeader;
  if (s == "double_voter") return Strategy::DoubleVoter;
  if (s == "nullify_spammer") return Strategy::NullifySpammer;
  if (s == "withholder") return Strategy::Withholder;
  throw std::invalid_argument("config: unknown strategy '" + s + "'");
}

struct AdversaryAssignment {
  Strategy strategy = Strategy::Silent;
  int equivocations = 2;                   // EquivocatingLeader: distinct blocks per led view
  std::vector<ProcessorId> withhold_to;    // Withholder: pre-GST recipients; empty = lower half
};

struct TxInjection {
  TimeUs time = 0;
  ProcessorId proc = 0;
  Transaction tx;
};

struct Horizon {
  std::optional<std::uint64_t> views;  // stop once every correct processor got past this view
  std::optional<TimeUs> time;          // or stop at this instant
};

struct RecordingOptions {
  bool deliveries = true;  // delivery events dominate trace size; checks don't need them
};

struct ScenarioConfig {
  ProtocolParams params;
  std::vector<std::string> regions;
  std::vector<std::uint32_t> assignment;           // proc -> region index; empty = round robin
  std::vector<std::vector<LatencyEntry>> latency;  // region x region
  TimeUs gst = 0;
  PreGstPolicy pre_gst_policy = PreGstPolicy::MaxDelay;
  std::vector<ProcessorId> pre_gst_targets;        // empty = all recipients
  std::set<ProcessorId> corrupted;
  std::map<ProcessorId, AdversaryAssignment> adversary;
  std::vector<TxInjection> tx_schedule;
  Horizon horizon;
  std::uint64_t seed = 0;
  TimeUs hard_stop = 0;        // 0 = derived from the horizon
  std::uint64_t max_events = 0;  // 0 = default cap
  RecordingOptions record;

  void validate() const {
    params.validate();
    if (regions.empty()) throw std::invalid_argument("config: regions must be non-empty");
    if (!assignment.empty() && assignment.size() != params.processors)
      throw std::invalid_argument("config: assignment must list one region per processor");
    for (std::uint32_t r : assignment)
      if (r >= regions.size()) throw std::invalid_argument("config: assignment region out of range");
    if (latency.size() != regions.size())
      throw std::invalid_argument("config: latency matrix must be regions x regions");
    for (const auto& row : latency) {
      if (row.size() != regions.size())
        throw std::invalid_argument("config: latency matrix must be regions x regions");
      for (const auto& e : row)
        if (e.base < 0 || e.jitter < 0)
          throw std::invalid_argument("config: latencies must be non-negative");
    }
    if (gst < 0) throw std::invalid_argument("config: gst_ms must be non-negative");
    if (corrupted.size() > params.fault_bound)
      throw std::invalid_argument("config: |corrupted| exceeds the fault bound f");
    for (ProcessorId p : corrupted)
      if (p >= params.processors) throw std::invalid_argument("config: corrupted id out of range");
    for (const auto& [p, a] : adversary) {
      if (!corrupted.count(p))
        throw std::invalid_argument("config: adversary entry for a non-corrupted processor");
      if (a.equivocations < 2)
        throw std::invalid_argument("config: equivocations must be >= 2");
      for (ProcessorId t : a.withhold_to)
        if (t >= params.processors)
          throw std::invalid_argument("config: withhold_to id out of range");
    }
    for (ProcessorId p : corrupted)
      if (!adversary.count(p))
        throw std::invalid_argument("config: corrupted processor without a strategy");
    for (const TxInjection& i : tx_schedule) {
      if (i.proc >= params.processors)
        throw std::invalid_argument("config: tx_schedule proc out of range");
      if (i.time < 0) throw std::invalid_argument("config: tx_schedule time must be non-negative");
    }
    if (!horizon.views && !horizon.time)
      throw std::invalid_argument("config: horizon must give views or ms");
    if (horizon.views && *horizon.views == 0)
      throw std::invalid_argument("config: horizon views must be >= 1");
    if (horizon.time && *horizon.time <= 0)
      throw std::invalid_argument("config: horizon ms must be positive");
  }

  std::uint32_t region_of(ProcessorId p) const {
    if (assignment.empty()) return p % static_cast<std::uint32_t>(regions.size());
    return assignment[p];
  }

  std::vector<std::uint32_t> resolved_assignment() const {
    std::vector<std::uint32_t> out(params.processors);
    for (ProcessorId p = 0; p < params.processors; ++p) out[p] = region_of(p);
    return out;
  }

  TimeUs max_latency() const {
    TimeUs m = 0;
    for (const auto& row : latency)
      for (const auto& e : row) m = std::max(m, e.base + e.jitter);
    return m;
  }
};

// ---------------------------------------------------------------------------
// JSON
// ---------------------------------------------------------------------------

inline ScenarioConfig config_from_json(const nlohmann::json& j) {
  ScenarioConfig c;
  if (j.value("schema", kConfigSchema) != kConfigSchema)
    throw std::invalid_argument("config: unsupported schema version");
  c.params.processors = j.at("n").get<std::uint32_t>();
  c.params.fault_bound = j.at("f").get<std::uint32_t>();
  c.params.delta = from_ms(j.at("delta_ms").get<double>());
  if (j.contains("variant"))
    c.params.view_advance_quorum =
        j["variant"].get<std::string>() == "large" ? AdvanceQuorum::Large : AdvanceQuorum::Mini;
  c.regions = j.at("regions").get<std::vector<std::string>>();
  if (j.contains("assignment"))
    c.assignment = j["assignment"].get<std::vector<std::uint32_t>>();
  {
    const auto& lat = j.at("latency");
    const auto base = lat.at("base_ms").get<std::vector<std::vector<double>>>();
    const auto jit = lat.at("jitter_ms").get<std::vector<std::vector<double>>>();
    if (jit.size() != base.size())
      throw std::invalid_argument("config: base_ms and jitter_ms shapes differ");
    c.latency.resize(base.size());
    for (std::size_t r = 0; r < base.size(); ++r) {
      if (jit[r].size() != base[r].size())
        throw std::invalid_argument("config: base_ms and jitter_ms shapes differ");
      c.latency[r].resize(base[r].size());
      for (std::size_t k = 0; k < base[r].size(); ++k)
        c.latency[r][k] = {from_ms(base[r][k]), from_ms(jit[r][k])};
    }
  }
  c.gst = from_ms(j.value("gst_ms", 0.0));
  if (j.contains("pre_gst")) {
    const auto& pg = j["pre_gst"];
    const std::string policy = pg.value("policy", "max_delay");
    if (policy == "none") c.pre_gst_policy = PreGstPolicy::None;
    else if (policy == "max_delay") c.pre_gst_policy = PreGstPolicy::MaxDelay;
    else throw std::invalid_argument("config: unknown pre_gst policy '" + policy + "'");
    if (pg.contains("targets"))
      c.pre_gst_targets = pg["targets"].get<std::vector<ProcessorId>>();
  }
  if (j.contains("corrupted"))
    for (auto p : j["corrupted"]) c.corrupted.insert(p.get<ProcessorId>());
  if (j.contains("adversary")) {
    for (auto it = j["adversary"].begin(); it != j["adversary"].end(); ++it) {
      AdversaryAssignment a;
      a.strategy = strategy_from_name(it.value().at("strategy").get<std::string>());
      a.equivocations = it.value().value("equivocations", 2);
      if (it.value().contains("withhold_to"))
        a.withhold_to = it.value()["withhold_to"].get<std::vector<ProcessorId>>();
      c.adversary.emplace(static_cast<ProcessorId>(std::stoul(it.key())), a);
    }
  }
  if (j.contains("tx_schedule")) {
    for (const auto& e : j["tx_schedule"]) {
      TxInjection inj;
      inj.time = from_ms(e.at("time_ms").get<double>());
      inj.proc = e.at("proc").get<ProcessorId>();
      inj.tx.id = e.at("id").get<TxId>();
      inj.tx.payload = e.value("payload", std::string{});
      c.tx_schedule.push_back(std::move(inj));
    }
  }
  {
    const auto& hz = j.at("horizon");
    if (hz.contains("views")) c.horizon.views = hz["views"].get<std::uint64_t>();
    if (hz.contains("ms")) c.horizon.time = from_ms(hz["ms"].get<double>());
  }
  c.seed = j.value("seed", 0ull);
  if (j.contains("hard_stop_ms")) c.hard_stop = from_ms(j["hard_stop_ms"].get<double>());
  if (j.contains("max_events")) c.max_events = j["max_events"].get<std::uint64_t>();
  if (j.contains("record"))
    c.record.deliveries = j["record"].value("deliveries", true);
  return c;
}

inline nlohmann::json config_to_json(const ScenarioConfig& c) {
  nlohmann::json j;
  j["schema"] = kConfigSchema;
  j["n"] = c.params.processors;
  j["f"] = c.params.fault_bound;
  j["delta_ms"] = to_ms(c.params.delta);
  j["variant"] = c.params.view_advance_quorum == AdvanceQuorum::Mini ? "mini" : "large";
  j["regions"] = c.regions;
  if (!c.assignment.empty()) j["assignment"] = c.assignment;
  {
    nlohmann::json base = nlohmann::json::array(), jit = nlohmann::json::array();
    for (const auto& row : c.latency) {
      nlohmann::json rb = nlohmann::json::array(), rj = nlohmann::json::array();
      for (const auto& e : row) {
        rb.push_back(to_ms(e.base));
        rj.push_back(to_ms(e.jitter));
      }
      base.push_back(std::move(rb));
      jit.push_back(std::move(rj));
    }
    j["latency"] = {{"base_ms", std::move(base)}, {"jitter_ms", std::move(jit)}};
  }
  j["gst_ms"] = to_ms(c.gst);
  {
    nlohmann::json pg;
    pg["policy"] = c.pre_gst_policy == PreGstPolicy::None ? "none" : "max_delay";
    if (!c.pre_gst_targets.empty()) pg["targets"] = c.pre_gst_targets;
    j["pre_gst"] = std::move(pg);
  }
  j["corrupted"] = c.corrupted;
  {
    nlohmann::json adv = nlohmann::json::object();
    for (const auto& [p, a] : c.adversary) {
      nlohmann::json e;
      e["strategy"] = strategy_name(a.strategy);
      if (a.strategy == Strategy::EquivocatingLeader) e["equivocations"] = a.equivocations;
      if (!a.withhold_to.empty()) e["withhold_to"] = a.withhold_to;
      adv[std::to_string(p)] = std::move(e);
    }
    j["adversary"] = std::move(adv);
  }
  {
    nlohmann::json sched = nlohmann::json::array();
    for (const TxInjection& i : c.tx_schedule) {
      nlohmann::json e;
      e["time_ms"] = to_ms(i.time);
      e["proc"] = i.proc;
      e["id"] = i.tx.id;
      if (!i.tx.payload.empty()) e["payload"] = i.tx.payload;
      sched.push_back(std::move(e));
    }
    j["tx_schedule"] = std::move(sched);
  }
  {
    nlohmann::json hz;
    if (c.horizon.views) hz["views"] = *c.horizon.views;
    if (c.horizon.time) hz["ms"] = to_ms(*c.horizon.time);
    j["horizon"] = std::move(hz);
  }
  j["seed"] = c.seed;
  if (c.hard_stop > 0) j["hard_stop_ms"] = to_ms(c.hard_stop);
  if (c.max_events > 0) j["max_events"] = c.max_events;
  if (!c.record.deliveries) j["record"] = {{"deliveries", false}};
  return j;
}

}  // namespace minimmit::sim

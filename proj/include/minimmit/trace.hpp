#pragma once

// Simulation traces: the totally ordered record of everything a run did.
//
// On disk a trace is JSON lines, one event per line, schema versioned via
// the leading header line. Field names: time_ms, proc, region, kind, view,
// block_hash, signers, plus kind-specific extras. Votes and nullifies appear
// as the send events that carry them; view entries and finalisations are
// explicit events of their own.

#include <cstdint>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "minimmit/replica.hpp"
#include "minimmit/types.hpp"

namespace minimmit::sim {

inline constexpr int kTraceSchema = 1;

enum class TraceKind : std::uint8_t {
  TxArrival,
  Send,
  Deliver,
  EnterView,
  Finalize,
  Violation,
};

enum class WireKind : std::uint8_t { Proposal, Vote, Nullify, CertM, CertL, CertNull };

// Compact summary of one wire payload. Proposals keep the full block body;
// everything else is identified by view/hash/signers.
struct WireSummary {
  WireKind kind = WireKind::Nullify;
  View view = 0;
  Hash block_hash{};
  ProcessorId signer = 0;              // messages
  std::vector<ProcessorId> signers;    // certificates
  // Proposal payload:
  Hash parent{};
  std::vector<TxId> tx_ids;
  ProcessorId proposer = 0;
};

struct TraceEvent {
  TimeUs time = 0;
  TraceKind kind = TraceKind::Send;
  ProcessorId proc = 0;  // acting processor (sender, receiver, finaliser...)
  WireSummary msg;                    // Send / Deliver
  ProcessorId from = 0;               // Deliver
  std::vector<ProcessorId> to;        // Send to a strict subset; empty = all
  View view = 0;                      // EnterView / Finalize
  Hash block_hash{};                  // Finalize
  std::uint32_t log_len = 0;          // Finalize
  TxId tx_id = 0;                     // TxArrival
  std::string detail;                 // Violation
};

struct LatencyEntry {
  TimeUs base = 0;
  TimeUs jitter = 0;
};

struct TraceHeader {
  int schema = kTraceSchema;
  ProtocolParams params;
  std::vector<std::string> regions;
  std::vector<std::uint32_t> assignment;  // proc -> region index
  std::vector<std::vector<LatencyEntry>> latency;
  TimeUs gst = 0;
  std::set<ProcessorId> corrupted;
  std::uint64_t seed = 0;
  std::optional<std::uint64_t> horizon_views;
  std::optional<TimeUs> horizon_time;

  const std::string& region_name(ProcessorId p) const { return regions[assignment[p]]; }
  bool is_correct(ProcessorId p) const { return corrupted.count(p) == 0; }

  // Largest configured single-hop latency, after the delta clamp.
  TimeUs max_latency_clamped() const {
    TimeUs m = 0;
    for (const auto& row : latency)
      for (const auto& e : row) m = std::max(m, e.base + e.jitter);
    return std::min(m, params.delta);
  }
};

struct Trace {
  TraceHeader header;
  std::vector<TraceEvent> events;
  TimeUs end_time = 0;
  std::string end_reason;
};

inline double to_ms(TimeUs t) { return static_cast<double>(t) / 1000.0; }
inline TimeUs from_ms(double ms) { return static_cast<TimeUs>(ms * 1000.0 + (ms >= 0 ? 0.5 : -0.5)); }

// ---------------------------------------------------------------------------
// JSON-lines serialisation
// ---------------------------------------------------------------------------

inline const char* wire_kind_name(WireKind k) {
  switch (k) {
    case WireKind::Proposal: return "proposal";
    case WireKind::Vote: return "vote";
    case WireKind::Nullify: return "nullify";
    case WireKind::CertM: return "cert_m";
    case WireKind::CertL: return "cert_l";
    case WireKind::CertNull: return "cert_null";
  }
  return "?";
}

inline const char* trace_kind_name(TraceKind k) {
  switch (k) {
    case TraceKind::TxArrival: return "tx";
    case TraceKind::Send: return "send";
    case TraceKind::Deliver: return "deliver";
    case TraceKind::EnterView: return "enter_view";
    case TraceKind::Finalize: return "finalize";
    case TraceKind::Violation: return "violation";
  }
  return "?";
}

inline nlohmann::json wire_to_json(const WireSummary& w) {
  nlohmann::json j;
  j["type"] = wire_kind_name(w.kind);
  j["view"] = w.view;
  switch (w.kind) {
    case WireKind::Proposal:
      j["block_hash"] = to_hex(w.block_hash);
      j["signer"] = w.signer;
      j["parent"] = to_hex(w.parent);
      j["txs"] = w.tx_ids;
      break;
    case WireKind::Vote:
      j["block_hash"] = to_hex(w.block_hash);
      j["signer"] = w.signer;
      break;
    case WireKind::Nullify:
      j["signer"] = w.signer;
      break;
    case WireKind::CertM:
    case WireKind::CertL:
      j["block_hash"] = to_hex(w.block_hash);
      j["signers"] = w.signers;
      break;
    case WireKind::CertNull:
      j["signers"] = w.signers;
      break;
  }
  return j;
}

inline void write_jsonl(const Trace& t, std::ostream& os) {
  const TraceHeader& h = t.header;
  nlohmann::json hdr;
  hdr["kind"] = "header";
  hdr["schema"] = h.schema;
  hdr["n"] = h.params.processors;
  hdr["f"] = h.params.fault_bound;
  hdr["delta_ms"] = to_ms(h.params.delta);
  hdr["variant"] = h.params.view_advance_quorum == AdvanceQuorum::Mini ? "mini" : "large";
  hdr["regions"] = h.regions;
  hdr["assignment"] = h.assignment;
  {
    nlohmann::json base = nlohmann::json::array();
    nlohmann::json jit = nlohmann::json::array();
    for (const auto& row : h.latency) {
      nlohmann::json rb = nlohmann::json::array(), rj = nlohmann::json::array();
      for (const auto& e : row) {
        rb.push_back(to_ms(e.base));
        rj.push_back(to_ms(e.jitter));
      }
      base.push_back(std::move(rb));
      jit.push_back(std::move(rj));
    }
    hdr["latency"] = {{"base_ms", std::move(base)}, {"jitter_ms", std::move(jit)}};
  }
  hdr["gst_ms"] = to_ms(h.gst);
  hdr["corrupted"] = h.corrupted;
  hdr["seed"] = h.seed;
  if (h.horizon_views) hdr["horizon_views"] = *h.horizon_views;
  if (h.horizon_time) hdr["horizon_ms"] = to_ms(*h.horizon_time);
  os << hdr.dump() << '\n';

  for (const TraceEvent& e : t.events) {
    nlohmann::json j;
    j["kind"] = trace_kind_name(e.kind);
    j["time_ms"] = to_ms(e.time);
    j["proc"] = e.proc;
    j["region"] = h.region_name(e.proc);
    switch (e.kind) {
      case TraceKind::TxArrival:
        j["tx_id"] = e.tx_id;
        break;
      case TraceKind::Send:
        j["msg"] = wire_to_json(e.msg);
        if (!e.to.empty()) j["to"] = e.to;
        break;
      case TraceKind::Deliver:
        j["msg"] = wire_to_json(e.msg);
        j["from"] = e.from;
        break;
      case TraceKind::EnterView:
        j["view"] = e.view;
        break;
      case TraceKind::Finalize:
        j["view"] = e.view;
        j["block_hash"] = to_hex(e.block_hash);
        j["log_len"] = e.log_len;
        break;
      case TraceKind::Violation:
        j["detail"] = e.detail;
        break;
    }
    os << j.dump() << '\n';
  }

  nlohmann::json end;
  end["kind"] = "end";
  end["time_ms"] = to_ms(t.end_time);
  end["reason"] = t.end_reason;
  os << end.dump() << '\n';
}

inline std::string to_jsonl(const Trace& t) {
  std::ostringstream os;
  write_jsonl(t, os);
  return os.str();
}

inline WireSummary wire_from_json(const nlohmann::json& j) {
  WireSummary w;
  const std::string type = j.at("type").get<std::string>();
  w.view = j.at("view").get<View>();
  if (type == "proposal") {
    w.kind = WireKind::Proposal;
    w.block_hash = hash_from_hex(j.at("block_hash").get<std::string>());
    w.signer = j.at("signer").get<ProcessorId>();
    w.parent = hash_from_hex(j.at("parent").get<std::string>());
    w.tx_ids = j.at("txs").get<std::vector<TxId>>();
    w.proposer = w.signer;
  } else if (type == "vote") {
    w.kind = WireKind::Vote;
    w.block_hash = hash_from_hex(j.at("block_hash").get<std::string>());
    w.signer = j.at("signer").get<ProcessorId>();
  } else if (type == "nullify") {
    w.kind = WireKind::Nullify;
    w.signer = j.at("signer").get<ProcessorId>();
  } else if (type == "cert_m" || type == "cert_l") {
    w.kind = type == "cert_m" ? WireKind::CertM : WireKind::CertL;
    w.block_hash = hash_from_hex(j.at("block_hash").get<std::string>());
    w.signers = j.at("signers").get<std::vector<ProcessorId>>();
  } else if (type == "cert_null") {
    w.kind = WireKind::CertNull;
    w.signers = j.at("signers").get<std::vector<ProcessorId>>();
  } else {
    throw std::runtime_error("trace: unknown message type " + type);
  }
  return w;
}

inline Trace read_jsonl(std::istream& is) {
  Trace t;
  std::string line;
  bool saw_header = false;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    nlohmann::json j = nlohmann::json::parse(line);
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "header") {
      TraceHeader& h = t.header;
      h.schema = j.at("schema").get<int>();
      if (h.schema != kTraceSchema)
        throw std::runtime_error("trace: unsupported schema");
      h.params.processors = j.at("n").get<std::uint32_t>();
      h.params.fault_bound = j.at("f").get<std::uint32_t>();
      h.params.delta = from_ms(j.at("delta_ms").get<double>());
      h.params.view_advance_quorum =
          j.at("variant").get<std::string>() == "large" ? AdvanceQuorum::Large
                                                        : AdvanceQuorum::Mini;
      h.regions = j.at("regions").get<std::vector<std::string>>();
      h.assignment = j.at("assignment").get<std::vector<std::uint32_t>>();
      const auto& lat = j.at("latency");
      const auto base = lat.at("base_ms").get<std::vector<std::vector<double>>>();
      const auto jit = lat.at("jitter_ms").get<std::vector<std::vector<double>>>();
      h.latency.resize(base.size());
      for (std::size_t r = 0; r < base.size(); ++r) {
        h.latency[r].resize(base[r].size());
        for (std::size_t c = 0; c < base[r].size(); ++c)
          h.latency[r][c] = {from_ms(base[r][c]), from_ms(jit[r][c])};
      }
      h.gst = from_ms(j.at("gst_ms").get<double>());
      for (auto p : j.at("corrupted")) h.corrupted.insert(p.get<ProcessorId>());
      h.seed = j.at("seed").get<std::uint64_t>();
      if (j.contains("horizon_views")) h.horizon_views = j["horizon_views"].get<std::uint64_t>();
      if (j.contains("horizon_ms")) h.horizon_time = from_ms(j["horizon_ms"].get<double>());
      saw_header = true;
    } else if (kind == "end") {
      t.end_time = from_ms(j.at("time_ms").get<double>());
      t.end_reason = j.at("reason").get<std::string>();
    } else {
      TraceEvent e;
      e.time = from_ms(j.at("time_ms").get<double>());
      e.proc = j.at("proc").get<ProcessorId>();
      if (kind == "tx") {
        e.kind = TraceKind::TxArrival;
        e.tx_id = j.at("tx_id").get<TxId>();
      } else if (kind == "send") {
        e.kind = TraceKind::Send;
        e.msg = wire_from_json(j.at("msg"));
        if (j.contains("to")) e.to = j["to"].get<std::vector<ProcessorId>>();
      } else if (kind == "deliver") {
        e.kind = TraceKind::Deliver;
        e.msg = wire_from_json(j.at("msg"));
        e.from = j.at("from").get<ProcessorId>();
      } else if (kind == "enter_view") {
        e.kind = TraceKind::EnterView;
        e.view = j.at("view").get<View>();
      } else if (kind == "finalize") {
        e.kind = TraceKind::Finalize;
        e.view = j.at("view").get<View>();
        e.block_hash = hash_from_hex(j.at("block_hash").get<std::string>());
        e.log_len = j.at("log_len").get<std::uint32_t>();
      } else if (kind == "violation") {
        e.kind = TraceKind::Violation;
        e.detail = j.at("detail").get<std::string>();
      } else {
        throw std::runtime_error("trace: unknown event kind " + kind);
      }
      t.events.push_back(std::move(e));
    }
  }
  if (!saw_header) throw std::runtime_error("trace: missing header line");
  return t;
}

// ---------------------------------------------------------------------------
// Replay utilities shared by the checker and the metrics engine
// ---------------------------------------------------------------------------

struct BlockLite {
  View view = 0;
  Hash parent{};
  std::vector<TxId> tx_ids;
};

// Every block whose full body appears in the trace, keyed by hash.
// Proposals (sent or delivered) carry full bodies; genesis is implicit.
class BlockRegistry {
 public:
  explicit BlockRegistry(const Trace& t) {
    blocks_.emplace(genesis_hash(), BlockLite{});
    for (const TraceEvent& e : t.events) {
      if ((e.kind == TraceKind::Send || e.kind == TraceKind::Deliver) &&
          e.msg.kind == WireKind::Proposal) {
        blocks_.emplace(e.msg.block_hash,
                        BlockLite{e.msg.view, e.msg.parent, e.msg.tx_ids});
      }
    }
  }

  const BlockLite* find(const Hash& h) const {
    auto it = blocks_.find(h);
    return it == blocks_.end() ? nullptr : &it->second;
  }

  // Extended transaction sequence of the block: ancestors root-first,
  // duplicates dropped keeping the first occurrence. Nullopt when part of
  // the chain is unknown to the trace.
  std::optional<std::vector<TxId>> extended_tx_ids(const Hash& h) const {
    if (auto it = cache_.find(h); it != cache_.end()) return it->second;
    std::vector<const BlockLite*> chain;
    std::vector<Hash> hashes;
    Hash cur = h;
    while (cur != genesis_hash()) {
      const BlockLite* b = find(cur);
      if (!b) return std::nullopt;
      chain.push_back(b);
      hashes.push_back(cur);
      if (!chain.empty() && chain.size() > 100000) return std::nullopt;
      cur = b->parent;
    }
    std::vector<TxId> out;
    std::set<TxId> seen;
    for (auto rit = chain.rbegin(); rit != chain.rend(); ++rit) {
      for (TxId id : (*rit)->tx_ids)
        if (seen.insert(id).second) out.push_back(id);
    }
    cache_.emplace(h, out);
    return out;
  }

  // True when `anc` is an ancestor of (or equal to) `h`, as far as the
  // registry can see.
  bool is_ancestor(const Hash& anc, const Hash& h) const {
    Hash cur = h;
    while (true) {
      if (cur == anc) return true;
      if (cur == genesis_hash()) return false;
      const BlockLite* b = find(cur);
      if (!b) return false;
      cur = b->parent;
    }
  }

 private:
  std::map<Hash, BlockLite> blocks_;
  mutable std::map<Hash, std::vector<TxId>> cache_;
};

}  // namespace minimmit::sim

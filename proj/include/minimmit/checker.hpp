#pragma once

// Post-hoc verification of a finished trace. Safety checks count the votes
// and nullifies that processors *sent*, across the whole network, so they
// catch violations no single replica could observe. Every failing verdict
// names the earliest event index that witnesses the violation.
//
// Liveness checks return pass, fail, or inconclusive: a finite trace can
// only oblige an eventuality when the horizon left enough room for it.

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "minimmit/trace.hpp"
#include "minimmit/types.hpp"

namespace minimmit::checker {

using sim::BlockRegistry;
using sim::Trace;
using sim::TraceEvent;
using sim::TraceKind;
using sim::WireKind;

enum class Status : std::uint8_t { Pass, Fail, Inconclusive };

inline const char* status_name(Status s) {
  switch (s) {
    case Status::Pass: return "pass";
    case Status::Fail: return "fail";
    case Status::Inconclusive: return "inconclusive";
  }
  return "?";
}

struct Verdict {
  std::string check;
  Status status = Status::Pass;
  std::string detail;
  std::optional<std::size_t> witness_event;

  static Verdict pass(std::string check, std::string detail = {}) {
    return {std::move(check), Status::Pass, std::move(detail), std::nullopt};
  }
  static Verdict fail(std::string check, std::string detail, std::size_t witness) {
    return {std::move(check), Status::Fail, std::move(detail), witness};
  }
  static Verdict inconclusive(std::string check, std::string detail) {
    return {std::move(check), Status::Inconclusive, std::move(detail), std::nullopt};
  }
};

struct Report {
  std::vector<Verdict> verdicts;

  bool any_fail() const {
    for (const Verdict& v : verdicts)
      if (v.status == Status::Fail) return true;
    return false;
  }

  const Verdict* find(const std::string& name) const {
    for (const Verdict& v : verdicts)
      if (v.check == name) return &v;
    return nullptr;
  }

  nlohmann::json to_json() const {
    nlohmann::json out = nlohmann::json::array();
    for (const Verdict& v : verdicts) {
      nlohmann::json j;
      j["check"] = v.check;
      j["status"] = status_name(v.status);
      if (!v.detail.empty()) j["detail"] = v.detail;
      if (v.witness_event) j["witness_event"] = *v.witness_event;
      out.push_back(std::move(j));
    }
    return out;
  }
};

// ---------------------------------------------------------------------------
// Safety
// ---------------------------------------------------------------------------

// No correct processor sends votes for two different blocks of one view.
inline Verdict check_one_vote(const Trace& t) {
  std::map<ProcessorId, std::map<View, Hash>> voted;
  for (std::size_t i = 0; i < t.events.size(); ++i) {
    const TraceEvent& e = t.events[i];
    if (e.kind != TraceKind::Send || e.msg.kind != WireKind::Vote) continue;
    if (!t.header.is_correct(e.proc)) continue;
    auto [it, inserted] = voted[e.proc].emplace(e.msg.view, e.msg.block_hash);
    if (!inserted && it->second != e.msg.block_hash) {
      return Verdict::fail("one_vote",
                           "processor " + std::to_string(e.proc) +
                               " voted twice in view " + std::to_string(e.msg.view),
                           i);
    }
  }
  return Verdict::pass("one_vote");
}

// Once one block of a view has n-f distinct vote senders, no other block of
// that view may reach 2f+1.
inline Verdict check_x1(const Trace& t) {
  const auto lq = l_quorum(t.header.params);
  const auto mq = m_quorum(t.header.params);
  std::map<View, std::map<Hash, std::set<ProcessorId>>> votes;
  for (std::size_t i = 0; i < t.events.size(); ++i) {
    const TraceEvent& e = t.events[i];
    if (e.kind != TraceKind::Send || e.msg.kind != WireKind::Vote) continue;
    auto& per_view = votes[e.msg.view];
    auto& senders = per_view[e.msg.block_hash];
    if (!senders.insert(e.proc).second) continue;
    const std::size_t count = senders.size();
    if (count != lq && count != mq) continue;
    for (const auto& [other, other_senders] : per_view) {
      if (other == e.msg.block_hash) continue;
      const bool clash = (count >= lq && other_senders.size() >= mq) ||
                         (count >= mq && other_senders.size() >= lq);
      if (clash) {
        return Verdict::fail("x1",
                             "view " + std::to_string(e.msg.view) +
                                 " has a conflicting notarized block",
                             i);
      }
    }
  }
  return Verdict::pass("x1");
}

// A view with an L-notarized block never gathers 2f+1 nullify senders.
inline Verdict check_x2(const Trace& t) {
  const auto lq = l_quorum(t.header.params);
  const auto mq = m_quorum(t.header.params);
  std::map<View, std::map<Hash, std::set<ProcessorId>>> votes;
  std::map<View, std::set<ProcessorId>> nullifies;
  for (std::size_t i = 0; i < t.events.size(); ++i) {
    const TraceEvent& e = t.events[i];
    if (e.kind != TraceKind::Send) continue;
    if (e.msg.kind == WireKind::Vote) {
      auto& senders = votes[e.msg.view][e.msg.block_hash];
      if (!senders.insert(e.proc).second) continue;
      if (senders.size() == lq && nullifies[e.msg.view].size() >= mq) {
        return Verdict::fail("x2",
                             "view " + std::to_string(e.msg.view) +
                                 " is both L-notarized and nullified",
                             i);
      }
    } else if (e.msg.kind == WireKind::Nullify) {
      auto& senders = nullifies[e.msg.view];
      if (!senders.insert(e.proc).second) continue;
      if (senders.size() == mq) {
        for (const auto& [h, vs] : votes[e.msg.view]) {
          if (vs.size() >= lq) {
            return Verdict::fail("x2",
                                 "view " + std::to_string(e.msg.view) +
                                     " is both L-notarized and nullified",
                                 i);
          }
        }
      }
    }
  }
  return Verdict::pass("x2");
}

// Correct logs are pairwise compatible at all instants, and all L-notarized
// blocks sit on one ancestry chain.
inline Verdict check_consistency(const Trace& t) {
  for (std::size_t i = 0; i < t.events.size(); ++i) {
    if (t.events[i].kind == TraceKind::Violation)
      return Verdict::fail("consistency",
                           "replica-reported violation: " + t.events[i].detail, i);
  }

  const BlockRegistry registry(t);

  // Per-processor log evolution must be by extension; logs are append-only,
  // so pairwise compatibility at every pair of instants reduces to pairwise
  // compatibility of the final logs.
  std::map<ProcessorId, std::vector<TxId>> logs;
  std::map<ProcessorId, std::size_t> last_event;
  for (std::size_t i = 0; i < t.events.size(); ++i) {
    const TraceEvent& e = t.events[i];
    if (e.kind != TraceKind::Finalize || !t.header.is_correct(e.proc)) continue;
    auto ext = registry.extended_tx_ids(e.block_hash);
    if (!ext) {
      return Verdict::fail("consistency",
                           "finalized block with unknown ancestry at processor " +
                               std::to_string(e.proc),
                           i);
    }
    auto& log = logs[e.proc];
    const auto prefix_of = [](const std::vector<TxId>& a, const std::vector<TxId>& b) {
      return a.size() <= b.size() && std::equal(a.begin(), a.end(), b.begin());
    };
    if (prefix_of(log, *ext)) {
      log = std::move(*ext);
    } else if (!prefix_of(*ext, log)) {
      return Verdict::fail("consistency",
                           "finalisation rewrote the log of processor " +
                               std::to_string(e.proc),
                           i);
    }
    last_event[e.proc] = i;
  }
  for (auto a = logs.begin(); a != logs.end(); ++a) {
    for (auto b = std::next(a); b != logs.end(); ++b) {
      const auto& la = a->second;
      const auto& lb = b->second;
      const std::size_t common = std::min(la.size(), lb.size());
      if (!std::equal(la.begin(), la.begin() + common, lb.begin())) {
        return Verdict::fail("consistency",
                             "logs of processors " + std::to_string(a->first) + " and " +
                                 std::to_string(b->first) + " are incompatible",
                             std::max(last_event[a->first], last_event[b->first]));
      }
    }
  }

  // L-notarized blocks (by sent votes) must form a single chain.
  const auto lq = l_quorum(t.header.params);
  std::map<Hash, std::set<ProcessorId>> votes;
  std::vector<std::pair<Hash, std::size_t>> l_blocks;  // hash, witness event
  std::map<Hash, View> l_views;
  for (std::size_t i = 0; i < t.events.size(); ++i) {
    const TraceEvent& e = t.events[i];
    if (e.kind != TraceKind::Send || e.msg.kind != WireKind::Vote) continue;
    auto& senders = votes[e.msg.block_hash];
    if (!senders.insert(e.proc).second) continue;
    if (senders.size() == lq) {
      l_blocks.push_back({e.msg.block_hash, i});
      l_views[e.msg.block_hash] = e.msg.view;
    }
  }
  std::sort(l_blocks.begin(), l_blocks.end(),
            [&](const auto& x, const auto& y) { return l_views[x.first] < l_views[y.first]; });
  for (std::size_t k = 1; k < l_blocks.size(); ++k) {
    if (!registry.is_ancestor(l_blocks[k - 1].first, l_blocks[k].first)) {
      return Verdict::fail("consistency", "two L-notarized blocks on different chains",
                           std::max(l_blocks[k - 1].second, l_blocks[k].second));
    }
  }
  return Verdict::pass("consistency");
}

// ---------------------------------------------------------------------------
// Liveness
// ---------------------------------------------------------------------------

namespace detail {

// entry_times[v][p] = when correct processor p entered view v.
inline std::map<View, std::map<ProcessorId, TimeUs>> correct_entries(const Trace& t) {
  std::map<View, std::map<ProcessorId, TimeUs>> out;
  for (const TraceEvent& e : t.events) {
    if (e.kind != TraceKind::EnterView || !t.header.is_correct(e.proc)) continue;
    out[e.view].emplace(e.proc, e.time);
  }
  return out;
}

inline std::uint32_t correct_count(const Trace& t) {
  return t.header.params.processors - static_cast<std::uint32_t>(t.header.corrupted.size());
}

}  // namespace detail

// Every correct processor keeps entering views; with a view-count horizon
// the run must have reached it.
inline Verdict check_progression(const Trace& t) {
  if (t.end_reason == "violation")
    return Verdict::fail("progression", "run halted on a violation", t.events.size());
  if (!t.header.horizon_views) {
    return Verdict::inconclusive("progression",
                                 "no view target configured; time-bounded trace");
  }
  const View target = *t.header.horizon_views;
  if (t.end_reason == "hard_stop" || t.end_reason == "event_cap") {
    return Verdict::fail("progression",
                         "run stopped via " + t.end_reason + " before every correct "
                         "processor passed view " + std::to_string(target),
                         t.events.size());
  }
  const auto entries = detail::correct_entries(t);
  const auto n_correct = detail::correct_count(t);
  for (View v = 1; v <= target; ++v) {
    auto it = entries.find(v);
    if (it == entries.end() || it->second.size() < n_correct) {
      return Verdict::fail("progression",
                           "not every correct processor entered view " + std::to_string(v),
                           t.events.size());
    }
  }
  return Verdict::pass("progression");
}

// Every view with a correct leader first entered at or after GST yields a
// proposal that the whole network votes for, finalises everywhere, and
// completes within 3*delta + the largest clamped latency.
inline Verdict check_post_gst_leader(const Trace& t) {
  const auto& h = t.header;
  const auto lq = l_quorum(h.params);
  const TimeUs window = 3 * h.params.delta + h.max_latency_clamped();
  const TimeUs vote_window = 2 * h.params.delta + h.max_latency_clamped();
  const auto entries = detail::correct_entries(t);
  const auto n_correct = detail::correct_count(t);

  // First correct entry per view.
  std::map<View, TimeUs> first_entry;
  for (const auto& [v, per_proc] : entries) {
    TimeUs first = per_proc.begin()->second;
    for (const auto& [p, tm] : per_proc) first = std::min(first, tm);
    first_entry[v] = first;
  }

  // Gather per-view sends once.
  std::map<View, std::map<ProcessorId, std::pair<Hash, TimeUs>>> proposals;
  std::map<Hash, std::set<ProcessorId>> vote_senders;
  std::map<View, std::vector<std::pair<std::size_t, TimeUs>>> correct_vote_times;
  std::map<Hash, std::map<ProcessorId, TimeUs>> finalize_times;
  for (std::size_t i = 0; i < t.events.size(); ++i) {
    const TraceEvent& e = t.events[i];
    if (e.kind == TraceKind::Send && e.msg.kind == WireKind::Proposal) {
      proposals[e.msg.view].emplace(e.proc, std::make_pair(e.msg.block_hash, e.time));
    } else if (e.kind == TraceKind::Send && e.msg.kind == WireKind::Vote) {
      vote_senders[e.msg.block_hash].insert(e.proc);
      if (h.is_correct(e.proc)) correct_vote_times[e.msg.view].push_back({i, e.time});
    } else if (e.kind == TraceKind::Finalize && h.is_correct(e.proc)) {
      finalize_times[e.block_hash].emplace(e.proc, e.time);
    }
  }

  bool any_checked = false;
  for (const auto& [v, t_first] : first_entry) {
    const ProcessorId leader = lead(v, h.params);
    if (!h.is_correct(leader)) continue;
    if (t_first < h.gst) continue;
    if (t_first + window > t.end_time) continue;  // not enough trace left to oblige
    any_checked = true;

    auto pit = proposals.find(v);
    if (pit == proposals.end() || !pit->second.count(leader)) {
      return Verdict::fail("post_gst_leader",
                           "correct leader of view " + std::to_string(v) + " never proposed",
                           t.events.size());
    }
    const auto& [block, proposed_at] = pit->second.at(leader);
    if (vote_senders[block].size() < lq) {
      return Verdict::fail("post_gst_leader",
                           "view " + std::to_string(v) +
                               " proposal did not gather a large quorum",
                           t.events.size());
    }
    for (const auto& [idx, tm] : correct_vote_times[v]) {
      if (tm > t_first + vote_window) {
        return Verdict::fail("post_gst_leader",
                             "late vote in view " + std::to_string(v), idx);
      }
    }
    const auto& fins = finalize_times[block];
    if (fins.size() < n_correct) {
      return Verdict::fail("post_gst_leader",
                           "view " + std::to_string(v) +
                               " block not finalised by every correct processor",
                           t.events.size());
    }
    auto next = entries.find(v + 1);
    if (next == entries.end() || next->second.size() < n_correct) {
      return Verdict::fail("post_gst_leader",
                           "view " + std::to_string(v + 1) + " not entered by everyone",
                           t.events.size());
    }
    for (const auto& [p, tm] : next->second) {
      if (tm > t_first + window) {
        return Verdict::fail("post_gst_leader",
                             "view " + std::to_string(v) + " completed too slowly at processor " +
                                 std::to_string(p),
                             t.events.size());
      }
    }
  }
  if (!any_checked)
    return Verdict::inconclusive("post_gst_leader", "no checkable correct-leader views");
  return Verdict::pass("post_gst_leader");
}

// A transaction a correct processor received early enough -- at least
// 2n views before the end of the run -- reaches every correct log.
inline Verdict check_tx_liveness(const Trace& t) {
  const auto& h = t.header;
  const auto entries = detail::correct_entries(t);
  const auto n_correct = detail::correct_count(t);

  std::map<View, TimeUs> first_entry;
  View done_view = 0;  // greatest view entered by every correct processor
  for (const auto& [v, per_proc] : entries) {
    TimeUs first = per_proc.begin()->second;
    for (const auto& [p, tm] : per_proc) first = std::min(first, tm);
    first_entry[v] = first;
    if (per_proc.size() >= n_correct && v == done_view + 1) done_view = v;
  }

  // First arrival of each transaction at a correct processor.
  std::map<TxId, std::pair<TimeUs, std::size_t>> injected;
  for (std::size_t i = 0; i < t.events.size(); ++i) {
    const TraceEvent& e = t.events[i];
    if (e.kind != TraceKind::TxArrival || !h.is_correct(e.proc)) continue;
    injected.emplace(e.tx_id, std::make_pair(e.time, i));
  }
  if (injected.empty())
    return Verdict::pass("tx_liveness", "no transactions injected to correct processors");

  // Final correct logs.
  const BlockRegistry registry(t);
  std::map<ProcessorId, std::set<TxId>> final_logs;
  for (const TraceEvent& e : t.events) {
    if (e.kind != TraceKind::Finalize || !h.is_correct(e.proc)) continue;
    if (auto ext = registry.extended_tx_ids(e.block_hash)) {
      auto& s = final_logs[e.proc];
      s.insert(ext->begin(), ext->end());
    }
  }

  std::size_t conclusive = 0;
  for (const auto& [txid, info] : injected) {
    const auto& [when, idx] = info;
    // First view that started strictly after the injection.
    View v_after = 0;
    for (const auto& [v, first] : first_entry) {
      if (first > when) {
        v_after = v;
        break;
      }
    }
    if (v_after == 0 || done_view < v_after + 2 * h.params.processors - 1) continue;
    ++conclusive;
    for (ProcessorId p = 0; p < h.params.processors; ++p) {
      if (!h.is_correct(p)) continue;
      auto it = final_logs.find(p);
      if (it == final_logs.end() || !it->second.count(txid)) {
        return Verdict::fail("tx_liveness",
                             "tx " + std::to_string(txid) + " missing from the log of processor " +
                                 std::to_string(p),
                             idx);
      }
    }
  }
  if (conclusive == 0) {
    return Verdict::inconclusive("tx_liveness",
                                 "no transaction was injected early enough to oblige inclusion");
  }
  return Verdict::pass("tx_liveness");
}

inline Report check_all(const Trace& t) {
  Report r;
  r.verdicts.push_back(check_one_vote(t));
  r.verdicts.push_back(check_x1(t));
  r.verdicts.push_back(check_x2(t));
  r.verdicts.push_back(check_consistency(t));
  r.verdicts.push_back(check_progression(t));
  r.verdicts.push_back(check_post_gst_leader(t));
  r.verdicts.push_back(check_tx_liveness(t));
  return r;
}

}  // namespace minimmit::checker

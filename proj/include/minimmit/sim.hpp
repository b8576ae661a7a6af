#pragma once

// Deterministic discrete-event network simulation.
//
// Time is an integer microsecond clock. Partial synchrony: a payload sent at
// time t to another processor arrives at t + sampled latency, never later
// than max{GST, t} + delta, and never before t+1. Before GST the configured
// delay policy may additionally push targeted deliveries to exactly that
// bound. Broadcast is n-1 point-to-point sends with independent jitter
// draws; a processor's own broadcasts reach itself inside the replica,
// instantly.
//
// Replicas are activated on every delivery, at their view-timeout instants,
// and on transaction arrivals. An activation that made progress schedules a
// follow-up activation at the same instant, so a replica that can keep
// acting on what it already holds (catching up across views, voting right
// after advancing) does so before the clock moves -- the event-driven
// equivalent of running the rule body at every instant. Same-instant events
// are ordered deliveries-first, then activations, then by insertion; with a
// fixed seed the whole run is a pure function of the configuration.

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <queue>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "minimmit/adversary.hpp"
#include "minimmit/replica.hpp"
#include "minimmit/scenario.hpp"
#include "minimmit/trace.hpp"
#include "minimmit/types.hpp"

namespace minimmit::sim {

inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

// Stateless keyed generator: every draw is addressed by what it is for, so
// sampling order never depends on queue internals.
struct SeededRng {
  std::uint64_t seed = 0;
  std::uint64_t draw(std::uint64_t a, std::uint64_t b) const {
    return mix64(seed ^ mix64(a ^ mix64(b)));
  }
};

inline TimeUs sample_latency(const std::vector<std::vector<LatencyEntry>>& matrix,
                             std::uint32_t from_region, std::uint32_t to_region,
                             const SeededRng& rng, std::uint64_t key_a, std::uint64_t key_b) {
  const LatencyEntry& e = matrix.at(from_region).at(to_region);
  if (e.jitter <= 0) return e.base;
  return e.base + static_cast<TimeUs>(rng.draw(key_a, key_b) %
                                      static_cast<std::uint64_t>(e.jitter + 1));
}

inline constexpr std::uint64_t kDefaultMaxEvents = 20'000'000;
inline constexpr View kDrainViewMargin = 64;

class Engine {
 public:
  explicit Engine(ScenarioConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    rng_.seed = cfg_.seed;
  }

  Trace run() {
    const std::uint32_t n = cfg_.params.processors;
    regions_.resize(n);
    for (ProcessorId p = 0; p < n; ++p) regions_[p] = cfg_.region_of(p);

    trace_.header.params = cfg_.params;
    trace_.header.regions = cfg_.regions;
    trace_.header.assignment = cfg_.resolved_assignment();
    trace_.header.latency = cfg_.latency;
    trace_.header.gst = cfg_.gst;
    trace_.header.corrupted = cfg_.corrupted;
    trace_.header.seed = cfg_.seed;
    trace_.header.horizon_views = cfg_.horizon.views;
    trace_.header.horizon_time = cfg_.horizon.time;

    replicas_.reserve(n);
    for (ProcessorId p = 0; p < n; ++p) {
      if (cfg_.corrupted.count(p)) {
        replicas_.emplace_back(nullptr);
        actors_.emplace(p, adversary::ByzantineActor(p, cfg_.params,
                                                     cfg_.adversary.at(p), cfg_.gst));
      } else {
        replicas_.emplace_back(std::make_unique<Replica>(p, cfg_.params));
      }
    }
    txbuf_.resize(n);
    max_view_.assign(n, 1);

    // Everyone starts in view 1 at time zero.
    for (ProcessorId p = 0; p < n; ++p) {
      if (is_correct(p)) {
        TraceEvent e;
        e.time = 0;
        e.kind = TraceKind::EnterView;
        e.proc = p;
        e.view = 1;
        trace_.events.push_back(e);
      }
    }

    for (const TxInjection& inj : cfg_.tx_schedule) {
      Event e;
      e.time = inj.time;
      e.priority = 0;
      e.seq = next_seq_++;
      e.kind = EvKind::TxArrival;
      e.proc = inj.proc;
      e.tx = inj.tx;
      queue_.push(std::move(e));
    }
    if (cfg_.gst > 0) {
      Event e;
      e.time = cfg_.gst;
      e.priority = 0;
      e.seq = next_seq_++;
      e.kind = EvKind::GstReached;
      queue_.push(std::move(e));
    }
    for (ProcessorId p = 0; p < n; ++p) schedule_activation(p, 0);
    for (ProcessorId p = 0; p < n; ++p) schedule_activation(p, 2 * cfg_.params.delta);

    const std::uint64_t max_events = cfg_.max_events ? cfg_.max_events : kDefaultMaxEvents;
    std::uint64_t processed = 0;
    TimeUs last_time = 0;

    while (!queue_.empty() && !halted_) {
      if (view_ceiling_hit_) {
        trace_.end_time = *view_ceiling_hit_;
        trace_.end_reason = "views_reached";
        return std::move(trace_);
      }
      const auto [limit, reason] = stop_bound();
      const Event& top = queue_.top();
      if (top.time > limit) {
        trace_.end_time = limit;
        trace_.end_reason = reason;
        return std::move(trace_);
      }
      if (++processed > max_events) {
        trace_.end_time = top.time;
        trace_.end_reason = "event_cap";
        return std::move(trace_);
      }
      Event ev = queue_.top();
      queue_.pop();
      last_time = ev.time;
      dispatch(ev);
    }
    trace_.end_time = last_time;
    trace_.end_reason = halted_ ? "violation" : "queue_exhausted";
    return std::move(trace_);
  }

 private:
  enum class EvKind : std::uint8_t { Delivery, TxArrival, GstReached, Activation };

  struct WirePacket {
    Payload payload;
    WireSummary summary;
  };

  struct Event {
    TimeUs time = 0;
    std::uint8_t priority = 0;  // deliveries and arrivals before rule runs
    std::uint64_t seq = 0;
    EvKind kind = EvKind::Activation;
    ProcessorId proc = 0;
    ProcessorId from = 0;
    std::shared_ptr<const WirePacket> packet;
    Transaction tx;
  };

  struct EventAfter {
    bool operator()(const Event& a, const Event& b) const {
      if (a.time != b.time) return a.time > b.time;
      if (a.priority != b.priority) return a.priority > b.priority;
      return a.seq > b.seq;
    }
  };

  bool is_correct(ProcessorId p) const { return cfg_.corrupted.count(p) == 0; }

  std::pair<TimeUs, std::string> stop_bound() const {
    TimeUs limit = hard_stop_time();
    std::string reason = "hard_stop";
    if (cfg_.horizon.time && *cfg_.horizon.time <= limit) {
      limit = *cfg_.horizon.time;
      reason = "time_horizon";
    }
    if (drain_deadline_ && *drain_deadline_ <= limit) {
      limit = *drain_deadline_;
      reason = "views_reached";
    }
    return {limit, reason};
  }

  TimeUs hard_stop_time() const {
    if (cfg_.hard_stop > 0) return cfg_.hard_stop;
    const TimeUs d = cfg_.params.delta;
    const TimeUs lat = std::min(cfg_.max_latency(), d);
    if (cfg_.horizon.views) {
      const auto target = static_cast<TimeUs>(*cfg_.horizon.views);
      return cfg_.gst + 2 * d + (target + 5) * (8 * d + 6 * lat) + 2'000'000;
    }
    return *cfg_.horizon.time;
  }

  void schedule_activation(ProcessorId p, TimeUs t) {
    if (!pending_acts_.insert({t, p}).second) return;
    Event e;
    e.time = t;
    e.priority = 1;
    e.seq = next_seq_++;
    e.kind = EvKind::Activation;
    e.proc = p;
    queue_.push(std::move(e));
  }

  void dispatch(Event& ev) {
    switch (ev.kind) {
      case EvKind::Delivery: {
        if (cfg_.record.deliveries) {
          TraceEvent t;
          t.time = ev.time;
          t.kind = TraceKind::Deliver;
          t.proc = ev.proc;
          t.from = ev.from;
          t.msg = ev.packet->summary;
          trace_.events.push_back(std::move(t));
        }
        if (is_correct(ev.proc)) {
          replicas_[ev.proc]->ingest(ev.packet->payload, ev.time);
        } else {
          actors_.at(ev.proc).ingest(ev.packet->payload, ev.time);
        }
        schedule_activation(ev.proc, ev.time);
        break;
      }
      case EvKind::TxArrival: {
        TraceEvent t;
        t.time = ev.time;
        t.kind = TraceKind::TxArrival;
        t.proc = ev.proc;
        t.tx_id = ev.tx.id;
        trace_.events.push_back(std::move(t));
        txbuf_[ev.proc].push_back(std::move(ev.tx));
        schedule_activation(ev.proc, ev.time);
        break;
      }
      case EvKind::GstReached:
        break;
      case EvKind::Activation:
        pending_acts_.erase({ev.time, ev.proc});
        activate(ev.proc, ev.time);
        break;
    }
  }

  void activate(ProcessorId p, TimeUs now) {
    std::vector<Transaction> txs = std::exchange(txbuf_[p], {});
    if (!is_correct(p)) {
      auto& actor = actors_.at(p);
      const View before = actor.inner().view();
      auto intents = actor.act(now, {}, txs);
      for (auto& intent : intents)
        broadcast(p, std::move(intent.payload), intent.recipients, now);
      if (actor.inner().view() != before)
        schedule_activation(p, now + 2 * cfg_.params.delta);
      if (actor.progressed()) schedule_activation(p, now);
      return;
    }

    Replica& r = *replicas_[p];
    ReplicaOutput out = r.step(now, {}, txs);
    for (View v : out.entered_views) {
      TraceEvent t;
      t.time = now;
      t.kind = TraceKind::EnterView;
      t.proc = p;
      t.view = v;
      trace_.events.push_back(t);
      note_view_entry(p, v, now);
    }
    if (!out.entered_views.empty())
      schedule_activation(p, now + 2 * cfg_.params.delta);
    for (const Block& b : out.finalized) {
      TraceEvent t;
      t.time = now;
      t.kind = TraceKind::Finalize;
      t.proc = p;
      t.view = b.view;
      t.block_hash = hash_block(b);
      t.log_len = static_cast<std::uint32_t>(r.log().size());
      trace_.events.push_back(std::move(t));
    }
    if (out.violation) {
      TraceEvent t;
      t.time = now;
      t.kind = TraceKind::Violation;
      t.proc = p;
      t.detail = *out.violation;
      trace_.events.push_back(std::move(t));
      halted_ = true;
      return;
    }
    for (Payload& payload : out.broadcasts) broadcast(p, std::move(payload), {}, now);
    if (out.progressed) schedule_activation(p, now);
  }

  void note_view_entry(ProcessorId p, View v, TimeUs now) {
    if (v <= max_view_[p]) return;
    if (!cfg_.horizon.views) {
      max_view_[p] = v;
      return;
    }
    const View target = *cfg_.horizon.views;
    const bool was_past = max_view_[p] > target;
    const bool was_far = max_view_[p] > target + kDrainViewMargin;
    max_view_[p] = v;
    if (!was_past && v > target && !drain_deadline_) {
      if (++past_target_ == correct_count()) {
        const TimeUs lat = std::min(cfg_.max_latency(), cfg_.params.delta);
        drain_deadline_ = now + 4 * cfg_.params.delta + 4 * lat;
      }
    }
    // Zero-latency self-quorum setups can spin through views without the
    // clock moving; a view ceiling past the target ends those runs too.
    if (!was_far && v > target + kDrainViewMargin) {
      if (++past_far_ == correct_count()) {
        view_ceiling_hit_ = now;
      }
    }
  }

  std::uint32_t correct_count() const {
    return cfg_.params.processors - static_cast<std::uint32_t>(cfg_.corrupted.size());
  }

  static WireSummary summarize(const Payload& payload) {
    WireSummary w;
    if (const auto* msg = std::get_if<Message>(&payload)) {
      w.signer = msg->signer;
      switch (msg->kind) {
        case MessageKind::Proposal:
          w.kind = WireKind::Proposal;
          w.view = msg->block->view;
          w.block_hash = hash_block(*msg->block);
          w.parent = msg->block->parent_hash;
          w.proposer = msg->block->proposer;
          for (const Transaction& tx : msg->block->transactions) w.tx_ids.push_back(tx.id);
          break;
        case MessageKind::Vote:
          w.kind = WireKind::Vote;
          w.view = msg->block->view;
          w.block_hash = hash_block(*msg->block);
          break;
        case MessageKind::Nullify:
          w.kind = WireKind::Nullify;
          w.view = msg->nullify_view;
          break;
      }
    } else {
      const auto& cert = std::get<Certificate>(payload);
      w.view = cert.view();
      w.signers = cert.signers;
      switch (cert.kind) {
        case CertKind::MNotarization:
          w.kind = WireKind::CertM;
          w.block_hash = hash_block(*cert.block);
          break;
        case CertKind::LNotarization:
          w.kind = WireKind::CertL;
          w.block_hash = hash_block(*cert.block);
          break;
        case CertKind::Nullification:
          w.kind = WireKind::CertNull;
          break;
      }
    }
    return w;
  }

  void broadcast(ProcessorId sender, Payload&& payload,
                 const std::vector<ProcessorId>& recipients, TimeUs now) {
    auto packet = std::make_shared<WirePacket>();
    packet->summary = summarize(payload);
    packet->payload = std::move(payload);

    TraceEvent t;
    t.time = now;
    t.kind = TraceKind::Send;
    t.proc = sender;
    t.msg = packet->summary;
    if (!recipients.empty()) {
      t.to = recipients;
      std::sort(t.to.begin(), t.to.end());
      t.to.erase(std::unique(t.to.begin(), t.to.end()), t.to.end());
    }
    const std::vector<ProcessorId>* targets = t.to.empty() ? nullptr : &t.to;
    trace_.events.push_back(t);

    const std::uint64_t bcast_key = ++bcast_counter_;
    if (targets) {
      for (ProcessorId r : *targets) {
        if (r == sender) continue;
        push_delivery(sender, r, packet, now, bcast_key);
      }
    } else {
      for (ProcessorId r = 0; r < cfg_.params.processors; ++r) {
        if (r == sender) continue;
        push_delivery(sender, r, packet, now, bcast_key);
      }
    }
  }

  void push_delivery(ProcessorId sender, ProcessorId receiver,
                     std::shared_ptr<const WirePacket> packet, TimeUs now,
                     std::uint64_t bcast_key) {
    Event e;
    e.time = delivery_time(sender, receiver, now, bcast_key);
    e.priority = 0;
    e.seq = next_seq_++;
    e.kind = EvKind::Delivery;
    e.proc = receiver;
    e.from = sender;
    e.packet = std::move(packet);
    queue_.push(std::move(e));
  }

  TimeUs delivery_time(ProcessorId sender, ProcessorId receiver, TimeUs now,
                       std::uint64_t bcast_key) const {
    const TimeUs bound = std::max(cfg_.gst, now) + cfg_.params.delta;
    TimeUs at;
    if (now < cfg_.gst && cfg_.pre_gst_policy == PreGstPolicy::MaxDelay &&
        pre_gst_targeted(receiver)) {
      at = bound;
    } else {
      const TimeUs lat = sample_latency(cfg_.latency, regions_[sender], regions_[receiver],
                                        rng_, bcast_key, receiver);
      at = std::min(now + lat, bound);
    }
    return std::max(at, now + 1);
  }

  bool pre_gst_targeted(ProcessorId receiver) const {
    if (cfg_.pre_gst_targets.empty()) return true;
    for (ProcessorId t : cfg_.pre_gst_targets)
      if (t == receiver) return true;
    return false;
  }

  ScenarioConfig cfg_;
  SeededRng rng_;
  Trace trace_;

  std::vector<std::unique_ptr<Replica>> replicas_;
  std::map<ProcessorId, adversary::ByzantineActor> actors_;
  std::vector<std::vector<Transaction>> txbuf_;
  std::vector<std::uint32_t> regions_;
  std::vector<View> max_view_;

  std::priority_queue<Event, std::vector<Event>, EventAfter> queue_;
  std::set<std::pair<TimeUs, ProcessorId>> pending_acts_;
  std::uint64_t next_seq_ = 0;
  std::uint64_t bcast_counter_ = 0;
  std::uint32_t past_target_ = 0;
  std::uint32_t past_far_ = 0;
  std::optional<TimeUs> drain_deadline_;
  std::optional<TimeUs> view_ceiling_hit_;
  bool halted_ = false;
};

inline Trace run(const ScenarioConfig& cfg) { return Engine(cfg).run(); }

}  // namespace minimmit::sim

#pragma once

// Byzantine behaviour for corrupted processors. Each strategy is a
// deterministic function of its observations; none of them can sign for
// anyone else. A corrupted processor hosts an ordinary replica whose output
// the strategy rewrites, drops, or extends, so attacks compose with honest
// behaviour per view.

#include <algorithm>
#include <cstdint>
#include <optional>
#include <set>
#include <span>
#include <vector>

#include "minimmit/replica.hpp"
#include "minimmit/scenario.hpp"
#include "minimmit/types.hpp"

namespace minimmit::adversary {

using sim::AdversaryAssignment;
using sim::Strategy;

struct SendIntent {
  Payload payload;
  std::vector<ProcessorId> recipients;  // empty = all other processors
};

class ByzantineActor {
 public:
  ByzantineActor(ProcessorId id, ProtocolParams params, AdversaryAssignment assignment,
                 TimeUs gst)
      : id_(id), params_(params), assignment_(assignment), gst_(gst), inner_(id, params) {}

  ProcessorId id() const { return id_; }
  const Replica& inner() const { return inner_; }

  // Observations reach the strategy and the inner replica together.
  void ingest(const Payload& p, TimeUs now) {
    observe_one(p);
    inner_.ingest(p, now);
  }

  std::vector<SendIntent> act(TimeUs now, std::span<const Payload> inbox,
                              std::span<const Transaction> new_txs) {
    for (const Payload& p : inbox) observe_one(p);
    ReplicaOutput honest = inner_.step(now, inbox, new_txs);
    progressed_ = honest.progressed;

    std::vector<SendIntent> out;
    switch (assignment_.strategy) {
      case Strategy::Silent:
        break;
      case Strategy::EquivocatingLeader:
        equivocate(std::move(honest), out);
        break;
      case Strategy::DoubleVoter:
        pass_through(std::move(honest), out);
        vote_everything(out);
        break;
      case Strategy::NullifySpammer:
        forward_only(std::move(honest), out);
        spam_nullifies(out);
        break;
      case Strategy::Withholder:
        if (now < gst_) {
          withhold(std::move(honest), out);
        } else {
          pass_through(std::move(honest), out);
        }
        break;
    }
    progressed_ = progressed_ || !out.empty();
    return out;
  }

  // Whether the last activation did anything that warrants another one.
  bool progressed() const { return progressed_; }

 private:
  void observe_one(const Payload& p) {
    if (const auto* msg = std::get_if<Message>(&p)) {
      if (msg->block) note_block(*msg->block);
      if (msg->kind == MessageKind::Nullify)
        max_view_seen_ = std::max(max_view_seen_, msg->nullify_view);
    } else {
      const auto& cert = std::get<Certificate>(p);
      if (cert.block) note_block(*cert.block);
      max_view_seen_ = std::max(max_view_seen_, cert.view());
    }
  }

  void note_block(const Block& b) {
    if (b.is_genesis()) return;
    max_view_seen_ = std::max(max_view_seen_, b.view);
    const Hash h = hash_block(b);
    if (known_blocks_.insert(h).second) block_bodies_.push_back(b);
  }

  void pass_through(ReplicaOutput&& honest, std::vector<SendIntent>& out) {
    for (Payload& p : honest.broadcasts) {
      remember_own(p);
      out.push_back({std::move(p), {}});
    }
  }

  // Certificates only; suppresses the replica's own proposals and votes.
  void forward_only(ReplicaOutput&& honest, std::vector<SendIntent>& out) {
    for (Payload& p : honest.broadcasts)
      if (std::holds_alternative<Certificate>(p)) out.push_back({std::move(p), {}});
  }

  // In led views, replace the single proposal with k distinct blocks sent to
  // disjoint slices of the network, each slice also receiving a matching
  // vote. Suppress later own votes for those views so each slice keeps
  // seeing a self-consistent world.
  void equivocate(ReplicaOutput&& honest, std::vector<SendIntent>& out) {
    for (Payload& p : honest.broadcasts) {
      auto* msg = std::get_if<Message>(&p);
      if (msg && msg->kind == MessageKind::Proposal && msg->block) {
        const Block base = *msg->block;
        std::vector<Block> variants = make_variants(base);
        if (variants.size() < 2) {
          remember_own(p);
          out.push_back({std::move(p), {}});
          continue;
        }
        equivocated_views_.insert(base.view);
        const auto slices = slice_recipients(variants.size());
        for (std::size_t i = 0; i < variants.size(); ++i) {
          out.push_back({Payload{Message::proposal(variants[i], id_)}, slices[i]});
          out.push_back({Payload{Message::vote(variants[i], id_)}, slices[i]});
        }
        continue;
      }
      if (msg && msg->kind == MessageKind::Vote && msg->block &&
          equivocated_views_.count(msg->block->view)) {
        continue;  // the per-slice votes above replace this
      }
      remember_own(p);
      out.push_back({std::move(p), {}});
    }
  }

  // One vote for every distinct block ever observed, own views included.
  void vote_everything(std::vector<SendIntent>& out) {
    for (const Block& b : block_bodies_) {
      const Hash h = hash_block(b);
      if (!voted_blocks_.insert(h).second) continue;
      out.push_back({Payload{Message::vote(b, id_)}, {}});
    }
  }

  // Nullify every view up to one past anything observed.
  void spam_nullifies(std::vector<SendIntent>& out) {
    const View top = std::max<View>(max_view_seen_ + 1, inner_.view());
    for (View v = 1; v <= top; ++v) {
      if (!nullified_views_.insert(v).second) continue;
      out.push_back({Payload{Message::nullify(v, id_)}, {}});
    }
  }

  void withhold(ReplicaOutput&& honest, std::vector<SendIntent>& out) {
    std::vector<ProcessorId> to = assignment_.withhold_to;
    if (to.empty()) {
      for (ProcessorId p = 0; p < params_.processors / 2; ++p)
        if (p != id_) to.push_back(p);
    }
    for (Payload& p : honest.broadcasts) {
      remember_own(p);
      out.push_back({std::move(p), to});
    }
  }

  void remember_own(const Payload& p) {
    if (const auto* msg = std::get_if<Message>(&p)) {
      if (msg->kind == MessageKind::Vote && msg->block)
        voted_blocks_.insert(hash_block(*msg->block));
      if (msg->kind == MessageKind::Nullify) nullified_views_.insert(msg->nullify_view);
    }
  }

  std::vector<std::vector<ProcessorId>> slice_recipients(std::size_t k) const {
    std::vector<ProcessorId> others;
    for (ProcessorId p = 0; p < params_.processors; ++p)
      if (p != id_) others.push_back(p);
    std::vector<std::vector<ProcessorId>> slices(k);
    for (std::size_t i = 0; i < others.size(); ++i)
      slices[i * k / others.size()].push_back(others[i]);
    return slices;
  }

  // Distinct same-view blocks with the same parent, made by dropping
  // suffixes of the transaction list. With an empty list there is only one
  // possible block and equivocation degrades to honesty.
  std::vector<Block> make_variants(const Block& base) const {
    std::vector<Block> variants{base};
    const std::size_t want = static_cast<std::size_t>(std::max(2, assignment_.equivocations));
    while (variants.size() < want && !variants.back().transactions.empty()) {
      Block next = variants.back();
      next.transactions.pop_back();
      variants.push_back(std::move(next));
    }
    return variants;
  }

  ProcessorId id_;
  ProtocolParams params_;
  AdversaryAssignment assignment_;
  TimeUs gst_;
  Replica inner_;

  View max_view_seen_ = 0;
  std::set<Hash> known_blocks_;
  std::vector<Block> block_bodies_;
  std::set<Hash> voted_blocks_;
  std::set<View> nullified_views_;
  std::set<View> equivocated_views_;
  bool progressed_ = false;
};

}  // namespace minimmit::adversary

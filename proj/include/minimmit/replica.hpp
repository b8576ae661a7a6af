#pragma once

// The per-processor state machine. One step() runs the whole rule body once,
// in a fixed order:
//
//   (a) forward certificates that became new since the last step
//   (b) propose, if leader of the current view and not yet done so
//   (c) vote on the valid proposal for the current view
//   (d) nullify on timeout (2*delta in a view without having voted)
//   (e) advance the view on a nullification, then on an advance-quorum
//       notarization -- casting a last vote first when still able
//   (f) nullify on mixed evidence that the view cannot finalise
//   (g) finalise newly L-notarized blocks whose ancestors are all present
//
// Later rules in the same step see the effects of earlier ones; in
// particular, after (e) advances the view, (f) and a second advancement
// check in (e) evaluate against the new view. Everything a replica
// broadcasts counts as immediately received by itself.
//
// A step is pure in its inputs: identical (state, now, inbox, new_txs)
// produce identical outputs. The driver is expected to activate a replica
// again at the same instant while steps report progress, which recovers the
// run-at-every-instant semantics without busy polling.

#include <cassert>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "minimmit/store.hpp"
#include "minimmit/types.hpp"

namespace minimmit {

using Payload = std::variant<Message, Certificate>;

struct ReplicaOutput {
  std::vector<Payload> broadcasts;   // in generation order
  std::vector<Block> finalized;      // newly finalised, ascending view
  std::vector<View> entered_views;   // views entered during this step
  std::optional<std::string> violation;  // fatal log incompatibility, surfaced, never reconciled
  bool progressed = false;
};

class Replica {
 public:
  Replica(ProcessorId id, ProtocolParams params)
      : id_(id), params_(params), store_(params) {}

  ProcessorId id() const { return id_; }
  View view() const { return view_; }
  TimeUs view_entry_time() const { return view_entry_time_; }
  bool sent_nullify() const { return sent_nullify_; }
  const std::optional<Block>& voted() const { return voted_; }
  const std::vector<Transaction>& log() const { return log_; }
  const std::optional<Block>& finalized_tip() const { return finalized_tip_; }
  const Store& store() const { return store_; }

  // Inserts one wire payload, queueing any certificate that became new for
  // forwarding by the next step.
  void ingest(const Payload& payload, TimeUs now) {
    std::vector<Certificate> fresh;
    if (const auto* msg = std::get_if<Message>(&payload)) {
      fresh = store_.insert(*msg, now);
    } else {
      fresh = store_.insert(std::get<Certificate>(payload), now);
    }
    for (auto& c : fresh) unforwarded_.push_back(std::move(c));
  }

  void add_transactions(std::span<const Transaction> txs) {
    for (const Transaction& tx : txs) mempool_.emplace(tx.id, tx);
  }

  ReplicaOutput step(TimeUs now, std::span<const Payload> inbox,
                     std::span<const Transaction> new_txs) {
    assert(now >= last_step_time_);
    last_step_time_ = now;
    add_transactions(new_txs);
    for (const Payload& p : inbox) ingest(p, now);

    ReplicaOutput out;
    forward_new_certificates(out);
    try_propose(now, out);
    try_vote(out);
    try_timeout_nullify(now, out);
    try_advance(now, out);
    try_mixed_nullify(out);
    try_finalize(out);

    out.progressed = !out.broadcasts.empty() || !out.entered_views.empty() ||
                     !out.finalized.empty() || !unforwarded_.empty() ||
                     out.violation.has_value();
    return out;
  }

  // Rule (a). Every certificate is forwarded exactly once, nullifications
  // first, then notarizations, in the order they became new.
  void forward_new_certificates(ReplicaOutput& out) {
    if (unforwarded_.empty()) return;
    std::vector<Certificate> pending = std::exchange(unforwarded_, {});
    for (const Certificate& c : pending)
      if (c.kind == CertKind::Nullification) out.broadcasts.emplace_back(c);
    for (const Certificate& c : pending)
      if (c.kind != CertKind::Nullification) out.broadcasts.emplace_back(c);
  }

  // Rule (b). A correct leader proposes exactly once per view: a second
  // proposal with a changed transaction set would be equivocation under the
  // one-leader-block validity clause.
  void try_propose(TimeUs now, ReplicaOutput& out) {
    if (lead(view_, params_) != id_) return;
    if (proposed_in_.count(view_)) return;
    proposed_in_.insert(view_);
    auto [parent, parent_view] = store_.select_parent(view_);
    const std::set<TxId> used = store_.ancestor_tx_ids(parent);
    Block b;
    b.view = view_;
    b.parent_hash = hash_block(parent);
    b.proposer = id_;
    for (const auto& [id, tx] : mempool_)
      if (!used.count(id)) b.transactions.push_back(tx);
    emit(Message::proposal(std::move(b), id_), now, out);
  }

  // Rule (c).
  void try_vote(ReplicaOutput& out) {
    if (voted_ || sent_nullify_) return;
    auto b = store_.valid_proposal(view_);
    if (!b) return;
    voted_ = *b;
    voted_hash_ = hash_block(*b);
    emit(Message::vote(std::move(*b), id_), last_step_time_, out);
  }

  // Rule (d). The driver guarantees an activation at exactly the timeout
  // instant, so >= is equivalent to the timer reading exactly 2*delta.
  void try_timeout_nullify(TimeUs now, ReplicaOutput& out) {
    if (sent_nullify_ || voted_) return;
    if (now - view_entry_time_ < 2 * params_.delta) return;
    sent_nullify_ = true;
    emit(Message::nullify(view_, id_), now, out);
  }

  // Rule (e). The nullification check runs first; the notarization check
  // then applies to whatever view is current afterwards. A replica that
  // never got to vote votes on the strength of the notarization itself just
  // before leaving -- without recording it, since entering the next view
  // resets the record anyway.
  void try_advance(TimeUs now, ReplicaOutput& out) {
    if (store_.has_nullification(view_)) advance(now, out);
    if (auto b = store_.m_notarized_block(view_)) {
      if (!voted_ && !sent_nullify_) emit(Message::vote(std::move(*b), id_), now, out);
      advance(now, out);
    }
  }

  // Rule (f). Only a replica that already voted and has not yet nullified
  // can be released by mixed evidence: an advance quorum of distinct signers
  // each nullifying this view or voting for some other block in it.
  void try_mixed_nullify(ReplicaOutput& out) {
    if (sent_nullify_ || !voted_) return;
    if (store_.mixed_quorum_count(view_, voted_hash_) < m_quorum(params_)) return;
    sent_nullify_ = true;
    emit(Message::nullify(view_, id_), last_step_time_, out);
  }

  // Rule (g). An L-notarized block is finalised once all its ancestors are
  // present; until then it stays pending and is re-checked every step. A
  // finalisation that would rewrite the log is a safety violation and is
  // surfaced instead of applied.
  void try_finalize(ReplicaOutput& out) {
    for (Block& b : store_.take_new_l_notarizations()) {
      const View v = b.view;
      auto it = pending_finalize_.find(v);
      if (it != pending_finalize_.end()) {
        if (!(it->second == b)) {
          out.violation = "two L-notarized blocks in view " + std::to_string(v);
          return;
        }
        continue;
      }
      pending_finalize_.emplace(v, std::move(b));
    }
    for (auto it = pending_finalize_.begin(); it != pending_finalize_.end();) {
      const Block& b = it->second;
      if (!store_.has_all_ancestors(b)) {
        ++it;
        continue;
      }
      std::vector<Transaction> extended = store_.extended_log(b);
      if (is_prefix(log_, extended)) {
        log_ = std::move(extended);
      } else if (!is_prefix(extended, log_)) {
        out.violation = "finalising view " + std::to_string(b.view) +
                        " would rewrite the log";
        return;
      }
      if (!finalized_tip_ || finalized_tip_->view < b.view) finalized_tip_ = b;
      out.finalized.push_back(b);
      it = pending_finalize_.erase(it);
    }
  }

 private:
  void advance(TimeUs now, ReplicaOutput& out) {
    view_ += 1;
    sent_nullify_ = false;
    voted_.reset();
    voted_hash_ = Hash{};
    view_entry_time_ = now;
    out.entered_views.push_back(view_);
  }

  // Broadcasts are received by the sender immediately.
  void emit(Message msg, TimeUs now, ReplicaOutput& out) {
    Payload p{std::move(msg)};
    ingest(p, now);
    out.broadcasts.push_back(std::move(p));
  }

  static bool is_prefix(const std::vector<Transaction>& a, const std::vector<Transaction>& b) {
    if (a.size() > b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i)
      if (a[i].id != b[i].id) return false;
    return true;
  }

  ProcessorId id_;
  ProtocolParams params_;
  Store store_;

  View view_ = 1;
  TimeUs view_entry_time_ = 0;  // realises the view timer
  bool sent_nullify_ = false;
  std::optional<Block> voted_;
  Hash voted_hash_{};
  std::set<View> proposed_in_;

  std::vector<Transaction> log_;  // append-only
  std::optional<Block> finalized_tip_;
  std::map<TxId, Transaction> mempool_;
  std::map<View, Block> pending_finalize_;
  std::vector<Certificate> unforwarded_;
  TimeUs last_step_time_ = 0;
};

}  // namespace minimmit

#pragma once

// The per-processor message store: every message and block ever received,
// plus the bookkeeping that turns raw messages into certificates.
//
// A certificate becomes "new" the first time its vote (or nullify) count
// crosses the threshold; each (kind, subject) is announced at most once per
// store lifetime, and the announced witness is the lexicographically least
// one: signers sorted ascending, truncated to exactly the threshold size.
// That makes forwarding deterministic and replayable.
//
// The store never forgets. Arbitrary Byzantine messages are accepted and
// recorded; whether they mean anything is decided by the queries, not at
// insertion time.

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <utility>
#include <vector>

#include "minimmit/types.hpp"

namespace minimmit {

class Store {
 public:
  explicit Store(ProtocolParams params) : params_(params) {
    params_.validate();
    // Initially the store holds genesis together with synthetic M- and
    // L-notarizations for it. They carry no signers, bypass the thresholds,
    // and are never announced as new (genesis is not re-broadcast).
    const Hash gh = genesis_hash();
    blocks_.emplace(gh, genesis_block());
    blocks_by_view_[0].insert(gh);
    m_notarized_[0].insert(gh);
    m_announce_time_.emplace(gh, 0);
    l_announce_time_.emplace(gh, 0);
  }

  const ProtocolParams& params() const { return params_; }

  // Inserts one message; returns every certificate that became new at this
  // timestamp, nullifications first, then M-, then L-notarizations.
  // Duplicate messages (same signer, same content) are idempotent.
  std::vector<Certificate> insert(const Message& msg, TimeUs now) {
    std::vector<Certificate> fresh;
    insert_message(msg, now, fresh);
    return fresh;
  }

  // Inserting a certificate is inserting its constituent signed messages.
  std::vector<Certificate> insert(const Certificate& cert, TimeUs now) {
    std::vector<Certificate> fresh;
    insert_certificate(cert, now, fresh);
    return fresh;
  }

  bool has_block(const Hash& h) const { return blocks_.count(h) != 0; }

  const Block* block(const Hash& h) const {
    auto it = blocks_.find(h);
    return it == blocks_.end() ? nullptr : &it->second;
  }

  bool has_nullification(View v) const {
    auto it = nullifiers_.find(v);
    return it != nullifiers_.end() && it->second.size() >= m_quorum(params_);
  }

  bool is_m_notarized(const Hash& h) const { return m_announce_time_.count(h) != 0; }

  // Canonically least block of view v that holds an advance-quorum of votes,
  // if any. Several candidates can exist only with Byzantine double votes.
  std::optional<Block> m_notarized_block(View v) const {
    auto it = m_notarized_.find(v);
    if (it == m_notarized_.end() || it->second.empty()) return std::nullopt;
    const Block* best = nullptr;
    for (const Hash& h : it->second) {
      const Block& b = blocks_.at(h);
      if (!best || canonical_less(b, *best)) best = &b;
    }
    return *best;
  }

  // Parent choice for a view-v proposal: the M-notarized block of the
  // greatest view below v, canonically least among ties. Total, because
  // genesis is always M-notarized.
  std::pair<Block, View> select_parent(View v) const {
    if (v == 0) throw std::invalid_argument("select_parent: view must be >= 1");
    auto it = m_notarized_.lower_bound(v);
    while (it != m_notarized_.begin()) {
      --it;
      if (it->first < v && !it->second.empty()) {
        const Block* best = nullptr;
        for (const Hash& h : it->second) {
          const Block& b = blocks_.at(h);
          if (!best || canonical_less(b, *best)) best = &b;
        }
        return {*best, it->first};
      }
    }
    return {genesis_block(), 0};
  }

  // The unique valid proposal for view v, if the store currently contains
  // one. Requires, all judged against present contents:
  //   (i)  exactly one view-v block authored by lead(v) -- an equivocating
  //        leader invalidates its own view the moment the second block is
  //        seen;
  //   (ii) an M-notarization for the parent, which must sit in an earlier
  //        view; and
  //   (iii) a nullification for every view strictly between parent and v.
  std::optional<Block> valid_proposal(View v) const {
    if (v == 0) return std::nullopt;
    auto it = leader_blocks_.find(v);
    if (it == leader_blocks_.end() || it->second.size() != 1) return std::nullopt;
    const Block& b = blocks_.at(*it->second.begin());
    auto parent_it = blocks_.find(b.parent_hash);
    if (parent_it == blocks_.end()) return std::nullopt;
    const Block& parent = parent_it->second;
    if (parent.view >= v) return std::nullopt;
    if (!is_m_notarized(b.parent_hash)) return std::nullopt;
    for (View w = parent.view + 1; w < v; ++w)
      if (!has_nullification(w)) return std::nullopt;
    return b;
  }

  // Blocks whose L-notarization became new since the last call, in
  // announcement order. Each block is handed out exactly once.
  std::vector<Block> take_new_l_notarizations() {
    return std::exchange(new_l_queue_, {});
  }

  // Distinct signers that either nullified view v or voted for a view-v
  // block other than `voted`; the evidence-of-no-progress count. Maintained
  // incrementally: every signer active in the view qualifies except those
  // whose entire activity is a single vote for `voted`.
  std::uint32_t mixed_quorum_count(View v, const Hash& voted) const {
    auto pit = participants_.find(v);
    if (pit == participants_.end()) return 0;
    std::uint32_t solo = 0;
    if (auto sit = solo_voters_.find(v); sit != solo_voters_.end()) {
      if (auto hit = sit->second.find(voted); hit != sit->second.end()) solo = hit->second;
    }
    return pit->second - solo;
  }

  // True when b and every ancestor of b are present, down to genesis.
  bool has_all_ancestors(const Block& b) const {
    const Block* cur = &b;
    while (!cur->is_genesis()) {
      auto it = blocks_.find(cur->parent_hash);
      if (it == blocks_.end()) return false;
      // A parent in an equal or later view cannot terminate at genesis.
      if (it->second.view >= cur->view) return false;
      cur = &it->second;
    }
    return true;
  }

  // b.Tr*: ancestor transaction sequences concatenated root-first, with
  // duplicate ids removed keeping the first occurrence.
  std::vector<Transaction> extended_log(const Block& b) const {
    std::vector<const Block*> chain;
    const Block* cur = &b;
    while (true) {
      chain.push_back(cur);
      if (cur->is_genesis()) break;
      cur = &blocks_.at(cur->parent_hash);
    }
    std::vector<Transaction> out;
    std::set<TxId> seen;
    for (auto rit = chain.rbegin(); rit != chain.rend(); ++rit) {
      for (const Transaction& tx : (*rit)->transactions) {
        if (seen.insert(tx.id).second) out.push_back(tx);
      }
    }
    return out;
  }

  // Ids of all transactions contained in stored ancestors of `parent`
  // (parent included). Stops at the first missing link; unknown deeper
  // ancestors simply do not contribute.
  std::set<TxId> ancestor_tx_ids(const Block& parent) const {
    std::set<TxId> ids;
    const Block* cur = &parent;
    while (true) {
      for (const Transaction& tx : cur->transactions) ids.insert(tx.id);
      if (cur->is_genesis()) break;
      auto it = blocks_.find(cur->parent_hash);
      if (it == blocks_.end() || it->second.view >= cur->view) break;
      cur = &it->second;
    }
    return ids;
  }

  // Introspection used by tests.
  std::size_t distinct_voters(const Hash& h) const {
    auto it = votes_.find(h);
    return it == votes_.end() ? 0 : it->second.size();
  }
  bool is_l_notarized(const Hash& h) const { return l_announce_time_.count(h) != 0; }
  std::optional<TimeUs> nullification_time(View v) const {
    auto it = null_announce_time_.find(v);
    if (it == null_announce_time_.end()) return std::nullopt;
    return it->second;
  }

 private:
  void insert_message(const Message& msg, TimeUs now, std::vector<Certificate>& fresh) {
    switch (msg.kind) {
      case MessageKind::Proposal:
      case MessageKind::Vote:
        if (!msg.block) return;
        insert_block_message(msg.kind, msg.signer, *msg.block, hash_block(*msg.block), now,
                             fresh);
        break;
      case MessageKind::Nullify:
        if (!seen_nullifies_.insert({msg.signer, msg.nullify_view}).second) return;
        record_nullify(msg.signer, msg.nullify_view, now, fresh);
        break;
    }
  }

  void insert_block_message(MessageKind kind, ProcessorId signer, const Block& b,
                            const Hash& h, TimeUs now, std::vector<Certificate>& fresh) {
    const auto key = std::make_tuple(static_cast<int>(kind), signer, h);
    if (!seen_block_msgs_.insert(key).second) return;
    register_block(b, h);
    if (kind == MessageKind::Vote) record_vote(signer, h, now, fresh);
  }

  void insert_certificate(const Certificate& cert, TimeUs now, std::vector<Certificate>& fresh) {
    std::vector<Certificate> local;
    if (cert.kind == CertKind::Nullification) {
      for (ProcessorId s : cert.signers) {
        if (!seen_nullifies_.insert({s, cert.nullified_view}).second) continue;
        record_nullify(s, cert.nullified_view, now, local);
      }
    } else {
      if (!cert.block) return;
      const Hash h = hash_block(*cert.block);  // hashed once for all signers
      for (ProcessorId s : cert.signers)
        insert_block_message(MessageKind::Vote, s, *cert.block, h, now, local);
      if (cert.signers.empty()) register_block(*cert.block, h);
    }
    // Keep line order across the aggregated announcements.
    for (int kind : {static_cast<int>(CertKind::Nullification),
                     static_cast<int>(CertKind::MNotarization),
                     static_cast<int>(CertKind::LNotarization)}) {
      for (const Certificate& c : local)
        if (static_cast<int>(c.kind) == kind) fresh.push_back(c);
    }
  }

  void register_block(const Block& b, const Hash& h) {
    if (blocks_.count(h)) return;
    blocks_.emplace(h, b);
    blocks_by_view_[b.view].insert(h);
    if (b.view >= 1 && b.proposer == lead(b.view, params_) && well_formed(b))
      leader_blocks_[b.view].insert(h);
  }

  // Well-formedness of a non-genesis block body: distinct transactions.
  static bool well_formed(const Block& b) {
    std::set<TxId> ids;
    for (const Transaction& tx : b.transactions)
      if (!ids.insert(tx.id).second) return false;
    return true;
  }

  void record_vote(ProcessorId signer, const Hash& h, TimeUs now,
                   std::vector<Certificate>& fresh) {
    auto& voters = votes_[h];
    if (!voters.insert(signer).second) return;
    const Block& b = blocks_.at(h);

    auto& my_votes = votes_by_view_[b.view][signer];
    const bool nullified_here = has_nullify_from(b.view, signer);
    if (my_votes.empty()) {
      if (!nullified_here) {
        ++participants_[b.view];
        ++solo_voters_[b.view][h];
      }
    } else if (my_votes.size() == 1 && !nullified_here) {
      --solo_voters_[b.view][*my_votes.begin()];  // a second block ends solo status
    }
    my_votes.insert(h);

    const auto n_votes = voters.size();
    if (n_votes >= advance_quorum(params_) && m_announce_time_.emplace(h, now).second) {
      m_notarized_[b.view].insert(h);
      fresh.push_back(make_cert(CertKind::MNotarization, b, voters, advance_quorum(params_)));
    }
    if (n_votes >= l_quorum(params_) && l_announce_time_.emplace(h, now).second) {
      fresh.push_back(make_cert(CertKind::LNotarization, b, voters, l_quorum(params_)));
      new_l_queue_.push_back(b);
    }
  }

  bool has_nullify_from(View v, ProcessorId signer) const {
    auto it = nullifiers_.find(v);
    return it != nullifiers_.end() && it->second.count(signer) != 0;
  }

  void record_nullify(ProcessorId signer, View v, TimeUs now,
                      std::vector<Certificate>& fresh) {
    auto& who = nullifiers_[v];
    if (!who.insert(signer).second) return;

    const std::set<Hash>* my_votes = nullptr;
    if (auto vit = votes_by_view_.find(v); vit != votes_by_view_.end()) {
      if (auto sit = vit->second.find(signer); sit != vit->second.end())
        my_votes = &sit->second;
    }
    if (!my_votes || my_votes->empty()) {
      ++participants_[v];
    } else if (my_votes->size() == 1) {
      --solo_voters_[v][*my_votes->begin()];
    }

    if (who.size() >= m_quorum(params_) && null_announce_time_.emplace(v, now).second) {
      Certificate c;
      c.kind = CertKind::Nullification;
      c.nullified_view = v;
      c.signers.assign(who.begin(), who.end());
      c.signers.resize(m_quorum(params_));
      fresh.push_back(std::move(c));
    }
  }

  static Certificate make_cert(CertKind kind, const Block& b,
                               const std::set<ProcessorId>& voters, std::uint32_t threshold) {
    Certificate c;
    c.kind = kind;
    c.block = b;
    c.signers.assign(voters.begin(), voters.end());
    c.signers.resize(threshold);  // least `threshold` signer indices
    return c;
  }

  ProtocolParams params_;

  std::map<Hash, Block> blocks_;
  std::map<View, std::set<Hash>> blocks_by_view_;
  std::map<View, std::set<Hash>> leader_blocks_;  // authored by lead(view), well-formed
  std::map<Hash, std::set<ProcessorId>> votes_;
  std::map<View, std::map<ProcessorId, std::set<Hash>>> votes_by_view_;
  std::map<View, std::set<ProcessorId>> nullifiers_;
  std::map<View, std::set<Hash>> m_notarized_;
  std::map<View, std::uint32_t> participants_;               // voted or nullified in the view
  std::map<View, std::map<Hash, std::uint32_t>> solo_voters_;  // single vote, no nullify

  // First time each certificate existed here; doubles as the announced-once
  // marker realising the "at no smaller timeslot" rule.
  std::map<Hash, TimeUs> m_announce_time_;
  std::map<Hash, TimeUs> l_announce_time_;
  std::map<View, TimeUs> null_announce_time_;

  std::vector<Block> new_l_queue_;

  std::set<std::tuple<int, ProcessorId, Hash>> seen_block_msgs_;
  std::set<std::pair<ProcessorId, View>> seen_nullifies_;
};

}  // namespace minimmit

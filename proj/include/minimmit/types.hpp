#pragma once

// Core protocol values: processors, views, transactions, blocks, messages,
// certificates, and the quorum arithmetic everything else is built on.
//
// Canonical block encoding (public contract -- golden hashes and trace files
// depend on it):
//
//   field   := u32-be length prefix, then payload bytes
//   block   := field(view as u64-be)
//            | field(tx ids, each u64-be, in sequence order)
//            | field(parent hash, 32 bytes)
//            | field(proposer as u32-be; 0xffffffff for genesis)
//
// Block identity and the lexicographic order used by parent selection are
// both defined over those bytes. Transaction payloads are deliberately not
// part of the encoding: ids are unique per run, so the id determines the
// transaction.

#include <algorithm>
#include <compare>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "minimmit/sha256.hpp"

namespace minimmit {

using ProcessorId = std::uint32_t;
using View = std::uint64_t;
using TxId = std::uint64_t;

// Simulated clock, in microseconds.
using TimeUs = std::int64_t;

inline constexpr ProcessorId kNoProposer = 0xffffffffu;

struct Transaction {
  TxId id = 0;
  std::string payload;

  friend bool operator==(const Transaction& a, const Transaction& b) {
    return a.id == b.id && a.payload == b.payload;
  }
};

// Which vote quorum lets a processor advance to the next view. Mini (2f+1)
// is the protocol itself; Large (n-f) is the comparison baseline where view
// progression needs the same quorum as finality.
enum class AdvanceQuorum { Mini, Large };

struct ProtocolParams {
  std::uint32_t processors = 0;  // n
  std::uint32_t fault_bound = 0; // f, with 5f+1 <= n
  TimeUs delta = 0;              // known post-GST delivery bound; view timeout is 2*delta
  AdvanceQuorum view_advance_quorum = AdvanceQuorum::Mini;

  void validate() const {
    if (processors == 0) throw std::invalid_argument("params: processors must be >= 1");
    if (5ull * fault_bound + 1 > processors)
      throw std::invalid_argument("params: need 5f+1 <= n");
    if (delta <= 0) throw std::invalid_argument("params: delta must be positive");
  }
};

// Mini quorum: 2f+1 votes (or nullifies).
inline std::uint32_t m_quorum(const ProtocolParams& p) { return 2 * p.fault_bound + 1; }

// Large quorum: n-f votes; sufficient to finalise.
inline std::uint32_t l_quorum(const ProtocolParams& p) { return p.processors - p.fault_bound; }

// Any large quorum and any mini quorum for one view overlap in at least
// (n-f)+(2f+1)-n = f+1 signers, i.e. at least one correct one.
inline std::uint32_t quorum_intersection_bound(const ProtocolParams& p) {
  return l_quorum(p) + m_quorum(p) - p.processors;
}

// Vote threshold for the certificates that license view progression.
inline std::uint32_t advance_quorum(const ProtocolParams& p) {
  return p.view_advance_quorum == AdvanceQuorum::Mini ? m_quorum(p) : l_quorum(p);
}

// Round-robin leader schedule. View 0 is genesis and has no leader.
inline ProcessorId lead(View v, const ProtocolParams& p) {
  if (v == 0) throw std::invalid_argument("lead: view 0 has no leader");
  return static_cast<ProcessorId>(v % p.processors);
}

struct Block {
  View view = 0;
  std::vector<Transaction> transactions;
  Hash parent_hash{};            // all-zero for genesis
  ProcessorId proposer = kNoProposer;

  bool is_genesis() const {
    return view == 0 && transactions.empty() && parent_hash == Hash{} && proposer == kNoProposer;
  }

  std::vector<std::uint8_t> encode() const {
    std::vector<std::uint8_t> out;
    out.reserve(4 * 4 + 8 + 8 * transactions.size() + 32 + 4);
    auto put_u32 = [&out](std::uint32_t v) {
      for (int i = 3; i >= 0; --i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    };
    auto put_u64 = [&out](std::uint64_t v) {
      for (int i = 7; i >= 0; --i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    };
    put_u32(8);
    put_u64(view);
    put_u32(static_cast<std::uint32_t>(8 * transactions.size()));
    for (const Transaction& tx : transactions) put_u64(tx.id);
    put_u32(32);
    out.insert(out.end(), parent_hash.begin(), parent_hash.end());
    put_u32(4);
    put_u32(proposer);
    return out;
  }

  friend bool operator==(const Block& a, const Block& b) {
    if (a.view != b.view || a.parent_hash != b.parent_hash || a.proposer != b.proposer ||
        a.transactions.size() != b.transactions.size())
      return false;
    for (std::size_t i = 0; i < a.transactions.size(); ++i)
      if (a.transactions[i].id != b.transactions[i].id) return false;
    return true;
  }
};

inline const Block& genesis_block() {
  static const Block g{};
  return g;
}

inline Hash hash_block(const Block& b) {
  const auto bytes = b.encode();
  return Sha256::digest(bytes);
}

inline const Hash& genesis_hash() {
  static const Hash h = hash_block(genesis_block());
  return h;
}

// Byte order of the canonical encodings; total over all well-formed blocks.
// Equivalent to comparing encode() outputs lexicographically, without
// materialising them.
inline std::strong_ordering canonical_order(const Block& a, const Block& b) {
  if (auto c = a.view <=> b.view; c != 0) return c;
  // The tx-id field carries a byte-length prefix, so a shorter sequence
  // compares first whatever its ids are.
  if (auto c = a.transactions.size() <=> b.transactions.size(); c != 0) return c;
  for (std::size_t i = 0; i < a.transactions.size(); ++i)
    if (auto c = a.transactions[i].id <=> b.transactions[i].id; c != 0) return c;
  if (auto c = a.parent_hash <=> b.parent_hash; c != 0) return c;
  return a.proposer <=> b.proposer;
}

inline bool canonical_less(const Block& a, const Block& b) {
  return canonical_order(a, b) < 0;
}

enum class MessageKind : std::uint8_t { Proposal, Vote, Nullify };

// One signed wire message. The signer field stands in for a signature: the
// simulator only ever lets a processor emit messages under its own identity,
// which is the perfect-cryptography assumption made executable.
struct Message {
  MessageKind kind = MessageKind::Nullify;
  ProcessorId signer = 0;
  std::optional<Block> block;  // Proposal and Vote
  View nullify_view = 0;       // Nullify

  View view() const { return block ? block->view : nullify_view; }

  static Message proposal(Block b, ProcessorId signer) {
    return Message{MessageKind::Proposal, signer, std::move(b), 0};
  }
  static Message vote(Block b, ProcessorId signer) {
    return Message{MessageKind::Vote, signer, std::move(b), 0};
  }
  static Message nullify(View v, ProcessorId signer) {
    return Message{MessageKind::Nullify, signer, std::nullopt, v};
  }
};

enum class CertKind : std::uint8_t { MNotarization, LNotarization, Nullification };

// A deduplicated set of matching votes or nullifies. Signers are kept sorted
// ascending so equal certificates are bit-identical and the lexicographic
// order below is arrival-independent.
struct Certificate {
  CertKind kind = CertKind::Nullification;
  std::optional<Block> block;  // M- and L-notarizations
  View nullified_view = 0;     // nullifications
  std::vector<ProcessorId> signers;

  View view() const { return block ? block->view : nullified_view; }
};

inline std::strong_ordering canonical_order(const Certificate& a, const Certificate& b) {
  if (auto c = static_cast<int>(a.kind) <=> static_cast<int>(b.kind); c != 0) return c;
  if (a.kind == CertKind::Nullification) {
    if (auto c = a.nullified_view <=> b.nullified_view; c != 0) return c;
  } else {
    if (auto c = hash_block(*a.block) <=> hash_block(*b.block); c != 0) return c;
  }
  return a.signers <=> b.signers;
}

inline bool canonical_less(const Certificate& a, const Certificate& b) {
  return canonical_order(a, b) < 0;
}

}  // namespace minimmit

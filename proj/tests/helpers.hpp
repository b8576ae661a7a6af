#pragma once

// Shared test utilities: a tiny deterministic generator and random protocol
// values for property-style checks.

#include <cstdint>
#include <string>
#include <vector>

#include "minimmit/types.hpp"

namespace testutil {

struct Rng {
  std::uint64_t state;
  explicit Rng(std::uint64_t seed) : state(seed) {}

  std::uint64_t next() {
    state += 0x9e3779b97f4a7c15ull;
    std::uint64_t x = state;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
  }

  std::uint64_t below(std::uint64_t bound) { return bound ? next() % bound : 0; }
};

inline minimmit::Block random_block(Rng& rng, const minimmit::ProtocolParams& params,
                                    std::uint64_t max_view = 6, std::uint64_t max_txs = 4) {
  minimmit::Block b;
  b.view = 1 + rng.below(max_view);
  b.proposer = minimmit::lead(b.view, params);
  const auto n_txs = rng.below(max_txs + 1);
  for (std::uint64_t i = 0; i < n_txs; ++i)
    b.transactions.push_back({rng.below(50), ""});
  // Distinct ids within the block.
  std::vector<minimmit::Transaction> uniq;
  for (const auto& tx : b.transactions) {
    bool dup = false;
    for (const auto& u : uniq) dup = dup || u.id == tx.id;
    if (!dup) uniq.push_back(tx);
  }
  b.transactions = std::move(uniq);
  for (auto& byte : b.parent_hash) byte = static_cast<std::uint8_t>(rng.below(4));
  return b;
}

inline minimmit::Certificate random_cert(Rng& rng, const minimmit::ProtocolParams& params) {
  minimmit::Certificate c;
  const auto k = rng.below(3);
  c.kind = static_cast<minimmit::CertKind>(k);
  if (c.kind == minimmit::CertKind::Nullification) {
    c.nullified_view = 1 + rng.below(5);
  } else {
    c.block = random_block(rng, params);
  }
  const auto n_signers = 1 + rng.below(params.processors);
  for (std::uint64_t i = 0; i < n_signers; ++i)
    c.signers.push_back(static_cast<minimmit::ProcessorId>(rng.below(params.processors)));
  std::sort(c.signers.begin(), c.signers.end());
  c.signers.erase(std::unique(c.signers.begin(), c.signers.end()), c.signers.end());
  return c;
}

}  // namespace testutil

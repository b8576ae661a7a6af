#include <doctest.h>

#include <algorithm>
#include <vector>

#include "helpers.hpp"
#include "minimmit/store.hpp"

using namespace minimmit;

namespace {

const ProtocolParams kP61{6, 1, 1000};

Block make_block(View v, std::vector<TxId> ids, const Hash& parent, ProcessorId proposer) {
  Block b;
  b.view = v;
  for (TxId id : ids) b.transactions.push_back({id, ""});
  b.parent_hash = parent;
  b.proposer = proposer;
  return b;
}

Block leader_block(View v, std::vector<TxId> ids, const Hash& parent) {
  return make_block(v, std::move(ids), parent, lead(v, kP61));
}

}  // namespace

TEST_CASE("votes cross the mini threshold with the least witness") {
  Store s(kP61);
  Block b = leader_block(1, {1}, genesis_hash());

  CHECK(s.insert(Message::vote(b, 4), 10).empty());
  CHECK(s.insert(Message::vote(b, 2), 11).empty());
  auto fresh = s.insert(Message::vote(b, 5), 12);
  REQUIRE(fresh.size() == 1);
  CHECK(fresh[0].kind == CertKind::MNotarization);
  CHECK(*fresh[0].block == b);
  CHECK(fresh[0].signers == std::vector<ProcessorId>{2, 4, 5});

  SUBCASE("duplicates are idempotent") {
    CHECK(s.insert(Message::vote(b, 4), 13).empty());
    CHECK(s.distinct_voters(hash_block(b)) == 3);
  }

  SUBCASE("the large threshold announces once, later votes are silent") {
    CHECK(s.insert(Message::vote(b, 0), 13).empty());
    auto l = s.insert(Message::vote(b, 1), 14);
    REQUIRE(l.size() == 1);
    CHECK(l[0].kind == CertKind::LNotarization);
    CHECK(l[0].signers == std::vector<ProcessorId>{0, 1, 2, 4, 5});
    CHECK(s.insert(Message::vote(b, 3), 15).empty());  // sixth voter, already announced
  }
}

TEST_CASE("nullification threshold") {
  Store s(kP61);
  CHECK(s.insert(Message::nullify(2, 0), 1).empty());
  CHECK(s.insert(Message::nullify(2, 3), 2).empty());
  CHECK_FALSE(s.has_nullification(2));
  auto fresh = s.insert(Message::nullify(2, 5), 3);
  REQUIRE(fresh.size() == 1);
  CHECK(fresh[0].kind == CertKind::Nullification);
  CHECK(fresh[0].nullified_view == 2);
  CHECK(fresh[0].signers == std::vector<ProcessorId>{0, 3, 5});
  CHECK(s.has_nullification(2));
  CHECK(s.nullification_time(2) == 3);
  // Announced exactly once.
  CHECK(s.insert(Message::nullify(2, 1), 4).empty());
}

TEST_CASE("inserting a whole certificate merges its votes") {
  Store s(kP61);
  Block b = leader_block(1, {4, 5}, genesis_hash());
  Certificate l;
  l.kind = CertKind::LNotarization;
  l.block = b;
  l.signers = {0, 1, 2, 3, 4};
  auto fresh = s.insert(l, 42);
  REQUIRE(fresh.size() == 2);
  CHECK(fresh[0].kind == CertKind::MNotarization);
  CHECK(fresh[0].signers == std::vector<ProcessorId>{0, 1, 2});
  CHECK(fresh[1].kind == CertKind::LNotarization);
  CHECK(s.is_m_notarized(hash_block(b)));
  CHECK(s.is_l_notarized(hash_block(b)));
  // Re-inserting the same certificate announces nothing further.
  CHECK(s.insert(l, 43).empty());
}

TEST_CASE("new L-notarizations are handed out exactly once") {
  Store s(kP61);
  Block b = leader_block(1, {9}, genesis_hash());
  for (ProcessorId p : {0, 1, 2, 3}) s.insert(Message::vote(b, p), 1);
  CHECK(s.take_new_l_notarizations().empty());
  s.insert(Message::vote(b, 4), 2);
  auto l = s.take_new_l_notarizations();
  REQUIRE(l.size() == 1);
  CHECK(l[0] == b);
  CHECK(s.take_new_l_notarizations().empty());
  s.insert(Message::vote(b, 5), 3);
  CHECK(s.take_new_l_notarizations().empty());
}

TEST_CASE("genesis certificates are synthetic and never re-announced") {
  Store s(kP61);
  CHECK(s.is_m_notarized(genesis_hash()));
  CHECK(s.is_l_notarized(genesis_hash()));
  CHECK(s.take_new_l_notarizations().empty());
  // Spurious votes for genesis change nothing.
  for (ProcessorId p = 0; p < 6; ++p)
    CHECK(s.insert(Message::vote(genesis_block(), p), 1).empty());
  CHECK(s.take_new_l_notarizations().empty());
}

TEST_CASE("select_parent") {
  Store s(kP61);

  SUBCASE("fresh store selects genesis") {
    auto [b, v] = s.select_parent(1);
    CHECK(v == 0);
    CHECK(b.is_genesis());
  }

  SUBCASE("greatest notarized view wins") {
    Block b2 = leader_block(2, {1}, genesis_hash());
    Block b3 = leader_block(3, {2}, genesis_hash());
    for (ProcessorId p : {0, 1, 2}) s.insert(Message::vote(b2, p), 1);
    for (ProcessorId p : {0, 1, 2}) s.insert(Message::vote(b3, p), 2);
    auto [b, v] = s.select_parent(5);
    CHECK(v == 3);
    CHECK(b == b3);
    // Views at or above the target are ignored.
    auto [b_low, v_low] = s.select_parent(3);
    CHECK(v_low == 2);
    CHECK(b_low == b2);
  }

  SUBCASE("tie inside one view resolves to the canonical least block") {
    // Two view-3 blocks can both be M-notarized only via double votes.
    Block bx = leader_block(3, {7}, genesis_hash());
    Block by = leader_block(3, {8}, genesis_hash());
    for (ProcessorId p : {0, 1, 2}) s.insert(Message::vote(bx, p), 1);
    for (ProcessorId p : {2, 3, 4}) s.insert(Message::vote(by, p), 2);
    auto [b, v] = s.select_parent(4);
    CHECK(v == 3);
    CHECK(b == bx);
    REQUIRE(s.m_notarized_block(3).has_value());
    CHECK(*s.m_notarized_block(3) == bx);
  }

  SUBCASE("monotone in store contents") {
    testutil::Rng rng(5);
    View last = 0;
    for (int i = 0; i < 200; ++i) {
      Block b = testutil::random_block(rng, kP61, 8, 2);
      b.parent_hash = genesis_hash();
      s.insert(Message::vote(b, static_cast<ProcessorId>(rng.below(6))), i);
      auto [parent, v] = s.select_parent(9);
      CHECK(v >= last);
      last = v;
    }
  }
}

TEST_CASE("valid_proposal") {
  Store s(kP61);
  Block b1 = leader_block(1, {1}, genesis_hash());

  SUBCASE("base case: leader block with notarized parent and empty gap") {
    s.insert(Message::proposal(b1, b1.proposer), 1);
    REQUIRE(s.valid_proposal(1).has_value());
    CHECK(*s.valid_proposal(1) == b1);
  }

  SUBCASE("a block embedded in a vote counts as contained") {
    s.insert(Message::vote(b1, 4), 1);
    REQUIRE(s.valid_proposal(1).has_value());
    CHECK(*s.valid_proposal(1) == b1);
  }

  SUBCASE("leader equivocation voids the view") {
    s.insert(Message::proposal(b1, b1.proposer), 1);
    Block b1b = leader_block(1, {2}, genesis_hash());
    s.insert(Message::proposal(b1b, b1b.proposer), 2);
    CHECK_FALSE(s.valid_proposal(1).has_value());
  }

  SUBCASE("skipped views must all be nullified") {
    // View 4 proposal whose parent is the view-2 block: view 3 is skipped.
    Block b2 = leader_block(2, {2}, genesis_hash());
    for (ProcessorId p : {0, 1, 2}) s.insert(Message::vote(b2, p), 1);
    Block b4 = leader_block(4, {3}, hash_block(b2));
    s.insert(Message::proposal(b4, b4.proposer), 2);
    CHECK_FALSE(s.valid_proposal(4).has_value());
    for (ProcessorId p : {1, 2, 3}) s.insert(Message::nullify(3, p), 3);
    REQUIRE(s.valid_proposal(4).has_value());
    CHECK(*s.valid_proposal(4) == b4);
  }

  SUBCASE("missing parent notarization") {
    Block b2 = leader_block(2, {2}, genesis_hash());
    Block b3 = leader_block(3, {3}, hash_block(b2));
    s.insert(Message::proposal(b2, b2.proposer), 1);  // known but not notarized
    s.insert(Message::proposal(b3, b3.proposer), 2);
    for (ProcessorId p : {0, 1, 2}) s.insert(Message::nullify(2, p), 3);
    CHECK_FALSE(s.valid_proposal(3).has_value());
  }

  SUBCASE("a block from a non-leader never validates") {
    Block rogue = make_block(1, {1}, genesis_hash(), 4);  // lead(1) is 1
    s.insert(Message::proposal(rogue, 4), 1);
    CHECK_FALSE(s.valid_proposal(1).has_value());
  }

  SUBCASE("a parent in a later view never validates") {
    Block b3 = leader_block(3, {3}, genesis_hash());
    for (ProcessorId p : {0, 1, 2}) s.insert(Message::vote(b3, p), 1);
    Block b2 = leader_block(2, {2}, hash_block(b3));
    s.insert(Message::proposal(b2, b2.proposer), 2);
    CHECK_FALSE(s.valid_proposal(2).has_value());
  }

  SUBCASE("a malformed leader block neither validates nor blocks the view") {
    Block dup = leader_block(1, {5, 5}, genesis_hash());  // repeated transaction
    s.insert(Message::proposal(dup, dup.proposer), 1);
    CHECK_FALSE(s.valid_proposal(1).has_value());
    s.insert(Message::proposal(b1, b1.proposer), 2);
    REQUIRE(s.valid_proposal(1).has_value());
    CHECK(*s.valid_proposal(1) == b1);
  }
}

TEST_CASE("mixed quorum counting") {
  Store s(kP61);
  Block mine = leader_block(1, {1}, genesis_hash());
  Block other = make_block(1, {2}, genesis_hash(), 1);
  const Hash my_hash = hash_block(mine);

  s.insert(Message::nullify(1, 2), 1);
  s.insert(Message::vote(other, 3), 2);
  s.insert(Message::vote(mine, 4), 3);  // vote for my block does not qualify
  CHECK(s.mixed_quorum_count(1, my_hash) == 2);
  s.insert(Message::vote(other, 4), 4);  // now 4 qualifies via the other block
  CHECK(s.mixed_quorum_count(1, my_hash) == 3);
  // A signer counts once even with both a nullify and a vote.
  s.insert(Message::vote(other, 2), 5);
  CHECK(s.mixed_quorum_count(1, my_hash) == 3);
  // Other views do not leak in.
  CHECK(s.mixed_quorum_count(2, my_hash) == 0);
}

TEST_CASE("mixed quorum count matches a brute-force recount") {
  // The store keeps the count incrementally; replay every insertion into a
  // naive model and compare after each step.
  testutil::Rng rng(123);
  for (int round = 0; round < 20; ++round) {
    Store s(kP61);
    std::vector<Block> blocks;
    for (TxId id = 0; id < 4; ++id) blocks.push_back(make_block(1, {id}, genesis_hash(), 1));
    std::map<ProcessorId, std::set<std::size_t>> voted;
    std::set<ProcessorId> nullified;
    for (int step = 0; step < 60; ++step) {
      const auto signer = static_cast<ProcessorId>(rng.below(6));
      if (rng.below(3) == 0) {
        s.insert(Message::nullify(1, signer), step);
        nullified.insert(signer);
      } else {
        const auto which = rng.below(blocks.size());
        s.insert(Message::vote(blocks[which], signer), step);
        voted[signer].insert(which);
      }
      for (std::size_t mine = 0; mine < blocks.size(); ++mine) {
        std::uint32_t expected = 0;
        for (ProcessorId p = 0; p < 6; ++p) {
          bool qualifies = nullified.count(p) != 0;
          if (auto it = voted.find(p); it != voted.end())
            for (std::size_t h : it->second) qualifies = qualifies || h != mine;
          expected += qualifies;
        }
        CHECK(s.mixed_quorum_count(1, hash_block(blocks[mine])) == expected);
      }
    }
  }
}

TEST_CASE("ancestor walks and extended logs") {
  Store s(kP61);
  Block b1 = leader_block(1, {1}, genesis_hash());
  Block b2 = leader_block(2, {2, 1}, hash_block(b1));  // repeats tx 1
  Block b3 = leader_block(3, {3}, hash_block(b2));

  s.insert(Message::proposal(b3, b3.proposer), 1);
  CHECK_FALSE(s.has_all_ancestors(b3));
  s.insert(Message::proposal(b1, b1.proposer), 2);
  CHECK_FALSE(s.has_all_ancestors(b3));
  s.insert(Message::proposal(b2, b2.proposer), 3);
  CHECK(s.has_all_ancestors(b3));

  auto log = s.extended_log(b3);
  REQUIRE(log.size() == 3);
  CHECK(log[0].id == 1);
  CHECK(log[1].id == 2);
  CHECK(log[2].id == 3);

  auto used = s.ancestor_tx_ids(b2);
  CHECK(used == std::set<TxId>{1, 2});
}

#include <doctest.h>

#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "minimmit/checker.hpp"
#include "minimmit/metrics.hpp"
#include "minimmit/sim.hpp"

using namespace minimmit;
using namespace minimmit::sim;

namespace {

ScenarioConfig local_config(std::uint32_t n, std::uint32_t f, TimeUs delta_us = 50'000) {
  ScenarioConfig c;
  c.params = ProtocolParams{n, f, delta_us};
  c.regions = {"local"};
  c.latency = {{LatencyEntry{1'000, 0}}};  // 1ms, no jitter
  c.horizon.views = 5;
  c.seed = 1;
  return c;
}

std::string summary_key(const WireSummary& w) {
  std::string k = std::to_string(static_cast<int>(w.kind)) + ":" +
                  std::to_string(w.view) + ":" + to_hex(w.block_hash) + ":" +
                  std::to_string(w.signer);
  for (ProcessorId s : w.signers) k += "," + std::to_string(s);
  return k;
}

}  // namespace

TEST_CASE("sample_latency") {
  std::vector<std::vector<LatencyEntry>> m = {{LatencyEntry{70'000, 10'000}}};
  SeededRng rng{42};

  SUBCASE("no jitter means the base") {
    m[0][0].jitter = 0;
    for (int i = 0; i < 10; ++i) CHECK(sample_latency(m, 0, 0, rng, i, 0) == 70'000);
  }

  SUBCASE("samples stay in [base, base+jitter]") {
    for (int i = 0; i < 500; ++i) {
      const TimeUs s = sample_latency(m, 0, 0, rng, i, i % 7);
      CHECK(s >= 70'000);
      CHECK(s <= 80'000);
    }
  }

  SUBCASE("same seed and keys give identical samples") {
    SeededRng rng2{42};
    for (int i = 0; i < 100; ++i)
      CHECK(sample_latency(m, 0, 0, rng, i, 3) == sample_latency(m, 0, 0, rng2, i, 3));
    SeededRng other{43};
    bool all_equal = true;
    for (int i = 0; i < 100; ++i)
      all_equal = all_equal &&
                  sample_latency(m, 0, 0, rng, i, 3) == sample_latency(m, 0, 0, other, i, 3);
    CHECK_FALSE(all_equal);
  }
}

TEST_CASE("honest fault-free run finalises the first block for everyone") {
  ScenarioConfig cfg = local_config(6, 0);
  Trace t = run(cfg);
  CHECK(t.end_reason == "views_reached");

  // The view-1 block receives votes from all six processors.
  std::map<Hash, std::set<ProcessorId>> voters;
  Hash view1_block{};
  for (const TraceEvent& e : t.events) {
    if (e.kind == TraceKind::Send && e.msg.kind == WireKind::Proposal && e.msg.view == 1)
      view1_block = e.msg.block_hash;
    if (e.kind == TraceKind::Send && e.msg.kind == WireKind::Vote)
      voters[e.msg.block_hash].insert(e.proc);
  }
  CHECK(view1_block != Hash{});
  CHECK(voters[view1_block].size() == 6);

  // Every processor finalises it.
  std::set<ProcessorId> finalisers;
  for (const TraceEvent& e : t.events)
    if (e.kind == TraceKind::Finalize && e.block_hash == view1_block)
      finalisers.insert(e.proc);
  CHECK(finalisers.size() == 6);
}

TEST_CASE("same config and seed reproduce the identical trace") {
  ScenarioConfig cfg = local_config(6, 1);
  cfg.latency = {{LatencyEntry{5'000, 4'000}}};
  cfg.seed = 7;
  cfg.tx_schedule.push_back({0, 0, {1, "a"}});
  const std::string one = to_jsonl(run(cfg));
  const std::string two = to_jsonl(run(cfg));
  CHECK(one == two);

  ScenarioConfig reseeded = cfg;
  reseeded.seed = 8;
  CHECK(to_jsonl(run(reseeded)) != one);
}

TEST_CASE("mini and large progression coincide when all delays are equal") {
  // Every vote lands at the same instant, so the 2f+1-th and the n-f-th
  // arrive together and the progression knob cannot change view latency.
  for (TimeUs base : {TimeUs{0}, TimeUs{4'000}}) {
    ScenarioConfig cfg = local_config(6, 1);
    cfg.latency = {{LatencyEntry{base, 0}}};
    cfg.horizon.views = 8;
    cfg.record.deliveries = false;
    cfg.params.view_advance_quorum = AdvanceQuorum::Mini;
    auto mini = minimmit::metrics::view_latency(run(cfg));
    cfg.params.view_advance_quorum = AdvanceQuorum::Large;
    auto large = minimmit::metrics::view_latency(run(cfg));
    REQUIRE_FALSE(mini.empty());
    REQUIRE_FALSE(large.empty());
    CHECK(mini.mean == doctest::Approx(large.mean).epsilon(0.01));
  }
}

TEST_CASE("deliveries respect the partial synchrony bound") {
  ScenarioConfig cfg = local_config(6, 1, 20'000);
  // Latency tail beyond delta: the clamp must hold it at the bound.
  cfg.latency = {{LatencyEntry{15'000, 30'000}}};
  cfg.horizon.views = 4;
  cfg.gst = 100'000;
  cfg.pre_gst_policy = PreGstPolicy::None;
  cfg.seed = 3;
  Trace t = run(cfg);

  std::map<std::pair<ProcessorId, std::string>, std::vector<TimeUs>> sends;
  for (const TraceEvent& e : t.events)
    if (e.kind == TraceKind::Send) sends[{e.proc, summary_key(e.msg)}].push_back(e.time);

  std::size_t checked = 0;
  std::map<std::pair<ProcessorId, std::string>, std::set<ProcessorId>> receivers;
  for (const TraceEvent& e : t.events) {
    if (e.kind != TraceKind::Deliver) continue;
    const auto it = sends.find({e.from, summary_key(e.msg)});
    REQUIRE(it != sends.end());
    REQUIRE(it->second.size() == 1);  // honest runs send each payload once
    const TimeUs sent = it->second[0];
    CHECK(e.time > sent);
    CHECK(e.time <= std::max(cfg.gst, sent) + cfg.params.delta);
    // No duplication: each broadcast reaches each recipient at most once.
    CHECK(receivers[{e.from, summary_key(e.msg)}].insert(e.proc).second);
    ++checked;
  }
  CHECK(checked > 100);
  // No loss: every broadcast whose delivery bound lies inside the trace
  // reaches all five other processors. Tail sends get cut off by the end
  // of the run and are exempt.
  for (const auto& [key, who] : receivers) {
    const TimeUs sent = sends.at(key)[0];
    if (std::max(cfg.gst, sent) + cfg.params.delta <= t.end_time) CHECK(who.size() == 5);
  }
}

TEST_CASE("silent leader views time out and progress resumes") {
  ScenarioConfig cfg = local_config(6, 1);
  cfg.corrupted = {1};  // leads view 1
  cfg.adversary[1] = {Strategy::Silent, 2, {}};
  cfg.horizon.views = 3;
  Trace t = run(cfg);
  CHECK(t.end_reason == "views_reached");

  // All correct processors nullify view 1 at exactly 2*delta, and enter
  // view 2 shortly after the nullification certificate circulates.
  std::map<ProcessorId, TimeUs> nullify_at, enter2_at;
  for (const TraceEvent& e : t.events) {
    if (e.kind == TraceKind::Send && e.msg.kind == WireKind::Nullify && e.msg.view == 1)
      nullify_at.emplace(e.proc, e.time);
    if (e.kind == TraceKind::EnterView && e.view == 2) enter2_at.emplace(e.proc, e.time);
  }
  REQUIRE(nullify_at.size() == 5);
  for (const auto& [p, tm] : nullify_at) CHECK(tm == 2 * cfg.params.delta);
  REQUIRE(enter2_at.size() == 5);
  for (const auto& [p, tm] : enter2_at) {
    CHECK(tm >= 2 * cfg.params.delta);
    CHECK(tm <= 2 * cfg.params.delta + 3'000);  // one or two 1ms hops
  }
}

TEST_CASE("max-delay policy holds everything until GST plus delta") {
  ScenarioConfig cfg = local_config(6, 1);
  cfg.gst = 500'000;
  cfg.pre_gst_policy = PreGstPolicy::MaxDelay;
  cfg.horizon.views = 4;
  Trace t = run(cfg);
  CHECK(t.end_reason == "views_reached");
  bool any_before = false;
  TimeUs first_delivery = -1;
  for (const TraceEvent& e : t.events) {
    if (e.kind != TraceKind::Deliver) continue;
    if (first_delivery < 0) first_delivery = e.time;
    any_before = any_before || e.time < cfg.gst;
  }
  CHECK_FALSE(any_before);
  CHECK(first_delivery == cfg.gst + cfg.params.delta);
}

TEST_CASE("time horizon stops the clock") {
  ScenarioConfig cfg = local_config(6, 1);
  cfg.horizon = {};
  cfg.horizon.time = 200'000;
  Trace t = run(cfg);
  CHECK(t.end_reason == "time_horizon");
  CHECK(t.end_time == 200'000);
  for (const TraceEvent& e : t.events) CHECK(e.time <= 200'000);
}

TEST_CASE("degenerate single-processor network terminates") {
  ScenarioConfig cfg = local_config(1, 0);
  cfg.horizon.views = 3;
  Trace t = run(cfg);
  CHECK(t.end_reason == "views_reached");
  std::size_t finalized = 0;
  for (const TraceEvent& e : t.events)
    if (e.kind == TraceKind::Finalize) ++finalized;
  CHECK(finalized >= 3);
}

TEST_CASE("config validation rejects bad scenarios") {
  ScenarioConfig cfg = local_config(6, 1);
  SUBCASE("too many corrupted") {
    cfg.corrupted = {0, 2};
    cfg.adversary[0] = {Strategy::Silent, 2, {}};
    cfg.adversary[2] = {Strategy::Silent, 2, {}};
    CHECK_THROWS(run(cfg));
  }
  SUBCASE("corrupted without a strategy") {
    cfg.corrupted = {2};
    CHECK_THROWS(run(cfg));
  }
  SUBCASE("matrix shape") {
    cfg.latency.clear();
    CHECK_THROWS(run(cfg));
  }
  SUBCASE("missing horizon") {
    cfg.horizon = {};
    CHECK_THROWS(run(cfg));
  }
}

TEST_CASE("trace jsonl round trips") {
  ScenarioConfig cfg = local_config(6, 1);
  cfg.corrupted = {2};
  cfg.adversary[2] = {Strategy::DoubleVoter, 2, {}};
  cfg.tx_schedule.push_back({10'000, 0, {5, "pay"}});
  cfg.horizon.views = 3;
  Trace t = run(cfg);
  const std::string text = to_jsonl(t);
  std::istringstream is(text);
  Trace back = read_jsonl(is);
  CHECK(to_jsonl(back) == text);
  CHECK(back.header.params.processors == 6);
  CHECK(back.header.corrupted == std::set<ProcessorId>{2});
  CHECK(back.events.size() == t.events.size());
  CHECK(back.end_reason == t.end_reason);
}

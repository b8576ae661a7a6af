#include <doctest.h>

#include <fstream>
#include <vector>

#include "minimmit/metrics.hpp"
#include "minimmit/sim.hpp"

using namespace minimmit;
using namespace minimmit::sim;
using namespace minimmit::metrics;

namespace {

TraceHeader synthetic_header(std::uint32_t n = 6) {
  TraceHeader h;
  h.params = ProtocolParams{n, 1, 50'000};
  h.regions = {"local"};
  h.assignment.assign(n, 0);
  h.latency = {{LatencyEntry{1'000, 0}}};
  return h;
}

void enter_all(Trace& t, View v, TimeUs at) {
  for (ProcessorId p = 0; p < t.header.params.processors; ++p) {
    TraceEvent e;
    e.time = at;
    e.kind = TraceKind::EnterView;
    e.proc = p;
    e.view = v;
    t.events.push_back(e);
  }
}

}  // namespace

TEST_CASE("view latency on a constructed trace") {
  Trace t;
  t.header = synthetic_header();
  // Warmup views are excluded; the measured ones step by exactly 100ms.
  enter_all(t, 1, 0);
  enter_all(t, 2, 0);
  enter_all(t, 3, 0);
  enter_all(t, 4, 100'000);
  enter_all(t, 5, 200'000);
  t.end_time = 300'000;
  t.end_reason = "views_reached";

  Summary s = view_latency(t);
  REQUIRE(s.count == 2);
  CHECK(s.mean == doctest::Approx(100.0));
  CHECK(s.stddev == doctest::Approx(0.0));
  CHECK(s.p50 == doctest::Approx(100.0));
  CHECK(s.p99 == doctest::Approx(100.0));
}

TEST_CASE("median is taken over correct processors only") {
  Trace t;
  t.header = synthetic_header();
  t.header.corrupted = {5};
  enter_all(t, 3, 0);
  enter_all(t, 4, 0);
  // Proc 5's absurd entry would skew a mean; it must not even count.
  for (TraceEvent& e : t.events)
    if (e.proc == 5) e.time = 10'000'000;
  // Shift view 4 for correct processors to 80ms.
  for (TraceEvent& e : t.events)
    if (e.view == 4 && e.proc != 5) e.time = 80'000;
  t.end_time = 200'000;
  Summary s = view_latency(t);
  REQUIRE(s.count == 1);
  CHECK(s.mean == doctest::Approx(80.0));
}

TEST_CASE("degenerate traces give the empty marker") {
  Trace t;
  t.header = synthetic_header();
  enter_all(t, 1, 0);
  t.end_time = 10;
  CHECK(view_latency(t).empty());
  CHECK(finalization_latency(t).empty());
  CHECK(end_to_end_tx_latency(t).empty());
}

TEST_CASE("finalization latency on a constructed trace") {
  Trace t;
  t.header = synthetic_header();
  Hash b{};
  b[0] = 9;
  TraceEvent prop;
  prop.time = 10'000;
  prop.kind = TraceKind::Send;
  prop.proc = 3;
  prop.msg.kind = WireKind::Proposal;
  prop.msg.view = 3;
  prop.msg.block_hash = b;
  prop.msg.parent = genesis_hash();
  prop.msg.tx_ids = {1};
  t.events.push_back(prop);
  TimeUs at = 40'000;
  for (ProcessorId p = 0; p < 6; ++p) {
    TraceEvent e;
    e.time = at;
    e.kind = TraceKind::Finalize;
    e.proc = p;
    e.view = 3;
    e.block_hash = b;
    t.events.push_back(e);
    at += 2'000;
  }
  t.end_time = 100'000;
  Summary s = finalization_latency(t);
  REQUIRE(s.count == 1);
  CHECK(s.mean == doctest::Approx(34.0));  // lower median 44ms minus 10ms

  SUBCASE("e2e latency composes injection to inclusion") {
    TraceEvent tx;
    tx.time = 5'000;
    tx.kind = TraceKind::TxArrival;
    tx.proc = 0;
    tx.tx_id = 1;
    t.events.insert(t.events.begin(), tx);
    Summary e2e = end_to_end_tx_latency(t);
    REQUIRE(e2e.count == 1);
    CHECK(e2e.mean == doctest::Approx(39.0));  // 44ms inclusion minus 5ms injection
  }
}

TEST_CASE("summaries and report shapes from a real run") {
  ScenarioConfig cfg;
  cfg.params = ProtocolParams{6, 1, 50'000};
  cfg.regions = {"east", "west"};
  cfg.latency = {{{2'000, 500}, {30'000, 5'000}}, {{30'000, 5'000}, {2'000, 500}}};
  cfg.horizon.views = 10;
  cfg.seed = 9;
  cfg.tx_schedule.push_back({0, 0, {1, ""}});
  Trace t = run(cfg);

  MetricsReport r = compute(t);
  CHECK_FALSE(r.view.empty());
  CHECK_FALSE(r.finalization.empty());
  CHECK(r.view.mean > 0);
  CHECK(r.finalization.mean > 0);
  CHECK(r.view_by_region.count("east") == 1);
  CHECK(r.view_by_region.count("west") == 1);

  auto j = r.to_json();
  CHECK(j.at("view_latency_ms").at("count").get<std::size_t>() == r.view.count);
  const std::string csv = r.to_csv();
  CHECK(csv.find("view_latency,all,mean_ms") != std::string::npos);
  CHECK(csv.find("finalization_latency,all,") != std::string::npos);
}

TEST_CASE("mini progression beats large progression on the ten-region preset") {
  std::ifstream in(std::string(MINIMMIT_SOURCE_DIR) + "/presets/wan_50.json");
  REQUIRE(in.good());
  nlohmann::json j;
  in >> j;
  ScenarioConfig cfg = config_from_json(j);
  cfg.record.deliveries = false;
  cfg.seed = 3;
  cfg.horizon.views = 10;
  cfg.params.view_advance_quorum = AdvanceQuorum::Mini;
  Summary mini = view_latency(run(cfg));
  cfg.params.view_advance_quorum = AdvanceQuorum::Large;
  Summary large = view_latency(run(cfg));
  REQUIRE_FALSE(mini.empty());
  REQUIRE_FALSE(large.empty());
  CHECK(mini.mean < large.mean);
}

TEST_CASE("percentiles use the nearest rank") {
  std::vector<double> xs;
  for (int i = 1; i <= 100; ++i) xs.push_back(i);
  Summary s = summarize(xs);
  CHECK(s.p50 == doctest::Approx(50.0));
  CHECK(s.p99 == doctest::Approx(99.0));
  CHECK(s.mean == doctest::Approx(50.5));
}

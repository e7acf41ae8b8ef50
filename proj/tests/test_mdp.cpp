#include <doctest.h>

#include <unistd.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fareflow/mdp.hpp"
#include "fareflow/rng.hpp"
#include "fareflow/sim.hpp"
#include "fareflow/tilecoding.hpp"

using fareflow::Rng;
using fareflow::geo::BoundingBox;
using fareflow::geo::CodingConfig;
using fareflow::geo::DayKind;
using fareflow::geo::LatLon;
using fareflow::geo::TileCoder;
using namespace fareflow::mdp;

namespace {

double logit(double p) { return std::log(p / (1.0 - p)); }

TileCoder test_coder() {
    CodingConfig cfg;
    cfg.bbox = BoundingBox{30.50, 30.80, 114.10, 114.45};
    return TileCoder(cfg);
}

// A trip whose delta_ecr at `a` equals exactly `delta`, solved in closed
// form from the logit-shift demand model.
fareflow::sim::TripRecord trip_with_delta(double base, double a, double delta,
                                          double fare, int travel_slots) {
    fareflow::sim::TripRecord t;
    t.trip_id = 1;
    t.origin = LatLon{30.60, 114.20};
    t.dest = LatLon{30.70, 114.35};
    t.request_minute = 600;
    t.est_travel_slots = travel_slots;
    t.fare = fare;
    t.base_ecr = base;
    t.price_sensitivity = (logit(base + delta) - logit(base)) / (1.0 - a);
    t.cr = 0.8;
    t.historical_action = a;
    return t;
}

std::string temp_path(const char* name) {
    return std::string("/tmp/fareflow_mdp_") + name + "_" +
           std::to_string(::getpid());
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in);
    return std::string(std::istreambuf_iterator<char>(in),
                       std::istreambuf_iterator<char>());
}

}  // namespace

TEST_SUITE("mdp") {

TEST_CASE("discounted reward reproduces the worked example") {
    // fare 40 over T = 4 sub-segments, gamma 0.9, demand shift 0.15:
    // 0.15 * (10 + 9 + 8.1 + 7.29) = 5.1585.
    const auto t = trip_with_delta(0.3, 0.8, 0.15, 40.0, 4);
    CHECK(std::abs(discounted_reward(t, 0.8, 0.9) - 5.1585) < 1e-9);
}

TEST_CASE("discounted reward matches an independent evaluation") {
    Rng rng(5);
    for (int i = 0; i < 200; ++i) {
        const double base = rng.uniform(0.1, 0.6);
        const double sens = rng.uniform(0.5, 8.0);
        const double gamma = rng.uniform(0.5, 1.0);
        const double fare = rng.uniform(2.0, 80.0);
        const int T = 1 + static_cast<int>(rng.uniform_index(12));
        fareflow::sim::TripRecord t;
        t.fare = fare;
        t.base_ecr = base;
        t.price_sensitivity = sens;
        t.est_travel_slots = T;

        for (double a : fareflow::sim::kActionMenu) {
            const double delta =
                1.0 / (1.0 + std::exp(-(logit(base) + sens * (1.0 - a)))) - base;
            double series = 0.0;
            for (int k = 0; k < T; ++k) series += std::pow(gamma, k) * fare / T;
            const double want = (a == 1.0 ? 0.0 : delta) * series;
            CHECK(discounted_reward(t, a, gamma) ==
                  doctest::Approx(want).epsilon(1e-12));
        }
        // No discount earns exactly zero, always.
        CHECK(discounted_reward(t, 1.0, gamma) == 0.0);
    }
}

TEST_CASE("penalized reward subtracts the exact cost term") {
    const auto t = trip_with_delta(0.25, 0.85, 0.2, 30.0, 3);
    for (double a : fareflow::sim::kActionMenu) {
        const double plain = discounted_reward(t, a, 0.9);
        CHECK(penalized_reward(t, a, 0.9, 1.5) ==
              doctest::Approx(plain - 1.5 * (1.0 - a) * 30.0).epsilon(1e-12));
    }
    CHECK(penalized_reward(t, 1.0, 0.9, 7.0) == 0.0);
}

TEST_CASE("episode boundary and arrival slot follow the clock rules") {
    struct Case {
        int minute;
        int slots;
        bool done;
        int arrival;
    };
    // Boundary: the ride interval (request, request + 10T] crossing 03:00,
    // today (minute 180) or tomorrow (minute 1620 when starting after 03:00).
    const Case cases[] = {
        {170, 1, true, 6},     // lands exactly on 03:00
        {179, 1, true, 6},     // crosses it mid-ride
        {180, 1, false, 6},    // starts at the boundary; next one is tomorrow
        {181, 1, false, 6},
        {0, 1, false, 0},      // 00:10, well before 03:00
        {100, 24, true, 11},   // long ride over the boundary
        {600, 2, false, 20},   // midday
        {1430, 2, false, 0},   // wraps midnight, still before 03:00
        {1610, 1, true, 6},    // reaches next-day 03:00 exactly
        {1615, 1, true, 6},    // crosses next-day 03:00
        {1439, 18, false, 5},  // 23:59 + 180 min lands 02:59, shy of it
        {1439, 19, true, 6},   // one more sub-segment crosses it
    };
    for (const Case& c : cases) {
        CAPTURE(c.minute);
        CAPTURE(c.slots);
        CHECK(crosses_episode_boundary(c.minute, c.slots) == c.done);
        CHECK(arrival_slot(c.minute, c.slots) ==
              ((c.minute + 10 * c.slots) / 30) % 48);
        CHECK(arrival_slot(c.minute, c.slots) == c.arrival);
    }
}

TEST_CASE("transitions carry states, rewards, and terminal flags") {
    const TileCoder coder = test_coder();
    std::vector<fareflow::sim::TripRecord> trips;
    trips.push_back(trip_with_delta(0.3, 0.8, 0.15, 40.0, 4));   // midday
    trips.push_back(trip_with_delta(0.4, 0.75, 0.1, 12.0, 1));
    trips.back().trip_id = 2;
    trips.back().request_minute = 175;  // crosses 03:00 -> terminal
    trips.back().day_kind = DayKind::weekend;

    const ReplayBuffer buf =
        build_transitions(trips, coder, 0.9, RewardMode::plain);
    REQUIRE(buf.size() == 2);
    CHECK(buf.original_size() == 2);
    CHECK(buf.skipped_trips() == 0);
    CHECK(buf.gamma() == 0.9);
    CHECK(buf.reward_mode() == RewardMode::plain);

    const Transition& a = buf.transitions()[0];
    CHECK(a.trip_id == 1);
    CHECK(a.action_index == 1);  // 0.8
    CHECK(a.s.cell_id == coder.grids().locate(trips[0].origin, 0).cell_id);
    CHECK(a.s_next.cell_id == coder.grids().locate(trips[0].dest, 0).cell_id);
    CHECK(a.s.slot.index == 20);
    CHECK(a.s_next.slot.index == 21);  // 600 + 40 minutes
    CHECK(a.s.slot.day_kind == DayKind::weekday);
    CHECK(!a.done);
    CHECK(a.reward == doctest::Approx(5.1585).epsilon(1e-9));
    CHECK(a.reward == a.rewards_by_action[1]);
    CHECK(a.rewards_by_action[fareflow::sim::kNoDiscountIndex] == 0.0);
    CHECK(a.fare == 40.0);
    CHECK(a.est_travel_slots == 4);

    const Transition& b = buf.transitions()[1];
    CHECK(b.done);
    CHECK(b.s.slot.day_kind == DayKind::weekend);
    for (int k = 0; k + 1 < fareflow::sim::kNumActions; ++k) {
        CHECK(b.rewards_by_action[static_cast<std::size_t>(k)] >
              b.rewards_by_action[static_cast<std::size_t>(k + 1)]);
    }
}

TEST_CASE("malformed or out-of-box trips are skipped and counted") {
    const TileCoder coder = test_coder();
    std::vector<fareflow::sim::TripRecord> trips;
    trips.push_back(trip_with_delta(0.3, 0.8, 0.15, 40.0, 4));  // good
    trips.push_back(trips[0]);
    trips.back().fare = 0.0;  // degenerate
    trips.push_back(trips[0]);
    trips.back().origin = LatLon{31.5, 114.2};  // outside the bbox
    trips.push_back(trips[0]);
    trips.back().historical_action = 0.77;  // off the menu
    trips.push_back(trips[0]);
    trips.back().base_ecr = 1.0;  // logit undefined

    const ReplayBuffer buf =
        build_transitions(trips, coder, 0.9, RewardMode::plain);
    CHECK(buf.size() == 1);
    CHECK(buf.skipped_trips() == 4);
    CHECK_THROWS_AS(build_transitions(trips, coder, 0.0, RewardMode::plain),
                    std::invalid_argument);
    CHECK_THROWS_AS(build_transitions(trips, coder, 1.1, RewardMode::plain),
                    std::invalid_argument);
}

TEST_CASE("context stats aggregate the trailing window per day kind") {
    const TileCoder coder = test_coder();
    const LatLon origin{30.60, 114.20};
    const LatLon dest{30.70, 114.35};
    const std::int64_t o_cell = coder.grids().locate(origin, 0).cell_id;
    const std::int64_t d_cell = coder.grids().locate(dest, 0).cell_id;
    REQUIRE(o_cell != d_cell);

    // Two weekday days; each has one trip requesting in slot 18 (arriving in
    // slot 18: 540+20 = 560) and one in slot 19 (arriving in 19: 595).
    std::vector<fareflow::sim::TripRecord> trips;
    for (int day = 0; day < 2; ++day) {
        auto t1 = trip_with_delta(0.3, 0.8, 0.15, 40.0, 2);  // 20 minutes
        t1.request_minute = 540;
        t1.day_index = day;
        auto t2 = trip_with_delta(0.4, 0.9, 0.1, 10.0, 2);
        t2.request_minute = 575;
        t2.day_index = day;
        trips.push_back(t1);
        trips.push_back(t2);
    }

    const ContextStats stats = ContextStats::from_trips(trips, coder);

    // Oracle: per-day averages. Origin cell sees 1 inquiry at slot 18 and 1
    // at slot 19 per day; dest cell sees 1 arrival at 19 and 1 at 20 per day.
    const double ecr1 = 0.3 + 0.15;  // delta solved exactly in the fixture
    const double ecr2 = 0.4 + 0.1;
    const auto raw20 = stats.raw_features(o_cell, 20, DayKind::weekday);
    CHECK(raw20[0] == doctest::Approx(2.0).epsilon(1e-12));  // slots 18+19
    CHECK(raw20[1] ==
          doctest::Approx(ecr1 * 0.8 + ecr2 * 0.8).epsilon(1e-12));
    CHECK(raw20[2] == 0.0);
    CHECK(raw20[3] == doctest::Approx(-2.0).epsilon(1e-12));

    const auto raw19 = stats.raw_features(o_cell, 19, DayKind::weekday);
    CHECK(raw19[0] == doctest::Approx(1.0).epsilon(1e-12));  // slot 18 only

    const auto draw20 = stats.raw_features(d_cell, 20, DayKind::weekday);
    CHECK(draw20[0] == 0.0);
    CHECK(draw20[2] == doctest::Approx(2.0).epsilon(1e-12));  // arrivals 18+19
    CHECK(draw20[3] == doctest::Approx(2.0).epsilon(1e-12));
    const auto draw21 = stats.raw_features(d_cell, 21, DayKind::weekday);
    CHECK(draw21[2] == doctest::Approx(1.0).epsilon(1e-12));  // slot 19 only

    // Weekend never saw data: raw features are zero there.
    const auto wknd = stats.raw_features(o_cell, 20, DayKind::weekend);
    for (double x : wknd) CHECK(x == 0.0);

    // Normalization: z-scores use the exposed moments.
    const auto f = stats.features(o_cell, 20, DayKind::weekday);
    for (int d = 0; d < kContextDim; ++d) {
        const auto i = static_cast<std::size_t>(d);
        CHECK(f[i] == doctest::Approx((raw20[i] - stats.mean()[i]) /
                                      stats.stddev()[i])
                          .epsilon(1e-12));
    }

    ContextStats copy = stats;
    copy.set_moments({0, 0, 0, 0}, {1, 1, 1, 1});
    const auto rawf = copy.features(o_cell, 20, DayKind::weekday);
    for (int d = 0; d < kContextDim; ++d) {
        CHECK(rawf[static_cast<std::size_t>(d)] ==
              doctest::Approx(raw20[static_cast<std::size_t>(d)])
                  .epsilon(1e-12));
    }
    CHECK_THROWS_AS(copy.set_moments({0, 0, 0, 0}, {1, 0, 1, 1}),
                    std::invalid_argument);
}

TEST_CASE("make_state locates, clamps, and normalizes") {
    const TileCoder coder = test_coder();
    std::vector<fareflow::sim::TripRecord> trips = {
        trip_with_delta(0.3, 0.8, 0.15, 40.0, 4)};
    const ContextStats stats = ContextStats::from_trips(trips, coder);

    const LatLon p{30.60, 114.20};
    const SpatioTemporalState s = make_state(p, 20, DayKind::weekday, coder, stats);
    CHECK(s.cell_id == coder.grids().locate(p, 0).cell_id);
    CHECK(s.slot.index == 20);
    CHECK(s.slot.day_kind == DayKind::weekday);
    CHECK(coder.config().bbox.contains(s.loc));
    const auto want = stats.features(s.cell_id, 20, DayKind::weekday);
    for (int d = 0; d < kContextDim; ++d) {
        CHECK(s.context[static_cast<std::size_t>(d)] ==
              want[static_cast<std::size_t>(d)]);
    }
    CHECK_THROWS_AS(
        make_state(LatLon{31.2, 114.2}, 20, DayKind::weekday, coder, stats),
        std::out_of_range);
}

TEST_CASE("observed actions reflect exactly what the log contains") {
    const TileCoder coder = test_coder();
    std::vector<fareflow::sim::TripRecord> trips;
    for (double a : {0.8, 0.8, 0.95}) {
        auto t = trip_with_delta(0.3, 0.8, 0.15, 40.0, 4);
        t.historical_action = a;
        t.trip_id = trips.size();
        trips.push_back(t);
    }
    const ReplayBuffer buf =
        build_transitions(trips, coder, 0.9, RewardMode::plain);
    const auto& s = buf.transitions()[0].s;
    CHECK(buf.observed_actions(s) == std::vector<int>{1, 4});

    SpatioTemporalState unseen = s;
    unseen.slot.index = (s.slot.index + 5) % 48;
    CHECK(buf.observed_actions(unseen).empty());
}

TEST_CASE("relabeled transitions evict in a ring over the tail") {
    const TileCoder coder = test_coder();
    std::vector<fareflow::sim::TripRecord> trips;
    for (int i = 0; i < 3; ++i) {
        auto t = trip_with_delta(0.3, 0.8, 0.15, 40.0, 4);
        t.trip_id = static_cast<std::uint64_t>(i);
        trips.push_back(t);
    }
    ReplayBuffer buf = build_transitions(trips, coder, 0.9, RewardMode::plain);
    REQUIRE(buf.original_size() == 3);

    auto relabeled = [&](int action, std::uint64_t id) {
        Transition t = buf.transitions()[0];
        t.action_index = action;
        t.trip_id = id;
        return t;
    };

    // Fill the tail: capacity is twice the original size.
    buf.append_relabeled(relabeled(0, 100));
    buf.append_relabeled(relabeled(2, 101));
    buf.append_relabeled(relabeled(3, 102));
    CHECK(buf.size() == 6);
    CHECK(buf.observed_actions(buf.transitions()[0].s) ==
          std::vector<int>{0, 1, 2, 3});

    // The next append overwrites the oldest relabel (action 0, id 100), so
    // action 0 disappears from the index and slot 3 holds the new record.
    buf.append_relabeled(relabeled(4, 103));
    CHECK(buf.size() == 6);
    CHECK(buf.transitions()[3].trip_id == 103);
    CHECK(buf.observed_actions(buf.transitions()[0].s) ==
          std::vector<int>{1, 2, 3, 4});

    // Two more advance the ring over slots 4 and 5; a third wraps back to 3.
    buf.append_relabeled(relabeled(0, 104));
    buf.append_relabeled(relabeled(0, 105));
    CHECK(buf.size() == 6);
    CHECK(buf.transitions()[4].trip_id == 104);
    CHECK(buf.transitions()[5].trip_id == 105);
    CHECK(buf.transitions()[3].trip_id == 103);
    buf.append_relabeled(relabeled(0, 106));
    CHECK(buf.transitions()[3].trip_id == 106);

    ReplayBuffer empty;
    CHECK_THROWS_AS(empty.append_relabeled(relabeled(0, 1)), std::logic_error);
}

TEST_CASE("buffer files round trip byte-identically") {
    const TileCoder coder = test_coder();
    std::vector<fareflow::sim::TripRecord> trips;
    Rng rng(77);
    for (int i = 0; i < 50; ++i) {
        auto t = trip_with_delta(rng.uniform(0.15, 0.5), 0.85,
                                 rng.uniform(0.05, 0.2), rng.uniform(3, 60),
                                 1 + static_cast<int>(rng.uniform_index(6)));
        t.trip_id = static_cast<std::uint64_t>(i);
        t.request_minute = static_cast<int>(rng.uniform_index(1440));
        t.historical_action =
            fareflow::sim::kActionMenu[rng.uniform_index(6)];
        t.day_kind = i % 3 == 0 ? DayKind::weekend : DayKind::weekday;
        t.day_index = i % 3 == 0 ? 1 : 0;
        trips.push_back(t);
    }
    const ReplayBuffer buf =
        build_transitions(trips, coder, 0.85, RewardMode::penalized, 0.7);

    const std::string p1 = temp_path("buf1.bin");
    const std::string p2 = temp_path("buf2.bin");
    buf.save(p1);
    const ReplayBuffer loaded = ReplayBuffer::load(p1);
    loaded.save(p2);
    CHECK(slurp(p1) == slurp(p2));

    CHECK(loaded.size() == buf.size());
    CHECK(loaded.original_size() == buf.original_size());
    CHECK(loaded.gamma() == buf.gamma());
    CHECK(loaded.reward_mode() == buf.reward_mode());
    CHECK(loaded.alpha() == buf.alpha());
    for (std::size_t i = 0; i < buf.size(); ++i) {
        const Transition& a = buf.transitions()[i];
        const Transition& b = loaded.transitions()[i];
        CHECK(a.trip_id == b.trip_id);
        CHECK(a.action_index == b.action_index);
        CHECK(a.reward == b.reward);
        CHECK(a.done == b.done);
        CHECK(a.s.cell_id == b.s.cell_id);
        CHECK(a.s.slot.index == b.s.slot.index);
        CHECK(a.s.context == b.s.context);
        CHECK(a.s_next.cell_id == b.s_next.cell_id);
        CHECK(a.rewards_by_action == b.rewards_by_action);
        CHECK(a.fare == b.fare);
        CHECK(a.cr == b.cr);
    }
    // The observed-action index is rebuilt, not trusted from the file.
    CHECK(loaded.observed_actions(buf.transitions()[0].s) ==
          buf.observed_actions(buf.transitions()[0].s));
    // Context moments survive.
    CHECK(loaded.stats().mean() == buf.stats().mean());
    CHECK(loaded.stats().stddev() == buf.stats().stddev());

    std::remove(p1.c_str());
    std::remove(p2.c_str());

    const std::string bad = temp_path("bad.bin");
    {
        std::ofstream out(bad, std::ios::binary);
        out << "NOTABUFFER";
    }
    CHECK_THROWS_AS(ReplayBuffer::load(bad), std::runtime_error);
    std::remove(bad.c_str());
    CHECK_THROWS_AS(ReplayBuffer::load("/nonexistent/buffer.bin"),
                    std::runtime_error);
}

}  // TEST_SUITE("mdp")

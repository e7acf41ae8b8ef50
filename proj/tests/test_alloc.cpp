#include <doctest.h>

#include <array>
#include <cmath>
#include <stdexcept>
#include <vector>

#include <nlohmann/json.hpp>

#include "fareflow/alloc.hpp"
#include "fareflow/rng.hpp"
#include "fareflow/sim.hpp"

using fareflow::Rng;
using fareflow::sim::kActionMenu;
using fareflow::sim::kNumActions;
using namespace fareflow::alloc;

namespace {

// Exhaustive 6^N reference: float sums in row order, so the arithmetic is
// bit-identical to any solver that accumulates the same way.
struct BruteResult {
    double objective = -std::numeric_limits<double>::infinity();
    double spend = 0.0;
    std::vector<int> choice;
};

void brute_rec(const AllocationProblem& p, std::size_t row, double value,
               double cost, std::vector<int>& partial, BruteResult& best) {
    if (row == p.size()) {
        if (cost <= p.budget && value > best.objective) {
            best.objective = value;
            best.spend = cost;
            best.choice = partial;
        }
        return;
    }
    for (int k = 0; k < kNumActions; ++k) {
        partial[row] = k;
        brute_rec(p, row + 1, value + p.value[row][static_cast<std::size_t>(k)],
                  cost + p.cost[row][static_cast<std::size_t>(k)], partial,
                  best);
    }
}

BruteResult brute_force(const AllocationProblem& p) {
    BruteResult best;
    std::vector<int> partial(p.size(), 0);
    brute_rec(p, 0, 0.0, 0.0, partial, best);
    return best;
}

double spend_of(const AllocationProblem& p, const std::vector<int>& choice) {
    double s = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        s += p.cost[i][static_cast<std::size_t>(choice[i])];
    }
    return s;
}

double value_of(const AllocationProblem& p, const std::vector<int>& choice) {
    double v = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        v += p.value[i][static_cast<std::size_t>(choice[i])];
    }
    return v;
}

// Random instance per the acceptance recipe: values uniform in [-5, 5]
// (no-discount column included), costs (1 - a) * fare.
AllocationProblem random_problem(Rng& rng, std::size_t n,
                                 double budget_scale = 0.3,
                                 bool quantized_fares = false) {
    AllocationProblem p;
    double max_spend = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double fare = rng.uniform(1.0, 60.0);
        if (quantized_fares) fare = std::round(fare * 25.0) / 25.0;  // 4 cents
        p.cost.push_back(cost_row(fare));
        std::array<double, kNumActions> v;
        for (double& x : v) x = rng.uniform(-5.0, 5.0);
        p.value.push_back(v);
        p.trip_ids.push_back(i + 1);
        max_spend += p.cost.back()[0];
    }
    p.budget = budget_scale * max_spend;
    return p;
}

TripEval random_trip_eval(Rng& rng, std::uint64_t id) {
    fareflow::sim::TripRecord t;
    t.fare = rng.uniform(2.0, 50.0);
    t.base_ecr = rng.uniform(0.1, 0.6);
    t.price_sensitivity = rng.uniform(0.5, 8.0);
    t.cr = rng.uniform(0.3, 1.0);
    TripEval e;
    e.trip_id = id;
    e.fare = t.fare;
    e.cr = t.cr;
    for (int k = 0; k < kNumActions; ++k) {
        e.delta_ecr[static_cast<std::size_t>(k)] =
            fareflow::sim::delta_ecr(t, kActionMenu[static_cast<std::size_t>(k)]);
    }
    e.v_s = rng.uniform(0.0, 20.0);
    e.v_s_next = rng.uniform(0.0, 20.0);
    e.done = rng.uniform() < 0.2;
    return e;
}

}  // namespace

TEST_SUITE("alloc") {

TEST_CASE("value and cost rows implement the scoring formulas") {
    Rng rng(41);
    for (int i = 0; i < 100; ++i) {
        const TripEval e = random_trip_eval(rng, 1);
        const double beta = rng.uniform(0.0, 1.0);
        const double gamma = rng.uniform(0.5, 1.0);

        const auto a = value_row(e, beta, gamma);
        const auto c = cost_row(e.fare);
        const double flow = e.done ? 0.0 : gamma * e.v_s_next;
        for (int k = 0; k < kNumActions; ++k) {
            const auto ki = static_cast<std::size_t>(k);
            const double want =
                e.delta_ecr[ki] * e.cr *
                (beta * e.fare + (1.0 - beta) * flow - e.v_s);
            CHECK(a[ki] == doctest::Approx(want).epsilon(1e-12));
            CHECK(c[ki] == doctest::Approx((1.0 - kActionMenu[ki]) * e.fare)
                               .epsilon(1e-12));
        }
        // The no-discount column anchors both matrices at exact zero.
        CHECK(a[5] == 0.0);
        CHECK(c[5] == 0.0);

        // Symmetric variant scales the origin value inside (1 - beta) too.
        const auto s = value_row(e, beta, gamma, true);
        for (int k = 0; k < kNumActions; ++k) {
            const auto ki = static_cast<std::size_t>(k);
            const double want = e.delta_ecr[ki] * e.cr *
                                (beta * e.fare + (1.0 - beta) * (flow - e.v_s));
            CHECK(s[ki] == doctest::Approx(want).epsilon(1e-12));
        }
    }
}

TEST_CASE("build_problem assembles matrices in trip order") {
    Rng rng(4);
    std::vector<TripEval> evals;
    for (int i = 0; i < 5; ++i) evals.push_back(random_trip_eval(rng, 10 + i));
    const AllocationProblem p = build_problem(evals, 0.5, 0.9, 7.5);
    REQUIRE(p.size() == 5);
    CHECK(p.budget == 7.5);
    for (std::size_t i = 0; i < 5; ++i) {
        CHECK(p.trip_ids[i] == 10 + i);
        CHECK(p.value[i] == value_row(evals[i], 0.5, 0.9));
        CHECK(p.cost[i] == cost_row(evals[i].fare));
    }
    CHECK_NOTHROW(p.validate());
}

TEST_CASE("exact solver matches exhaustive enumeration on small instances") {
    Rng rng(1001);
    for (int trial = 0; trial < 120; ++trial) {
        const std::size_t n = 1 + rng.uniform_index(8);
        AllocationProblem p = random_problem(rng, n, rng.uniform(0.0, 0.6));
        const BruteResult want = brute_force(p);
        const AllocationSolution got = solve_exact(p);
        CHECK(got.solver == "enumeration");
        CHECK(got.objective == want.objective);  // exact, no tolerance
        CHECK(got.spend <= p.budget);
        CHECK(value_of(p, got.choice) == got.objective);
        CHECK(spend_of(p, got.choice) == got.spend);
        CHECK(got.gap_bound == 0.0);
    }
}

TEST_CASE("exact solver handles trivial shapes") {
    // Empty problem.
    AllocationProblem empty;
    const AllocationSolution s0 = solve_exact(empty);
    CHECK(s0.objective == 0.0);
    CHECK(s0.choice.empty());

    // Zero budget forces the cheapest column even when values tempt.
    Rng rng(8);
    AllocationProblem p = random_problem(rng, 4, 0.0);
    p.budget = 0.0;
    const AllocationSolution s1 = solve_exact(p);
    CHECK(s1.spend == 0.0);
    const BruteResult want = brute_force(p);
    CHECK(s1.objective == want.objective);
}

TEST_CASE("budget DP agrees with enumeration beyond the dispatch cutoff") {
    Rng rng(2002);
    for (int trial = 0; trial < 8; ++trial) {
        // n = 9 exceeds the enumeration dispatch, small enough to brute.
        SUBCASE(("trial " + std::to_string(trial)).c_str()) {}
        AllocationProblem p =
            random_problem(rng, 9, rng.uniform(0.05, 0.5), true);
        const BruteResult want = brute_force(p);
        const AllocationSolution got = solve_exact(p, 0.01);
        CHECK(got.solver == "dp");
        CHECK(got.spend <= p.budget);
        CHECK(value_of(p, got.choice) == got.objective);
        // Feasible, and optimal within the discretization gap it reports.
        CHECK(got.objective <= want.objective + 1e-9);
        CHECK(got.objective + got.gap_bound >= want.objective - 1e-9);
        CHECK(got.gap_bound >= 0.0);
    }
}

TEST_CASE("DP with dyadic costs is exactly optimal") {
    // Costs and quantum that are multiples of 0.25 are exact in binary
    // floating point, so the ceil-rounding loses nothing and the DP must hit
    // the brute-force optimum bit for bit.
    Rng rng(2003);
    for (int trial = 0; trial < 5; ++trial) {
        AllocationProblem p;
        double max_spend = 0.0;
        for (std::size_t i = 0; i < 9; ++i) {
            const double base = 0.25 * static_cast<double>(1 + rng.uniform_index(8));
            std::array<double, kNumActions> c{}, v{};
            for (int k = 0; k < kNumActions; ++k) {
                c[static_cast<std::size_t>(k)] = static_cast<double>(5 - k) * base;
                v[static_cast<std::size_t>(k)] = rng.uniform(-5.0, 5.0);
            }
            p.cost.push_back(c);
            p.value.push_back(v);
            p.trip_ids.push_back(i + 1);
            max_spend += c[0];
        }
        p.budget = 0.25 * std::floor(0.4 * max_spend / 0.25);
        const BruteResult want = brute_force(p);
        const AllocationSolution got = solve_exact(p, 0.25);
        CHECK(got.solver == "dp");
        CHECK(got.objective == want.objective);  // exact, no tolerance
        CHECK(got.spend <= p.budget);
    }
}

TEST_CASE("lagrangian solutions are feasible and within their gap bound") {
    Rng rng(3003);
    for (int trial = 0; trial < 120; ++trial) {
        const std::size_t n = 1 + rng.uniform_index(8);
        AllocationProblem p = random_problem(rng, n, rng.uniform(0.0, 0.6));
        const BruteResult want = brute_force(p);
        const AllocationSolution got = solve_lagrangian(p);
        CHECK(got.solver == "lagrangian");
        CHECK(got.spend <= p.budget);
        CHECK(value_of(p, got.choice) == got.objective);
        CHECK(got.gap_bound >= -1e-12);
        // Weak duality sandwich around the true optimum.
        CHECK(got.objective <= want.objective + 1e-9);
        CHECK(got.objective + got.gap_bound >= want.objective - 1e-9);
    }
}

TEST_CASE("an unconstrained budget reduces to row maxima") {
    Rng rng(5);
    AllocationProblem p = random_problem(rng, 50, 2.0);  // budget > max spend
    double want = 0.0;
    for (const auto& row : p.value) {
        double best = row[0];
        for (double v : row) best = std::max(best, v);
        want += best;
    }
    const AllocationSolution got = solve_lagrangian(p);
    CHECK(got.objective == doctest::Approx(want).epsilon(1e-12));
    CHECK(got.gap_bound <= 1e-9);
    const AllocationSolution ex = solve_exact(p);
    CHECK(ex.objective == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("exact objective is monotone in the budget") {
    Rng rng(6);
    AllocationProblem p = random_problem(rng, 7, 0.0);
    double prev = -1e300;
    for (double scale : {0.0, 0.1, 0.25, 0.5, 0.75, 1.0}) {
        double max_spend = 0.0;
        for (const auto& row : p.cost) max_spend += row[0];
        p.budget = scale * max_spend;
        const AllocationSolution s = solve_exact(p);
        CHECK(s.objective >= prev - 1e-12);
        prev = s.objective;
    }
}

TEST_CASE("one-hot feasibility holds across both solvers") {
    Rng rng(7007);
    for (int trial = 0; trial < 300; ++trial) {
        const std::size_t n = 1 + rng.uniform_index(30);
        const double scale = trial % 10 == 0 ? 0.0 : rng.uniform(0.0, 0.8);
        AllocationProblem p = random_problem(rng, n, scale);
        if (trial % 7 == 0) p.budget = 0.0;
        const AllocationSolution a =
            n <= 8 ? solve_exact(p) : solve_lagrangian(p);
        REQUIRE(a.choice.size() == n);
        for (int k : a.choice) {
            CHECK(k >= 0);
            CHECK(k < kNumActions);
        }
        CHECK(spend_of(p, a.choice) <= p.budget);  // exact, no tolerance
    }
}

TEST_CASE("tie-breaks prefer the lowest menu index") {
    AllocationProblem p;
    p.value.push_back({2.0, 2.0, 2.0, 0.0, 0.0, 0.0});
    p.cost.push_back({0.0, 0.0, 0.0, 0.0, 0.0, 0.0});
    p.trip_ids.push_back(1);
    p.budget = 10.0;
    CHECK(solve_lagrangian(p).choice == std::vector<int>{0});
    CHECK(solve_exact(p).choice == std::vector<int>{0});
}

TEST_CASE("repair clamps an overspent assignment without upgrades") {
    Rng rng(9);
    AllocationProblem p = random_problem(rng, 40, 0.15);
    // Everything at the deepest discount overshoots a 15% budget.
    std::vector<int> start(40, 0);
    REQUIRE(spend_of(p, start) > p.budget);

    const AllocationSolution fixed = repair_assignment(p, start);
    CHECK(fixed.solver == "repair");
    CHECK(fixed.gap_bound == -1.0);
    CHECK(fixed.spend <= p.budget);
    CHECK(value_of(p, fixed.choice) == fixed.objective);
    for (std::size_t i = 0; i < p.size(); ++i) {
        // Downgrade-only: the repaired cost never exceeds the start cost.
        CHECK(p.cost[i][static_cast<std::size_t>(fixed.choice[i])] <=
              p.cost[i][0]);
    }

    // Already-feasible assignments pass through untouched.
    const AllocationSolution kept = repair_assignment(p, fixed.choice);
    CHECK(kept.choice == fixed.choice);
    CHECK(kept.spend == fixed.spend);

    std::vector<int> bad(40, 0);
    bad[0] = 6;
    CHECK_THROWS_AS(repair_assignment(p, bad), std::invalid_argument);
    bad.pop_back();
    CHECK_THROWS_AS(repair_assignment(p, bad), std::invalid_argument);
}

TEST_CASE("assignments translate to per-trip policies") {
    Rng rng(10);
    AllocationProblem p = random_problem(rng, 6, 0.4);
    p.trip_ids = {11, 22, 33, 44, 55, 66};
    const AllocationSolution s = solve_exact(p);
    const auto policy = assignment_to_policy(s, p);
    REQUIRE(policy.size() == 6);
    for (std::size_t i = 0; i < 6; ++i) {
        CHECK(policy.at(p.trip_ids[i]) ==
              kActionMenu[static_cast<std::size_t>(s.choice[i])]);
    }
    AllocationProblem dup = p;
    dup.trip_ids[1] = 11;
    CHECK_THROWS_AS(assignment_to_policy(s, dup), std::invalid_argument);
}

TEST_CASE("problems and solutions survive JSON round trips") {
    Rng rng(11);
    AllocationProblem p = random_problem(rng, 12, 0.3);
    const AllocationProblem back = AllocationProblem::from_json(p.to_json());
    CHECK(back.budget == p.budget);
    CHECK(back.value == p.value);
    CHECK(back.cost == p.cost);
    CHECK(back.trip_ids == p.trip_ids);

    const AllocationSolution s = solve_lagrangian(p);
    const AllocationSolution s_back = AllocationSolution::from_json(s.to_json(p));
    CHECK(s_back.choice == s.choice);
    CHECK(s_back.objective == s.objective);
    CHECK(s_back.spend == s.spend);
    CHECK(s_back.solver == s.solver);
    CHECK(s_back.gap_bound == s.gap_bound);
}

TEST_CASE("validation rejects malformed problems") {
    Rng rng(12);
    {
        AllocationProblem p = random_problem(rng, 3, 0.3);
        p.budget = -1.0;
        CHECK_THROWS_AS(p.validate(), std::invalid_argument);
    }
    {
        AllocationProblem p = random_problem(rng, 3, 0.3);
        p.cost.pop_back();
        CHECK_THROWS_AS(p.validate(), std::invalid_argument);
    }
    {
        AllocationProblem p = random_problem(rng, 3, 0.3);
        p.value[1][2] = std::numeric_limits<double>::quiet_NaN();
        CHECK_THROWS_AS(p.validate(), std::invalid_argument);
    }
    {
        AllocationProblem p = random_problem(rng, 3, 0.3);
        for (double& c : p.cost[0]) c = 1.0;  // no zero-cost escape hatch
        CHECK_THROWS_AS(p.validate(), std::invalid_argument);
    }
    {
        AllocationProblem p = random_problem(rng, 3, 0.3);
        p.cost[2][1] = -0.5;  // negative cost
        CHECK_THROWS_AS(p.validate(), std::invalid_argument);
    }
}

}  // TEST_SUITE("alloc")

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "feel/error.hpp"
#include "feel/oracles.hpp"
#include "feel/scheduler.hpp"

using namespace feel;
using namespace feel::scheduler;

namespace {

double l1(const std::vector<double>& a, const std::vector<double>& b) {
    double d = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) d += std::abs(a[i] - b[i]);
    return d;
}

double sum(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0); }

BoundParams make_bound(double eps, std::size_t round = 0) {
    BoundParams b;
    b.smoothness = 2.0;
    b.strong_convexity = 1.0;
    b.epsilon = eps;
    b.schedule = {1.0, 1.0};
    b.round = round;
    return b;
}

std::vector<double> random_simplex(std::size_t m, Rng& rng) {
    std::vector<double> p(m);
    for (auto& x : p) x = exponential(rng, 1.0);
    const double s = sum(p);
    for (auto& x : p) x /= s;
    return p;
}

channel::ChannelRealization channel_from_times(const std::vector<double>& times) {
    channel::ChannelRealization ch;
    ch.upload_time = times;
    ch.gain.assign(times.size(), 1.0);
    ch.snr.assign(times.size(), 1.0);
    ch.rate.resize(times.size());
    for (std::size_t m = 0; m < times.size(); ++m) ch.rate[m] = 1.0 / times[m];
    ch.eligible.assign(times.size(), true);
    return ch;
}

}  // namespace

TEST_CASE("policy names round-trip") {
    for (auto p : {Policy::uniform, Policy::importance_aware, Policy::channel_aware, Policy::ica, Policy::ctm}) {
        CHECK(parse_policy(policy_name(p)) == p);
    }
    CHECK_THROWS_AS(parse_policy("fastest"), InvalidArgument);
}

TEST_CASE("uniform policy") {
    CHECK(uniform_policy(4).p == std::vector<double>{0.25, 0.25, 0.25, 0.25});
    CHECK(uniform_policy(1).p == std::vector<double>{1.0});
    CHECK(sum(uniform_policy(4).p) == 1.0);
    CHECK_NOTHROW(uniform_policy(7).validate());
}

TEST_CASE("importance-aware policy") {
    const std::vector<std::size_t> ones{1, 1};
    const std::vector<double> norms{1.0, 3.0};
    CHECK(importance_aware_policy({norms, ones}).p == std::vector<double>{0.25, 0.75});
    for (double c : {1e-6, 1.0, 42.0}) {
        const std::vector<double> equal{c, c};
        CHECK(importance_aware_policy({equal, ones}).p == std::vector<double>{0.5, 0.5});
    }
    const std::vector<double> zero{0.0, 0.0};
    CHECK_THROWS_AS(importance_aware_policy({zero, ones}), StarvationError);

    SUBCASE("minimises the variance factor on the simplex grid") {
        const std::vector<std::size_t> sizes{10, 25, 15};
        const std::vector<double> g{0.7, 0.2, 1.1};
        const DeviceState state{g, sizes};
        const auto grid = oracles::simplex_grid_min_3(
            [&](std::span<const double> p) { return variance_term(p, state); }, 1000);
        const auto ia = importance_aware_policy(state);
        CHECK(variance_term(ia.p, state) <= grid.value + 1e-12);
        CHECK(l1(ia.p, grid.p) < 5e-3);
    }
}

TEST_CASE("channel-aware policy") {
    CHECK(channel_aware_policy(std::vector<double>{1, 4, 2}).p == std::vector<double>{0, 1, 0});
    CHECK(channel_aware_policy(std::vector<double>{3, 3}).p == std::vector<double>{1, 0});
    CHECK(channel_aware_policy(std::vector<double>{2, 8, 4}).p == std::vector<double>{0, 1, 0});
}

TEST_CASE("ica policy") {
    const std::vector<std::size_t> sizes{1, 1, 1};
    const std::vector<double> norms{1.0, 3.0, 2.0};
    const std::vector<double> times{1.0, 10.0, 0.5};
    const DeviceState state{norms, sizes};
    CHECK(ica_policy(state, times, 0.0).p == std::vector<double>{0, 1, 0});
    CHECK(ica_policy(state, times, 1e6).p == std::vector<double>{0, 0, 1});

    const std::vector<std::size_t> two{1, 1};
    const std::vector<double> tie_norms{1.0, 1.0};
    const std::vector<double> tie_times{2.0, 2.0};
    CHECK(ica_policy({tie_norms, two}, tie_times, 0.3).p == std::vector<double>{1, 0});
    CHECK_THROWS_AS(ica_policy(state, times, -1.0), InvalidArgument);
}

TEST_CASE("rho") {
    BoundParams b = make_bound(1.0, 1);
    CHECK(rho(b, 1.0) == doctest::Approx(std::sqrt(0.75)).epsilon(1e-15));

    BoundParams half = b;
    half.epsilon = 2.0;
    CHECK(rho(half, 1.0) == doctest::Approx(rho(b, 1.0) / std::sqrt(2.0)).epsilon(1e-14));

    double prev = rho(b, 1.0);
    for (std::size_t t = 2; t < 50; ++t) {
        b.round = t;
        const double r = rho(b, 1.0);
        CHECK(r < prev);
        prev = r;
    }
}

TEST_CASE("ctm closed form") {
    SUBCASE("identical devices split evenly") {
        const std::vector<double> a{0.3, 0.3};
        const std::vector<double> b{2.0, 2.0};
        const auto sol = ctm_solve(a, b, {}, 0.7);
        CHECK(sol.distribution.p[0] == doctest::Approx(0.5).epsilon(1e-12));
        CHECK(sol.distribution.p[1] == doctest::Approx(0.5).epsilon(1e-12));
    }

    SUBCASE("zero-gradient and masked devices get no mass") {
        const std::vector<double> a{0.3, 0.0, 0.4, 0.2};
        const std::vector<double> b{1.0, 0.5, 2.0, 0.1};
        const bool eligible[] = {true, true, true, false};
        const auto sol = ctm_solve(a, b, eligible, 1.0);
        CHECK(sol.distribution.p[1] == 0.0);
        CHECK(sol.distribution.p[3] == 0.0);
        CHECK(sum(sol.distribution.p) == doctest::Approx(1.0).epsilon(1e-15));
        CHECK_THROWS_AS(ctm_solve(std::vector<double>{0.0, 0.0}, std::vector<double>{1.0, 1.0}, {}, 1.0),
                        StarvationError);
    }

    SUBCASE("three-device instance against the grid") {
        const std::vector<std::size_t> sizes{1, 1, 1};
        const std::vector<double> norms{0.6, 1.5, 0.9};  // a = (0.2, 0.5, 0.3)
        const DeviceState state{norms, sizes};
        const std::vector<double> times{0.4, 3.0, 1.2};
        const BoundParams bound = make_bound(5.0, 3);
        const double future = 1.3;
        const auto ch = channel_from_times(times);
        const auto sol = ctm_policy(state, ch, bound, future);
        auto objective = [&](std::span<const double> p) { return p2_objective(p, state, times, bound, future); };
        const auto grid = oracles::simplex_grid_min_3(objective, 1000);
        CHECK(objective(sol.distribution.p) <= grid.value + 1e-6);
    }

    SUBCASE("stationarity residual and normalisation") {
        Rng rng = make_stream(31, Stream::task);
        for (int inst = 0; inst < 200; ++inst) {
            std::vector<double> a(5), b(5);
            for (int m = 0; m < 5; ++m) {
                a[m] = uniform01(rng);
                b[m] = std::pow(10.0, 6.0 * uniform01(rng) - 3.0);
            }
            const double r = std::pow(10.0, 4.0 * uniform01(rng) - 2.0);
            const auto sol = ctm_solve(a, b, {}, r);
            CHECK(std::abs(sum(sol.distribution.p) - 1.0) < 1e-9);
            for (int m = 0; m < 5; ++m) {
                const double p = sol.distribution.p[m];
                const double lhs = r * r * a[m] * a[m] / (p * p) - b[m];
                CHECK(std::abs(lhs - sol.lambda) <= 1e-6 * std::max(std::abs(sol.lambda), b[m]));
            }
        }
    }

    SUBCASE("normalisation function is decreasing and brackets one") {
        const std::vector<double> a{0.2, 0.5, 0.3};
        const std::vector<double> b{1e-3, 1.0, 1e3};
        const double r = 0.8;
        auto F = [&](double lambda) {
            double f = 0.0;
            for (int m = 0; m < 3; ++m) f += r * a[m] / std::sqrt(b[m] + lambda);
            return f;
        };
        const double left = -1e-3 + 1e-12;
        CHECK(F(left) > 1e3);
        CHECK(F(1e12) < 1e-3);
        double prev = F(left);
        for (double x = -9e-4; x < 1e6; x = x < 0 ? x / 2.0 + 1e-9 : x * 3.0 + 1e-6) {
            const double f = F(x);
            CHECK(f < prev);
            prev = f;
        }
        const auto sol = ctm_solve(a, b, {}, r);
        CHECK(F(sol.lambda) == doctest::Approx(1.0).epsilon(1e-9));
    }
}

TEST_CASE("ctm limits") {
    const std::vector<std::size_t> sizes{3, 1, 2, 4};
    const std::vector<double> norms{0.5, 2.0, 1.0, 0.3};
    const DeviceState state{norms, sizes};
    const std::vector<double> times{2.0, 5.0, 0.7, 1.5};
    const auto ch = channel_from_times(times);
    const auto ia = importance_aware_policy(state);

    const auto big = ctm_policy(state, ch, make_bound(1e-9), 1.0);
    CHECK(l1(big.distribution.p, ia.p) < 1e-3);

    const auto small = ctm_policy(state, ch, make_bound(1e9), 1.0);
    const auto top = std::max_element(small.distribution.p.begin(), small.distribution.p.end());
    CHECK(top - small.distribution.p.begin() == 2);

    SUBCASE("drifts away from importance-aware as rounds pass") {
        double prev = -1.0;
        for (std::size_t t = 0; t < 2000; t += 50) {
            const auto sol = ctm_policy(state, ch, make_bound(1e-2, t), 1.0);
            const double d = l1(sol.distribution.p, ia.p);
            CHECK(d >= prev - 1e-12);
            prev = d;
        }
    }
}

TEST_CASE("ctm beats reference distributions on the look-ahead objective") {
    Rng rng = make_stream(32, Stream::task);
    const std::vector<std::size_t> sizes{5, 1, 3, 2};
    for (int inst = 0; inst < 20; ++inst) {
        std::vector<double> norms(4), times(4);
        for (int m = 0; m < 4; ++m) {
            norms[m] = 0.1 + uniform01(rng);
            times[m] = 0.1 + 5.0 * uniform01(rng);
        }
        const DeviceState state{norms, sizes};
        const BoundParams bound = make_bound(0.5 + uniform01(rng), inst);
        const double future = 1.0;
        const auto sol = ctm_policy(state, channel_from_times(times), bound, future);
        const double best = p2_objective(sol.distribution.p, state, times, bound, future);

        std::vector<std::vector<double>> others{uniform_policy(4).p, importance_aware_policy(state).p};
        auto ca = channel_aware_policy(channel_from_times(times).rate).p;
        for (auto& x : ca) x = 0.99 * x + 0.01 / 4.0;
        others.push_back(ca);
        for (int k = 0; k < 100; ++k) others.push_back(random_simplex(4, rng));
        for (const auto& q : others) CHECK(best <= p2_objective(q, state, times, bound, future) + 1e-12);
    }
}

TEST_CASE("ctm mask is lifted when it leaves nothing to schedule") {
    const std::vector<std::size_t> sizes{1, 1};
    const std::vector<double> norms{1.0, 0.0};
    auto ch = channel_from_times({2.0, 1.0});
    ch.eligible = {false, true};
    const auto sol = ctm_policy({norms, sizes}, ch, make_bound(1.0), 1.0);
    CHECK(sol.mask_lifted);
    CHECK(sol.distribution.p == std::vector<double>{1.0, 0.0});

    ch.eligible = {true, true};
    CHECK_FALSE(ctm_policy({norms, sizes}, ch, make_bound(1.0), 1.0).mask_lifted);
}

TEST_CASE("look-ahead objective") {
    const std::vector<std::size_t> one{4};
    const std::vector<double> g{1.3};
    const std::vector<double> t{2.0};
    const BoundParams bound = make_bound(1.0);
    const std::vector<double> p{1.0};
    const double v = p2_objective(p, {g, one}, t, bound, 1.0);
    CHECK(v == doctest::Approx(bound.lookahead_weight() * 1.0 * 1.0 * 1.3 * 1.3 + 2.0));

    const std::vector<std::size_t> sizes{1, 2, 3};
    const std::vector<double> g3{0.4, 1.0, 0.7};
    std::vector<double> g3s = g3;
    for (auto& x : g3s) x *= std::sqrt(2.0);
    const std::vector<double> zeros{0.0, 0.0, 0.0};
    const std::vector<double> q{0.2, 0.3, 0.5};
    const double first = p2_objective(q, {g3, sizes}, zeros, bound, 1.0);
    CHECK(p2_objective(q, {g3s, sizes}, zeros, bound, 1.0) == doctest::Approx(2.0 * first));

    const std::vector<double> starved{0.0, 0.5, 0.5};
    CHECK(std::isinf(p2_objective(starved, {g3, sizes}, zeros, bound, 1.0)));

    SUBCASE("convex along random chords") {
        Rng rng = make_stream(33, Stream::task);
        const std::vector<double> times{1.0, 0.2, 3.0};
        for (int k = 0; k < 100; ++k) {
            const auto x = random_simplex(3, rng);
            const auto y = random_simplex(3, rng);
            std::vector<double> mid(3);
            for (int m = 0; m < 3; ++m) mid[m] = 0.5 * (x[m] + y[m]);
            const auto f = [&](const std::vector<double>& p) { return p2_objective(p, {g3, sizes}, times, bound, 1.0); };
            CHECK(f(mid) <= 0.5 * (f(x) + f(y)) + 1e-12);
        }
    }
}

TEST_CASE("remaining-rounds bound") {
    BoundParams bound = make_bound(0.1, 4);
    const std::vector<std::size_t> sizes{1, 1};
    const std::vector<double> norms{1.0, 1.0};
    const auto rb = remaining_rounds_bound(uniform_policy(2).p, {norms, sizes}, bound, 1.0, 1.0);
    const double eta = bound.schedule.eta(4);
    CHECK(rb.variance_part == doctest::Approx(2.0 * (4 + 1 + 1) * eta * eta / (2 * 0.1)));

    SUBCASE("variance part is smallest at the importance-aware distribution") {
        const std::vector<std::size_t> s3{2, 1, 3};
        const std::vector<double> g3{0.5, 1.2, 0.8};
        const DeviceState st{g3, s3};
        const auto grid = oracles::simplex_grid_min_3(
            [&](std::span<const double> p) { return remaining_rounds_bound(p, st, bound, 1.0, 1.0).variance_part; },
            1000);
        const auto ia = importance_aware_policy(st);
        CHECK(remaining_rounds_bound(ia.p, st, bound, 1.0, 1.0).variance_part <= grid.value + 1e-12);
    }

    SUBCASE("decreasing in epsilon") {
        double prev = std::numeric_limits<double>::infinity();
        for (double eps : {1e-3, 1e-2, 1e-1, 1.0}) {
            bound.epsilon = eps;
            const double v = remaining_rounds_bound(uniform_policy(2).p, {norms, sizes}, bound, 1.0, 1.0).total();
            CHECK(v < prev);
            prev = v;
        }
    }

    SUBCASE("requires 2 mu chi > 1") {
        bound.strong_convexity = 0.4;
        CHECK_THROWS_AS(remaining_rounds_bound(uniform_policy(2).p, {norms, sizes}, bound, 1.0, 1.0),
                        AssumptionViolation);
    }
}

TEST_CASE("device sampling") {
    Rng rng = make_stream(34, Stream::device);
    const SchedulingDistribution degenerate{{1.0, 0.0, 0.0}, Policy::uniform};
    for (int i = 0; i < 1000; ++i) CHECK(sample_device(degenerate, rng) == 0);

    const SchedulingDistribution skewed{{0.25, 0.75}, Policy::uniform};
    const int n = 100'000;
    int ones = 0;
    for (int i = 0; i < n; ++i) ones += sample_device(skewed, rng) == 1 ? 1 : 0;
    CHECK(std::abs(ones / double(n) - 0.75) < 3.0 * std::sqrt(0.75 * 0.25 / n));

    const SchedulingDistribution even{{0.5, 0.5}, Policy::uniform};
    Rng a = make_stream(9, Stream::device);
    Rng b = make_stream(9, Stream::device);
    for (int i = 0; i < 200; ++i) CHECK(sample_device(even, a) == sample_device(even, b));

    const SchedulingDistribution tail{{0.0, 1.0 - 1e-17, 0.0}, Policy::uniform};
    for (int i = 0; i < 1000; ++i) CHECK(sample_device(tail, rng) == 1);
}

TEST_CASE("distribution validation") {
    CHECK_THROWS_AS((SchedulingDistribution{{0.5, 0.4}, Policy::uniform}.validate()), InvalidArgument);
    CHECK_THROWS_AS((SchedulingDistribution{{1.5, -0.5}, Policy::uniform}.validate()), InvalidArgument);
    CHECK_NOTHROW((SchedulingDistribution{{0.3, 0.7}, Policy::uniform}.validate()));
}

#include "kobt/bayes_opt.hpp"

#include <doctest.h>

#include <cmath>

using namespace kobt;

namespace {

double sphere(const HyperPoint& p) {
    return (p.gamma - 5.0) * (p.gamma - 5.0) + (p.lambda - 5.0) * (p.lambda - 5.0) +
           (p.alpha - 5.0) * (p.alpha - 5.0);
}

}  // namespace

TEST_CASE("hyper points validate the cube") {
    HyperPoint ok{0.0, 20.0, 10.0};
    CHECK_NOTHROW(ok.validate());
    HyperPoint bad{-0.1, 5.0, 5.0};
    CHECK_THROWS(bad.validate());
}

TEST_CASE("halton sequence fills the unit cube deterministically") {
    Eigen::Vector3d first = halton3(1);
    CHECK(first[0] == doctest::Approx(0.5));
    CHECK(first[1] == doctest::Approx(1.0 / 3.0));
    CHECK(first[2] == doctest::Approx(0.2));
    for (std::uint64_t i = 1; i < 200; ++i) {
        Eigen::Vector3d u = halton3(i);
        for (int d = 0; d < 3; ++d) {
            CHECK(u[d] >= 0.0);
            CHECK(u[d] < 1.0);
        }
    }
}

TEST_CASE("surrogate interpolates its observations") {
    std::vector<Observation> obs{{{2.0, 3.0, 4.0}, 1.5}, {{10.0, 12.0, 1.0}, 3.0},
                                 {{18.0, 2.0, 18.0}, 0.5}};
    Surrogate s = Surrogate::fit(obs);
    for (const auto& o : obs)
        CHECK(std::abs(s.posterior_mean(o.point) - o.cvte) < 1e-2);
}

TEST_CASE("surrogate rejects degenerate inputs") {
    std::vector<Observation> one{{{1.0, 1.0, 1.0}, 2.0}};
    CHECK_THROWS(Surrogate::fit(one));
    std::vector<Observation> dup{{{1.0, 1.0, 1.0}, 2.0}, {{1.0, 1.0, 1.0}, 2.1}};
    CHECK_THROWS(Surrogate::fit(dup));
}

TEST_CASE("conditioning shrinks the posterior variance at observed points") {
    std::vector<Observation> obs{{{1.0, 1.0, 1.0}, 2.0}, {{19.0, 19.0, 19.0}, 3.0},
                                 {{1.0, 19.0, 5.0}, 1.0}};
    Surrogate s = Surrogate::fit(obs);
    double at_obs = s.posterior_variance(obs[0].point);
    double at_center = s.posterior_variance(HyperPoint{10.0, 10.0, 10.0});
    CHECK(at_obs <= at_center);
}

TEST_CASE("surrogate fit quality improves with more observations") {
    auto rmse_with = [&](int count) {
        std::vector<Observation> obs;
        for (int i = 1; i <= count; ++i) {
            Eigen::Vector3d u = halton3(static_cast<std::uint64_t>(i) + 100);
            HyperPoint p{20.0 * u[0], 20.0 * u[1], 20.0 * u[2]};
            obs.push_back({p, sphere(p)});
        }
        Surrogate s = Surrogate::fit(obs);
        double err = 0.0;
        int grid = 0;
        for (double g = 1.0; g < 20.0; g += 4.5)
            for (double l = 1.0; l < 20.0; l += 4.5)
                for (double a = 1.0; a < 20.0; a += 4.5) {
                    HyperPoint p{g, l, a};
                    double d = s.posterior_mean(p) - sphere(p);
                    err += d * d;
                    ++grid;
                }
        return std::sqrt(err / grid);
    };
    CHECK(rmse_with(25) < rmse_with(5));
}

TEST_CASE("proposals stay inside the cube") {
    std::vector<Observation> obs{{{5.0, 5.0, 5.0}, 0.1}, {{15.0, 15.0, 15.0}, 10.0},
                                 {{2.0, 17.0, 9.0}, 5.0}};
    Surrogate s = Surrogate::fit(obs);
    RngStream rng(1, 0);
    for (int i = 0; i < 5; ++i) {
        HyperPoint p = propose_next(s, rng, i);
        CHECK_NOTHROW(p.validate());
    }
}

TEST_CASE("optimizer minimizes the shifted sphere") {
    TuneObjective objective = [](const HyperPoint& p, std::uint64_t) { return sphere(p); };
    int hits = 0;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        RngStream rng(seed, 0);
        TuneResult r = optimize_objective(objective, 10, 20, rng);
        REQUIRE(r.history.size() == 30);
        if (r.cvte <= 1.0) ++hits;
    }
    CHECK(hits >= 4);
}

TEST_CASE("history bookkeeping and determinism") {
    TuneObjective objective = [](const HyperPoint& p, std::uint64_t) { return sphere(p); };
    RngStream r1(3, 0), r2(3, 0);
    TuneResult a = optimize_objective(objective, 4, 3, r1);
    TuneResult b = optimize_objective(objective, 4, 3, r2);
    REQUIRE(a.history.size() == 7);
    CHECK(a.history[0].stage == "init");
    CHECK(a.history[6].stage == "bo");
    for (std::size_t i = 0; i < a.history.size(); ++i) {
        CHECK(a.history[i].cvte == b.history[i].cvte);
        CHECK(a.history[i].order == static_cast<int>(i));
    }
    // every evaluated point lies in the cube
    for (const auto& h : a.history) CHECK_NOTHROW(h.point.validate());
}

TEST_CASE("zero bo rounds return the best initial point") {
    TuneObjective objective = [](const HyperPoint& p, std::uint64_t) { return sphere(p); };
    RngStream rng(4, 0);
    TuneResult r = optimize_objective(objective, 6, 0, rng);
    REQUIRE(r.history.size() == 6);
    double best = r.history[0].cvte;
    for (const auto& h : r.history) best = std::min(best, h.cvte);
    CHECK(r.cvte == best);
}

TEST_CASE("running minimum over history is non-increasing up to the result") {
    TuneObjective objective = [](const HyperPoint& p, std::uint64_t) { return sphere(p) + 1.0; };
    RngStream rng(5, 0);
    TuneResult r = optimize_objective(objective, 5, 8, rng);
    double running = std::numeric_limits<double>::infinity();
    for (const auto& h : r.history) running = std::min(running, h.cvte);
    CHECK(r.cvte == running);
}

#include <catch2/catch_amalgamated.hpp>

#include <random>
#include <sstream>

#include "tracelab/theory.hpp"

using namespace tracelab;
using Catch::Approx;

TEST_CASE("covering bound calculator") {
  SECTION("smallest case") {
    CHECK(covering_bound_log({1, 1, 1, 1, 0.5}) == Approx(std::log(2.0) + 2.0 * std::log(24.0)).epsilon(1e-14));
    CHECK(covering_bound_log({1, 1, 1, 1, 0.5}) == Approx(7.049).margin(5e-4));
  }
  SECTION("direct formula") {
    const CoveringBoundInput in{2, 3, 4, 50, 0.1};
    const double direct = std::log(std::pow(2.0, 6.0) * std::pow(12.0 * 6.0 * 125000.0 / 0.1, 9.0));
    CHECK(covering_bound_log(in) == Approx(direct).epsilon(1e-12));
  }
  SECTION("monotone in every argument") {
    std::mt19937_64 rng(3);
    std::uniform_int_distribution<Index> small(1, 30);
    std::uniform_real_distribution<double> eps(0.01, 0.99);
    for (int t = 0; t < 200; ++t) {
      const CoveringBoundInput a{small(rng), small(rng), small(rng), small(rng) * 10, eps(rng)};
      const double base = covering_bound_log(a);
      auto bump = a;
      bump.r += 1;
      CHECK(covering_bound_log(bump) > base);
      bump = a;
      bump.d1 += 1;
      CHECK(covering_bound_log(bump) > base);
      bump = a;
      bump.d2 += 1;
      CHECK(covering_bound_log(bump) > base);
      bump = a;
      bump.n += 1;
      CHECK(covering_bound_log(bump) > base);
      bump = a;
      bump.epsilon = a.epsilon * 0.5;
      CHECK(covering_bound_log(bump) > base);
    }
  }
  SECTION("domain") {
    CHECK_THROWS_AS(covering_bound_log({1, 1, 1, 1, 1.0}), DomainError);
    CHECK_THROWS_AS(covering_bound_log({1, 1, 1, 1, 0.0}), DomainError);
    CHECK_THROWS_AS(covering_bound_log({0, 1, 1, 1, 0.5}), DomainError);
    CHECK_THROWS_AS(covering_bound_log({1, 1, 1, 0, 0.5}), DomainError);
  }
}

TEST_CASE("projection inequality for the rank-constrained fit") {
  const DesignKind k{DesignVariant::gaussian, 3, 3};
  SECTION("noiseless data") {
    const auto d = gen_dataset(k, SignalSpec{1, 2.0, 1}, 12, 0.0, 2);
    const auto c = check_lemma1(d, 1, 50, 3);
    CHECK(c.lhs <= 1e-12);
    CHECK(c.holds);
  }
  SECTION("interpolating rank") {
    // rank = min(d1, d2) and n <= d1 d2: the fit interpolates and P_V is the identity.
    const auto d = gen_dataset(k, SignalSpec{1, 1.0, 4}, 9, 1.0, 5);
    const auto c = check_lemma1(d, 3, 20, 6);
    CHECK(c.lhs == Approx(d.noise().squaredNorm() / 9.0).epsilon(1e-6));
    CHECK(c.rhs == Approx(4.0 * c.lhs).epsilon(1e-6));
    CHECK(c.holds);
  }
  SECTION("needs the truth") {
    const auto d = gen_dataset(k, SignalSpec{1, 1.0, 4}, 12, 1.0, 5).without_truth();
    CHECK_THROWS_AS(check_lemma1(d, 1), PreconditionError);
  }
  SECTION("random suite") {
    const auto suite = run_lemma1_suite(20, 7);
    CHECK(suite.holds == 20);
    CHECK(suite.optimal == 20);
    CHECK(suite.all_pass());
    for (const auto& c : suite.checks) CHECK(c.lhs <= c.rhs + 1e-8);
  }
  SECTION("projected noise energy") {
    const auto d = gen_dataset(k, SignalSpec{1, 1.0, 8}, 12, 1.0, 9);
    CHECK(projected_noise_energy(d, MatrixXd(3, 0), d.noise()) == 0.0);
    const double full = projected_noise_energy(d, MatrixXd::Identity(3, 3), d.noise());
    const double part = projected_noise_energy(d, MatrixXd::Identity(3, 1), d.noise());
    CHECK(part <= full + 1e-12);
    CHECK(full <= d.noise().squaredNorm() + 1e-12);
  }
}

TEST_CASE("oracle inequality under rank misspecification") {
  const DesignKind k{DesignVariant::gaussian, 3, 3};
  for (std::uint64_t s = 0; s < 10; ++s) {
    const auto d = gen_dataset(k, SignalSpec{3, 2.0, 100 + s}, 15, 1.0, 200 + s);
    const auto c = check_misspecified_rank(d, 1, 50, 300 + s);
    CHECK(c.approx_error > 0.0);
    CHECK(c.holds);
    CHECK(c.fit_error <= c.approx_error + c.noise_term + 1e-8);
  }
}

TEST_CASE("risk scaling probe") {
  const std::vector<ScalingPoint> grid{{40, 4, 1}, {80, 4, 1}};
  const auto a = risk_scaling_probe(grid, 4, 11);
  const auto b = risk_scaling_probe(grid, 4, 11, 25.0, 2);
  REQUIRE(a.risks.size() == 2);
  CHECK(a.risks == b.risks);
  for (std::size_t g = 0; g < grid.size(); ++g) {
    CHECK(a.risks[g] > 0.0);
    CHECK(a.normalized[g] == Approx(a.risks[g] * grid[g].n / (4.0 * std::log(double(grid[g].n)))));
    CHECK(a.ls_risks[g] <= a.risks[g] * 10.0);
  }
  SECTION("ratio of a constant triple") {
    ScalingProbeResult r;
    r.normalized = {2.0, 2.0, 2.0};
    CHECK(r.max_min_ratio() == 1.0);
    r.normalized = {1.0, 3.0, 2.0};
    CHECK(r.max_min_ratio() == 3.0);
  }
  SECTION("CSV layout") {
    std::ostringstream os;
    write_probe_csv(os, a);
    std::istringstream is(os.str());
    std::string line;
    std::getline(is, line);
    CHECK(line == "n,d,r,mean_risk,normalized_risk");
    int rows = 0;
    while (std::getline(is, line)) {
      ++rows;
      CHECK(std::count(line.begin(), line.end(), ',') == 4);
    }
    CHECK(rows == 2);
  }
  CHECK_THROWS_AS(risk_scaling_probe({{10, 10, 1}}, 2, 1), PreconditionError);
  CHECK_THROWS_AS(risk_scaling_probe(grid, 0, 1), PreconditionError);
}

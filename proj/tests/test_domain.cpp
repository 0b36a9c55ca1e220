#include "doctest.h"

#include <limits>

#include "common.hpp"

using namespace eqtariff;

TEST_CASE("energy burden") {
  SUBCASE("zero demand") {
    CHECK(energy_burden(DemandProfile({0.0, 0.0, 0.0}), PriceProfile({0.3, 0.1, 0.2}), 100.0) == 0.0);
  }
  SUBCASE("two-hour example sits at the cap") {
    CHECK(energy_burden(DemandProfile({1.0, 1.0}), PriceProfile({0.1, 0.2}), 5.0) == doctest::Approx(0.06).epsilon(1e-15));
  }
  SUBCASE("matches a scalar loop") {
    std::mt19937_64 rng(1);
    for (int k = 0; k < 50; ++k) {
      const auto d = testutil::uniform_vec(rng, 24, 0.0, 3.0);
      const auto p = testutil::uniform_vec(rng, 24, 0.0, 0.5);
      const double income = 1.0 + 100.0 * std::uniform_real_distribution<double>(0, 1)(rng);
      long double acc = 0.0L;
      for (int t = 0; t < 24; ++t) acc += static_cast<long double>(d[t]) * p[t];
      CHECK(std::abs(energy_burden(d, p, income) - static_cast<double>(acc) / income) <= 1e-12);
    }
  }
  SUBCASE("linear in price") {
    std::mt19937_64 rng(2);
    const auto d = testutil::uniform_vec(rng, 24, 0.0, 3.0);
    const auto p = testutil::uniform_vec(rng, 24, 0.0, 0.5);
    for (double a : {0.0, 0.5, 2.0, 7.25}) {
      std::vector<double> ap(p);
      for (auto& x : ap) x *= a;
      CHECK(energy_burden(d, ap, 40.0) == doctest::Approx(a * energy_burden(d, p, 40.0)).epsilon(1e-13));
    }
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(energy_burden(DemandProfile({1.0}), PriceProfile({0.1}), 0.0), DomainError);
    CHECK_THROWS_AS(energy_burden(DemandProfile({1.0}), PriceProfile({0.1}), -2.0), DomainError);
    CHECK_THROWS_AS(energy_burden(DemandProfile({1.0, 2.0}), PriceProfile({0.1}), 1.0), ShapeError);
  }
}

TEST_CASE("hinge") {
  CHECK(hinge(-1.0) == 0.0);
  CHECK(hinge(0.0) == 0.0);
  CHECK(hinge(0.3) == 0.3);
}

TEST_CASE("profiles reject bad values") {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  const double inf = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(PriceProfile({0.1, nan}), DomainError);
  CHECK_THROWS_AS(PriceProfile({inf}), DomainError);
  CHECK_THROWS_AS(PriceProfile({-0.1}), DomainError);
  CHECK_THROWS_AS(DemandProfile({-1.0}), DomainError);
  CHECK_THROWS_AS(DemandProfile::change({nan}), DomainError);
  CHECK(DemandProfile::change({-1.0, 2.0}).total() == 1.0);
}

TEST_CASE("consumer and flex invariants") {
  const auto c = testutil::box_consumer(0, 36500.0, {1.0, 2.0}, 0.5, 0.5, 0.1, 0.1);
  CHECK(c.daily_income() == doctest::Approx(100.0));
  CHECK_THROWS_AS(testutil::box_consumer(0, 0.0, {1.0}, 0.5, 0.5, 0.1, 0.1), DomainError);
  CHECK_THROWS_AS(testutil::box_consumer(0, 100.0, {1.0}, 0.0, 0.5, 0.1, 0.1), DomainError);
  CHECK_THROWS_AS(testutil::box_consumer(0, 100.0, {1.0}, 0.5, -1.0, 0.1, 0.1), DomainError);

  FlexParams f;
  f.c1 = f.c2 = 1.0;
  f.shift_lo = {0.1};  // must be <= 0
  f.shift_hi = {0.2};
  f.reduce_lo = {-0.1};
  f.reduce_hi = {0.0};
  CHECK_THROWS_AS(f.validate(1), DomainError);
  f.shift_lo = {-0.1, -0.1};
  CHECK_THROWS_AS(f.validate(1), ShapeError);
}

TEST_CASE("scenario config validation") {
  ScenarioConfig c;
  CHECK_NOTHROW(c.validate(24));
  auto bad = c;
  bad.energy_burden_cap = 0.0;
  CHECK_THROWS_AS(bad.validate(24), ConfigError);
  bad = c;
  bad.beta = 1.0;
  CHECK_THROWS_AS(bad.validate(24), ConfigError);
  bad = c;
  bad.peak_hours = {24};
  CHECK_THROWS_AS(bad.validate(24), ConfigError);
  bad = c;
  bad.barrier.epsilon = 0.0;
  CHECK_THROWS_AS(bad.validate(24), ConfigError);
  bad = c;
  bad.barrier.mu_growth = 1.0;
  CHECK_THROWS_AS(bad.validate(24), ConfigError);
  bad = c;
  bad.peak_hours = {3, 4};
  bad.peak_margin = {0.1};
  CHECK_THROWS_AS(bad.validate(24), ConfigError);
  bad.peak_margin = {0.1, -0.1};
  CHECK_THROWS_AS(bad.validate(24), ConfigError);
  bad = c;
  bad.om_cost = -5.0;
  CHECK_NOTHROW(bad.validate(24));
  CHECK(gradient_mode_from_string(to_string(GradientMode::PaperDiagonal)) == GradientMode::PaperDiagonal);
  CHECK_THROWS_AS(gradient_mode_from_string("newton"), ConfigError);
}

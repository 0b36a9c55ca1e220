#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <set>

#include "common.hpp"
#include "eqtariff/csv.hpp"

using namespace eqtariff;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("eqtariff_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  out << text;
}

}  // namespace

TEST_CASE("group_by_burden sorts and chunks") {
  // Flat price 1.0, demand 1 kWh/h over 1 hour: burden = 1 / daily income.
  const PriceProfile price({1.0});
  const std::vector<double> burdens = {0.01, 0.09, 0.05, 0.02};
  std::vector<Consumer> cs;
  for (std::size_t i = 0; i < burdens.size(); ++i) {
    cs.push_back(testutil::box_consumer(i, kDaysPerYear / burdens[i], {1.0}, 1.0, 1.0, 0.0, 0.0));
  }
  const auto pop = group_by_burden(cs, price, 2);
  REQUIRE(pop.groups.size() == 2);
  CHECK(pop.groups[0].members == std::vector<std::size_t>{0, 3});
  CHECK(pop.groups[1].members == std::vector<std::size_t>{2, 1});

  SUBCASE("ties broken by id") {
    std::vector<Consumer> tied;
    for (std::size_t i = 0; i < 4; ++i) tied.push_back(testutil::box_consumer(i, 3650.0, {1.0}, 1.0, 1.0, 0.0, 0.0));
    const auto p2 = group_by_burden(tied, price, 2);
    CHECK(p2.groups[0].members == std::vector<std::size_t>{0, 1});
    CHECK(p2.groups[1].members == std::vector<std::size_t>{2, 3});
  }
  SUBCASE("one group averages everything") {
    const auto p1 = group_by_burden(cs, price, 1);
    double mean_income = 0.0;
    for (const auto& c : cs) mean_income += c.daily_income() / 4.0;
    CHECK(p1.groups[0].avg_daily_income == doctest::Approx(mean_income));
    CHECK(p1.groups[0].avg_baseline[0] == doctest::Approx(1.0));
  }
  SUBCASE("too many groups") { CHECK_THROWS_AS(group_by_burden(cs, price, 5), ConfigError); }
}

TEST_CASE("gen_population") {
  PopulationConfig pc;
  pc.n_consumers = 200;
  pc.n_groups = 10;
  pc.seed = 4;
  const auto seeds = synthetic_seed_profiles(5, 11);
  const auto whole = default_wholesale_profile();
  const auto pop = gen_population(pc, seeds, whole);

  SUBCASE("incomes in range") {
    for (const auto& c : pop.consumers) {
      CHECK(c.annual_income() >= 800.0);
      CHECK(c.annual_income() <= 60000.0);
    }
  }
  SUBCASE("groups partition the consumers with equal sizes") {
    std::set<std::size_t> seen;
    for (const auto& g : pop.groups) {
      CHECK(g.members.size() == 20);
      for (auto id : g.members) CHECK(seen.insert(id).second);
    }
    CHECK(seen.size() == 200);
  }
  SUBCASE("groups ascend in mean baseline burden") {
    double prev = -1.0;
    for (const auto& g : pop.groups) {
      double mean = 0.0;
      for (auto id : g.members) {
        mean += energy_burden(pop.baseline_of(id), whole, pop.consumer(id).daily_income()) / g.size();
      }
      CHECK(mean >= prev);
      prev = mean;
    }
  }
  SUBCASE("baseline is the agent response at the reference price") {
    for (std::size_t i = 0; i < pop.consumers.size(); i += 37) {
      CHECK(pop.baseline_of(i) == solve_response(pop.consumer(i), whole).demand);
    }
  }
  SUBCASE("deterministic") {
    const auto again = gen_population(pc, seeds, whole);
    CHECK(again.consumers == pop.consumers);
    CHECK(again.baseline == pop.baseline);
  }
  SUBCASE("ten singleton groups") {
    PopulationConfig tiny = pc;
    tiny.n_consumers = 10;
    const auto p10 = gen_population(tiny, seeds, whole);
    for (const auto& g : p10.groups) CHECK(g.members.size() == 1);
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(gen_population(pc, std::vector<DemandProfile>{}, whole), ConfigError);
    PopulationConfig bad = pc;
    bad.n_consumers = 5;
    CHECK_THROWS_AS(gen_population(bad, seeds, whole), ConfigError);
  }
}

TEST_CASE("price days") {
  const auto base = default_wholesale_profile();
  SUBCASE("zero volatility copies the base") {
    PriceDayConfig dc;
    dc.volatility = 0.0;
    dc.hourly_volatility = 0.0;
    for (const auto& d : gen_price_days(5, 1, base, dc)) CHECK(d == base);
  }
  SUBCASE("reproducible") {
    CHECK(gen_price_days(20, 9, base, PriceDayConfig{}) == gen_price_days(20, 9, base, PriceDayConfig{}));
  }
  SUBCASE("mean over many days is close to the base") {
    const auto days = gen_price_days(10000, 2, base, PriceDayConfig{});
    for (std::size_t t = 0; t < base.size(); ++t) {
      double mean = 0.0;
      for (const auto& d : days) mean += d[t] / 10000.0;
      CHECK(std::abs(mean / base[t] - 1.0) <= 0.02);
    }
  }
}

TEST_CASE("dataset") {
  const auto pop = testutil::small_population(40, 4);
  const auto whole = pop.reference_price;

  SUBCASE("repeated wholesale day gives identical zero samples") {
    const std::vector<PriceProfile> days(3, whole);
    const auto ds = build_dataset(pop, days, 0.8);
    REQUIRE(ds.groups.size() == 4);
    for (const auto& g : ds.groups) {
      REQUIRE(g.size() == 3);
      CHECK(g.dd[0] == g.dd[1]);
      CHECK(g.dd[1] == g.dd[2]);
      for (double x : g.dd[0].values()) CHECK(std::abs(x) <= 1e-12);
    }
  }
  SUBCASE("sample equals the member average of agent demand changes") {
    const auto days = gen_price_days(5, 3, whole, PriceDayConfig{});
    const auto ds = build_dataset(pop, days, 0.8);
    const auto& g = pop.groups[2];
    for (std::size_t d = 0; d < days.size(); ++d) {
      for (std::size_t t = 0; t < whole.size(); ++t) {
        double avg = 0.0;
        for (auto id : g.members) {
          avg += (solve_response(pop.consumer(id), days[d]).demand[t] - pop.baseline_of(id)[t]) / g.size();
        }
        CHECK(ds.groups[2].dd[d][t] == doctest::Approx(avg).epsilon(1e-12));
      }
    }
    CHECK(ds.groups[0].n_train == train_count(5, 0.8));
  }
  SUBCASE("flat price days carry no shifting") {
    const std::vector<PriceProfile> days = {PriceProfile(std::vector<double>(whole.size(), 0.05))};
    const auto ds = build_dataset(pop, days, 1.0);
    const auto& g = pop.groups[0];
    for (std::size_t t = 0; t < whole.size(); ++t) {
      double expected = 0.0;
      for (auto id : g.members) {
        const auto& c = pop.consumer(id);
        const auto& f = c.flex();
        const double d_r = std::min(f.reduce_hi[t], std::max(f.reduce_lo[t], -0.05 / (2.0 * f.c1)));
        expected += (c.baseline()[t] + d_r - pop.baseline_of(id)[t]) / g.size();
      }
      CHECK(ds.groups[0].dd[0][t] == doctest::Approx(expected).epsilon(1e-9));
    }
  }
  SUBCASE("write/read round trip") {
    const auto days = gen_price_days(6, 3, whole, PriceDayConfig{});
    const auto ds = build_dataset(pop, days, 0.5);
    const auto dir = scratch_dir("dataset");
    write_dataset(ds, dir);
    const auto back = read_dataset(dir, 4, whole.size(), 0.5);
    for (std::size_t n = 0; n < 4; ++n) {
      CHECK(back.groups[n].prices == ds.groups[n].prices);
      CHECK(back.groups[n].dd == ds.groups[n].dd);
      CHECK(back.groups[n].n_train == ds.groups[n].n_train);
    }
    fs::remove_all(dir);
  }
  SUBCASE("regeneration is bit-identical") {
    const auto days = gen_price_days(4, 8, whole, PriceDayConfig{});
    const auto a = build_dataset(pop, days, 0.5, 1);
    const auto b = build_dataset(pop, days, 0.5, 3);
    for (std::size_t n = 0; n < 4; ++n) CHECK(a.groups[n].dd == b.groups[n].dd);
  }
}

TEST_CASE("csv ingestion") {
  const auto dir = scratch_dir("csv");
  SUBCASE("quarter-hourly rows average down") {
    std::string row;
    for (int i = 0; i < 96; ++i) row += (i ? "," : "") + std::string("0.04");
    write_text(dir / "q.csv", row + "\n");
    const auto days = ingest_price_csv(dir / "q.csv");
    REQUIRE(days.size() == 1);
    for (double x : days[0].values()) CHECK(x == doctest::Approx(0.04).epsilon(1e-15));
  }
  SUBCASE("hourly rows pass through, header skipped") {
    std::string head, row;
    for (int i = 0; i < 24; ++i) {
      head += (i ? "," : "") + std::string("h") + std::to_string(i + 1);
      row += (i ? "," : "") + std::to_string(0.01 * (i + 1));
    }
    write_text(dir / "h.csv", head + "\n" + row + "\n\n" + row + "\n");
    const auto days = ingest_demand_csv(dir / "h.csv");
    REQUIRE(days.size() == 2);
    CHECK(days[1][23] == doctest::Approx(0.24));
  }
  SUBCASE("bad cell names line and column") {
    std::string row;
    for (int i = 0; i < 24; ++i) row += (i ? "," : "") + std::string(i == 4 ? "abc" : "1.0");
    write_text(dir / "bad.csv", row + "\n");
    try {
      ingest_price_csv(dir / "bad.csv");
      FAIL("expected a parse error");
    } catch (const ParseError& e) {
      CHECK(e.line() == 1);
      CHECK(e.column() == 5);
    }
  }
  SUBCASE("wrong column count") {
    write_text(dir / "short.csv", "1,2,3\n");
    CHECK_THROWS_AS(ingest_price_csv(dir / "short.csv"), ParseError);
  }
  SUBCASE("negative price rejected") {
    std::string row;
    for (int i = 0; i < 24; ++i) row += (i ? "," : "") + std::string(i == 0 ? "-1" : "1");
    write_text(dir / "neg.csv", row + "\n");
    CHECK_THROWS(ingest_price_csv(dir / "neg.csv"));
  }
  SUBCASE("format_double round trips") {
    std::mt19937_64 rng(5);
    for (double x : testutil::uniform_vec(rng, 200, -1e3, 1e3)) CHECK(std::stod(csv::format_double(x)) == x);
  }
  fs::remove_all(dir);
}

#include <cmath>

#include "doctest.h"
#include "sflsim/nsm.hpp"

using namespace sflsim;

TEST_CASE("default policy table lookups") {
  NsmPolicy p = NsmPolicy::default_policy();
  p.validate();
  CHECK(select_cr(p, 18.0) == Ratio{1, 3});
  CHECK(select_cr(p, 15.0) == Ratio{1, 3});  // floors are inclusive
  CHECK(select_cr(p, 10.0) == Ratio{1, 6});
  CHECK(select_cr(p, 9.99) == Ratio{1, 8});
  CHECK(select_cr(p, 5.0) == Ratio{1, 8});
  CHECK(select_cr(p, -3.0) == Ratio{1, 12});
}

TEST_CASE("lookup cost is bounded by the table length") {
  NsmPolicy p = NsmPolicy::default_policy();
  size_t steps = 0;
  select_cr(p, -100.0, &steps);  // worst case walks the whole table
  CHECK(steps == p.table.size());
  CHECK(steps <= 8);
  select_cr(p, 100.0, &steps);
  CHECK(steps == 1);
}

TEST_CASE("policies larger than 8 entries are rejected") {
  NsmPolicy p;
  for (int i = 0; i < 9; ++i) p.table.push_back({30.0 - i, {1, 3}});
  CHECK_THROWS_AS(p.validate(), std::invalid_argument);
}

TEST_CASE("floors must descend strictly") {
  NsmPolicy p;
  p.table = {{10.0, {1, 3}}, {10.0, {1, 6}}};
  CHECK_THROWS_AS(p.validate(), std::invalid_argument);
}

TEST_CASE("cr direction must be monotone") {
  NsmPolicy p;
  p.table = {{15.0, {1, 6}}, {5.0, {1, 3}}};  // better cr at worse snr
  CHECK_THROWS_AS(p.validate(), std::invalid_argument);

  NsmPolicy q;
  q.table = {{15.0, {1, 3}}};
  q.fallback = {1, 1};  // fallback milder than the lowest entry
  CHECK_THROWS_AS(q.validate(), std::invalid_argument);
}

TEST_CASE("higher snr never selects a smaller cr") {
  NsmPolicy policies[] = {NsmPolicy::default_policy(), NsmPolicy::fixed({1, 6})};
  NsmPolicy two;
  two.table = {{12.0, {1, 3}}, {0.0, {1, 8}}};
  two.fallback = {1, 12};
  for (const auto& p : {policies[0], policies[1], two}) {
    p.validate();
    double prev = -1.0;
    for (double snr = -20.0; snr <= 30.0; snr += 0.25) {
      double v = select_cr(p, snr).value();
      CHECK(v >= prev);
      prev = v;
    }
  }
}

TEST_CASE("static single-entry policy always returns its cr") {
  NsmPolicy p = NsmPolicy::fixed({1, 3});
  CHECK(p.is_static());
  for (double snr : {-50.0, 0.0, 50.0}) CHECK(select_cr(p, snr) == Ratio{1, 3});
  CHECK_FALSE(NsmPolicy::default_policy().is_static());
}

TEST_CASE("observe returns the effective uplink snr") {
  ChannelTrace awgn(ChannelModel::awgn, SnrSchedule::constant(10.0), 2, 3, 1);
  for (size_t c = 0; c < 2; ++c)
    for (size_t r = 0; r < 3; ++r) CHECK(observe(awgn, c, r) == 10.0);

  ChannelTrace ray(ChannelModel::rayleigh, SnrSchedule::constant(10.0), 1, 1, 2);
  const auto& real = ray.at(0, 0, 0);
  double expected = 10.0 + 10.0 * std::log10(real.h * real.h);
  CHECK(observe(ray, 0, 0) == doctest::Approx(expected).epsilon(1e-12));
  CHECK(observe(ray, 0, 0) == observe(ray, 0, 0));  // deterministic

  CHECK_THROWS_AS(observe(awgn, 5, 0), std::out_of_range);
}

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "fairseg/error.hpp"
#include "fairseg/prototypes.hpp"
#include "fairseg/rng.hpp"

using namespace fairseg;

namespace {

std::vector<double> v2(double a, double b) { return {a, b}; }

ClusterConfig period(std::size_t m) {
  ClusterConfig cfg;
  cfg.update_period = m;
  return cfg;
}

}  // namespace

TEST_CASE("feature bank is a bounded FIFO") {
  FeatureBank bank(2, 3);
  CHECK(bank.size(4) == 0);
  CHECK_FALSE(bank.mean(4).has_value());
  for (int i = 1; i <= 4; ++i) bank.deposit(4, v2(i, -i));
  REQUIRE(bank.size(4) == 3);
  const auto& q = *bank.queue(4);
  CHECK(q[0] == v2(2, -2));
  CHECK(q[1] == v2(3, -3));
  CHECK(q[2] == v2(4, -4));
  CHECK(bank.classes() == std::vector<std::uint16_t>{4});
  CHECK_THROWS_AS(bank.deposit(4, std::vector<double>{1, 2, 3}), Error);
}

TEST_CASE("bank mean matches a brute-force mean of retained features") {
  Rng rng(3);
  FeatureBank bank(5, 40);
  std::vector<std::vector<double>> all;
  for (int i = 0; i < 97; ++i) {
    std::vector<double> f(5);
    for (double& x : f) x = rng.uniform(-3, 3);
    all.push_back(f);
    bank.deposit(1, f);
  }
  const auto mean = *bank.mean(1);
  for (std::size_t d = 0; d < 5; ++d) {
    double s = 0;
    for (std::size_t i = all.size() - 40; i < all.size(); ++i) s += all[i][d];
    CHECK(mean[d] == doctest::Approx(s / 40).epsilon(1e-12));
  }
}

TEST_CASE("first refresh sets the mean, later refreshes use momentum") {
  const auto cfg = period(50);
  PrototypeBank protos(2);
  protos.ensure(1);
  FeatureBank bank(2, 500);
  bank.deposit(1, v2(1, 1));
  bank.deposit(1, v2(3, 3));

  CHECK(update_prototypes(protos, bank, cfg, 49) == 0);
  CHECK_FALSE(protos.at(1).initialized);
  CHECK(update_prototypes(protos, bank, cfg, 50) == 1);
  CHECK(protos.at(1).vector == v2(2, 2));
  CHECK(protos.at(1).initialized);

  bank.clear();
  bank.deposit(1, v2(4, 4));
  CHECK(update_prototypes(protos, bank, cfg, 75) == 0);
  CHECK(update_prototypes(protos, bank, cfg, 100) == 1);
  CHECK(protos.at(1).vector[0] == doctest::Approx(2.02).epsilon(1e-14));
  CHECK(protos.at(1).vector[1] == doctest::Approx(0.99 * 2 + 0.01 * 4).epsilon(1e-15));
}

TEST_CASE("frozen prototypes ignore their bank") {
  PrototypeBank protos(2);
  protos.set(0, v2(0, 0));
  protos.set(3, v2(1, 2));
  protos.freeze({3});
  FeatureBank bank(2, 10);
  bank.deposit(0, v2(5, 5));
  bank.deposit(3, v2(9, 9));
  update_prototypes(protos, bank, period(1), 1);
  update_prototypes(protos, bank, period(1), 2);
  CHECK(protos.at(3).vector == v2(1, 2));
  CHECK(protos.at(0).vector != v2(0, 0));
  CHECK_THROWS_AS(protos.set(3, v2(0, 0)), Error);

  protos.freeze({3});
  CHECK(protos.frozen_classes() == std::vector<std::uint16_t>{3});
}

TEST_CASE("freezing an uninitialized prototype is a state error") {
  PrototypeBank protos(3);
  protos.ensure(2);
  try {
    protos.freeze({2});
    FAIL("expected a state error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::State);
  }
}

TEST_CASE("momentum refresh contracts geometrically to a constant mean") {
  Rng rng(11);
  const std::vector<double> m{0.5, -1.5, 2.0};
  PrototypeBank protos(3);
  protos.set(1, {4.0, 4.0, -4.0});
  FeatureBank bank(3, 8);
  for (int i = 0; i < 8; ++i) bank.deposit(1, m);
  auto dist = [&] {
    double s = 0;
    for (std::size_t d = 0; d < 3; ++d) s += std::pow(protos.at(1).vector[d] - m[d], 2);
    return std::sqrt(s);
  };
  const double d0 = dist();
  const auto cfg = period(5);
  for (std::size_t n = 1; n <= 200; ++n) {
    update_prototypes(protos, bank, cfg, 5 * (n + 1));
    CHECK(dist() <= std::pow(0.99, double(n)) * d0 * (1 + 1e-12) + 1e-15);
  }
}

TEST_CASE("pseudo labels follow the nearest prototype with ties to the smallest id") {
  PrototypeBank protos(2);
  CHECK_THROWS_AS(protos.pseudo_label(v2(0, 0)), Error);
  protos.set(0, v2(-1, 0));
  protos.set(2, v2(1, 0));
  protos.set(3, v2(5, 5));
  protos.ensure(4);
  CHECK(protos.pseudo_label(v2(5, 5)) == 3);
  CHECK(protos.pseudo_label(v2(0, -7)) == 0);
  CHECK(protos.pseudo_label(v2(0.1, 0)) == 2);
}

TEST_CASE("pseudo labels agree with a brute-force scan") {
  Rng rng(101);
  for (int trial = 0; trial < 10000; ++trial) {
    const std::size_t dim = 1 + rng.below(6);
    PrototypeBank protos(dim);
    std::vector<std::pair<std::uint16_t, std::vector<double>>> list;
    for (std::uint16_t c = 0; c < 6; ++c) {
      std::vector<double> p(dim);
      // Coarse grid values make exact ties common.
      for (double& x : p) x = double(rng.below(3));
      if (rng.below(5) == 0) {
        protos.ensure(c);
        continue;
      }
      protos.set(c, p);
      list.emplace_back(c, p);
    }
    if (list.empty()) continue;
    std::vector<double> f(dim);
    for (double& x : f) x = double(rng.below(3));

    std::uint16_t best = 0;
    double best_d = INFINITY;
    for (const auto& [c, p] : list) {
      double s = 0;
      for (std::size_t d = 0; d < dim; ++d) s += (f[d] - p[d]) * (f[d] - p[d]);
      if (s < best_d) {
        best_d = s;
        best = c;
      }
    }
    REQUIRE(protos.pseudo_label(f) == best);
  }
}

TEST_CASE("cluster config bounds") {
  ClusterConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.momentum = 1.0;
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg = {};
  cfg.margin = 0;
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg = {};
  cfg.update_period = 0;
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg = {};
  cfg.bank_capacity = 0;
  CHECK_THROWS_AS(cfg.validate(), Error);
}

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fairseg/error.hpp"
#include "fairseg/metrics.hpp"
#include "fairseg/rng.hpp"

using namespace fairseg;

namespace {

struct Pairs {
  std::vector<std::uint16_t> truth, pred;
  void add(std::uint16_t t, std::uint16_t p, int n) {
    for (int i = 0; i < n; ++i) {
      truth.push_back(t);
      pred.push_back(p);
    }
  }
};

// Five classes with hand-set IoUs: 30/34, 0.8, 0.75, 0.5, 1.
ConfusionMatrix fixture() {
  Pairs px;
  px.add(0, 0, 30);
  px.add(1, 1, 8);
  px.add(1, 2, 2);
  px.add(2, 2, 6);
  px.add(3, 3, 4);
  px.add(3, 0, 4);
  px.add(4, 4, 1);
  ConfusionMatrix cm(5);
  cm.accumulate(px.pred, px.truth);
  return cm;
}

}  // namespace

TEST_CASE("confusion matrix accumulation") {
  std::vector<std::uint16_t> truth{0, 1, 2, kIgnoreLabel, 1}, pred{0, 1, 2, 2, 1};
  ConfusionMatrix cm(3);
  cm.accumulate(pred, truth);
  CHECK(cm.total() == 4);
  for (std::size_t a = 0; a < 3; ++a)
    for (std::size_t b = 0; b < 3; ++b)
      if (a != b) CHECK(cm.at(a, b) == 0);
  CHECK(cm.at(1, 1) == 2);

  std::vector<std::uint16_t> bad{0, 3, 0, 0, 0};
  CHECK_THROWS_AS(cm.accumulate(bad, truth), Error);
}

TEST_CASE("accumulation is additive across images and shards") {
  Rng rng(6);
  std::vector<std::uint16_t> t1(40), p1(40), t2(30), p2(30);
  for (auto* v : {&t1, &p1, &t2, &p2})
    for (auto& x : *v) x = static_cast<std::uint16_t>(rng.below(4));
  t1[3] = kIgnoreLabel;
  ConfusionMatrix a(4), b(4), joint(4);
  a.accumulate(p1, t1);
  b.accumulate(p2, t2);
  std::vector<std::uint16_t> tj = t1, pj = p1;
  tj.insert(tj.end(), t2.begin(), t2.end());
  pj.insert(pj.end(), p2.begin(), p2.end());
  joint.accumulate(pj, tj);
  a.merge(b);
  CHECK(a == joint);
  CHECK(joint.total() == 69);
}

TEST_CASE("iou arithmetic") {
  Pairs px;
  px.add(1, 1, 50);
  px.add(1, 0, 25);
  px.add(0, 1, 25);
  ConfusionMatrix cm(3);
  cm.accumulate(px.pred, px.truth);
  CHECK(*iou(cm, 1) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(*iou(cm, 0) == 0.0);
  CHECK_FALSE(iou(cm, 2).has_value());

  ConfusionMatrix perfect(2);
  std::vector<std::uint16_t> l{0, 1, 1, 0};
  perfect.accumulate(l, l);
  CHECK(*iou(perfect, 0) == 1.0);
  CHECK(*iou(perfect, 1) == 1.0);
}

TEST_CASE("iou is equivariant under relabeling") {
  Rng rng(19);
  std::vector<std::uint16_t> t(200), p(200);
  for (auto& x : t) x = static_cast<std::uint16_t>(rng.below(5));
  for (auto& x : p) x = static_cast<std::uint16_t>(rng.below(5));
  const std::vector<std::uint16_t> perm{3, 0, 4, 1, 2};
  std::vector<std::uint16_t> tp(t.size()), pp(p.size());
  for (std::size_t i = 0; i < t.size(); ++i) {
    tp[i] = perm[t[i]];
    pp[i] = perm[p[i]];
  }
  ConfusionMatrix a(5), b(5);
  a.accumulate(p, t);
  b.accumulate(pp, tp);
  for (std::size_t c = 0; c < 5; ++c) CHECK(*iou(a, c) == *iou(b, perm[c]));
}

TEST_CASE("fairness gap") {
  CHECK(fairness_gap({{1, 0.1}, {2, 0.4}, {3, 0.2}}) == doctest::Approx(0.3).epsilon(1e-15));
  CHECK(fairness_gap({{5, 0.2}, {1, 0.4}, {9, 0.1}}) == doctest::Approx(0.3).epsilon(1e-15));
  CHECK(fairness_gap({{1, 0.7}, {2, 0.7}}) == 0.0);
  try {
    fairness_gap({{1, 0.5}});
    FAIL("expected unavailable");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Unavailable);
  }
}

TEST_CASE("normalized entropy") {
  const std::vector<std::uint64_t> half{5, 5, 0, 0}, single{0, 9, 0}, uniform{3, 3, 3, 3, 3};
  CHECK(normalized_entropy(std::span<const std::uint64_t>(half)) ==
        doctest::Approx(std::log(2.0) / std::log(4.0)).epsilon(1e-15));
  CHECK(normalized_entropy(std::span<const std::uint64_t>(single)) == 0.0);
  CHECK(normalized_entropy(std::span<const std::uint64_t>(uniform)) == doctest::Approx(1.0));
  const std::vector<std::uint64_t> zeros{0, 0};
  CHECK_THROWS_AS(normalized_entropy(std::span<const std::uint64_t>(zeros)), Error);

  Rng rng(2);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<double> d(6);
    for (double& x : d) x = rng.uniform();
    const double s = std::accumulate(d.begin(), d.end(), 0.0);
    for (double& x : d) x /= s;
    const double h = normalized_entropy(std::span<const double>(d));
    CHECK(h >= 0.0);
    CHECK(h < 1.0);
  }
}

TEST_CASE("isolated pixels use eight-neighbour connectivity") {
  // 4x4 zeros with a lone 1 in the middle, and a diagonal pair of 2s.
  std::vector<std::uint16_t> l(16, 0);
  l[5] = 1;
  l[10 + 1] = 2;
  l[15] = 2;
  // pixel 11 (y=2,x=3) and 15 (y=3,x=3) are vertical neighbours: not isolated.
  CHECK(count_isolated_pixels(l, 4, 4) == 1);
  std::vector<std::uint16_t> uniform(9, 3);
  CHECK(count_isolated_pixels(uniform, 3, 3) == 0);
}

TEST_CASE("population std") {
  CHECK(population_std({0.4, 0.4, 0.4}) == 0.0);
  CHECK(population_std({0.0, 1.0}) == doctest::Approx(0.5));
  const std::vector<double> v{0.2, 0.9, 0.5, 0.7};
  std::vector<double> closer;
  for (double x : v) closer.push_back(x + 0.3 * (mean_of(v) - x));
  CHECK(population_std(closer) < population_std(v));
}

TEST_CASE("grouped report on a two-step fixture") {
  const auto cm = fixture();
  const auto split = TaskSplit::parse("2-2", 4);
  const std::map<std::uint16_t, double> errors{{0, 0.1}, {1, 0.5}, {2, 0.3}, {3, 1.2}, {4, 0.2}};
  const std::vector<double> steps{0.9, 0.7};
  const auto rep = grouped_report(cm, split, errors, steps);

  const std::vector<double> expect{30.0 / 34, 0.8, 0.75, 0.5, 1.0};
  for (std::size_t c = 0; c < 5; ++c) CHECK(*rep.class_iou[c] == doctest::Approx(expect[c]).epsilon(1e-14));
  CHECK(*rep.initial.miou == doctest::Approx(0.775).epsilon(1e-14));
  CHECK(*rep.later.miou == doctest::Approx(0.75).epsilon(1e-14));
  const double all_mean = (30.0 / 34 + 0.8 + 0.75 + 0.5 + 1.0) / 5;
  CHECK(*rep.all.miou == doctest::Approx(all_mean).epsilon(1e-14));
  double var = 0;
  for (double x : expect) var += (x - all_mean) * (x - all_mean);
  CHECK(rep.std_iou == doctest::Approx(std::sqrt(var / 5)).epsilon(1e-14));
  CHECK(*rep.all.miou >= *std::min_element(expect.begin(), expect.end()));
  CHECK(*rep.all.miou <= *std::max_element(expect.begin(), expect.end()));

  // foreground pixel counts 10, 6, 8, 1: median share 7
  CHECK(rep.major.classes == std::vector<std::uint16_t>{1, 3});
  CHECK(rep.minor.classes == std::vector<std::uint16_t>{2, 4});
  CHECK(*rep.major.miou == doctest::Approx(0.65).epsilon(1e-14));
  CHECK(*rep.minor.miou == doctest::Approx(0.875).epsilon(1e-14));

  CHECK(*rep.miou_avg == doctest::Approx(0.8).epsilon(1e-14));
  CHECK(*rep.fairness_gap == doctest::Approx(1.1).epsilon(1e-14));
  double h = 0;
  for (double n : {10.0, 6.0, 8.0, 1.0}) h -= n / 25 * std::log(n / 25);
  CHECK(rep.entropy == doctest::Approx(h / std::log(4.0)).epsilon(1e-14));

  const auto back = report_from_json(report_json(rep));
  CHECK(back.class_iou == rep.class_iou);
  CHECK(back.std_iou == rep.std_iou);
  CHECK(back.major.classes == rep.major.classes);
}

TEST_CASE("avg equals the mean of per-step mIoUs from per-step matrices") {
  const auto split = TaskSplit::parse("1-1", 2);
  ConfusionMatrix step1(2), step2(3);
  Pairs a, b;
  a.add(0, 0, 6);
  a.add(1, 1, 3);
  a.add(1, 0, 1);
  b.add(0, 0, 5);
  b.add(2, 2, 2);
  b.add(2, 1, 2);
  b.add(1, 1, 4);
  step1.accumulate(a.pred, a.truth);
  step2.accumulate(b.pred, b.truth);
  const double m1 = (6.0 / 7 + 0.75) / 2;
  const double m2 = (1.0 + 4.0 / 6 + 0.5) / 3;
  auto miou = [](const ConfusionMatrix& cm) {
    std::vector<double> v;
    for (std::size_t c = 0; c < cm.num_classes(); ++c)
      if (auto x = iou(cm, c)) v.push_back(*x);
    return mean_of(v);
  };
  CHECK(miou(step1) == doctest::Approx(m1).epsilon(1e-14));
  CHECK(miou(step2) == doctest::Approx(m2).epsilon(1e-14));
  const auto rep = grouped_report(step2, split, {}, {miou(step1), miou(step2)});
  CHECK(*rep.miou_avg == doctest::Approx((m1 + m2) / 2).epsilon(1e-14));
  CHECK_FALSE(rep.fairness_gap.has_value());
}

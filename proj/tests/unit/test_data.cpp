#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "fairseg/binary_io.hpp"
#include "fairseg/dataset.hpp"
#include "fairseg/error.hpp"
#include "fairseg/metrics.hpp"

using namespace fairseg;

namespace {

BenchmarkSpec small_spec(std::vector<double> freq, std::size_t train) {
  BenchmarkSpec spec;
  spec.num_classes = static_cast<std::uint16_t>(freq.size());
  spec.class_frequencies = std::move(freq);
  spec.train_count = train;
  spec.test_count = 4;
  spec.seed = 99;
  return spec;
}

std::vector<double> foreground_shares(const Dataset& d) {
  const auto counts = pixel_class_counts(d);
  double total = 0;
  for (std::size_t c = 1; c < counts.size(); ++c) total += static_cast<double>(counts[c]);
  std::vector<double> out;
  for (std::size_t c = 1; c < counts.size(); ++c) out.push_back(static_cast<double>(counts[c]) / total);
  return out;
}

LabelMap labels_of(std::vector<std::uint16_t> v) {
  LabelMap m(1, v.size());
  m.data = std::move(v);
  return m;
}

}  // namespace

TEST_CASE("generation is deterministic and values are in range") {
  const auto spec = small_spec({0.4, 0.3, 0.2, 0.1}, 20);
  const Benchmark a = generate(spec), b = generate(spec);
  CHECK(a.train == b.train);
  CHECK(a.test == b.test);
  CHECK(encode_dataset(a.train) == encode_dataset(b.train));
  for (const auto& s : a.train.samples) {
    CHECK(s.image.height() == 32);
    CHECK(s.image.channels() == 3);
    for (double v : s.image.values()) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
    for (auto l : s.labels.data) CHECK(l <= 4);
  }
  auto other = spec;
  other.seed = 100;
  CHECK(!(generate(other).train == a.train));
}

TEST_CASE("majority class dominates the pixel distribution") {
  const auto data = generate(small_spec({0.7, 0.1, 0.1, 0.1}, 500)).train;
  const auto shares = foreground_shares(data);
  for (std::size_t c = 1; c < shares.size(); ++c) CHECK(shares[0] > shares[c]);
}

TEST_CASE("uniform frequencies give a near-balanced distribution") {
  const auto data = generate(small_spec({0.25, 0.25, 0.25, 0.25}, 500)).train;
  auto counts = pixel_class_counts(data);
  counts.erase(counts.begin());
  CHECK(normalized_entropy(std::span<const std::uint64_t>(counts)) >= 0.95);
}

TEST_CASE("default benchmark is skewed by at least 5x") {
  auto spec = shapes8_spec();
  const auto data = generate(spec).train;
  const auto shares = foreground_shares(data);
  const double hi = *std::max_element(shares.begin(), shares.end());
  const double lo = *std::min_element(shares.begin(), shares.end());
  CHECK(lo > 0.0);
  CHECK(hi / lo >= 5.0);
}

TEST_CASE("invalid benchmark specs are rejected") {
  auto spec = small_spec({0.5, 0.5}, 2);
  spec.height = 0;
  CHECK_THROWS_AS(generate(spec), Error);
  spec = small_spec({0.5, 0.6}, 2);
  CHECK_THROWS_AS(generate(spec), Error);
  spec = small_spec({1.0, 0.0}, 2);
  CHECK_THROWS_AS(generate(spec), Error);
  spec = small_spec({0.5, 0.5, 0.0}, 2);
  spec.num_classes = 2;
  CHECK_THROWS_AS(generate(spec), Error);
}

TEST_CASE("power law frequencies") {
  const auto f = power_law_frequencies(8, 1.5);
  double total = 0;
  for (double v : f) total += v;
  CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(f[0] / f[1] == doctest::Approx(std::pow(2.0, 1.5)));
}

TEST_CASE("task split parsing") {
  const auto s = TaskSplit::parse("5-3", 8);
  CHECK(s.num_steps() == 2);
  CHECK(s.classes(1) == std::vector<std::uint16_t>{1, 2, 3, 4, 5});
  CHECK(s.classes(2) == std::vector<std::uint16_t>{6, 7, 8});
  CHECK(s.classes_through(2).size() == 8);
  CHECK(s.step_of(7) == 2);
  CHECK(s.to_string() == "5-3");
  CHECK(TaskSplit::parse("4-2-2", 8).num_steps() == 3);
  CHECK_THROWS_AS(TaskSplit::parse("5-4", 8), Error);
  CHECK_THROWS_AS(TaskSplit::parse("5-x", 8), Error);
  CHECK_THROWS_AS(TaskSplit({{1, 2}, {2, 3}}), Error);
  CHECK_THROWS_AS(s.classes(3), Error);
}

TEST_CASE("collapse_labels examples") {
  const TaskSplit split({{1, 2}, {5}});
  CHECK(collapse_labels(labels_of({1, 2, 5}), split, 1) == labels_of({1, 2, 0}));
  CHECK(collapse_labels(labels_of({1, 2, 1}), split, 1) == labels_of({1, 2, 1}));
  CHECK(collapse_labels(labels_of({0, 0, 0}), split, 1) == labels_of({0, 0, 0}));
  CHECK(collapse_labels(labels_of({1, kIgnoreLabel, 5}), split, 2) ==
        labels_of({0, kIgnoreLabel, 5}));
  CHECK_THROWS_AS(collapse_labels(labels_of({1}), split, 3), Error);
}

TEST_CASE("collapse is idempotent and overlapped steps differ only on step classes") {
  const auto data = generate(small_spec(power_law_frequencies(8, 1.5), 60)).train;
  const auto split = TaskSplit::parse("4-2-2", 8);
  for (const auto& s : data.samples)
    for (std::size_t t = 1; t <= 3; ++t) {
      const auto once = collapse_labels(s.labels, split, t);
      CHECK(collapse_labels(once, split, t) == once);
    }
  for (std::size_t t1 = 1; t1 <= 3; ++t1)
    for (std::size_t t2 = t1 + 1; t2 <= 3; ++t2) {
      const auto a = select_step_images(data.samples, split, t1);
      const auto b = select_step_images(data.samples, split, t2);
      for (auto i : a) {
        if (!std::binary_search(b.begin(), b.end(), i)) continue;
        const auto la = collapse_labels(data.samples[i].labels, split, t1);
        const auto lb = collapse_labels(data.samples[i].labels, split, t2);
        for (std::size_t p = 0; p < la.data.size(); ++p)
          if (la.data[p] != lb.data[p]) {
            const auto orig = data.samples[i].labels.data[p];
            CHECK((split.in_step(orig, t1) || split.in_step(orig, t2)));
          }
      }
    }
}

TEST_CASE("select_step_images matches a brute-force scan") {
  const auto data = generate(small_spec(power_law_frequencies(8, 1.5), 80)).train;
  const auto split = TaskSplit::parse("5-3", 8);
  for (std::size_t t = 1; t <= 2; ++t) {
    std::vector<std::size_t> brute;
    for (std::size_t i = 0; i < data.samples.size(); ++i) {
      bool hit = false;
      for (std::size_t y = 0; y < 32; ++y)
        for (std::size_t x = 0; x < 32; ++x) {
          const auto l = data.samples[i].labels.at(y, x);
          for (auto c : split.classes(t)) hit |= l == c;
        }
      if (hit) brute.push_back(i);
    }
    CHECK(select_step_images(data.samples, split, t) == brute);
  }

  const TaskSplit two({{1}, {2}});
  std::vector<SegSample> samples(2);
  samples[0].labels = labels_of({0, 2, 2});  // only a future class
  samples[1].labels = labels_of({0, 0, 1});  // one pixel of the step class
  CHECK(select_step_images(samples, two, 1) == std::vector<std::size_t>{1});
}

TEST_CASE("dataset file round trip is bit exact") {
  const auto data = generate(small_spec({0.5, 0.3, 0.2}, 12)).train;
  const auto path = std::filesystem::temp_directory_path() / "fairseg_test_roundtrip.fcls";
  write_dataset(path, data);
  const Dataset back = read_dataset(path);
  CHECK(back == data);
  CHECK(encode_dataset(back) == encode_dataset(data));
  std::filesystem::remove(path);
}

TEST_CASE("dataset decode errors") {
  const auto data = generate(small_spec({0.5, 0.5}, 2)).train;
  auto bytes = encode_dataset(data);

  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  try {
    decode_dataset(bad_magic);
    FAIL("expected format error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Format);
    CHECK(std::string(e.what()).find("FCLS") != std::string::npos);
    CHECK(e.offset() == 0u);
  }

  auto bad_version = bytes;
  bad_version[4] = 2;
  CHECK_THROWS_AS(decode_dataset(bad_version), Error);

  auto truncated = bytes;
  truncated.resize(truncated.size() - 3);
  try {
    decode_dataset(truncated);
    FAIL("expected format error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Format);
    CHECK(e.offset().has_value());
  }

  // Claim a 64x64 image while the payload holds 32x32.
  auto inconsistent = bytes;
  inconsistent[12] = 64;
  inconsistent[16] = 64;
  try {
    decode_dataset(inconsistent);
    FAIL("expected format error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Format);
    CHECK(std::string(e.what()).find("inconsistent") != std::string::npos);
  }
}

TEST_CASE("manifest records spec fields") {
  const auto spec = shapes8_spec();
  const auto path = std::filesystem::temp_directory_path() / "fairseg_manifest.txt";
  write_manifest(path, spec);
  const auto bytes = io::read_file(path.string());
  const std::string text(bytes.begin(), bytes.end());
  CHECK(text.find("num_classes=8") != std::string::npos);
  CHECK(text.find("seed=7") != std::string::npos);
  CHECK(text.find("class_frequencies=") != std::string::npos);
  std::filesystem::remove(path);
}

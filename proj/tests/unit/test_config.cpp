#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>

#include "fairseg/error.hpp"
#include "fairseg/run_config.hpp"

using namespace fairseg;

namespace {

std::string config_error(const std::string& text) {
  try {
    parse_run_config(text).validate();
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Config);
    return e.what();
  }
  FAIL("expected a config error");
  return "";
}

bool mentions(const std::string& message, const std::string& word) {
  return message.find(word) != std::string::npos;
}

}  // namespace

TEST_CASE("empty text gives the defaults") {
  const RunConfig cfg = parse_run_config("");
  CHECK(cfg.split == "5-3");
  CHECK(cfg.benchmark.num_classes == 8);
  CHECK(cfg.train.batch_size == 6);
  CHECK(cfg.train.cluster.update_period == 50);
  CHECK_FALSE(cfg.ablation.has_value());
  CHECK(dump_run_config(cfg) == dump_run_config(RunConfig{}));
}

TEST_CASE("dump and parse round-trip") {
  RunConfig cfg = parse_run_config(
      "[train]\nlr_continual = 0.0123\nseed = 42\n[losses]\nablation = cluster+class\n"
      "pseudo_from_previous = true\n[model]\nhidden = 20, 10, 5\n[split]\nsteps = 4-2-2\n");
  const RunConfig back = parse_run_config(dump_run_config(cfg));
  CHECK(dump_run_config(back) == dump_run_config(cfg));
  CHECK(back.train.lr_continual == 0.0123);
  CHECK(back.train.seed == 42);
  CHECK(back.train.model.hidden == std::vector<std::size_t>{20, 10, 5});
  CHECK(back.ablation == std::optional<std::string>("cluster+class"));
  CHECK(back.resolved_train().split.num_steps() == 3);
}

TEST_CASE("ablation preset keeps the pseudo-label options") {
  RunConfig cfg = parse_run_config(
      "[losses]\nablation = cluster\nce_on_pseudo = true\npseudo_from_previous = true\ncons = true\n");
  const TrainConfig t = cfg.resolved_train();
  CHECK(t.toggles.cluster);
  CHECK_FALSE(t.toggles.class_weighting);
  CHECK_FALSE(t.toggles.cons);
  CHECK(t.toggles.ce_on_pseudo);
  CHECK(t.toggles.pseudo_from_previous);
}

TEST_CASE("frequencies follow the exponent unless given") {
  const RunConfig a = parse_run_config("[benchmark]\nfrequency_exponent = 0\n");
  for (double f : a.benchmark.class_frequencies) CHECK(f == doctest::Approx(1.0 / 8));
  const RunConfig b = parse_run_config(
      "[benchmark]\nnum_classes = 2\nclass_frequencies = 0.75, 0.25\n[split]\nsteps = 1-1\n");
  CHECK(b.benchmark.class_frequencies == std::vector<double>{0.75, 0.25});
}

TEST_CASE("invalid values name the offending key") {
  CHECK(mentions(config_error("[benchmark]\nclass_frequencies = 0.5, -0.1, 0.2, 0.1, 0.1, 0.1, 0.05, 0.05\n"),
                 "class_frequencies"));
  CHECK(mentions(config_error("[benchmark]\nclass_frequencies = 0.5, 0.5\n"), "class_frequencies"));
  CHECK(mentions(config_error("[train]\nbogus = 1\n"), "bogus"));
  CHECK(mentions(config_error("[nowhere]\nx = 1\n"), "nowhere"));
  CHECK(mentions(config_error("[train]\nbatch_size = six\n"), "batch_size"));
  CHECK(mentions(config_error("[losses]\nablation = everything\n"), "everything"));
  CHECK(mentions(config_error("[losses]\ncons = maybe\n"), "cons"));
}

TEST_CASE("committed configurations load") {
  const auto root = std::filesystem::path(FAIRSEG_SOURCE_DIR) / "configs";
  const RunConfig example = load_run_config(root / "example.ini");
  example.validate();
  CHECK(dump_run_config(example) == dump_run_config(RunConfig{}));
  const RunConfig acceptance = load_run_config(root / "acceptance.ini");
  acceptance.validate();
  CHECK(acceptance.train.toggles.pseudo_from_previous);
  CHECK_THROWS_AS(load_run_config(root / "missing.ini"), Error);
}

#include "fairseg/run_config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "fairseg/error.hpp"

namespace fairseg {

namespace {

namespace pt = boost::property_tree;

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t") - b + 1);
}

double to_double(const std::string& key, const std::string& v) {
  double out = 0;
  const auto t = trim(v);
  const auto [end, ec] = std::from_chars(t.data(), t.data() + t.size(), out);
  require(ec == std::errc{} && end == t.data() + t.size(), ErrorKind::Config,
          key + ": expected a number, got '" + v + "'");
  return out;
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto t = trim(v);
  const auto [end, ec] = std::from_chars(t.data(), t.data() + t.size(), out);
  require(ec == std::errc{} && end == t.data() + t.size(), ErrorKind::Config,
          key + ": expected a non-negative integer, got '" + v + "'");
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  const auto t = trim(v);
  if (t == "true" || t == "1" || t == "on" || t == "yes") return true;
  if (t == "false" || t == "0" || t == "off" || t == "no") return false;
  fail(ErrorKind::Config, key + ": expected true/false, got '" + v + "'");
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!trim(item).empty()) out.push_back(trim(item));
  return out;
}

std::string fmt(double v) {
  char buf[32];
  const auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

std::string fmt(bool v) { return v ? "true" : "false"; }
std::string fmt(std::uint64_t v) { return std::to_string(v); }

template <class T>
std::string join(const std::vector<T>& xs) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) out += ", ";
    if constexpr (std::is_floating_point_v<T>)
      out += fmt(static_cast<double>(xs[i]));
    else
      out += std::to_string(xs[i]);
  }
  return out;
}

struct Field {
  const char* section;
  const char* key;
  std::function<void(RunConfig&, const std::string& name, const std::string& value)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define FS_DOUBLE(sec, name, expr)                                                               \
  Field {                                                                                        \
    sec, name, [](RunConfig& c, const std::string& k, const std::string& v) { expr = to_double(k, v); }, \
        [](const RunConfig& c) { return fmt(static_cast<double>(expr)); }                        \
  }
#define FS_SIZE(sec, name, expr)                                                                 \
  Field {                                                                                        \
    sec, name,                                                                                   \
        [](RunConfig& c, const std::string& k, const std::string& v) {                           \
          expr = static_cast<std::decay_t<decltype(expr)>>(to_u64(k, v));                        \
        },                                                                                       \
        [](const RunConfig& c) { return fmt(static_cast<std::uint64_t>(expr)); }                 \
  }
#define FS_BOOL(sec, name, expr)                                                                 \
  Field {                                                                                        \
    sec, name, [](RunConfig& c, const std::string& k, const std::string& v) { expr = to_bool(k, v); }, \
        [](const RunConfig& c) { return fmt(static_cast<bool>(expr)); }                          \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      FS_SIZE("benchmark", "num_classes", c.benchmark.num_classes),
      FS_SIZE("benchmark", "height", c.benchmark.height),
      FS_SIZE("benchmark", "width", c.benchmark.width),
      FS_DOUBLE("benchmark", "frequency_exponent", c.frequency_exponent),
      Field{"benchmark", "class_frequencies",
            [](RunConfig& c, const std::string& k, const std::string& v) {
              c.benchmark.class_frequencies.clear();
              for (const auto& x : split_list(v)) c.benchmark.class_frequencies.push_back(to_double(k, x));
            },
            [](const RunConfig& c) { return join(c.benchmark.class_frequencies); }},
      Field{"benchmark", "background_color",
            [](RunConfig& c, const std::string& k, const std::string& v) {
              const auto parts = split_list(v);
              require(parts.size() == 3, ErrorKind::Config, k + ": expected three values");
              for (std::size_t i = 0; i < 3; ++i) c.benchmark.background_color[i] = to_double(k, parts[i]);
            },
            [](const RunConfig& c) {
              return join(std::vector<double>(c.benchmark.background_color.begin(),
                                              c.benchmark.background_color.end()));
            }},
      FS_DOUBLE("benchmark", "color_jitter", c.benchmark.color_jitter),
      FS_DOUBLE("benchmark", "noise_sigma", c.benchmark.noise_sigma),
      FS_SIZE("benchmark", "train_count", c.benchmark.train_count),
      FS_SIZE("benchmark", "test_count", c.benchmark.test_count),
      FS_SIZE("benchmark", "seed", c.benchmark.seed),

      Field{"split", "steps",
            [](RunConfig& c, const std::string&, const std::string& v) { c.split = trim(v); },
            [](const RunConfig& c) { return c.split; }},

      FS_SIZE("model", "patch_size", c.train.model.patch_size),
      FS_SIZE("model", "feature_dim", c.train.model.feature_dim),
      Field{"model", "hidden",
            [](RunConfig& c, const std::string& k, const std::string& v) {
              c.train.model.hidden.clear();
              for (const auto& x : split_list(v)) c.train.model.hidden.push_back(to_u64(k, x));
            },
            [](const RunConfig& c) { return join(c.train.model.hidden); }},

      FS_SIZE("train", "epochs_initial", c.train.epochs_initial),
      FS_SIZE("train", "epochs_continual", c.train.epochs_continual),
      FS_SIZE("train", "batch_size", c.train.batch_size),
      FS_DOUBLE("train", "lr_initial", c.train.lr_initial),
      FS_DOUBLE("train", "lr_continual", c.train.lr_continual),
      FS_DOUBLE("train", "momentum", c.train.sgd_momentum),
      FS_DOUBLE("train", "weight_decay", c.train.weight_decay),
      FS_SIZE("train", "seed", c.train.seed),
      FS_SIZE("train", "threads", c.train.threads),

      Field{"losses", "ablation",
            [](RunConfig& c, const std::string&, const std::string& v) {
              const auto t = trim(v);
              if (t.empty()) {
                c.ablation.reset();
              } else {
                ablation_toggles(t);
                c.ablation = t;
              }
            },
            [](const RunConfig& c) { return c.ablation.value_or(""); }},
      FS_BOOL("losses", "cluster", c.train.toggles.cluster),
      FS_BOOL("losses", "class_weighting", c.train.toggles.class_weighting),
      FS_BOOL("losses", "cons", c.train.toggles.cons),
      FS_BOOL("losses", "distill", c.train.toggles.distill),
      FS_BOOL("losses", "ce_on_pseudo", c.train.toggles.ce_on_pseudo),
      FS_BOOL("losses", "pseudo_from_previous", c.train.toggles.pseudo_from_previous),
      FS_DOUBLE("losses", "lambda_cluster", c.train.weights.lambda_cluster),
      FS_DOUBLE("losses", "lambda_cons", c.train.weights.lambda_cons),
      FS_DOUBLE("losses", "lambda_distill", c.train.weights.lambda_distill),
      FS_DOUBLE("losses", "weight_smoothing", c.train.weight_smoothing),
      FS_DOUBLE("losses", "weight_min", c.train.weight_min),
      FS_DOUBLE("losses", "weight_max", c.train.weight_max),

      FS_DOUBLE("cluster", "margin", c.train.cluster.margin),
      FS_DOUBLE("cluster", "momentum", c.train.cluster.momentum),
      FS_SIZE("cluster", "update_period", c.train.cluster.update_period),
      FS_SIZE("cluster", "bank_capacity", c.train.cluster.bank_capacity),
      FS_SIZE("cluster", "deposits_per_class", c.train.cluster.deposits_per_class),

      FS_DOUBLE("cons", "sigma1", c.train.cons.sigma1),
      FS_DOUBLE("cons", "sigma2", c.train.cons.sigma2),
      FS_SIZE("cons", "window", c.train.cons.window),
      FS_BOOL("cons", "literal", c.train.cons.literal),

      Field{"output", "dir",
            [](RunConfig& c, const std::string&, const std::string& v) { c.output_dir = trim(v); },
            [](const RunConfig& c) { return c.output_dir.string(); }},
  };
  return table;
}

#undef FS_DOUBLE
#undef FS_SIZE
#undef FS_BOOL

const Field* find_field(const std::string& section, const std::string& key) {
  for (const auto& f : fields())
    if (section == f.section && key == f.key) return &f;
  return nullptr;
}

}  // namespace

TrainConfig RunConfig::resolved_train() const {
  TrainConfig t = train;
  t.split = TaskSplit::parse(split, benchmark.num_classes);
  if (ablation) {
    const LossToggles kept = t.toggles;
    t.toggles = ablation_toggles(*ablation);
    t.toggles.ce_on_pseudo = kept.ce_on_pseudo;
    t.toggles.pseudo_from_previous = kept.pseudo_from_previous;
  }
  return t;
}

void RunConfig::validate() const {
  try {
    benchmark.validate();
  } catch (const Error& e) {
    fail(ErrorKind::Config, std::string("[benchmark] ") + e.what());
  }
  resolved_train().validate();
}

RunConfig parse_run_config(const std::string& text) {
  pt::ptree tree;
  std::istringstream in(text);
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    fail(ErrorKind::Config, std::string("config syntax: ") + e.what());
  }
  RunConfig cfg;
  bool frequencies_given = false;
  for (const auto& [section, body] : tree) {
    require(body.data().empty(), ErrorKind::Config,
            "key '" + section + "' outside of a section");
    for (const auto& [key, value] : body) {
      const Field* f = find_field(section, key);
      require(f != nullptr, ErrorKind::Config, "unknown key [" + section + "] " + key);
      f->set(cfg, section + "." + key, value.data());
      if (section == "benchmark" && key == "class_frequencies") frequencies_given = true;
    }
  }
  if (!frequencies_given)
    cfg.benchmark.class_frequencies =
        power_law_frequencies(cfg.benchmark.num_classes, cfg.frequency_exponent);
  cfg.validate();
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorKind::Io, "cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str());
}

std::string dump_run_config(const RunConfig& cfg) {
  std::string out;
  std::string section;
  for (const auto& f : fields()) {
    if (section != f.section) {
      if (!section.empty()) out += "\n";
      section = f.section;
      out += "[" + section + "]\n";
    }
    out += std::string(f.key) + " = " + f.get(cfg) + "\n";
  }
  return out;
}

}  // namespace fairseg

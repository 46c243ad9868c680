#include "fuda/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <sstream>

namespace fuda {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const char* expected) {
  throw Error("config: " + key + " = '" + value + "' is not " + expected);
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used == v.size()) return d;
  } catch (const std::exception&) {
  }
  bad_value(key, v, "a number");
}

long long to_int(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const long long i = std::stoll(v, &used);
    if (used == v.size()) return i;
  } catch (const std::exception&) {
  }
  bad_value(key, v, "an integer");
}

std::uint64_t to_uint(const std::string& key, const std::string& v) {
  if (v.empty() || v[0] == '-') bad_value(key, v, "a nonnegative integer");
  try {
    std::size_t used = 0;
    const unsigned long long u = std::stoull(v, &used);
    if (used == v.size()) return u;
  } catch (const std::exception&) {
  }
  bad_value(key, v, "a nonnegative integer");
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  bad_value(key, v, "a boolean");
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> items;
  std::stringstream in(v);
  std::string item;
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (!item.empty()) items.push_back(item);
  }
  return items;
}

template <typename T, typename F>
std::vector<T> to_list(const std::string& v, F convert) {
  std::vector<T> out;
  for (const std::string& item : split_list(v)) out.push_back(static_cast<T>(convert(item)));
  return out;
}

// Shortest text that parses back to the same double.
std::string fmt(double d) {
  char buf[32];
  const auto [end, ec] = std::to_chars(buf, buf + sizeof buf, d);
  return std::string(buf, end);
}

template <typename T>
std::string join(const std::vector<T>& items) {
  std::ostringstream out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out << ',';
    if constexpr (std::is_floating_point_v<T>) out << fmt(items[i]);
    else out << items[i];
  }
  return out.str();
}

template <typename E>
E to_enum(const std::string& key, const std::string& v,
          std::initializer_list<std::pair<const char*, E>> names) {
  for (const auto& [name, value] : names)
    if (v == name) return value;
  std::string expected = "one of";
  for (const auto& [name, value] : names) expected += std::string(" ") + name;
  bad_value(key, v, expected.c_str());
}

std::string split_mode_name(const RunConfig& c) {
  if (!c.experiment.dataset.split_file.empty()) return "file";
  if (std::holds_alternative<LabelFraction>(c.experiment.dataset.split)) return "fraction";
  return "shots";
}

// Parse-time view of the [split] section; folded into the variant at the end.
struct SplitKnobs {
  std::string mode = "shots";
  int shots = 1;
  double fraction = 0.03;
  bool class_balanced = true;
  std::string file;
};

struct Field {
  const char* section;
  const char* key;
  std::function<void(RunConfig&, SplitKnobs&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

const std::vector<Field>& fields() {
  using K = SplitKnobs;
  auto ds = [](RunConfig& c) -> DatasetConfig& { return c.experiment.dataset; };
  auto syn = [](RunConfig& c) -> SyntheticShiftConfig& { return c.experiment.dataset.synthetic; };
  auto csyn = [](const RunConfig& c) -> const SyntheticShiftConfig& { return c.experiment.dataset.synthetic; };
  auto hp = [](RunConfig& c) -> HyperParams& { return c.experiment.hp; };
  auto chp = [](const RunConfig& c) -> const HyperParams& { return c.experiment.hp; };
  auto md = [](RunConfig& c) -> ModelConfig& { return c.experiment.model; };
  auto cmd = [](const RunConfig& c) -> const ModelConfig& { return c.experiment.model; };

#define FUDA_DOUBLE(sec, name, ref, cref, member)                                              \
  Field{sec, name, [=](RunConfig& c, K&, const std::string& v) { ref(c).member = to_double(sec "." name, v); }, \
        [=](const RunConfig& c) { return fmt(cref(c).member); }}
#define FUDA_INT(sec, name, ref, cref, member, T)                                              \
  Field{sec, name, [=](RunConfig& c, K&, const std::string& v) { ref(c).member = static_cast<T>(to_int(sec "." name, v)); }, \
        [=](const RunConfig& c) { return std::to_string(cref(c).member); }}

  static const std::vector<Field> table = {
      Field{"dataset", "source",
            [=](RunConfig& c, K&, const std::string& v) {
              ds(c).source = to_enum<DatasetSource>("dataset.source", v,
                                                    {{"synthetic", DatasetSource::synthetic},
                                                     {"table", DatasetSource::table}});
            },
            [](const RunConfig& c) {
              return std::string(c.experiment.dataset.source == DatasetSource::synthetic ? "synthetic" : "table");
            }},
      Field{"dataset", "num_classes",
            [=](RunConfig& c, K&, const std::string& v) {
              const int n = static_cast<int>(to_int("dataset.num_classes", v));
              syn(c).num_classes = n;
              ds(c).num_classes = n;
            },
            [](const RunConfig& c) { return std::to_string(c.experiment.dataset.classes()); }},
      FUDA_INT("dataset", "samples_per_class", syn, csyn, samples_per_class, int),
      FUDA_INT("dataset", "feature_dim", syn, csyn, feature_dim, int),
      FUDA_DOUBLE("dataset", "radius", syn, csyn, radius),
      FUDA_DOUBLE("dataset", "sigma", syn, csyn, sigma),
      FUDA_DOUBLE("dataset", "theta", syn, csyn, theta),
      Field{"dataset", "translation",
            [=](RunConfig& c, K&, const std::string& v) {
              syn(c).translation = to_list<double>(v, [](const std::string& s) { return to_double("dataset.translation", s); });
            },
            [](const RunConfig& c) { return join(c.experiment.dataset.synthetic.translation); }},
      FUDA_DOUBLE("dataset", "noise", syn, csyn, noise),
      Field{"dataset", "input_mode",
            [=](RunConfig& c, K&, const std::string& v) {
              syn(c).mode = to_enum<InputMode>("dataset.input_mode", v,
                                               {{"vector", InputMode::vector}, {"image16", InputMode::image16}});
            },
            [](const RunConfig& c) {
              return std::string(c.experiment.dataset.synthetic.mode == InputMode::vector ? "vector" : "image16");
            }},
      Field{"dataset", "source_path", [=](RunConfig& c, K&, const std::string& v) { ds(c).source_path = v; },
            [](const RunConfig& c) { return c.experiment.dataset.source_path; }},
      Field{"dataset", "target_path", [=](RunConfig& c, K&, const std::string& v) { ds(c).target_path = v; },
            [](const RunConfig& c) { return c.experiment.dataset.target_path; }},

      Field{"split", "mode", [](RunConfig&, K& k, const std::string& v) {
              if (v != "shots" && v != "fraction" && v != "file") bad_value("split.mode", v, "one of shots fraction file");
              k.mode = v;
            },
            [](const RunConfig& c) { return split_mode_name(c); }},
      Field{"split", "shots", [](RunConfig&, K& k, const std::string& v) { k.shots = static_cast<int>(to_int("split.shots", v)); },
            [](const RunConfig& c) {
              const auto* s = std::get_if<ShotsPerClass>(&c.experiment.dataset.split);
              return std::to_string(s ? s->shots : 1);
            }},
      Field{"split", "fraction", [](RunConfig&, K& k, const std::string& v) { k.fraction = to_double("split.fraction", v); },
            [](const RunConfig& c) {
              const auto* f = std::get_if<LabelFraction>(&c.experiment.dataset.split);
              return fmt(f ? f->fraction : 0.03);
            }},
      Field{"split", "class_balanced",
            [](RunConfig&, K& k, const std::string& v) { k.class_balanced = to_bool("split.class_balanced", v); },
            [](const RunConfig& c) {
              const auto* f = std::get_if<LabelFraction>(&c.experiment.dataset.split);
              return std::string(!f || f->class_balanced ? "true" : "false");
            }},
      Field{"split", "file", [](RunConfig&, K& k, const std::string& v) { k.file = v; },
            [](const RunConfig& c) { return c.experiment.dataset.split_file; }},

      Field{"model", "backbone",
            [=](RunConfig& c, K&, const std::string& v) {
              md(c).backbone = to_enum<Backbone>("model.backbone", v, {{"mlp", Backbone::mlp}, {"conv16", Backbone::conv16}});
            },
            [](const RunConfig& c) { return std::string(c.experiment.model.backbone == Backbone::mlp ? "mlp" : "conv16"); }},
      Field{"model", "hidden",
            [=](RunConfig& c, K&, const std::string& v) {
              md(c).hidden = to_list<Index>(v, [](const std::string& s) { return to_int("model.hidden", s); });
            },
            [](const RunConfig& c) { return join(c.experiment.model.hidden); }},
      Field{"model", "conv_channels",
            [=](RunConfig& c, K&, const std::string& v) {
              md(c).conv_channels = to_list<Index>(v, [](const std::string& s) { return to_int("model.conv_channels", s); });
            },
            [](const RunConfig& c) { return join(c.experiment.model.conv_channels); }},
      FUDA_INT("model", "feature_dim", md, cmd, feature_dim, Index),
      Field{"model", "activation",
            [=](RunConfig& c, K&, const std::string& v) {
              md(c).activation = to_enum<Activation>("model.activation", v,
                                                     {{"relu", Activation::relu}, {"tanh", Activation::tanh}});
            },
            [](const RunConfig& c) { return std::string(c.experiment.model.activation == Activation::relu ? "relu" : "tanh"); }},

      FUDA_DOUBLE("trainer", "alpha", hp, chp, alpha),
      FUDA_DOUBLE("trainer", "lambda_mi", hp, chp, lambda_mi),
      FUDA_DOUBLE("trainer", "lambda_self", hp, chp, lambda_self),
      FUDA_DOUBLE("trainer", "lambda_xvd", hp, chp, lambda_xvd),
      FUDA_DOUBLE("trainer", "lambda_ivd", hp, chp, lambda_ivd),
      FUDA_DOUBLE("trainer", "confident_ratio", hp, chp, confident_ratio),
      FUDA_DOUBLE("trainer", "easy_ratio", hp, chp, easy_ratio),
      FUDA_DOUBLE("trainer", "hard_ratio", hp, chp, hard_ratio),
      FUDA_DOUBLE("trainer", "temperature", hp, chp, temperature),
      FUDA_DOUBLE("trainer", "center_momentum", hp, chp, center_momentum),
      FUDA_DOUBLE("trainer", "bank_momentum", hp, chp, bank_momentum),
      FUDA_DOUBLE("trainer", "learning_rate", hp, chp, learning_rate),
      FUDA_DOUBLE("trainer", "momentum", hp, chp, momentum),
      FUDA_INT("trainer", "batch_size", hp, chp, batch_size, Index),
      FUDA_INT("trainer", "epochs", hp, chp, epochs, int),
      FUDA_INT("trainer", "warmup_epochs", hp, chp, warmup_epochs, int),
      FUDA_INT("trainer", "kmeans_restarts", hp, chp, kmeans_restarts, int),
      Field{"trainer", "self_variant",
            [=](RunConfig& c, K&, const std::string& v) {
              hp(c).self_variant = to_enum<SelfVariant>("trainer.self_variant", v,
                                                        {{"kmeans_proto", SelfVariant::kmeans_proto},
                                                         {"simplified_attention", SelfVariant::simplified_attention}});
            },
            [](const RunConfig& c) {
              return std::string(c.experiment.hp.self_variant == SelfVariant::kmeans_proto ? "kmeans_proto"
                                                                                           : "simplified_attention");
            }},
      Field{"trainer", "mixing",
            [=](RunConfig& c, K&, const std::string& v) {
              hp(c).mixing = to_enum<MixingStrategy>("trainer.mixing", v,
                                                     {{"confidence", MixingStrategy::confidence},
                                                      {"plain", MixingStrategy::plain}});
            },
            [](const RunConfig& c) {
              return std::string(c.experiment.hp.mixing == MixingStrategy::confidence ? "confidence" : "plain");
            }},
      Field{"trainer", "entropy_refresh",
            [=](RunConfig& c, K&, const std::string& v) {
              hp(c).entropy_refresh = to_enum<RefreshCadence>("trainer.entropy_refresh", v,
                                                              {{"epoch", RefreshCadence::epoch},
                                                               {"iteration", RefreshCadence::iteration}});
            },
            [](const RunConfig& c) {
              return std::string(c.experiment.hp.entropy_refresh == RefreshCadence::epoch ? "epoch" : "iteration");
            }},

      Field{"run", "variant", [](RunConfig& c, K&, const std::string& v) { c.variant = v; },
            [](const RunConfig& c) { return c.variant; }},
      Field{"run", "seeds",
            [](RunConfig& c, K&, const std::string& v) {
              c.seeds = to_list<std::uint64_t>(v, [](const std::string& s) { return to_uint("run.seeds", s); });
            },
            [](const RunConfig& c) { return join(c.seeds); }},
      Field{"run", "output_dir", [](RunConfig& c, K&, const std::string& v) { c.output_dir = v; },
            [](const RunConfig& c) { return c.output_dir; }},
      Field{"run", "checkpoint_every",
            [](RunConfig& c, K&, const std::string& v) {
              c.checkpoint_every = static_cast<int>(to_int("run.checkpoint_every", v));
            },
            [](const RunConfig& c) { return std::to_string(c.checkpoint_every); }},
      Field{"run", "debug_dumps",
            [](RunConfig& c, K&, const std::string& v) { c.debug_dumps = to_bool("run.debug_dumps", v); },
            [](const RunConfig& c) { return std::string(c.debug_dumps ? "true" : "false"); }},
  };
#undef FUDA_DOUBLE
#undef FUDA_INT
  return table;
}

const Field* find_field(const std::string& section, const std::string& key) {
  for (const Field& f : fields())
    if (section == f.section && key == f.key) return &f;
  return nullptr;
}

}  // namespace

void RunConfig::validate() const {
  experiment.dataset.validate();
  experiment.hp.validate();
  ModelConfig probe = experiment.model;
  probe.input_dim = experiment.dataset.source == DatasetSource::synthetic
                        ? experiment.dataset.synthetic.input_dim()
                        : std::max<Index>(probe.input_dim, 1);
  probe.num_classes = experiment.dataset.classes();
  probe.validate();
  parse_variant(variant);
  if (seeds.empty()) throw Error("config: run.seeds must list at least one seed");
  if (checkpoint_every < 0) throw Error("config: run.checkpoint_every must be nonnegative");
}

std::string RunConfig::resolved_output_dir() const {
  if (!output_dir.empty()) return output_dir;
  if (const char* env = std::getenv("FUDA_OUT_DIR"); env && *env) return env;
  return "runs";
}

RunConfig parse_run_config(std::istream& in, const std::vector<std::string>& overrides) {
  boost::property_tree::ptree tree;
  try {
    boost::property_tree::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw Error(std::string("config: ") + e.what());
  }

  // Ordered by the field table so values apply deterministically.
  std::map<std::string, std::string> values;
  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty())
      throw Error("config: key '" + section + "' appears outside any section");
    for (const auto& [key, leaf] : body) {
      if (!find_field(section, key)) throw Error("config: unknown key " + section + "." + key);
      values[section + "." + key] = trim(leaf.data());
    }
  }
  for (const std::string& o : overrides) {
    const auto eq = o.find('=');
    const auto dot = o.find('.');
    if (eq == std::string::npos || dot == std::string::npos || dot > eq)
      throw Error("config: override '" + o + "' is not section.key=value");
    const std::string section = trim(o.substr(0, dot));
    const std::string key = trim(o.substr(dot + 1, eq - dot - 1));
    if (!find_field(section, key)) throw Error("config: unknown override key " + section + "." + key);
    values[section + "." + key] = trim(o.substr(eq + 1));
  }

  RunConfig config;
  config.overrides = overrides;
  SplitKnobs knobs;
  for (const Field& f : fields()) {
    const auto it = values.find(std::string(f.section) + "." + f.key);
    if (it != values.end()) f.set(config, knobs, it->second);
  }
  DatasetConfig& ds = config.experiment.dataset;
  if (knobs.mode == "shots") {
    ds.split = ShotsPerClass{knobs.shots};
  } else if (knobs.mode == "fraction") {
    ds.split = LabelFraction{knobs.fraction, knobs.class_balanced};
  } else {
    if (knobs.file.empty()) throw Error("config: split.mode = file needs split.file");
    ds.split = ExplicitList{};
    ds.split_file = knobs.file;
  }
  config.validate();
  return config;
}

RunConfig load_run_config(const std::string& path, const std::vector<std::string>& overrides) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config " + path);
  return parse_run_config(in, overrides);
}

std::string render_run_config(const RunConfig& config) {
  std::ostringstream out;
  out << "# effective configuration; reproduce a run from this file alone\n";
  for (const std::string& o : config.overrides) out << "# override: " << o << '\n';
  std::string section;
  for (const Field& f : fields()) {
    if (section != f.section) {
      section = f.section;
      out << "\n[" << section << "]\n";
    }
    out << f.key << " = " << f.get(config) << '\n';
  }
  return out.str();
}

}  // namespace fuda

#ifndef SFFNET_CONFIG_HPP
#define SFFNET_CONFIG_HPP

#include <cstdint>
#include <cstdio>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "sffnet/data.hpp"
#include "sffnet/model.hpp"
#include "sffnet/optim.hpp"

namespace sffnet {

struct TrainOptions {
  int epochs = 200;
  int batch_size = 4;
  AdamWOptions adamw;
  double lr_min = 1e-6;
  int restart_period = 15;    // T0, epochs in the first cosine cycle
  int restart_mult = 2;       // each later cycle is this many times longer
  std::uint64_t seed = 0;
  int eval_every = 1;         // epochs between evaluations; the last epoch is always evaluated
  bool save_last = true;      // keep last.ckpt for resumption

  CosineSchedule schedule() const { return {adamw.lr, lr_min, restart_period, restart_mult}; }
};

struct DataOptions {
  std::string train_split = "train";
  std::string eval_split = "val";  // empty or missing split: evaluate on the training samples
  int ignore_index = kDefaultIgnoreIndex;
  double val_fraction = 0.25;      // gen-data: share of samples assigned to "val"
};

struct EvalOptions {
  std::vector<int> exclude_classes{kClutter};  // left out of meanF1/mIoU
};

struct RunConfig {
  ModelConfig model;
  TrainOptions train;
  AugmentSpec augment;
  bool augment_enabled = true;
  SyntheticSpec synthetic;
  DataOptions data;
  EvalOptions eval;
};

namespace config_detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline int to_int(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  int out = 0;
  try {
    out = std::stoi(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != v.size()) throw ConfigError(key + ": expected an integer, got '" + v + "'");
  return out;
}

inline std::uint64_t to_u64(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  std::uint64_t out = 0;
  try {
    if (!v.empty() && v[0] != '-') out = std::stoull(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != v.size()) throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
  return out;
}

inline double to_double(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double out = 0;
  try {
    out = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != v.size()) throw ConfigError(key + ": expected a number, got '" + v + "'");
  return out;
}

inline bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

inline std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream s(v);
  std::string item;
  while (std::getline(s, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

inline std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

template <typename U, typename F>
std::string join(const std::vector<U>& v, F f) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + f(v[i]);
  return s;
}

}  // namespace config_detail

struct ConfigKey {
  std::string name;
  std::string help;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

/// Every recognised key, in documentation order.
inline const std::vector<ConfigKey>& config_keys() {
  using namespace config_detail;
  auto int_key = [](std::string name, std::string help, auto member) {
    return ConfigKey{name, std::move(help),
                     [member, name](RunConfig& c, const std::string& v) { member(c) = to_int(name, v); },
                     [member](const RunConfig& c) { return std::to_string(member(c)); }};
  };
  auto real_key = [](std::string name, std::string help, auto member) {
    return ConfigKey{name, std::move(help),
                     [member, name](RunConfig& c, const std::string& v) { member(c) = to_double(name, v); },
                     [member](const RunConfig& c) { return fmt(member(c)); }};
  };
  auto bool_key = [](std::string name, std::string help, auto member) {
    return ConfigKey{name, std::move(help),
                     [member, name](RunConfig& c, const std::string& v) { member(c) = to_bool(name, v); },
                     [member](const RunConfig& c) { return std::string(member(c) ? "true" : "false"); }};
  };
  auto seed_key = [](std::string name, std::string help, auto member) {
    return ConfigKey{name, std::move(help),
                     [member, name](RunConfig& c, const std::string& v) { member(c) = to_u64(name, v); },
                     [member](const RunConfig& c) { return std::to_string(member(c)); }};
  };
  auto str_key = [](std::string name, std::string help, auto member) {
    return ConfigKey{name, std::move(help), [member](RunConfig& c, const std::string& v) { member(c) = v; },
                     [member](const RunConfig& c) { return member(c); }};
  };
#define SFFNET_FIELD(expr) [](auto& c) -> auto& { return c.expr; }
  static const std::vector<ConfigKey> keys = [&] {
    std::vector<ConfigKey> k;
    k.push_back(int_key("model.in_channels", "input image channels", SFFNET_FIELD(model.in_channels)));
    k.push_back(int_key("model.base_channels", "backbone width C (ladder C, 2C, 4C, 8C)",
                        SFFNET_FIELD(model.base_channels)));
    k.push_back(int_key("model.mapped_channels", "stage-2 branch output width C_m (even for mdaf fusion)",
                        SFFNET_FIELD(model.mapped_channels)));
    k.push_back(int_key("model.window_size", "global-branch attention window ws",
                        SFFNET_FIELD(model.window_size)));
    k.push_back(int_key("model.num_classes", "number of classes K", SFFNET_FIELD(model.num_classes)));
    k.push_back(int_key("model.heads", "attention heads in the global branch", SFFNET_FIELD(model.heads)));
    k.push_back(bool_key("model.relative_position_bias", "learned relative position bias in window attention",
                         SFFNET_FIELD(model.relative_position_bias)));
    k.push_back(bool_key("model.use_global", "enable the global (window attention) branch",
                         SFFNET_FIELD(model.use_global)));
    k.push_back(bool_key("model.use_local", "enable the local (conv + SPP) branch", SFFNET_FIELD(model.use_local)));
    k.push_back(bool_key("model.use_wtfd_low", "enable the wavelet low-frequency output",
                         SFFNET_FIELD(model.use_wtfd_low)));
    k.push_back(bool_key("model.use_wtfd_high", "enable the wavelet high-frequency output",
                         SFFNET_FIELD(model.use_wtfd_high)));
    k.push_back(ConfigKey{"model.fusion", "stage-2 pair fusion: mdaf | concat | add",
                          [](RunConfig& c, const std::string& v) { c.model.fusion = parse_fusion_mode(v); },
                          [](const RunConfig& c) { return std::string(to_string(c.model.fusion)); }});
    k.push_back(ConfigKey{"model.pairing", "spatial/frequency pairing: standard (global-low, local-high) | crossed",
                          [](RunConfig& c, const std::string& v) { c.model.pairing = parse_pairing(v); },
                          [](const RunConfig& c) { return std::string(to_string(c.model.pairing)); }});
    k.push_back(real_key("model.mdaf_temperature", "MDAF softmax temperature; <= 0 uses sqrt(C_m*H*W)",
                         SFFNET_FIELD(model.mdaf_temperature)));

    k.push_back(int_key("train.epochs", "training epochs", SFFNET_FIELD(train.epochs)));
    k.push_back(int_key("train.batch_size", "images per optimizer step", SFFNET_FIELD(train.batch_size)));
    k.push_back(real_key("train.lr", "base (maximum) learning rate", SFFNET_FIELD(train.adamw.lr)));
    k.push_back(real_key("train.lr_min", "learning rate at the end of each cosine cycle", SFFNET_FIELD(train.lr_min)));
    k.push_back(int_key("train.restart_period", "epochs in the first cosine cycle",
                        SFFNET_FIELD(train.restart_period)));
    k.push_back(int_key("train.restart_mult", "cycle length multiplier after each restart",
                        SFFNET_FIELD(train.restart_mult)));
    k.push_back(real_key("train.weight_decay", "decoupled weight decay", SFFNET_FIELD(train.adamw.weight_decay)));
    k.push_back(real_key("train.beta1", "first-moment decay", SFFNET_FIELD(train.adamw.beta1)));
    k.push_back(real_key("train.beta2", "second-moment decay", SFFNET_FIELD(train.adamw.beta2)));
    k.push_back(real_key("train.eps", "optimizer denominator epsilon", SFFNET_FIELD(train.adamw.eps)));
    k.push_back(seed_key("train.seed", "seed for initialization, shuffling and augmentation",
                         SFFNET_FIELD(train.seed)));
    k.push_back(int_key("train.eval_every", "epochs between evaluations", SFFNET_FIELD(train.eval_every)));
    k.push_back(bool_key("train.save_last", "write last.ckpt after every epoch", SFFNET_FIELD(train.save_last)));

    k.push_back(bool_key("augment.enabled", "apply augmentation to training samples", SFFNET_FIELD(augment_enabled)));
    k.push_back(ConfigKey{
        "augment.scales", "comma-separated scale factors drawn uniformly",
        [](RunConfig& c, const std::string& v) {
          std::vector<double> s;
          for (const auto& x : config_detail::split_list(v)) s.push_back(config_detail::to_double("augment.scales", x));
          if (s.empty()) throw ConfigError("augment.scales: need at least one scale");
          for (double x : s)
            if (x <= 0) throw ConfigError("augment.scales: scales must be positive");
          c.augment.scales = s;
        },
        [](const RunConfig& c) { return config_detail::join(c.augment.scales, config_detail::fmt); }});
    k.push_back(real_key("augment.hflip", "probability of a horizontal flip", SFFNET_FIELD(augment.hflip)));
    k.push_back(real_key("augment.vflip", "probability of a vertical flip", SFFNET_FIELD(augment.vflip)));
    k.push_back(ConfigKey{
        "augment.rotations", "comma-separated quarter turns to draw from (0-3)",
        [](RunConfig& c, const std::string& v) {
          std::vector<int> r;
          for (const auto& x : config_detail::split_list(v)) {
            const int t = config_detail::to_int("augment.rotations", x);
            if (t < 0 || t > 3) throw ConfigError("augment.rotations: quarter turns must be in [0, 3]");
            r.push_back(t);
          }
          if (r.empty()) throw ConfigError("augment.rotations: need at least one entry");
          c.augment.rotations = r;
        },
        [](const RunConfig& c) {
          return config_detail::join(c.augment.rotations, [](int t) { return std::to_string(t); });
        }});
    k.push_back(int_key("augment.crop", "square training crop after scaling (0 uses the tile size)",
                        SFFNET_FIELD(augment.crop)));

    k.push_back(int_key("data.height", "gen-data tile height", SFFNET_FIELD(synthetic.height)));
    k.push_back(int_key("data.width", "gen-data tile width", SFFNET_FIELD(synthetic.width)));
    k.push_back(real_key("data.density", "gen-data foreground density multiplier", SFFNET_FIELD(synthetic.density)));
    k.push_back(real_key("data.shadow_strength", "gen-data shadow darkening in [0, 1]",
                         SFFNET_FIELD(synthetic.shadow_strength)));
    k.push_back(real_key("data.texture", "gen-data texture noise amplitude", SFFNET_FIELD(synthetic.texture)));
    k.push_back(bool_key("data.shadow_ignore", "gen-data marks shadowed pixels with the ignore index",
                         SFFNET_FIELD(synthetic.shadow_ignore)));
    k.push_back(seed_key("data.seed", "gen-data corpus seed", SFFNET_FIELD(synthetic.seed)));
    k.push_back(real_key("data.val_fraction", "gen-data share of samples in the val split",
                         SFFNET_FIELD(data.val_fraction)));
    k.push_back(str_key("data.train_split", "manifest split used for training", SFFNET_FIELD(data.train_split)));
    k.push_back(str_key("data.eval_split", "manifest split used for evaluation (empty: training samples)",
                        SFFNET_FIELD(data.eval_split)));
    k.push_back(int_key("data.ignore_index", "label value excluded from loss and metrics",
                        SFFNET_FIELD(data.ignore_index)));

    k.push_back(ConfigKey{
        "eval.exclude_class", "comma-separated classes left out of meanF1/mIoU (none: empty)",
        [](RunConfig& c, const std::string& v) {
          std::vector<int> e;
          if (v != "none")
            for (const auto& x : config_detail::split_list(v)) e.push_back(config_detail::to_int("eval.exclude_class", x));
          c.eval.exclude_classes = e;
        },
        [](const RunConfig& c) {
          return config_detail::join(c.eval.exclude_classes, [](int t) { return std::to_string(t); });
        }});
    return k;
  }();
#undef SFFNET_FIELD
  return keys;
}

inline const ConfigKey& find_config_key(const std::string& name) {
  for (const auto& k : config_keys())
    if (k.name == name) return k;
  throw ConfigError("unknown config key '" + name + "'");
}

/// Applies "key=value".
inline void apply_override(RunConfig& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("override '" + assignment + "' is not of the form key=value");
  find_config_key(config_detail::trim(assignment.substr(0, eq))).set(cfg, config_detail::trim(assignment.substr(eq + 1)));
}

/// Cross-field checks; run after all values are in place.
inline void validate(const RunConfig& c) {
  c.model.validate();
  auto need = [](bool ok, const std::string& msg) {
    if (!ok) throw ConfigError(msg);
  };
  need(c.train.epochs >= 0, "train.epochs must be >= 0");
  need(c.train.batch_size >= 1, "train.batch_size must be >= 1");
  need(c.train.adamw.lr >= 0 && c.train.lr_min >= 0 && c.train.lr_min <= c.train.adamw.lr,
       "need 0 <= train.lr_min <= train.lr");
  need(c.train.restart_period >= 1 && c.train.restart_mult >= 1, "restart period and multiplier must be >= 1");
  need(c.train.eval_every >= 1, "train.eval_every must be >= 1");
  need(c.augment.hflip >= 0 && c.augment.hflip <= 1 && c.augment.vflip >= 0 && c.augment.vflip <= 1,
       "flip probabilities must be in [0, 1]");
  need(c.augment.crop >= 0 && c.augment.crop % 16 == 0, "augment.crop must be a non-negative multiple of 16");
  need(c.data.val_fraction >= 0 && c.data.val_fraction <= 1, "data.val_fraction must be in [0, 1]");
  need(c.data.ignore_index < 0 || c.data.ignore_index >= c.model.num_classes,
       "data.ignore_index must not be a class id");
  for (int e : c.eval.exclude_classes)
    need(e >= 0 && e < c.model.num_classes, "eval.exclude_class entries must be class ids");
  SyntheticSpec s = c.synthetic;
  s.num_classes = c.model.num_classes;
  if (s.num_classes <= 6) s.validate();
}

/// Parses "key = value" lines; '#' starts a comment. Later lines win.
inline void apply_config_text(RunConfig& cfg, const std::string& text, const std::string& source = "config") {
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = config_detail::trim(line);
    if (line.empty()) continue;
    try {
      apply_override(cfg, line);
    } catch (const ConfigError& e) {
      throw ConfigError(source + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
}

/// Every key with its current value, one "key = value" line each.
inline std::string serialize_config(const RunConfig& cfg) {
  std::string out;
  for (const auto& k : config_keys()) out += k.name + " = " + k.get(cfg) + "\n";
  return out;
}

/// Key listing for --help.
inline std::string config_help(const RunConfig& defaults = {}) {
  std::string out = "Config keys (file lines 'key = value', or --set key=value):\n";
  for (const auto& k : config_keys()) {
    out += "  " + k.name + " (default " + (k.get(defaults).empty() ? "<empty>" : k.get(defaults)) + ")\n      " +
           k.help + "\n";
  }
  return out;
}

inline SyntheticSpec synthetic_spec(const RunConfig& c) {
  SyntheticSpec s = c.synthetic;
  s.num_classes = c.model.num_classes;
  s.ignore_index = c.data.ignore_index;
  return s;
}

inline AugmentSpec augment_spec(const RunConfig& c) {
  AugmentSpec a = c.augment_enabled ? c.augment : AugmentSpec::identity();
  a.crop = c.augment.crop;
  a.seed = c.train.seed;
  a.ignore_index = c.data.ignore_index;
  return a;
}

}  // namespace sffnet

#endif  // SFFNET_CONFIG_HPP

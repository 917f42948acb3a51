#ifndef SFFNET_TRAINER_HPP
#define SFFNET_TRAINER_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <optional>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include "sffnet/checkpoint.hpp"
#include "sffnet/config.hpp"
#include "sffnet/data.hpp"
#include "sffnet/losses.hpp"
#include "sffnet/metrics.hpp"
#include "sffnet/model.hpp"
#include "sffnet/optim.hpp"

namespace sffnet {

/// Worker threads for evaluation: SFFNET_THREADS if set to a positive integer, else 1.
inline int thread_count() {
  if (const char* env = std::getenv("SFFNET_THREADS")) {
    char* end = nullptr;
    const long n = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && n > 0) return static_cast<int>(std::min(n, 256L));
  }
  return 1;
}

/// Per-pixel argmax over channels of (N, K, H, W) logits.
template <typename T>
LabelMap argmax_labels(const Tensor<T>& logits) {
  const Shape s = logits.shape();
  LabelMap out(s.n, s.h, s.w);
  const std::size_t plane = s.plane();
  for (int n = 0; n < s.n; ++n)
    for (std::size_t i = 0; i < plane; ++i) {
      const std::size_t base = logits.offset(n, 0, 0, 0) + i;
      int best = 0;
      for (int c = 1; c < s.c; ++c)
        if (logits[base + c * plane] > logits[base + best * plane]) best = c;
      out.data[n * plane + i] = best;
    }
  return out;
}

template <typename T>
LabelMap predict(const SffNet<T>& net, const Sample& s) {
  NoGradGuard guard;
  return argmax_labels(net(Var<T>(s.image.template cast<T>()), Mode::eval).value());
}

/// Confusion matrix of eval-mode predictions; samples are split across
/// `threads` workers and their matrices merged.
template <typename T>
ConfusionMatrix evaluate(const SffNet<T>& net, const std::vector<Sample>& samples, int ignore_index,
                         int threads = 1) {
  const int k = net.config().num_classes;
  threads = std::max(1, std::min<int>(threads, static_cast<int>(samples.size())));
  std::vector<ConfusionMatrix> parts(threads, ConfusionMatrix(k, ignore_index));
  auto work = [&](int t) {
    for (std::size_t i = t; i < samples.size(); i += threads) parts[t].accumulate(predict(net, samples[i]), samples[i].label);
  };
  if (threads == 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(work, t);
    for (auto& th : pool) th.join();
  }
  ConfusionMatrix cm(k, ignore_index);
  for (const auto& p : parts) cm.merge(p);
  return cm;
}

struct EpochLog {
  int epoch = 0;
  double lr = 0;
  double loss_total = 0, loss_ce = 0, loss_dice = 0;
  bool evaluated = false;
  double miou = 0, mean_f1 = 0, oa = 0;
};

inline std::string log_csv_header() {
  return "epoch,lr,train_loss_total,train_loss_ce,train_loss_dice,eval_mIoU,eval_meanF1,eval_OA";
}

inline std::string log_csv_row(const EpochLog& e) {
  auto f = [](double v) { return format_fixed(v, 10); };
  std::string row = std::to_string(e.epoch) + "," + config_detail::fmt(e.lr) + "," + f(e.loss_total) + "," +
                    f(e.loss_ce) + "," + f(e.loss_dice);
  if (e.evaluated) return row + "," + f(e.miou) + "," + f(e.mean_f1) + "," + f(e.oa);
  return row + ",,,";
}

struct TrainResult {
  std::vector<EpochLog> log;
  double best_miou = -1;
  int best_epoch = -1;
  std::int64_t steps = 0;
};

struct TrainIo {
  std::filesystem::path out_dir;                // empty: no files are written
  std::optional<std::filesystem::path> resume;  // checkpoint to continue from
  std::ostream* progress = nullptr;             // one line per epoch
};

/// Per-epoch training sample: augmentation draws depend only on (seed, epoch, index).
inline Sample training_view(const Sample& s, const AugmentSpec& spec, int epoch, std::size_t index) {
  Rng rng(Rng::mix(Rng::mix(spec.seed ^ 0x5AFE5EEDULL, static_cast<std::uint64_t>(epoch)), index));
  return augment(s, spec, rng);
}

/// Sample visiting order of one epoch.
inline std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, int epoch) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(Rng::mix(seed ^ 0x0DDBA11ULL, static_cast<std::uint64_t>(epoch)));
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  return order;
}

/// Owns the model and optimizer for one run.
template <typename T>
class Trainer {
 public:
  explicit Trainer(const RunConfig& cfg)
      : cfg_(checked(cfg)), net_(cfg.model, cfg.train.seed), opt_(net_.registry().parameters(), cfg.train.adamw) {}

  SffNet<T>& model() { return net_; }
  const SffNet<T>& model() const { return net_; }
  AdamW<T>& optimizer() { return opt_; }
  const RunConfig& config() const { return cfg_; }

  /// Runs one epoch and returns mean losses over the samples seen.
  EpochLog train_epoch(const std::vector<Sample>& train, int epoch) {
    if (train.empty()) throw ConfigError("train: the training split is empty");
    AugmentSpec spec = augment_spec(cfg_);
    if (spec.crop == 0) spec.crop = std::min(train.front().image.shape().h, train.front().image.shape().w);
    EpochLog e;
    e.epoch = epoch;
    e.lr = cfg_.train.schedule().lr_at(epoch);
    const auto order = epoch_order(train.size(), cfg_.train.seed, epoch);
    const std::size_t bs = static_cast<std::size_t>(cfg_.train.batch_size);
    double tot = 0, ce = 0, dice = 0;
    for (std::size_t start = 0; start < order.size(); start += bs) {
      std::vector<Sample> views;
      for (std::size_t j = start; j < std::min(order.size(), start + bs); ++j) {
        views.push_back(training_view(train[order[j]], spec, epoch, order[j]));
      }
      std::vector<const Sample*> ptrs;
      for (const auto& v : views) ptrs.push_back(&v);
      const auto batch = make_batch<T>(ptrs, cfg_.data.ignore_index);
      net_.registry().zero_grad();
      const auto loss = total_loss(net_(Var<T>(batch.images), Mode::train), batch.labels, cfg_.data.ignore_index);
      backward(loss.total);
      opt_.step(e.lr);
      const double w = static_cast<double>(views.size());
      tot += w * loss.total.value()[0];
      ce += w * loss.ce.value()[0];
      dice += w * loss.dice.value()[0];
    }
    const double n = static_cast<double>(order.size());
    e.loss_total = tot / n;
    e.loss_ce = ce / n;
    e.loss_dice = dice / n;
    return e;
  }

  MetricsReport evaluate_on(const std::vector<Sample>& samples) const {
    const auto cm = evaluate(net_, samples, cfg_.data.ignore_index, thread_count());
    return compute_metrics(cm, cfg_.eval.exclude_classes);
  }

  Checkpoint snapshot(std::int64_t epoch, double best_miou, std::int64_t best_epoch) {
    Checkpoint c;
    c.config_text = serialize_config(cfg_);
    c.step = opt_.steps();
    c.epoch = epoch;
    c.best_miou = best_miou;
    c.best_epoch = best_epoch;
    store_model_state(c, net_, &opt_);
    return c;
  }

  void restore(const Checkpoint& c) { load_model_state(c, net_, &opt_); }

  /// Full loop: train, evaluate, log, keep best/last checkpoints.
  TrainResult fit(const std::vector<Sample>& train, const std::vector<Sample>& eval_set, const TrainIo& io = {}) {
    const std::vector<Sample>& eval = eval_set.empty() ? train : eval_set;
    TrainResult r;
    int first_epoch = 0;
    if (io.resume) {
      const Checkpoint c = load_checkpoint(*io.resume);
      restore(c);
      first_epoch = static_cast<int>(c.epoch + 1);
      r.best_miou = c.best_miou;
      r.best_epoch = static_cast<int>(c.best_epoch);
    }
    std::ofstream log;
    const bool files = !io.out_dir.empty();
    if (files) {
      std::error_code ec;
      std::filesystem::create_directories(io.out_dir, ec);
      if (ec) throw IoError("cannot create output directory '" + io.out_dir.string() + "': " + ec.message());
      const auto path = io.out_dir / "train_log.csv";
      const bool append = io.resume && std::filesystem::exists(path);
      log.open(path, append ? std::ios::app : std::ios::trunc);
      if (!log) throw IoError("cannot open '" + path.string() + "' for writing");
      if (!append) {
        std::istringstream cfg_lines(serialize_config(cfg_));
        for (std::string line; std::getline(cfg_lines, line);) log << "# " << line << '\n';
        log << log_csv_header() << '\n';
      }
    }
    const auto last_path = io.out_dir / "last.ckpt";
    for (int epoch = first_epoch; epoch < cfg_.train.epochs; ++epoch) {
      const auto diverged = [&](const NumericError& err) {
        std::string where = files && cfg_.train.save_last && std::filesystem::exists(last_path)
                                ? "; last good checkpoint: " + last_path.string()
                                : "; no checkpoint was written";
        return NumericError(std::string("training diverged in epoch ") + std::to_string(epoch) + ": " + err.what() +
                            where);
      };
      EpochLog e;
      try {
        e = train_epoch(train, epoch);
      } catch (const NumericError& err) {
        throw diverged(err);
      }
      const bool last_epoch = epoch + 1 == cfg_.train.epochs;
      if (last_epoch || (epoch + 1) % cfg_.train.eval_every == 0) {
        MetricsReport m;
        try {
          m = evaluate_on(eval);
        } catch (const NumericError& err) {
          throw diverged(err);
        }
        e.evaluated = true;
        e.miou = m.miou;
        e.mean_f1 = m.mean_f1;
        e.oa = m.oa;
        if (m.miou > r.best_miou) {
          r.best_miou = m.miou;
          r.best_epoch = epoch;
          if (files) save_checkpoint(io.out_dir / "best.ckpt", snapshot(epoch, r.best_miou, r.best_epoch));
        }
      }
      if (files) {
        log << log_csv_row(e) << '\n' << std::flush;
        if (cfg_.train.save_last) save_checkpoint(last_path, snapshot(epoch, r.best_miou, r.best_epoch));
      }
      if (io.progress) {
        *io.progress << "epoch " << epoch << " lr " << config_detail::fmt(e.lr) << " loss " << format_fixed(e.loss_total, 6);
        if (e.evaluated) *io.progress << " mIoU " << format_fixed(e.miou, 4);
        *io.progress << '\n' << std::flush;
      }
      r.log.push_back(e);
    }
    r.steps = opt_.steps();
    return r;
  }

 private:
  static const RunConfig& checked(const RunConfig& c) {
    validate(c);
    return c;
  }

  RunConfig cfg_;
  SffNet<T> net_;
  AdamW<T> opt_;
};

/// Rebuilds the run configuration stored in a checkpoint.
inline RunConfig config_from_checkpoint(const Checkpoint& c) {
  RunConfig cfg;
  apply_config_text(cfg, c.config_text, "checkpoint config");
  return cfg;
}

struct AblationRow {
  std::string variant;
  std::uint64_t seed = 0;
  std::uint64_t params = 0;
  double miou = 0, mean_f1 = 0, oa = 0;
};

inline std::string ablation_csv_header() { return "variant,seed,params,meanF1,mIoU,OA"; }

inline std::string ablation_csv_row(const AblationRow& r) {
  return r.variant + "," + std::to_string(r.seed) + "," + std::to_string(r.params) + "," +
         format_fixed(100 * r.mean_f1, 2) + "," + format_fixed(100 * r.miou, 2) + "," + format_fixed(100 * r.oa, 2);
}

/// Trains every variant for each seed and reports its final evaluation.
template <typename T>
std::vector<AblationRow> run_ablation(const RunConfig& base, const std::vector<Sample>& train,
                                      const std::vector<Sample>& eval, const std::vector<std::uint64_t>& seeds,
                                      const std::vector<std::string>& variants = ablation_variant_names(),
                                      std::ostream* progress = nullptr) {
  std::vector<AblationRow> rows;
  for (const auto seed : seeds) {
    for (const auto& v : variants) {
      RunConfig cfg = base;
      cfg.model = with_ablation(base.model, v);
      cfg.train.seed = seed;
      Trainer<T> t(cfg);
      t.fit(train, eval);
      const auto m = t.evaluate_on(eval.empty() ? train : eval);
      rows.push_back({v, seed, static_cast<std::uint64_t>(t.model().registry().parameter_count()), m.miou, m.mean_f1,
                      m.oa});
      if (progress) *progress << ablation_csv_row(rows.back()) << '\n' << std::flush;
    }
  }
  return rows;
}

}  // namespace sffnet

#endif  // SFFNET_TRAINER_HPP

// sffnet command-line driver. Exit codes: 0 success, 1 numeric failure, 2 usage or I/O error.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "sffnet/sffnet.hpp"

namespace fs = std::filesystem;
using namespace sffnet;

namespace {

constexpr int kNumericFailure = 1;
constexpr int kUsageFailure = 2;

struct ConfigArgs {
  std::string file;
  std::vector<std::string> sets;
};

void add_config_options(CLI::App* cmd, ConfigArgs& a) {
  cmd->add_option("--config,--spec", a.file, "Config file with 'key = value' lines");
  cmd->add_option("--set", a.sets, "Override one key, e.g. --set train.epochs=50")->take_all();
}

RunConfig load_config(const ConfigArgs& a) {
  RunConfig cfg;
  if (!a.file.empty()) {
    const Bytes b = read_file(a.file);
    apply_config_text(cfg, std::string(b.begin(), b.end()), a.file);
  }
  for (const auto& s : a.sets) apply_override(cfg, s);
  validate(cfg);
  return cfg;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  write_file(path, Bytes(text.begin(), text.end()));
}

std::vector<Sample> load_split(const fs::path& dir, const std::string& split, int ignore) {
  if (!fs::is_directory(dir)) throw IoError("data directory '" + dir.string() + "' does not exist");
  return load_dataset(dir, split, ignore);
}

// --- gen-data -----------------------------------------------------------------------------

int cmd_gen_data(const ConfigArgs& ca, const std::string& out, std::size_t count, std::optional<std::uint64_t> seed) {
  RunConfig cfg = load_config(ca);
  if (seed) cfg.synthetic.seed = *seed;
  const SyntheticSpec spec = synthetic_spec(cfg);
  spec.validate();
  prepare_dataset_dir(out);
  const auto n_val = static_cast<std::size_t>(std::llround(cfg.data.val_fraction * static_cast<double>(count)));
  std::vector<ManifestEntry> manifest;
  for (std::size_t i = 0; i < count; ++i) {
    const std::string stem = sample_stem(i);
    write_sample(out, stem, synthetic_sample(spec, i), cfg.data.ignore_index);
    manifest.push_back({stem, i + n_val < count ? cfg.data.train_split : cfg.data.eval_split});
  }
  write_manifest(out, manifest);
  write_text(fs::path(out) / "config.cfg", serialize_config(cfg));
  std::cout << "wrote " << count << " samples (" << count - n_val << " " << cfg.data.train_split << ", " << n_val
            << " " << cfg.data.eval_split << ") to " << out << '\n';
  return 0;
}

// --- train ----------------------------------------------------------------------------------

int cmd_train(const ConfigArgs& ca, const std::string& data, const std::string& out, const std::string& resume,
              std::optional<std::uint64_t> seed) {
  RunConfig cfg = load_config(ca);
  if (seed) cfg.train.seed = *seed;
  const auto train = load_split(data, cfg.data.train_split, cfg.data.ignore_index);
  if (train.empty()) throw ConfigError("split '" + cfg.data.train_split + "' of " + data + " is empty");
  const auto eval = cfg.data.eval_split.empty() ? std::vector<Sample>{}
                                                : load_split(data, cfg.data.eval_split, cfg.data.ignore_index);
  std::cout << "train " << train.size() << " samples, eval " << (eval.empty() ? train.size() : eval.size())
            << (eval.empty() ? " (training samples)" : "") << '\n';
  Trainer<float> trainer(cfg);
  TrainIo io{out, std::nullopt, &std::cout};
  if (!resume.empty()) io.resume = resume;
  const auto t0 = std::chrono::steady_clock::now();
  const auto r = trainer.fit(train, eval, io);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::cout << "best mIoU " << format_fixed(r.best_miou, 6) << " at epoch " << r.best_epoch << ", " << r.steps
            << " steps, " << format_fixed(secs, 1) << " s\n";
  return 0;
}

// --- eval -------------------------------------------------------------------------------------

std::string confusion_csv(const ConfusionMatrix& cm) {
  std::ostringstream s;
  s << "truth\\pred";
  for (int j = 0; j < cm.classes(); ++j) s << ',' << j;
  s << '\n';
  for (int i = 0; i < cm.classes(); ++i) {
    s << i;
    for (int j = 0; j < cm.classes(); ++j) s << ',' << cm.at(i, j);
    s << '\n';
  }
  return s.str();
}

int cmd_eval(const std::string& ckpt_path, const std::string& data, std::string split, const std::string& out,
             const std::string& predictions) {
  const Checkpoint ckpt = load_checkpoint(ckpt_path);
  const RunConfig cfg = config_from_checkpoint(ckpt);
  if (split.empty()) split = cfg.data.eval_split;
  const auto samples = load_split(data, split, cfg.data.ignore_index);
  std::vector<std::string> names = class_names();
  names.resize(static_cast<std::size_t>(cfg.model.num_classes));
  for (std::size_t i = class_names().size(); i < names.size(); ++i) names[i] = "class" + std::to_string(i);
  if (samples.empty()) {
    std::cerr << "warning: split '" << split << "' of " << data << " is empty; writing an empty metrics file\n";
    write_text(out, "class,precision,recall,F1,IoU,OA\n");
    return 0;
  }
  SffNet<float> net(cfg.model, cfg.train.seed);
  load_model_state(ckpt, net);
  const auto cm = evaluate(net, samples, cfg.data.ignore_index, thread_count());
  const auto m = compute_metrics(cm, cfg.eval.exclude_classes);
  write_text(out, metrics_csv(m, names));
  fs::path cm_path = out;
  cm_path.replace_extension(".confusion.csv");
  write_text(cm_path, confusion_csv(cm));
  if (!predictions.empty()) {
    fs::create_directories(predictions);
    for (std::size_t i = 0; i < samples.size(); ++i) {
      write_mask_png(fs::path(predictions) / (sample_stem(i) + ".png"), predict(net, samples[i]),
                     cfg.data.ignore_index);
    }
  }
  std::cout << samples.size() << " samples, " << format_table_row("checkpoint", m.mean_f1, m.miou, m.oa)
            << "  (meanF1 | mIoU | OA, %)\n"
            << "mIoU " << format_fixed(m.miou, 8) << " (stored best " << format_fixed(ckpt.best_miou, 8) << ")\n";
  return 0;
}

// --- decompose ------------------------------------------------------------------------------

Tensor<double> gray_of(const Tensor<float>& rgb) {
  const Shape s = rgb.shape();
  Tensor<double> g(Shape{1, 1, s.h, s.w});
  for (int i = 0; i < s.h; ++i)
    for (int j = 0; j < s.w; ++j) {
      double v = 0;
      for (int c = 0; c < s.c; ++c) v += rgb(0, c, i, j);
      g(0, 0, i, j) = v / s.c;
    }
  return g;
}

Tensor<double> reflect_to_even(const Tensor<double>& x) {
  const Shape s = x.shape();
  const int h = s.h + s.h % 2, w = s.w + s.w % 2;
  if (h == s.h && w == s.w) return x;
  Tensor<double> out(Shape{1, 1, h, w});
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < w; ++j) out(0, 0, i, j) = x(0, 0, i < s.h ? i : s.h - 2, j < s.w ? j : s.w - 2);
  return out;
}

Tensor<double> magnitude(const Tensor<double>& band, double gain) {
  Tensor<double> out(band.shape());
  for (std::size_t i = 0; i < band.numel(); ++i) out[i] = gain * std::abs(band[i]);
  return out;
}

double energy(const Tensor<double>& t) {
  double e = 0;
  for (double v : t.data()) e += v * v;
  return e;
}

int cmd_decompose(const std::string& image, const std::string& out, double gain) {
  const Tensor<float> rgb = read_image_png(image);
  if (rgb.shape().h < 2 || rgb.shape().w < 2) throw ShapeError("decompose: image must be at least 2x2");
  const Tensor<double> x = reflect_to_even(gray_of(rgb));
  const auto q = haar_dwt2(x);
  const Tensor<double> recon = haar_idwt2(q);
  double se = 0;
  for (std::size_t i = 0; i < x.numel(); ++i) se += (recon[i] - x[i]) * (recon[i] - x[i]);
  const double mse = se / static_cast<double>(x.numel());
  fs::create_directories(out);
  write_gray_png(fs::path(out) / "input_gray.png", x);
  write_gray_png(fs::path(out) / "A.png", q.a);
  write_gray_png(fs::path(out) / "H.png", magnitude(q.h, gain));
  write_gray_png(fs::path(out) / "V.png", magnitude(q.v, gain));
  write_gray_png(fs::path(out) / "D.png", magnitude(q.d, gain));
  write_gray_png(fs::path(out) / "reconstruction.png", recon);
  const double eh = energy(q.h), ev = energy(q.v), ed = energy(q.d), detail = eh + ev + ed;
  std::ostringstream csv;
  csv << "band,energy,detail_share\n"
      << "A," << energy(q.a) << ",\n"
      << "H," << eh << ',' << (detail > 0 ? eh / detail : 0) << '\n'
      << "V," << ev << ',' << (detail > 0 ? ev / detail : 0) << '\n'
      << "D," << ed << ',' << (detail > 0 ? ed / detail : 0) << '\n';
  write_text(fs::path(out) / "bands.csv", csv.str());
  std::cout << "A/H/V/D written to " << out << "; reconstruction PSNR "
            << (mse == 0 ? std::string("inf") : format_fixed(10 * std::log10(1.0 / mse), 2)) << " dB\n";
  return 0;
}

// --- gradcheck -------------------------------------------------------------------------------

int cmd_gradcheck(const std::string& module, std::uint64_t seed, bool fault) {
  const auto results = run_audit(module, seed, fault);
  bool ok = true;
  std::printf("%-14s %-8s %12s %10s %8s  %s\n", "module", "group", "max_rel_err", "tolerance", "seconds", "result");
  for (const auto& r : results) {
    std::printf("%-14s %-8s %12.3e %10.0e %8.2f  %s\n", r.name.c_str(), r.group.c_str(), r.report.max_rel_error,
                r.tolerance, r.seconds, r.report.passed ? "PASS" : "FAIL");
    ok = ok && r.report.passed;
  }
  std::cout << (ok ? "all audits passed" : "gradient audit FAILED") << (fault ? " (fault injected)" : "") << '\n';
  return ok ? 0 : kNumericFailure;
}

// --- ablate --------------------------------------------------------------------------------------

int cmd_ablate(const ConfigArgs& ca, const std::string& data, const std::vector<std::uint64_t>& seeds,
               const std::string& out) {
  const RunConfig cfg = load_config(ca);
  const auto train = load_split(data, cfg.data.train_split, cfg.data.ignore_index);
  if (train.empty()) throw ConfigError("split '" + cfg.data.train_split + "' of " + data + " is empty");
  const auto eval = cfg.data.eval_split.empty() ? std::vector<Sample>{}
                                                : load_split(data, cfg.data.eval_split, cfg.data.ignore_index);
  std::cout << ablation_csv_header() << '\n';
  const auto rows = run_ablation<float>(cfg, train, eval, seeds, ablation_variant_names(), &std::cout);
  std::string csv = ablation_csv_header() + "\n";
  for (const auto& r : rows) csv += ablation_csv_row(r) + "\n";
  write_text(out, csv);
  return 0;
}

// --- params ----------------------------------------------------------------------------------------

int cmd_params(const ConfigArgs& ca, int h, int w, const std::string& ckpt_path) {
  RunConfig cfg = load_config(ca);
  if (!ckpt_path.empty()) cfg = config_from_checkpoint(load_checkpoint(ckpt_path));
  const auto report = count_params_flops(cfg.model, h, w);
  std::printf("%-10s %12s %16s\n", "module", "params", "MACs");
  for (const auto& m : report.modules) {
    std::printf("%-10s %12llu %16llu\n", m.name.c_str(), static_cast<unsigned long long>(m.params),
                static_cast<unsigned long long>(m.macs));
  }
  std::printf("%-10s %12llu %16llu  (input %dx%d)\n", "total", static_cast<unsigned long long>(report.total_params()),
              static_cast<unsigned long long>(report.total_macs()), h, w);
  const SffNet<float> net(cfg.model, 0);
  const auto built = net.registry().parameter_count();
  int rc = built == report.total_params() ? 0 : kNumericFailure;
  std::cout << "constructed model: " << built << " parameters"
            << (rc == 0 ? " (matches)" : " (MISMATCH with analytic count)") << '\n';
  if (!ckpt_path.empty()) {
    std::uint64_t stored = 0;
    for (const auto& t : load_checkpoint(ckpt_path).tensors) {
      if (t.kind != TensorKind::param) continue;
      std::uint64_t n = 1;
      for (auto d : t.tensor.dims) n *= d;
      stored += n;
    }
    const bool same = stored == report.total_params();
    std::cout << "checkpoint parameter tensors: " << stored << " values" << (same ? " (matches)" : " (MISMATCH)")
              << '\n';
    if (!same) rc = kNumericFailure;
  }
  return rc;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"SFFNet desk-scale segmentation toolkit"};
  app.require_subcommand(1);
  app.footer("\n" + config_help() + "\nEnvironment: SFFNET_THREADS sets the evaluation worker count.");

  ConfigArgs ca;
  std::optional<std::uint64_t> seed;
  std::string out, data, resume, ckpt, split, image, predictions, module = "all";
  std::size_t count = 0;
  double gain = 2.0;
  bool fault = false;
  int h = 64, w = 64;
  std::vector<std::uint64_t> seeds{0, 1, 2};

  auto* gen = app.add_subcommand("gen-data", "Write a synthetic tile corpus (images/, masks/, manifest.csv)");
  add_config_options(gen, ca);
  gen->add_option("--out", out, "Output dataset directory")->required();
  gen->add_option("--count", count, "Number of tiles")->required();
  gen->add_option("--seed", seed, "Overrides data.seed");

  auto* train = app.add_subcommand("train", "Train on a dataset directory; writes checkpoints and train_log.csv");
  add_config_options(train, ca);
  train->add_option("--data", data, "Dataset directory")->required();
  train->add_option("--out", out, "Run directory")->required();
  train->add_option("--resume", resume, "Checkpoint to continue from");
  train->add_option("--seed", seed, "Overrides train.seed");

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint; writes metrics and confusion-matrix CSVs");
  eval->add_option("--checkpoint", ckpt, "Checkpoint file")->required();
  eval->add_option("--data", data, "Dataset directory")->required();
  eval->add_option("--split", split, "Manifest split (default: data.eval_split of the checkpoint)");
  eval->add_option("--out", out, "Metrics CSV path")->default_val("metrics.csv");
  eval->add_option("--predictions", predictions, "Directory for predicted colour masks");

  auto* dec = app.add_subcommand("decompose", "One-level Haar decomposition of an image into A/H/V/D images");
  dec->add_option("--image", image, "Input PNG")->required();
  dec->add_option("--out", out, "Output directory")->required();
  dec->add_option("--gain", gain, "Brightness gain applied to |H|, |V|, |D|")->default_val(2.0);

  auto* gc = app.add_subcommand("gradcheck", "Central-difference gradient audit of operations and modules");
  std::string modules_help = "all, op, branch, network";
  for (const auto& n : audit_module_names()) modules_help += ", " + n;
  gc->add_option("--module", module, "One of: " + modules_help)->default_val("all");
  gc->add_option("--seed", seed, "Seed for the random inputs");
  gc->add_flag("--inject-fault", fault, "Corrupt analytic gradients (the audit must then fail)");

  auto* abl = app.add_subcommand("ablate", "Train every ablation variant and tabulate meanF1/mIoU/OA");
  add_config_options(abl, ca);
  abl->add_option("--data", data, "Dataset directory")->required();
  abl->add_option("--seeds", seeds, "Training seeds")->delimiter(',');
  abl->add_option("--out", out, "Result CSV path")->default_val("ablation.csv");

  auto* par = app.add_subcommand("params", "Per-module parameter and MAC counts");
  add_config_options(par, ca);
  par->add_option("--height", h, "Input height")->default_val(64);
  par->add_option("--width", w, "Input width")->default_val(64);
  par->add_option("--checkpoint", ckpt, "Take the model config from a checkpoint and cross-check its tensors");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kUsageFailure;
  }

  try {
    if (*gen) return cmd_gen_data(ca, out, count, seed);
    if (*train) return cmd_train(ca, data, out, resume, seed);
    if (*eval) return cmd_eval(ckpt, data, split, out, predictions);
    if (*dec) return cmd_decompose(image, out, gain);
    if (*gc) return cmd_gradcheck(module, seed.value_or(0), fault);
    if (*abl) return cmd_ablate(ca, data, seeds, out);
    if (*par) return cmd_params(ca, h, w, ckpt);
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return kNumericFailure;
  } catch (const AuditError& e) {
    std::cerr << "audit failure: " << e.what() << '\n';
    return kNumericFailure;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsageFailure;
  }
  return kUsageFailure;
}

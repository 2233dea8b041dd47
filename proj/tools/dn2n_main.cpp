// dn2n command-line driver: synth, train, denoise, eval, report, diagnose.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dn2n/baselines.hpp"
#include "dn2n/dataset.hpp"
#include "dn2n/dn2n.hpp"
#include "dn2n/errors.hpp"
#include "dn2n/frame_io.hpp"
#include "dn2n/metrics.hpp"
#include "dn2n/model_io.hpp"
#include "dn2n/parallel.hpp"
#include "dn2n/runtime.hpp"
#include "dn2n/theory.hpp"

namespace fs = std::filesystem;
using namespace dn2n;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

std::string manifest_path(const fs::path& artifact) { return artifact.string() + ".manifest.txt"; }

std::optional<KeyValues> read_if_exists(const fs::path& path) {
  if (!fs::exists(path)) return std::nullopt;
  return KeyValues::read(path);
}

void add_stamp(KeyValues& kv, bool stamp) {
  if (!stamp) return;
  const std::time_t now = std::time(nullptr);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
  kv.set("stamp", std::string(buf));
}

// Copies selected dataset keys under a prefix.
void echo_data(KeyValues& kv, const std::optional<KeyValues>& data) {
  if (!data) return;
  for (const char* key : {"mode", "lambda", "sigma", "seed", "frames", "size"}) {
    if (auto v = data->get(key)) kv.set(std::string("data.") + key, *v);
  }
}

// Frames of a dataset directory (DIR/noisy) or a plain frame directory, ordered
// by DIR/frames.txt when present and by file name otherwise.
FrameSequence load_noisy(const fs::path& dir) {
  if (fs::is_directory(dir / "noisy")) return synth::read_dataset_frames(dir, "noisy");
  synth::FrameOrdering ordering;
  if (fs::is_regular_file(dir / "frames.txt")) ordering.manifest = dir / "frames.txt";
  return synth::load_frame_directory(dir, ordering, 0.1);
}

std::size_t resolve_threads(std::size_t requested) { return requested > 0 ? requested : threads_from_env(); }

struct SynthArgs {
  std::string mode = "slow";
  double lambda = 25.0;
  double sigma = 25.0;
  std::size_t size = 192;
  std::size_t frames = 24;
  std::uint64_t seed = 1;
  std::string out;
};

int cmd_synth(const SynthArgs& a, std::size_t threads, bool stamp) {
  const auto mode = synth::parse_mode(a.mode);
  const auto toy = synth::ToySpec::for_side(a.size, a.frames);
  const synth::NoiseSpec noise{a.lambda, a.sigma, a.seed};
  const auto data = synth::make_toy_dataset(mode, toy, noise, threads);
  KeyValues manifest = synth::dataset_manifest(mode, toy, noise, data.noisy);
  add_stamp(manifest, stamp);
  synth::write_dataset(a.out, data, manifest);
  std::cout << "wrote " << data.noisy.size() << " clean and " << data.noisy.size() << " noisy frames to " << a.out
            << "\n";
  return kExitOk;
}

struct TrainArgs {
  std::string data;
  std::string config;
  std::string out;
  std::string method = "dn2n";
  bool static_transforms = false;
  std::optional<std::size_t> epochs, l_transforms, k_pred, batch;
  std::optional<double> sigma_tilde, mu, lr;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> levels;
  bool quiet = false;
};

TrainConfig resolve_config(const TrainArgs& a) {
  TrainConfig c;
  if (!a.config.empty()) c = TrainConfig::from_kv(KeyValues::read(a.config), c);
  if (a.epochs) c.epochs = *a.epochs;
  if (a.l_transforms) c.l_transforms = *a.l_transforms;
  if (a.k_pred) c.k_pred = *a.k_pred;
  if (a.batch) c.batch = *a.batch;
  if (a.sigma_tilde) c.sigma_tilde = *a.sigma_tilde;
  if (a.mu) c.mu = *a.mu;
  if (a.lr) c.lr = *a.lr;
  if (a.seed) c.seed = *a.seed;
  if (a.levels) c.model.levels = nn::parse_levels(*a.levels);
  if (a.static_transforms) c.static_transforms = true;
  c.validate();
  return c;
}

int cmd_train(const TrainArgs& a, std::size_t threads, bool stamp) {
  if (a.method != "dn2n" && a.method != "td") throw std::invalid_argument("--method must be dn2n or td");
  TrainConfig config = resolve_config(a);
  config.threads = threads;
  const FrameSequence noisy = load_noisy(a.data);

  const auto start = std::chrono::steady_clock::now();
  const auto log = [&](std::size_t epoch, const EpochLosses& l) {
    if (a.quiet) return;
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::fprintf(stderr, "epoch %zu/%zu  L_D=%.6g  L_A=%.6g  L_T=%.6g  (%.1fs)\n", epoch + 1, config.epochs,
                 l.loss_d, l.loss_a, l.loss_t, secs);
  };

  TrainedModel model;
  if (a.method == "td") {
    std::cerr << "warning: --method td ignores sigma_tilde, mu, l_transforms and k_pred\n";
    model = baselines::train_td(baselines::build_td_pairs(noisy), noisy, config, log);
  } else {
    const auto taus = training_taus(noisy, config.seed);
    model = train(config, std::span<const FrameSequence>(&noisy, 1), taus, log);
  }
  nn::save_model(a.out, model.spec, model.params);

  KeyValues manifest;
  manifest.set("method", a.method);
  manifest.merge(config.to_kv());
  manifest.set("config_hash", model.config_hash);
  manifest.set("parameters", std::uint64_t{model.params.size()});
  manifest.set("data", a.data);
  echo_data(manifest, read_if_exists(fs::path(a.data) / "manifest.txt"));
  for (std::size_t e = 0; e < model.history.size(); ++e) {
    char key[32];
    std::snprintf(key, sizeof key, "epoch.%04zu", e);
    const auto& l = model.history[e];
    manifest.set(key, format_double(l.loss_d) + " " + format_double(l.loss_a) + " " + format_double(l.loss_t));
  }
  if (!model.history.empty()) {
    manifest.set("final.loss_d", model.history.back().loss_d);
    manifest.set("final.loss_a", model.history.back().loss_a);
    manifest.set("final.loss_t", model.history.back().loss_t);
  }
  add_stamp(manifest, stamp);
  manifest.write(manifest_path(a.out));
  std::cout << "wrote " << a.out << " (" << model.params.size() << " parameters, config " << model.config_hash
            << ")\n";
  return kExitOk;
}

struct DenoiseArgs {
  std::string model;
  std::string data;
  std::string out;
  std::optional<std::size_t> k;
  std::optional<double> sigma_tilde;
  std::optional<std::uint64_t> seed;
};

int cmd_denoise(const DenoiseArgs& a, std::size_t threads, bool stamp) {
  const auto saved = nn::load_model(a.model);
  const auto model_manifest = read_if_exists(manifest_path(a.model));
  const bool td = model_manifest && model_manifest->get("method") == "td";
  const double default_sigma = td ? 0.0 : (model_manifest ? model_manifest->get_double("sigma_tilde", 100.0) : 100.0);
  const std::size_t default_k = td ? 1 : (model_manifest ? model_manifest->get_uint("k_pred", 100) : 100);
  const double sigma_tilde = a.sigma_tilde.value_or(default_sigma);
  const std::size_t k = a.k.value_or(default_k);
  const std::uint64_t seed = a.seed.value_or(model_manifest ? model_manifest->get_uint("seed", 1) : 1);

  const FrameSequence noisy = load_noisy(a.data);
  const Image& y0 = noisy[0];
  if (y0.height() % saved.spec.spatial_multiple() != 0 || y0.width() % saved.spec.spatial_multiple() != 0) {
    throw DataError("frame size " + std::to_string(y0.height()) + "x" + std::to_string(y0.width()) +
                    " is incompatible with the model (multiple of " +
                    std::to_string(saved.spec.spatial_multiple()) + " required)");
  }
  const Image x0 = predict(saved.spec, saved.params, std::span<const Image>(&y0, 1), sigma_tilde, k, seed, threads);

  const fs::path out(a.out);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  write_float_frame(out, denormalize(x0, false));
  fs::path preview = out;
  preview.replace_extension(".pgm");
  write_pgm(preview, x0);

  KeyValues manifest;
  manifest.set("method", model_manifest ? model_manifest->get("method").value_or("dn2n") : std::string("dn2n"));
  manifest.set("model", a.model);
  if (model_manifest) {
    if (auto h = model_manifest->get("config_hash")) manifest.set("config_hash", *h);
    for (const auto& [key, value] : model_manifest->entries()) {
      if (key.rfind("data.", 0) == 0) manifest.set(key, value);
    }
  }
  manifest.set("data", a.data);
  echo_data(manifest, read_if_exists(fs::path(a.data) / "manifest.txt"));
  manifest.set("sigma_tilde", sigma_tilde);
  manifest.set("k", std::uint64_t{k});
  manifest.set("seed", seed);
  manifest.set("height", std::uint64_t{x0.height()});
  manifest.set("width", std::uint64_t{x0.width()});
  add_stamp(manifest, stamp);
  manifest.write(manifest_path(out));
  std::cout << "wrote " << out.string() << " and " << preview.string() << "\n";
  return kExitOk;
}

struct EvalArgs {
  std::string pred;
  std::string ref;
  double data_range = 1.0;
};

int cmd_eval(const EvalArgs& a) {
  const Image pred = normalize(read_frame(a.pred));
  const Image ref = normalize(read_frame(a.ref));
  if (!pred.same_shape(ref)) throw DataError("prediction and reference differ in shape");
  const double p = psnr(ref, pred, a.data_range);
  const double s = ssim(ref, pred, a.data_range);
  std::cout << "psnr=" << format_double(p) << "\nssim=" << format_double(s) << "\n";

  if (const auto manifest = read_if_exists(manifest_path(a.pred))) {
    KeyValues record;
    record.set("pred", a.pred);
    record.set("ref", a.ref);
    for (const char* key : {"method", "data.mode", "data.lambda", "data.sigma", "data.seed", "sigma_tilde", "k",
                            "config_hash"}) {
      if (auto v = manifest->get(key)) record.set(key, *v);
    }
    record.set("data_range", a.data_range);
    record.set("psnr", p);
    record.set("ssim", s);
    record.write(a.pred + ".eval.txt");
  }
  return kExitOk;
}

std::string fixed(double v, int digits) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

void print_table(const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> width;
  for (const auto& r : rows) {
    width.resize(std::max(width.size(), r.size()), 0);
    for (std::size_t c = 0; c < r.size(); ++c) width[c] = std::max(width[c], r[c].size());
  }
  for (const auto& r : rows) {
    std::string line;
    for (std::size_t c = 0; c < r.size(); ++c) {
      std::string cell = r[c];
      cell.resize(width[c], ' ');
      line += (c ? "  " : "") + cell;
    }
    while (!line.empty() && line.back() == ' ') line.pop_back();
    std::cout << line << "\n";
  }
}

int cmd_report(const std::vector<std::string>& dirs) {
  std::vector<fs::path> files;
  for (const auto& d : dirs) {
    if (!fs::is_directory(d)) throw DataError("not a directory: " + d);
    for (const auto& entry : fs::recursive_directory_iterator(d)) {
      const std::string name = entry.path().filename().string();
      if (entry.is_regular_file() && name.size() > 9 && name.ends_with(".eval.txt")) files.push_back(entry.path());
    }
  }
  std::sort(files.begin(), files.end());

  struct Cell {
    double psnr = 0.0, ssim = 0.0;
    std::size_t n = 0;
  };
  std::map<std::string, std::map<std::string, Cell>> pivot;  // method -> column
  std::vector<std::string> columns;

  std::vector<std::vector<std::string>> rows{{"run", "method", "mode", "lambda", "sigma", "psnr", "ssim"}};
  for (const auto& f : files) {
    const auto kv = KeyValues::read(f);
    const std::string method = kv.get("method").value_or("?");
    const std::string mode = kv.get("data.mode").value_or("?");
    const std::string lambda = kv.get("data.lambda").value_or("?");
    const std::string sigma = kv.get("data.sigma").value_or("?");
    const double p = parse_double(kv.require("psnr"));
    const double s = parse_double(kv.require("ssim"));
    rows.push_back({f.string(), method, mode, lambda, sigma, fixed(p, 2), fixed(s, 4)});
    const std::string column = mode + " (" + lambda + "," + sigma + ")";
    if (std::find(columns.begin(), columns.end(), column) == columns.end()) columns.push_back(column);
    auto& cell = pivot[method][column];
    cell.psnr += p;
    cell.ssim += s;
    ++cell.n;
  }
  print_table(rows);
  std::cout << "\n" << files.size() << " run(s)\n";
  if (files.empty()) return kExitOk;

  std::sort(columns.begin(), columns.end());
  std::cout << "\nmean PSNR / SSIM by method and dataset\n";
  std::vector<std::vector<std::string>> table;
  std::vector<std::string> header{"method"};
  header.insert(header.end(), columns.begin(), columns.end());
  table.push_back(header);
  for (const auto& [method, cells] : pivot) {
    std::vector<std::string> r{method};
    for (const auto& c : columns) {
      const auto it = cells.find(c);
      if (it == cells.end()) {
        r.push_back("-");
      } else {
        const double n = static_cast<double>(it->second.n);
        r.push_back(fixed(it->second.psnr / n, 2) + " / " + fixed(it->second.ssim / n, 4));
      }
    }
    table.push_back(std::move(r));
  }
  print_table(table);
  return kExitOk;
}

struct DiagnoseArgs {
  std::string model;
  std::string clean;
  std::string noisy;
  std::string out;
};

int cmd_diagnose(const DiagnoseArgs& a, std::size_t threads) {
  if (!fs::is_directory(a.clean)) throw DataError("clean frames unavailable: " + a.clean + " (diagnosis needs a toy dataset)");
  const auto saved = nn::load_model(a.model);
  const FrameSequence clean = synth::load_frame_directory(a.clean, {}, 0.1);
  const FrameSequence noisy = synth::load_frame_directory(a.noisy, {}, 0.1);

  TrainConfig config;
  config.model = saved.spec;
  KeyValues metadata;
  if (const auto mm = read_if_exists(manifest_path(a.model))) {
    config.sigma_tilde = mm->get_double("sigma_tilde", config.sigma_tilde);
    config.k_pred = mm->get_uint("k_pred", config.k_pred);
    config.seed = mm->get_uint("seed", config.seed);
    if (mm->get("method") == "td") {
      config.sigma_tilde = 0.0;
      config.k_pred = 1;
    }
    metadata.set("method", mm->get("method").value_or("dn2n"));
    if (auto h = mm->get("config_hash")) metadata.set("config_hash", *h);
  }
  config.threads = threads;
  const auto data_manifest = read_if_exists(fs::path(a.clean).parent_path() / "manifest.txt");
  if (data_manifest) {
    for (const char* key : {"mode", "lambda", "sigma"}) {
      if (auto v = data_manifest->get(key)) metadata.set(key, *v);
    }
  }
  const auto report = theory::bound_report(saved.spec, saved.params, clean, noisy, config, metadata);
  const std::string text = report.to_kv().str();
  std::cout << text;
  if (!a.out.empty()) report.to_kv().write(a.out);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  tune_allocator();
  CLI::App app{"Denatured-Noise2Noise denoising: synthesize, train, denoise, evaluate, diagnose"};
  app.require_subcommand(1);
  std::size_t threads_opt = 0;
  bool stamp = false;
  app.add_option("--threads", threads_opt, "Worker threads (default: DN2N_THREADS or 1)");
  app.add_flag("--stamp", stamp, "Embed a timestamp in written manifests");

  SynthArgs sa;
  auto* synth_cmd = app.add_subcommand("synth", "Generate a toy denaturation dataset");
  synth_cmd->add_option("--mode", sa.mode, "slow or fast")->capture_default_str();
  synth_cmd->add_option("--lambda", sa.lambda, "Poisson scale")->capture_default_str();
  synth_cmd->add_option("--sigma", sa.sigma, "Gaussian std (0-255 units)")->capture_default_str();
  synth_cmd->add_option("--size", sa.size, "Image side")->capture_default_str();
  synth_cmd->add_option("--frames", sa.frames, "N (the sequence has N+1 frames)")->capture_default_str();
  synth_cmd->add_option("--seed", sa.seed, "Noise seed")->capture_default_str();
  synth_cmd->add_option("--out", sa.out, "Output directory")->required();
  synth_cmd->add_option("--threads", threads_opt, "Worker threads");

  TrainArgs ta;
  auto* train_cmd = app.add_subcommand("train", "Train a denoiser on a frame sequence");
  train_cmd->add_option("--data", ta.data, "Dataset or frame directory")->required();
  train_cmd->add_option("--config", ta.config, "key=value config file");
  train_cmd->add_option("--out", ta.out, "Model file to write")->required();
  train_cmd->add_option("--method", ta.method, "dn2n or td")->capture_default_str();
  train_cmd->add_flag("--static-transforms", ta.static_transforms, "Draw the L transforms once per run");
  train_cmd->add_option("--epochs", ta.epochs);
  train_cmd->add_option("--sigma-tilde", ta.sigma_tilde, "Auxiliary noise std (0-255 units)");
  train_cmd->add_option("--mu", ta.mu, "Averaging-loss weight");
  train_cmd->add_option("--l-transforms", ta.l_transforms);
  train_cmd->add_option("--k-pred", ta.k_pred, "Ensemble size recorded for prediction");
  train_cmd->add_option("--lr", ta.lr);
  train_cmd->add_option("--batch", ta.batch);
  train_cmd->add_option("--seed", ta.seed);
  train_cmd->add_option("--levels", ta.levels, "Encoder widths, e.g. 16,32,64");
  train_cmd->add_flag("--quiet", ta.quiet, "Do not log per-epoch losses");
  train_cmd->add_option("--threads", threads_opt, "Worker threads");

  DenoiseArgs da;
  auto* denoise_cmd = app.add_subcommand("denoise", "Predict the clean first frame");
  denoise_cmd->add_option("--model", da.model)->required();
  denoise_cmd->add_option("--data", da.data, "Dataset or frame directory")->required();
  denoise_cmd->add_option("--out", da.out, "Output .dnf frame (a .pgm preview is written alongside)")->required();
  denoise_cmd->add_option("--k", da.k, "Ensemble size");
  denoise_cmd->add_option("--sigma-tilde", da.sigma_tilde, "Ensemble noise std (0-255 units)");
  denoise_cmd->add_option("--seed", da.seed);
  denoise_cmd->add_option("--threads", threads_opt, "Worker threads");

  EvalArgs ea;
  auto* eval_cmd = app.add_subcommand("eval", "PSNR and SSIM of a prediction against a reference");
  eval_cmd->add_option("--pred", ea.pred)->required();
  eval_cmd->add_option("--ref", ea.ref)->required();
  eval_cmd->add_option("--data-range", ea.data_range, "Data range on the [0,1] scale")->capture_default_str();

  std::vector<std::string> report_dirs;
  auto* report_cmd = app.add_subcommand("report", "Tabulate evaluation records");
  report_cmd->add_option("--runs", report_dirs, "Directories to scan for *.eval.txt")->required();

  DiagnoseArgs ga;
  auto* diagnose_cmd = app.add_subcommand("diagnose", "Bound-term report for a toy run");
  diagnose_cmd->add_option("--model", ga.model)->required();
  diagnose_cmd->add_option("--clean", ga.clean)->required();
  diagnose_cmd->add_option("--noisy", ga.noisy)->required();
  diagnose_cmd->add_option("--out", ga.out, "Also write the report to this file");
  diagnose_cmd->add_option("--threads", threads_opt, "Worker threads");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    const std::size_t threads = resolve_threads(threads_opt);
    if (*synth_cmd) return cmd_synth(sa, threads, stamp);
    if (*train_cmd) return cmd_train(ta, threads, stamp);
    if (*denoise_cmd) return cmd_denoise(da, threads, stamp);
    if (*eval_cmd) return cmd_eval(ea);
    if (*report_cmd) return cmd_report(report_dirs);
    if (*diagnose_cmd) return cmd_diagnose(ga, threads);
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::invalid_argument& e) {
    std::cerr << "invalid argument: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::out_of_range& e) {
    std::cerr << "invalid argument: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitUsage;
}

// SPDX-License-Identifier: Apache-2.0

#include "dreammap/cli.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <numeric>

#include <CLI11.hpp>
#include <json.hpp>

#include "dreammap/dreamer.hpp"
#include "dreammap/errors.hpp"
#include "dreammap/gp.hpp"
#include "dreammap/heatmap.hpp"
#include "dreammap/io.hpp"
#include "dreammap/metrics.hpp"
#include "dreammap/resample.hpp"
#include "dreammap/world_model.hpp"

namespace dreammap::cli {

namespace {

namespace fs = std::filesystem;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

double now_seconds(const std::chrono::steady_clock::time_point& start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

std::string csv_number(double v) {
  return std::isfinite(v) ? format_double(v) : std::string();
}

// ---- dataset directory ----

void write_dataset_impl(const fs::path& dir, const Dataset& dataset) {
  fs::create_directories(dir);
  nlohmann::json manifest;
  manifest["format"] = "dreammap-dataset";
  auto dump_split = [&](const std::vector<EnvironmentPair>& pairs,
                        const std::string& split) {
    nlohmann::json names = nlohmann::json::array();
    for (size_t i = 0; i < pairs.size(); ++i) {
      char name[64];
      std::snprintf(name, sizeof(name), "pair_%s_%03zu.json", split.c_str(), i);
      save_pair(dir / name, pairs[i]);
      names.push_back(name);
    }
    return names;
  };
  manifest["train"] = dump_split(dataset.train, "train");
  manifest["eval"] = dump_split(dataset.eval, "eval");
  std::ofstream out(dir / "manifest.json");
  if (!out) throw DataError("write_dataset: cannot open manifest in " + dir.string());
  out << manifest.dump(2) << '\n';
}

DatasetOnDisk read_dataset_impl(const fs::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw DataError("read_dataset: no manifest.json in " + dir.string());
  nlohmann::json manifest;
  try {
    in >> manifest;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("read_dataset: bad manifest: " + std::string(e.what()));
  }
  DatasetOnDisk out;
  try {
    for (const auto& name : manifest.at("train")) {
      out.train_files.push_back(name.get<std::string>());
      out.dataset.train.push_back(load_pair(dir / name.get<std::string>()));
    }
    for (const auto& name : manifest.at("eval")) {
      out.eval_files.push_back(name.get<std::string>());
      out.dataset.eval.push_back(load_pair(dir / name.get<std::string>()));
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError("read_dataset: bad manifest: " + std::string(e.what()));
  }
  if (out.dataset.train.empty() || out.dataset.eval.empty())
    throw DataError("read_dataset: manifest needs train and eval pairs");
  return out;
}

// ---- shared option blocks ----

struct SynthFlags {
  SynthConfig cfg;
  int scale = 1;
  int n_train = 3;
  int n_eval = 1;

  void attach(CLI::App* app) {
    app->add_option("--base-h", cfg.base_h, "Base grid height")->check(CLI::Range(2, 4096));
    app->add_option("--base-w", cfg.base_w, "Base grid width")->check(CLI::Range(2, 4096));
    app->add_option("--ap-row", cfg.ap_row, "AP row (cells)");
    app->add_option("--ap-col", cfg.ap_col, "AP column (cells)");
    app->add_option("--tx-ref-dbm", cfg.tx_ref_dbm, "RSSI at reference distance");
    app->add_option("--path-loss-exp", cfg.path_loss_exp, "Path loss exponent");
    app->add_option("--shadow-sigma", cfg.shadowing_sigma_dbm, "Shadowing std (dB)");
    app->add_option("--corr-len", cfg.correlation_len_cells, "Shadowing correlation length");
    app->add_option("--occupants", cfg.n_occupants, "Occupant count")->check(CLI::NonNegativeNumber);
    app->add_option("--occupant-atten", cfg.occupant_atten_db, "Occupant attenuation (dB)");
    app->add_option("--occupant-radius", cfg.occupant_radius_cells, "Occupant radius (cells)");
    app->add_option("--scale", scale, "Bilinear upscale factor")
        ->check(CLI::IsMember({1, 2, 4, 8, 16}));
    app->add_option("--train", n_train, "Training pairs")->check(CLI::PositiveNumber);
    app->add_option("--eval", n_eval, "Evaluation pairs")->check(CLI::PositiveNumber);
  }
};

struct TrainFlags {
  TrainConfig cfg;

  void attach(CLI::App* app) {
    app->add_option("--epochs", cfg.epochs, "Training epochs")->check(CLI::PositiveNumber);
    app->add_option("--episodes-per-epoch", cfg.episodes_per_epoch, "Episodes per epoch")
        ->check(CLI::PositiveNumber);
    app->add_option("--lr", cfg.learning_rate, "Learning rate");
    app->add_option("--beta-kl", cfg.kl_weight, "KL weight");
    app->add_option("--max-seq-len", cfg.max_sequence_len, "Max episode length")
        ->check(CLI::PositiveNumber);
    app->add_option("--batch-size", cfg.batch_size, "Episodes per optimizer step")
        ->check(CLI::PositiveNumber);
    app->add_option("--holdout-budget", cfg.holdout_budget,
                    "Cells in the per-epoch holdout probe")
        ->check(CLI::PositiveNumber);
  }
};

void write_loss_trace(const fs::path& path, const TrainResult& result) {
  std::ofstream out(path);
  if (!out) throw DataError("train: cannot open " + path.string());
  out << "epoch,mean_loss,holdout_rmse\n";
  for (const auto& row : result.trace)
    out << row.epoch << ',' << csv_number(row.mean_loss) << ','
        << csv_number(row.holdout_rmse) << '\n';
}

WorldModel train_model_for(const Dataset& dataset, const TrainConfig& cfg,
                           const fs::path& model_path, const fs::path& trace_path) {
  const auto& first = dataset.train.front();
  WorldModel model(Architecture::standard(first.empty.height(), first.empty.width()));
  const EnvironmentPair* holdout = dataset.eval.empty() ? nullptr : &dataset.eval.front();
  const TrainResult result = train(model, dataset.train, holdout, cfg);
  write_loss_trace(trace_path, result);
  if (result.diverged)
    throw NumericError("train: " + result.message);
  save_model(model_path, model);
  return model;
}

// ---- methods ----

const std::vector<std::string> kAllMethods = {"world_model", "gp_same_points",
                                              "gp_random_points", "empty_copy"};

std::vector<std::string> check_methods(std::vector<std::string> methods) {
  if (methods.empty()) methods = kAllMethods;
  for (const auto& m : methods)
    if (std::find(kAllMethods.begin(), kAllMethods.end(), m) == kAllMethods.end())
      throw UsageError("unknown method: " + m);
  return methods;
}

bool contains(const std::vector<std::string>& v, const std::string& s) {
  return std::find(v.begin(), v.end(), s) != v.end();
}

MeasurementState state_from_cells(const EnvironmentPair& pair,
                                  const std::vector<int>& cells, int count) {
  MeasurementState st(pair.empty.height(), pair.empty.width(), pair.empty.unit());
  for (int i = 0; i < count; ++i)
    apply_measurement(st, cells[i], pair.occupied[cells[i]]);
  return st;
}

struct MethodResult {
  GridMap estimate;            // normalized units
  std::vector<int> used_cells;
  double seconds = 0.0;
};

// ---- subcommand state ----

struct CliState {
  std::uint64_t seed = 0;
  std::string out_dir = ".";

  // synth
  SynthFlags synth;
  // train
  std::string data_dir;
  TrainFlags train_flags;
  // run / sweep
  std::string model_file;
  int budget = 10;
  int pool_size = 40;
  int dream_samples = 12;
  std::string rule = "argmin_variance";
  std::vector<std::string> methods;
  int pair_index = 0;
  std::vector<int> scales{1, 2, 4};
  std::vector<int> budgets{1, 2, 5, 10, 15, 20};
  int repetitions = 3;
  int gp_max_points = 1024;
  // eval
  std::string estimate_file;
  std::string truth_file;
  std::string pair_file;
};

int cmd_synth(const CliState& st) {
  SynthConfig cfg = st.synth.cfg;
  cfg.seed = st.seed;
  const Dataset dataset = make_dataset(cfg, st.synth.n_train, st.synth.n_eval, st.synth.scale);
  write_dataset_impl(st.out_dir, dataset);
  const auto& shape = dataset.train.front().empty;
  std::cout << "dataset: " << st.synth.n_train << " train + " << st.synth.n_eval
            << " eval pairs, " << shape.height() << "x" << shape.width() << ", scale "
            << st.synth.scale << " -> " << st.out_dir << "\n";
  return kExitOk;
}

int cmd_train(const CliState& st) {
  if (st.data_dir.empty()) throw UsageError("train: --data is required");
  const DatasetOnDisk data = read_dataset_impl(st.data_dir);
  fs::create_directories(st.out_dir);
  TrainConfig cfg = st.train_flags.cfg;
  cfg.seed = st.seed;
  const fs::path model_path = fs::path(st.out_dir) / "model.dmwm";
  const fs::path trace_path = fs::path(st.out_dir) / "loss_trace.csv";
  const WorldModel model = train_model_for(data.dataset, cfg, model_path, trace_path);
  std::cout << "model: " << model_path.string() << "\n"
            << "loss trace: " << trace_path.string() << "\n"
            << "final loss: " << format_double(model.provenance().final_loss) << "\n";
  return kExitOk;
}

Dataset dataset_for_run(const CliState& st) {
  if (!st.data_dir.empty()) return read_dataset_impl(st.data_dir).dataset;
  SynthConfig cfg = st.synth.cfg;
  cfg.seed = st.seed;
  return make_dataset(cfg, st.synth.n_train, st.synth.n_eval, st.synth.scale);
}

int cmd_run(const CliState& st) {
  const std::vector<std::string> methods = check_methods(st.methods);
  const Dataset dataset = dataset_for_run(st);
  if (st.pair_index < 0 || st.pair_index >= static_cast<int>(dataset.eval.size()))
    throw DataError("run: --pair-index out of range");
  const EnvironmentPair& pair = dataset.eval[st.pair_index];
  const int cells_total = pair.empty.size();
  if (st.budget < 1 || st.budget > cells_total)
    throw DataError("run: budget exceeds grid cells");

  const bool needs_model =
      contains(methods, "world_model") || contains(methods, "gp_same_points");
  std::unique_ptr<WorldModel> model;
  if (needs_model) {
    if (st.model_file.empty())
      throw UsageError("run: --model is required for world_model/gp_same_points");
    model = std::make_unique<WorldModel>(load_model(st.model_file));
    if (model->arch().grid_h != pair.empty.height() ||
        model->arch().grid_w != pair.empty.width())
      throw DataError("run: model grid does not match the evaluation pair");
  }

  fs::create_directories(st.out_dir);
  const fs::path out_dir(st.out_dir);

  AcquisitionTrace trace;
  if (needs_model) {
    AcquisitionConfig acq;
    acq.pool_size = st.pool_size;
    acq.dream_samples = st.dream_samples;
    acq.budget = st.budget;
    acq.rule = parse_selection_rule(st.rule);
    acq.seed = st.seed;
    trace = run_acquisition(*model, pair, acq);
    save_trace_jsonl(out_dir / "trace.jsonl", trace, "recon_world_model.map");
    std::cout << "oracle_queries=" << trace.oracle_queries << "\n";
  }

  std::vector<int> dreamer_cells;
  for (const auto& step : trace.steps) dreamer_cells.push_back(step.action.cell_index);

  KernelParams kernel;
  if (contains(methods, "gp_same_points") || contains(methods, "gp_random_points"))
    kernel = fit_kernel(pair.empty, st.gp_max_points);

  const GridMap truth_dbm = denormalize_map(pair.occupied, pair.meta);
  for (const auto& method : methods) {
    GridMap estimate = pair.empty;
    std::vector<int> marks;
    if (method == "world_model") {
      estimate = trace.reconstruction;
      marks = dreamer_cells;
    } else if (method == "gp_same_points") {
      const auto st_m = state_from_cells(pair, dreamer_cells, st.budget);
      estimate = gp_reconstruct(kernel, pair.empty, st_m).mean;
      marks = dreamer_cells;
    } else if (method == "gp_random_points") {
      std::vector<int> all(cells_total);
      std::iota(all.begin(), all.end(), 0);
      RngStream rng = derive_stream(st.seed, "run/gp_random");
      marks = sample_distinct(std::move(all), st.budget, rng);
      const auto st_m = state_from_cells(pair, marks, st.budget);
      estimate = gp_reconstruct(kernel, pair.empty, st_m).mean;
    }  // empty_copy keeps the initial estimate

    save_map(out_dir / ("recon_" + method + ".map"), estimate);
    export_heatmap(estimate, marks, out_dir / ("heat_" + method + ".pgm"));
    std::cout << method << ": rmse_dbm="
              << format_double(rmse(denormalize_map(estimate, pair.meta), truth_dbm))
              << " mae_dbm="
              << format_double(mae(denormalize_map(estimate, pair.meta), truth_dbm))
              << "\n";
  }
  return kExitOk;
}

int cmd_sweep(const CliState& st) {
  const std::vector<std::string> methods = check_methods(st.methods);
  if (st.scales.empty() || st.budgets.empty())
    throw UsageError("sweep: --scales and --budgets must be non-empty");
  for (int s : st.scales)
    if (!valid_scale_factor(s)) throw UsageError("sweep: invalid scale factor");
  const int max_budget = *std::max_element(st.budgets.begin(), st.budgets.end());
  if (*std::min_element(st.budgets.begin(), st.budgets.end()) < 1)
    throw UsageError("sweep: budgets must be >= 1");
  if (st.repetitions < 1) throw UsageError("sweep: --reps must be >= 1");

  fs::create_directories(st.out_dir);
  std::ofstream csv(fs::path(st.out_dir) / "results.csv");
  if (!csv) throw DataError("sweep: cannot open results.csv");
  csv << "scale,budget,method,rep,rmse,mae,seconds\n";

  struct Key {
    int scale, budget;
    std::string method;
    auto operator<=>(const Key&) const = default;
  };
  std::map<Key, std::vector<std::array<double, 3>>> cells;  // rmse, mae, seconds

  for (int scale : st.scales) {
    const fs::path scale_dir = fs::path(st.out_dir) / ("scale_" + std::to_string(scale));
    fs::create_directories(scale_dir);

    // dataset: reuse a provided per-scale directory or synthesize
    Dataset dataset;
    if (!st.data_dir.empty()) {
      dataset = read_dataset_impl(fs::path(st.data_dir) /
                                  ("scale_" + std::to_string(scale)))
                    .dataset;
    } else {
      SynthConfig cfg = st.synth.cfg;
      cfg.seed = derive_stream(st.seed, "sweep/data", scale).next_u64();
      dataset = make_dataset(cfg, st.synth.n_train, st.synth.n_eval, scale);
      write_dataset_impl(scale_dir / "dataset", dataset);
    }
    const EnvironmentPair& pair = dataset.eval.front();
    const int cells_total = pair.empty.size();
    if (max_budget > cells_total) throw DataError("sweep: budget exceeds grid cells");

    const bool needs_model =
        contains(methods, "world_model") || contains(methods, "gp_same_points");
    std::unique_ptr<WorldModel> model;
    if (needs_model) {
      const fs::path model_path = scale_dir / "model.dmwm";
      if (fs::exists(model_path)) {
        model = std::make_unique<WorldModel>(load_model(model_path));
      } else {
        TrainConfig cfg = st.train_flags.cfg;
        cfg.seed = derive_stream(st.seed, "sweep/train", scale).next_u64();
        model = std::make_unique<WorldModel>(train_model_for(
            dataset, cfg, model_path, scale_dir / "loss_trace.csv"));
      }
    }

    KernelParams kernel;
    if (contains(methods, "gp_same_points") || contains(methods, "gp_random_points"))
      kernel = fit_kernel(pair.empty, st.gp_max_points);

    const GridMap truth_dbm = denormalize_map(pair.occupied, pair.meta);
    auto score = [&](const GridMap& estimate) {
      const GridMap est_dbm = denormalize_map(estimate, pair.meta);
      return std::pair<double, double>(rmse(est_dbm, truth_dbm), mae(est_dbm, truth_dbm));
    };

    for (int rep = 0; rep < st.repetitions; ++rep) {
      AcquisitionTrace trace;
      std::vector<int> dreamer_cells;
      if (needs_model) {
        AcquisitionConfig acq;
        acq.pool_size = st.pool_size;
        acq.dream_samples = st.dream_samples;
        acq.budget = max_budget;
        acq.rule = parse_selection_rule(st.rule);
        acq.seed = derive_stream(st.seed, "sweep/acq", scale, rep).next_u64();
        trace = run_acquisition(*model, pair, acq);
        for (const auto& step : trace.steps)
          dreamer_cells.push_back(step.action.cell_index);
      }
      std::vector<int> random_cells;
      if (contains(methods, "gp_random_points")) {
        std::vector<int> all(cells_total);
        std::iota(all.begin(), all.end(), 0);
        RngStream rng = derive_stream(st.seed, "sweep/gp_random", scale, rep);
        random_cells = sample_distinct(std::move(all), max_budget, rng);
      }

      for (int budget : st.budgets) {
        for (const auto& method : methods) {
          const auto t0 = std::chrono::steady_clock::now();
          GridMap estimate = pair.empty;
          double seconds = 0.0;
          if (method == "world_model") {
            estimate = reconstruct(
                *model, make_observation(pair.empty,
                                          state_from_cells(pair, dreamer_cells, budget)));
            seconds = trace.steps[budget - 1].seconds_cum + now_seconds(t0);
          } else if (method == "gp_same_points") {
            estimate = gp_reconstruct(kernel, pair.empty,
                                      state_from_cells(pair, dreamer_cells, budget))
                           .mean;
            seconds = now_seconds(t0);
          } else if (method == "gp_random_points") {
            estimate = gp_reconstruct(kernel, pair.empty,
                                      state_from_cells(pair, random_cells, budget))
                           .mean;
            seconds = now_seconds(t0);
          } else {
            seconds = now_seconds(t0);
          }
          const auto [r, m] = score(estimate);
          csv << scale << ',' << budget << ',' << method << ',' << rep << ','
              << format_double(r) << ',' << format_double(m) << ','
              << format_double(seconds) << '\n';
          cells[Key{scale, budget, method}].push_back({r, m, seconds});
        }
      }
    }
  }

  // mean/std summary rows over repetitions
  for (const auto& [key, rows] : cells) {
    std::array<double, 3> mean{}, sd{};
    for (const auto& row : rows)
      for (int i = 0; i < 3; ++i) mean[i] += row[i];
    for (auto& v : mean) v /= rows.size();
    if (rows.size() > 1) {
      for (const auto& row : rows)
        for (int i = 0; i < 3; ++i) sd[i] += (row[i] - mean[i]) * (row[i] - mean[i]);
      for (auto& v : sd) v = std::sqrt(v / (rows.size() - 1));
    }
    csv << key.scale << ',' << key.budget << ',' << key.method << ",mean,"
        << format_double(mean[0]) << ',' << format_double(mean[1]) << ','
        << format_double(mean[2]) << '\n';
    csv << key.scale << ',' << key.budget << ',' << key.method << ",std,"
        << format_double(sd[0]) << ',' << format_double(sd[1]) << ','
        << format_double(sd[2]) << '\n';
  }
  std::cout << "results: " << (fs::path(st.out_dir) / "results.csv").string() << "\n";
  return kExitOk;
}

int cmd_eval(const CliState& st) {
  if (st.estimate_file.empty() || st.truth_file.empty())
    throw UsageError("eval: --estimate and --truth are required");
  GridMap estimate = load_map(st.estimate_file);
  GridMap truth = load_map(st.truth_file);
  if (!st.pair_file.empty()) {
    const EnvironmentPair pair = load_pair(st.pair_file);
    if (estimate.unit() == Unit::Normalized) estimate = denormalize_map(estimate, pair.meta);
    if (truth.unit() == Unit::Normalized) truth = denormalize_map(truth, pair.meta);
  }
  std::cout << "rmse=" << format_double(rmse(estimate, truth)) << "\n"
            << "mae=" << format_double(mae(estimate, truth)) << "\n";
  return kExitOk;
}

}  // namespace

void write_dataset(const std::filesystem::path& dir, const Dataset& dataset) {
  write_dataset_impl(dir, dataset);
}

DatasetOnDisk read_dataset(const std::filesystem::path& dir) {
  return read_dataset_impl(dir);
}

int run_cli(const std::vector<std::string>& args) {
  CLI::App app{"Active RSSI map reconstruction with a dreaming world model"};
  app.require_subcommand(1);
  app.set_config("--config", "", "Flat key = value config file; flags win");

  CliState st;
  app.add_option("--seed", st.seed, "Root seed")->capture_default_str();
  app.add_option("--out", st.out_dir, "Output directory")->capture_default_str();

  CLI::App* synth = app.add_subcommand("synth", "Generate a synthetic dataset");
  st.synth.attach(synth);

  CLI::App* train = app.add_subcommand("train", "Train the world model on a dataset");
  train->add_option("--data", st.data_dir, "Dataset directory")->required();
  st.train_flags.attach(train);

  CLI::App* run = app.add_subcommand("run", "One acquisition run with baselines");
  run->add_option("--data", st.data_dir, "Dataset directory (synthesized when absent)");
  run->add_option("--model", st.model_file, "Model file (DMWM)");
  run->add_option("--budget", st.budget, "Measurement budget")->check(CLI::PositiveNumber);
  run->add_option("--pool", st.pool_size, "Candidate pool size")->check(CLI::PositiveNumber);
  run->add_option("--dreams", st.dream_samples, "Dream samples per candidate")
      ->check(CLI::Range(2, 1 << 20));
  run->add_option("--rule", st.rule, "Selection rule")
      ->check(CLI::IsMember({"argmin_variance", "argmax_variance", "random"}));
  run->add_option("--methods", st.methods, "Methods to evaluate")->delimiter(',');
  run->add_option("--pair-index", st.pair_index, "Evaluation pair index");
  run->add_option("--gp-max-points", st.gp_max_points, "Kernel fit subsample cap")
      ->check(CLI::Range(16, 1 << 20));
  st.synth.attach(run);

  CLI::App* sweep = app.add_subcommand("sweep", "Budget and size sweeps to CSV");
  sweep->add_option("--data", st.data_dir, "Root with scale_<s> dataset dirs (synthesized when absent)");
  sweep->add_option("--scales", st.scales, "Scale factors")->delimiter(',');
  sweep->add_option("--budgets", st.budgets, "Budgets")->delimiter(',');
  sweep->add_option("--methods", st.methods, "Methods to evaluate")->delimiter(',');
  sweep->add_option("--reps", st.repetitions, "Repetitions")->check(CLI::PositiveNumber);
  sweep->add_option("--pool", st.pool_size, "Candidate pool size")->check(CLI::PositiveNumber);
  sweep->add_option("--dreams", st.dream_samples, "Dream samples per candidate")
      ->check(CLI::Range(2, 1 << 20));
  sweep->add_option("--rule", st.rule, "Selection rule")
      ->check(CLI::IsMember({"argmin_variance", "argmax_variance", "random"}));
  sweep->add_option("--gp-max-points", st.gp_max_points, "Kernel fit subsample cap")
      ->check(CLI::Range(16, 1 << 20));
  st.synth.attach(sweep);
  st.train_flags.attach(sweep);

  CLI::App* eval = app.add_subcommand("eval", "RMSE/MAE between two map files");
  eval->add_option("--estimate", st.estimate_file, "Estimate map")->required();
  eval->add_option("--truth", st.truth_file, "Ground-truth map")->required();
  eval->add_option("--pair", st.pair_file, "Pair JSON for dBm denormalization");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (synth->parsed()) return cmd_synth(st);
    if (train->parsed()) return cmd_train(st);
    if (run->parsed()) return cmd_run(st);
    if (sweep->parsed()) return cmd_sweep(st);
    if (eval->parsed()) return cmd_eval(st);
    return kExitUsage;
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const NumericError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  }
}

}  // namespace dreammap::cli

// Copyright 2026 The ACAE Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
// =============================================================================

// acae: command-line driver for dataset generation, training, evaluation,
// sweeps, gradient checks and the overhead benchmark.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "acae/acae.h"

namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;
constexpr int kExitNumerical = 3;

struct CommonArgs {
  std::string config_path;
  std::vector<std::string> overrides;
  std::optional<unsigned long long> seed;
  std::string out_dir;
};

/// Thrown to unwind with a specific exit code after printing a diagnostic.
struct Exit {
  int code;
};

int exit_code_for(acae_status s) {
  switch (s) {
    case ACAE_OK: return kExitOk;
    case ACAE_ERR_IO:
    case ACAE_ERR_PARSE:
    case ACAE_ERR_CONFIG: return kExitUsage;
    case ACAE_ERR_NUMERICAL: return kExitNumerical;
    default: return kExitFailure;
  }
}

void check(acae_status s, const std::string& context) {
  if (s == ACAE_OK) return;
  std::cerr << "acae: " << context << ": " << acae_status_name(s) << ": " << acae_last_error()
            << "\n";
  throw Exit{exit_code_for(s)};
}

template <typename T, void (*Destroy)(T*)>
struct Deleter {
  void operator()(T* p) const { Destroy(p); }
};
using ConfigPtr = std::unique_ptr<acae_config, Deleter<acae_config, acae_config_destroy>>;
using DatasetPtr = std::unique_ptr<acae_dataset, Deleter<acae_dataset, acae_dataset_destroy>>;
using ModelPtr = std::unique_ptr<acae_model, Deleter<acae_model, acae_model_destroy>>;
using ReportPtr = std::unique_ptr<acae_report, Deleter<acae_report, acae_report_destroy>>;

void require_file(const std::string& path, const char* what) {
  if (path.empty() || !fs::is_regular_file(path)) {
    std::cerr << "acae: " << what << " not found: " << (path.empty() ? "(none given)" : path)
              << "\n";
    throw Exit{kExitUsage};
  }
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
  if (!out) {
    std::cerr << "acae: cannot write " << path.string() << "\n";
    throw Exit{kExitUsage};
  }
}

fs::path output_dir(const CommonArgs& args) {
  std::string dir = args.out_dir;
  if (dir.empty()) {
    const char* env = std::getenv("ACAE_OUTPUT_DIR");
    dir = env != nullptr && *env != '\0' ? env : "acae_out";
  }
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) {
    std::cerr << "acae: cannot create output directory " << dir << ": " << ec.message() << "\n";
    throw Exit{kExitUsage};
  }
  return dir;
}

/// Builds the effective configuration (file, then --set, then --seed) and
/// snapshots it next to the run's outputs.
ConfigPtr load_config(const CommonArgs& args, const fs::path& out, const std::string& command) {
  acae_config* raw = nullptr;
  check(acae_config_create(&raw), "config");
  ConfigPtr cfg(raw);
  if (!args.config_path.empty()) {
    require_file(args.config_path, "config file");
    check(acae_config_load_file(cfg.get(), args.config_path.c_str()), "config");
  }
  for (const auto& kv : args.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) {
      std::cerr << "acae: --set expects key=value, got '" << kv << "'\n";
      throw Exit{kExitUsage};
    }
    check(acae_config_set(cfg.get(), kv.substr(0, eq).c_str(), kv.substr(eq + 1).c_str()),
          "--set");
  }
  if (args.seed) check(acae_config_set(cfg.get(), "seed", std::to_string(*args.seed).c_str()), "--seed");
  check(acae_config_validate(cfg.get()), "config");
  write_text(out / (command + "_effective_config.txt"), acae_config_effective(cfg.get()));
  return cfg;
}

DatasetPtr load_dataset(const std::string& path) {
  require_file(path, "dataset");
  acae_dataset* raw = nullptr;
  check(acae_dataset_load(path.c_str(), &raw), "dataset " + path);
  return DatasetPtr(raw);
}

ModelPtr load_model(const std::string& path) {
  require_file(path, "model");
  acae_model* raw = nullptr;
  check(acae_model_load(path.c_str(), &raw), "model " + path);
  return ModelPtr(raw);
}

void emit(const ReportPtr& report, const fs::path& out, const std::string& stem) {
  const std::string text = acae_report_text(report.get());
  std::cout << text;
  write_text(out / (stem + ".txt"), text);
  write_text(out / (stem + ".csv"), acae_report_csv(report.get()));
  const std::string timing = acae_report_timing(report.get());
  if (!timing.empty()) write_text(out / (stem + "_timing.txt"), timing);
}

void add_common(CLI::App* app, CommonArgs& args) {
  app->add_option("-c,--config", args.config_path, "key=value configuration file");
  app->add_option("-s,--set", args.overrides, "override a setting, key=value (repeatable)");
  app->add_option("--seed", args.seed, "root seed (overrides the 'seed' key)");
  app->add_option("-o,--out", args.out_dir,
                  "output directory (default: $ACAE_OUTPUT_DIR, else ./acae_out)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ACAE context-aware person retrieval toolkit"};
  app.require_subcommand(1);
  app.set_version_flag("--version", acae_version());

  CommonArgs gen_args, train_args, eval_args, sweep_args, gc_args, bench_args;
  std::string gen_path, data_path, model_path, sweep_kind = "all";

  auto* gen = app.add_subcommand("gen", "generate a synthetic co-traveler dataset");
  add_common(gen, gen_args);
  gen->add_option("--dataset", gen_path, "dataset path (default: <out>/dataset.jsonl)");

  auto* train = app.add_subcommand("train", "train the head on the training split");
  add_common(train, train_args);
  train->add_option("-d,--data", data_path, "dataset file")->required();

  auto* eval = app.add_subcommand("eval", "baseline vs ACAE retrieval on the evaluation split");
  add_common(eval, eval_args);
  eval->add_option("-d,--data", data_path, "dataset file")->required();
  eval->add_option("-m,--model", model_path, "model file")->required();

  auto* sweep = app.add_subcommand("sweep", "lambda, feature-subset and k-reciprocal sweeps");
  add_common(sweep, sweep_args);
  sweep->add_option("-d,--data", data_path, "dataset file")->required();
  sweep->add_option("-m,--model", model_path, "model file")->required();
  sweep->add_option("-k,--kind", sweep_kind, "lambda | subsets | rerank | all")
      ->check(CLI::IsMember({"lambda", "subsets", "rerank", "all"}));

  auto* gradcheck = app.add_subcommand("gradcheck", "compare analytic and numeric gradients");
  add_common(gradcheck, gc_args);

  auto* bench = app.add_subcommand("bench", "per-pair cost of the head over appearance scoring");
  add_common(bench, bench_args);
  bench->add_option("-d,--data", data_path, "dataset file")->required();
  bench->add_option("-m,--model", model_path, "model file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*gen) {
      const fs::path out = output_dir(gen_args);
      const ConfigPtr cfg = load_config(gen_args, out, "gen");
      acae_dataset* raw = nullptr;
      check(acae_dataset_generate(cfg.get(), &raw), "gen");
      const DatasetPtr ds(raw);
      const std::string path = gen_path.empty() ? (out / "dataset.jsonl").string() : gen_path;
      check(acae_dataset_save(ds.get(), path.c_str()), "gen");
      std::cout << "wrote " << acae_dataset_image_count(ds.get()) << " images to " << path << "\n";
    } else if (*train) {
      const fs::path out = output_dir(train_args);
      const ConfigPtr cfg = load_config(train_args, out, "train");
      const DatasetPtr ds = load_dataset(data_path);
      acae_model* raw_model = nullptr;
      acae_report* raw_report = nullptr;
      const std::string checkpoint = (out / "checkpoint.acae").string();
      check(acae_train(cfg.get(), ds.get(), checkpoint.c_str(), &raw_model, &raw_report),
            "train");
      const ModelPtr model(raw_model);
      const ReportPtr report(raw_report);
      const std::string model_file = (out / "model.acae").string();
      check(acae_model_save(model.get(), model_file.c_str()), "train");
      emit(report, out, "train_report");
      std::cout << "model: " << model_file << "\ncheckpoint: " << checkpoint << "\n";
    } else if (*eval) {
      const fs::path out = output_dir(eval_args);
      const ConfigPtr cfg = load_config(eval_args, out, "eval");
      const DatasetPtr ds = load_dataset(data_path);
      const ModelPtr model = load_model(model_path);
      acae_report* raw = nullptr;
      check(acae_evaluate(cfg.get(), ds.get(), model.get(), &raw), "eval");
      emit(ReportPtr(raw), out, "eval_report");
    } else if (*sweep) {
      const fs::path out = output_dir(sweep_args);
      const ConfigPtr cfg = load_config(sweep_args, out, "sweep");
      const DatasetPtr ds = load_dataset(data_path);
      const ModelPtr model = load_model(model_path);
      acae_report* raw = nullptr;
      check(acae_sweep(cfg.get(), ds.get(), model.get(), sweep_kind.c_str(), &raw), "sweep");
      emit(ReportPtr(raw), out, "sweep_" + sweep_kind);
    } else if (*gradcheck) {
      const fs::path out = output_dir(gc_args);
      const ConfigPtr cfg = load_config(gc_args, out, "gradcheck");
      acae_report* raw = nullptr;
      check(acae_gradcheck(cfg.get(), &raw), "gradcheck");
      const ReportPtr report(raw);
      emit(report, out, "gradcheck");
      return acae_report_passed(report.get()) ? kExitOk : kExitFailure;
    } else if (*bench) {
      const fs::path out = output_dir(bench_args);
      const ConfigPtr cfg = load_config(bench_args, out, "bench");
      const DatasetPtr ds = load_dataset(data_path);
      const ModelPtr model = load_model(model_path);
      acae_report* raw = nullptr;
      check(acae_bench(cfg.get(), ds.get(), model.get(), &raw), "bench");
      emit(ReportPtr(raw), out, "bench");
    }
  } catch (const Exit& e) {
    return e.code;
  }
  return kExitOk;
}

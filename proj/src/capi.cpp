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

#include "acae/acae.h"

#include <chrono>
#include <cstring>
#include <map>
#include <memory>
#include <new>
#include <sstream>
#include <string>

#include "acae/config.hpp"
#include "acae/error.hpp"
#include "acae/eval.hpp"
#include "acae/model_io.hpp"
#include "acae/rng.hpp"
#include "acae/synth.hpp"
#include "acae/training.hpp"

struct acae_config {
  acae::RunConfig config;
  std::string effective;
};

struct acae_dataset {
  acae::SyntheticDataset data;
};

struct acae_model {
  acae::AcaeParams params;
};

struct acae_report {
  std::string text;
  std::string csv;
  std::string timing;
  bool passed = true;
  std::map<std::string, std::map<std::string, double>> values;
};

namespace {

thread_local std::string g_last_error;

acae_status to_status(acae::ErrorCode code) {
  switch (code) {
    case acae::ErrorCode::kInvalidArgument: return ACAE_ERR_INVALID_ARGUMENT;
    case acae::ErrorCode::kDimensionMismatch: return ACAE_ERR_DIMENSION;
    case acae::ErrorCode::kIo: return ACAE_ERR_IO;
    case acae::ErrorCode::kParse: return ACAE_ERR_PARSE;
    case acae::ErrorCode::kNumerical: return ACAE_ERR_NUMERICAL;
    case acae::ErrorCode::kColdPair: return ACAE_ERR_COLD_PAIR;
    case acae::ErrorCode::kConfig: return ACAE_ERR_CONFIG;
  }
  return ACAE_ERR_INTERNAL;
}

template <typename Fn>
acae_status guarded(Fn&& fn) {
  try {
    fn();
    g_last_error.clear();
    return ACAE_OK;
  } catch (const acae::Error& e) {
    g_last_error = e.what();
    return to_status(e.code());
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
  } catch (const std::exception& e) {
    g_last_error = e.what();
  } catch (...) {
    g_last_error = "unknown failure";
  }
  return ACAE_ERR_INTERNAL;
}

void need(const void* p, const char* what) {
  ACAE_REQUIRE(p != nullptr, acae::ErrorCode::kInvalidArgument,
               std::string(what) + " must not be NULL");
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void check_dims(const acae::RunConfig& cfg, const acae::SyntheticDataset& ds,
                const acae::AcaeParams* params) {
  const std::size_t head_dim = params ? params->config.dim : cfg.head().dim;
  ACAE_REQUIRE(ds.dim == head_dim, acae::ErrorCode::kConfig,
               "acae.dim: head width " + std::to_string(head_dim) +
                   " does not match dataset width " + std::to_string(ds.dim));
}

void add_metrics(acae_report& r, const acae::EvalReport& report) {
  for (const auto& row : report.rows) {
    auto& v = r.values[row.name];
    v["mAP"] = row.map;
    v["top1"] = row.top1;
    v["top5"] = row.top5;
    v["top10"] = row.top10;
    v["lambda"] = row.fusion.lambda;
  }
}

std::string eval_header(const acae::EvalReport& report) {
  return "queries: " + std::to_string(report.queries) +
         "  skipped (no match in split): " + std::to_string(report.skipped) + "\n";
}

void append_eval_timing(acae_report& r, const char* label, const acae::EvalReport& report) {
  std::ostringstream t;
  t << label << ": pairs=" << report.pairs << " appearance_s=" << report.appearance_seconds
    << " acae_head_s=" << report.head_seconds << "\n";
  r.timing += t.str();
}

void sweep_lambda_into(acae_report& r, const acae::RunConfig& cfg,
                       const acae::SyntheticDataset& ds, const acae::AcaeParams& params) {
  const auto lambdas = cfg.lambdas();
  const acae::EvalReport rep = acae::sweep_lambda(ds.images, params, cfg.protocol(), lambdas);
  r.text += "lambda sweep\n" + eval_header(rep) + rep.table().text();
  r.csv += rep.table().csv();
  add_metrics(r, rep);
  append_eval_timing(r, "lambda sweep", rep);
}

void sweep_subsets_into(acae_report& r, const acae::RunConfig& cfg,
                        const acae::SyntheticDataset& ds, const acae::AcaeParams& params) {
  const acae::EvalReport rep = acae::sweep_subsets(ds.images, params, cfg.protocol());
  r.text += "feature subsets\n" + eval_header(rep) + rep.table().text();
  r.csv += rep.table().csv();
  add_metrics(r, rep);
  append_eval_timing(r, "feature subsets", rep);
}

void sweep_rerank_into(acae_report& r, const acae::RunConfig& cfg,
                       const acae::SyntheticDataset& ds, const acae::AcaeParams& params) {
  const auto grid = cfg.rerank_grid();
  const acae::RerankComparison cmp =
      acae::compare_rerank(ds.images, params, cfg.protocol(), grid);
  acae::Table g({"k1", "k2", "lambda_r", "mAP", "top1", "top5", "top10"});
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const auto& m = cmp.grid[i];
    g.add_row({std::to_string(grid[i].k1), std::to_string(grid[i].k2),
               acae::fmt_real(grid[i].lambda, 2), acae::fmt_real(100 * m.map, 2),
               acae::fmt_real(100 * m.top1, 2), acae::fmt_real(100 * m.top5, 2),
               acae::fmt_real(100 * m.top10, 2)});
  }
  r.text += "k-reciprocal comparison (best of grid: " + cmp.best.name() + ")\n" +
            eval_header(cmp.report) + cmp.report.table().text() + "\nk-reciprocal grid\n" +
            g.text();
  r.csv += cmp.report.table().csv();
  add_metrics(r, cmp.report);
  for (const auto& m : cmp.grid) {
    auto& v = r.values[m.name];
    v["mAP"] = m.map;
    v["top1"] = m.top1;
  }
}

}  // namespace

extern "C" {

const char* acae_version(void) { return "1.0.0"; }

const char* acae_last_error(void) { return g_last_error.c_str(); }

const char* acae_status_name(acae_status status) {
  switch (status) {
    case ACAE_OK: return "ok";
    case ACAE_ERR_INVALID_ARGUMENT: return "invalid argument";
    case ACAE_ERR_DIMENSION: return "dimension mismatch";
    case ACAE_ERR_IO: return "i/o error";
    case ACAE_ERR_PARSE: return "parse error";
    case ACAE_ERR_NUMERICAL: return "numerical failure";
    case ACAE_ERR_COLD_PAIR: return "cold pair";
    case ACAE_ERR_CONFIG: return "configuration error";
    case ACAE_ERR_INTERNAL: return "internal error";
  }
  return "unknown status";
}

acae_status acae_config_create(acae_config** out) {
  return guarded([&] {
    need(out, "out");
    *out = new acae_config();
  });
}

void acae_config_destroy(acae_config* config) { delete config; }

acae_status acae_config_load_file(acae_config* config, const char* path) {
  return guarded([&] {
    need(config, "config");
    need(path, "path");
    config->config.merge_file(path);
  });
}

acae_status acae_config_set(acae_config* config, const char* key, const char* value) {
  return guarded([&] {
    need(config, "config");
    need(key, "key");
    need(value, "value");
    config->config.set(key, value);
  });
}

acae_status acae_config_get(const acae_config* config, const char* key, char* buf,
                            size_t capacity, size_t* needed) {
  return guarded([&] {
    need(config, "config");
    need(key, "key");
    const std::string& v = config->config.get(key);
    if (needed) *needed = v.size() + 1;
    if (buf && capacity > v.size()) std::memcpy(buf, v.c_str(), v.size() + 1);
  });
}

acae_status acae_config_validate(const acae_config* config) {
  return guarded([&] {
    need(config, "config");
    const auto& c = config->config;
    c.scenario();
    c.head();
    c.protocol();
    c.train();
    c.lambdas();
    c.rerank_grid();
    c.bench();
    c.gradcheck();
  });
}

const char* acae_config_effective(acae_config* config) {
  if (config == nullptr) return "";
  config->effective = config->config.effective_text();
  return config->effective.c_str();
}

acae_status acae_dataset_generate(const acae_config* config, acae_dataset** out) {
  return guarded([&] {
    need(config, "config");
    need(out, "out");
    auto ds = std::make_unique<acae_dataset>();
    ds->data = acae::generate(config->config.scenario());
    *out = ds.release();
  });
}

acae_status acae_dataset_load(const char* path, acae_dataset** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    auto ds = std::make_unique<acae_dataset>();
    ds->data = acae::load_dataset(path);
    *out = ds.release();
  });
}

acae_status acae_dataset_save(const acae_dataset* dataset, const char* path) {
  return guarded([&] {
    need(dataset, "dataset");
    need(path, "path");
    acae::save_dataset(dataset->data, path);
  });
}

void acae_dataset_destroy(acae_dataset* dataset) { delete dataset; }

size_t acae_dataset_image_count(const acae_dataset* dataset) {
  return dataset ? dataset->data.images.size() : 0;
}

size_t acae_dataset_dim(const acae_dataset* dataset) { return dataset ? dataset->data.dim : 0; }

acae_status acae_model_create(const acae_config* config, acae_model** out) {
  return guarded([&] {
    need(config, "config");
    need(out, "out");
    auto m = std::make_unique<acae_model>();
    m->params = acae::AcaeParams::initialize(config->config.head(),
                                             config->config.seed_for("acae.init"));
    *out = m.release();
  });
}

acae_status acae_model_load(const char* path, acae_model** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    auto m = std::make_unique<acae_model>();
    m->params = acae::load_model(path);
    *out = m.release();
  });
}

acae_status acae_model_save(const acae_model* model, const char* path) {
  return guarded([&] {
    need(model, "model");
    need(path, "path");
    acae::save_model(model->params, path);
  });
}

void acae_model_destroy(acae_model* model) { delete model; }

size_t acae_model_dim(const acae_model* model) { return model ? model->params.config.dim : 0; }

acae_status acae_model_forward(const acae_model* model, const double* a, size_t n,
                               const double* b, size_t m, size_t dim, acae_embedding which,
                               double* out_a, double* out_b) {
  return guarded([&] {
    need(model, "model");
    ACAE_REQUIRE(n == 0 || a != nullptr, acae::ErrorCode::kInvalidArgument, "a must not be NULL");
    ACAE_REQUIRE(m == 0 || b != nullptr, acae::ErrorCode::kInvalidArgument, "b must not be NULL");
    ACAE_REQUIRE(dim == model->params.config.dim, acae::ErrorCode::kDimensionMismatch,
                 "feature width " + std::to_string(dim) + " does not match the head (" +
                     std::to_string(model->params.config.dim) + ")");
    ACAE_REQUIRE(which >= ACAE_EMBED_INTRA && which <= ACAE_EMBED_FINAL,
                 acae::ErrorCode::kInvalidArgument, "unknown embedding selector");
    acae::Matrix ma(n, dim), mb(m, dim);
    for (std::size_t i = 0; i < n * dim; ++i) ma.values()[i] = static_cast<acae::Real>(a[i]);
    for (std::size_t i = 0; i < m * dim; ++i) mb.values()[i] = static_cast<acae::Real>(b[i]);
    const acae::PairForward f = acae::acae_forward(ma, mb, model->params);
    auto pick = [&](const acae::ContextualEmbeddings& e) -> const acae::Matrix& {
      return which == ACAE_EMBED_INTRA ? e.intra : which == ACAE_EMBED_INTER ? e.inter : e.final;
    };
    if (out_a)
      for (std::size_t i = 0; i < n * dim; ++i) out_a[i] = pick(f.a.out).values()[i];
    if (out_b)
      for (std::size_t i = 0; i < m * dim; ++i) out_b[i] = pick(f.b.out).values()[i];
  });
}

acae_status acae_train(const acae_config* config, const acae_dataset* dataset,
                       const char* checkpoint_path, acae_model** out_model,
                       acae_report** out_report) {
  return guarded([&] {
    need(config, "config");
    need(dataset, "dataset");
    need(out_model, "out_model");
    const acae::RunConfig& cfg = config->config;
    const acae::SyntheticDataset& ds = dataset->data;
    check_dims(cfg, ds, nullptr);
    const acae::EvalProtocol protocol = cfg.protocol();
    std::vector<acae::FeatureSet> train;
    for (std::size_t i : acae::train_indices(ds.images.size(), protocol.test_fraction))
      train.push_back(ds.images[i]);
    const std::size_t identities = ds.identity_count();
    ACAE_REQUIRE(identities > 0, acae::ErrorCode::kInvalidArgument,
                 "dataset has no labeled identities");

    const auto t0 = std::chrono::steady_clock::now();
    acae::Trainer trainer(acae::AcaeParams::initialize(cfg.head(), cfg.seed_for("acae.init")),
                          std::move(train), cfg.train(), identities);
    auto report = std::make_unique<acae_report>();
    acae::Table table({"epoch", "lr", "frozen", "steps", "cold_pairs", "mean_loss"});
    std::ostringstream timing;
    for (const auto& s : trainer.run()) {
      table.add_row({std::to_string(s.epoch), acae::fmt_real(s.learning_rate, 6),
                     s.frozen ? "1" : "0", std::to_string(s.steps),
                     std::to_string(s.cold_pairs), acae::fmt_real(s.mean_loss, 6)});
      auto& v = report->values[std::to_string(s.epoch)];
      v["mean_loss"] = s.mean_loss;
      v["cold_pairs"] = static_cast<double>(s.cold_pairs);
      v["lr"] = s.learning_rate;
    }
    timing << "train: images=" << trainer.images().size() << " seconds=" << seconds_since(t0)
           << "\n";
    report->text = "training images: " + std::to_string(trainer.images().size()) +
                   "  identities: " + std::to_string(identities) + "\n" + table.text();
    report->csv = table.csv();
    report->timing = timing.str();
    if (checkpoint_path != nullptr)
      acae::save_checkpoint({trainer.params(), trainer.bank(), trainer.oim(), trainer.epoch()},
                            checkpoint_path);
    auto model = std::make_unique<acae_model>();
    model->params = trainer.params();
    *out_model = model.release();
    if (out_report != nullptr) *out_report = report.release();
  });
}

acae_status acae_evaluate(const acae_config* config, const acae_dataset* dataset,
                          const acae_model* model, acae_report** out) {
  return guarded([&] {
    need(config, "config");
    need(dataset, "dataset");
    need(model, "model");
    need(out, "out");
    check_dims(config->config, dataset->data, &model->params);
    const acae::EvalReport rep =
        acae::evaluate(dataset->data.images, model->params, config->config.protocol());
    auto r = std::make_unique<acae_report>();
    r->text = eval_header(rep) + rep.table().text() + "\n" + acae::delta_table(rep).text();
    r->csv = rep.table().csv();
    add_metrics(*r, rep);
    append_eval_timing(*r, "eval", rep);
    *out = r.release();
  });
}

acae_status acae_sweep(const acae_config* config, const acae_dataset* dataset,
                       const acae_model* model, const char* kind, acae_report** out) {
  return guarded([&] {
    need(config, "config");
    need(dataset, "dataset");
    need(model, "model");
    need(kind, "kind");
    need(out, "out");
    check_dims(config->config, dataset->data, &model->params);
    const std::string k = kind;
    ACAE_REQUIRE(k == "lambda" || k == "subsets" || k == "rerank" || k == "all",
                 acae::ErrorCode::kInvalidArgument,
                 "sweep kind must be lambda, subsets, rerank or all, got '" + k + "'");
    auto r = std::make_unique<acae_report>();
    const auto& cfg = config->config;
    const auto& ds = dataset->data;
    const auto& params = model->params;
    if (k == "lambda" || k == "all") sweep_lambda_into(*r, cfg, ds, params);
    if (k == "all") r->text += "\n";
    if (k == "subsets" || k == "all") sweep_subsets_into(*r, cfg, ds, params);
    if (k == "all") r->text += "\n";
    if (k == "rerank" || k == "all") sweep_rerank_into(*r, cfg, ds, params);
    *out = r.release();
  });
}

acae_status acae_gradcheck(const acae_config* config, acae_report** out) {
  return guarded([&] {
    need(config, "config");
    need(out, "out");
    const acae::GradCheckSettings gc = config->config.gradcheck();
    const std::size_t sizes[3] = {1, 2, 5};
    std::map<std::string, acae::GradCheckBlock> worst;
    std::vector<std::string> order;
    auto r = std::make_unique<acae_report>();
    acae::Real overall = 0;
    std::string overall_entry;
    for (std::size_t k = 0; k < gc.instances; ++k) {
      // Instances cycle through every (n, m) size pair, first with the
      // configured head count and then with a single head.
      const std::size_t n = sizes[k % 3], m = sizes[(k / 3) % 3];
      acae::AcaeConfig head = gc.head;
      if ((k / 9) % 2 == 1) head.heads = 1;
      const auto inst = acae::make_grad_check_instance(
          head, n, m, gc.identities, acae::derive_seed(config->config.root_seed(), "gradcheck", k));
      const acae::GradCheckReport rep =
          acae::grad_check(inst.params, inst.pair, inst.oim, {}, gc.tolerance, gc.step);
      for (const auto& b : rep.blocks) {
        auto it = worst.find(b.name);
        if (it == worst.end()) {
          order.push_back(b.name);
          it = worst.emplace(b.name, b).first;
          it->second.count = 0;
          it->second.max_rel_error = -1;
        }
        it->second.count += b.count;
        if (b.count > 0 && b.max_rel_error > it->second.max_rel_error) {
          it->second.max_rel_error = b.max_rel_error;
          it->second.worst_entry = "instance " + std::to_string(k) + " " + b.worst_entry;
        }
      }
      if (rep.max_rel_error > overall || k == 0) {
        overall = rep.max_rel_error;
        overall_entry = "instance " + std::to_string(k) + " " + rep.worst_entry;
      }
    }
    acae::Table table({"parameter", "entries", "max_rel_error", "worst_entry", "status"});
    for (const auto& name : order) {
      auto& b = worst[name];
      const bool ok = b.count == 0 || b.max_rel_error < gc.tolerance;
      r->passed = r->passed && ok;
      const double err = b.count == 0 ? 0.0 : static_cast<double>(b.max_rel_error);
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.3e", err);
      table.add_row({name, std::to_string(b.count), buf, b.worst_entry, ok ? "PASS" : "FAIL"});
      r->values[name]["max_rel_error"] = err;
      r->values[name]["entries"] = static_cast<double>(b.count);
    }
    char head[256];
    std::snprintf(head, sizeof head,
                  "gradcheck: %zu instances, d=%zu, h=%zu and 1, tolerance %.1e, step %.1e\n",
                  gc.instances, gc.head.dim, gc.head.heads, static_cast<double>(gc.tolerance),
                  static_cast<double>(gc.step));
    char tail[512];
    std::snprintf(tail, sizeof tail, "result: %s (max rel error %.3e at %s)\n",
                  r->passed ? "PASS" : "FAIL", static_cast<double>(overall),
                  overall_entry.c_str());
    r->text = std::string(head) + table.text() + tail;
    r->csv = table.csv();
    r->values["overall"]["max_rel_error"] = overall;
    *out = r.release();
  });
}

acae_status acae_bench(const acae_config* config, const acae_dataset* dataset,
                       const acae_model* model, acae_report** out) {
  return guarded([&] {
    need(config, "config");
    need(dataset, "dataset");
    need(model, "model");
    need(out, "out");
    check_dims(config->config, dataset->data, &model->params);
    const acae::BenchSettings bs = config->config.bench();
    const acae::BenchReport rep =
        acae::bench_overhead(dataset->data.images, model->params, config->config.fusion(),
                             bs.repeats, bs.max_pairs);
    auto r = std::make_unique<acae_report>();
    const acae::Table t = rep.table();
    r->text = t.text();
    r->csv = t.csv();
    r->timing = r->text;
    if (rep.repeats > 0) {
      r->values["appearance"]["mean_ms"] = rep.appearance_mean_ms;
      r->values["appearance"]["std_ms"] = rep.appearance_std_ms;
      r->values["appearance+acae"]["mean_ms"] = rep.acae_mean_ms;
      r->values["appearance+acae"]["std_ms"] = rep.acae_std_ms;
      r->values["delta"]["mean_ms"] = rep.delta_ms();
    }
    *out = r.release();
  });
}

void acae_report_destroy(acae_report* report) { delete report; }

const char* acae_report_text(const acae_report* report) {
  return report ? report->text.c_str() : "";
}

const char* acae_report_csv(const acae_report* report) { return report ? report->csv.c_str() : ""; }

const char* acae_report_timing(const acae_report* report) {
  return report ? report->timing.c_str() : "";
}

int acae_report_passed(const acae_report* report) { return report && report->passed ? 1 : 0; }

acae_status acae_report_value(const acae_report* report, const char* row_key, const char* column,
                              double* out) {
  return guarded([&] {
    need(report, "report");
    need(row_key, "row_key");
    need(column, "column");
    need(out, "out");
    const auto row = report->values.find(row_key);
    ACAE_REQUIRE(row != report->values.end(), acae::ErrorCode::kInvalidArgument,
                 std::string("report has no row ") + row_key);
    const auto cell = row->second.find(column);
    ACAE_REQUIRE(cell != row->second.end(), acae::ErrorCode::kInvalidArgument,
                 std::string("report row ") + row_key + " has no column " + column);
    *out = cell->second;
  });
}

}  // extern "C"

// Command-line front end: simulate | fit | tune | evaluate | benchmark.
//
// Data travels as the CSV layout in dorm/csv.hpp, configuration and models
// as JSON. Every run writes a manifest.json recording the command, config
// snapshot, input digests, seed, and outputs. Output files are written to
// temporaries and renamed on success; failures remove the partial files and
// emit a machine-readable error JSON (exit 2 for validation problems, 3 for
// numerical ones).

#include <atomic>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "dorm/dorm.hpp"

namespace fs = std::filesystem;
using dorm::json;

namespace {

struct OutputStage {
  fs::path dir;
  std::vector<std::pair<fs::path, fs::path>> staged;  // tmp -> final

  explicit OutputStage(const std::string& out_dir) : dir(out_dir) {
    fs::create_directories(dir);
  }

  fs::path stage(const std::string& name) {
    const fs::path tmp = dir / ("." + name + ".tmp");
    staged.emplace_back(tmp, dir / name);
    return tmp;
  }

  void commit() {
    for (const auto& [tmp, final_path] : staged) fs::rename(tmp, final_path);
    staged.clear();
  }

  ~OutputStage() {
    for (const auto& [tmp, final_path] : staged) {
      std::error_code ec;
      fs::remove(tmp, ec);
    }
  }
};

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw dorm::ValidationError("cannot open " + path.string());
  out << text;
}

std::string format_double(double v) { return dorm::detail::format_double(v); }

double wall_seconds_since(const std::chrono::steady_clock::time_point& start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
      .count();
}

// Deterministic per-work-item seed for the benchmark grid.
std::uint64_t derive_seed(std::uint64_t seed, std::size_t a, int b) {
  std::uint64_t s = seed;
  dorm::splitmix64(s);
  s ^= 0x9e3779b97f4a7c15ull * (static_cast<std::uint64_t>(a) + 1);
  dorm::splitmix64(s);
  s ^= 0xbf58476d1ce4e5b9ull * (static_cast<std::uint64_t>(b) + 1);
  return dorm::splitmix64(s);
}

void write_manifest(OutputStage& stage, dorm::RunManifest manifest) {
  for (const auto& [tmp, final_path] : stage.staged)
    manifest.outputs.push_back(final_path.filename().string());
  write_text(stage.stage("manifest.json"), manifest.to_json().dump(2) + "\n");
}

dorm::SimParams load_sim_params(const std::string& path) {
  if (path.empty()) return dorm::SimParams{};
  std::ifstream in(path);
  if (!in) throw dorm::ValidationError("cannot open params: " + path);
  json doc;
  in >> doc;
  return dorm::sim_params_from_json(doc);
}

dorm::FitConfig load_config(const std::string& path) {
  if (path.empty()) return dorm::FitConfig{};
  std::ifstream in(path);
  if (!in) throw dorm::ValidationError("cannot open config: " + path);
  json doc;
  in >> doc;
  return dorm::config_from_json(doc);
}

std::vector<double> parse_levels(const std::string& text) {
  if (text == "grid") return dorm::default_smax_grid();
  std::vector<double> values;
  std::stringstream ss(text);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    try {
      values.push_back(std::stod(tok));
    } catch (const std::exception&) {
      throw dorm::ValidationError("bad grid value: " + tok);
    }
  }
  if (values.empty()) throw dorm::ValidationError("empty grid");
  return values;
}

fs::path resolve_data_csv(const std::string& data) {
  fs::path p(data);
  if (fs::is_directory(p)) p /= "data.csv";
  if (!fs::exists(p))
    throw dorm::ValidationError("data csv not found: " + p.string());
  return p;
}

int run_simulate(const std::string& params_path, const std::string& out_dir,
                 std::uint64_t seed, bool seed_set) {
  const auto t0 = std::chrono::steady_clock::now();
  dorm::SimParams params = load_sim_params(params_path);
  if (seed_set) params.seed = seed;
  params = params.resolved();

  const auto sources = dorm::generate_sources(params);
  const dorm::TargetBundle bundle = dorm::generate_target(params, sources);

  OutputStage stage(out_dir);
  dorm::write_csv_file(stage.stage("data.csv").string(), sources, bundle.data);
  write_text(stage.stage("oracle.json"),
             dorm::oracle_sidecar_to_json(params, bundle).dump() + "\n");

  dorm::RunManifest manifest;
  manifest.command = "simulate";
  manifest.config = dorm::sim_params_to_json(params);
  manifest.seed = params.seed;
  if (!params_path.empty())
    manifest.inputs.emplace_back(params_path, dorm::file_digest(params_path));
  manifest.wall_clock_sec = wall_seconds_since(t0);
  write_manifest(stage, manifest);
  stage.commit();
  return 0;
}

int run_fit(const std::string& data, const std::string& config_path,
            const std::string& out_dir, std::uint64_t seed, bool seed_set,
            const std::string& smax, bool sweep_grid, bool surrogate) {
  const auto t0 = std::chrono::steady_clock::now();
  dorm::FitConfig config = load_config(config_path);
  if (seed_set) config.seed = seed;
  if (!smax.empty())
    config.s_max = parse_levels(smax);
  else if (sweep_grid && config.s_max.size() < 2)
    config.s_max = dorm::default_smax_grid();

  const fs::path csv_path = resolve_data_csv(data);
  dorm::CsvBundle bundle = dorm::read_csv_file(csv_path.string(), surrogate);

  const dorm::FitResult result =
      dorm::fit_pipeline(bundle.sources, bundle.target, config);

  OutputStage stage(out_dir);
  write_text(stage.stage("model.json"),
             dorm::fit_result_to_json(result, config).dump() + "\n");

  dorm::RunManifest manifest;
  manifest.command = sweep_grid ? "tune" : "fit";
  manifest.config = dorm::config_to_json(config);
  manifest.seed = config.seed;
  manifest.inputs.emplace_back(csv_path.string(),
                               dorm::file_digest(csv_path.string()));
  if (!config_path.empty())
    manifest.inputs.emplace_back(config_path, dorm::file_digest(config_path));
  manifest.wall_clock_sec = wall_seconds_since(t0);
  write_manifest(stage, manifest);
  stage.commit();
  return 0;
}

int run_evaluate(const std::string& model_path, const std::string& data,
                 const std::string& out_dir, int draws, std::uint64_t seed,
                 bool seed_set) {
  const auto t0 = std::chrono::steady_clock::now();
  std::ifstream min(model_path);
  if (!min) throw dorm::ValidationError("cannot open model: " + model_path);
  json model_doc;
  min >> model_doc;

  const fs::path csv_path = resolve_data_csv(data);
  const fs::path oracle_path = csv_path.parent_path() / "oracle.json";
  if (!fs::exists(oracle_path))
    throw dorm::ValidationError("oracle sidecar not found: " +
                                oracle_path.string());
  json oracle_doc;
  {
    std::ifstream oin(oracle_path);
    oin >> oracle_doc;
  }

  dorm::CsvBundle bundle = dorm::read_csv_file(csv_path.string());
  dorm::SimParams params;
  const dorm::TargetBundle target = dorm::oracle_sidecar_from_json(
      oracle_doc, std::move(bundle.target), &params);

  std::vector<std::string> names{"dorm"};
  std::vector<Eigen::VectorXd> coefs{
      dorm::detail::vec_from_json(model_doc.at("coef"))};
  if (model_doc.contains("baselines")) {
    for (const char* key : {"simple_ave", "rho_ave", "maximin"}) {
      names.emplace_back(key);
      coefs.push_back(
          dorm::detail::vec_from_json(model_doc["baselines"].at(key)));
    }
  }

  const std::uint64_t eval_seed = seed_set ? seed : params.seed;
  const std::vector<dorm::EvalReport> reports =
      dorm::evaluate(coefs, params, target, draws, eval_seed);

  OutputStage stage(out_dir);
  {
    std::ofstream out(stage.stage("metrics.csv"));
    out << "model,draw,std_mse\n";
    for (std::size_t m = 0; m < names.size(); ++m)
      for (Eigen::Index b = 0; b < reports[m].per_draw.size(); ++b)
        out << names[m] << ',' << b << ','
            << format_double(reports[m].per_draw[b]) << "\n";
  }

  dorm::RunManifest manifest;
  manifest.command = "evaluate";
  manifest.config = {{"draws", draws}};
  manifest.seed = eval_seed;
  manifest.inputs.emplace_back(model_path, dorm::file_digest(model_path));
  manifest.inputs.emplace_back(csv_path.string(),
                               dorm::file_digest(csv_path.string()));
  manifest.inputs.emplace_back(oracle_path.string(),
                               dorm::file_digest(oracle_path.string()));
  manifest.wall_clock_sec = wall_seconds_since(t0);
  write_manifest(stage, manifest);
  stage.commit();
  return 0;
}

int run_benchmark(const std::string& params_path,
                  const std::string& config_path, const std::string& out_dir,
                  int reps, const std::string& violations, std::uint64_t seed,
                  bool seed_set, int draws, int threads) {
  const auto t0 = std::chrono::steady_clock::now();
  const dorm::SimParams base_params = load_sim_params(params_path).resolved();
  dorm::FitConfig base_config = load_config(config_path);
  if (base_config.s_max.size() < 2)
    base_config.s_max = dorm::default_smax_grid();
  const std::uint64_t master_seed = seed_set ? seed : base_params.seed;

  std::vector<double> levels;
  if (violations.empty())
    for (int i = 0; i <= 10; ++i) levels.push_back(0.05 * i);
  else
    levels = parse_levels(violations);

  const std::vector<std::string> methods{"dorm", "simple_ave", "rho_ave",
                                         "maximin"};
  struct RepRecord {
    double mean[4], worst[4];
  };
  std::vector<RepRecord> records(levels.size() *
                                 static_cast<std::size_t>(reps));

  const auto run_one = [&](std::size_t vi, int rep) {
    dorm::SimParams params = base_params;
    params.s_star = levels[vi];
    params.seed = derive_seed(master_seed, vi, rep);
    dorm::FitConfig config = base_config;
    config.seed = params.seed + 1;

    const auto sources = dorm::generate_sources(params);
    const dorm::TargetBundle bundle = dorm::generate_target(params, sources);
    const dorm::FitResult fit =
        dorm::fit_pipeline(sources, bundle.data, config);

    const std::vector<Eigen::VectorXd> coefs{
        fit.model.coef, fit.bench.simple_ave, fit.bench.rho_ave,
        fit.bench.maximin};
    const auto reports =
        dorm::evaluate(coefs, params, bundle, draws, params.seed + 2);
    RepRecord rec;
    for (std::size_t m = 0; m < 4; ++m) {
      rec.mean[m] = reports[m].std_mse_mean;
      rec.worst[m] = reports[m].std_mse_worst;
    }
    records[vi * static_cast<std::size_t>(reps) +
            static_cast<std::size_t>(rep)] = rec;
  };

  // Independent work items write to preallocated slots, so the output is
  // identical for any thread count.
  std::vector<std::pair<std::size_t, int>> work;
  for (std::size_t vi = 0; vi < levels.size(); ++vi)
    for (int rep = 0; rep < reps; ++rep) work.emplace_back(vi, rep);

  if (threads <= 1) {
    for (const auto& [vi, rep] : work) run_one(vi, rep);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t)
      pool.emplace_back([&]() {
        for (;;) {
          const std::size_t i = next.fetch_add(1);
          if (i >= work.size()) return;
          run_one(work[i].first, work[i].second);
        }
      });
    for (auto& th : pool) th.join();
  }

  OutputStage stage(out_dir);
  {
    std::ofstream out(stage.stage("benchmark_metrics.csv"));
    out << "method,s_star,std_mse_mean,std_mse_worst\n";
    for (std::size_t m = 0; m < methods.size(); ++m)
      for (std::size_t vi = 0; vi < levels.size(); ++vi) {
        double mean_acc = 0.0, worst_acc = 0.0;
        for (int rep = 0; rep < reps; ++rep) {
          const RepRecord& rec = records[vi * static_cast<std::size_t>(reps) +
                                         static_cast<std::size_t>(rep)];
          mean_acc += rec.mean[m];
          worst_acc += rec.worst[m];
        }
        out << methods[m] << ',' << format_double(levels[vi]) << ','
            << format_double(mean_acc / reps) << ','
            << format_double(worst_acc / reps) << "\n";
      }
  }
  {
    std::ofstream out(stage.stage("benchmark_details.csv"));
    out << "method,s_star,rep,std_mse_mean,std_mse_worst\n";
    for (std::size_t m = 0; m < methods.size(); ++m)
      for (std::size_t vi = 0; vi < levels.size(); ++vi)
        for (int rep = 0; rep < reps; ++rep) {
          const RepRecord& rec = records[vi * static_cast<std::size_t>(reps) +
                                         static_cast<std::size_t>(rep)];
          out << methods[m] << ',' << format_double(levels[vi]) << ',' << rep
              << ',' << format_double(rec.mean[m]) << ','
              << format_double(rec.worst[m]) << "\n";
        }
  }

  dorm::RunManifest manifest;
  manifest.command = "benchmark";
  manifest.config = {{"params", dorm::sim_params_to_json(base_params)},
                     {"fit_config", dorm::config_to_json(base_config)},
                     {"reps", reps},
                     {"draws", draws},
                     {"violations", levels}};
  manifest.seed = master_seed;
  if (!params_path.empty())
    manifest.inputs.emplace_back(params_path, dorm::file_digest(params_path));
  if (!config_path.empty())
    manifest.inputs.emplace_back(config_path, dorm::file_digest(config_path));
  manifest.wall_clock_sec = wall_seconds_since(t0);
  write_manifest(stage, manifest);
  stage.commit();
  return 0;
}

void emit_error(const std::string& type, const std::string& message,
                const std::string& out_dir) {
  json doc;
  doc["error"] = {{"type", type}, {"message", message}};
  std::cerr << doc.dump() << std::endl;
  if (!out_dir.empty()) {
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (!ec) {
      std::ofstream out(fs::path(out_dir) / "error.json");
      out << doc.dump() << "\n";
    }
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"DORM: multi-source domain adaptation for mixture targets"};
  app.require_subcommand(1);

  std::string data, config_path, params_path, out_dir, model_path, smax_text,
      violations;
  std::uint64_t seed = 0;
  bool seed_set = false;
  int draws = 100, reps = 50, threads = 1;
  bool surrogate = false;

  const auto add_seed = [&](CLI::App* cmd) {
    cmd->add_option("--seed", seed, "master seed")
        ->each([&](const std::string&) { seed_set = true; });
  };

  CLI::App* sim = app.add_subcommand("simulate", "generate synthetic data");
  sim->add_option("--params", params_path, "simulation parameter JSON");
  sim->add_option("--out", out_dir, "output directory")->required();
  add_seed(sim);

  CLI::App* fit = app.add_subcommand("fit", "fit the model at one s_max");
  fit->add_option("--data", data, "data csv or directory")->required();
  fit->add_option("--config", config_path, "fit config JSON");
  fit->add_option("--out", out_dir, "output directory")->required();
  fit->add_option("--smax", smax_text, "s_max value, list, or 'grid'");
  fit->add_option("--threads", threads, "worker threads");
  add_seed(fit);

  CLI::App* tune = app.add_subcommand("tune", "sweep the s_max grid and tune");
  tune->add_option("--data", data, "data csv or directory")->required();
  tune->add_option("--config", config_path, "fit config JSON");
  tune->add_option("--out", out_dir, "output directory")->required();
  tune->add_option("--smax", smax_text, "candidate grid ('grid' or list)");
  tune->add_flag("--surrogate", surrogate,
                 "interpret tuning labels as surrogate outcomes");
  tune->add_option("--threads", threads, "worker threads");
  add_seed(tune);

  CLI::App* eval = app.add_subcommand("evaluate", "score a fitted model");
  eval->add_option("--model", model_path, "model JSON")->required();
  eval->add_option("--data", data, "data csv or directory with oracle.json")
      ->required();
  eval->add_option("--out", out_dir, "output directory")->required();
  eval->add_option("--draws", draws, "adversarial outcome draws");
  add_seed(eval);

  CLI::App* bench =
      app.add_subcommand("benchmark", "end-to-end simulation benchmark");
  bench->add_option("--params", params_path, "simulation parameter JSON");
  bench->add_option("--config", config_path, "fit config JSON");
  bench->add_option("--out", out_dir, "output directory")->required();
  bench->add_option("--reps", reps, "replications per violation level");
  bench->add_option("--violations", violations, "comma list of s* levels");
  bench->add_option("--draws", draws, "adversarial outcome draws");
  bench->add_option("--threads", threads, "worker threads");
  add_seed(bench);

  CLI11_PARSE(app, argc, argv);

  try {
    if (sim->parsed())
      return run_simulate(params_path, out_dir, seed, seed_set);
    if (fit->parsed())
      return run_fit(data, config_path, out_dir, seed, seed_set, smax_text,
                     false, false);
    if (tune->parsed())
      return run_fit(data, config_path, out_dir, seed, seed_set, smax_text,
                     true, surrogate);
    if (eval->parsed())
      return run_evaluate(model_path, data, out_dir, draws, seed, seed_set);
    if (bench->parsed())
      return run_benchmark(params_path, config_path, out_dir, reps, violations,
                           seed, seed_set, draws, threads);
  } catch (const dorm::ValidationError& e) {
    emit_error("validation", e.what(), out_dir);
    return 2;
  } catch (const dorm::NumericalError& e) {
    emit_error("numerical", e.what(), out_dir);
    return 3;
  } catch (const std::invalid_argument& e) {
    emit_error("validation", e.what(), out_dir);
    return 2;
  } catch (const std::exception& e) {
    emit_error("numerical", e.what(), out_dir);
    return 3;
  }
  return 1;
}

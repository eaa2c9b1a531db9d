#include "udig/harness.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <map>
#include <thread>

#include "udig/errors.hpp"
#include "udig/figures.hpp"
#include "udig/metrics.hpp"
#include "udig/rng.hpp"

namespace udig {

namespace {

constexpr const char* kResultsName = "results.csv";

const nlohmann::json& require_key(const nlohmann::json& j, const char* key,
                                  const std::string& where) {
  if (!j.is_object() || !j.contains(key))
    throw Error(ErrorCode::config_error,
                where + ": missing required key \"" + key + "\"");
  return j.at(key);
}

std::string sanitize(const std::string& name) {
  std::string out;
  for (char c : name) {
    if (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' ||
        c == '.')
      out += c;
    else
      out += '_';
  }
  return out;
}

PhantomSpec phantom_from_json(const nlohmann::json& j) {
  PhantomSpec spec;
  spec.kind = phantom_kind_from_name(j.value("kind", "random_ellipses"));
  spec.size = j.value("size", std::size_t{64});
  spec.n_ellipses = j.value("n_ellipses", 6);
  return spec;
}

NoiseSchedule schedule_from_config(const nlohmann::json& j,
                                   const std::string& where) {
  const nlohmann::json& s = require_key(j, "schedule", where);
  return make_schedule(s.value("T", 300), s.value("beta_min", 1e-4),
                       s.value("beta_max", 0.02), s.value("kind", "linear"));
}

struct JobResult {
  bool ok = false;
  double best_psnr_db = 0.0;
  double ssim_at_best = 0.0;
  double runtime_minutes = 0.0;
  std::string error;
};

// ssim recorded at the iteration where psnr peaked
double ssim_at_peak(const ReconTrace& t) {
  for (std::size_t i = 0; i < t.iterations.size(); ++i)
    if (t.iterations[i] == t.best_iter) return t.ssim[i];
  return 0.0;
}

struct LoadedScore {
  UNet net;
  NoiseSchedule schedule;
};

LoadedScore load_score_checkpoint(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path))
    throw Error(ErrorCode::config_error,
                "score model checkpoint not found: " + path.string());
  const nlohmann::json sidecar = load_network_sidecar(path);
  if (!sidecar.contains("schedule"))
    throw Error(ErrorCode::config_error,
                "checkpoint sidecar lacks the noise schedule: " + path.string());
  return {load_network(path), schedule_from_json(sidecar.at("schedule"))};
}

void write_json_file(const std::filesystem::path& path,
                     const nlohmann::json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out)
    throw Error(ErrorCode::io_unwritable, "cannot open " + path.string());
  out << j.dump(2) << "\n";
}

} // namespace

std::string ExperimentConfig::setting() const {
  if (task == Task::MRI) return std::to_string(acceleration) + "x";
  return std::to_string(ct_n_views) + "views";
}

nlohmann::json load_config_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw Error(ErrorCode::config_error,
                "cannot read config file " + path.string());
  const std::string text{std::istreambuf_iterator<char>(in),
                         std::istreambuf_iterator<char>()};
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    std::size_t line = 1, col = 1;
    const std::size_t stop =
        e.byte > 0 ? std::min<std::size_t>(e.byte - 1, text.size()) : 0;
    for (std::size_t i = 0; i < stop; ++i) {
      if (text[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    throw Error(ErrorCode::config_error,
                path.string() + ":" + std::to_string(line) + ":" +
                    std::to_string(col) + ": " + e.what());
  }
}

std::filesystem::path resolve_under_root(const std::filesystem::path& p) {
  if (p.is_absolute()) return p;
  if (const char* root = std::getenv("UDIG_OUTPUT_ROOT"))
    return std::filesystem::path(root) / p;
  return p;
}

ExperimentConfig experiment_config_from_json(const nlohmann::json& j) {
  ExperimentConfig cfg;
  cfg.task = task_from_name(require_key(j, "task", "config").get<std::string>());
  cfg.output_dir = resolve_under_root(
      require_key(j, "output_dir", "config").get<std::string>());
  cfg.seed = j.value("seed", std::uint64_t{0});
  cfg.workers = j.value("workers", 0);
  cfg.runtime_reporting = j.value("runtime_reporting", "wall");
  if (cfg.runtime_reporting != "wall" && cfg.runtime_reporting != "none")
    throw Error(ErrorCode::config_error,
                "config: runtime_reporting must be \"wall\" or \"none\"");
  cfg.n_scans = j.value("n_scans", 1);
  if (cfg.n_scans < 1)
    throw Error(ErrorCode::config_error, "config: n_scans must be >= 1");
  if (j.contains("phantoms")) cfg.phantom = phantom_from_json(j.at("phantoms"));

  if (j.contains("mri")) {
    const auto& m = j.at("mri");
    cfg.acceleration = m.value("acceleration", cfg.acceleration);
    cfg.acs_fraction = m.value("acs_fraction", cfg.acs_fraction);
    cfg.n_coils = m.value("n_coils", cfg.n_coils);
    cfg.mri_noise_sigma = m.value("noise_sigma", cfg.mri_noise_sigma);
    cfg.phase_strength = m.value("phase_strength", cfg.phase_strength);
  }
  if (j.contains("ct")) {
    const auto& c = j.at("ct");
    cfg.ct_n_full = c.value("n_full", cfg.ct_n_full);
    cfg.ct_n_views = c.value("n_views", cfg.ct_n_views);
    cfg.ct_I0 = c.value("I0", cfg.ct_I0);
  }
  if (j.contains("score_model"))
    cfg.score_model =
        resolve_under_root(j.at("score_model").get<std::string>());

  const nlohmann::json& methods = require_key(j, "methods", "config");
  if (!methods.is_array() || methods.empty())
    throw Error(ErrorCode::config_error,
                "config: \"methods\" must be a non-empty array");
  for (const auto& m : methods) {
    MethodSpec spec;
    spec.name = require_key(m, "name", "method").get<std::string>();
    spec.type = require_key(m, "type", "method \"" + spec.name + "\"")
                    .get<std::string>();
    if (spec.type != "dip" && spec.type != "refg" && spec.type != "udig")
      throw Error(ErrorCode::config_error,
                  "method \"" + spec.name + "\": unknown type \"" + spec.type +
                      "\" (expected dip, refg or udig)");
    spec.config = m.value("config", nlohmann::json::object());
    cfg.methods.push_back(std::move(spec));
  }
  for (std::size_t a = 0; a < cfg.methods.size(); ++a)
    for (std::size_t b = a + 1; b < cfg.methods.size(); ++b)
      if (cfg.methods[a].name == cfg.methods[b].name)
        throw Error(ErrorCode::config_error,
                    "config: duplicate method name \"" + cfg.methods[a].name +
                        "\"");
  return cfg;
}

ScanCase make_scan(const ExperimentConfig& cfg, int scan_index) {
  PhantomSpec ps = cfg.phantom;
  ps.seed = mix_seed(cfg.seed, 0x7A00 + static_cast<std::uint64_t>(scan_index));
  const Tensor phantom = generate_phantom(ps);
  const std::size_t size = phantom.dim(0);

  ScanCase scan;
  if (cfg.task == Task::MRI) {
    const MriOperator op = make_mri_operator(
        size, size, cfg.n_coils, cfg.acceleration, cfg.acs_fraction,
        mix_seed(cfg.seed, 0x3B00 + static_cast<std::uint64_t>(scan_index)));
    scan.x_true = make_mri_ground_truth(
        phantom, cfg.phase_strength,
        mix_seed(cfg.seed, 0x7B00 + static_cast<std::uint64_t>(scan_index)));
    scan.y = simulate_mri_measurements(
        op, scan.x_true, cfg.mri_noise_sigma,
        mix_seed(cfg.seed, 0x9100 + static_cast<std::uint64_t>(scan_index)));
    scan.A = wrap_mri(op);
  } else {
    const CtOperator op =
        make_ct_operator(size, size, cfg.ct_n_full, cfg.ct_n_views);
    const double I0 = cfg.ct_I0 > 0.0
                          ? cfg.ct_I0
                          : std::numeric_limits<double>::infinity();
    scan.y = simulate_ct_measurements(
        op, phantom, I0,
        mix_seed(cfg.seed, 0x9200 + static_cast<std::uint64_t>(scan_index)));
    scan.x_true = Tensor({1, size, size}, phantom.values());
    scan.A = wrap_ct(op);
  }
  return scan;
}

Tensor reference_image(const ExperimentConfig& cfg, int scan_index) {
  PhantomSpec ps = cfg.phantom;
  ps.seed = mix_seed(cfg.seed, 0x5EF0 + static_cast<std::uint64_t>(scan_index));
  const Tensor phantom = generate_phantom(ps);
  if (cfg.task == Task::MRI)
    return make_mri_ground_truth(
        phantom, cfg.phase_strength,
        mix_seed(cfg.seed, 0x5FF0 + static_cast<std::uint64_t>(scan_index)));
  return Tensor({1, phantom.dim(0), phantom.dim(1)}, phantom.values());
}

void parallel_for(std::size_t n, int workers,
                  const std::function<void(std::size_t)>& fn) {
  if (workers <= 0)
    workers = static_cast<int>(std::thread::hardware_concurrency());
  if (workers <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  const std::size_t pool_size = std::min<std::size_t>(workers, n);
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> panics(pool_size);
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < pool_size; ++t)
    pool.emplace_back([&, t] {
      try {
        for (std::size_t i = next++; i < n; i = next++) fn(i);
      } catch (...) {
        panics[t] = std::current_exception();
      }
    });
  for (auto& th : pool) th.join();
  for (auto& p : panics)
    if (p) std::rethrow_exception(p);
}

std::vector<TrainOutcome> run_train_dm(const nlohmann::json& config) {
  const std::string task_field =
      require_key(config, "task", "config").get<std::string>();
  std::vector<Task> tasks;
  if (task_field == "both")
    tasks = {Task::MRI, Task::CT};
  else
    tasks = {task_from_name(task_field)};

  const std::filesystem::path out_dir = resolve_under_root(
      require_key(config, "output_dir", "config").get<std::string>());
  const std::uint64_t seed = config.value("seed", std::uint64_t{0});
  const NoiseSchedule sched = schedule_from_config(config, "config");

  const nlohmann::json& train = require_key(config, "train", "config");
  const int n_phantoms = train.value("n_phantoms", 64);
  if (n_phantoms < 1)
    throw Error(ErrorCode::config_error, "config: n_phantoms must be >= 1");
  PhantomSpec ps;
  ps.kind = phantom_kind_from_name(train.value("kind", "random_ellipses"));
  ps.size = train.value("size", std::size_t{64});
  ps.n_ellipses = train.value("n_ellipses", 6);

  ScoreTrainConfig tcfg;
  tcfg.epochs = train.value("epochs", 1);
  tcfg.batch = train.value("batch", 4);
  tcfg.lr = train.value("lr", 1e-3);
  const double phase_strength = train.value("phase_strength", 0.3);

  const nlohmann::json arch_j = train.value("arch", nlohmann::json::object());
  const int base_width = arch_j.value("base_width", 16);
  const int depth = arch_j.value("depth", 2);

  std::filesystem::create_directories(out_dir / "models");

  std::vector<TrainOutcome> outcomes;
  for (Task task : tasks) {
    const int channels = task == Task::MRI ? 2 : 1;
    const std::uint64_t task_seed =
        mix_seed(seed, task == Task::MRI ? 0xA11 : 0xA22);

    std::vector<Tensor> dataset;
    dataset.reserve(static_cast<std::size_t>(n_phantoms));
    for (int i = 0; i < n_phantoms; ++i) {
      PhantomSpec spec = ps;
      spec.seed = mix_seed(task_seed, 0xC70 + static_cast<std::uint64_t>(i));
      const Tensor phantom = generate_phantom(spec);
      if (task == Task::MRI) {
        const Tensor gt = make_mri_ground_truth(
            phantom, phase_strength,
            mix_seed(task_seed, 0xC90 + static_cast<std::uint64_t>(i)));
        dataset.push_back(to_score_training_range(gt));
      } else {
        dataset.push_back(to_score_training_range(
            Tensor({1, spec.size, spec.size}, phantom.values())));
      }
    }

    ScoreTrainConfig cfg = tcfg;
    cfg.seed = task_seed;
    ScoreTrainResult result = train_score_model(
        dataset, sched, {channels, channels, base_width, depth, true}, cfg);

    const std::string task_tag = task == Task::MRI ? "mri" : "ct";
    const std::filesystem::path ckpt =
        out_dir / "models" / ("score_" + task_tag + ".udig-array");
    save_network(ckpt, result.net,
                 {{"schedule", sched.to_json()}, {"task", task_tag}});

    std::ofstream loss_csv(out_dir / "models" /
                           ("score_" + task_tag + "_loss.csv"));
    loss_csv << "step,loss\n";
    std::vector<double> xs;
    for (std::size_t i = 0; i < result.loss_trace.size(); ++i) {
      char buf[32];
      std::snprintf(buf, sizeof(buf), "%.8e", result.loss_trace[i]);
      loss_csv << (i + 1) << "," << buf << "\n";
      xs.push_back(static_cast<double>(i + 1));
    }
    save_curve_svg(out_dir / "models" / ("score_" + task_tag + "_loss.svg"),
                   {{"training loss", xs, result.loss_trace}}, "step",
                   "batch loss", "score model training");

    outcomes.push_back({task_tag, ckpt, std::move(result.loss_trace)});
  }
  return outcomes;
}

ReconReport run_reconstruct(const nlohmann::json& config) {
  const ExperimentConfig cfg = experiment_config_from_json(config);

  // load the score model up front when any method purifies
  bool needs_score = false;
  for (const auto& m : cfg.methods)
    if (m.type == "udig" && m.config.value("M", UdigConfig{}.M) > 0)
      needs_score = true;
  LoadedScore score{UNet({1, 1, 1, 1, false}, 0), {}};
  if (needs_score) {
    if (cfg.score_model.empty())
      throw Error(ErrorCode::config_error,
                  "config: purifying methods need \"score_model\"");
    score = load_score_checkpoint(cfg.score_model);
    for (const auto& m : cfg.methods)
      if (m.type == "udig" &&
          m.config.value("M", UdigConfig{}.M) > score.schedule.T)
        throw Error(ErrorCode::config_error,
                    "method \"" + m.name +
                        "\": M exceeds the trained schedule length");
  }

  std::filesystem::create_directories(cfg.output_dir / "runs");
  std::filesystem::create_directories(cfg.output_dir / "scans");

  const std::size_t n_methods = cfg.methods.size();
  const std::size_t n_jobs = n_methods * static_cast<std::size_t>(cfg.n_scans);
  std::vector<JobResult> results(n_jobs);

  // scans are cheap to rebuild; jobs own their copies to stay independent
  parallel_for(n_jobs, cfg.workers, [&](std::size_t job) {
    const int scan_index = static_cast<int>(job / n_methods);
    const std::size_t method_index = job % n_methods;
    const MethodSpec& method = cfg.methods[method_index];
    JobResult& slot = results[job];
    try {
      const ScanCase scan = make_scan(cfg, scan_index);
      if (method_index == 0) {
        const std::filesystem::path scan_dir =
            cfg.output_dir / "scans" /
            ("scan_" + std::to_string(scan_index));
        std::filesystem::create_directories(scan_dir);
        save_array(scan_dir / "ground_truth.udig-array", scan.x_true,
                   Dtype::f32, "ground truth image");
      }
      const std::uint64_t run_seed =
          mix_seed(cfg.seed, 0xA000 + static_cast<std::uint64_t>(scan_index));

      const auto t0 = std::chrono::steady_clock::now();
      ReconTrace trace;
      nlohmann::json resolved;
      if (method.type == "dip") {
        DipConfig d = dip_config_from_json(method.config);
        d.seed = run_seed;
        trace = dip_reconstruct(scan.y, scan.A, d, &scan.x_true);
        resolved = dip_config_to_json(d);
      } else if (method.type == "refg") {
        DipConfig d = dip_config_from_json(method.config);
        d.seed = run_seed;
        const Tensor ref = reference_image(cfg, scan_index);
        trace = refg_dip_reconstruct(scan.y, scan.A, ref, d, &scan.x_true);
        resolved = dip_config_to_json(d);
      } else {
        UdigConfig u = udig_config_from_json(method.config);
        u.seed = run_seed;
        trace = udig_reconstruct(scan.y, scan.A, score.net, score.schedule, u,
                                 &scan.x_true);
        resolved = udig_config_to_json(u);
        resolved["schedule"] = score.schedule.to_json();
      }
      const auto t1 = std::chrono::steady_clock::now();

      if (trace.aborted || !std::isfinite(trace.best_psnr_db))
        throw Error(ErrorCode::non_finite_loss,
                    "optimization diverged before completing");

      const std::filesystem::path run_dir =
          cfg.output_dir / "runs" / sanitize(method.name) /
          ("scan_" + std::to_string(scan_index));
      std::filesystem::create_directories(run_dir);
      resolved["method"] = method.name;
      resolved["type"] = method.type;
      resolved["scan"] = scan_index;
      resolved["task"] = task_name(cfg.task);
      resolved["setting"] = cfg.setting();
      write_json_file(run_dir / "config.json", resolved);
      write_trace_csv(trace, run_dir / "trace.csv");
      save_array(run_dir / "recon.udig-array", trace.final_image, Dtype::f32,
                 "reconstructed image");

      slot.ok = true;
      slot.best_psnr_db = trace.best_psnr_db;
      slot.ssim_at_best = ssim_at_peak(trace);
      slot.runtime_minutes =
          std::chrono::duration<double>(t1 - t0).count() / 60.0;
    } catch (const std::exception& e) {
      slot.ok = false;
      slot.error = method.name + "/scan_" + std::to_string(scan_index) + ": " +
                   e.what();
    }
  });

  ReconReport report;
  for (std::size_t m = 0; m < n_methods; ++m) {
    double psum = 0, psq = 0, ssum = 0, ssq = 0, rt = 0;
    int n_ok = 0;
    for (int s = 0; s < cfg.n_scans; ++s) {
      const JobResult& r = results[static_cast<std::size_t>(s) * n_methods + m];
      if (!r.ok) {
        ++report.failed_jobs;
        report.failures.push_back(r.error);
        continue;
      }
      psum += r.best_psnr_db;
      psq += r.best_psnr_db * r.best_psnr_db;
      ssum += r.ssim_at_best;
      ssq += r.ssim_at_best * r.ssim_at_best;
      rt += r.runtime_minutes;
      ++n_ok;
    }
    if (n_ok == 0) continue;
    ResultRow row;
    row.task = cfg.task;
    row.setting = cfg.setting();
    row.method = cfg.methods[m].name;
    row.psnr_mean_db = psum / n_ok;
    row.psnr_std_db =
        std::sqrt(std::max(0.0, psq / n_ok - row.psnr_mean_db * row.psnr_mean_db));
    row.ssim_mean = ssum / n_ok;
    row.ssim_std =
        std::sqrt(std::max(0.0, ssq / n_ok - row.ssim_mean * row.ssim_mean));
    row.runtime_minutes =
        cfg.runtime_reporting == "wall" ? rt / n_ok : 0.0;
    report.rows.push_back(std::move(row));
  }

  write_results_csv(report.rows, cfg.output_dir / kResultsName);
  if (!report.failures.empty()) {
    std::ofstream log(cfg.output_dir / "failures.log");
    for (const auto& f : report.failures) log << f << "\n";
  }
  return report;
}

SensitivityReport run_sensitivity(const nlohmann::json& config) {
  ExperimentConfig cfg;
  cfg.task = task_from_name(
      require_key(config, "task", "config").get<std::string>());
  cfg.output_dir = resolve_under_root(
      require_key(config, "output_dir", "config").get<std::string>());
  cfg.seed = config.value("seed", std::uint64_t{0});
  cfg.n_scans = config.value("n_scans", 1);
  if (cfg.n_scans < 1)
    throw Error(ErrorCode::config_error, "config: n_scans must be >= 1");
  if (config.contains("phantoms"))
    cfg.phantom = phantom_from_json(config.at("phantoms"));
  if (config.contains("mri")) {
    const auto& m = config.at("mri");
    cfg.acceleration = m.value("acceleration", cfg.acceleration);
    cfg.acs_fraction = m.value("acs_fraction", cfg.acs_fraction);
    cfg.n_coils = m.value("n_coils", cfg.n_coils);
    cfg.phase_strength = m.value("phase_strength", cfg.phase_strength);
  }
  if (config.contains("ct")) {
    const auto& c = config.at("ct");
    cfg.ct_n_full = c.value("n_full", cfg.ct_n_full);
    cfg.ct_n_views = c.value("n_views", cfg.ct_n_views);
  }

  const std::vector<double> sigmas =
      require_key(config, "sigmas", "config").get<std::vector<double>>();
  const int n_seeds = config.value("n_seeds", 1);
  DipConfig dip_cfg =
      dip_config_from_json(config.value("dip", nlohmann::json::object()));

  std::vector<std::vector<double>> per_phantom(
      static_cast<std::size_t>(cfg.n_scans));
  const int workers = config.value("workers", 0);
  parallel_for(static_cast<std::size_t>(cfg.n_scans), workers,
               [&](std::size_t i) {
                 const ScanCase scan = make_scan(cfg, static_cast<int>(i));
                 DipConfig run_cfg = dip_cfg;
                 run_cfg.seed =
                     mix_seed(cfg.seed, 0xA000 + static_cast<std::uint64_t>(i));
                 const SensitivityTable t = input_sensitivity_experiment(
                     scan.x_true, scan.A, sigmas, run_cfg, n_seeds);
                 per_phantom[i] = t.mean_best_psnr_db;
               });

  SensitivityReport report;
  report.table.sigmas = sigmas;
  for (std::size_t k = 0; k < sigmas.size(); ++k) {
    double sum = 0, sq = 0;
    for (int i = 0; i < cfg.n_scans; ++i) {
      const double v = per_phantom[static_cast<std::size_t>(i)][k];
      sum += v;
      sq += v * v;
    }
    const double mean = sum / cfg.n_scans;
    report.table.mean_best_psnr_db.push_back(mean);
    report.table.std_best_psnr_db.push_back(
        std::sqrt(std::max(0.0, sq / cfg.n_scans - mean * mean)));
  }

  const std::filesystem::path dir = cfg.output_dir / "sensitivity";
  std::filesystem::create_directories(dir);
  write_sensitivity_csv(report.table, dir / "sigma_sweep.csv");
  save_curve_svg(dir / "sigma_sweep.svg",
                 {{"mean best PSNR", report.table.sigmas,
                   report.table.mean_best_psnr_db}},
                 "input perturbation sigma", "best PSNR (dB)",
                 "Input sensitivity");
  return report;
}

void run_figures(const std::filesystem::path& results_dir) {
  const std::filesystem::path results_csv = results_dir / kResultsName;
  const std::filesystem::path runs_dir = results_dir / "runs";
  if (!std::filesystem::exists(results_csv) ||
      !std::filesystem::exists(runs_dir))
    throw Error(ErrorCode::config_error,
                "no results found under " + results_dir.string());

  const std::vector<ResultRow> rows = read_results_csv(results_csv);
  if (rows.empty())
    throw Error(ErrorCode::config_error,
                "results file has no rows: " + results_csv.string());

  // collect per-method traces, averaged over scans
  std::vector<CurveSeries> series;
  for (const ResultRow& row : rows) {
    const std::filesystem::path method_dir = runs_dir / sanitize(row.method);
    std::vector<int> grid;
    std::vector<double> mean;
    int n = 0;
    for (int scan = 0;; ++scan) {
      const std::filesystem::path trace_path =
          method_dir / ("scan_" + std::to_string(scan)) / "trace.csv";
      if (!std::filesystem::exists(trace_path)) break;
      const ReconTrace t = read_trace_csv(trace_path);
      if (grid.empty()) {
        grid = t.iterations;
        mean.assign(grid.size(), 0.0);
      }
      if (t.iterations != grid)
        throw Error(ErrorCode::invalid_argument,
                    "trace grids differ under " + method_dir.string());
      for (std::size_t i = 0; i < mean.size(); ++i) mean[i] += t.psnr_db[i];
      ++n;
    }
    if (n == 0) continue;
    for (double& v : mean) v /= n;
    series.push_back(
        {row.method, std::vector<double>(grid.begin(), grid.end()), mean});
  }
  if (series.empty())
    throw Error(ErrorCode::config_error,
                "no traces found under " + runs_dir.string());

  const std::filesystem::path fig_dir = results_dir / "figures";
  std::filesystem::create_directories(fig_dir);
  save_curve_svg(fig_dir / "psnr_vs_iteration.svg", series,
                 "overall iteration", "mean PSNR (dB)", "PSNR vs iteration");

  // reconstruction panels for the first scan
  const std::filesystem::path gt_path =
      results_dir / "scans" / "scan_0" / "ground_truth.udig-array";
  if (std::filesystem::exists(gt_path)) {
    const Tensor gt = load_array(gt_path).tensor;
    std::vector<PanelSpec> panels;
    for (const ResultRow& row : rows) {
      const std::filesystem::path recon_path =
          runs_dir / sanitize(row.method) / "scan_0" / "recon.udig-array";
      if (!std::filesystem::exists(recon_path)) continue;
      const Tensor recon = load_array(recon_path).tensor;
      const ImagePairMetrics m = evaluate_reconstruction(recon, gt);
      panels.push_back({row.method, recon, m.psnr_db});
      save_image_png(fig_dir / ("recon_" + sanitize(row.method) + ".png"),
                     recon);
    }
    if (!panels.empty())
      save_recon_panels(fig_dir / "panels_scan_0.svg", gt, panels);
  }

  // re-plot the sigma sweep when the sweep data is present
  const std::filesystem::path sweep_csv =
      results_dir / "sensitivity" / "sigma_sweep.csv";
  if (std::filesystem::exists(sweep_csv)) {
    std::ifstream in(sweep_csv);
    std::string line;
    std::getline(in, line);  // header
    std::vector<double> xs, ys;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const auto c1 = line.find(',');
      const auto c2 = line.find(',', c1 + 1);
      xs.push_back(std::stod(line.substr(0, c1)));
      ys.push_back(std::stod(line.substr(c1 + 1, c2 - c1 - 1)));
    }
    if (!xs.empty())
      save_curve_svg(fig_dir / "sigma_sweep.svg",
                     {{"mean best PSNR", xs, ys}}, "input perturbation sigma",
                     "best PSNR (dB)", "Input sensitivity");
  }
}

namespace {

template <class Fn>
int run_command(Fn&& fn) {
  try {
    return fn();
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}

} // namespace

int cmd_train_dm(const std::filesystem::path& config_path) {
  return run_command([&] {
    const auto outcomes = run_train_dm(load_config_file(config_path));
    for (const auto& o : outcomes)
      std::printf("trained %s score model -> %s (%zu steps)\n", o.task.c_str(),
                  o.checkpoint.string().c_str(), o.loss_trace.size());
    return 0;
  });
}

int cmd_reconstruct(const std::filesystem::path& config_path) {
  return run_command([&] {
    const ReconReport report = run_reconstruct(load_config_file(config_path));
    for (const auto& row : report.rows)
      std::printf("%-24s psnr %.2f +/- %.2f dB  ssim %.4f\n",
                  row.method.c_str(), row.psnr_mean_db, row.psnr_std_db,
                  row.ssim_mean);
    if (report.failed_jobs > 0) {
      std::fprintf(stderr, "%d job(s) failed; see failures.log\n",
                   report.failed_jobs);
      return 2;
    }
    return 0;
  });
}

int cmd_figures(const std::filesystem::path& results_dir) {
  return run_command([&] {
    run_figures(resolve_under_root(results_dir));
    return 0;
  });
}

int cmd_sensitivity(const std::filesystem::path& config_path) {
  return run_command([&] {
    const SensitivityReport report =
        run_sensitivity(load_config_file(config_path));
    for (std::size_t i = 0; i < report.table.sigmas.size(); ++i)
      std::printf("sigma %.3f  best psnr %.2f +/- %.2f dB\n",
                  report.table.sigmas[i], report.table.mean_best_psnr_db[i],
                  report.table.std_best_psnr_db[i]);
    return 0;
  });
}

} // namespace udig

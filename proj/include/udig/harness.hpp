#ifndef UDIG_HARNESS_HPP
#define UDIG_HARNESS_HPP

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "udig/diffusion.hpp"
#include "udig/dip.hpp"
#include "udig/persistence.hpp"
#include "udig/simdata.hpp"
#include "udig/udig.hpp"

namespace udig {

struct MethodSpec {
  std::string name;
  std::string type;       // "dip", "refg" or "udig"
  nlohmann::json config;  // forwarded to the method's config parser
};

struct ExperimentConfig {
  Task task = Task::MRI;
  std::filesystem::path output_dir;
  std::uint64_t seed = 0;
  int workers = 0;  // <= 0 picks the hardware concurrency
  std::string runtime_reporting = "wall";  // "wall" or "none"
  int n_scans = 1;
  PhantomSpec phantom;  // per-scan seeds are derived from the global seed

  // MRI setting
  int acceleration = 4;
  double acs_fraction = 0.08;
  std::size_t n_coils = 4;
  double mri_noise_sigma = 0.0;
  double phase_strength = 0.3;

  // CT setting
  std::size_t ct_n_full = 180;
  std::size_t ct_n_views = 18;
  double ct_I0 = 0.0;  // <= 0 means noiseless

  std::filesystem::path score_model;  // required by purifying methods
  std::vector<MethodSpec> methods;

  std::string setting() const;
};

// Parses a JSON config file; parse and schema errors carry file:line:column
// or the offending key.
nlohmann::json load_config_file(const std::filesystem::path& path);

ExperimentConfig experiment_config_from_json(const nlohmann::json& j);

// Relative paths resolve under $UDIG_OUTPUT_ROOT when set, else the cwd.
std::filesystem::path resolve_under_root(const std::filesystem::path& p);

// Deterministic scan construction shared by the commands and the checks.
ScanCase make_scan(const ExperimentConfig& cfg, int scan_index);
Tensor reference_image(const ExperimentConfig& cfg, int scan_index);

struct TrainOutcome {
  std::string task;
  std::filesystem::path checkpoint;
  std::vector<double> loss_trace;
};

std::vector<TrainOutcome> run_train_dm(const nlohmann::json& config);

struct ReconReport {
  std::vector<ResultRow> rows;
  int failed_jobs = 0;
  std::vector<std::string> failures;  // "method/scan: message"
};

ReconReport run_reconstruct(const nlohmann::json& config);

struct SensitivityReport {
  SensitivityTable table;  // aggregated over phantoms
};

SensitivityReport run_sensitivity(const nlohmann::json& config);

void run_figures(const std::filesystem::path& results_dir);

// CLI entry points; exit codes: 0 success, 1 config error, 2 partial failure.
int cmd_train_dm(const std::filesystem::path& config_path);
int cmd_reconstruct(const std::filesystem::path& config_path);
int cmd_figures(const std::filesystem::path& results_dir);
int cmd_sensitivity(const std::filesystem::path& config_path);

// Bounded worker pool; jobs must handle their own failures.
void parallel_for(std::size_t n, int workers,
                  const std::function<void(std::size_t)>& fn);

} // namespace udig

#endif // UDIG_HARNESS_HPP

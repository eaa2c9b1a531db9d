#ifndef UDIG_PERSISTENCE_HPP
#define UDIG_PERSISTENCE_HPP

#include <filesystem>
#include <string>
#include <vector>

#include "udig/tensor.hpp"

namespace udig {

// On-disk array container, fixed little-endian layout:
//   magic "UDIG" | version u8 (=1) | dtype u8 | ndim u8 | shape ndim x u32 | payload
// A JSON sidecar "<path>.json" records {"dtype","shape","description"}.
enum class Dtype : std::uint8_t { f32 = 0, f64 = 1, u8 = 2 };

constexpr std::uint8_t kArrayFormatVersion = 1;

std::size_t dtype_size(Dtype d);
std::string dtype_name(Dtype d);

struct LoadedArray {
  Tensor tensor;
  Dtype dtype;
};

void save_array(const std::filesystem::path& path, const Tensor& data,
                Dtype dtype = Dtype::f32, const std::string& description = "");
LoadedArray load_array(const std::filesystem::path& path);

enum class Task { MRI, CT };

std::string task_name(Task t);
Task task_from_name(const std::string& name);

struct ResultRow {
  Task task = Task::MRI;
  std::string setting;   // e.g. "4x" or "18views"
  std::string method;
  double psnr_mean_db = 0.0;
  double psnr_std_db = 0.0;
  double ssim_mean = 0.0;
  double ssim_std = 0.0;
  double runtime_minutes = 0.0;
};

// Header "task,setting,method,psnr_mean_db,psnr_std_db,ssim_mean,ssim_std,runtime_minutes",
// floats rendered with 4 decimal places.
void write_results_csv(const std::vector<ResultRow>& rows,
                       const std::filesystem::path& path);
std::vector<ResultRow> read_results_csv(const std::filesystem::path& path);

} // namespace udig

#endif // UDIG_PERSISTENCE_HPP

#include "udig/persistence.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace udig {

namespace {

constexpr char kMagic[4] = {'U', 'D', 'I', 'G'};

void put_u32_le(std::string& out, std::uint32_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
  out.push_back(static_cast<char>((v >> 16) & 0xff));
  out.push_back(static_cast<char>((v >> 24) & 0xff));
}

std::uint32_t get_u32_le(const unsigned char* p) {
  return std::uint32_t(p[0]) | (std::uint32_t(p[1]) << 8) |
         (std::uint32_t(p[2]) << 16) | (std::uint32_t(p[3]) << 24);
}

void put_f32_le(std::string& out, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32_le(out, bits);
}

void put_f64_le(std::string& out, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  put_u32_le(out, static_cast<std::uint32_t>(bits & 0xffffffffULL));
  put_u32_le(out, static_cast<std::uint32_t>(bits >> 32));
}

} // namespace

std::size_t dtype_size(Dtype d) {
  switch (d) {
    case Dtype::f32: return 4;
    case Dtype::f64: return 8;
    case Dtype::u8: return 1;
  }
  throw Error(ErrorCode::io_unsupported_dtype, "unsupported dtype");
}

std::string dtype_name(Dtype d) {
  switch (d) {
    case Dtype::f32: return "float32";
    case Dtype::f64: return "float64";
    case Dtype::u8: return "uint8";
  }
  throw Error(ErrorCode::io_unsupported_dtype, "unsupported dtype");
}

void save_array(const std::filesystem::path& path, const Tensor& data,
                Dtype dtype, const std::string& description) {
  if (dtype != Dtype::f32 && dtype != Dtype::f64 && dtype != Dtype::u8)
    throw Error(ErrorCode::io_unsupported_dtype, "unsupported dtype code");
  for (std::size_t i = 0; i < data.numel(); ++i)
    if (!std::isfinite(data[i]))
      throw Error(ErrorCode::invalid_argument,
                  "save_array: data contains non-finite values");
  if (data.ndim() == 0 || data.ndim() > 255)
    throw Error(ErrorCode::invalid_argument, "save_array: bad rank");

  std::string buf;
  buf.reserve(16 + data.numel() * dtype_size(dtype));
  buf.append(kMagic, 4);
  buf.push_back(static_cast<char>(kArrayFormatVersion));
  buf.push_back(static_cast<char>(dtype));
  buf.push_back(static_cast<char>(data.ndim()));
  for (std::size_t d : data.shape()) {
    if (d > 0xffffffffULL)
      throw Error(ErrorCode::invalid_argument, "save_array: dimension overflows u32");
    put_u32_le(buf, static_cast<std::uint32_t>(d));
  }
  switch (dtype) {
    case Dtype::f32:
      for (std::size_t i = 0; i < data.numel(); ++i)
        put_f32_le(buf, static_cast<float>(data[i]));
      break;
    case Dtype::f64:
      for (std::size_t i = 0; i < data.numel(); ++i) put_f64_le(buf, data[i]);
      break;
    case Dtype::u8:
      for (std::size_t i = 0; i < data.numel(); ++i) {
        const double v = std::llround(std::min(255.0, std::max(0.0, data[i])));
        buf.push_back(static_cast<char>(static_cast<unsigned char>(v)));
      }
      break;
  }

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out)
    throw Error(ErrorCode::io_unwritable, "cannot open for writing: " + path.string());
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out)
    throw Error(ErrorCode::io_unwritable, "write failed: " + path.string());
  out.close();

  nlohmann::json sidecar;
  sidecar["dtype"] = dtype_name(dtype);
  sidecar["shape"] = data.shape();
  sidecar["description"] = description;
  std::ofstream side(path.string() + ".json", std::ios::trunc);
  if (!side)
    throw Error(ErrorCode::io_unwritable,
                "cannot open sidecar for writing: " + path.string() + ".json");
  side << sidecar.dump(2) << "\n";
}

LoadedArray load_array(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw Error(ErrorCode::io_unwritable, "cannot open for reading: " + path.string());
  std::string raw((std::istreambuf_iterator<char>(in)),
                  std::istreambuf_iterator<char>());
  const auto* p = reinterpret_cast<const unsigned char*>(raw.data());

  if (raw.size() < 7 || std::memcmp(p, kMagic, 4) != 0)
    throw Error(ErrorCode::io_bad_magic, "bad magic in " + path.string());
  if (p[4] != kArrayFormatVersion)
    throw Error(ErrorCode::io_version_mismatch,
                "unsupported container version " + std::to_string(p[4]));
  const std::uint8_t dtype_code = p[5];
  if (dtype_code > 2)
    throw Error(ErrorCode::io_unsupported_dtype,
                "unsupported dtype code " + std::to_string(dtype_code));
  const Dtype dtype = static_cast<Dtype>(dtype_code);
  const std::size_t ndim = p[6];
  if (ndim == 0 || raw.size() < 7 + 4 * ndim)
    throw Error(ErrorCode::io_truncated_payload, "truncated header in " + path.string());

  std::vector<std::size_t> shape(ndim);
  for (std::size_t i = 0; i < ndim; ++i) shape[i] = get_u32_le(p + 7 + 4 * i);
  const std::size_t n = Tensor::numel_of(shape);
  const std::size_t offset = 7 + 4 * ndim;
  if (raw.size() != offset + n * dtype_size(dtype))
    throw Error(ErrorCode::io_truncated_payload,
                "truncated payload in " + path.string());

  Tensor t(shape);
  const unsigned char* q = p + offset;
  switch (dtype) {
    case Dtype::f32:
      for (std::size_t i = 0; i < n; ++i) {
        const std::uint32_t bits = get_u32_le(q + 4 * i);
        float v;
        std::memcpy(&v, &bits, 4);
        t[i] = v;
      }
      break;
    case Dtype::f64:
      for (std::size_t i = 0; i < n; ++i) {
        const std::uint64_t lo = get_u32_le(q + 8 * i);
        const std::uint64_t hi = get_u32_le(q + 8 * i + 4);
        const std::uint64_t bits = lo | (hi << 32);
        double v;
        std::memcpy(&v, &bits, 8);
        t[i] = v;
      }
      break;
    case Dtype::u8:
      for (std::size_t i = 0; i < n; ++i) t[i] = q[i];
      break;
  }
  return {std::move(t), dtype};
}

std::string task_name(Task t) { return t == Task::MRI ? "MRI" : "CT"; }

Task task_from_name(const std::string& name) {
  if (name == "MRI" || name == "mri") return Task::MRI;
  if (name == "CT" || name == "ct") return Task::CT;
  throw Error(ErrorCode::invalid_argument, "unknown task: " + name);
}

namespace {

std::string fmt4(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.4f", v);
  return buf;
}

void check_field(const std::string& s) {
  if (s.find(',') != std::string::npos || s.find('\n') != std::string::npos)
    throw Error(ErrorCode::invalid_argument, "CSV field contains separator: " + s);
}

} // namespace

void write_results_csv(const std::vector<ResultRow>& rows,
                       const std::filesystem::path& path) {
  if (rows.empty())
    throw Error(ErrorCode::invalid_argument, "write_results_csv: no rows");
  for (const auto& r : rows) {
    if (r.psnr_std_db < 0.0)
      throw Error(ErrorCode::invalid_argument, "negative psnr_std_db");
    if (r.ssim_mean < 0.0 || r.ssim_mean > 1.0)
      throw Error(ErrorCode::invalid_argument, "ssim_mean outside [0,1]");
    check_field(r.setting);
    check_field(r.method);
  }
  std::ofstream out(path, std::ios::trunc);
  if (!out)
    throw Error(ErrorCode::io_unwritable, "cannot open for writing: " + path.string());
  out << "task,setting,method,psnr_mean_db,psnr_std_db,ssim_mean,ssim_std,"
         "runtime_minutes\n";
  for (const auto& r : rows) {
    out << task_name(r.task) << ',' << r.setting << ',' << r.method << ','
        << fmt4(r.psnr_mean_db) << ',' << fmt4(r.psnr_std_db) << ','
        << fmt4(r.ssim_mean) << ',' << fmt4(r.ssim_std) << ','
        << fmt4(r.runtime_minutes) << '\n';
  }
  if (!out)
    throw Error(ErrorCode::io_unwritable, "write failed: " + path.string());
}

std::vector<ResultRow> read_results_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in)
    throw Error(ErrorCode::io_unwritable, "cannot open for reading: " + path.string());
  std::string line;
  if (!std::getline(in, line))
    throw Error(ErrorCode::io_truncated_payload, "empty results csv");
  std::vector<ResultRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string field;
    std::vector<std::string> fields;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (fields.size() != 8)
      throw Error(ErrorCode::invalid_argument, "malformed results row: " + line);
    ResultRow r;
    r.task = task_from_name(fields[0]);
    r.setting = fields[1];
    r.method = fields[2];
    r.psnr_mean_db = std::stod(fields[3]);
    r.psnr_std_db = std::stod(fields[4]);
    r.ssim_mean = std::stod(fields[5]);
    r.ssim_std = std::stod(fields[6]);
    r.runtime_minutes = std::stod(fields[7]);
    rows.push_back(std::move(r));
  }
  return rows;
}

} // namespace udig

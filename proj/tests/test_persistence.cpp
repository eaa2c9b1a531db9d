#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "udig/persistence.hpp"
#include "udig/rng.hpp"

using namespace udig;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const std::string& name) {
  return fs::temp_directory_path() / ("udig_test_" + name);
}

std::string read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  return std::string(std::istreambuf_iterator<char>(in), {});
}

void write_bytes(const fs::path& p, const std::string& bytes) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

Tensor random_tensor(std::vector<std::size_t> shape, std::uint64_t seed) {
  Rng rng(seed);
  Tensor t(std::move(shape));
  for (std::size_t i = 0; i < t.numel(); ++i) t[i] = rng.normal();
  return t;
}

// quantize through float so an f32 round trip can be checked for exact identity
Tensor as_f32_values(const Tensor& t) {
  Tensor out(t.shape());
  for (std::size_t i = 0; i < t.numel(); ++i)
    out[i] = static_cast<double>(static_cast<float>(t[i]));
  return out;
}

} // namespace

TEST_CASE("array container: header layout and zero payload for 2x2 f32 zeros") {
  const fs::path p = temp_file("zeros.arr");
  Tensor z({2, 2});
  save_array(p, z, Dtype::f32);
  const std::string bytes = read_bytes(p);
  // magic(4) + version(1) + dtype(1) + ndim(1) + 2*u32 shape + 4*f32 payload
  REQUIRE(bytes.size() == 4 + 1 + 1 + 1 + 8 + 16);
  CHECK(bytes.substr(0, 4) == "UDIG");
  CHECK(static_cast<unsigned char>(bytes[4]) == 1); // version
  CHECK(static_cast<unsigned char>(bytes[5]) == 0); // f32 dtype code
  CHECK(static_cast<unsigned char>(bytes[6]) == 2); // ndim
  for (std::size_t i = 15; i < bytes.size(); ++i)
    CHECK(static_cast<unsigned char>(bytes[i]) == 0x00);
  fs::remove(p);
  fs::remove(p.string() + ".json");
}

TEST_CASE("array container: f32 round trip restores a random 32x32 array exactly") {
  const fs::path p = temp_file("roundtrip32.arr");
  const Tensor x = as_f32_values(random_tensor({32, 32}, 7));
  save_array(p, x, Dtype::f32);
  const LoadedArray got = load_array(p);
  CHECK(got.dtype == Dtype::f32);
  REQUIRE(got.tensor.shape() == x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) CHECK(got.tensor[i] == x[i]);
  fs::remove(p);
  fs::remove(p.string() + ".json");
}

TEST_CASE("array container: f64 and u8 round trips are exact") {
  const fs::path p = temp_file("roundtrip_dtypes.arr");
  const Tensor x = random_tensor({5, 9}, 11);
  save_array(p, x, Dtype::f64);
  LoadedArray got = load_array(p);
  CHECK(got.dtype == Dtype::f64);
  for (std::size_t i = 0; i < x.numel(); ++i) CHECK(got.tensor[i] == x[i]);

  Tensor bytes_img({3, 4});
  for (std::size_t i = 0; i < bytes_img.numel(); ++i)
    bytes_img[i] = static_cast<double>((i * 37) % 256);
  save_array(p, bytes_img, Dtype::u8);
  got = load_array(p);
  CHECK(got.dtype == Dtype::u8);
  for (std::size_t i = 0; i < bytes_img.numel(); ++i)
    CHECK(got.tensor[i] == bytes_img[i]);
  fs::remove(p);
  fs::remove(p.string() + ".json");
}

TEST_CASE("array container: saving twice produces byte-identical files") {
  const fs::path p1 = temp_file("det_a.arr");
  const fs::path p2 = temp_file("det_b.arr");
  const Tensor x = random_tensor({8, 8}, 3);
  save_array(p1, x, Dtype::f32, "same");
  save_array(p2, x, Dtype::f32, "same");
  CHECK(read_bytes(p1) == read_bytes(p2));
  CHECK(read_bytes(p1.string() + ".json") == read_bytes(p2.string() + ".json"));
  for (const auto& p : {p1, p2}) {
    fs::remove(p);
    fs::remove(p.string() + ".json");
  }
}

TEST_CASE("array container: 2-channel 320x320 image records its shape") {
  const fs::path p = temp_file("mri_shape.arr");
  Tensor x({2, 320, 320});
  x.fill(0.25);
  save_array(p, x, Dtype::f32);
  const LoadedArray got = load_array(p);
  REQUIRE(got.tensor.shape() == std::vector<std::size_t>({2, 320, 320}));

  std::ifstream side(p.string() + ".json");
  const nlohmann::json j = nlohmann::json::parse(side);
  CHECK(j.at("dtype") == "float32");
  CHECK(j.at("shape") == nlohmann::json({2, 320, 320}));
  CHECK(j.contains("description"));
  fs::remove(p);
  fs::remove(p.string() + ".json");
}

TEST_CASE("array container: corrupt files raise distinct error codes") {
  const fs::path p = temp_file("corrupt.arr");
  const Tensor x = random_tensor({4, 4}, 5);
  save_array(p, x, Dtype::f32);
  const std::string good = read_bytes(p);

  SUBCASE("bad magic") {
    std::string bad = good;
    bad[0] = 'X';
    write_bytes(p, bad);
    try {
      load_array(p);
      FAIL("expected error");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::io_bad_magic);
    }
  }
  SUBCASE("version mismatch") {
    std::string bad = good;
    bad[4] = 9;
    write_bytes(p, bad);
    try {
      load_array(p);
      FAIL("expected error");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::io_version_mismatch);
    }
  }
  SUBCASE("unsupported dtype code 3") {
    std::string bad = good;
    bad[5] = 3;
    write_bytes(p, bad);
    try {
      load_array(p);
      FAIL("expected error");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::io_unsupported_dtype);
    }
  }
  SUBCASE("truncated payload") {
    write_bytes(p, good.substr(0, good.size() - 5));
    try {
      load_array(p);
      FAIL("expected error");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::io_truncated_payload);
    }
  }
  fs::remove(p);
  fs::remove(p.string() + ".json");
}

TEST_CASE("array container: non-finite values are rejected at save time") {
  const fs::path p = temp_file("nonfinite.arr");
  Tensor x({2, 2});
  x[3] = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(save_array(p, x, Dtype::f32), Error);
}

TEST_CASE("results csv: known row renders with four decimal places") {
  const fs::path p = temp_file("results.csv");
  std::vector<ResultRow> rows;
  rows.push_back({Task::MRI, "4x", "uDiG-DIP", 34.46, 0.02, 0.9720, 0.0030, 3.5});
  write_results_csv(rows, p);
  std::ifstream in(p);
  std::string header, line;
  std::getline(in, header);
  std::getline(in, line);
  CHECK(header ==
        "task,setting,method,psnr_mean_db,psnr_std_db,ssim_mean,ssim_std,"
        "runtime_minutes");
  CHECK(line == "MRI,4x,uDiG-DIP,34.4600,0.0200,0.9720,0.0030,3.5000");
  fs::remove(p);
}

TEST_CASE("results csv: empty row list is an error") {
  CHECK_THROWS_AS(write_results_csv({}, temp_file("none.csv")), Error);
}

TEST_CASE("results csv: two rows produce exactly three lines and parse back") {
  const fs::path p = temp_file("tworow.csv");
  std::vector<ResultRow> rows;
  rows.push_back({Task::MRI, "4x", "DIP", 30.21, 0.11, 0.9, 0.01, 2.0});
  rows.push_back({Task::CT, "18 views", "uDiG-DIP", 36.70, 0.25, 0.9345, 0.005, 3.5});
  write_results_csv(rows, p);

  std::ifstream in(p);
  int n_lines = 0;
  for (std::string line; std::getline(in, line);) ++n_lines;
  CHECK(n_lines == 3);

  const std::vector<ResultRow> back = read_results_csv(p);
  REQUIRE(back.size() == 2);
  CHECK(back[0].task == Task::MRI);
  CHECK(back[1].task == Task::CT);
  CHECK(back[0].method == "DIP");
  CHECK(back[1].setting == "18 views");
  for (std::size_t i = 0; i < rows.size(); ++i) {
    CHECK(back[i].psnr_mean_db == doctest::Approx(rows[i].psnr_mean_db).epsilon(1e-9));
    CHECK(back[i].psnr_std_db == doctest::Approx(rows[i].psnr_std_db).epsilon(1e-9));
    CHECK(back[i].ssim_mean == doctest::Approx(rows[i].ssim_mean).epsilon(1e-9));
    CHECK(back[i].ssim_std == doctest::Approx(rows[i].ssim_std).epsilon(1e-9));
    CHECK(back[i].runtime_minutes ==
          doctest::Approx(rows[i].runtime_minutes).epsilon(1e-9));
  }
  fs::remove(p);
}

TEST_CASE("results csv: rows with invalid statistics are rejected") {
  const fs::path p = temp_file("badrow.csv");
  std::vector<ResultRow> rows;
  rows.push_back({Task::MRI, "4x", "DIP", 30.0, -0.1, 0.9, 0.01, 1.0});
  CHECK_THROWS_AS(write_results_csv(rows, p), Error);
  rows[0] = {Task::MRI, "4x", "DIP", 30.0, 0.1, 1.5, 0.01, 1.0};
  CHECK_THROWS_AS(write_results_csv(rows, p), Error);
  rows[0] = {Task::MRI, "4,x", "DIP", 30.0, 0.1, 0.9, 0.01, 1.0};
  CHECK_THROWS_AS(write_results_csv(rows, p), Error);
}

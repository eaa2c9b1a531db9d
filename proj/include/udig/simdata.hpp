#ifndef UDIG_SIMDATA_HPP
#define UDIG_SIMDATA_HPP

#include <string>

#include <json.hpp>

#include "udig/operators.hpp"
#include "udig/tensor.hpp"

namespace udig {

enum class PhantomKind { shepp_logan, random_ellipses, user_array };

std::string phantom_kind_name(PhantomKind k);
PhantomKind phantom_kind_from_name(const std::string& name);

struct PhantomSpec {
  PhantomKind kind = PhantomKind::shepp_logan;
  std::size_t size = 64;
  int n_ellipses = 6;     // random_ellipses only
  std::uint64_t seed = 0;
  std::string path;       // user_array only
};

void to_json(nlohmann::json& j, const PhantomSpec& spec);
void from_json(const nlohmann::json& j, PhantomSpec& spec);

// Deterministic ground-truth image in [0,1].
Tensor generate_phantom(const PhantomSpec& spec);

// Turns a magnitude phantom into a 2-channel (re, im) image with a smooth
// random low-order polynomial phase field.
Tensor make_mri_ground_truth(const Tensor& phantom, double phase_strength,
                             std::uint64_t seed);

// y = A x + complex Gaussian noise on sampled k-space entries
// (std noise_sigma per real component).
Measurements simulate_mri_measurements(const MriOperator& op,
                                       const Tensor& x_true,
                                       double noise_sigma, std::uint64_t seed);

// Poisson transmission counts through the scaled attenuation model, returned
// as post-log line integrals. I0 = +infinity is the noiseless sentinel and
// returns A x exactly.
Measurements simulate_ct_measurements(const CtOperator& op,
                                      const Tensor& x_true, double I0,
                                      std::uint64_t seed);

// Additive Gaussian noise helper (optional post-log CT noise).
void add_gaussian_noise(Tensor& data, double sigma, std::uint64_t seed);

} // namespace udig

#endif // UDIG_SIMDATA_HPP

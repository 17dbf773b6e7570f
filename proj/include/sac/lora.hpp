#pragma once

#include <cstdint>

#include "sac/common.hpp"
#include "sac/rng.hpp"
#include "sac/tensor.hpp"

namespace sac {

// Low-rank delta for a frozen d_out x d_in weight: y += scale * B * (A * x).
// B starts at zero so a fresh adapter is an exact no-op.
struct LoRAAdapter {
  int d_in = 0;
  int d_out = 0;
  int rank = 0;
  Tensor a;  // [rank, d_in]
  Tensor b;  // [d_out, rank]
  double scale = 1.0;

  static LoRAAdapter init(int d_in, int d_out, int rank, Rng& rng, double scale = 1.0,
                          double a_stddev = 0.02) {
    require(d_in >= 0 && d_out >= 0 && rank >= 0, Errc::config, "adapter dimensions must be non-negative");
    require(scale > 0.0, Errc::config, "adapter scale must be positive");
    LoRAAdapter ad;
    ad.d_in = d_in;
    ad.d_out = d_out;
    ad.rank = rank;
    ad.scale = scale;
    ad.a = Tensor::randn({rank, d_in}, rng, a_stddev);
    ad.b = Tensor({d_out, rank}, 0.0);
    return ad;
  }

  std::int64_t param_count() const {
    return static_cast<std::int64_t>(rank) * (static_cast<std::int64_t>(d_in) + d_out);
  }
};

// base_output + scale * B * (A * x)
inline Tensor lora_forward(const Tensor& x, const Tensor& base_output, const LoRAAdapter& ad) {
  require(static_cast<int>(x.numel()) == ad.d_in, Errc::shape, "lora input dimension mismatch");
  require(static_cast<int>(base_output.numel()) == ad.d_out, Errc::shape, "lora output dimension mismatch");
  Tensor y = base_output;
  if (ad.rank == 0) return y;
  Tensor ax({ad.rank});
  for (int r = 0; r < ad.rank; ++r) {
    const double* arow = &ad.a.data[static_cast<size_t>(r) * ad.d_in];
    double acc = 0.0;
    for (int i = 0; i < ad.d_in; ++i) acc += arow[i] * x.data[i];
    ax[r] = acc;
  }
  for (int o = 0; o < ad.d_out; ++o) {
    const double* brow = &ad.b.data[static_cast<size_t>(o) * ad.rank];
    double acc = 0.0;
    for (int r = 0; r < ad.rank; ++r) acc += brow[r] * ax[r];
    y.data[o] += ad.scale * acc;
  }
  return y;
}

// n_sites * r * (d_in + d_out)
inline std::int64_t lora_param_count(std::int64_t d_in, std::int64_t d_out, std::int64_t r,
                                     std::int64_t n_sites) {
  require(d_in >= 0 && d_out >= 0 && r >= 0 && n_sites >= 0, Errc::config,
          "lora_param_count arguments must be non-negative");
  return n_sites * r * (d_in + d_out);
}

}  // namespace sac

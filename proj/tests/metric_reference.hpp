#pragma once

#include <cstdint>

namespace vicon::test {

struct MetricReference {
  std::uint64_t seed;
  double ssim;
  double psnr;
};

// scikit-image 0.25.2: structural_similarity(gaussian_weights=True, sigma=1.5,
// use_sample_covariance=False, data_range=1, channel_axis=2) and
// peak_signal_noise_ratio(data_range=1) on lcg_pair(seed, 0.2 * seed).
inline constexpr MetricReference kMetricReferences[] = {
    {1, 0.9821356721946154, 24.961108334618483}, {2, 0.9201143961428041, 19.096931965706972},
    {3, 0.8761176287633697, 16.123575389272737}, {4, 0.7755229467005632, 13.840581784197902},
    {5, 0.691100513552067, 12.012813003294864},
};

}  // namespace vicon::test

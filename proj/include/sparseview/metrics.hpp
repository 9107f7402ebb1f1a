#pragma once

#include <memory>
#include <string>
#include <vector>

#include "sparseview/image.hpp"

namespace sparseview {

/// Value reported for identical images.
inline constexpr double kPsnrCap = 99.0;

/// Peak signal-to-noise ratio in dB, capped at kPsnrCap.
double psnr(const Image &a, const Image &b, double max_val = 1.0);

struct SsimOptions {
    int window = 11;
    double sigma = 1.5;
    double k1 = 0.01;
    double k2 = 0.03;
    double max_val = 1.0;
};

/// Mean structural similarity over all fully-contained windows, computed on
/// luma for RGB inputs.
double ssim(const Image &a, const Image &b, const SsimOptions &options = {});

/// Optional learned metric slot (nothing is registered by default).
class PerceptualScorer {
public:
    virtual ~PerceptualScorer() = default;
    virtual double score(const Image &rendered, const Image &truth) const = 0;
    virtual std::string name() const = 0;
};

struct FrameMetrics {
    int frame = 0;
    double psnr = 0.0;
    double ssim = 0.0;
};

struct MetricsReport {
    std::vector<FrameMetrics> frames;
    double mean_psnr = 0.0;
    double mean_ssim = 0.0;

    void add(int frame, const Image &prediction, const Image &truth);
    std::string to_json() const;
    std::string to_csv() const;
};

}  // namespace sparseview

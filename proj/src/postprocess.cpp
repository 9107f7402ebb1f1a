#include "sparseview/postprocess.hpp"

#include <algorithm>
#include <array>
#include <numeric>

#include "sparseview/error.hpp"

namespace sparseview {

namespace {

constexpr int kBins = 256;

// Cumulative fractions at the 257 bin edges of one reference channel.
std::array<double, kBins + 1> reference_cdf(const Image &ref, int channel) {
    std::array<double, kBins + 1> cdf{};
    const std::size_t n = ref.pixel_count();
    for (std::size_t p = 0; p < n; ++p) {
        const double v = std::clamp(ref.data[p * ref.channels + channel], 0.0, 1.0);
        const int bin = std::min(kBins - 1, static_cast<int>(v * kBins));
        cdf[bin + 1] += 1.0;
    }
    for (int k = 1; k <= kBins; ++k) cdf[k] += cdf[k - 1];
    for (double &c : cdf) c /= static_cast<double>(n);
    return cdf;
}

double inverse_cdf(const std::array<double, kBins + 1> &cdf, double p) {
    // First bin whose upper edge reaches p; it necessarily has mass when p > 0.
    const auto it = std::lower_bound(cdf.begin() + 1, cdf.end(), p);
    const int k = static_cast<int>(std::min(it, cdf.end() - 1) - cdf.begin()) - 1;
    const double lo = cdf[k], hi = cdf[k + 1];
    const double frac = hi > lo ? std::clamp((p - lo) / (hi - lo), 0.0, 1.0) : 0.0;
    return (k + frac) / kBins;
}

}  // namespace

Image histogram_match(const Image &src, const Image &ref) {
    require(src.width == ref.width && src.height == ref.height && src.channels == ref.channels,
            ErrorCode::ShapeMismatch, "histogram matching needs images of the same size");
    require(src.pixel_count() > 0, ErrorCode::InvalidArgument, "histogram matching needs a non-empty image");

    const std::size_t n = src.pixel_count();
    const int C = src.channels;
    Image out(src.width, src.height, C);
    std::vector<std::size_t> order(n);
    for (int c = 0; c < C; ++c) {
        const auto cdf = reference_cdf(ref, c);
        auto value = [&](std::size_t p) { return src.data[p * C + c]; };
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return value(a) < value(b); });
        for (std::size_t i = 0; i < n;) {
            std::size_t j = i;
            while (j < n && value(order[j]) == value(order[i])) ++j;
            // Mid-rank empirical CDF: (#less + #equal / 2) / n.
            const double p = (static_cast<double>(i) + 0.5 * static_cast<double>(j - i)) / static_cast<double>(n);
            const double mapped = std::clamp(inverse_cdf(cdf, p), 0.0, 1.0);
            for (std::size_t k = i; k < j; ++k) out.data[order[k] * C + c] = mapped;
            i = j;
        }
    }
    return out;
}

}  // namespace sparseview

#include "sparseview/metrics.hpp"

#include <cmath>
#include <iomanip>
#include <sstream>

#include <json.hpp>

#include "sparseview/error.hpp"

namespace sparseview {

double psnr(const Image &a, const Image &b, double max_val) {
    require(a.same_shape(b), ErrorCode::ShapeMismatch, "psnr: image shapes differ");
    require(!a.data.empty(), ErrorCode::InvalidArgument, "psnr: empty image");
    require(max_val > 0.0, ErrorCode::InvalidArgument, "psnr: max_val must be positive");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) acc += (a.data[i] - b.data[i]) * (a.data[i] - b.data[i]);
    const double mse = acc / static_cast<double>(a.data.size());
    if (mse == 0.0) return kPsnrCap;
    return std::min(kPsnrCap, 10.0 * std::log10(max_val * max_val / mse));
}

namespace {

// Separable "valid" Gaussian filter of a single-channel image.
std::vector<double> filter_valid(const std::vector<double> &img, int w, int h, const std::vector<double> &k) {
    const int n = static_cast<int>(k.size());
    const int ow = w - n + 1, oh = h - n + 1;
    std::vector<double> rows(static_cast<std::size_t>(h) * ow), out(static_cast<std::size_t>(oh) * ow);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < ow; ++x) {
            double acc = 0.0;
            for (int i = 0; i < n; ++i) acc += k[i] * img[static_cast<std::size_t>(y) * w + x + i];
            rows[static_cast<std::size_t>(y) * ow + x] = acc;
        }
    for (int y = 0; y < oh; ++y)
        for (int x = 0; x < ow; ++x) {
            double acc = 0.0;
            for (int i = 0; i < n; ++i) acc += k[i] * rows[static_cast<std::size_t>(y + i) * ow + x];
            out[static_cast<std::size_t>(y) * ow + x] = acc;
        }
    return out;
}

Image gray(const Image &img) {
    require(img.channels == 1 || img.channels == 3, ErrorCode::ShapeMismatch, "ssim expects 1 or 3 channels");
    return to_luma(img);
}

}  // namespace

double ssim(const Image &a_in, const Image &b_in, const SsimOptions &options) {
    require(a_in.same_shape(b_in), ErrorCode::ShapeMismatch, "ssim: image shapes differ");
    require(options.window >= 1 && options.sigma > 0.0, ErrorCode::InvalidArgument, "ssim: invalid window");
    require(a_in.width >= options.window && a_in.height >= options.window, ErrorCode::ShapeMismatch,
            "ssim: image smaller than the " + std::to_string(options.window) + "-pixel window");
    const Image a = gray(a_in), b = gray(b_in);
    const int w = a.width, h = a.height;

    std::vector<double> k(options.window);
    const double centre = (options.window - 1) / 2.0;
    double ksum = 0.0;
    for (int i = 0; i < options.window; ++i) {
        k[i] = std::exp(-0.5 * (i - centre) * (i - centre) / (options.sigma * options.sigma));
        ksum += k[i];
    }
    for (double &v : k) v /= ksum;

    std::vector<double> aa(a.data.size()), bb(a.data.size()), ab(a.data.size());
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        aa[i] = a.data[i] * a.data[i];
        bb[i] = b.data[i] * b.data[i];
        ab[i] = a.data[i] * b.data[i];
    }
    const auto mu_a = filter_valid(a.data, w, h, k), mu_b = filter_valid(b.data, w, h, k);
    const auto e_aa = filter_valid(aa, w, h, k), e_bb = filter_valid(bb, w, h, k), e_ab = filter_valid(ab, w, h, k);

    const double c1 = (options.k1 * options.max_val) * (options.k1 * options.max_val);
    const double c2 = (options.k2 * options.max_val) * (options.k2 * options.max_val);
    double total = 0.0;
    for (std::size_t i = 0; i < mu_a.size(); ++i) {
        const double var_a = e_aa[i] - mu_a[i] * mu_a[i];
        const double var_b = e_bb[i] - mu_b[i] * mu_b[i];
        const double cov = e_ab[i] - mu_a[i] * mu_b[i];
        const double num = (2.0 * mu_a[i] * mu_b[i] + c1) * (2.0 * cov + c2);
        const double den = (mu_a[i] * mu_a[i] + mu_b[i] * mu_b[i] + c1) * (var_a + var_b + c2);
        total += num / den;
    }
    return total / static_cast<double>(mu_a.size());
}

void MetricsReport::add(int frame, const Image &prediction, const Image &truth) {
    frames.push_back({frame, psnr(prediction, truth), ssim(prediction, truth)});
    mean_psnr = mean_ssim = 0.0;
    for (const auto &f : frames) {
        mean_psnr += f.psnr;
        mean_ssim += f.ssim;
    }
    mean_psnr /= static_cast<double>(frames.size());
    mean_ssim /= static_cast<double>(frames.size());
}

std::string MetricsReport::to_json() const {
    nlohmann::json j;
    j["frames"] = nlohmann::json::array();
    for (const auto &f : frames) j["frames"].push_back({{"frame", f.frame}, {"psnr", f.psnr}, {"ssim", f.ssim}});
    j["mean"] = {{"psnr", mean_psnr}, {"ssim", mean_ssim}};
    return j.dump(2);
}

std::string MetricsReport::to_csv() const {
    std::ostringstream out;
    out << std::setprecision(10) << "frame,psnr,ssim\n";
    for (const auto &f : frames) out << f.frame << ',' << f.psnr << ',' << f.ssim << '\n';
    out << "mean," << mean_psnr << ',' << mean_ssim << '\n';
    return out.str();
}

}  // namespace sparseview

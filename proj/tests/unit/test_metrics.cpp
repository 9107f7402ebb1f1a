#include <gtest/gtest.h>

#include <cmath>
#include <nlohmann/json.hpp>
#include <numeric>

#include "../support/test_support.hpp"
#include "sparseview/error.hpp"
#include "sparseview/metrics.hpp"

namespace sparseview {
namespace {

using testing::random_image;
using testing::Rng;

// Direct 2-D evaluation of the windowed statistics, one window at a time.
double brute_ssim(const Image &a, const Image &b, int win = 11, double sigma = 1.5) {
    std::vector<double> k2(win * win);
    double ksum = 0;
    for (int i = 0; i < win; ++i)
        for (int j = 0; j < win; ++j) {
            const double di = i - (win - 1) / 2.0, dj = j - (win - 1) / 2.0;
            k2[i * win + j] = std::exp(-(di * di + dj * dj) / (2 * sigma * sigma));
            ksum += k2[i * win + j];
        }
    const double c1 = 1e-4, c2 = 9e-4;
    double total = 0;
    int count = 0;
    for (int y = 0; y + win <= a.height; ++y)
        for (int x = 0; x + win <= a.width; ++x) {
            double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
            for (int i = 0; i < win; ++i)
                for (int j = 0; j < win; ++j) {
                    const double wgt = k2[i * win + j] / ksum;
                    const double va = a.at(x + j, y + i, 0), vb = b.at(x + j, y + i, 0);
                    ma += wgt * va;
                    mb += wgt * vb;
                    saa += wgt * va * va;
                    sbb += wgt * vb * vb;
                    sab += wgt * va * vb;
                }
            const double va = saa - ma * ma, vb = sbb - mb * mb, cov = sab - ma * mb;
            total += (2 * ma * mb + c1) * (2 * cov + c2) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
            ++count;
        }
    return total / count;
}

TEST(Psnr, Examples) {
    Rng rng(1);
    const Image a = random_image(rng, 16, 16, 3, 0.0, 0.9);
    EXPECT_EQ(psnr(a, a), kPsnrCap);
    EXPECT_EQ(kPsnrCap, 99.0);
    Image b = a;
    for (double &v : b.data) v += 0.1;
    EXPECT_NEAR(psnr(a, b), 20.0, 1e-9);
    // Tiny errors still stop at the cap.
    Image c = a;
    c.data[0] += 1e-12;
    EXPECT_EQ(psnr(a, c), kPsnrCap);
}

TEST(Psnr, MatchesBruteForceAndIsSymmetric) {
    Rng rng(2);
    for (int trial = 0; trial < 50; ++trial) {
        const Image a = random_image(rng, 12, 9, 3), b = random_image(rng, 12, 9, 3);
        double mse = 0;
        for (std::size_t i = 0; i < a.data.size(); ++i) mse += std::pow(a.data[i] - b.data[i], 2) / a.data.size();
        EXPECT_NEAR(psnr(a, b), -10 * std::log10(mse), 1e-9);
        EXPECT_EQ(psnr(a, b), psnr(b, a));

        // Same permutation applied to both images' pixels.
        std::vector<std::size_t> perm(a.pixel_count());
        std::iota(perm.begin(), perm.end(), 0);
        for (std::size_t i = perm.size() - 1; i > 0; --i)
            std::swap(perm[i], perm[static_cast<std::size_t>(rng.integer(0, static_cast<int>(i)))]);
        Image pa = a, pb = b;
        for (std::size_t p = 0; p < perm.size(); ++p)
            for (int c = 0; c < 3; ++c) {
                pa.data[3 * p + c] = a.data[3 * perm[p] + c];
                pb.data[3 * p + c] = b.data[3 * perm[p] + c];
            }
        EXPECT_NEAR(psnr(pa, pb), psnr(a, b), 1e-9);
    }
    EXPECT_THROW(psnr(Image(2, 2, 3), Image(2, 3, 3)), Error);
}

TEST(Ssim, Examples) {
    Rng rng(3);
    const Image a = random_image(rng, 32, 24, 3);
    EXPECT_EQ(ssim(a, a), 1.0);

    Image checker(24, 24, 1), inverse(24, 24, 1);
    for (int y = 0; y < 24; ++y)
        for (int x = 0; x < 24; ++x) {
            checker.at(x, y, 0) = (x + y) % 2;
            inverse.at(x, y, 0) = 1.0 - checker.at(x, y, 0);
        }
    EXPECT_LT(ssim(checker, inverse), 0.0);

    Image noisy = a;
    std::mt19937_64 gen(4);
    std::normal_distribution<double> n(0.0, 1e-4);
    for (double &v : noisy.data) v += n(gen);
    EXPECT_GT(ssim(a, noisy), 0.999);
}

TEST(Ssim, MatchesDirectWindowEvaluation) {
    Rng rng(5);
    for (int trial = 0; trial < 5; ++trial) {
        const Image a = random_image(rng, 20, 16, 1), b = random_image(rng, 20, 16, 1);
        EXPECT_NEAR(ssim(a, b), brute_ssim(a, b), 1e-12);
    }
}

TEST(Ssim, SymmetricAndInvariantToSharedMirror) {
    Rng rng(6);
    for (int trial = 0; trial < 10; ++trial) {
        const Image a = random_image(rng, 24, 20, 3), b = random_image(rng, 24, 20, 3);
        EXPECT_NEAR(ssim(a, b), ssim(b, a), 1e-12);
        EXPECT_NEAR(ssim(mirror_horizontal(a), mirror_horizontal(b)), ssim(a, b), 1e-12);
    }
}

TEST(Ssim, TooSmallOrMismatched) {
    EXPECT_THROW(ssim(Image(10, 20, 3), Image(10, 20, 3)), Error);
    EXPECT_THROW(ssim(Image(20, 20, 3), Image(20, 21, 3)), Error);
    EXPECT_THROW(ssim(Image(20, 20, 2), Image(20, 20, 2)), Error);
}

TEST(MetricsReport, JsonAndCsv) {
    Rng rng(7);
    const Image truth = random_image(rng, 16, 16, 3, 0.0, 0.9);
    Image off = truth;
    for (double &v : off.data) v += 0.1;
    MetricsReport report;
    report.add(3, truth, truth);
    report.add(8, off, truth);
    EXPECT_NEAR(report.mean_psnr, (99.0 + 20.0) / 2, 1e-9);

    const auto j = nlohmann::json::parse(report.to_json());
    ASSERT_EQ(j["frames"].size(), 2u);
    EXPECT_EQ(j["frames"][1]["frame"], 8);
    EXPECT_NEAR(j["frames"][1]["psnr"].get<double>(), 20.0, 1e-9);
    EXPECT_NEAR(j["mean"]["ssim"].get<double>(), report.mean_ssim, 1e-15);

    const std::string csv = report.to_csv();
    EXPECT_EQ(csv.rfind("frame,psnr,ssim\n3,99,1\n8,20", 0), 0u) << csv;
    EXPECT_NE(csv.find("\nmean,59.5,"), std::string::npos) << csv;
}

}  // namespace
}  // namespace sparseview

#include "sparseview/sh.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "sparseview/error.hpp"

namespace sparseview {
namespace {

// Forward-mode dual number carrying d/dx, d/dy, d/dz.
struct Dual3 {
    double v = 0.0;
    Eigen::Vector3d d = Eigen::Vector3d::Zero();
};

inline Dual3 operator+(const Dual3 &a, const Dual3 &b) { return {a.v + b.v, a.d + b.d}; }
inline Dual3 operator-(const Dual3 &a, const Dual3 &b) { return {a.v - b.v, a.d - b.d}; }
inline Dual3 operator*(const Dual3 &a, const Dual3 &b) { return {a.v * b.v, a.d * b.v + b.d * a.v}; }
inline Dual3 operator*(double s, const Dual3 &a) { return {s * a.v, s * a.d}; }

inline double value_of(double x) { return x; }
inline double value_of(const Dual3 &x) { return x.v; }

template <typename T>
T scaled(double s, const T &x) {
    return s * x;
}

double factorial_ratio(int l, int m) {
    // (l - m)! / (l + m)!
    double r = 1.0;
    for (int k = l - m + 1; k <= l + m; ++k) r /= k;
    return r;
}

// Real SH as polynomials in (x, y, z): Y_lm = K_lm * Pbar_l^|m|(z) * {Re, Im}((x + iy)^|m|),
// where Pbar is the associated Legendre function with the sin^m factor removed.
template <typename T>
void evaluate_basis(const T &x, const T &y, const T &z, int degree, std::vector<T> &out) {
    const int count = sh_basis_count(degree);
    out.assign(count, T{});
    const T one = [] {
        T t{};
        if constexpr (std::is_same_v<T, double>) t = 1.0; else t.v = 1.0;
        return t;
    }();

    // (x + iy)^m real and imaginary parts.
    std::vector<T> re(degree + 1), im(degree + 1);
    re[0] = one;
    im[0] = T{};
    for (int m = 1; m <= degree; ++m) {
        re[m] = re[m - 1] * x - im[m - 1] * y;
        im[m] = re[m - 1] * y + im[m - 1] * x;
    }

    for (int m = 0; m <= degree; ++m) {
        // Pbar_m^m = (-1)^m (2m-1)!!
        double pmm = 1.0;
        for (int k = 1; k <= m; ++k) pmm *= -(2.0 * k - 1.0);
        T p_prev2{};
        T p_prev = scaled(pmm, one);
        for (int l = m; l <= degree; ++l) {
            T p;
            if (l == m) {
                p = p_prev;
            } else if (l == m + 1) {
                p = scaled(2.0 * m + 1.0, z) * p_prev;
                p_prev2 = p_prev;
                p_prev = p;
            } else {
                p = scaled(1.0 / (l - m), scaled(2.0 * l - 1.0, z) * p_prev - scaled(l + m - 1.0, p_prev2));
                p_prev2 = p_prev;
                p_prev = p;
            }
            const double k = std::sqrt((2.0 * l + 1.0) / (4.0 * std::numbers::pi) * factorial_ratio(l, m));
            if (m == 0) {
                out[l * l + l] = scaled(k, p);
            } else {
                out[l * l + l + m] = scaled(std::numbers::sqrt2 * k, p * re[m]);
                out[l * l + l - m] = scaled(std::numbers::sqrt2 * k, p * im[m]);
            }
        }
    }
}

}  // namespace

std::vector<double> sh_basis(const Eigen::Vector3d &dir, int degree) {
    require(degree >= 0, ErrorCode::InvalidArgument, "SH degree must be non-negative");
    std::vector<double> out;
    evaluate_basis<double>(dir.x(), dir.y(), dir.z(), degree, out);
    return out;
}

void sh_basis_with_gradient(const Eigen::Vector3d &dir, int degree, std::vector<double> &values,
                            std::vector<Eigen::Vector3d> &gradients) {
    require(degree >= 0, ErrorCode::InvalidArgument, "SH degree must be non-negative");
    Dual3 x{dir.x(), Eigen::Vector3d::UnitX()};
    Dual3 y{dir.y(), Eigen::Vector3d::UnitY()};
    Dual3 z{dir.z(), Eigen::Vector3d::UnitZ()};
    std::vector<Dual3> out;
    evaluate_basis<Dual3>(x, y, z, degree, out);
    values.resize(out.size());
    gradients.resize(out.size());
    for (std::size_t k = 0; k < out.size(); ++k) {
        values[k] = out[k].v;
        gradients[k] = out[k].d;
    }
}

Eigen::Vector3d sh_color(std::span<const double> coeffs, const Eigen::Vector3d &dir, int degree) {
    require(degree >= 0, ErrorCode::InvalidArgument, "SH degree must be non-negative");
    require(coeffs.size() == static_cast<std::size_t>(3 * sh_basis_count(degree)), ErrorCode::ShapeMismatch,
            "SH coefficient count does not match the degree");
    require(std::abs(dir.norm() - 1.0) <= 1e-6, ErrorCode::InvalidArgument, "view direction must be unit length");
    const auto basis = sh_basis(dir, degree);
    Eigen::Vector3d rgb = Eigen::Vector3d::Constant(0.5);
    for (std::size_t k = 0; k < basis.size(); ++k)
        for (int c = 0; c < 3; ++c) rgb[c] += coeffs[3 * k + c] * basis[k];
    return rgb.cwiseMax(0.0).cwiseMin(1.0);
}

}  // namespace sparseview

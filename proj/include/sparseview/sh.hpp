#pragma once

#include <Eigen/Core>
#include <span>
#include <vector>

namespace sparseview {

inline constexpr double kShC0 = 0.28209479177387814;

constexpr int sh_basis_count(int degree) { return (degree + 1) * (degree + 1); }

/// Real spherical harmonics Y_lm at a unit direction, ordered by l then
/// m = -l..l (index l*l + l + m). Includes the Condon-Shortley phase, so the
/// first band reads (-C1 y, C1 z, -C1 x).
std::vector<double> sh_basis(const Eigen::Vector3d &dir, int degree);

/// Basis values plus their gradients with respect to the (unnormalised)
/// direction components, treating Y_lm as polynomials in x, y, z.
void sh_basis_with_gradient(const Eigen::Vector3d &dir, int degree, std::vector<double> &values,
                            std::vector<Eigen::Vector3d> &gradients);

/// RGB = clamp(0.5 + sum_k c_k Y_k(dir), 0, 1). Coefficients are stored basis
/// major: coeffs[3 * k + channel].
Eigen::Vector3d sh_color(std::span<const double> coeffs, const Eigen::Vector3d &dir, int degree);

}  // namespace sparseview

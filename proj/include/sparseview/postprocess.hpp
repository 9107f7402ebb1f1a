#pragma once

#include "sparseview/image.hpp"

namespace sparseview {

/// Per-channel histogram matching of `src` onto the distribution of `ref`.
///
/// Each source value is ranked within its channel (mid-rank for ties) and the
/// rank is pushed through the inverse of the reference CDF, which is
/// represented as a 256-bin piecewise-linear function on [0, 1]. The mapping
/// is monotone per channel and the output is clamped to [0, 1].
Image histogram_match(const Image &src, const Image &ref);

}  // namespace sparseview

#include "sparseview/image.hpp"

#include <algorithm>
#include <cmath>

#include "sparseview/error.hpp"

namespace sparseview {

const char *to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::InvalidArgument: return "invalid-argument";
        case ErrorCode::ShapeMismatch: return "shape-mismatch";
        case ErrorCode::MissingFile: return "missing-file";
        case ErrorCode::MalformedJson: return "malformed-json";
        case ErrorCode::InvariantViolation: return "invariant-violation";
        case ErrorCode::NumericFailure: return "numeric-failure";
    }
    return "unknown";
}

Image::Image(int w, int h, int c, double fill)
    : width(w), height(h), channels(c),
      data(static_cast<std::size_t>(w) * h * c, fill) {
    require(w >= 0 && h >= 0 && c >= 0, ErrorCode::InvalidArgument, "negative image size");
}

namespace {

struct Tap {
    int i0, i1;
    double w0, w1;
};

// Source taps for each destination coordinate along one axis.
std::vector<Tap> axis_taps(int src_size, int dst_size) {
    std::vector<Tap> taps(dst_size);
    const double scale = static_cast<double>(src_size) / dst_size;
    for (int d = 0; d < dst_size; ++d) {
        double s = (d + 0.5) * scale - 0.5;
        s = std::clamp(s, 0.0, static_cast<double>(src_size - 1));
        const int i0 = static_cast<int>(std::floor(s));
        const int i1 = std::min(i0 + 1, src_size - 1);
        const double f = s - i0;
        taps[d] = {i0, i1, 1.0 - f, f};
    }
    return taps;
}

}  // namespace

Image resize_bilinear(const Image &src, int width, int height) {
    require(width > 0 && height > 0, ErrorCode::InvalidArgument, "resize target must be positive");
    require(src.width > 0 && src.height > 0, ErrorCode::InvalidArgument, "cannot resize an empty image");
    if (width == src.width && height == src.height) return src;

    const auto tx = axis_taps(src.width, width);
    const auto ty = axis_taps(src.height, height);
    Image dst(width, height, src.channels);
    for (int y = 0; y < height; ++y) {
        const Tap &a = ty[y];
        for (int x = 0; x < width; ++x) {
            const Tap &b = tx[x];
            for (int c = 0; c < src.channels; ++c) {
                const double top = b.w0 * src.at(b.i0, a.i0, c) + b.w1 * src.at(b.i1, a.i0, c);
                const double bot = b.w0 * src.at(b.i0, a.i1, c) + b.w1 * src.at(b.i1, a.i1, c);
                dst.at(x, y, c) = a.w0 * top + a.w1 * bot;
            }
        }
    }
    return dst;
}

Image resize_bilinear_adjoint(const Image &grad_dst, int src_width, int src_height) {
    if (grad_dst.width == src_width && grad_dst.height == src_height) return grad_dst;
    const auto tx = axis_taps(src_width, grad_dst.width);
    const auto ty = axis_taps(src_height, grad_dst.height);
    Image grad(src_width, src_height, grad_dst.channels);
    for (int y = 0; y < grad_dst.height; ++y) {
        const Tap &a = ty[y];
        for (int x = 0; x < grad_dst.width; ++x) {
            const Tap &b = tx[x];
            for (int c = 0; c < grad_dst.channels; ++c) {
                const double g = grad_dst.at(x, y, c);
                grad.at(b.i0, a.i0, c) += g * a.w0 * b.w0;
                grad.at(b.i1, a.i0, c) += g * a.w0 * b.w1;
                grad.at(b.i0, a.i1, c) += g * a.w1 * b.w0;
                grad.at(b.i1, a.i1, c) += g * a.w1 * b.w1;
            }
        }
    }
    return grad;
}

Image to_luma(const Image &src) {
    if (src.channels == 1) return src;
    require(src.channels == 3, ErrorCode::ShapeMismatch, "luma needs 1 or 3 channels");
    Image out(src.width, src.height, 1);
    for (std::size_t p = 0; p < src.pixel_count(); ++p) {
        const double *rgb = &src.data[p * 3];
        out.data[p] = 0.299 * rgb[0] + 0.587 * rgb[1] + 0.114 * rgb[2];
    }
    return out;
}

Image mirror_horizontal(const Image &src) {
    Image out(src.width, src.height, src.channels);
    for (int y = 0; y < src.height; ++y)
        for (int x = 0; x < src.width; ++x)
            for (int c = 0; c < src.channels; ++c)
                out.at(src.width - 1 - x, y, c) = src.at(x, y, c);
    return out;
}

bool all_finite(const Image &img) {
    return std::all_of(img.data.begin(), img.data.end(), [](double v) { return std::isfinite(v); });
}

}  // namespace sparseview

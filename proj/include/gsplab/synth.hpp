#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "gsplab/error.hpp"
#include "gsplab/rng.hpp"
#include "gsplab/tensor.hpp"

namespace gsplab {

struct Dot {
    double x = 0.0, y = 0.0;
};

struct Box {
    double x0 = 0.0, y0 = 0.0, w = 0.0, h = 0.0;
};

// Integer pixel rectangle, used for patches and tiles.
struct RectI {
    int x0 = 0, y0 = 0, w = 0, h = 0;
    bool operator==(const RectI&) const = default;
    long area() const { return static_cast<long>(w) * h; }
};

struct AnnotatedImage {
    Tensor pixels; // [C,H,W], values in [0,1]
    std::vector<Dot> dots;
    std::optional<std::vector<Box>> boxes;
    std::string id;

    int channels() const { return pixels.shape()[0]; }
    int height() const { return pixels.shape()[1]; }
    int width() const { return pixels.shape()[2]; }
    RectI full_rect() const { return {0, 0, width(), height()}; }
};

enum class ObjectKind { Disk, Gaussian, Square };

inline std::string object_kind_name(ObjectKind k) {
    switch (k) {
        case ObjectKind::Disk: return "disk";
        case ObjectKind::Gaussian: return "gaussian";
        case ObjectKind::Square: return "square";
    }
    return "disk";
}

inline ObjectKind parse_object_kind(const std::string& s) {
    if (s == "disk") return ObjectKind::Disk;
    if (s == "gaussian") return ObjectKind::Gaussian;
    if (s == "square") return ObjectKind::Square;
    throw ConfigError("unknown object kind '" + s + "' (expected disk, gaussian or square)");
}

struct SceneSpec {
    int width = 192, height = 192;
    int channels = 1;
    int n_min = 5, n_max = 25;
    double r_min = 2.0, r_max = 4.0;
    double min_separation = 10.0; // 0 allows overlap
    double noise_amplitude = 0.15;
    ObjectKind kind = ObjectKind::Disk;

    void validate() const {
        if (width < 1 || height < 1) throw ConfigError("scene size must be positive");
        if (channels < 1) throw ConfigError("scene channels must be >= 1");
        if (n_min < 0 || n_max < n_min) throw ConfigError("scene count range must satisfy 0 <= n_min <= n_max");
        if (r_min <= 0.0 || r_max < r_min) throw ConfigError("scene radius range must satisfy 0 < r_min <= r_max");
        if (noise_amplitude < 0.0 || noise_amplitude > 1.0)
            throw ConfigError("scene noise amplitude must be in [0,1]");
        if (min_separation < 0.0) throw ConfigError("scene min separation must be >= 0");
        if (min_separation > 0.0 && min_separation < 2.0 * r_max)
            throw ConfigError("non-overlap requires min separation >= 2*r_max");
        if (n_max > 0 && (width <= 2.0 * r_max || height <= 2.0 * r_max))
            throw ConfigError("scene too small to place an object of max radius");
    }
};

// Counting rule for patch labels: point-in-rect over dot annotations, or
// full containment of the 25%-shrunken central box.
enum class CountRule { Dots, ShrunkBoxes };

inline constexpr double kBoxShrinkFactor = 0.25;

inline std::string count_rule_name(CountRule r) {
    return r == CountRule::Dots ? "dots" : "shrunk-boxes";
}

inline CountRule parse_count_rule(const std::string& s) {
    if (s == "dots") return CountRule::Dots;
    if (s == "shrunk-boxes" || s == "shrunk_boxes") return CountRule::ShrunkBoxes;
    throw ConfigError("unknown count rule '" + s + "' (expected dots or shrunk-boxes)");
}

struct PatchSample {
    Tensor pixels; // [C,h,w] leaf copy
    int count = 0;
    std::string source_id;
    RectI rect;
};

// Centered shrink: same center, dimensions scaled by factor.
inline Box shrink_box(const Box& b, double factor) {
    if (b.w <= 0.0 || b.h <= 0.0)
        throw GeometryError("shrink_box requires positive box dimensions");
    if (!(factor > 0.0) || factor > 1.0)
        throw GeometryError("shrink factor must be in (0,1]");
    const double nw = factor * b.w, nh = factor * b.h;
    return {b.x0 + (b.w - nw) / 2.0, b.y0 + (b.h - nh) / 2.0, nw, nh};
}

namespace detail {

inline void check_rect_in_bounds(const RectI& r, int width, int height, const char* what) {
    if (r.w < 0 || r.h < 0 || r.x0 < 0 || r.y0 < 0 || r.x0 + r.w > width || r.y0 + r.h > height)
        throw GeometryError(std::string(what) + " rect (" + std::to_string(r.x0) + "," + std::to_string(r.y0) +
                            "," + std::to_string(r.w) + "," + std::to_string(r.h) + ") outside " +
                            std::to_string(width) + "x" + std::to_string(height) + " image");
}

} // namespace detail

// Core counting rule on bare annotations; dots use half-open membership
// x0 <= x < x0+w so tiles partition the total count exactly.
inline int count_in_rect(int width, int height, const std::vector<Dot>& dots,
                         const std::optional<std::vector<Box>>& boxes, const RectI& rect, CountRule rule) {
    detail::check_rect_in_bounds(rect, width, height, "count");
    const double x1 = rect.x0 + static_cast<double>(rect.w);
    const double y1 = rect.y0 + static_cast<double>(rect.h);
    int n = 0;
    if (rule == CountRule::Dots) {
        for (const auto& d : dots)
            if (d.x >= rect.x0 && d.x < x1 && d.y >= rect.y0 && d.y < y1) ++n;
        return n;
    }
    if (!boxes)
        throw AnnotationError("shrunk-boxes counting requires box annotations");
    for (const auto& b : *boxes) {
        const Box s = shrink_box(b, kBoxShrinkFactor);
        if (s.x0 >= rect.x0 && s.x0 + s.w <= x1 && s.y0 >= rect.y0 && s.y0 + s.h <= y1) ++n;
    }
    return n;
}

inline int count_in_rect(const AnnotatedImage& img, const RectI& rect, CountRule rule) {
    return count_in_rect(img.width(), img.height(), img.dots, img.boxes, rect, rule);
}

// Deterministic renderer: uniform background noise plus additive object
// blobs, snapped to the 8-bit grid so disk round-trips are bit-exact.
inline AnnotatedImage generate_image(const SceneSpec& spec, std::uint64_t seed) {
    spec.validate();
    std::mt19937_64 rng(derive_seed(seed, 0x5CE11E));
    const int n = static_cast<int>(uniform_int(rng, spec.n_min, spec.n_max));

    std::vector<Dot> dots;
    std::vector<double> radii;
    const long max_tries = 10L * std::max(1, spec.n_max) * 100L;
    long tries = 0;
    while (static_cast<int>(dots.size()) < n) {
        if (++tries > max_tries)
            throw CapacityError("could not place " + std::to_string(n) + " objects in " +
                                std::to_string(spec.width) + "x" + std::to_string(spec.height) +
                                " after " + std::to_string(max_tries) +
                                " tries; reduce the count range or the min separation");
        const double r = uniform_real(rng, spec.r_min, spec.r_max);
        const double x = uniform_real(rng, r, spec.width - r);
        const double y = uniform_real(rng, r, spec.height - r);
        if (spec.min_separation > 0.0) {
            bool clear = true;
            for (const auto& d : dots) {
                if (std::hypot(d.x - x, d.y - y) < spec.min_separation) {
                    clear = false;
                    break;
                }
            }
            if (!clear) continue;
        }
        dots.push_back({x, y});
        radii.push_back(r);
    }

    Tensor img = Tensor::zeros({spec.channels, spec.height, spec.width});
    auto px = img.values();
    for (auto& p : px) p = uniform01(rng) * spec.noise_amplitude;

    const std::size_t plane = static_cast<std::size_t>(spec.height) * spec.width;
    for (std::size_t i = 0; i < dots.size(); ++i) {
        const double cx = dots[i].x, cy = dots[i].y, r = radii[i];
        const int xlo = std::max(0, static_cast<int>(std::floor(cx - r)));
        const int xhi = std::min(spec.width - 1, static_cast<int>(std::ceil(cx + r)));
        const int ylo = std::max(0, static_cast<int>(std::floor(cy - r)));
        const int yhi = std::min(spec.height - 1, static_cast<int>(std::ceil(cy + r)));
        for (int y = ylo; y <= yhi; ++y) {
            for (int x = xlo; x <= xhi; ++x) {
                const double dx = x + 0.5 - cx, dy = y + 0.5 - cy;
                double a = 0.0;
                switch (spec.kind) {
                    case ObjectKind::Disk: {
                        const double d = std::hypot(dx, dy);
                        if (d <= r) a = 0.5 * (1.0 + std::cos(3.14159265358979323846 * d / r));
                        break;
                    }
                    case ObjectKind::Gaussian: {
                        const double d2 = dx * dx + dy * dy;
                        const double s = r / 2.0;
                        if (d2 <= r * r) a = std::exp(-d2 / (2.0 * s * s));
                        break;
                    }
                    case ObjectKind::Square:
                        if (std::fabs(dx) <= r && std::fabs(dy) <= r) a = 1.0;
                        break;
                }
                if (a <= 0.0) continue;
                for (int c = 0; c < spec.channels; ++c) {
                    double& p = px[c * plane + static_cast<std::size_t>(y) * spec.width + x];
                    p = std::min(1.0, p + a);
                }
            }
        }
    }
    // snap to the raster grid so generate -> write -> load is lossless
    for (auto& p : px) p = std::round(p * 255.0) / 255.0;

    AnnotatedImage out;
    out.pixels = img;
    out.dots = std::move(dots);
    std::vector<Box> boxes;
    boxes.reserve(radii.size());
    for (std::size_t i = 0; i < radii.size(); ++i) {
        const double r = radii[i];
        boxes.push_back({out.dots[i].x - r, out.dots[i].y - r, 2.0 * r, 2.0 * r});
    }
    out.boxes = std::move(boxes);
    out.id = "gen-" + std::to_string(seed);
    return out;
}

// Leaf copy of a pixel sub-rectangle.
inline Tensor crop_pixels(const Tensor& pixels, const RectI& rect) {
    if (pixels.rank() != 3)
        throw DimensionError("crop_pixels wants [C,H,W], got " + detail::shape_string(pixels.shape()));
    const int C = pixels.shape()[0], H = pixels.shape()[1], W = pixels.shape()[2];
    detail::check_rect_in_bounds(rect, W, H, "crop");
    if (rect.w < 1 || rect.h < 1) throw GeometryError("crop rect must be non-empty");
    Tensor out = Tensor::zeros({C, rect.h, rect.w});
    auto src = pixels.values();
    auto dst = out.values();
    for (int c = 0; c < C; ++c)
        for (int y = 0; y < rect.h; ++y)
            for (int x = 0; x < rect.w; ++x)
                dst[(static_cast<std::size_t>(c) * rect.h + y) * rect.w + x] =
                    src[(static_cast<std::size_t>(c) * H + (rect.y0 + y)) * W + (rect.x0 + x)];
    return out;
}

inline PatchSample make_patch(const AnnotatedImage& img, const RectI& rect, CountRule rule) {
    return {crop_pixels(img.pixels, rect), count_in_rect(img, rect, rule), img.id, rect};
}

inline PatchSample sample_random_patch(const AnnotatedImage& img, int size, CountRule rule,
                                       std::mt19937_64& rng) {
    if (size < 1 || size > img.width() || size > img.height())
        throw DimensionError("patch size " + std::to_string(size) + " does not fit " +
                             std::to_string(img.width()) + "x" + std::to_string(img.height()) + " image");
    const int x0 = static_cast<int>(uniform_int(rng, 0, img.width() - size));
    const int y0 = static_cast<int>(uniform_int(rng, 0, img.height() - size));
    return make_patch(img, {x0, y0, size, size}, rule);
}

inline PatchSample sample_object_centered_patch(const AnnotatedImage& img, int size, CountRule rule,
                                                std::mt19937_64& rng) {
    if (img.dots.empty())
        throw AnnotationError("object-centered sampling requires at least one dot");
    if (size < 1 || size > img.width() || size > img.height())
        throw DimensionError("patch size " + std::to_string(size) + " does not fit " +
                             std::to_string(img.width()) + "x" + std::to_string(img.height()) + " image");
    const auto& d = img.dots[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<long>(img.dots.size()) - 1))];
    const int x0 = std::clamp(static_cast<int>(std::lround(d.x)) - size / 2, 0, img.width() - size);
    const int y0 = std::clamp(static_cast<int>(std::lround(d.y)) - size / 2, 0, img.height() - size);
    return make_patch(img, {x0, y0, size, size}, rule);
}

// Non-overlapping grid covering the whole image; remainder tiles at the
// right/bottom edges are clipped, not dropped or padded, so per-tile ground
// truth still sums to the image total.
inline std::vector<RectI> tile_patches(int width, int height, int size) {
    if (size < 1) throw ContractError("tile size must be >= 1");
    std::vector<RectI> tiles;
    for (int y0 = 0; y0 < height; y0 += size)
        for (int x0 = 0; x0 < width; x0 += size)
            tiles.push_back({x0, y0, std::min(size, width - x0), std::min(size, height - y0)});
    return tiles;
}

inline std::vector<RectI> tile_patches(const AnnotatedImage& img, int size) {
    return tile_patches(img.width(), img.height(), size);
}

} // namespace gsplab

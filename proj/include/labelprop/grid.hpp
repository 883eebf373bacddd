#pragma once

// Raster value types shared by the whole library: hard class-id maps, soft
// per-pixel class distributions, RGB images, dense flow fields and boolean
// gate masks. All grids are row-major, addressed as (x = column, y = row)
// with the origin at the top-left. Types are plain values; operations on
// them are pure and safe to call concurrently.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "labelprop/errors.hpp"

namespace labelprop {

using ClassId = std::uint8_t;

// Reserved id for pixels without a semantic definition. Kept outside the
// [0, num_classes) range so it never enters softmax targets.
inline constexpr ClassId kIgnoreId = 255;

struct LabelMap {
    int width = 0;
    int height = 0;
    int num_classes = 0; // valid ids are [0, num_classes) plus ignore_id
    ClassId ignore_id = kIgnoreId;
    std::vector<ClassId> data;

    LabelMap() = default;
    LabelMap(int w, int h, int classes, ClassId fill = 0, ClassId ignore = kIgnoreId)
        : width(w), height(h), num_classes(classes), ignore_id(ignore),
          data(static_cast<std::size_t>(w) * h, fill) {}

    std::size_t index(int x, int y) const { return static_cast<std::size_t>(y) * width + x; }
    ClassId at(int x, int y) const { return data[index(x, y)]; }
    ClassId& at(int x, int y) { return data[index(x, y)]; }
    std::size_t pixels() const { return data.size(); }

    bool same_shape(const LabelMap& o) const { return width == o.width && height == o.height; }
};

struct SoftLabelMap {
    int width = 0;
    int height = 0;
    int num_classes = 0;
    std::vector<float> data; // pixel-major, num_classes floats per pixel

    SoftLabelMap() = default;
    SoftLabelMap(int w, int h, int classes)
        : width(w), height(h), num_classes(classes),
          data(static_cast<std::size_t>(w) * h * classes, 0.0f) {}

    std::size_t index(int x, int y, int c) const {
        return (static_cast<std::size_t>(y) * width + x) * num_classes + c;
    }
    float at(int x, int y, int c) const { return data[index(x, y, c)]; }
    float& at(int x, int y, int c) { return data[index(x, y, c)]; }
    std::size_t pixels() const { return static_cast<std::size_t>(width) * height; }
};

struct Image {
    int width = 0;
    int height = 0;
    int channels = 0;
    std::vector<float> data; // pixel-major, values in [0, 1]

    Image() = default;
    Image(int w, int h, int ch, float fill = 0.0f)
        : width(w), height(h), channels(ch),
          data(static_cast<std::size_t>(w) * h * ch, fill) {}

    std::size_t index(int x, int y, int c) const {
        return (static_cast<std::size_t>(y) * width + x) * channels + c;
    }
    float at(int x, int y, int c) const { return data[index(x, y, c)]; }
    float& at(int x, int y, int c) { return data[index(x, y, c)]; }
    std::size_t pixels() const { return static_cast<std::size_t>(width) * height; }

    bool same_shape(const Image& o) const {
        return width == o.width && height == o.height && channels == o.channels;
    }
};

// Per-pixel displacement in the target->source gather convention: the content
// of output pixel (x, y) is sampled at (x + u, y + v) in the source frame.
struct FlowVec {
    float u = 0.0f;
    float v = 0.0f;
};

struct FlowField {
    int width = 0;
    int height = 0;
    std::vector<FlowVec> data;

    FlowField() = default;
    FlowField(int w, int h) : width(w), height(h), data(static_cast<std::size_t>(w) * h) {}

    std::size_t index(int x, int y) const { return static_cast<std::size_t>(y) * width + x; }
    FlowVec at(int x, int y) const { return data[index(x, y)]; }
    FlowVec& at(int x, int y) { return data[index(x, y)]; }
    std::size_t pixels() const { return data.size(); }
};

struct GateMask {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> data;

    GateMask() = default;
    GateMask(int w, int h, bool fill = false)
        : width(w), height(h), data(static_cast<std::size_t>(w) * h, fill ? 1 : 0) {}

    std::size_t index(int x, int y) const { return static_cast<std::size_t>(y) * width + x; }
    bool at(int x, int y) const { return data[index(x, y)] != 0; }
    void set(int x, int y, bool b) { data[index(x, y)] = b ? 1 : 0; }
    std::size_t pixels() const { return data.size(); }
};

// Pixel with class c becomes the unit vector e_c; ignore pixels become the
// all-zero vector.
inline SoftLabelMap onehot_encode(const LabelMap& labels) {
    SoftLabelMap soft(labels.width, labels.height, labels.num_classes);
    for (std::size_t p = 0; p < labels.pixels(); ++p) {
        const ClassId id = labels.data[p];
        if (id != labels.ignore_id)
            soft.data[p * labels.num_classes + id] = 1.0f;
    }
    return soft;
}

// Per pixel, the class of maximal mass; ties break toward the lowest class
// index; the all-zero vector decodes to ignore_id.
inline LabelMap argmax_decode(const SoftLabelMap& soft, ClassId ignore_id = kIgnoreId) {
    LabelMap labels(soft.width, soft.height, soft.num_classes, 0, ignore_id);
    const int C = soft.num_classes;
    for (std::size_t p = 0; p < soft.pixels(); ++p) {
        const float* v = &soft.data[p * C];
        int best = 0;
        float best_val = v[0];
        bool all_zero = (v[0] == 0.0f);
        for (int c = 1; c < C; ++c) {
            if (v[c] != 0.0f) all_zero = false;
            if (v[c] > best_val) {
                best_val = v[c];
                best = c;
            }
        }
        labels.data[p] = all_zero ? ignore_id : static_cast<ClassId>(best);
    }
    return labels;
}

// L2 norm over channels of a(x,y) - b(x,y); range [0, sqrt(channels)] for
// [0,1] data.
inline float pixel_distance(const Image& a, const Image& b, int x, int y) {
    detail::require(a.same_shape(b), "pixel_distance: image shapes differ");
    float sum = 0.0f;
    for (int c = 0; c < a.channels; ++c) {
        const float d = a.at(x, y, c) - b.at(x, y, c);
        sum += d * d;
    }
    return std::sqrt(sum);
}

} // namespace labelprop

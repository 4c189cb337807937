#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace piclick {

/// Thrown for malformed caller input (bad shapes, out-of-bounds clicks, ...).
class InvalidInput : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Thrown for inconsistent configuration values.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Row-major H x W grid. Cell (row, col) lives at data[row * width + col].
template <typename T>
struct Grid {
    int height = 0;
    int width = 0;
    std::vector<T> data;

    Grid() = default;
    Grid(int h, int w, T fill = T{})
        : height(h), width(w), data(static_cast<size_t>(h) * static_cast<size_t>(w), fill) {}

    T& at(int row, int col) { return data[static_cast<size_t>(row) * width + col]; }
    const T& at(int row, int col) const { return data[static_cast<size_t>(row) * width + col]; }
    bool contains(int row, int col) const { return row >= 0 && row < height && col >= 0 && col < width; }
    size_t size() const { return data.size(); }

    bool operator==(const Grid&) const = default;
};

/// Binary mask, values exactly 0 or 1.
using MaskGrid = Grid<uint8_t>;
/// Probability map in [0,1].
using ProbGrid = Grid<float>;

enum class Polarity : uint8_t { negative = 0, positive = 1 };

struct Click {
    int x = 0;  // column
    int y = 0;  // row
    Polarity polarity = Polarity::positive;
    int order = 0;

    bool positive() const { return polarity == Polarity::positive; }
    bool operator==(const Click&) const = default;
};

std::string describe(const Click& click);

/// Throws InvalidInput naming the first click outside [0,W) x [0,H).
void validate_clicks(const std::vector<Click>& clicks, int height, int width);

size_t count_ones(const MaskGrid& mask);
bool empty(const MaskGrid& mask);

/// |a ∩ b| / |a ∪ b|; two empty masks have IoU 1.
double iou(const MaskGrid& a, const MaskGrid& b);

MaskGrid binarize(const ProbGrid& prob, float threshold = 0.5f);
MaskGrid xor_mask(const MaskGrid& a, const MaskGrid& b);

/// 4-connected component labelling. Labels are 1..count in row-major order of
/// each component's first pixel; background is 0.
struct Components {
    Grid<int> labels;
    std::vector<size_t> sizes;  // sizes[k] is the size of label k+1
};
Components label_components(const MaskGrid& mask);

/// Largest 4-connected component; ties go to the lowest label. Empty mask gives nullopt.
std::optional<MaskGrid> largest_component(const MaskGrid& mask);

/// Exact squared Euclidean distance from each foreground pixel to the nearest
/// pixel outside the mask, where everything beyond the image border counts as
/// outside. Background pixels get 0.
Grid<int64_t> squared_distance_to_boundary(const MaskGrid& mask);

struct Point {
    int x = 0;
    int y = 0;
    bool operator==(const Point&) const = default;
};

/// Foreground pixel farthest from the mask boundary, lowest (y, x) on ties.
std::optional<Point> deepest_point(const MaskGrid& mask);

}  // namespace piclick

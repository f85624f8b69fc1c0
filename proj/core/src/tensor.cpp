#include "vggfire/tensor.hpp"

#include <fmt/format.h>
#include <fmt/ranges.h>

namespace vggfire {

std::string shape_string(std::span<const std::size_t> shape) {
    return fmt::format("[{}]", fmt::join(shape, "x"));
}

std::size_t shape_numel(std::span<const std::size_t> shape) {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

std::size_t flat_index(std::span<const std::size_t> shape, std::span<const std::size_t> index) {
    if (index.size() != shape.size()) {
        throw ShapeError(fmt::format("index rank {} does not match shape {}", index.size(), shape_string(shape)));
    }
    std::size_t flat = 0;
    for (std::size_t axis = 0; axis < shape.size(); ++axis) {
        if (index[axis] >= shape[axis]) {
            throw ShapeError(fmt::format("index {} out of range on axis {} of shape {}", index[axis], axis,
                                         shape_string(shape)));
        }
        flat = flat * shape[axis] + index[axis];
    }
    return flat;
}

Shape unflatten_index(std::span<const std::size_t> shape, std::size_t flat) {
    if (flat >= shape_numel(shape)) {
        throw ShapeError(fmt::format("flat index {} out of range for shape {}", flat, shape_string(shape)));
    }
    Shape index(shape.size());
    for (std::size_t axis = shape.size(); axis-- > 0;) {
        index[axis] = flat % shape[axis];
        flat /= shape[axis];
    }
    return index;
}

} // namespace vggfire

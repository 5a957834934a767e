#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "fusenet/errors.hpp"

namespace fusenet {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& s) {
    std::size_t n = 1;
    for (std::size_t d : s) n *= d;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::string out = "[";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) out += "x";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

// Dense row-major 64-bit float tensor.  Rank is dynamic; the layer code
// states the rank it expects and validates on entry.
struct Tensor {
    Shape shape;
    std::vector<double> data;

    Tensor() = default;
    explicit Tensor(Shape s) : shape(std::move(s)), data(shape_numel(shape), 0.0) {}
    Tensor(Shape s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
        if (data.size() != shape_numel(shape))
            throw PreconditionError("tensor: payload of " + std::to_string(data.size())
                                    + " values does not fill shape " + shape_str(shape));
    }

    std::size_t numel() const { return data.size(); }
    std::size_t dim(std::size_t i) const { return shape[i]; }
    std::size_t rank() const { return shape.size(); }

    template <typename... Ix>
    std::size_t offset(Ix... ix) const {
        const std::size_t idx[] = {static_cast<std::size_t>(ix)...};
        std::size_t flat = 0;
        for (std::size_t i = 0; i < sizeof...(Ix); ++i) flat = flat * shape[i] + idx[i];
        return flat;
    }

    template <typename... Ix>
    double& at(Ix... ix) { return data[offset(ix...)]; }
    template <typename... Ix>
    double at(Ix... ix) const { return data[offset(ix...)]; }

    // Reinterpret the buffer under a new shape of equal element count.
    void reshape(Shape s) {
        if (shape_numel(s) != data.size())
            throw PreconditionError("reshape: " + shape_str(shape) + " to " + shape_str(s)
                                    + " changes element count");
        shape = std::move(s);
    }

    void fill(double v) { data.assign(data.size(), v); }
};

inline void check_finite(const Tensor& t, const std::string& context) {
    for (double v : t.data)
        if (!std::isfinite(v))
            throw NumericError(context + ": non-finite value encountered");
}

inline void check_finite(const std::vector<double>& v, const std::string& context) {
    for (double x : v)
        if (!std::isfinite(x))
            throw NumericError(context + ": non-finite value encountered");
}

inline bool same_shape(const Tensor& a, const Tensor& b) { return a.shape == b.shape; }

} // namespace fusenet

// Dense float32 arrays with explicit extents. Reductions that feed training
// decisions accumulate in float64.
#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "alp/rng.hpp"

namespace alp {

using Shape = std::vector<int>;

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << '[';
    for (size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
    os << ']';
    return os.str();
}

inline std::int64_t shape_numel(const Shape& s) {
    std::int64_t n = 1;
    for (int e : s) n *= e;
    return n;
}

struct ShapeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ContractError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline void check_same_shape(const Shape& a, const Shape& b, const char* where) {
    if (a != b)
        throw ShapeError(std::string(where) + ": shape mismatch " + shape_str(a) + " vs " +
                         shape_str(b));
}

// Row-major dense float32 buffer.
struct Array {
    Shape shape;
    std::vector<float> v;

    Array() = default;
    explicit Array(Shape s) : shape(std::move(s)), v(static_cast<size_t>(shape_numel(shape)), 0.f) {
        for (int e : shape)
            if (e <= 0) throw ShapeError("Array: non-positive extent " + shape_str(shape));
    }
    Array(Shape s, float fill) : Array(std::move(s)) { std::fill(v.begin(), v.end(), fill); }

    std::int64_t numel() const { return static_cast<std::int64_t>(v.size()); }
    int rank() const { return static_cast<int>(shape.size()); }
    int extent(int d) const { return shape[static_cast<size_t>(d)]; }

    float* data() { return v.data(); }
    const float* data() const { return v.data(); }

    float& operator[](std::int64_t i) { return v[static_cast<size_t>(i)]; }
    float operator[](std::int64_t i) const { return v[static_cast<size_t>(i)]; }

    // 2-D accessors; rank is the caller's responsibility.
    float& at2(int r, int c) { return v[static_cast<size_t>(r) * shape[1] + c]; }
    float at2(int r, int c) const { return v[static_cast<size_t>(r) * shape[1] + c]; }

    bool all_finite() const {
        for (float x : v)
            if (!std::isfinite(x)) return false;
        return true;
    }

    void fill(float x) { std::fill(v.begin(), v.end(), x); }

    static Array zeros(Shape s) { return Array(std::move(s)); }
    static Array full(Shape s, float x) { return Array(std::move(s), x); }

    static Array uniform(Shape s, Rng& rng, float lo, float hi) {
        Array a(std::move(s));
        for (auto& x : a.v) x = rng.uniform_f(lo, hi);
        return a;
    }

    static Array normal(Shape s, Rng& rng, float mean, float stddev) {
        Array a(std::move(s));
        for (auto& x : a.v) x = rng.normal_f(mean, stddev);
        return a;
    }
};

inline double sum64(const Array& a) {
    double s = 0.0;
    for (float x : a.v) s += x;
    return s;
}

inline double dot64(const Array& a, const Array& b) {
    check_same_shape(a.shape, b.shape, "dot64");
    double s = 0.0;
    for (size_t i = 0; i < a.v.size(); ++i) s += static_cast<double>(a.v[i]) * b.v[i];
    return s;
}

inline double sq_norm64(const Array& a) { return dot64(a, a); }

}  // namespace alp

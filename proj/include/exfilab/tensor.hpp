#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "exfilab/common.hpp"

namespace exfilab {

// Dense row-major tensor. Computation is carried at double precision;
// conversion to binary32 happens only at the serialization boundary.
struct Tensor {
    std::vector<size_t> dims;
    std::vector<double> data;

    Tensor() = default;
    Tensor(std::vector<size_t> d, std::vector<double> v) : dims(std::move(d)), data(std::move(v)) {
        require_shape(size() == data.size(), "tensor data length does not match dims");
    }

    static Tensor zeros(std::vector<size_t> d) {
        size_t n = 1;
        for (size_t x : d) n *= x;
        return Tensor(std::move(d), std::vector<double>(n, 0.0));
    }

    size_t size() const {
        size_t n = 1;
        for (size_t x : dims) n *= x;
        return dims.empty() ? 0 : n;
    }

    size_t rows() const { return dims.empty() ? 0 : dims[0]; }
    size_t cols() const { return dims.size() < 2 ? 1 : dims[1]; }

    double& at(size_t r, size_t c) { return data[r * cols() + c]; }
    double at(size_t r, size_t c) const { return data[r * cols() + c]; }

    bool all_finite() const {
        for (double v : data)
            if (!std::isfinite(v)) return false;
        return true;
    }
};

inline std::string dims_str(const std::vector<size_t>& dims) {
    std::string s = "[";
    for (size_t i = 0; i < dims.size(); ++i) s += (i ? "x" : "") + std::to_string(dims[i]);
    return s + "]";
}

}  // namespace exfilab

#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace dpfed {

// Dense row-major matrix of doubles. Just enough surface for the model and
// data pipeline; not a linear-algebra library.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0)
        : rows(r), cols(c), data(r * c, fill) {}

    double& at(std::size_t i, std::size_t j) { return data[i * cols + j]; }
    double at(std::size_t i, std::size_t j) const { return data[i * cols + j]; }
    const double* row(std::size_t i) const { return data.data() + i * cols; }
    double* row(std::size_t i) { return data.data() + i * cols; }
    bool empty() const { return rows == 0 || cols == 0; }
};

inline bool all_finite(const std::vector<double>& v) {
    for (double x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

inline double l2_norm(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

// Order-invariant sum of doubles. Each addend is quantized to a signed
// 64.64 fixed-point value and accumulated in a 128-bit integer, so the
// result is exactly associative and commutative: permuting the inputs
// gives a bitwise-identical sum. Valid for |x| < 2^52 and up to ~2^57
// addends, far beyond anything the simulator produces.
class OrderInvariantSum {
public:
    void add(double x) {
        ++count_;
        if (x == 0.0) return;
        int e = 0;
        const double m = std::frexp(x, &e);  // x = m * 2^e, |m| in [0.5, 1)
        auto mant = static_cast<std::int64_t>(std::ldexp(m, 53));  // exact
        const int shift = e - 53 + 64;
        __int128 fixed = 0;
        if (shift >= 0) {
            fixed = static_cast<__int128>(mant) << shift;
        } else if (shift > -64) {
            fixed = static_cast<__int128>(mant >> -shift);
        }
        acc_ += fixed;
        ++count_;
    }

    double total() const {
        return std::ldexp(static_cast<double>(acc_), -64);
    }

    double mean() const {
        if (count_ == 0) throw std::invalid_argument("mean of empty sum");
        return total() / static_cast<double>(count_);
    }

    std::size_t count() const { return count_; }

private:
    __int128 acc_ = 0;
    std::size_t count_ = 0;
};

}  // namespace dpfed

#pragma once

#include "pipps/common.hpp"

#include <algorithm>
#include <functional>

namespace pipps::fd {

// Central-difference Jacobian of f at x, one column per input coordinate.
inline Matrix jacobian(const std::function<Vector(const Vector&)>& f, const Vector& x, double h = 1e-6) {
    const Vector f0 = f(x);
    Matrix j(f0.size(), x.size());
    for (Eigen::Index k = 0; k < x.size(); ++k) {
        Vector xp = x;
        Vector xm = x;
        xp[k] += h;
        xm[k] -= h;
        j.col(k) = (f(xp) - f(xm)) / (2.0 * h);
    }
    return j;
}

inline Vector gradient(const std::function<double(const Vector&)>& f, const Vector& x, double h = 1e-6) {
    return jacobian([&](const Vector& v) { return Vector::Constant(1, f(v)); }, x, h).row(0).transpose();
}

// ||a - b|| / max(||b||, floor)
inline double rel_err(const Matrix& a, const Matrix& b, double floor = 1e-8) {
    return (a - b).norm() / std::max(b.norm(), floor);
}

}  // namespace pipps::fd

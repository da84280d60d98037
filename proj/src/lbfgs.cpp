#include "pipps/lbfgs.hpp"

#include <cmath>
#include <deque>
#include <limits>

namespace pipps {

namespace {

Vector project(const Vector& x, const Vector& lower, const Vector& upper) {
    return x.cwiseMax(lower).cwiseMin(upper);
}

// Gradient with components removed where a bound is active and the descent
// direction would leave the box.
Vector free_gradient(const Vector& x, const Vector& g, const Vector& lower, const Vector& upper) {
    Vector out = g;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        if ((x[i] <= lower[i] && g[i] > 0.0) || (x[i] >= upper[i] && g[i] < 0.0)) {
            out[i] = 0.0;
        }
    }
    return out;
}

}  // namespace

LbfgsResult minimize_lbfgs_box(const Objective& f, Vector x0, const Vector& lower, const Vector& upper,
                               const LbfgsOptions& options) {
    require(x0.size() == lower.size() && x0.size() == upper.size(), "lbfgs: bound dimension mismatch");
    require((lower.array() <= upper.array()).all(), "lbfgs: lower bound above upper bound");

    LbfgsResult result;
    Vector x = project(x0, lower, upper);
    Vector g(x.size());
    double fx = f(x, g);
    if (!std::isfinite(fx) || !g.allFinite()) {
        result.x = x;
        result.value = fx;
        result.failed = true;
        return result;
    }

    std::deque<Vector> s_hist;
    std::deque<Vector> y_hist;
    std::deque<double> rho_hist;

    for (int iter = 0; iter < options.max_iterations; ++iter) {
        result.iterations = iter + 1;
        const Vector pg = free_gradient(x, g, lower, upper);
        if (pg.lpNorm<Eigen::Infinity>() < options.gradient_tolerance) {
            result.converged = true;
            break;
        }

        // Two-loop recursion on the free subspace.
        Vector q = pg;
        std::vector<double> a(s_hist.size());
        for (int k = static_cast<int>(s_hist.size()) - 1; k >= 0; --k) {
            a[k] = rho_hist[k] * s_hist[k].dot(q);
            q -= a[k] * y_hist[k];
        }
        if (!s_hist.empty()) {
            q *= s_hist.back().dot(y_hist.back()) / y_hist.back().squaredNorm();
        }
        for (std::size_t k = 0; k < s_hist.size(); ++k) {
            const double b = rho_hist[k] * y_hist[k].dot(q);
            q += (a[k] - b) * s_hist[k];
        }
        Vector d = -q;
        for (Eigen::Index i = 0; i < d.size(); ++i) {
            if (pg[i] == 0.0 && g[i] != 0.0) {
                d[i] = 0.0;
            }
        }
        if (d.dot(pg) >= 0.0) {
            d = -pg;
            s_hist.clear();
            y_hist.clear();
            rho_hist.clear();
        }

        double step = s_hist.empty() ? std::min(1.0, 1.0 / pg.norm()) : 1.0;
        Vector x_new;
        Vector g_new(x.size());
        double f_new = std::numeric_limits<double>::infinity();
        bool accepted = false;
        for (int ls = 0; ls < 40; ++ls) {
            x_new = project(x + step * d, lower, upper);
            f_new = f(x_new, g_new);
            if (std::isfinite(f_new) && g_new.allFinite() && f_new <= fx + 1e-4 * pg.dot(x_new - x)) {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if (!accepted) {
            break;
        }

        const Vector s = x_new - x;
        const Vector y = g_new - g;
        const double sy = s.dot(y);
        if (sy > 1e-12 * s.norm() * y.norm()) {
            s_hist.push_back(s);
            y_hist.push_back(y);
            rho_hist.push_back(1.0 / sy);
            if (static_cast<int>(s_hist.size()) > options.history) {
                s_hist.pop_front();
                y_hist.pop_front();
                rho_hist.pop_front();
            }
        }

        const double change = fx - f_new;
        x = x_new;
        g = g_new;
        fx = f_new;
        if (change <= options.relative_tolerance * (1.0 + std::abs(fx))) {
            result.converged = true;
            break;
        }
    }

    result.x = x;
    result.value = fx;
    return result;
}

}  // namespace pipps

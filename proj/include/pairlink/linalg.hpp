#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

namespace pairlink {

// Partial-pivot Gaussian elimination on a dense n x n system (n is tiny
// here: 2-4). Returns false on a singular matrix; solution lands in rhs.
inline bool solve_dense(std::vector<double>& m, std::vector<double>& rhs, int n) {
    for (int col = 0; col < n; ++col) {
        int pivot = col;
        for (int r = col + 1; r < n; ++r)
            if (std::abs(m[r * n + col]) > std::abs(m[pivot * n + col]))
                pivot = r;
        if (std::abs(m[pivot * n + col]) < 1e-300)
            return false;
        if (pivot != col) {
            for (int c = 0; c < n; ++c)
                std::swap(m[pivot * n + c], m[col * n + c]);
            std::swap(rhs[pivot], rhs[col]);
        }
        const double inv = 1.0 / m[col * n + col];
        for (int r = col + 1; r < n; ++r) {
            const double f = m[r * n + col] * inv;
            if (f == 0.0)
                continue;
            for (int c = col; c < n; ++c)
                m[r * n + c] -= f * m[col * n + c];
            rhs[r] -= f * rhs[col];
        }
    }
    for (int r = n - 1; r >= 0; --r) {
        double v = rhs[r];
        for (int c = r + 1; c < n; ++c)
            v -= m[r * n + c] * rhs[c];
        rhs[r] = v / m[r * n + r];
    }
    return true;
}

// Inverse via n solves against unit vectors; used for fit covariances.
inline bool invert_dense(const std::vector<double>& m, std::vector<double>& inv, int n) {
    inv.assign(static_cast<std::size_t>(n) * n, 0.0);
    for (int col = 0; col < n; ++col) {
        std::vector<double> a = m;
        std::vector<double> e(n, 0.0);
        e[col] = 1.0;
        if (!solve_dense(a, e, n))
            return false;
        for (int r = 0; r < n; ++r)
            inv[r * n + col] = e[r];
    }
    return true;
}

} // namespace pairlink

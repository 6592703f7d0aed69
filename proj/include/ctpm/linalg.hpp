#pragma once

#include <cmath>
#include <vector>

#include "ctpm/common.hpp"

namespace ctpm::linalg {

using Matrix = std::vector<std::vector<double>>;

struct SymEigen {
    std::vector<double> values;
    Matrix vectors;  // column k is the eigenvector for values[k]
};

// Cyclic Jacobi rotations; fine for the small normal-equation systems here.
inline SymEigen jacobi_eigen(Matrix a, int max_sweeps = 100) {
    const std::size_t n = a.size();
    for (const auto& row : a) require(row.size() == n, "jacobi_eigen: matrix not square");
    Matrix v(n, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < n; ++i) v[i][i] = 1.0;

    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
        double off = 0.0, diag = 0.0;
        for (std::size_t p = 0; p < n; ++p) {
            diag += a[p][p] * a[p][p];
            for (std::size_t q = p + 1; q < n; ++q) off += a[p][q] * a[p][q];
        }
        if (std::sqrt(off) <= 1e-14 * (1.0 + std::sqrt(diag))) break;

        for (std::size_t p = 0; p < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                if (a[p][q] == 0.0) continue;
                const double theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                                 (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (std::size_t i = 0; i < n; ++i) {
                    const double aip = a[i][p], aiq = a[i][q];
                    a[i][p] = c * aip - s * aiq;
                    a[i][q] = s * aip + c * aiq;
                }
                for (std::size_t i = 0; i < n; ++i) {
                    const double api = a[p][i], aqi = a[q][i];
                    a[p][i] = c * api - s * aqi;
                    a[q][i] = s * api + c * aqi;
                }
                for (std::size_t i = 0; i < n; ++i) {
                    const double vip = v[i][p], viq = v[i][q];
                    v[i][p] = c * vip - s * viq;
                    v[i][q] = s * vip + c * viq;
                }
            }
        }
    }
    SymEigen out;
    out.values.resize(n);
    for (std::size_t i = 0; i < n; ++i) out.values[i] = a[i][i];
    out.vectors = std::move(v);
    return out;
}

// Solves A x = b for symmetric A through the eigendecomposition, zeroing
// near-null directions (pseudo-inverse), so rank-deficient normal equations
// return the minimum-norm solution instead of blowing up.
inline std::vector<double> solve_symmetric(const Matrix& a, const std::vector<double>& b) {
    const std::size_t n = a.size();
    require(b.size() == n, "solve_symmetric: dimension mismatch");
    const SymEigen eig = jacobi_eigen(a);
    double lmax = 0.0;
    for (double l : eig.values) lmax = std::max(lmax, std::fabs(l));
    const double tol = lmax * 1e-12;
    std::vector<double> x(n, 0.0);
    for (std::size_t k = 0; k < n; ++k) {
        if (std::fabs(eig.values[k]) <= tol) continue;
        double proj = 0.0;
        for (std::size_t i = 0; i < n; ++i) proj += eig.vectors[i][k] * b[i];
        proj /= eig.values[k];
        for (std::size_t i = 0; i < n; ++i) x[i] += eig.vectors[i][k] * proj;
    }
    return x;
}

// Ordinary least squares beta for rows X and targets y via normal equations.
inline std::vector<double> least_squares(const Matrix& rows, const std::vector<double>& y) {
    require(!rows.empty(), "least_squares: no rows");
    require(rows.size() == y.size(), "least_squares: row/target count mismatch");
    const std::size_t d = rows.front().size();
    Matrix ata(d, std::vector<double>(d, 0.0));
    std::vector<double> atb(d, 0.0);
    for (std::size_t r = 0; r < rows.size(); ++r) {
        require(rows[r].size() == d, "least_squares: ragged rows");
        for (std::size_t i = 0; i < d; ++i) {
            atb[i] += rows[r][i] * y[r];
            for (std::size_t j = i; j < d; ++j) ata[i][j] += rows[r][i] * rows[r][j];
        }
    }
    for (std::size_t i = 0; i < d; ++i) {
        for (std::size_t j = 0; j < i; ++j) ata[i][j] = ata[j][i];
    }
    return solve_symmetric(ata, atb);
}

}  // namespace ctpm::linalg

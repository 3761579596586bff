#pragma once

// Minimum-cost perfect matching on a square cost matrix (Hungarian method
// with potentials, O(n^3)).

#include <cstdint>
#include <limits>
#include <vector>

#include "errors.hpp"
#include "matrix.hpp"

namespace nalign {

// Returns col_of_row: row r is matched to column col_of_row[r].
inline std::vector<std::size_t> min_cost_assignment(const Matrix<std::int64_t>& cost) {
    const std::size_t n = cost.rows();
    if (cost.cols() != n) throw ShapeError("assignment needs a square cost matrix");
    if (n == 0) return {};
    constexpr std::int64_t inf = std::numeric_limits<std::int64_t>::max() / 4;
    // 1-based internal arrays; index 0 is the virtual root column.
    std::vector<std::int64_t> u(n + 1, 0), v(n + 1, 0);
    std::vector<std::size_t> row_of_col(n + 1, 0), way(n + 1, 0);
    for (std::size_t i = 1; i <= n; ++i) {
        row_of_col[0] = i;
        std::size_t j0 = 0;
        std::vector<std::int64_t> minv(n + 1, inf);
        std::vector<bool> used(n + 1, false);
        do {
            used[j0] = true;
            const std::size_t i0 = row_of_col[j0];
            std::int64_t delta = inf;
            std::size_t j1 = 0;
            for (std::size_t j = 1; j <= n; ++j) {
                if (used[j]) continue;
                const std::int64_t cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (std::size_t j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[row_of_col[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (row_of_col[j0] != 0);
        do {
            const std::size_t j1 = way[j0];
            row_of_col[j0] = row_of_col[j1];
            j0 = j1;
        } while (j0 != 0);
    }
    std::vector<std::size_t> col_of_row(n);
    for (std::size_t j = 1; j <= n; ++j) col_of_row[row_of_col[j] - 1] = j - 1;
    return col_of_row;
}

inline std::int64_t assignment_cost(const Matrix<std::int64_t>& cost, const std::vector<std::size_t>& col_of_row) {
    std::int64_t total = 0;
    for (std::size_t r = 0; r < col_of_row.size(); ++r) total += cost(r, col_of_row[r]);
    return total;
}

}  // namespace nalign

#pragma once

// Centralized numeric tolerances shared across solvers.
namespace rationlab::tol {

inline constexpr double root = 1e-10;        // scalar root finding (bisection brackets)
inline constexpr double sum_constraint = 1e-9;   // adding-up / feasibility checks
inline constexpr double quadrature = 1e-10;  // adaptive quadrature absolute error
inline constexpr double tie = 1e-12;         // cost ties and cap subset-sum degeneracy
inline constexpr double kkt = 1e-8;          // stationarity residuals of the allocators

}  // namespace rationlab::tol

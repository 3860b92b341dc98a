#include "elas/numerics/init.hpp"

#include <cmath>
#include <numbers>

namespace elas {

template <typename T>
BasicMatrix<T> uniform_matrix(std::size_t rows, std::size_t cols, double lo, double hi,
                              std::uint64_t seed) {
  std::mt19937_64 engine(seed);
  BasicMatrix<T> m(rows, cols);
  for (T& v : m.values()) v = static_cast<T>(lo + (hi - lo) * unit_uniform(engine));
  return m;
}

template <typename T>
BasicMatrix<T> xavier_init(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  if (rows == 0 || cols == 0) throw ContractError("xavier_init: empty shape");
  const double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
  BasicMatrix<T> m = uniform_matrix<T>(rows, cols, -bound, bound, seed);
  // Rounding to float can land one ulp outside the bound.
  const T b = static_cast<T>(bound);
  for (T& v : m.values()) v = std::clamp(v, -b, b);
  return m;
}

template <typename T>
BasicMatrix<T> normal_matrix(std::size_t rows, std::size_t cols, double stddev,
                             std::uint64_t seed) {
  std::mt19937_64 engine(seed);
  BasicMatrix<T> m(rows, cols);
  auto values = m.values();
  for (std::size_t i = 0; i < values.size(); i += 2) {
    const double u1 = 1.0 - unit_uniform(engine);  // (0, 1]
    const double u2 = unit_uniform(engine);
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    values[i] = static_cast<T>(stddev * radius * std::cos(angle));
    if (i + 1 < values.size()) values[i + 1] = static_cast<T>(stddev * radius * std::sin(angle));
  }
  return m;
}

template Matrix xavier_init(std::size_t, std::size_t, std::uint64_t);
template MatrixD xavier_init(std::size_t, std::size_t, std::uint64_t);
template Matrix uniform_matrix(std::size_t, std::size_t, double, double, std::uint64_t);
template MatrixD uniform_matrix(std::size_t, std::size_t, double, double, std::uint64_t);
template Matrix normal_matrix(std::size_t, std::size_t, double, std::uint64_t);
template MatrixD normal_matrix(std::size_t, std::size_t, double, std::uint64_t);

}  // namespace elas

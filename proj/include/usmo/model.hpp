#ifndef USMO_MODEL_HPP
#define USMO_MODEL_HPP

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "usmo/kernel.hpp"

namespace usmo {

// Trained classifier f(x) = sum_i alpha_i k(x, x_i) + bias. Self-contained:
// support vectors are stored inline. Immutable after construction;
// prediction is pure.
struct Model {
  KernelSpec kernel{};
  double bias = 0;
  std::size_t dim = 0;
  std::vector<double> alpha;    // one per support vector, nonzero
  std::vector<double> vectors;  // alpha.size() x dim, row-major

  std::size_t num_support() const { return alpha.size(); }

  std::span<const double> support_vector(std::size_t k) const {
    return {vectors.data() + k * dim, dim};
  }

  double predict_score(std::span<const double> x) const;

  // sign of the score; a score of exactly 0 maps to +1
  int predict_label(std::span<const double> x) const;
};

// Text format, 17 significant digits, so load(save(m)) is bit-exact:
//   usmo-model v1
//   kernel linear | kernel gaussian <scale>
//   bias <float>
//   dim <d>
//   nsv <count>
//   <alpha> <idx>:<val> ...        (1-based sparse indices, ascending)
void save_model(const Model& m, std::ostream& out);
void save_model_file(const Model& m, const std::string& path);
Model load_model(std::istream& in);
Model load_model_file(const std::string& path);

}  // namespace usmo

#endif

#ifndef USMO_KERNEL_HPP
#define USMO_KERNEL_HPP

#include <cstddef>
#include <cstdint>
#include <list>
#include <span>
#include <unordered_map>
#include <vector>

#include "usmo/dataset.hpp"

namespace usmo {

enum class KernelKind { Linear, Gaussian };

struct KernelSpec {
  KernelKind kind = KernelKind::Linear;
  double scale = 1.0;  // Gaussian only, > 0

  void validate() const;
};

// Linear: <x, y>. Gaussian: exp(-|x - y|^2 / (2 scale^2)).
double eval_kernel(const KernelSpec& spec, std::span<const double> x,
                   std::span<const double> y);

// LRU cache of full kernel rows. A row for sample i holds k(x_i, x_j) for
// every j in the dataset; the full Gram matrix is never materialized.
// Single-writer: the solver serializes all calls.
class GramCache {
 public:
  GramCache(KernelSpec spec, std::size_t capacity);

  // Returned span stays valid until the next row() / set_capacity() call,
  // except that with capacity >= 2 the previously fetched row survives one
  // more fetch (LRU never evicts the most recent row).
  std::span<const double> row(const Dataset& ds, std::size_t i);

  void set_capacity(std::size_t capacity);

  std::size_t capacity() const { return capacity_; }
  std::size_t rows_cached() const { return rows_.size(); }
  std::size_t peak_rows() const { return peak_rows_; }
  std::uint64_t evaluations() const { return evaluations_; }
  std::uint64_t misses() const { return misses_; }
  std::uint64_t hits() const { return hits_; }

 private:
  struct Entry {
    std::vector<double> values;
    std::list<std::size_t>::iterator lru_pos;
  };

  void evict_to_capacity();

  KernelSpec spec_;
  std::size_t capacity_;
  std::list<std::size_t> lru_;  // front = most recently used
  std::unordered_map<std::size_t, Entry> rows_;
  std::size_t peak_rows_ = 0;
  std::uint64_t evaluations_ = 0;
  std::uint64_t misses_ = 0;
  std::uint64_t hits_ = 0;
};

}  // namespace usmo

#endif

#include "usmo/kernel.hpp"

#include <cmath>

#include "usmo/errors.hpp"

namespace usmo {

void KernelSpec::validate() const {
  if (kind == KernelKind::Gaussian && !(scale > 0))
    throw config_error("gaussian kernel scale must be > 0");
}

double eval_kernel(const KernelSpec& spec, std::span<const double> x,
                   std::span<const double> y) {
  if (x.size() != y.size() || x.empty())
    throw input_error("kernel arguments must share a dimension >= 1");
  if (spec.kind == KernelKind::Linear) {
    double dot = 0;
    for (std::size_t i = 0; i < x.size(); ++i) dot += x[i] * y[i];
    return dot;
  }
  double dist2 = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = x[i] - y[i];
    dist2 += d * d;
  }
  return std::exp(-dist2 / (2.0 * spec.scale * spec.scale));
}

GramCache::GramCache(KernelSpec spec, std::size_t capacity)
    : spec_(spec), capacity_(capacity == 0 ? 1 : capacity) {
  spec_.validate();
}

void GramCache::set_capacity(std::size_t capacity) {
  capacity_ = capacity == 0 ? 1 : capacity;
  evict_to_capacity();
}

void GramCache::evict_to_capacity() {
  while (rows_.size() > capacity_) {
    rows_.erase(lru_.back());
    lru_.pop_back();
  }
}

std::span<const double> GramCache::row(const Dataset& ds, std::size_t i) {
  if (i >= ds.size()) throw input_error("gram row index out of range");
  if (auto it = rows_.find(i); it != rows_.end()) {
    ++hits_;
    lru_.splice(lru_.begin(), lru_, it->second.lru_pos);
    return it->second.values;
  }
  ++misses_;
  const std::size_t m = ds.size();
  std::vector<double> values(m);
  auto xi = ds.sample(i);
  for (std::size_t j = 0; j < m; ++j)
    values[j] = eval_kernel(spec_, xi, ds.sample(j));
  evaluations_ += m;

  lru_.push_front(i);
  auto [it, inserted] = rows_.emplace(i, Entry{std::move(values), lru_.begin()});
  (void)inserted;
  evict_to_capacity();
  peak_rows_ = std::max(peak_rows_, rows_.size());
  return it->second.values;
}

}  // namespace usmo

#ifndef USMO_DATASET_HPP
#define USMO_DATASET_HPP

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace usmo {

// Training input for the PU solver: p labeled-positive samples followed by
// n unlabeled ones, stored row-major. hidden_labels (one per unlabeled
// sample, +1/-1) exist only for transductive evaluation; the solver never
// reads them.
struct Dataset {
  std::size_t num_positive = 0;
  std::size_t num_unlabeled = 0;
  std::size_t dim = 0;
  std::vector<double> features;
  std::vector<int> hidden_labels;

  std::size_t size() const { return num_positive + num_unlabeled; }

  std::span<const double> sample(std::size_t i) const {
    return {features.data() + i * dim, dim};
  }

  // unlabeled index u in [0, n) -> global sample index
  std::size_t unlabeled_index(std::size_t u) const { return num_positive + u; }
};

struct LabeledDataset {
  std::size_t dim = 0;
  std::vector<double> features;
  std::vector<int> labels;

  std::size_t size() const { return labels.size(); }

  std::span<const double> sample(std::size_t i) const {
    return {features.data() + i * dim, dim};
  }
};

// LIBSVM text format: "<label> <idx>:<val> ...", 1-based strictly ascending
// indices; dimension is the largest index seen; absent indices are zero.
LabeledDataset load_libsvm(std::istream& in);
LabeledDataset load_libsvm_file(const std::string& path);
void write_libsvm(std::ostream& out, const LabeledDataset& ds);

// Numeric CSV with one label column; optional header row is skipped.
LabeledDataset load_csv(std::istream& in, std::size_t label_column,
                        bool has_header);
LabeledDataset load_csv_file(const std::string& path, std::size_t label_column,
                             bool has_header);

// Dense feature rows without labels (CSV without a label column, or LIBSVM
// with the mandatory label token ignored). Used by `predict`.
LabeledDataset load_features_csv(std::istream& in, bool has_header);

// One-vs-all mapping: label == target -> +1, everything else -> -1.
void binarize_labels(LabeledDataset& ds, int target_class);

struct PuSplit {
  Dataset data;
  double pi_hat = 0;  // class proportion of the source data
};

// Uniformly samples ceil(fraction * #positives) positives as the labeled
// set; every remaining sample becomes unlabeled with its true label hidden.
// Deterministic for a fixed seed.
PuSplit make_pu_split(const LabeledDataset& ds, double labeled_fraction,
                      std::uint64_t seed);

// F = 2TP / (2TP + FP + FN); 0 when the denominator is 0.
double f_measure(std::span<const int> predicted, std::span<const int> truth);

}  // namespace usmo

#endif

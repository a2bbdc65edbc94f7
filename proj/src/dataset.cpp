#include "usmo/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "usmo/errors.hpp"
#include "usmo/rng.hpp"

namespace usmo {

namespace {

std::string at_line(std::size_t line_no, const std::string& what) {
  return "line " + std::to_string(line_no) + ": " + what;
}

bool parse_double(std::string_view tok, double& out) {
  if (tok.empty()) return false;
  // from_chars rejects a leading '+', which labels commonly carry
  if (tok.front() == '+') tok.remove_prefix(1);
  const char* end = tok.data() + tok.size();
  auto [ptr, ec] = std::from_chars(tok.data(), end, out);
  return ec == std::errc() && ptr == end;
}

bool parse_index(std::string_view tok, std::size_t& out) {
  if (tok.empty()) return false;
  const char* end = tok.data() + tok.size();
  auto [ptr, ec] = std::from_chars(tok.data(), end, out);
  return ec == std::errc() && ptr == end;
}

bool parse_int_label(std::string_view tok, int& out) {
  double v = 0;
  if (!parse_double(tok, v)) return false;
  if (!std::isfinite(v) || v != std::floor(v)) return false;
  out = static_cast<int>(v);
  return true;
}

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> toks;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i])))
      ++i;
    std::size_t start = i;
    while (i < line.size() &&
           !std::isspace(static_cast<unsigned char>(line[i])))
      ++i;
    if (i > start) toks.push_back(line.substr(start, i - start));
  }
  return toks;
}

struct SparseRow {
  int label = 0;
  std::vector<std::pair<std::size_t, double>> entries;  // 1-based indices
};

void densify(const std::vector<SparseRow>& rows, std::size_t dim,
             LabeledDataset& ds) {
  ds.dim = dim;
  ds.features.assign(rows.size() * dim, 0.0);
  ds.labels.resize(rows.size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    ds.labels[r] = rows[r].label;
    for (const auto& [idx, val] : rows[r].entries)
      ds.features[r * dim + (idx - 1)] = val;
  }
}

}  // namespace

LabeledDataset load_libsvm(std::istream& in) {
  std::vector<SparseRow> rows;
  std::size_t dim = 0;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto toks = split_ws(line);
    if (toks.empty()) continue;
    SparseRow row;
    if (!parse_int_label(toks[0], row.label))
      throw input_error(at_line(line_no, "bad label token '" +
                                             std::string(toks[0]) + "'"));
    std::size_t prev = 0;
    for (std::size_t t = 1; t < toks.size(); ++t) {
      auto tok = toks[t];
      auto colon = tok.find(':');
      if (colon == std::string_view::npos)
        throw input_error(
            at_line(line_no, "feature token '" + std::string(tok) +
                                 "' is missing ':'"));
      std::size_t idx = 0;
      double val = 0;
      if (!parse_index(tok.substr(0, colon), idx) || idx == 0)
        throw input_error(at_line(line_no, "bad feature index in '" +
                                               std::string(tok) + "'"));
      if (!parse_double(tok.substr(colon + 1), val))
        throw input_error(at_line(line_no, "bad feature value in '" +
                                               std::string(tok) + "'"));
      if (idx <= prev)
        throw input_error(
            at_line(line_no, "feature indices must be strictly ascending"));
      prev = idx;
      row.entries.emplace_back(idx, val);
    }
    dim = std::max(dim, prev);
    rows.push_back(std::move(row));
  }
  LabeledDataset ds;
  densify(rows, dim, ds);
  return ds;
}

LabeledDataset load_libsvm_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw input_error("cannot open '" + path + "'");
  return load_libsvm(in);
}

void write_libsvm(std::ostream& out, const LabeledDataset& ds) {
  char buf[64];
  for (std::size_t r = 0; r < ds.size(); ++r) {
    out << ds.labels[r];
    auto x = ds.sample(r);
    for (std::size_t j = 0; j < x.size(); ++j) {
      if (x[j] == 0.0) continue;
      std::snprintf(buf, sizeof(buf), " %zu:%.17g", j + 1, x[j]);
      out << buf;
    }
    out << '\n';
  }
}

namespace {

std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= line.size(); ++i) {
    if (i == line.size() || line[i] == ',') {
      cells.push_back(line.substr(start, i - start));
      start = i + 1;
    }
  }
  return cells;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front())))
    s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back())))
    s.remove_suffix(1);
  return s;
}

LabeledDataset load_csv_impl(std::istream& in, bool has_label,
                             std::size_t label_column, bool has_header) {
  LabeledDataset ds;
  std::string line;
  std::size_t line_no = 0;
  std::size_t ncols = 0;
  bool skipped_header = !has_header;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    if (!skipped_header) {
      skipped_header = true;
      continue;
    }
    auto cells = split_csv(line);
    if (ncols == 0) {
      ncols = cells.size();
      if (has_label && label_column >= ncols)
        throw input_error(at_line(
            line_no, "label column " + std::to_string(label_column) +
                         " out of range for " + std::to_string(ncols) +
                         " columns"));
      ds.dim = has_label ? ncols - 1 : ncols;
      if (ds.dim == 0)
        throw input_error(at_line(line_no, "no feature columns"));
    } else if (cells.size() != ncols) {
      throw input_error(at_line(line_no, "expected " + std::to_string(ncols) +
                                             " columns, found " +
                                             std::to_string(cells.size())));
    }
    int label = 1;
    std::vector<double> x;
    x.reserve(ds.dim);
    for (std::size_t cidx = 0; cidx < cells.size(); ++cidx) {
      auto cell = trim(cells[cidx]);
      if (has_label && cidx == label_column) {
        if (!parse_int_label(cell, label))
          throw input_error(
              at_line(line_no, "bad label in column " + std::to_string(cidx)));
        continue;
      }
      double v = 0;
      if (!parse_double(cell, v))
        throw input_error(at_line(line_no, "non-numeric cell in column " +
                                               std::to_string(cidx)));
      x.push_back(v);
    }
    ds.labels.push_back(label);
    ds.features.insert(ds.features.end(), x.begin(), x.end());
  }
  return ds;
}

}  // namespace

LabeledDataset load_csv(std::istream& in, std::size_t label_column,
                        bool has_header) {
  return load_csv_impl(in, true, label_column, has_header);
}

LabeledDataset load_csv_file(const std::string& path, std::size_t label_column,
                             bool has_header) {
  std::ifstream in(path);
  if (!in) throw input_error("cannot open '" + path + "'");
  return load_csv(in, label_column, has_header);
}

LabeledDataset load_features_csv(std::istream& in, bool has_header) {
  return load_csv_impl(in, false, 0, has_header);
}

void binarize_labels(LabeledDataset& ds, int target_class) {
  for (auto& y : ds.labels) y = (y == target_class) ? 1 : -1;
}

PuSplit make_pu_split(const LabeledDataset& ds, double labeled_fraction,
                      std::uint64_t seed) {
  if (!(labeled_fraction > 0.0) || labeled_fraction > 1.0)
    throw input_error("labeled fraction must be in (0, 1]");
  std::vector<std::size_t> positives;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    if (ds.labels[i] == 1)
      positives.push_back(i);
    else if (ds.labels[i] != -1)
      throw input_error("labels must be +1/-1 (use a one-vs-all target)");
  }
  if (positives.empty()) throw input_error("no positive samples to label");

  const std::size_t want = static_cast<std::size_t>(
      std::ceil(labeled_fraction * static_cast<double>(positives.size())));
  SplitMix64 rng(seed);
  // partial Fisher-Yates: the first `want` entries are the labeled draw
  for (std::size_t i = 0; i < want && i + 1 < positives.size(); ++i) {
    std::size_t j = i + rng.below(positives.size() - i);
    std::swap(positives[i], positives[j]);
  }
  std::vector<unsigned char> is_labeled(ds.size(), 0);
  for (std::size_t i = 0; i < want; ++i) is_labeled[positives[i]] = 1;

  PuSplit out;
  out.pi_hat = static_cast<double>(positives.size()) /
               static_cast<double>(ds.size());
  Dataset& d = out.data;
  d.dim = ds.dim;
  d.num_positive = want;
  d.num_unlabeled = ds.size() - want;
  d.features.reserve(ds.features.size());
  // labeled positives first (in draw order), the rest in source order
  for (std::size_t i = 0; i < want; ++i) {
    auto x = ds.sample(positives[i]);
    d.features.insert(d.features.end(), x.begin(), x.end());
  }
  for (std::size_t i = 0; i < ds.size(); ++i) {
    if (is_labeled[i]) continue;
    auto x = ds.sample(i);
    d.features.insert(d.features.end(), x.begin(), x.end());
    d.hidden_labels.push_back(ds.labels[i]);
  }
  return out;
}

double f_measure(std::span<const int> predicted, std::span<const int> truth) {
  if (predicted.size() != truth.size())
    throw input_error("prediction/label length mismatch");
  std::size_t tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (predicted[i] == 1 && truth[i] == 1) ++tp;
    if (predicted[i] == 1 && truth[i] == -1) ++fp;
    if (predicted[i] == -1 && truth[i] == 1) ++fn;
  }
  const double denom = static_cast<double>(2 * tp + fp + fn);
  return denom == 0 ? 0.0 : 2.0 * static_cast<double>(tp) / denom;
}

}  // namespace usmo

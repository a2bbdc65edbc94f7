#include "usmo/model.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <vector>

#include "usmo/errors.hpp"

namespace usmo {

double Model::predict_score(std::span<const double> x) const {
  if (x.size() != dim)
    throw input_error("probe dimension does not match the model");
  double f = bias;
  for (std::size_t k = 0; k < num_support(); ++k)
    f += alpha[k] * eval_kernel(kernel, x, support_vector(k));
  return f;
}

int Model::predict_label(std::span<const double> x) const {
  return predict_score(x) < 0 ? -1 : 1;
}

namespace {

std::string fmt17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

[[noreturn]] void parse_fail(std::size_t line_no, const std::string& what) {
  throw input_error("model line " + std::to_string(line_no) + ": " + what);
}

bool parse_double_tok(std::string_view tok, double& out) {
  if (tok.empty()) return false;
  if (tok.front() == '+') tok.remove_prefix(1);
  const char* end = tok.data() + tok.size();
  auto [ptr, ec] = std::from_chars(tok.data(), end, out);
  return ec == std::errc() && ptr == end;
}

}  // namespace

void save_model(const Model& m, std::ostream& out) {
  out << "usmo-model v1\n";
  if (m.kernel.kind == KernelKind::Linear)
    out << "kernel linear\n";
  else
    out << "kernel gaussian " << fmt17(m.kernel.scale) << '\n';
  out << "bias " << fmt17(m.bias) << '\n';
  out << "dim " << m.dim << '\n';
  out << "nsv " << m.num_support() << '\n';
  for (std::size_t k = 0; k < m.num_support(); ++k) {
    out << fmt17(m.alpha[k]);
    auto x = m.support_vector(k);
    for (std::size_t j = 0; j < x.size(); ++j) {
      if (x[j] == 0.0) continue;
      out << ' ' << (j + 1) << ':' << fmt17(x[j]);
    }
    out << '\n';
  }
}

void save_model_file(const Model& m, const std::string& path) {
  std::ofstream out(path, std::ios::binary);  // binary keeps LF endings
  if (!out) throw input_error("cannot write '" + path + "'");
  save_model(m, out);
}

Model load_model(std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  auto next_line = [&](const char* what) {
    if (!std::getline(in, line))
      parse_fail(line_no + 1, std::string("missing ") + what);
    ++line_no;
  };

  next_line("header");
  {
    std::istringstream ls(line);
    std::string magic, version;
    ls >> magic >> version;
    if (magic != "usmo-model") parse_fail(line_no, "not a usmo model file");
    if (version != "v1")
      parse_fail(line_no, "unsupported version '" + version + "'");
  }

  Model m;
  next_line("kernel line");
  {
    std::istringstream ls(line);
    std::string key, kind;
    ls >> key >> kind;
    if (key != "kernel") parse_fail(line_no, "expected 'kernel'");
    if (kind == "linear") {
      m.kernel.kind = KernelKind::Linear;
    } else if (kind == "gaussian") {
      m.kernel.kind = KernelKind::Gaussian;
      if (!(ls >> m.kernel.scale) || !(m.kernel.scale > 0) ||
          !std::isfinite(m.kernel.scale))
        parse_fail(line_no, "bad gaussian scale");
    } else {
      parse_fail(line_no, "unknown kernel '" + kind + "'");
    }
  }

  next_line("bias line");
  {
    std::istringstream ls(line);
    std::string key;
    ls >> key >> std::ws;
    std::string tok;
    ls >> tok;
    if (key != "bias" || !parse_double_tok(tok, m.bias))
      parse_fail(line_no, "bad bias line");
    if (std::isnan(m.bias)) parse_fail(line_no, "bias is NaN");
  }

  std::size_t nsv = 0;
  next_line("dim line");
  {
    std::istringstream ls(line);
    std::string key;
    long long v = -1;
    ls >> key >> v;
    if (key != "dim" || v < 0) parse_fail(line_no, "bad dim line");
    m.dim = static_cast<std::size_t>(v);
  }
  next_line("nsv line");
  {
    std::istringstream ls(line);
    std::string key;
    long long v = -1;
    ls >> key >> v;
    if (key != "nsv" || v < 0) parse_fail(line_no, "bad nsv line");
    nsv = static_cast<std::size_t>(v);
  }

  m.alpha.reserve(nsv);
  m.vectors.assign(nsv * m.dim, 0.0);
  for (std::size_t k = 0; k < nsv; ++k) {
    next_line("coefficient line");
    std::istringstream ls(line);
    std::string tok;
    if (!(ls >> tok)) parse_fail(line_no, "truncated coefficient line");
    double a = 0;
    if (!parse_double_tok(tok, a) || std::isnan(a))
      parse_fail(line_no, "bad coefficient '" + tok + "'");
    m.alpha.push_back(a);
    std::size_t prev = 0;
    while (ls >> tok) {
      auto colon = tok.find(':');
      if (colon == std::string::npos)
        parse_fail(line_no, "feature token '" + tok + "' is missing ':'");
      std::size_t idx = 0;
      double val = 0;
      {
        const char* b = tok.data();
        const char* e = b + colon;
        auto [ptr, ec] = std::from_chars(b, e, idx);
        if (ec != std::errc() || ptr != e || idx == 0)
          parse_fail(line_no, "bad feature index in '" + tok + "'");
      }
      if (!parse_double_tok(std::string_view(tok).substr(colon + 1), val) ||
          std::isnan(val))
        parse_fail(line_no, "bad feature value in '" + tok + "'");
      if (idx <= prev)
        parse_fail(line_no, "feature indices must be strictly ascending");
      if (idx > m.dim)
        parse_fail(line_no, "feature index exceeds dim");
      prev = idx;
      m.vectors[k * m.dim + (idx - 1)] = val;
    }
  }
  return m;
}

Model load_model_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw input_error("cannot open '" + path + "'");
  return load_model(in);
}

}  // namespace usmo

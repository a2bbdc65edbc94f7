// usmo: train/predict/eval/oracle front end for the PU decomposition solver

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "usmo/dataset.hpp"
#include "usmo/errors.hpp"
#include "usmo/initializer.hpp"
#include "usmo/model.hpp"
#include "usmo/oracle.hpp"
#include "usmo/solver.hpp"

namespace {

using namespace usmo;

struct Options {
  std::string positive_path, unlabeled_path, data_path;
  std::string model_path, trace_path, output_path;
  bool csv = false;
  bool header = false;
  long long label_col = 0;
  std::optional<int> target_class;
  double labeled_fraction = 0.2;
  std::uint64_t seed = 0;
  std::optional<double> pi;
  double lambda = 0.01;
  double tau = 1e-3;
  std::string kernel = "linear";
  double scale = 1.0;
  std::string init = "ranked";
  std::size_t max_full_scans = 1000;
  std::size_t enumerate_steps = 0;
};

KernelSpec make_kernel(const Options& o) {
  KernelSpec k;
  if (o.kernel == "linear") {
    k.kind = KernelKind::Linear;
  } else if (o.kernel == "gaussian") {
    k.kind = KernelKind::Gaussian;
    k.scale = o.scale;
  } else {
    throw config_error("unknown kernel '" + o.kernel + "'");
  }
  k.validate();
  return k;
}

LabeledDataset load_any(const Options& o, const std::string& path,
                        bool with_label) {
  if (o.csv) {
    std::ifstream in(path);
    if (!in) throw input_error("cannot open '" + path + "'");
    if (with_label)
      return load_csv(in, static_cast<std::size_t>(o.label_col), o.header);
    return load_features_csv(in, o.header);
  }
  return load_libsvm_file(path);
}

void pad_dim(LabeledDataset& ds, std::size_t dim) {
  if (ds.dim == dim) return;
  if (ds.dim > dim) throw input_error("feature dimension exceeds expectation");
  std::vector<double> wide(ds.size() * dim, 0.0);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    auto x = ds.sample(i);
    std::copy(x.begin(), x.end(), wide.begin() + i * dim);
  }
  ds.features = std::move(wide);
  ds.dim = dim;
}

// dataset plus the prior: explicit positive/unlabeled files, or a labeled
// file split by the transductive protocol
struct Problem {
  Dataset data;
  double pi = 0;
};

Problem build_problem(const Options& o) {
  Problem prob;
  if (!o.positive_path.empty() || !o.unlabeled_path.empty()) {
    if (o.positive_path.empty() || o.unlabeled_path.empty())
      throw config_error("--positive and --unlabeled must be given together");
    LabeledDataset pos = load_any(o, o.positive_path, !o.csv);
    LabeledDataset unl = load_any(o, o.unlabeled_path, !o.csv);
    const std::size_t dim = std::max(pos.dim, unl.dim);
    pad_dim(pos, dim);
    pad_dim(unl, dim);
    prob.data.dim = dim;
    prob.data.num_positive = pos.size();
    prob.data.num_unlabeled = unl.size();
    prob.data.features = std::move(pos.features);
    prob.data.features.insert(prob.data.features.end(), unl.features.begin(),
                              unl.features.end());
    if (!o.pi)
      throw config_error("--pi is required with explicit --positive/"
                         "--unlabeled files");
    prob.pi = *o.pi;
    return prob;
  }
  if (o.data_path.empty())
    throw config_error("either --data or --positive/--unlabeled is required");
  LabeledDataset all = load_any(o, o.data_path, true);
  if (o.target_class) binarize_labels(all, *o.target_class);
  PuSplit split = make_pu_split(all, o.labeled_fraction, o.seed);
  if (split.data.num_unlabeled == 0)
    throw input_error("the split left no unlabeled samples");
  prob.data = std::move(split.data);
  prob.pi = o.pi ? *o.pi : split.pi_hat;
  return prob;
}

Hyperparams make_hyper(const Options& o, double pi) {
  Hyperparams h;
  h.pi = pi;
  h.lambda = o.lambda;
  h.tau = o.tau;
  h.kernel = make_kernel(o);
  h.max_full_scans = o.max_full_scans;
  return h;
}

DualState initial_state(const Options& o, const Dataset& ds,
                        const Hyperparams& h, const DerivedConstants& c) {
  if (o.init == "uniform") {
    std::vector<std::size_t> order(ds.num_unlabeled);
    for (std::size_t u = 0; u < order.size(); ++u) order[u] = u;
    return assign_initial(uniform_plan(c, ds.num_unlabeled), order, c);
  }
  if (o.init != "ranked")
    throw config_error("unknown init mode '" + o.init + "'");
  const auto order = rank_unlabeled(ds, h.kernel);
  const auto plan =
      plan_groups(c, h.pi, ds.num_positive, ds.num_unlabeled);
  return assign_initial(plan, order, c);
}

TrainResult train_problem(const Options& o, const Problem& prob) {
  Hyperparams h = make_hyper(o, prob.pi);
  const DerivedConstants c =
      derive_constants(h, prob.data.num_positive, prob.data.num_unlabeled);
  DualState init = initial_state(o, prob.data, h, c);
  return run(prob.data, h, std::move(init));
}

void print_summary(const SolverTrace& t) {
  std::printf("objective=%.17g iters=%llu full_scans=%llu kernel_evals=%llu "
              "time_ms=%.3f\n",
              t.final_objective,
              static_cast<unsigned long long>(t.iterations),
              static_cast<unsigned long long>(t.full_scans),
              static_cast<unsigned long long>(t.kernel_evals), t.total_ms);
}

int cmd_train(const Options& o) {
  Problem prob = build_problem(o);
  TrainResult result = train_problem(o, prob);
  if (!o.model_path.empty()) save_model_file(result.model, o.model_path);
  if (!o.trace_path.empty()) {
    std::ofstream out(o.trace_path, std::ios::binary);
    if (!out) throw input_error("cannot write '" + o.trace_path + "'");
    result.trace.write_csv(out);
  }
  print_summary(result.trace);
  return 0;
}

int cmd_predict(const Options& o) {
  Model model = load_model_file(o.model_path);
  LabeledDataset in = load_any(o, o.data_path, !o.csv);
  pad_dim(in, model.dim);
  std::ofstream file;
  std::ostream* out = &std::cout;
  if (!o.output_path.empty()) {
    file.open(o.output_path, std::ios::binary);
    if (!file) throw input_error("cannot write '" + o.output_path + "'");
    out = &file;
  }
  char buf[64];
  for (std::size_t i = 0; i < in.size(); ++i) {
    const double score = model.predict_score(in.sample(i));
    const int label = score < 0 ? -1 : 1;
    std::snprintf(buf, sizeof(buf), "%+d %.9g\n", label, score);
    *out << buf;
  }
  return 0;
}

int cmd_eval(const Options& o) {
  if (o.data_path.empty())
    throw config_error("eval needs a labeled --data file");
  Problem prob = build_problem(o);
  TrainResult result = train_problem(o, prob);
  if (!o.model_path.empty()) save_model_file(result.model, o.model_path);

  const Dataset& ds = prob.data;
  if (ds.hidden_labels.size() != ds.num_unlabeled)
    throw input_error("no hidden labels to evaluate against");
  std::vector<int> predicted(ds.num_unlabeled);
  for (std::size_t u = 0; u < ds.num_unlabeled; ++u)
    predicted[u] = result.model.predict_label(ds.sample(ds.unlabeled_index(u)));
  const double f = f_measure(predicted, ds.hidden_labels);
  std::printf("f_measure=%.9g\n", f);
  return 0;
}

int cmd_oracle(const Options& o) {
  Problem prob = build_problem(o);
  if (prob.data.size() > 2000)
    throw input_error("oracle runs are limited to 2000 samples");
  Hyperparams h = make_hyper(o, prob.pi);
  const DerivedConstants c =
      derive_constants(h, prob.data.num_positive, prob.data.num_unlabeled);

  OracleSolution dense = solve_dense(prob.data, c, h.kernel);
  std::printf("oracle_objective=%.12g\n", dense.objective);

  TrainResult usmo_result = train_problem(o, prob);
  std::printf("usmo_objective=%.12g\n", usmo_result.trace.final_objective);
  std::printf("usmo_minus_oracle=%.12g\n",
              usmo_result.trace.final_objective - dense.objective);

  const bool want_enum = o.enumerate_steps > 0 || prob.data.num_unlabeled <= 4;
  if (want_enum) {
    std::size_t steps = o.enumerate_steps;
    if (steps == 0) {
      const std::size_t free_dims = prob.data.num_unlabeled - 1;
      steps = free_dims <= 1 ? 100001 : (free_dims == 2 ? 3163 : 465);
    }
    OracleSolution grid = enumerate_tiny(prob.data, c, h.kernel, steps);
    std::printf("enumeration_objective=%.12g\n", grid.objective);
    std::printf("certified_gap=%.12g\n", grid.certified_gap);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"USMO positive-unlabeled learning toolkit"};
  app.require_subcommand(1);
  Options o;

  auto add_data_opts = [&](CLI::App* cmd, bool split_opts) {
    cmd->add_option("--positive", o.positive_path,
                    "labeled-positive samples file");
    cmd->add_option("--unlabeled", o.unlabeled_path, "unlabeled samples file");
    cmd->add_option("--data", o.data_path, "labeled data file");
    cmd->add_flag("--csv", o.csv, "inputs are CSV instead of LIBSVM");
    cmd->add_flag("--header", o.header, "CSV inputs start with a header row");
    cmd->add_option("--label-col", o.label_col, "CSV label column (0-based)");
    if (split_opts) {
      cmd->add_option("--target-class", o.target_class,
                      "one-vs-all positive label");
      cmd->add_option("--labeled-fraction", o.labeled_fraction,
                      "fraction of positives kept labeled");
      cmd->add_option("--seed", o.seed, "split seed");
    }
  };
  auto add_hyper_opts = [&](CLI::App* cmd) {
    cmd->add_option("--pi", o.pi, "positive class prior");
    cmd->add_option("--lambda", o.lambda, "regularization weight");
    cmd->add_option("--tau", o.tau, "optimality tolerance");
    cmd->add_option("--kernel", o.kernel, "linear|gaussian");
    cmd->add_option("--scale", o.scale, "gaussian kernel scale");
    cmd->add_option("--init", o.init, "ranked|uniform");
    cmd->add_option("--max-full-scans", o.max_full_scans,
                    "full scan budget");
  };

  CLI::App* train = app.add_subcommand("train", "fit a PU classifier");
  add_data_opts(train, true);
  add_hyper_opts(train);
  train->add_option("--model", o.model_path, "model output path");
  train->add_option("--trace", o.trace_path, "per-iteration CSV output");

  CLI::App* predict = app.add_subcommand("predict", "score samples");
  predict->add_option("--model", o.model_path, "model path")->required();
  predict->add_option("--data", o.data_path, "samples to score")->required();
  predict->add_flag("--csv", o.csv, "input is CSV feature rows");
  predict->add_flag("--header", o.header, "CSV input has a header row");
  predict->add_option("--output", o.output_path, "write predictions here");

  CLI::App* eval = app.add_subcommand(
      "eval", "PU split, train, transductive F-measure");
  add_data_opts(eval, true);
  add_hyper_opts(eval);
  eval->add_option("--model", o.model_path, "optional model output path");

  CLI::App* oracle = app.add_subcommand(
      "oracle", "dense reference solve on a small instance");
  add_data_opts(oracle, true);
  add_hyper_opts(oracle);
  oracle->add_option("--enumerate-steps", o.enumerate_steps,
                     "force grid enumeration with this many points");

  try {
    app.parse(argc, argv);
    if (train->parsed()) return cmd_train(o);
    if (predict->parsed()) return cmd_predict(o);
    if (eval->parsed()) return cmd_eval(o);
    if (oracle->parsed()) return cmd_oracle(o);
    return 2;
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const budget_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const config_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const input_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

// conicmtl command-line tool.
//
//   conicmtl gram       precompute Gram matrices into a cache directory
//   conicmtl train      fit a model on a dataset and save it
//   conicmtl predict    decision values / labels for new samples
//   conicmtl bound      generalization-bound report for a saved model
//   conicmtl radcheck   numerical checks of the Rademacher-complexity results
//   conicmtl experiment repeated comparisons with cross-validation, CSV output
//   conicmtl report     summary table with t-tests from result CSVs
//
// Options may also come from an INI file given with --config; each
// subcommand reads its own [section], and command-line flags win.

#include "conicmtl/conicmtl.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using namespace conicmtl;

namespace {

std::vector<std::string> split(const std::string& text, const std::string& seps) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : text) {
    if (seps.find(ch) != std::string::npos) {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else if (ch != ' ' || seps.find(' ') == std::string::npos) {
      cur += ch;
    }
  }
  if (!cur.empty()) out.push_back(cur);
  for (auto& s : out) {
    const auto b = s.find_first_not_of(" \t"), e = s.find_last_not_of(" \t");
    s = b == std::string::npos ? "" : s.substr(b, e - b + 1);
  }
  out.erase(std::remove(out.begin(), out.end(), ""), out.end());
  return out;
}

std::vector<double> parse_list(const std::string& text, const char* what) {
  std::vector<double> out;
  for (const auto& tok : split(text, ", ")) {
    try {
      std::size_t used = 0;
      double v = 0.0;
      if (const auto slash = tok.find('/'); slash != std::string::npos) {
        v = std::stod(tok.substr(0, slash)) / std::stod(tok.substr(slash + 1));
      } else {
        v = std::stod(tok, &used);
        if (used != tok.size()) throw std::invalid_argument(tok);
      }
      out.push_back(v);
    } catch (const std::exception&) {
      throw std::invalid_argument(std::string("bad number '") + tok + "' in " + what);
    }
  }
  if (out.empty()) throw std::invalid_argument(std::string("empty list for ") + what);
  return out;
}

std::vector<KernelSpec> parse_kernels(const std::string& text) {
  if (text.empty() || text == "default") return default_dictionary();
  std::vector<KernelSpec> out;
  for (const auto& tok : split(text, ";")) out.push_back(KernelSpec::parse(tok));
  return out;
}

struct DatasetArgs {
  std::string kind = "taskdir";
  std::string path;
  std::string name;
  int synth_tasks = 4;
  int synth_samples = 40;
  int synth_dim = 5;
  double synth_similarity = 0.5;
  double synth_noise = 0.5;
  double synth_heterogeneity = 0.0;
  bool balance = false;

  void add(CLI::App* app) {
    app->add_option("--dataset-kind", kind, "synthetic | taskdir | multiclass")->capture_default_str();
    app->add_option("--dataset-path", path, "task directory or SVMlight file");
    app->add_option("--dataset-name", name, "label used in CSV output");
    app->add_option("--synth-tasks", synth_tasks)->capture_default_str();
    app->add_option("--synth-samples", synth_samples, "samples per task")->capture_default_str();
    app->add_option("--synth-dim", synth_dim)->capture_default_str();
    app->add_option("--synth-similarity", synth_similarity)->capture_default_str();
    app->add_option("--synth-noise", synth_noise)->capture_default_str();
    app->add_option("--synth-heterogeneity", synth_heterogeneity)->capture_default_str();
    app->add_flag("--balance", balance, "class-balance every task (redrawn per run)");
  }

  DatasetSpec spec() const {
    DatasetSpec s;
    s.kind = kind;
    s.path = path;
    s.name = !name.empty() ? name : (kind == "synthetic" ? "synthetic" : fs::path(path).filename().string());
    s.synth = {synth_tasks, synth_samples, synth_dim, synth_similarity, synth_noise, synth_heterogeneity, 0};
    s.balance = balance;
    return s;
  }
};

struct TrainArgs {
  double C = 1.0;
  double p = 2.0;
  double a = 0.0;
  double a_fraction = 0.5;
  double r_lambda = 8.0;
  std::string mode = "conic";
  double p_exp = 0.5;
  bool bias = false;
  double tol = 1e-5;
  int max_iters = 50;
  std::string theta_rule = "exact";
  std::string pareto_formula = "derived";

  void add(CLI::App* app) {
    app->add_option("-C,--C", C, "SVM cost")->capture_default_str();
    app->add_option("--p", p, "Lp-norm of the kernel weights, >= 1")->capture_default_str();
    app->add_option("--a", a, "absolute lambda budget (overrides --a-fraction when > 0)");
    app->add_option("--a-fraction", a_fraction, "budget as a fraction of sum_t ||v_t||_{p*}")->capture_default_str();
    app->add_option("--r-lambda", r_lambda)->capture_default_str();
    app->add_option("--mode", mode, "conic | average | pareto")->capture_default_str();
    app->add_option("--p-exp", p_exp, "Pareto-path exponent in (0, 1]")->capture_default_str();
    app->add_flag("--bias", bias, "unregularized bias term");
    app->add_option("--tol", tol, "relative objective change for stopping")->capture_default_str();
    app->add_option("--max-iters", max_iters)->capture_default_str();
    app->add_option("--theta-rule", theta_rule, "exact | unsquared")->capture_default_str();
    app->add_option("--pareto-formula", pareto_formula, "derived | literal")->capture_default_str();
  }

  TrainConfig config(std::uint64_t seed) const {
    TrainConfig c;
    c.C = C;
    c.p = p;
    c.a = a;
    c.r_lambda = r_lambda;
    c.mode = parse_mode(mode);
    c.p_exp = p_exp;
    c.use_bias = bias;
    c.tol_rel_obj = tol;
    c.max_outer_iters = max_iters;
    c.seed = seed;
    if (theta_rule == "exact") c.theta_rule = ThetaRule::kExact;
    else if (theta_rule == "unsquared") c.theta_rule = ThetaRule::kUnsquaredNormSum;
    else throw std::invalid_argument("unknown theta rule '" + theta_rule + "'");
    if (pareto_formula == "derived") c.pareto_formula = ParetoFormula::kDerived;
    else if (pareto_formula == "literal") c.pareto_formula = ParetoFormula::kLiteral;
    else throw std::invalid_argument("unknown pareto formula '" + pareto_formula + "'");
    return c;
  }
};

void print_checks(const std::vector<CheckResult>& checks, std::ostream& os) {
  for (const auto& c : checks)
    os << (c.passed() ? "PASS " : "FAIL ") << c.name << ": " << c.instances << " instances, " << c.comparisons
       << " comparisons, " << c.violations << " violations, worst " << c.worst << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-task multiple kernel learning with conic task weights"};
  app.set_config("--config", "", "INI file; [section] per subcommand");
  app.require_subcommand(1);
  std::uint64_t seed = 0;
  app.add_option("--seed", seed, "master seed")->capture_default_str();

  // gram
  auto* gram = app.add_subcommand("gram", "precompute Gram matrices into a cache directory");
  DatasetArgs gram_data;
  gram_data.add(gram);
  std::string gram_cache = "gram_cache", gram_kernels;
  bool gram_raw = false;
  gram->add_option("--cache-dir", gram_cache)->capture_default_str();
  gram->add_option("--kernels", gram_kernels, "';'-separated kernel specs or 'default'")->join(',');
  gram->add_flag("--no-standardize", gram_raw);

  // train
  auto* train = app.add_subcommand("train", "fit a model and save it");
  DatasetArgs train_data;
  train_data.add(train);
  TrainArgs train_args;
  train_args.add(train);
  std::string train_out = "model.json", train_kernels, train_cache;
  bool train_raw = false;
  train->add_option("-o,--out", train_out)->capture_default_str();
  train->add_option("--kernels", train_kernels, "';'-separated kernel specs or 'default'")->join(',');
  train->add_option("--cache-dir", train_cache, "optional Gram cache");
  train->add_flag("--no-standardize", train_raw);

  // predict
  auto* pred = app.add_subcommand("predict", "decision values for new samples");
  std::string pred_model, pred_input, pred_task, pred_out;
  pred->add_option("-m,--model", pred_model)->required();
  pred->add_option("-i,--input", pred_input, "task directory, or SVMlight file with --task")->required();
  pred->add_option("--task", pred_task, "task id when --input is a single file");
  pred->add_option("-o,--out", pred_out, "write 'task,index,decision,label' lines here");

  // bound
  auto* bound = app.add_subcommand("bound", "bound report for a saved model");
  std::string bound_model, bound_test, bound_format = "text";
  BoundOptions bopt;
  double bound_r = 0.0;
  bound->add_option("-m,--model", bound_model)->required();
  bound->add_option("--test", bound_test, "task directory for the test-error estimate");
  bound->add_option("--rho", bopt.rho)->capture_default_str();
  bound->add_option("--delta", bopt.delta)->capture_default_str();
  bound->add_option("--samples", bopt.mc_samples, "Monte-Carlo draws (exhaustive when TN <= 20)")->capture_default_str();
  bound->add_option("--radius", bound_r, "hypothesis-ball radius R (default: from the model)");
  bound->add_option("--format", bound_format, "text | csv")->capture_default_str();

  // radcheck
  auto* rad = app.add_subcommand("radcheck", "numerical checks of the Rademacher-complexity results");
  int rad_scale = 1;
  rad->add_option("--scale", rad_scale, "multiplies every instance count")->capture_default_str();

  // experiment
  auto* exp = app.add_subcommand("experiment", "repeated comparisons with inner cross-validation");
  DatasetArgs exp_data;
  exp_data.add(exp);
  ExperimentConfig ex;
  std::string exp_fractions = "0.3", exp_methods = "conic,average,pareto,single", exp_kernels;
  std::string grid_c = "0.125,0.25,0.5,1,2,4,8", grid_p = "1,4/3,2,4", grid_a = "0.25,0.5,0.75,1", grid_pexp = "0.25,0.5,0.75,1";
  std::string exp_out = "results.csv", exp_tasks_out, exp_bounds_out;
  bool exp_bias = false;
  exp->add_option("--fractions", exp_fractions, "training fractions")->join(',')->capture_default_str();
  exp->add_option("--methods", exp_methods)->join(',')->capture_default_str();
  exp->add_option("--runs", ex.runs)->capture_default_str();
  exp->add_option("--cv-folds", ex.cv_folds)->capture_default_str();
  exp->add_option("--grid-C", grid_c)->join(',')->capture_default_str();
  exp->add_option("--grid-p", grid_p)->join(',')->capture_default_str();
  exp->add_option("--grid-a", grid_a, "budget fractions")->join(',')->capture_default_str();
  exp->add_option("--grid-p-exp", grid_pexp)->join(',')->capture_default_str();
  exp->add_option("--r-lambda", ex.r_lambda)->capture_default_str();
  exp->add_option("--kernels", exp_kernels, "';'-separated kernel specs or 'default'")->join(',');
  exp->add_option("--tol", ex.base.tol_rel_obj)->capture_default_str();
  exp->add_option("--max-iters", ex.base.max_outer_iters)->capture_default_str();
  exp->add_flag("--bias", exp_bias);
  exp->add_flag("--timing", ex.timing, "record wall time (makes the CSV run-dependent)");
  exp->add_option("--cache-dir", ex.gram_cache_dir, "optional Gram cache");
  exp->add_option("-o,--out", exp_out)->capture_default_str();
  exp->add_option("--tasks-out", exp_tasks_out, "per-task accuracy CSV");
  exp->add_option("--bounds-out", exp_bounds_out, "bound report CSV for multi-task models");
  exp->add_option("--bound-samples", ex.bound_options.mc_samples)->capture_default_str();
  exp->add_option("--rho", ex.bound_options.rho)->capture_default_str();
  exp->add_option("--delta", ex.bound_options.delta)->capture_default_str();

  // report
  auto* rep = app.add_subcommand("report", "summary table with t-tests");
  std::vector<std::string> rep_inputs;
  SummaryOptions sopt;
  std::string rep_out;
  rep->add_option("results", rep_inputs, "results CSV files")->required();
  rep->add_flag("--paired", sopt.paired, "paired t-test by seed instead of Welch");
  rep->add_option("--alpha", sopt.alpha)->capture_default_str();
  rep->add_option("--reference", sopt.reference)->capture_default_str();
  rep->add_option("-o,--out", rep_out, "write the table here instead of stdout");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gram->parsed()) {
      const auto data = load_dataset(gram_data.spec(), seed);
      GramCache cache(gram_cache);
      prepare_training_set(data.tasks, parse_kernels(gram_kernels), !gram_raw, &cache);
      std::cout << "tasks " << data.tasks.size() << "\ncomputed " << cache.misses() << "\nreused " << cache.hits()
                << "\ncache " << gram_cache << '\n';
    } else if (train->parsed()) {
      const auto data = load_dataset(train_data.spec(), seed);
      data.validate(true);
      std::optional<GramCache> cache;
      if (!train_cache.empty()) cache.emplace(train_cache);
      const auto set = prepare_training_set(data.tasks, parse_kernels(train_kernels), !train_raw, cache ? &*cache : nullptr);
      TrainConfig cfg = train_args.config(seed);
      if (cfg.a <= 0.0) cfg.a = train_args.a_fraction * budget_weights(set.stacks, cfg.p).sum();
      const MtlModel model = fit(set, cfg);
      save_model(train_out, model);
      std::cout << "objective " << model.objective() << "\nouter_iterations " << model.outer_iterations
                << "\nconverged " << (model.converged ? 1 : 0) << "\ntheta " << model.theta.values.transpose()
                << "\nlambda " << model.lambda.values.transpose() << "\nmodel " << train_out << '\n';
      if (!model.converged) std::cerr << "warning: training did not converge\n";
    } else if (pred->parsed()) {
      const MtlModel model = load_model(pred_model);
      std::vector<TaskDataset> tasks;
      if (fs::is_directory(pred_input)) {
        tasks = load_task_directory(pred_input).tasks;
      } else {
        if (pred_task.empty()) throw std::invalid_argument("--task is required for a single input file");
        auto s = load_sparse_text(pred_input, model.tasks[model.task_index(pred_task)].train_x.cols());
        TaskDataset t;
        t.task_id = pred_task;
        t.X = std::move(s.X);
        t.y = Eigen::Map<const Vector>(s.labels.data(), static_cast<Eigen::Index>(s.labels.size()));
        tasks.push_back(std::move(t));
      }
      std::ofstream file;
      if (!pred_out.empty()) {
        file.open(pred_out);
        if (!file) throw Error("cannot write " + pred_out);
        file << "task,index,decision,label\n";
        file.precision(17);
      }
      for (const auto& t : tasks) {
        const auto pr = predict(model, t.task_id, t.X);
        if (file)
          for (Eigen::Index i = 0; i < pr.decision.size(); ++i)
            file << t.task_id << ',' << i << ',' << pr.decision[i] << ',' << pr.labels[i] << '\n';
        const bool labeled = (t.y.array().abs() == 1.0).all() && t.y.size() > 0;
        std::cout << t.task_id << " samples " << t.X.rows();
        if (labeled) std::cout << " accuracy " << accuracy(pr.labels, t.y);
        std::cout << '\n';
      }
    } else if (bound->parsed()) {
      const MtlModel model = load_model(bound_model);
      std::vector<GramStack> stacks;
      for (const auto& t : model.tasks) stacks.push_back(GramStack::build(t.task_id, model.kernels, t.train_x));
      bopt.seed = seed;
      if (bound_r > 0.0) bopt.R = bound_r;
      BoundReport r = bound_report(model, stacks, bopt);
      if (!bound_test.empty()) r.test_error = test_error(model, load_task_directory(bound_test).tasks);
      if (bound_format == "csv") std::cout << r.csv_header() << '\n' << r.csv_row() << '\n';
      else r.write_text(std::cout);
    } else if (rad->parsed()) {
      const auto checks = run_radcheck(seed, rad_scale);
      print_checks(checks, std::cout);
      for (const auto& c : checks)
        if (!c.passed()) return 1;
    } else if (exp->parsed()) {
      ex.dataset = exp_data.spec();
      if (exp_data.kind == "taskdir" && exp_data.path.empty()) throw std::invalid_argument("--dataset-path is required");
      ex.fractions = parse_list(exp_fractions, "--fractions");
      ex.methods.clear();
      for (const auto& m : split(exp_methods, ", ")) ex.methods.push_back(parse_method(m));
      ex.grid.C = parse_list(grid_c, "--grid-C");
      ex.grid.p = parse_list(grid_p, "--grid-p");
      ex.grid.a_fraction = parse_list(grid_a, "--grid-a");
      ex.grid.p_exp = parse_list(grid_pexp, "--grid-p-exp");
      ex.kernels = parse_kernels(exp_kernels);
      ex.master_seed = seed;
      ex.base.use_bias = exp_bias;
      ex.base.seed = seed;
      ex.bounds = !exp_bounds_out.empty();
      ex.bound_options.seed = seed;
      const ResultTable table = run_experiment(ex);
      std::ofstream out(exp_out);
      if (!out) throw Error("cannot write " + exp_out);
      write_results_csv(out, table);
      if (!exp_tasks_out.empty()) {
        std::ofstream t(exp_tasks_out);
        write_task_csv(t, table);
      }
      if (!exp_bounds_out.empty()) {
        std::ofstream b(exp_bounds_out);
        write_bounds_csv(b, table);
      }
      std::size_t failed = 0;
      for (const auto& r : table)
        if (!r.error.empty()) {
          ++failed;
          std::cerr << "run failed (" << method_name(r.method) << ", seed " << r.seed << "): " << r.error << '\n';
        }
      std::cout << "rows " << table.size() << "\nfailed " << failed << "\nresults " << exp_out << '\n';
    } else if (rep->parsed()) {
      std::vector<CsvResult> rows;
      for (const auto& path : rep_inputs) {
        std::ifstream in(path);
        if (!in) throw Error("cannot open " + path);
        auto part = read_results_csv(in);
        rows.insert(rows.end(), part.begin(), part.end());
      }
      if (rep_out.empty()) {
        write_summary(std::cout, rows, sopt);
      } else {
        std::ofstream out(rep_out);
        write_summary(out, rows, sopt);
      }
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}

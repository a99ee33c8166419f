// Acceptance checks, one PASS/FAIL line per criterion.
//
//   acceptance --criteria 1,2,... [--cli path] [--config sample.ini]
//              [--benchmark-config synthetic4.ini] [--workdir dir]
//
// Exits 1 when any selected criterion fails.

#include "conicmtl/conicmtl.hpp"
#include "oracles/oracles.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <random>
#include <sstream>

using namespace conicmtl;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Options {
  std::string cli;
  std::string config;
  std::string benchmark_config;
  fs::path workdir = "acceptance_work";
};

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::string num(double v) {
  std::ostringstream os;
  os << std::setprecision(4) << v;
  return os.str();
}

std::vector<std::vector<Matrix>> raw_grams(const std::vector<GramStack>& stacks) {
  std::vector<std::vector<Matrix>> out;
  for (const auto& s : stacks) out.push_back(s.grams());
  return out;
}

// 1. theta_step against 1e5 random feasible points.
Outcome theta_step_oracle() {
  Stopwatch sw;
  std::mt19937_64 rng(101);
  std::uniform_int_distribution<int> dm(1, 5);
  std::uniform_real_distribution<double> du(0.0, 10.0), zero(0.0, 1.0);
  const double ps[] = {1.0, 4.0 / 3.0, 2.0, 4.0};
  long bad_obj = 0, bad_norm = 0;
  double worst = 0.0;
  for (int k = 0; k < 200; ++k) {
    const double p = ps[k % 4];
    Vector u(dm(rng));
    for (auto& e : u) e = zero(rng) < 0.15 ? 0.0 : du(rng);
    if ((u.array() == 0.0).all()) u[0] = 1.0;
    const auto th = theta_step(u, p);
    const double obj = theta_objective(u, th.values);
    const double best = oracle::theta_random_search(u, p, 100000, rng);
    if (obj > best + 1e-6) ++bad_obj, worst = std::max(worst, obj - best);
    if (std::abs(lp_norm(th.values, p) - 1.0) > 1e-10) ++bad_norm;
  }
  const double t = sw.seconds();
  return {bad_obj == 0 && bad_norm == 0 && t < 30.0,
          "200 instances, objective violations " + std::to_string(bad_obj) + " (worst " + num(worst) +
              "), norm violations " + std::to_string(bad_norm) + ", " + num(t) + " s"};
}

// 2. lambda_step against a grid search.
Outcome lambda_step_oracle() {
  Stopwatch sw;
  std::mt19937_64 rng(202);
  std::uniform_int_distribution<int> dt(1, 5);
  std::uniform_real_distribution<double> dj(0.05, 20.0), dc(0.1, 5.0), frac(0.15, 1.3), dr(1.5, 12.0);
  long bad_obj = 0, bad_con = 0;
  double worst = 0.0;
  for (int k = 0; k < 200; ++k) {
    const int t = dt(rng);
    Vector j(t), c(t);
    for (auto& e : j) e = dj(rng);
    for (auto& e : c) e = dc(rng);
    const double r = dr(rng);
    const double a = std::max(frac(rng) * c.sum(), 1.001 * c.sum() / r);
    const auto l = lambda_step(j, c, a, r);
    const double obj = l.values.dot(j);
    const double grid = oracle::lambda_grid_search(j, c, a, r);
    if (obj > grid + 1e-3 * std::abs(obj)) ++bad_obj, worst = std::max(worst, (obj - grid) / obj);
    if (l.values.minCoeff() < 1.0 || l.values.maxCoeff() > r || budget_usage(l.values, c) > a + 1e-9) ++bad_con;
  }
  const double t = sw.seconds();
  return {bad_obj == 0 && bad_con == 0 && t < 60.0,
          "200 instances, objective violations " + std::to_string(bad_obj) + " (worst rel " + num(worst) +
              "), constraint violations " + std::to_string(bad_con) + ", " + num(t) + " s"};
}

// 3. SVM dual solver against projected-gradient QP.
Outcome svm_oracle() {
  Stopwatch sw;
  std::mt19937_64 rng(303);
  std::uniform_int_distribution<int> dn(2, 40), dr(1, 10);
  std::uniform_real_distribution<double> lc(-1.0, 1.0);
  std::normal_distribution<double> g(0.0, 1.0);
  SvmOptions opt;
  opt.gap_tol = 1e-9;
  long bad_gap = 0, bad_obj = 0;
  double worst_gap = 0.0, worst_rel = 0.0;
  for (int k = 0; k < 200; ++k) {
    const int n = dn(rng);
    Matrix b(n, dr(rng));
    for (Eigen::Index i = 0; i < b.size(); ++i) b.data()[i] = g(rng);
    const Matrix kmat = b * b.transpose();
    Vector y(n);
    for (int i = 0; i < n; ++i) y[i] = i % 2 ? 1.0 : -1.0;
    std::shuffle(y.data(), y.data() + n, rng);
    const double c = std::pow(10.0, lc(rng));
    opt.use_bias = k % 2 == 1;
    const auto s = solve_svm_dual(kmat, y, c, opt);
    const auto ref = oracle::svm_projected_gradient(kmat, y, c, opt.use_bias);
    const double rel = std::abs(s.objective - ref.primal) / std::max(std::abs(ref.primal), 1e-12);
    worst_gap = std::max(worst_gap, s.duality_gap);
    worst_rel = std::max(worst_rel, rel);
    if (!(s.duality_gap <= 1e-6)) ++bad_gap;
    if (rel > 1e-5) ++bad_obj;
  }
  const double t = sw.seconds();
  return {bad_gap == 0 && bad_obj == 0 && t < 120.0,
          "200 instances, max gap " + num(worst_gap) + ", max rel objective diff " + num(worst_rel) + ", " + num(t) +
              " s"};
}

// 4. BCD monotone descent; Conic with slack budget equals Average.
Outcome bcd_monotone() {
  Stopwatch sw;
  std::mt19937_64 rng(404);
  std::uniform_int_distribution<int> dt(1, 4), dn(8, 30), dm(1, 3);
  std::uniform_real_distribution<double> lc(-1.0, 1.0), frac(0.2, 0.9), sim(0.0, 1.0);
  const auto dict = default_dictionary();
  const double ps[] = {1.0, 4.0 / 3.0, 2.0, 4.0};
  long increases = 0, mismatches = 0, steps = 0;
  for (int k = 0; k < 100; ++k) {
    SynthConfig sc;
    sc.tasks = dt(rng);
    sc.samples_per_task = dn(rng);
    sc.dimension = 3;
    sc.similarity = sim(rng);
    sc.noise = 0.8;
    sc.heterogeneity = 1.0;
    sc.seed = rng();
    const auto data = synth_multitask(sc).data;
    std::vector<KernelSpec> kernels;
    const int m = dm(rng);
    for (int i = 0; i < m; ++i) kernels.push_back(dict[std::uniform_int_distribution<std::size_t>(0, dict.size() - 1)(rng)]);
    const auto set = prepare_training_set(data.tasks, kernels);
    TrainConfig cfg;
    cfg.p = ps[k % 4];
    cfg.C = std::pow(10.0, lc(rng));
    cfg.tol_rel_obj = 1e-8;
    cfg.mode = Mode::kConic;
    const double csum = budget_weights(set.stacks, cfg.p).sum();
    cfg.a = frac(rng) * csum;
    const auto conic = fit(set, cfg);
    increases += static_cast<long>(trace_increases(conic.objective_trace, 1e-9).size());
    steps += static_cast<long>(conic.objective_trace.size());

    TrainConfig avg = cfg;
    avg.mode = Mode::kAverage;
    const auto average = fit(set, avg);
    increases += static_cast<long>(trace_increases(average.objective_trace, 1e-9).size());
    steps += static_cast<long>(average.objective_trace.size());

    TrainConfig slack = cfg;
    slack.a = csum * (1.0 + sim(rng));
    const auto loose = fit(set, slack);
    bool same = loose.theta.values == average.theta.values && loose.objective_trace == average.objective_trace &&
                loose.lambda.values == average.lambda.values;
    for (std::size_t t = 0; t < set.size(); ++t) same = same && loose.tasks[t].dual.alpha == average.tasks[t].dual.alpha;
    if (!same) ++mismatches;
  }
  return {increases == 0 && mismatches == 0,
          "100 instances, " + std::to_string(steps) + " recorded steps, increases " + std::to_string(increases) +
              ", slack-budget mismatches " + std::to_string(mismatches) + ", " + num(sw.seconds()) + " s"};
}

// Exhaustive estimate against the brute-force enumeration on the same draws as
// the library checks use.
long brute_mismatches(int instances, std::uint64_t seed, bool with_gamma, double* worst) {
  std::mt19937_64 rng(seed);
  long bad = 0;
  for (int k = 0; k < instances; ++k) {
    const int t = 1 + k % 3, n = 1 + (k / 3) % 4, m = 1 + k % 3;
    const auto stacks = random_stacks(rng, t, n, m);
    const double p = std::array<double, 4>{1.0, 4.0 / 3.0, 2.0, 4.0}[k % 4];
    const Vector lambda = random_positive(rng, t, 1.0, 8.0);
    const Vector gamma = random_positive(rng, t, 0.2, 2.0);
    const double mc = with_gamma ? rademacher_mc(stacks, lambda, 1.0, p, 1, 0, gamma).mean
                                 : rademacher_mc(stacks, lambda, 1.0, p, 1, 0).mean;
    const double ref = oracle::rademacher_brute(raw_grams(stacks), lambda, 1.0, p, with_gamma ? &gamma : nullptr);
    const double rel = std::abs(mc - ref) / std::max(ref, 1e-300);
    *worst = std::max(*worst, rel);
    if (rel > 1e-10) ++bad;
  }
  return bad;
}

std::string describe(const CheckResult& r) {
  return r.name + ": " + std::to_string(r.instances) + " instances, " + std::to_string(r.comparisons) +
         " comparisons, violations " + std::to_string(r.violations);
}

// 5. Monotonicity in λ and γ.
Outcome monotonicity() {
  const auto a = check_monotone_in_lambda(50, 505);
  const auto b = check_monotone_in_gamma(50, 506);
  double worst = 0.0;
  const long bad = brute_mismatches(50, 507, true, &worst);
  return {a.passed() && b.passed() && bad == 0,
          describe(a) + "; " + describe(b) + "; estimate vs brute force mismatches " + std::to_string(bad)};
}

// 6. Exhaustive estimate below the Lp trace bound, checked with both evaluators.
Outcome lp_bound() {
  const auto a = check_lp_upper_bound(100, 606);
  std::mt19937_64 rng(607);
  long bad = 0;
  for (int k = 0; k < 100; ++k) {
    const int t = 1 + k % 3, n = 1 + (k / 3) % 4, m = 1 + (k / 12) % 3;
    const auto stacks = random_stacks(rng, t, n, m);
    BoundInputs in;
    in.tasks = t;
    in.total_samples = static_cast<Eigen::Index>(t) * n;
    in.lambda = random_positive(rng, t, 1.0, 8.0);
    in.R = std::uniform_real_distribution<double>(0.5, 4.0)(rng);
    in.p = std::array<double, 3>{4.0 / 3.0, 2.0, 4.0}[k % 3];
    for (const auto& s : stacks) in.traces.push_back(s.traces());
    if (oracle::rademacher_brute(raw_grams(stacks), in.lambda, in.R, in.p) > *erc_upper_bound_lp(in) + 1e-12) ++bad;
  }
  return {a.passed() && bad == 0, describe(a) + "; brute-force violations " + std::to_string(bad)};
}

// 7. Pareto-path weights.
Outcome pareto() {
  const auto a = check_pareto_monotone(100, 707);
  return {a.passed(), describe(a)};
}

// 8. Homogeneity under λ -> 2λ.
Outcome homogeneity() {
  const auto a = check_homogeneity(50, 808, 1e-12);
  double worst = 0.0;
  const long bad = brute_mismatches(50, 809, false, &worst);
  return {a.passed() && bad == 0, describe(a) + " (worst rel " + num(a.worst) + ", tolerance 1e-12 relative)" +
                                      "; estimate vs brute force mismatches " + std::to_string(bad)};
}

// Runs a command, returns its exit code.
int run(const std::string& cmd) {
  const int rc = std::system(cmd.c_str());
  return rc == -1 ? -1 : WEXITSTATUS(rc);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

std::string quote(const fs::path& p) { return "'" + p.string() + "'"; }

std::vector<std::map<std::string, std::string>> read_csv(const fs::path& p) {
  std::ifstream in(p);
  std::string line;
  std::vector<std::string> head;
  std::vector<std::map<std::string, std::string>> rows;
  auto cells = [](const std::string& l) {
    std::vector<std::string> out;
    std::stringstream ss(l);
    for (std::string c; std::getline(ss, c, ',');) out.push_back(c);
    if (!l.empty() && l.back() == ',') out.emplace_back();
    return out;
  };
  if (!std::getline(in, line)) return rows;
  head = cells(line);
  while (std::getline(in, line)) {
    const auto c = cells(line);
    std::map<std::string, std::string> row;
    for (std::size_t i = 0; i < head.size() && i < c.size(); ++i) row[head[i]] = c[i];
    rows.push_back(std::move(row));
  }
  return rows;
}

// 9. Synthetic four-task benchmark through the CLI and the bundled config.
Outcome benchmark(const Options& o) {
  if (o.cli.empty() || o.benchmark_config.empty()) return {false, "needs --cli and --benchmark-config"};
  Stopwatch sw;
  const fs::path dir = o.workdir / "benchmark";
  fs::create_directories(dir);
  const std::string cmd = quote(o.cli) + " --config " + quote(o.benchmark_config) +
                          " experiment --methods conic,average -o " + quote(dir / "results.csv") + " --bounds-out " +
                          quote(dir / "bounds.csv") + " > " + quote(dir / "log.txt") + " 2>&1";
  if (run(cmd) != 0) return {false, "experiment command failed, see " + (dir / "log.txt").string()};
  const auto results = read_csv(dir / "results.csv");
  const auto bounds = read_csv(dir / "bounds.csv");
  std::map<std::string, double> acc_conic, acc_avg, bound_conic, bound_avg;
  for (const auto& r : results) {
    const double v = std::stod(r.at("mean_accuracy"));
    (r.at("method") == "conic" ? acc_conic : acc_avg)[r.at("seed")] = v;
  }
  for (const auto& r : bounds) {
    const double v = std::stod(r.at("any_lambda_total"));
    (r.at("method") == "conic" ? bound_conic : bound_avg)[r.at("seed")] = v;
  }
  if (acc_conic.size() != 20 || acc_avg.size() != 20 || bound_conic.size() != 20 || bound_avg.size() != 20)
    return {false, "expected 20 seeds per method, got " + std::to_string(acc_conic.size()) + "/" +
                       std::to_string(acc_avg.size()) + " results and " + std::to_string(bound_conic.size()) + "/" +
                       std::to_string(bound_avg.size()) + " bounds"};
  double mc = 0.0, ma = 0.0;
  for (const auto& [s, v] : acc_conic) mc += v / 20.0;
  for (const auto& [s, v] : acc_avg) ma += v / 20.0;
  int wins = 0;
  for (const auto& [s, v] : bound_conic) wins += v <= bound_avg.at(s);
  const double t = sw.seconds();
  return {mc >= ma - 0.005 && wins >= 15 && t < 600.0,
          "mean accuracy conic " + num(mc) + " vs average " + num(ma) + "; conic bound <= average bound in " +
              std::to_string(wins) + "/20 seeds; " + num(t) + " s"};
}

// 10. End-to-end experiment on the bundled sample, twice.
Outcome smoke(const Options& o) {
  if (o.cli.empty() || o.config.empty()) return {false, "needs --cli and --config"};
  const fs::path data = fs::path(o.config).parent_path().parent_path() / "data" / "sample_tasks";
  const fs::path dir = o.workdir / "smoke";
  fs::create_directories(dir);
  std::string outputs[2];
  for (int i = 0; i < 2; ++i) {
    const fs::path out = dir / ("results_" + std::to_string(i) + ".csv");
    const std::string cmd = quote(o.cli) + " --config " + quote(o.config) + " experiment --dataset-path " +
                            quote(data) + " -o " + quote(out) + " > " + quote(dir / "log.txt") + " 2>&1";
    if (run(cmd) != 0) return {false, "experiment command failed, see " + (dir / "log.txt").string()};
    outputs[i] = slurp(out);
  }
  const std::string header = outputs[0].substr(0, outputs[0].find('\n'));
  const bool schema = header == "dataset,fraction,method,seed,mean_accuracy,C,p,a,p_exp,wall_ms,converged";
  long rows = 0, bad_cells = 0;
  std::istringstream is(outputs[0]);
  std::string line;
  std::getline(is, line);
  while (std::getline(is, line)) {
    ++rows;
    if (std::count(line.begin(), line.end(), ',') != 10) ++bad_cells;
    if (line.find(",nan,") != std::string::npos) ++bad_cells;
  }
  const bool same = outputs[0] == outputs[1];
  return {schema && same && rows > 0 && bad_cells == 0,
          std::string("header ") + (schema ? "ok" : "mismatch") + ", " + std::to_string(rows) + " rows, " +
              (same ? "byte-identical" : "outputs differ") + ", malformed rows " + std::to_string(bad_cells)};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app("acceptance checks");
  std::string criteria = "1,2,3,4,5,6,7,8,9,10";
  Options o;
  std::string workdir = o.workdir.string();
  app.add_option("--criteria", criteria, "comma-separated criterion numbers");
  app.add_option("--cli", o.cli, "path to the conicmtl executable");
  app.add_option("--config", o.config, "sample experiment config");
  app.add_option("--benchmark-config", o.benchmark_config, "synthetic benchmark config");
  app.add_option("--workdir", workdir, "scratch directory");
  CLI11_PARSE(app, argc, argv);
  o.workdir = workdir;
  fs::create_directories(o.workdir);

  const std::map<int, std::pair<std::string, std::function<Outcome()>>> all{
      {1, {"theta-step oracle equivalence", theta_step_oracle}},
      {2, {"lambda-step oracle equivalence", lambda_step_oracle}},
      {3, {"svm solver vs QP oracle", svm_oracle}},
      {4, {"bcd monotone descent", bcd_monotone}},
      {5, {"erc monotone in lambda and gamma", monotonicity}},
      {6, {"erc below Lp trace bound", lp_bound}},
      {7, {"pareto weights above 1 and decreasing", pareto}},
      {8, {"erc homogeneity", homogeneity}},
      {9, {"synthetic benchmark conic vs average", [&] { return benchmark(o); }}},
      {10, {"end-to-end experiment smoke", [&] { return smoke(o); }}},
  };

  bool ok = true;
  std::stringstream ss(criteria);
  for (std::string tok; std::getline(ss, tok, ',');) {
    const int id = std::stoi(tok);
    const auto it = all.find(id);
    if (it == all.end()) {
      std::cout << "FAIL " << id << " unknown criterion\n";
      ok = false;
      continue;
    }
    Outcome r;
    try {
      r = it->second.second();
    } catch (const std::exception& e) {
      r = {false, std::string("exception: ") + e.what()};
    }
    std::cout << (r.pass ? "PASS " : "FAIL ") << id << " " << it->second.first << ": " << r.detail << std::endl;
    ok = ok && r.pass;
  }
  return ok ? 0 : 1;
}

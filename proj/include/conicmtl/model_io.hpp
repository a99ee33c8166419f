#pragma once

// Versioned JSON model document. Doubles are written in shortest round-trip
// form, so save -> load -> predict reproduces decision values bit for bit.

#include "conicmtl/trainer.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace conicmtl {

inline constexpr const char* kModelFormat = "conicmtl-model";
inline constexpr int kModelFormatVersion = 1;

namespace detail {

using nlohmann::json;

inline json to_json_vec(const Vector& v) { return json(std::vector<double>(v.data(), v.data() + v.size())); }

inline Vector vec_from_json(const json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

inline json to_json_mat(const Matrix& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) rows.push_back(to_json_vec(m.row(i).transpose()));
  return json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", rows}};
}

inline Matrix mat_from_json(const json& j) {
  Matrix m(j.at("rows").get<Eigen::Index>(), j.at("cols").get<Eigen::Index>());
  const auto& rows = j.at("data");
  if (static_cast<Eigen::Index>(rows.size()) != m.rows()) throw ParseError("matrix row count mismatch", 0);
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    const Vector r = vec_from_json(rows[static_cast<std::size_t>(i)]);
    if (r.size() != m.cols()) throw ParseError("matrix column count mismatch", 0);
    m.row(i) = r.transpose();
  }
  return m;
}

inline std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

inline json config_to_json(const TrainConfig& c) {
  return json{{"C", c.C},
              {"p", c.p},
              {"a", c.a},
              {"r_lambda", c.r_lambda},
              {"mode", mode_name(c.mode)},
              {"p_exp", c.p_exp},
              {"use_bias", c.use_bias},
              {"tol_rel_obj", c.tol_rel_obj},
              {"max_outer_iters", c.max_outer_iters},
              {"seed", c.seed},
              {"theta_rule", c.theta_rule == ThetaRule::kExact ? "exact" : "unsquared_norm_sum"},
              {"pareto_formula", c.pareto_formula == ParetoFormula::kDerived ? "derived" : "literal"},
              {"pareto_damping", c.pareto_damping},
              {"svm_rel_gap", c.svm_rel_gap}};
}

inline TrainConfig config_from_json(const json& j) {
  TrainConfig c;
  c.C = j.at("C");
  c.p = j.at("p");
  c.a = j.at("a");
  c.r_lambda = j.at("r_lambda");
  c.mode = parse_mode(j.at("mode"));
  c.p_exp = j.at("p_exp");
  c.use_bias = j.at("use_bias");
  c.tol_rel_obj = j.at("tol_rel_obj");
  c.max_outer_iters = j.at("max_outer_iters");
  c.seed = j.at("seed");
  c.theta_rule = j.at("theta_rule") == "exact" ? ThetaRule::kExact : ThetaRule::kUnsquaredNormSum;
  c.pareto_formula = j.at("pareto_formula") == "derived" ? ParetoFormula::kDerived : ParetoFormula::kLiteral;
  c.pareto_damping = j.at("pareto_damping");
  c.svm_rel_gap = j.at("svm_rel_gap");
  return c;
}

}  // namespace detail

inline nlohmann::json model_to_json(const MtlModel& m) {
  using detail::json;
  json kernels = json::array();
  for (const auto& k : m.kernels) kernels.push_back(k.name());
  std::string steps;
  for (auto s : m.trace_steps) steps += block_step_code(s);
  json tasks = json::array();
  for (const auto& t : m.tasks) {
    tasks.push_back(json{{"id", t.task_id},
                         {"train_hash", detail::hex64(t.train_hash)},
                         {"train_x", detail::to_json_mat(t.train_x)},
                         {"train_y", detail::to_json_vec(t.train_y)},
                         {"standardizer_mean", detail::to_json_vec(t.standardizer.mean())},
                         {"standardizer_scale", detail::to_json_vec(t.standardizer.scale())},
                         {"alpha", detail::to_json_vec(t.dual.alpha)},
                         {"bias", t.dual.bias},
                         {"objective", t.dual.objective},
                         {"regularizer", t.dual.regularizer},
                         {"hinge_sum", t.dual.hinge_sum},
                         {"dual_objective", t.dual.dual_objective},
                         {"duality_gap", t.dual.duality_gap},
                         {"component_sq_norms", detail::to_json_vec(t.dual.component_sq_norms)},
                         {"iterations", t.dual.iterations},
                         {"svm_converged", t.dual.converged},
                         {"train_decision", detail::to_json_vec(t.train_decision)}});
  }
  return json{{"format", kModelFormat},
              {"version", kModelFormatVersion},
              {"config", detail::config_to_json(m.config)},
              {"kernels", kernels},
              {"theta", detail::to_json_vec(m.theta.values)},
              {"lambda", detail::to_json_vec(m.lambda.values)},
              {"budget_c", detail::to_json_vec(m.budget_c)},
              {"objective_trace", m.objective_trace},
              {"trace_steps", steps},
              {"outer_iterations", m.outer_iterations},
              {"converged", m.converged},
              {"tasks", tasks}};
}

inline MtlModel model_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format") != kModelFormat) throw ParseError("not a model document", 0);
    if (j.at("version").get<int>() != kModelFormatVersion)
      throw ParseError("unsupported model version " + j.at("version").dump(), 0);
    MtlModel m;
    m.config = detail::config_from_json(j.at("config"));
    for (const auto& k : j.at("kernels")) m.kernels.push_back(KernelSpec::parse(k.get<std::string>()));
    m.theta = {detail::vec_from_json(j.at("theta")), m.config.p};
    m.lambda = {detail::vec_from_json(j.at("lambda")), m.config.r_lambda, m.config.a};
    m.budget_c = detail::vec_from_json(j.at("budget_c"));
    m.objective_trace = j.at("objective_trace").get<std::vector<double>>();
    for (char c : j.at("trace_steps").get<std::string>())
      m.trace_steps.push_back(c == 'w' ? BlockStep::kW : (c == 't' ? BlockStep::kTheta : BlockStep::kLambda));
    m.outer_iterations = j.at("outer_iterations");
    m.converged = j.at("converged");
    for (const auto& tj : j.at("tasks")) {
      TaskModel t;
      t.task_id = tj.at("id");
      t.train_hash = std::stoull(tj.at("train_hash").get<std::string>(), nullptr, 16);
      t.train_x = detail::mat_from_json(tj.at("train_x"));
      t.train_y = detail::vec_from_json(tj.at("train_y"));
      t.standardizer = Standardizer(detail::vec_from_json(tj.at("standardizer_mean")),
                                    detail::vec_from_json(tj.at("standardizer_scale")));
      t.dual.alpha = detail::vec_from_json(tj.at("alpha"));
      t.dual.bias = tj.at("bias");
      t.dual.objective = tj.at("objective");
      t.dual.regularizer = tj.at("regularizer");
      t.dual.hinge_sum = tj.at("hinge_sum");
      t.dual.dual_objective = tj.at("dual_objective");
      t.dual.duality_gap = tj.at("duality_gap");
      t.dual.component_sq_norms = detail::vec_from_json(tj.at("component_sq_norms"));
      t.dual.iterations = tj.at("iterations");
      t.dual.converged = tj.at("svm_converged");
      t.train_decision = detail::vec_from_json(tj.at("train_decision"));
      if (training_hash(t.train_x, t.train_y) != t.train_hash)
        throw ParseError("task " + t.task_id + ": training data does not match its hash", 0);
      if (t.dual.alpha.size() != t.train_y.size() || t.train_x.rows() != t.train_y.size())
        throw ParseError("task " + t.task_id + ": inconsistent sizes", 0);
      m.tasks.push_back(std::move(t));
    }
    if (m.theta.values.size() != static_cast<Eigen::Index>(m.kernels.size()))
      throw ParseError("theta length does not match kernel list", 0);
    if (m.lambda.values.size() != static_cast<Eigen::Index>(m.tasks.size()))
      throw ParseError("lambda length does not match task list", 0);
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("model document: ") + e.what(), 0);
  }
}

inline void save_model(const std::filesystem::path& path, const MtlModel& m) {
  std::ofstream os(path);
  if (!os) throw Error("cannot open " + path.string() + " for writing");
  os << model_to_json(m).dump(1) << '\n';
}

inline MtlModel load_model(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw Error("cannot open " + path.string());
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path.string() + ": " + e.what(), 0);
  }
  return model_from_json(j);
}

}  // namespace conicmtl

// JSON bindings: fit configuration (with unknown-key rejection), simulation
// parameters, the fitted model document, the simulator's hidden-oracle
// sidecar, and run manifests.

#pragma once

#include <chrono>
#include <cstdint>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "dorm/data.hpp"
#include "dorm/errors.hpp"
#include "dorm/group_dro.hpp"
#include "dorm/pipeline.hpp"
#include "dorm/simulation.hpp"
#include "dorm/tuning.hpp"

namespace dorm {

using nlohmann::json;

namespace detail {

inline json vec_to_json(const Eigen::VectorXd& v) {
  json arr = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v[i]);
  return arr;
}

inline json mat_to_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline Eigen::VectorXd vec_from_json(const json& arr) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(arr.size()));
  for (std::size_t i = 0; i < arr.size(); ++i)
    v[static_cast<Eigen::Index>(i)] = arr[i].get<double>();
  return v;
}

inline Eigen::MatrixXd mat_from_json(const json& rows) {
  if (rows.empty()) return {};
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()),
                    static_cast<Eigen::Index>(rows[0].size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j)
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          rows[i][j].get<double>();
  return m;
}

inline void reject_unknown_keys(const json& doc,
                                const std::vector<std::string>& known,
                                const char* what) {
  for (const auto& [key, _] : doc.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end())
      throw ValidationError(std::string(what) + ": unknown key '" + key + "'");
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// FitConfig
// ---------------------------------------------------------------------------

inline json config_to_json(const FitConfig& c) {
  json doc;
  doc["s_max"] = c.s_max.size() == 1 ? json(c.s_max[0]) : json(c.s_max);
  if (c.ridge_lambda_rho >= 0.0) doc["ridge_lambda_rho"] = c.ridge_lambda_rho;
  doc["reference_strategy"] =
      c.reference_strategy == ReferenceStrategy::largest_source
          ? "largest_source"
          : "pooled_split";
  doc["pooled_fraction"] = c.pooled_fraction;
  doc["w_option"] = c.w_option == WOption::direct_ratio ? "direct_ratio"
                                                        : "mixture_ratio";
  doc["nuisance_learner"] = c.nuisance_learner == LearnerKind::ols
                                ? "ols"
                                : (c.nuisance_learner == LearnerKind::ridge
                                       ? "ridge"
                                       : "lasso");
  if (!c.nuisance_lambda_grid.empty())
    doc["nuisance_lambda_grid"] = c.nuisance_lambda_grid;
  doc["classifier_penalty"] = c.classifier_penalty;
  doc["ratio_clip"] = c.ratio_clip;
  doc["cross_fit"] = c.cross_fit;
  doc["seed"] = c.seed;
  doc["outcome_penalty"] =
      c.outcome_penalty == PenaltyKind::none
          ? "none"
          : (c.outcome_penalty == PenaltyKind::ridge ? "ridge" : "lasso");
  if (!c.outcome_lambda_grid.empty())
    doc["outcome_lambda_grid"] = c.outcome_lambda_grid;
  doc["rho_penalty_sign"] =
      c.rho_penalty_sign == RhoPenaltySign::minus ? "minus" : "plus";
  doc["cv_folds"] = c.cv_folds;
  return doc;
}

inline FitConfig config_from_json(const json& doc) {
  detail::reject_unknown_keys(
      doc,
      {"s_max", "ridge_lambda_rho", "reference_strategy", "pooled_fraction",
       "w_option", "nuisance_learner", "nuisance_lambda_grid",
       "classifier_penalty", "ratio_clip", "cross_fit", "seed",
       "outcome_penalty", "outcome_lambda_grid", "rho_penalty_sign",
       "cv_folds"},
      "config");
  FitConfig c;
  if (doc.contains("s_max")) {
    if (doc["s_max"].is_array())
      c.s_max = doc["s_max"].get<std::vector<double>>();
    else
      c.s_max = {doc["s_max"].get<double>()};
  }
  if (doc.contains("ridge_lambda_rho"))
    c.ridge_lambda_rho = doc["ridge_lambda_rho"].get<double>();
  if (doc.contains("reference_strategy")) {
    const std::string v = doc["reference_strategy"].get<std::string>();
    if (v == "largest_source")
      c.reference_strategy = ReferenceStrategy::largest_source;
    else if (v == "pooled_split")
      c.reference_strategy = ReferenceStrategy::pooled_split;
    else
      throw ValidationError("config: bad reference_strategy '" + v + "'");
  }
  if (doc.contains("pooled_fraction"))
    c.pooled_fraction = doc["pooled_fraction"].get<double>();
  if (doc.contains("w_option")) {
    const std::string v = doc["w_option"].get<std::string>();
    if (v == "direct_ratio")
      c.w_option = WOption::direct_ratio;
    else if (v == "mixture_ratio")
      c.w_option = WOption::mixture_ratio;
    else
      throw ValidationError("config: bad w_option '" + v + "'");
  }
  if (doc.contains("nuisance_learner")) {
    const std::string v = doc["nuisance_learner"].get<std::string>();
    if (v == "ols")
      c.nuisance_learner = LearnerKind::ols;
    else if (v == "ridge")
      c.nuisance_learner = LearnerKind::ridge;
    else if (v == "lasso")
      c.nuisance_learner = LearnerKind::lasso;
    else
      throw ValidationError("config: bad nuisance_learner '" + v + "'");
  }
  if (doc.contains("nuisance_lambda_grid"))
    c.nuisance_lambda_grid =
        doc["nuisance_lambda_grid"].get<std::vector<double>>();
  if (doc.contains("classifier_penalty"))
    c.classifier_penalty = doc["classifier_penalty"].get<std::vector<double>>();
  if (doc.contains("ratio_clip")) c.ratio_clip = doc["ratio_clip"].get<double>();
  if (doc.contains("cross_fit")) c.cross_fit = doc["cross_fit"].get<bool>();
  if (doc.contains("seed")) c.seed = doc["seed"].get<std::uint64_t>();
  if (doc.contains("outcome_penalty")) {
    const std::string v = doc["outcome_penalty"].get<std::string>();
    if (v == "none")
      c.outcome_penalty = PenaltyKind::none;
    else if (v == "ridge")
      c.outcome_penalty = PenaltyKind::ridge;
    else if (v == "lasso")
      c.outcome_penalty = PenaltyKind::lasso;
    else
      throw ValidationError("config: bad outcome_penalty '" + v + "'");
  }
  if (doc.contains("outcome_lambda_grid"))
    c.outcome_lambda_grid =
        doc["outcome_lambda_grid"].get<std::vector<double>>();
  if (doc.contains("rho_penalty_sign")) {
    const std::string v = doc["rho_penalty_sign"].get<std::string>();
    if (v == "minus")
      c.rho_penalty_sign = RhoPenaltySign::minus;
    else if (v == "plus")
      c.rho_penalty_sign = RhoPenaltySign::plus;
    else
      throw ValidationError("config: bad rho_penalty_sign '" + v + "'");
  }
  if (doc.contains("cv_folds")) c.cv_folds = doc["cv_folds"].get<int>();
  return c;
}

// ---------------------------------------------------------------------------
// SimParams
// ---------------------------------------------------------------------------

inline json sim_params_to_json(const SimParams& raw) {
  const SimParams sp = raw.resolved();
  json doc;
  doc["L"] = sp.L;
  doc["N_l"] = sp.N_l;
  doc["n_l"] = sp.n_l;
  doc["N0"] = sp.N0;
  doc["n_dagger"] = sp.n_dagger;
  doc["p"] = sp.p;
  doc["q"] = sp.q;
  doc["k"] = sp.k;
  doc["noise_y"] = sp.noise_y;
  doc["noise_w"] = sp.noise_w;
  doc["sigma_a"] = sp.sigma_a;
  doc["mu"] = detail::mat_to_json(sp.mu);
  doc["alpha"] = detail::mat_to_json(sp.alpha);
  doc["gamma_w"] = detail::mat_to_json(sp.gamma_w);
  doc["rho_star"] = detail::vec_to_json(sp.rho_star);
  doc["s_star"] = sp.s_star;
  if (sp.delta_star.size() > 0)
    doc["delta_star"] = detail::vec_to_json(sp.delta_star);
  doc["contamination"] =
      sp.contamination == Contamination::none
          ? "none"
          : (sp.contamination == Contamination::conditional_mix
                 ? "conditional_mix"
                 : "joint_epsilon");
  doc["epsilon"] = {{"base_site", sp.epsilon.base_site},
                    {"quad_coord", sp.epsilon.quad_coord},
                    {"quad_scale", sp.epsilon.quad_scale},
                    {"x_shift", sp.epsilon.x_shift}};
  doc["seed"] = sp.seed;
  return doc;
}

inline SimParams sim_params_from_json(const json& doc) {
  detail::reject_unknown_keys(
      doc, {"L", "N_l", "n_l", "N0", "n_dagger", "p", "q", "k", "noise_y",
            "noise_w", "sigma_a", "mu", "alpha", "gamma_w", "rho_star",
            "s_star", "delta_star", "contamination", "epsilon", "seed"},
      "sim params");
  SimParams sp;
  if (doc.contains("L")) sp.L = doc["L"].get<int>();
  if (doc.contains("N_l")) sp.N_l = doc["N_l"].get<Eigen::Index>();
  if (doc.contains("n_l")) sp.n_l = doc["n_l"].get<Eigen::Index>();
  if (doc.contains("N0")) sp.N0 = doc["N0"].get<Eigen::Index>();
  if (doc.contains("n_dagger"))
    sp.n_dagger = doc["n_dagger"].get<Eigen::Index>();
  if (doc.contains("p")) sp.p = doc["p"].get<int>();
  if (doc.contains("q")) sp.q = doc["q"].get<int>();
  if (doc.contains("k")) sp.k = doc["k"].get<double>();
  if (doc.contains("noise_y")) sp.noise_y = doc["noise_y"].get<double>();
  if (doc.contains("noise_w")) sp.noise_w = doc["noise_w"].get<double>();
  if (doc.contains("sigma_a")) sp.sigma_a = doc["sigma_a"].get<double>();
  if (doc.contains("mu")) sp.mu = detail::mat_from_json(doc["mu"]);
  if (doc.contains("alpha")) sp.alpha = detail::mat_from_json(doc["alpha"]);
  if (doc.contains("gamma_w"))
    sp.gamma_w = detail::mat_from_json(doc["gamma_w"]);
  if (doc.contains("rho_star"))
    sp.rho_star = detail::vec_from_json(doc["rho_star"]);
  if (doc.contains("s_star")) sp.s_star = doc["s_star"].get<double>();
  if (doc.contains("delta_star"))
    sp.delta_star = detail::vec_from_json(doc["delta_star"]);
  if (doc.contains("contamination")) {
    const std::string v = doc["contamination"].get<std::string>();
    if (v == "none")
      sp.contamination = Contamination::none;
    else if (v == "conditional_mix")
      sp.contamination = Contamination::conditional_mix;
    else if (v == "joint_epsilon")
      sp.contamination = Contamination::joint_epsilon;
    else
      throw ValidationError("sim params: bad contamination '" + v + "'");
  }
  if (doc.contains("epsilon")) {
    const json& e = doc["epsilon"];
    detail::reject_unknown_keys(
        e, {"base_site", "quad_coord", "quad_scale", "x_shift"}, "epsilon");
    if (e.contains("base_site"))
      sp.epsilon.base_site = e["base_site"].get<int>();
    if (e.contains("quad_coord"))
      sp.epsilon.quad_coord = e["quad_coord"].get<int>();
    if (e.contains("quad_scale"))
      sp.epsilon.quad_scale = e["quad_scale"].get<double>();
    if (e.contains("x_shift")) sp.epsilon.x_shift = e["x_shift"].get<double>();
  }
  if (doc.contains("seed")) sp.seed = doc["seed"].get<std::uint64_t>();
  return sp;
}

// ---------------------------------------------------------------------------
// Fitted model document
// ---------------------------------------------------------------------------

inline const char* fold_tag_name(FoldTag tag) {
  switch (tag) {
    case FoldTag::full: return "full";
    case FoldTag::fold_a: return "A";
    case FoldTag::fold_b: return "B";
    case FoldTag::averaged: return "averaged";
  }
  return "full";
}

inline json model_to_json(const DormModel& model) {
  json doc;
  doc["coef"] = detail::vec_to_json(model.coef);
  doc["gamma"] = {{"values", detail::vec_to_json(model.gamma.gamma)},
                  {"objective", model.gamma.objective}};
  doc["rho"] = detail::vec_to_json(model.rho.rho);
  doc["rho_detail"] = {{"objective", model.rho.objective},
                       {"iterations", model.rho.iterations}};
  doc["s_max"] = model.s_max;
  doc["gamma_matrix"] = detail::mat_to_json(model.gamma_matrix.G);
  doc["condition_flags"] = {
      {"gamma_near_singular", model.condition.gamma_near_singular},
      {"gamma_min_eigenvalue", model.condition.gamma_min_eigenvalue},
      {"gamma_trace", model.condition.gamma_trace}};
  doc["betas"] = detail::mat_to_json(model.betas.betas);
  doc["sigma0"] = detail::mat_to_json(model.betas.sigma0);
  doc["fold"] = fold_tag_name(model.betas.fold_tag);
  if (!model.folds.empty()) {
    json folds = json::array();
    for (const auto& f : model.folds) {
      folds.push_back({{"fold", fold_tag_name(f.betas.fold_tag)},
                       {"betas", detail::mat_to_json(f.betas.betas)},
                       {"gamma", detail::vec_to_json(f.weights.gamma)},
                       {"objective", f.weights.objective}});
    }
    doc["folds"] = std::move(folds);
  }
  return doc;
}

inline json fit_result_to_json(const FitResult& result, const FitConfig& config) {
  json doc = model_to_json(result.model);
  doc["config"] = config_to_json(config);
  doc["baselines"] = {{"simple_ave", detail::vec_to_json(result.bench.simple_ave)},
                      {"rho_ave", detail::vec_to_json(result.bench.rho_ave)},
                      {"maximin", detail::vec_to_json(result.bench.maximin)}};
  if (result.tuning) {
    json scores = json::array();
    for (const auto& [s, score] : result.tuning->scores)
      scores.push_back({{"s_max", s}, {"score", score}});
    doc["tuning"] = {
        {"s_hat", result.tuning->s_hat},
        {"criterion", result.tuning->criterion == TuneCriterion::mse
                          ? "mse"
                          : "surrogate_correlation"},
        {"scores", std::move(scores)},
        {"uninformative", result.tuning->uninformative}};
  }
  return doc;
}

// ---------------------------------------------------------------------------
// Simulator sidecar (hidden oracle quantities for scoring)
// ---------------------------------------------------------------------------

inline json oracle_sidecar_to_json(const SimParams& params,
                                   const TargetBundle& bundle) {
  json doc;
  doc["params"] = sim_params_to_json(params);
  doc["hidden_y"] = detail::vec_to_json(bundle.hidden_y);
  doc["eta"] = detail::mat_to_json(bundle.eta);
  doc["cond_means"] = detail::mat_to_json(bundle.cond_means);
  doc["latent"] = bundle.latent;
  doc["joint_contaminated"] = json::array();
  for (char c : bundle.joint_contaminated)
    doc["joint_contaminated"].push_back(static_cast<int>(c));
  doc["delta_used"] = detail::vec_to_json(bundle.delta_used);
  return doc;
}

// Rebuilds the evaluation bundle from data.csv + sidecar.
inline TargetBundle oracle_sidecar_from_json(const json& doc,
                                             TargetDataset target,
                                             SimParams* params_out) {
  TargetBundle bundle;
  if (params_out) *params_out = sim_params_from_json(doc.at("params"));
  bundle.data = std::move(target);
  bundle.hidden_y = detail::vec_from_json(doc.at("hidden_y"));
  bundle.eta = detail::mat_from_json(doc.at("eta"));
  bundle.cond_means = detail::mat_from_json(doc.at("cond_means"));
  bundle.latent = doc.at("latent").get<std::vector<int>>();
  bundle.joint_contaminated.clear();
  for (const auto& v : doc.at("joint_contaminated"))
    bundle.joint_contaminated.push_back(static_cast<char>(v.get<int>()));
  bundle.delta_used = detail::vec_from_json(doc.at("delta_used"));
  return bundle;
}

// ---------------------------------------------------------------------------
// Manifests and digests
// ---------------------------------------------------------------------------

inline std::string fnv1a_hex(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(h));
  return std::string(buf);
}

inline std::string file_digest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("digest: cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return fnv1a_hex(ss.str());
}

struct RunManifest {
  std::string command;
  json config;
  std::vector<std::pair<std::string, std::string>> inputs;  // path, digest
  std::uint64_t seed = 0;
  std::string version = "0.1.0";
  double wall_clock_sec = 0.0;
  std::vector<std::string> outputs;

  json to_json() const {
    json doc;
    doc["command"] = command;
    doc["config"] = config;
    json in = json::object();
    for (const auto& [path, digest] : inputs) in[path] = digest;
    doc["inputs"] = in;
    doc["seed"] = seed;
    doc["version"] = version;
    doc["wall_clock_sec"] = wall_clock_sec;
    doc["outputs"] = outputs;
    return doc;
  }
};

}  // namespace dorm

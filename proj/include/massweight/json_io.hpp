#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "massweight/estimator.hpp"
#include "massweight/synthetic.hpp"
#include "massweight/types.hpp"
#include "massweight/version.hpp"

namespace massweight {

using json = nlohmann::json;

/// Reproducibility header embedded in every output file: the command, its
/// full configuration, the seed and method, and the tool version.
struct RunManifest {
  std::string command;
  json config = json::object();
  std::uint64_t seed = 0;
  std::string method;
  std::vector<std::string> outputs;
  std::string version = kVersion;
};

inline json to_json(const RunManifest& m) {
  return json{{"command", m.command}, {"config", m.config},   {"seed", m.seed},
              {"method", m.method},   {"outputs", m.outputs}, {"version", m.version}};
}

/// NaN and infinity are not JSON numbers; undetermined values map to null
/// and the +infinity sentinel to the string "inf".
inline json number_or_sentinel(double v) {
  if (std::isnan(v)) return nullptr;
  if (std::isinf(v)) return v > 0 ? json("inf") : json("-inf");
  return v;
}

inline json to_json(const EstimateReport& rep) {
  return json{{"fbar_new", number_or_sentinel(rep.fbar_new)},
              {"fbar_blue", number_or_sentinel(rep.fbar_blue)},
              {"z_used", number_or_sentinel(rep.z_used)},
              {"case", to_string(rep.boundary)},
              {"z_mode", to_string(rep.z_mode)},
              {"per_point_var_new", rep.per_point_var_new},
              {"per_point_var_blue", rep.per_point_var_blue}};
}

inline json to_json(const SyntheticConfig& cfg) {
  json j{{"a", cfg.dist.a},
         {"b", cfg.dist.b},
         {"n_draws", cfg.n_draws},
         {"m", cfg.m},
         {"seed", cfg.seed}};
  j["regime"] = cfg.regime ? json(to_string(*cfg.regime)) : json(nullptr);
  return j;
}

inline SyntheticConfig synthetic_config_from_json(const json& j) {
  SyntheticConfig cfg;
  try {
    if (j.contains("regime") && !j["regime"].is_null()) {
      cfg = regime_config(regime_from_string(j["regime"].get<std::string>()));
    }
    if (j.contains("a")) cfg.dist.a = j["a"].get<double>();
    if (j.contains("b")) cfg.dist.b = j["b"].get<double>();
    if (j.contains("n_draws")) cfg.n_draws = j["n_draws"].get<std::uint64_t>();
    if (j.contains("m")) cfg.m = j["m"].get<int>();
    if (j.contains("seed")) cfg.seed = j["seed"].get<std::uint64_t>();
  } catch (const json::exception& e) {
    throw ParseError(std::string("bad synthetic config: ") + e.what());
  }
  return cfg;
}

/// Row-major matrix serialization with an index legend naming the
/// rows/columns.
inline json matrix_to_json(const MatrixXd& m, const std::vector<std::string>& index) {
  json data = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) data.push_back(m(i, j));
  return json{{"rows", m.rows()}, {"cols", m.cols()}, {"index", index}, {"data", data}};
}

}  // namespace massweight

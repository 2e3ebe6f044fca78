#pragma once

// Config-file driven run description. A single JSON document with nested
// sections; unknown keys anywhere are rejected so typos cannot silently
// change a run.

#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "igsense/core.hpp"
#include "igsense/model.hpp"

namespace igsense {

struct SweepSpec {
  bool present = false;
  std::vector<std::string> params;  // one or two parameter names
  std::vector<int> counts;
  Mat ranges;  // per swept parameter [lo, hi]
};

struct GsaSpec {
  bool present = false;
  int n_samples = 500;
  std::uint64_t seed = 11;
};

struct RunConfig {
  std::string model;  // "twobytwo" | "elliptic"
  std::string output = "out";

  int rank = -1;  // -1: number of observations
  int oversample = 10;
  std::uint64_t eig_seed = 1;

  // elliptic
  int mesh_n = 32;
  std::optional<Mat> obs_points;  // default: interior 3x3 lattice
  double noise_scale = 0.01;
  std::string noise_rule = "rel_inf";
  std::uint64_t noise_seed = 42;
  double prior_mean = 0.0;
  std::string mass_inverse = "cg";  // "cg" | "lumped"

  // twobytwo
  Vec u_obs = (Vec(2) << 0.15, 0.05).finished();
  double sigma = 0.1;

  // auxiliary parameters (defaults filled per model)
  std::vector<std::string> theta_names;
  Vec theta_nominal;
  Mat theta_box;
  double alpha = 0.05;

  SweepSpec sweep;
  GsaSpec gsa;
};

namespace detail {

using json = nlohmann::json;

inline void require_keys(const json& obj, const std::string& where,
                         const std::set<std::string>& allowed) {
  if (!obj.is_object()) throw ConfigError(where + ": expected an object");
  for (const auto& item : obj.items())
    if (!allowed.count(item.key()))
      throw ConfigError(where + ": unknown key '" + item.key() + "'");
}

inline double as_number(const json& v, const std::string& where) {
  if (!v.is_number()) throw ConfigError(where + ": expected a number");
  return v.get<double>();
}

inline int as_int(const json& v, const std::string& where) {
  if (!v.is_number_integer()) throw ConfigError(where + ": expected an integer");
  return v.get<int>();
}

inline std::uint64_t as_seed(const json& v, const std::string& where) {
  if (!v.is_number_unsigned() && !v.is_number_integer())
    throw ConfigError(where + ": expected a nonnegative integer");
  const auto s = v.get<std::int64_t>();
  if (s < 0) throw ConfigError(where + ": seed must be nonnegative");
  return static_cast<std::uint64_t>(s);
}

inline Vec as_vector(const json& v, const std::string& where) {
  if (!v.is_array()) throw ConfigError(where + ": expected an array of numbers");
  Vec out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out(static_cast<Eigen::Index>(i)) = as_number(v[i], where);
  return out;
}

inline Mat as_pairs(const json& v, const std::string& where) {
  if (!v.is_array()) throw ConfigError(where + ": expected an array of [lo, hi] pairs");
  Mat out(v.size(), 2);
  for (std::size_t i = 0; i < v.size(); ++i) {
    const Vec pair = as_vector(v[i], where);
    if (pair.size() != 2) throw ConfigError(where + ": each entry must be a [lo, hi] pair");
    out.row(static_cast<Eigen::Index>(i)) = pair.transpose();
  }
  return out;
}

}  // namespace detail

inline RunConfig parse_config(const nlohmann::json& j) {
  using detail::as_int;
  using detail::as_number;
  using detail::as_pairs;
  using detail::as_seed;
  using detail::as_vector;
  using detail::require_keys;

  require_keys(j, "config",
               {"model", "output", "rank", "oversample", "eig_seed", "mesh", "observations",
                "noise", "prior", "twobytwo", "theta", "sweep", "gsa"});

  RunConfig cfg;
  if (!j.contains("model")) throw ConfigError("config: missing required key 'model'");
  cfg.model = j.at("model").get<std::string>();
  if (cfg.model != "twobytwo" && cfg.model != "elliptic")
    throw ConfigError("config: model must be 'twobytwo' or 'elliptic'");

  if (j.contains("output")) cfg.output = j.at("output").get<std::string>();
  if (j.contains("rank")) cfg.rank = as_int(j.at("rank"), "rank");
  if (j.contains("oversample")) cfg.oversample = as_int(j.at("oversample"), "oversample");
  if (cfg.oversample < 0) throw ConfigError("oversample: must be nonnegative");
  if (j.contains("eig_seed")) cfg.eig_seed = as_seed(j.at("eig_seed"), "eig_seed");

  if (j.contains("mesh")) {
    if (cfg.model != "elliptic") throw ConfigError("mesh: only meaningful for the elliptic model");
    require_keys(j.at("mesh"), "mesh", {"n"});
    if (j.at("mesh").contains("n")) cfg.mesh_n = as_int(j.at("mesh").at("n"), "mesh.n");
    if (cfg.mesh_n < 2) throw ConfigError("mesh.n: need at least 2 cells per side");
  }

  if (j.contains("observations")) {
    if (cfg.model != "elliptic")
      throw ConfigError("observations: only meaningful for the elliptic model");
    require_keys(j.at("observations"), "observations", {"points"});
    if (j.at("observations").contains("points")) {
      const auto& pts = j.at("observations").at("points");
      if (!pts.is_array() || pts.empty())
        throw ConfigError("observations.points: expected a nonempty array of [x, y] pairs");
      Mat m(pts.size(), 2);
      for (std::size_t i = 0; i < pts.size(); ++i) {
        const Vec p = as_vector(pts[i], "observations.points");
        if (p.size() != 2) throw ConfigError("observations.points: each point is [x, y]");
        m.row(static_cast<Eigen::Index>(i)) = p.transpose();
      }
      cfg.obs_points = m;
    }
  }

  if (j.contains("noise")) {
    if (cfg.model != "elliptic") throw ConfigError("noise: only meaningful for the elliptic model");
    require_keys(j.at("noise"), "noise", {"rule", "scale", "seed"});
    const auto& n = j.at("noise");
    if (n.contains("rule")) cfg.noise_rule = n.at("rule").get<std::string>();
    if (cfg.noise_rule != "rel_inf")
      throw ConfigError("noise.rule: only 'rel_inf' is supported");
    if (n.contains("scale")) cfg.noise_scale = as_number(n.at("scale"), "noise.scale");
    if (cfg.noise_scale < 0.0) throw ConfigError("noise.scale: must be nonnegative");
    if (n.contains("seed")) cfg.noise_seed = as_seed(n.at("seed"), "noise.seed");
  }

  if (j.contains("prior")) {
    if (cfg.model != "elliptic")
      throw ConfigError("prior: the analytic model prior is fixed to the identity");
    require_keys(j.at("prior"), "prior", {"mean", "mass_inverse"});
    const auto& p = j.at("prior");
    if (p.contains("mean")) cfg.prior_mean = as_number(p.at("mean"), "prior.mean");
    if (p.contains("mass_inverse")) cfg.mass_inverse = p.at("mass_inverse").get<std::string>();
    if (cfg.mass_inverse != "cg" && cfg.mass_inverse != "lumped")
      throw ConfigError("prior.mass_inverse: expected 'cg' or 'lumped'");
  }

  if (j.contains("twobytwo")) {
    if (cfg.model != "twobytwo") throw ConfigError("twobytwo: section requires model 'twobytwo'");
    require_keys(j.at("twobytwo"), "twobytwo", {"u_obs", "sigma"});
    const auto& t = j.at("twobytwo");
    if (t.contains("u_obs")) {
      cfg.u_obs = as_vector(t.at("u_obs"), "twobytwo.u_obs");
      if (cfg.u_obs.size() != 2) throw ConfigError("twobytwo.u_obs: expected two entries");
    }
    if (t.contains("sigma")) cfg.sigma = as_number(t.at("sigma"), "twobytwo.sigma");
    if (!(cfg.sigma > 0.0)) throw ConfigError("twobytwo.sigma: must be positive");
  }

  // model defaults for the auxiliary parameters
  if (cfg.model == "twobytwo") {
    cfg.theta_names = {"theta1", "theta2"};
    cfg.theta_nominal = (Vec(2) << 0.5, 0.5).finished();
    cfg.theta_box = (Mat(2, 2) << 0.0, 1.0, 0.0, 1.0).finished();
  } else {
    cfg.theta_names = {"c", "g"};
    cfg.theta_nominal = (Vec(2) << 1.0, 0.1).finished();
    cfg.theta_box = (Mat(2, 2) << 0.5, 2.0, 0.02, 0.5).finished();
  }

  if (j.contains("theta")) {
    require_keys(j.at("theta"), "theta", {"names", "nominal", "box", "alpha"});
    const auto& t = j.at("theta");
    if (t.contains("names")) {
      cfg.theta_names.clear();
      for (const auto& name : t.at("names")) cfg.theta_names.push_back(name.get<std::string>());
    }
    if (t.contains("nominal")) cfg.theta_nominal = as_vector(t.at("nominal"), "theta.nominal");
    if (t.contains("box")) cfg.theta_box = as_pairs(t.at("box"), "theta.box");
    if (t.contains("alpha")) cfg.alpha = as_number(t.at("alpha"), "theta.alpha");
    if (cfg.alpha < 0.0 || cfg.alpha >= 1.0) throw ConfigError("theta.alpha: expected [0, 1)");
  }
  if (cfg.theta_names.size() != 2 || cfg.theta_nominal.size() != 2 || cfg.theta_box.rows() != 2)
    throw ConfigError("theta: both built-in models take exactly two auxiliary parameters");

  if (j.contains("sweep")) {
    require_keys(j.at("sweep"), "sweep", {"params", "counts", "ranges"});
    const auto& s = j.at("sweep");
    cfg.sweep.present = true;
    if (!s.contains("params") || !s.contains("counts") || !s.contains("ranges"))
      throw ConfigError("sweep: needs 'params', 'counts', and 'ranges'");
    for (const auto& name : s.at("params")) cfg.sweep.params.push_back(name.get<std::string>());
    for (const auto& c : s.at("counts")) cfg.sweep.counts.push_back(as_int(c, "sweep.counts"));
    cfg.sweep.ranges = as_pairs(s.at("ranges"), "sweep.ranges");
    if (cfg.sweep.params.empty() || cfg.sweep.params.size() > 2)
      throw ConfigError("sweep.params: sweeps cover one or two parameters");
    if (cfg.sweep.counts.size() != cfg.sweep.params.size() ||
        cfg.sweep.ranges.rows() != static_cast<Eigen::Index>(cfg.sweep.params.size()))
      throw ConfigError("sweep: params, counts, and ranges must have matching lengths");
    for (int c : cfg.sweep.counts)
      if (c < 2) throw ConfigError("sweep.counts: need at least two points per axis");
  }

  if (j.contains("gsa")) {
    require_keys(j.at("gsa"), "gsa", {"n_samples", "seed"});
    const auto& g = j.at("gsa");
    cfg.gsa.present = true;
    if (g.contains("n_samples")) cfg.gsa.n_samples = as_int(g.at("n_samples"), "gsa.n_samples");
    if (cfg.gsa.n_samples < 2) throw ConfigError("gsa.n_samples: need at least two samples");
    if (g.contains("seed")) cfg.gsa.seed = as_seed(g.at("seed"), "gsa.seed");
  }

  return cfg;
}

inline RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config parse error in " + path.string() + ": " + e.what());
  }
  return parse_config(j);
}

}  // namespace igsense

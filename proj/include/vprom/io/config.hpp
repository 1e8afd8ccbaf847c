#pragma once

#include <cstdint>
#include <filesystem>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "vprom/cvae/cvae.hpp"
#include "vprom/doe.hpp"
#include "vprom/error.hpp"
#include "vprom/fom/simulate.hpp"
#include "vprom/io/container.hpp"

namespace vprom::io {

using Json = nlohmann::json;

/// Everything a campaign needs. JSON documents override a preset field by field.
struct Config {
  std::string preset = "desk";

  fom::ShearFrameLayout layout;
  fom::BoucWenParams link_law;
  double energy_norm_factor = 20.0;  // energy_norm = factor * z_u^2
  double reference_modulus = 210e9;
  double dt = 0.0025;
  double duration = 6.0;
  std::uint64_t excitation_seed = 1;
  fom::NewmarkOptions newmark;

  doe::ParameterDomain domain = doe::benchmark_domain();
  std::size_t n_train = 20;
  std::size_t n_valid = 50;
  std::uint64_t seed_train = 11;
  std::uint64_t seed_valid = 22;

  int r = 8;
  int r_global = 64;

  double mac_tolerance = 0.1;
  std::size_t max_clusters = 8;
  std::size_t knn = 3;

  std::size_t k_int = 0;
  double cprom_ridge = 1e-3;

  cvae::TrainConfig cvae;
  std::size_t uq_draws = 40;

  double tau = 0.01;
  std::size_t ecsw_stride = 5;
  std::size_t ecsw_neighbours = 3;

  double settle_fraction = 0.01;
  std::size_t workers = 1;

  fom::Benchmark benchmark() const {
    fom::Benchmark bm;
    bm.frame = fom::make_shear_frame(layout);
    bm.link_law = link_law;
    bm.link_law.energy_norm = energy_norm_factor * std::pow(link_law.ultimate_z(), 2);
    bm.reference_modulus = reference_modulus;
    bm.dt = dt;
    bm.duration = duration;
    bm.noise_seed = excitation_seed;
    bm.newmark = newmark;
    bm.domain = domain;
    return bm;
  }

  void validate() const {
    domain.validate();
    link_law.validate();
    if (!(dt > 0.0) || !(duration > dt)) throw ConfigError("config: dt must be positive and below the duration");
    if (n_train < 1 || n_valid < 1) throw ConfigError("config: sample counts must be positive");
    if (r < 1 || r_global < r) throw ConfigError("config: need 1 <= r <= r_global");
    if (r_global > layout.n_stories * layout.dofs_per_story) {
      throw ConfigError("config: r_global exceeds the number of DOFs");
    }
    if (!(tau > 0.0 && tau <= 1.0)) throw ConfigError("config: tau must be in (0, 1]");
    if (knn < 1 || ecsw_stride < 1 || uq_draws < 1) throw ConfigError("config: knn, ecsw_stride and uq_draws must be >= 1");
    cvae.validate();
  }
};

/// Desk preset: 20 training and 50 validation samples, r = 8, r_global = 64,
/// an 8-story frame with 10 DOFs per story.
inline Config desk_preset() {
  Config c;
  c.preset = "desk";
  c.layout.n_stories = 8;
  c.layout.dofs_per_story = 10;
  c.layout.story_mass = 2.0e5;
  c.layout.rayleigh = fom::RayleighDamping{0.2, 0.002};
  c.link_law.A = 1.0;
  c.link_law.beta = 10.0;
  c.link_law.gamma = 10.0;
  c.link_law.w = 1.0;
  c.link_law.delta_nu = 0.0;
  return c;
}

/// Full-size preset: 50 training and 500 validation samples, r = 16,
/// r_global = 200 on a 20-story frame with 12 DOFs per story.
inline Config paper_preset() {
  Config c = desk_preset();
  c.preset = "paper";
  c.layout.n_stories = 20;
  c.layout.dofs_per_story = 12;
  c.n_train = 50;
  c.n_valid = 500;
  c.r = 16;
  c.r_global = 200;
  c.max_clusters = 12;
  return c;
}

inline Config preset(const std::string& name) {
  if (name == "desk") return desk_preset();
  if (name == "paper") return paper_preset();
  throw ConfigError("unknown preset '" + name + "' (expected desk or paper)");
}

namespace detail {

template <class T>
void read_opt(const Json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config: " + where + "." + key + ": " + e.what());
  }
}

inline const Json& section(const Json& j, const char* key) {
  static const Json empty = Json::object();
  if (!j.contains(key)) return empty;
  if (!j.at(key).is_object()) throw ConfigError(std::string("config: '") + key + "' must be an object");
  return j.at(key);
}

inline std::pair<std::size_t, std::size_t> line_col(const std::string& text, std::size_t byte) {
  std::size_t line = 1, col = 1;
  for (std::size_t i = 0; i < text.size() && i + 1 < byte; ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return {line, col};
}

}  // namespace detail

inline Json parse_json(const std::string& text, const std::string& origin) {
  try {
    return Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    const auto [line, col] = detail::line_col(text, e.byte);
    throw ConfigError(origin + ":" + std::to_string(line) + ":" + std::to_string(col) + ": malformed config: " +
                      e.what());
  }
}

/// Build a configuration from a JSON document. Unknown top-level sections
/// are rejected so misspelled keys do not pass silently.
inline Config config_from_json(const Json& j, const std::string& preset_override = {}) {
  if (!j.is_object()) throw ConfigError("config: document must be an object");
  static const char* known[] = {"preset", "frame", "link", "time", "newmark", "domain", "doe", "reduction",
                                "mac",    "cprom", "vprom", "hyper", "metrics", "workers"};
  for (const auto& [key, _] : j.items()) {
    bool ok = false;
    for (const char* k : known) ok = ok || key == k;
    if (!ok) throw ConfigError("config: unknown key '" + key + "'");
  }
  std::string name = preset_override;
  if (name.empty()) name = j.value("preset", std::string("desk"));
  Config c = preset(name);
  using detail::read_opt;
  using detail::section;

  const Json& fr = section(j, "frame");
  read_opt(fr, "n_stories", c.layout.n_stories, "frame");
  read_opt(fr, "dofs_per_story", c.layout.dofs_per_story, "frame");
  read_opt(fr, "story_mass", c.layout.story_mass, "frame");
  read_opt(fr, "theta", c.layout.theta, "frame");
  read_opt(fr, "floor_coupling", c.layout.floor_coupling, "frame");
  read_opt(fr, "height_taper", c.layout.height_taper, "frame");
  read_opt(fr, "irregularity", c.layout.irregularity, "frame");
  if (fr.contains("rayleigh")) {
    if (fr.at("rayleigh").is_null()) {
      c.layout.rayleigh.reset();
    } else {
      fom::RayleighDamping rd = c.layout.rayleigh.value_or(fom::RayleighDamping{});
      read_opt(fr.at("rayleigh"), "a0", rd.a0, "frame.rayleigh");
      read_opt(fr.at("rayleigh"), "a1", rd.a1, "frame.rayleigh");
      c.layout.rayleigh = rd;
    }
  }

  const Json& ln = section(j, "link");
  read_opt(ln, "A", c.link_law.A, "link");
  read_opt(ln, "beta", c.link_law.beta, "link");
  read_opt(ln, "gamma", c.link_law.gamma, "link");
  read_opt(ln, "w", c.link_law.w, "link");
  read_opt(ln, "delta_nu", c.link_law.delta_nu, "link");
  read_opt(ln, "energy_norm_factor", c.energy_norm_factor, "link");
  read_opt(ln, "reference_modulus", c.reference_modulus, "link");

  const Json& tm = section(j, "time");
  read_opt(tm, "dt", c.dt, "time");
  read_opt(tm, "duration", c.duration, "time");
  read_opt(tm, "excitation_seed", c.excitation_seed, "time");

  const Json& nm = section(j, "newmark");
  read_opt(nm, "rel_tol", c.newmark.rel_tol, "newmark");
  read_opt(nm, "max_iter", c.newmark.max_iter, "newmark");
  read_opt(nm, "max_halvings", c.newmark.max_halvings, "newmark");

  if (j.contains("domain")) {
    const Json& dom = j.at("domain");
    if (!dom.is_array() || dom.empty()) throw ConfigError("config: 'domain' must be a non-empty array");
    doe::ParameterDomain d;
    for (std::size_t i = 0; i < dom.size(); ++i) {
      const Json& e = dom.at(i);
      const std::string where = "domain[" + std::to_string(i) + "]";
      for (const char* key : {"name", "lower", "upper"}) {
        if (!e.is_object() || !e.contains(key)) throw ConfigError("config: " + where + " is missing key '" + key + "'");
      }
      try {
        d.names.push_back(e.at("name").get<std::string>());
        d.lower.push_back(e.at("lower").get<double>());
        d.upper.push_back(e.at("upper").get<double>());
      } catch (const nlohmann::json::exception& ex) {
        throw ConfigError("config: " + where + ": " + ex.what());
      }
    }
    c.domain = d;
  }

  const Json& de = section(j, "doe");
  read_opt(de, "n_train", c.n_train, "doe");
  read_opt(de, "n_valid", c.n_valid, "doe");
  read_opt(de, "seed_train", c.seed_train, "doe");
  read_opt(de, "seed_valid", c.seed_valid, "doe");

  const Json& rd = section(j, "reduction");
  read_opt(rd, "r", c.r, "reduction");
  read_opt(rd, "r_global", c.r_global, "reduction");

  const Json& mc = section(j, "mac");
  read_opt(mc, "tolerance", c.mac_tolerance, "mac");
  read_opt(mc, "max_clusters", c.max_clusters, "mac");
  read_opt(mc, "k", c.knn, "mac");

  const Json& cp = section(j, "cprom");
  read_opt(cp, "k_int", c.k_int, "cprom");
  read_opt(cp, "ridge", c.cprom_ridge, "cprom");

  const Json& vp = section(j, "vprom");
  read_opt(vp, "epochs", c.cvae.epochs, "vprom");
  read_opt(vp, "batch_size", c.cvae.batch_size, "vprom");
  read_opt(vp, "learning_rate", c.cvae.learning_rate, "vprom");
  c.cvae.final_learning_rate = c.cvae.learning_rate;
  read_opt(vp, "final_learning_rate", c.cvae.final_learning_rate, "vprom");
  read_opt(vp, "seed", c.cvae.seed, "vprom");
  read_opt(vp, "n_latent_samples", c.cvae.n_latent_samples, "vprom");
  read_opt(vp, "latent_dim", c.cvae.latent_dim, "vprom");
  if (vp.contains("hidden")) {
    std::vector<Eigen::Index> h;
    read_opt(vp, "hidden", h, "vprom");
    c.cvae.hidden = h;
  }
  if (vp.contains("activation")) c.cvae.activation = cvae::activation_from_string(vp.at("activation").get<std::string>());
  read_opt(vp, "uq_draws", c.uq_draws, "vprom");

  const Json& hy = section(j, "hyper");
  read_opt(hy, "tau", c.tau, "hyper");
  read_opt(hy, "stride", c.ecsw_stride, "hyper");
  read_opt(hy, "neighbours", c.ecsw_neighbours, "hyper");

  const Json& me = section(j, "metrics");
  read_opt(me, "settle_fraction", c.settle_fraction, "metrics");

  read_opt(j, "workers", c.workers, "config");
  c.preset = name;
  c.validate();
  return c;
}

/// Canonical JSON form of a configuration; round-trips through config_from_json.
inline Json config_to_json(const Config& c) {
  Json j;
  j["preset"] = c.preset;
  j["frame"] = {{"n_stories", c.layout.n_stories},           {"dofs_per_story", c.layout.dofs_per_story},
                {"story_mass", c.layout.story_mass},         {"theta", c.layout.theta},
                {"floor_coupling", c.layout.floor_coupling}, {"height_taper", c.layout.height_taper},
                {"irregularity", c.layout.irregularity}};
  j["frame"]["rayleigh"] = c.layout.rayleigh ? Json{{"a0", c.layout.rayleigh->a0}, {"a1", c.layout.rayleigh->a1}}
                                             : Json(nullptr);
  j["link"] = {{"A", c.link_law.A},
               {"beta", c.link_law.beta},
               {"gamma", c.link_law.gamma},
               {"w", c.link_law.w},
               {"delta_nu", c.link_law.delta_nu},
               {"energy_norm_factor", c.energy_norm_factor},
               {"reference_modulus", c.reference_modulus}};
  j["time"] = {{"dt", c.dt}, {"duration", c.duration}, {"excitation_seed", c.excitation_seed}};
  j["newmark"] = {{"rel_tol", c.newmark.rel_tol}, {"max_iter", c.newmark.max_iter}, {"max_halvings", c.newmark.max_halvings}};
  j["domain"] = Json::array();
  for (std::size_t i = 0; i < c.domain.dim(); ++i) {
    j["domain"].push_back({{"name", c.domain.names[i]}, {"lower", c.domain.lower[i]}, {"upper", c.domain.upper[i]}});
  }
  j["doe"] = {{"n_train", c.n_train}, {"n_valid", c.n_valid}, {"seed_train", c.seed_train}, {"seed_valid", c.seed_valid}};
  j["reduction"] = {{"r", c.r}, {"r_global", c.r_global}};
  j["mac"] = {{"tolerance", c.mac_tolerance}, {"max_clusters", c.max_clusters}, {"k", c.knn}};
  j["cprom"] = {{"k_int", c.k_int}, {"ridge", c.cprom_ridge}};
  j["vprom"] = {{"epochs", c.cvae.epochs},
                {"batch_size", c.cvae.batch_size},
                {"learning_rate", c.cvae.learning_rate},
                {"final_learning_rate", c.cvae.final_learning_rate},
                {"seed", c.cvae.seed},
                {"n_latent_samples", c.cvae.n_latent_samples},
                {"latent_dim", c.cvae.latent_dim},
                {"hidden", c.cvae.hidden},
                {"activation", cvae::to_string(c.cvae.activation)},
                {"uq_draws", c.uq_draws}};
  j["hyper"] = {{"tau", c.tau}, {"stride", c.ecsw_stride}, {"neighbours", c.ecsw_neighbours}};
  j["metrics"] = {{"settle_fraction", c.settle_fraction}};
  j["workers"] = c.workers;
  return j;
}

inline Config load_config(const std::filesystem::path& path, const std::string& preset_override = {}) {
  const std::string text = read_file(path);
  return config_from_json(parse_json(text, path.string()), preset_override);
}

/// FNV-1a over a string, printed as 16 hex digits.
inline std::string hash_hex(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  std::ostringstream os;
  os << std::hex;
  os.width(16);
  os.fill('0');
  os << h;
  return os.str();
}

/// Hash of the canonical configuration. Worker count does not affect results
/// and is left out.
inline std::string config_hash(const Config& c) {
  Json j = config_to_json(c);
  j.erase("workers");
  return hash_hex(j.dump());
}

}  // namespace vprom::io

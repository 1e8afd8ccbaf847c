#pragma once

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "vprom/cvae/cvae.hpp"
#include "vprom/cvae/uq.hpp"
#include "vprom/ecsw.hpp"
#include "vprom/grassmann.hpp"
#include "vprom/io/config.hpp"
#include "vprom/io/container.hpp"
#include "vprom/mac.hpp"
#include "vprom/metrics.hpp"
#include "vprom/rom/reduction.hpp"
#include "vprom/rom/rom.hpp"

#ifndef VPROM_VERSION
#define VPROM_VERSION "dev"
#endif

namespace vprom::pipeline {

namespace fs = std::filesystem;
using io::Json;

inline constexpr const char* kArtifactRootEnv = "VPROM_ARTIFACT_ROOT";

inline fs::path artifact_root() {
  const char* env = std::getenv(kArtifactRootEnv);
  return (env && *env) ? fs::path(env) : fs::path("artifacts");
}

enum class Strategy { mac, cprom, vprom };

inline Strategy strategy_from_string(const std::string& s) {
  if (s == "mac") return Strategy::mac;
  if (s == "cprom") return Strategy::cprom;
  if (s == "vprom") return Strategy::vprom;
  throw ConfigError("unknown strategy '" + s + "' (expected mac, cprom or vprom)");
}

inline std::string to_string(Strategy s) {
  switch (s) {
    case Strategy::mac: return "mac";
    case Strategy::cprom: return "cprom";
    case Strategy::vprom: return "vprom";
  }
  return "?";
}

/// Display name of a ROM variant.
inline std::string strategy_label(Strategy s, bool hyper) {
  std::string base = s == Strategy::mac ? "MACpROM" : s == Strategy::cprom ? "CpROM" : "VpROM";
  return hyper ? "HP-" + base : base;
}

inline void check_split(const std::string& split) {
  if (split != "train" && split != "valid") throw ConfigError("unknown split '" + split + "' (expected train or valid)");
}

/// Run fn(i) for i in [0, n) on a bounded pool of worker threads.
inline void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn) {
  workers = std::max<std::size_t>(1, std::min(workers, n));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

struct FomRecord {
  Matrix u, u_dot, u_ddot;
  double wall_time = 0.0;
};

struct EvaluateOptions {
  bool hyper = false;
  std::optional<double> tau;       // defaults to the configured tau
  std::size_t uq_draws = 0;        // 0: no envelope
  std::size_t uq_samples = 0;      // 0: every sample of the split
  Eigen::Index uq_dof = -1;        // negative: DOF with the largest response
  std::optional<std::size_t> limit;  // evaluate only the first n samples
};

struct EvaluateResult {
  std::vector<metrics::ErrorRecord> records;
  std::vector<double> containment;  // per UQ sample
  std::vector<std::size_t> ecsw_sizes;
  double assembly_full = 0.0;   // mean assembly seconds per ROM run without hyper-reduction
  double assembly_hyper = 0.0;  // with hyper-reduction (when requested)
};

/// One campaign on disk: a run directory keyed by the configuration hash.
class Campaign {
 public:
  Campaign(io::Config cfg, fs::path root = artifact_root(), std::ostream* log = &std::cerr)
      : cfg_(std::move(cfg)), log_(log) {
    cfg_.validate();
    hash_ = io::config_hash(cfg_);
    dir_ = root / ("run-" + hash_);
    bm_ = cfg_.benchmark();
    fs::create_directories(dir_);
    load_manifest();
  }

  const io::Config& config() const { return cfg_; }
  const fs::path& dir() const { return dir_; }
  const std::string& hash() const { return hash_; }
  const fom::Benchmark& benchmark() const { return bm_; }
  const Json& manifest() const { return manifest_; }

  // ---------------------------------------------------------------- doe

  /// Draw the training and validation designs. Returns false when they
  /// already exist for this configuration.
  bool doe() {
    if (fs::exists(samples_path("train")) && fs::exists(samples_path("valid"))) {
      log("doe: designs for " + hash_ + " already present, nothing to do");
      return false;
    }
    if (cfg_.seed_train == cfg_.seed_valid) throw ConfigError("doe: training and validation seeds must differ");
    write_samples("train", doe::lhs_sample(cfg_.domain, cfg_.n_train, cfg_.seed_train));
    write_samples("valid", doe::lhs_sample(cfg_.domain, cfg_.n_valid, cfg_.seed_valid));
    event("doe", {{"n_train", cfg_.n_train}, {"n_valid", cfg_.n_valid}});
    log("doe: " + std::to_string(cfg_.n_train) + " training and " + std::to_string(cfg_.n_valid) +
        " validation samples");
    return true;
  }

  std::vector<doe::ParameterSample> samples(const std::string& split) const {
    check_split(split);
    const fs::path p = samples_path(split);
    if (!fs::exists(p)) throw ConfigError("no " + split + " design; run 'doe' first");
    const Json j = io::parse_json(io::read_file(p), p.string());
    std::vector<doe::ParameterSample> out;
    for (const auto& e : j.at("samples")) {
      out.push_back(doe::make_sample(cfg_.domain, e.at("values").get<std::vector<double>>()));
    }
    return out;
  }

  // ----------------------------------------------------------- simulate

  /// Run the FOM for every sample without a stored solution. Failures are
  /// logged and do not stop the run. Returns the number of failed samples.
  std::size_t simulate(const std::string& split, std::optional<std::size_t> workers = std::nullopt) {
    const auto s = samples(split);
    std::mutex mu;
    std::vector<std::pair<std::size_t, std::string>> failures;
    std::atomic<std::size_t> done{0};
    parallel_for(s.size(), workers.value_or(cfg_.workers), [&](std::size_t i) {
      if (fom_complete(split, i)) return;
      try {
        const fom::FomSolution sol = bm_.simulate(s[i]);
        const fs::path base = fom_dir(split) / sample_name(i);
        io::save_matrix(base.string() + "_u.vprm", sol.u);
        io::save_matrix(base.string() + "_udot.vprm", sol.u_dot);
        io::save_matrix(base.string() + "_uddot.vprm", sol.u_ddot);
        const Json meta = {{"wall_time", sol.wall_time},
                           {"newton_iterations", sol.stats.newton_iterations},
                           {"halvings", sol.stats.halvings}};
        io::write_atomic(base.string() + ".json", meta.dump(2));
        ++done;
      } catch (const std::exception& e) {
        std::lock_guard<std::mutex> lock(mu);
        failures.emplace_back(i, e.what());
      }
    });
    std::sort(failures.begin(), failures.end());
    Json fl = Json::array();
    for (const auto& [i, what] : failures) {
      log("simulate: " + split + " sample " + std::to_string(i) + " failed: " + what);
      fl.push_back({{"sample", i}, {"error", what}});
    }
    const bool ready = failures.empty() && all_complete(split, s.size());
    manifest_["snapshot_ready"][split] = ready;
    event("simulate", {{"split", split}, {"new", done.load()}, {"failures", fl}});
    log("simulate: " + split + ": " + std::to_string(done.load()) + " new solutions, " +
        std::to_string(failures.size()) + " failures" + (ready ? ", snapshots ready" : ""));
    return failures.size();
  }

  bool fom_complete(const std::string& split, std::size_t i) const {
    return fs::exists((fom_dir(split) / sample_name(i)).string() + ".json");
  }

  FomRecord load_fom(const std::string& split, std::size_t i) const {
    if (!fom_complete(split, i)) throw IoError("no FOM solution for " + split + " sample " + std::to_string(i));
    const std::string base = (fom_dir(split) / sample_name(i)).string();
    FomRecord r;
    r.u = io::load_matrix(base + "_u.vprm");
    r.u_dot = io::load_matrix(base + "_udot.vprm");
    r.u_ddot = io::load_matrix(base + "_uddot.vprm");
    const Json meta = io::parse_json(io::read_file(base + ".json"), base + ".json");
    r.wall_time = meta.at("wall_time").get<double>();
    if (r.u.rows() != r.u_dot.rows() || r.u.cols() != r.u_dot.cols() || r.u.cols() != bm_.frame.n_dofs()) {
      throw IoError(base + ": stored solution does not match the configured frame");
    }
    return r;
  }

  // -------------------------------------------------------------- build

  /// Global basis, local bases and coefficient matrices of the training set,
  /// shared by all strategies.
  struct Common {
    Matrix v_global;
    std::vector<std::size_t> train_index;  // training samples with a FOM solution
    std::vector<doe::ParameterSample> samples;
    std::vector<Matrix> local;
    std::vector<Matrix> coeffs;
  };

  void build(Strategy s) {
    const Common& c = common();
    const fs::path d = build_dir() / to_string(s);
    fs::create_directories(d);
    Json meta = {{"strategy", to_string(s)}, {"n_train", c.samples.size()}, {"r", cfg_.r}, {"r_global", cfg_.r_global}};
    switch (s) {
      case Strategy::mac: {
        auto lib = build_mac(c);
        meta["n_clusters"] = lib.n_clusters();
        meta["min_similarity"] = lib.min_similarity();
        break;
      }
      case Strategy::cprom:
        meta["k_int"] = cfg_.k_int;
        break;
      case Strategy::vprom: {
        const auto models = train_vprom(c);
        Json traces = Json::array();
        for (const auto& m : models.columns) traces.push_back({m.loss_trace.front(), m.loss_trace.back()});
        meta["loss_first_last"] = traces;
        break;
      }
    }
    io::write_atomic(d / "build.json", meta.dump(2));
    event("build", meta);
    log("build: " + to_string(s) + " done");
  }

  // ----------------------------------------------------------- evaluate

  /// Evaluate one strategy on a split. The stored record set of that
  /// strategy and split is replaced.
  EvaluateResult evaluate(Strategy s, const std::string& split, const EvaluateOptions& opt = {}) {
    check_split(split);
    if (opt.uq_draws > 0 && s != Strategy::vprom) {
      throw ConfigError("--uq is only available for the vprom strategy");
    }
    if (!fs::exists(build_dir() / to_string(s) / "build.json")) {
      throw ConfigError("strategy " + to_string(s) + " is not built; run 'build --strategy " + to_string(s) + "'");
    }
    const Common& c = common();
    const double tau = opt.tau.value_or(cfg_.tau);
    const auto samples_all = samples(split);
    const std::size_t n = opt.limit ? std::min(*opt.limit, samples_all.size()) : samples_all.size();

    std::optional<mac::ClusterLibrary> lib;
    std::vector<Vector> train_pts;
    for (const auto& smp : c.samples) {
      train_pts.push_back(Eigen::Map<const Vector>(smp.normalized.data(), static_cast<Eigen::Index>(smp.normalized.size())));
    }
    std::optional<cvae::ColumnModels> models;
    std::vector<cprom::TrainingCoefficients> tc;
    if (s == Strategy::mac) lib = load_mac();
    if (s == Strategy::vprom) models = load_vprom();
    if (s == Strategy::cprom) {
      for (std::size_t i = 0; i < c.samples.size(); ++i) tc.push_back({c.samples[i], c.coeffs[i]});
    }
    std::map<std::size_t, rom::EcswWeights> cluster_weights;

    EvaluateResult res;
    const std::string label = strategy_label(s, opt.hyper);
    double asm_full = 0.0, asm_hyper = 0.0;
    std::size_t n_asm = 0;
    for (std::size_t i = 0; i < n; ++i) {
      metrics::ErrorRecord rec;
      rec.sample_index = i;
      rec.sample = samples_all[i];
      rec.strategy = label;
      try {
        const FomRecord f = load_fom(split, i);
        rec.wall_time_fom = f.wall_time;
        const Vector pq = train_pts.empty() ? Vector() : Eigen::Map<const Vector>(rec.sample.normalized.data(), static_cast<Eigen::Index>(rec.sample.normalized.size()));
        Matrix v;
        std::optional<std::size_t> cluster;
        switch (s) {
          case Strategy::mac: {
            cluster = mac::select_cluster(*lib, train_pts, pq, cfg_.knn);
            v = c.local[lib->centers[*cluster]];
            break;
          }
          case Strategy::cprom: {
            cprom::InterpolationOptions io;
            io.k_int = cfg_.k_int;
            io.slope_ridge = cfg_.cprom_ridge;
            v = cprom::interpolate_basis(tc, c.v_global, rec.sample.normalized, io).basis.modes;
            break;
          }
          case Strategy::vprom:
            v = cvae::generate_basis(*models, c.v_global, pq, cvae::GenerationMode::mean).modes;
            break;
        }
        std::optional<rom::EcswWeights> weights;
        if (opt.hyper) {
          if (cluster) {
            auto it = cluster_weights.find(*cluster);
            if (it == cluster_weights.end()) {
              const auto& center = c.samples[lib->centers[*cluster]];
              const Vector pc = Eigen::Map<const Vector>(center.normalized.data(), static_cast<Eigen::Index>(center.normalized.size()));
              it = cluster_weights.emplace(*cluster, hyper_weights(c, v, pc, tau, &*lib, *cluster)).first;
            }
            weights = it->second;
          } else {
            weights = hyper_weights(c, v, pq, tau, nullptr, 0);
          }
          res.ecsw_sizes.push_back(weights->size());
        }
        rom::RomOptions ro;
        ro.provenance = label;
        const rom::RomSolution r = rom::rom_simulate(bm_, rec.sample, v, weights, ro);
        metrics::Selection sel;
        sel.settle_fraction = cfg_.settle_fraction;
        rec.err_u = metrics::err_q(f.u, r.u, sel);
        rec.err_udot = metrics::err_q(f.u_dot, r.u_dot, sel);
        rec.err_uddot = metrics::err_q(f.u_ddot, r.u_ddot, sel);
        rec.wall_time_rom = r.wall_time;
        (opt.hyper ? asm_hyper : asm_full) += r.stats.assembly_seconds;
        ++n_asm;
        if (opt.uq_draws > 0 && (opt.uq_samples == 0 || i < opt.uq_samples)) {
          const auto env = cvae::uncertainty_envelope(*models, c.v_global, {&bm_, rec.sample}, opt.uq_draws,
                                                      cvae::derive_seed(cfg_.cvae.seed, 1000 + i), opt.uq_dof);
          res.containment.push_back(env.envelope.containment());
          write_envelope(split, i, env.envelope);
        }
      } catch (const std::exception& e) {
        rec.failed = true;
        log("evaluate: " + label + " " + split + " sample " + std::to_string(i) + " failed: " + e.what());
      }
      res.records.push_back(std::move(rec));
    }
    if (n_asm) {
      asm_full /= static_cast<double>(n_asm);
      asm_hyper /= static_cast<double>(n_asm);
    }
    res.assembly_full = asm_full;
    res.assembly_hyper = asm_hyper;
    write_records(label, split, res.records);
    Json ev = {{"strategy", label}, {"split", split}, {"n", res.records.size()}, {"tau", opt.hyper ? Json(tau) : Json(nullptr)}};
    if (!res.containment.empty()) ev["uq_containment"] = res.containment;
    event("evaluate", ev);
    return res;
  }

  // ------------------------------------------------------------- report

  /// Aggregate every stored record set into summary tables. Training-split
  /// records are reported under "<strategy>@train".
  std::vector<metrics::StrategySummary> report(const std::string& axis_x = "amp", const std::string& axis_y = "f_but") {
    std::vector<metrics::ErrorRecord> all;
    const fs::path ed = dir_ / "eval";
    if (fs::exists(ed)) {
      std::vector<fs::path> files;
      for (const auto& e : fs::directory_iterator(ed)) {
        if (e.path().extension() == ".json") files.push_back(e.path());
      }
      std::sort(files.begin(), files.end());
      for (const auto& p : files) {
        const auto recs = read_records(p);
        all.insert(all.end(), recs.begin(), recs.end());
      }
    }
    if (all.empty()) throw ConfigError("report: no evaluation records; run 'evaluate' first");
    const auto summary = metrics::summarize(all);
    const fs::path rd = dir_ / "report";
    fs::create_directories(rd);

    std::ostringstream tab;
    tab << std::setprecision(6);
    tab << "strategy,n,failed,median_err_u,max_err_u,median_err_udot,median_err_uddot,max_err_uddot,speed_up,"
           "mean_time_fom,mean_time_rom\n";
    for (const auto& s : summary) {
      tab << s.strategy << ',' << s.n_records << ',' << s.n_failed << ',' << s.err_u.median << ',' << s.err_u.max
          << ',' << s.err_udot.median << ',' << s.err_uddot.median << ',' << s.err_uddot.max << ','
          << s.mean_speed_up << ',' << s.mean_wall_time_fom << ',' << s.mean_wall_time_rom << '\n';
    }
    io::write_atomic(rd / "summary.csv", tab.str());

    // Errors only, full precision: identical for identical configurations.
    std::ostringstream err;
    err << std::setprecision(17);
    err << "strategy,sample,err_u,err_udot,err_uddot,failed\n";
    for (const auto& r : all) {
      err << r.strategy << ',' << r.sample_index << ',' << r.err_u << ',' << r.err_udot << ',' << r.err_uddot << ','
          << (r.failed ? 1 : 0) << '\n';
    }
    io::write_atomic(rd / "errors.csv", err.str());

    std::ostringstream box;
    box << std::setprecision(17);
    box << "strategy,quantity,min,q1,median,q3,max,n_outliers\n";
    for (const auto& s : summary) {
      for (const auto& [name, b] : {std::pair<const char*, const metrics::BoxStats*>{"err_u", &s.err_u},
                                    {"err_udot", &s.err_udot}, {"err_uddot", &s.err_uddot}}) {
        box << s.strategy << ',' << name << ',' << b->min << ',' << b->q1 << ',' << b->median << ',' << b->q3 << ','
            << b->max << ',' << b->outliers.size() << '\n';
      }
    }
    io::write_atomic(rd / "boxplot.csv", box.str());

    std::ostringstream map;
    metrics::write_error_map_csv(map, metrics::error_map(all, cfg_.domain, axis_x, axis_y), axis_x, axis_y);
    io::write_atomic(rd / "error_map.csv", map.str());

    Json js = Json::array();
    for (const auto& s : summary) {
      js.push_back({{"strategy", s.strategy},
                    {"n", s.n_records},
                    {"failed", s.n_failed},
                    {"err_u", {{"median", s.err_u.median}, {"max", s.err_u.max}, {"q1", s.err_u.q1}, {"q3", s.err_u.q3}, {"outliers", s.err_u.outliers}}},
                    {"err_udot", {{"median", s.err_udot.median}, {"max", s.err_udot.max}}},
                    {"err_uddot", {{"median", s.err_uddot.median}, {"max", s.err_uddot.max}}},
                    {"speed_up", s.mean_speed_up},
                    {"mean_time_fom", s.mean_wall_time_fom},
                    {"mean_time_rom", s.mean_wall_time_rom}});
    }
    io::write_atomic(rd / "summary.json", Json{{"config_hash", hash_}, {"strategies", js}}.dump(2));
    event("report", {{"strategies", summary.size()}});
    return summary;
  }

  // ----------------------------------------------------------- internals
  const Common& common() {
    if (common_) return *common_;
    const auto s = samples("train");
    Common c;
    std::vector<FomRecord> fr;
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (!fom_complete("train", i)) {
        log("build: training sample " + std::to_string(i) + " has no FOM solution and is skipped");
        continue;
      }
      fr.push_back(load_fom("train", i));
      c.train_index.push_back(i);
      c.samples.push_back(s[i]);
    }
    if (c.samples.size() < 2) throw ConfigError("build: at least two simulated training samples are required");
    std::vector<const Matrix*> hist;
    for (const auto& f : fr) hist.push_back(&f.u);
    const rom::SnapshotSet snaps = rom::assemble_snapshots(hist);
    const rom::PodResult g = rom::pod(snaps.matrix, rom::Truncation::fixed(cfg_.r_global));
    if (g.clamped) log("build: r_global clamped to the snapshot rank " + std::to_string(g.basis.rank()));
    c.v_global = g.basis.modes;
    for (std::size_t i = 0; i < fr.size(); ++i) {
      const rom::PodResult l = rom::pod(fr[i].u.transpose(), rom::Truncation::fixed(cfg_.r));
      if (l.clamped) log("build: r clamped to " + std::to_string(l.basis.rank()) + " for training sample " + std::to_string(c.train_index[i]));
      if (l.basis.rank() != cfg_.r) throw ShapeError("build: a local snapshot set has rank below r");
      c.local.push_back(l.basis.modes);
      Matrix x = rom::compute_coefficients(l.basis.modes, c.v_global).x;
      rom::canonicalize_column_signs(x);
      c.coeffs.push_back(std::move(x));
    }
    const fs::path d = build_dir() / "common";
    io::save_matrix(d / "v_global.vprm", c.v_global);
    for (std::size_t i = 0; i < c.local.size(); ++i) {
      io::save_matrix(d / (sample_name(c.train_index[i]) + "_local.vprm"), c.local[i]);
      io::save_matrix(d / (sample_name(c.train_index[i]) + "_coeff.vprm"), c.coeffs[i]);
    }
    common_ = std::move(c);
    return *common_;
  }

 private:
  fs::path samples_path(const std::string& split) const { return dir_ / "samples" / (split + ".json"); }
  fs::path fom_dir(const std::string& split) const { return dir_ / "fom" / split; }
  fs::path build_dir() const { return dir_ / "build"; }
  static std::string sample_name(std::size_t i) {
    std::ostringstream os;
    os << std::setw(4) << std::setfill('0') << i;
    return os.str();
  }

  void log(const std::string& s) const {
    if (log_) *log_ << s << '\n';
  }

  void load_manifest() {
    const fs::path p = dir_ / "manifest.json";
    if (fs::exists(p)) {
      manifest_ = io::parse_json(io::read_file(p), p.string());
      if (manifest_.value("config_hash", std::string()) != hash_) throw IoError(p.string() + ": config hash mismatch");
      return;
    }
    manifest_ = {{"config_hash", hash_},
                 {"tool_version", VPROM_VERSION},
                 {"config", io::config_to_json(cfg_)},
                 {"seeds",
                  {{"doe_train", cfg_.seed_train},
                   {"doe_valid", cfg_.seed_valid},
                   {"excitation", cfg_.excitation_seed},
                   {"vae_master", cfg_.cvae.seed}}},
                 {"strategies", {"FOM", "MACpROM", "CpROM", "VpROM", "HP-MACpROM", "HP-CpROM", "HP-VpROM"}},
                 {"snapshot_ready", {{"train", false}, {"valid", false}}},
                 {"events", Json::array()}};
    save_manifest();
  }

  void save_manifest() const { io::write_atomic(dir_ / "manifest.json", manifest_.dump(2)); }

  void event(const std::string& kind, Json detail) {
    detail["kind"] = kind;
    detail["time"] = static_cast<std::int64_t>(std::time(nullptr));
    manifest_["events"].push_back(std::move(detail));
    save_manifest();
  }

  void write_samples(const std::string& split, const std::vector<doe::ParameterSample>& s) {
    Json arr = Json::array();
    for (const auto& x : s) arr.push_back({{"values", x.values}, {"normalized", x.normalized}});
    io::write_atomic(samples_path(split), Json{{"names", cfg_.domain.names}, {"samples", arr}}.dump(2));
  }

  bool all_complete(const std::string& split, std::size_t n) const {
    for (std::size_t i = 0; i < n; ++i)
      if (!fom_complete(split, i)) return false;
    return true;
  }

  mac::ClusterLibrary build_mac(const Common& c) {
    std::vector<mac::TrainingBasis> tb;
    for (std::size_t i = 0; i < c.samples.size(); ++i) tb.push_back({c.samples[i], c.local[i]});
    auto lib = mac::adaptive_cluster(tb, cfg_.mac_tolerance, cfg_.max_clusters);
    const fs::path d = build_dir() / "mac";
    Json j = {{"centers", lib.centers},
              {"assignments", lib.assignments},
              {"similarity", lib.similarity},
              {"mac_tolerance", lib.mac_tolerance},
              {"max_clusters", lib.max_clusters}};
    for (std::size_t k = 0; k < lib.centers.size(); ++k) {
      io::save_matrix(d / ("center_" + std::to_string(k) + ".vprm"), c.local[lib.centers[k]]);
    }
    io::write_atomic(d / "library.json", j.dump(2));
    return lib;
  }

  mac::ClusterLibrary load_mac() const {
    const fs::path p = build_dir() / "mac" / "library.json";
    const Json j = io::parse_json(io::read_file(p), p.string());
    mac::ClusterLibrary lib;
    lib.centers = j.at("centers").get<std::vector<std::size_t>>();
    lib.assignments = j.at("assignments").get<std::vector<std::size_t>>();
    lib.similarity = j.at("similarity").get<std::vector<double>>();
    lib.mac_tolerance = j.at("mac_tolerance").get<double>();
    lib.max_clusters = j.at("max_clusters").get<std::size_t>();
    for (std::size_t k = 0; k < lib.centers.size(); ++k) {
      if (lib.assignments.at(lib.centers[k]) != k) throw IoError(p.string() + ": a center is not in its own cluster");
    }
    return lib;
  }

  cvae::ColumnModels train_vprom(const Common& c) {
    std::vector<Vector> ps;
    for (const auto& s : c.samples) ps.push_back(Eigen::Map<const Vector>(s.normalized.data(), static_cast<Eigen::Index>(s.normalized.size())));
    const cvae::ColumnModels models = cvae::train_columns(c.coeffs, ps, cfg_.cvae);
    save_models(models);
    return models;
  }

  void save_models(const cvae::ColumnModels& models) const {
    const fs::path d = build_dir() / "vprom";
    Json cols = Json::array();
    for (std::size_t k = 0; k < models.columns.size(); ++k) {
      const auto& m = models.columns[k];
      const std::string base = "col" + std::to_string(k);
      Json layers = Json::array();
      auto dump_net = [&](const cvae::Mlp& net, const std::string& tag) {
        Json arr = Json::array();
        for (std::size_t l = 0; l < net.layers().size(); ++l) {
          const auto& L = net.layers()[l];
          const std::string f = base + "_" + tag + std::to_string(l);
          io::save_matrix(d / (f + "_w.vprm"), L.weights);
          io::save_array(d / (f + "_b.vprm"), io::to_array(L.bias));
          arr.push_back({{"file", f}, {"activation", cvae::to_string(L.activation)}});
        }
        return arr;
      };
      io::save_array(d / (base + "_shift.vprm"), io::to_array(m.shift));
      io::save_array(d / (base + "_scale.vprm"), io::to_array(m.scale));
      cols.push_back({{"column", m.column_index},
                      {"latent_dim", m.latent_dim},
                      {"x_dim", m.x_dim},
                      {"p_dim", m.p_dim},
                      {"encoder", dump_net(m.encoder, "enc")},
                      {"decoder", dump_net(m.decoder, "dec")},
                      {"normalization", "ln(x+2), standardized"},
                      {"loss_trace", m.loss_trace}});
    }
    io::write_atomic(d / "models.json", Json{{"columns", cols}}.dump());
  }

  cvae::ColumnModels load_vprom() const {
    const fs::path d = build_dir() / "vprom";
    const Json j = io::parse_json(io::read_file(d / "models.json"), (d / "models.json").string());
    cvae::ColumnModels out;
    out.config = cfg_.cvae;
    for (const auto& cj : j.at("columns")) {
      cvae::CvaeModel m;
      m.column_index = cj.at("column").get<std::size_t>();
      m.latent_dim = cj.at("latent_dim").get<Eigen::Index>();
      m.x_dim = cj.at("x_dim").get<Eigen::Index>();
      m.p_dim = cj.at("p_dim").get<Eigen::Index>();
      auto load_net = [&](const Json& arr) {
        std::vector<cvae::DenseLayer> layers;
        for (const auto& lj : arr) {
          const std::string f = lj.at("file").get<std::string>();
          cvae::DenseLayer L;
          L.weights = io::load_matrix(d / (f + "_w.vprm"));
          L.bias = io::to_vector(io::load_array(d / (f + "_b.vprm")));
          L.activation = cvae::activation_from_string(lj.at("activation").get<std::string>());
          layers.push_back(std::move(L));
        }
        return cvae::Mlp(std::move(layers));
      };
      m.encoder = load_net(cj.at("encoder"));
      m.decoder = load_net(cj.at("decoder"));
      const std::string base = "col" + std::to_string(out.columns.size());
      m.shift = io::to_vector(io::load_array(d / (base + "_shift.vprm")));
      m.scale = io::to_vector(io::load_array(d / (base + "_scale.vprm")));
      m.loss_trace = cj.at("loss_trace").get<std::vector<double>>();
      m.trained = true;
      m.check();
      out.columns.push_back(std::move(m));
    }
    return out;
  }

  /// ECSW weights for basis v from ROM replays of the training samples
  /// nearest to `anchor` (the cluster members for MACpROM).
  rom::EcswWeights hyper_weights(const Common& c, const Matrix& v, const Vector& anchor,
                                 double tau, const mac::ClusterLibrary* lib,
                                 std::size_t cluster) const {
    std::vector<std::pair<double, std::size_t>> d;
    for (std::size_t i = 0; i < c.samples.size(); ++i) {
      if (lib && lib->assignments[i] != cluster) continue;
      const Vector pi = Eigen::Map<const Vector>(c.samples[i].normalized.data(), static_cast<Eigen::Index>(c.samples[i].normalized.size()));
      d.emplace_back((pi - anchor).squaredNorm(), i);
    }
    std::stable_sort(d.begin(), d.end());
    std::vector<doe::ParameterSample> near;
    for (std::size_t k = 0; k < std::min(cfg_.ecsw_neighbours, d.size()); ++k) near.push_back(c.samples[d[k].second]);
    return ecsw::solve_weights(ecsw::build_replay_system(bm_, near, v, cfg_.ecsw_stride), tau);
  }

  void write_records(const std::string& label, const std::string& split,
                     const std::vector<metrics::ErrorRecord>& recs) const {
    Json arr = Json::array();
    for (const auto& r : recs) {
      arr.push_back({{"sample", r.sample_index},
                     {"values", r.sample.values},
                     {"strategy", r.strategy},
                     {"split", split},
                     {"err_u", r.err_u},
                     {"err_udot", r.err_udot},
                     {"err_uddot", r.err_uddot},
                     {"wall_time_fom", r.wall_time_fom},
                     {"wall_time_rom", r.wall_time_rom},
                     {"failed", r.failed}});
    }
    io::write_atomic(dir_ / "eval" / (label + "_" + split + ".json"), arr.dump(1));
    std::ostringstream csv;
    csv << std::setprecision(17) << "sample,err_u,err_udot,err_uddot,wall_time_fom,wall_time_rom,failed\n";
    for (const auto& r : recs) {
      csv << r.sample_index << ',' << r.err_u << ',' << r.err_udot << ',' << r.err_uddot << ',' << r.wall_time_fom
          << ',' << r.wall_time_rom << ',' << (r.failed ? 1 : 0) << '\n';
    }
    io::write_atomic(dir_ / "eval" / (label + "_" + split + ".csv"), csv.str());
  }

  std::vector<metrics::ErrorRecord> read_records(const fs::path& p) const {
    const Json j = io::parse_json(io::read_file(p), p.string());
    std::vector<metrics::ErrorRecord> out;
    for (const auto& e : j) {
      metrics::ErrorRecord r;
      r.sample_index = e.at("sample").get<std::size_t>();
      r.sample = doe::make_sample(cfg_.domain, e.at("values").get<std::vector<double>>());
      r.strategy = e.at("strategy").get<std::string>();
      if (e.value("split", std::string("valid")) == "train") r.strategy += "@train";
      r.err_u = e.at("err_u").get<double>();
      r.err_udot = e.at("err_udot").get<double>();
      r.err_uddot = e.at("err_uddot").get<double>();
      r.wall_time_fom = e.at("wall_time_fom").get<double>();
      r.wall_time_rom = e.at("wall_time_rom").get<double>();
      r.failed = e.at("failed").get<bool>();
      out.push_back(std::move(r));
    }
    return out;
  }

  void write_envelope(const std::string& split, std::size_t i, const cvae::ResponseEnvelope& env) const {
    std::ostringstream os;
    os << std::setprecision(17) << "time,mean,lower,upper\n";
    for (Eigen::Index t = 0; t < env.mean.size(); ++t) {
      os << env.times[static_cast<std::size_t>(t)] << ',' << env.mean(t) << ',' << env.lower(t) << ',' << env.upper(t)
         << '\n';
    }
    io::write_atomic(dir_ / "eval" / "uq" / (split + "_" + sample_name(i) + "_dof" + std::to_string(env.dof) + ".csv"),
                     os.str());
  }

  io::Config cfg_;
  std::ostream* log_;
  std::string hash_;
  fs::path dir_;
  fom::Benchmark bm_;
  Json manifest_;
  std::optional<Common> common_;
};

}  // namespace vprom::pipeline

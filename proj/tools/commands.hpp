#pragma once

// Subcommand implementations for the mrfm command-line tool.

#include "mrfm/mrfm.hpp"

#include "json.hpp"

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

namespace mrfm::cli {

namespace fs = std::filesystem;
using nlohmann::json;

/// Every option of a run. Loaded from an optional JSON config file, then
/// overridden by command-line flags.
struct RunConfig {
  std::vector<fs::path> meshes;  // precompute inputs
  fs::path source, target;       // match / bench pair
  fs::path manifest;             // eval input
  fs::path gt, gt_reverse;       // optional ground truth for match
  int index_base = 0;

  std::string descriptors = "wks";  // wks | hks | file:<src>,<tgt> | file:<dir>
  Index wks_energies = kDefaultWksEnergies;
  double wks_sigma_scale = kDefaultWksSigmaScale;
  Index hks_times = 100;

  SolverConfig solver;
  Index basis_k = 0;  // eigenpairs to compute; 0 means k_max

  std::string attention = "mean-residual";  // uniform | mean-residual | external:<path>
  std::optional<double> attention_temperature;
  bool attention_area_weighted = false;
  std::optional<double> soft_temperature;

  Index refine_steps = 0;
  Index refine_tau = 10;

  bool normalize = true;
  bool symmetric = false;
  bool export_residuals = false;
  bool deterministic = false;
  std::uint64_t seed = EigensolverOptions{}.seed;
  int threads = 1;
  int repeats = 1;
  fs::path output_dir = "mrfm_out";
  fs::path cache_dir;
  bool quiet = false;

  Index resolved_basis_k() const { return basis_k > 0 ? basis_k : solver.k_max; }
};

inline LadderMode parse_mode(const std::string& s) {
  if (s == "fast") return LadderMode::fast;
  if (s == "standard") return LadderMode::standard;
  throw validation_error("unknown ladder mode '" + s + "' (expected fast or standard)");
}

/// Applies the fields present in a JSON document to `cfg`.
inline void apply_json(RunConfig& cfg, const json& j) {
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key) && !j.at(key).is_null()) field = j.at(key).get<std::remove_reference_t<decltype(field)>>();
  };
  auto get_path = [&](const char* key, fs::path& field) {
    if (j.contains(key) && !j.at(key).is_null()) field = j.at(key).get<std::string>();
  };
  auto get_opt = [&](const char* key, std::optional<double>& field) {
    if (j.contains(key)) field = j.at(key).is_null() ? std::nullopt : std::optional<double>(j.at(key).get<double>());
  };
  try {
    if (j.contains("meshes"))
      for (const auto& m : j.at("meshes")) cfg.meshes.emplace_back(m.get<std::string>());
    get_path("source", cfg.source);
    get_path("target", cfg.target);
    get_path("manifest", cfg.manifest);
    get_path("gt", cfg.gt);
    get_path("gt_reverse", cfg.gt_reverse);
    get("index_base", cfg.index_base);
    get("descriptors", cfg.descriptors);
    get("wks_energies", cfg.wks_energies);
    get("wks_sigma_scale", cfg.wks_sigma_scale);
    get("hks_times", cfg.hks_times);
    get("alpha", cfg.solver.alpha);
    get("k_min", cfg.solver.k_min);
    get("k_max", cfg.solver.k_max);
    get("tau", cfg.solver.tau);
    if (j.contains("mode")) cfg.solver.mode = parse_mode(j.at("mode").get<std::string>());
    get("basis_k", cfg.basis_k);
    get("attention", cfg.attention);
    get_opt("attention_temperature", cfg.attention_temperature);
    get("attention_area_weighted", cfg.attention_area_weighted);
    get_opt("soft_temperature", cfg.soft_temperature);
    get("refine_steps", cfg.refine_steps);
    get("refine_tau", cfg.refine_tau);
    get("normalize", cfg.normalize);
    get("symmetric", cfg.symmetric);
    get("export_residuals", cfg.export_residuals);
    get("deterministic", cfg.deterministic);
    get("seed", cfg.seed);
    get("threads", cfg.threads);
    get("repeats", cfg.repeats);
    get_path("output_dir", cfg.output_dir);
    get_path("cache_dir", cfg.cache_dir);
    get("quiet", cfg.quiet);
  } catch (const json::exception& e) {
    throw validation_error(std::string("invalid config value: ") + e.what());
  }
}

inline void load_config_file(RunConfig& cfg, const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw validation_error("cannot open config file " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw validation_error(path.string() + ": " + e.what());
  }
  apply_json(cfg, j);
}

inline json to_json(const RunConfig& cfg) {
  json j;
  j["descriptors"] = cfg.descriptors;
  j["wks_energies"] = cfg.wks_energies;
  j["wks_sigma_scale"] = cfg.wks_sigma_scale;
  j["alpha"] = cfg.solver.alpha;
  j["k_min"] = cfg.solver.k_min;
  j["k_max"] = cfg.solver.k_max;
  j["tau"] = cfg.solver.tau;
  j["mode"] = to_string(cfg.solver.mode);
  j["basis_k"] = cfg.resolved_basis_k();
  j["attention"] = cfg.attention;
  j["attention_temperature"] = cfg.attention_temperature ? json(*cfg.attention_temperature) : json(nullptr);
  j["attention_area_weighted"] = cfg.attention_area_weighted;
  j["soft_temperature"] = cfg.soft_temperature ? json(*cfg.soft_temperature) : json(nullptr);
  j["refine_steps"] = cfg.refine_steps;
  j["refine_tau"] = cfg.refine_tau;
  j["normalize"] = cfg.normalize;
  j["index_base"] = cfg.index_base;
  return j;
}

/// Writes log lines to stderr unless quiet.
class Log {
 public:
  explicit Log(bool quiet) : quiet_(quiet) {}
  void info(const std::string& msg) const {
    if (quiet_) return;
    std::lock_guard<std::mutex> lock(mutex());
    std::cerr << "[mrfm] " << msg << '\n';
  }
  void warn(const std::string& msg) const {
    std::lock_guard<std::mutex> lock(mutex());
    std::cerr << "[mrfm] warning: " << msg << '\n';
  }

 private:
  static std::mutex& mutex() {
    static std::mutex m;
    return m;
  }
  bool quiet_;
};

inline PipelineOptions pipeline_options(const RunConfig& cfg) {
  PipelineOptions opt;
  opt.solver = cfg.solver;
  opt.descriptors.wks_energies = cfg.wks_energies;
  opt.descriptors.wks_sigma_scale = cfg.wks_sigma_scale;
  opt.descriptors.hks_times = cfg.hks_times;
  if (cfg.descriptors == "wks") {
    opt.descriptors.kind = DescriptorKind::wks;
  } else if (cfg.descriptors == "hks") {
    opt.descriptors.kind = DescriptorKind::hks;
  } else if (cfg.descriptors.rfind("file:", 0) == 0) {
    opt.descriptors.kind = DescriptorKind::file;
  } else {
    throw validation_error("unknown descriptor strategy '" + cfg.descriptors + "' (expected wks, hks or file:<path>)");
  }
  if (cfg.attention == "uniform") {
    opt.attention.kind = AttentionKind::uniform;
  } else if (cfg.attention == "mean-residual") {
    opt.attention.kind = AttentionKind::mean_residual;
  } else if (cfg.attention.rfind("external:", 0) == 0) {
    opt.attention.kind = AttentionKind::external;
    opt.attention.external_file = cfg.attention.substr(9);
  } else {
    throw validation_error("unknown attention strategy '" + cfg.attention +
                           "' (expected uniform, mean-residual or external:<path>)");
  }
  opt.attention.temperature = cfg.attention_temperature;
  opt.attention.area_weighted = cfg.attention_area_weighted;
  opt.soft_temperature = cfg.soft_temperature;
  opt.refine.steps = cfg.refine_steps;
  opt.refine.step_size = cfg.refine_tau;
  return opt;
}

/// Checks everything that can be checked without loading meshes or solving.
inline PipelineOptions validate_pipeline_config(const RunConfig& cfg) {
  cfg.solver.validate();
  PipelineOptions opt = pipeline_options(cfg);
  if (cfg.resolved_basis_k() < cfg.solver.k_max) throw validation_error("basis_k must be at least k_max");
  if (cfg.wks_energies < 1) throw validation_error("wks_energies must be positive");
  if (!(cfg.wks_sigma_scale > 0.0)) throw validation_error("wks_sigma_scale must be positive");
  if (cfg.attention_temperature && !(*cfg.attention_temperature > 0.0))
    throw validation_error("attention temperature must be positive");
  if (cfg.soft_temperature && !(*cfg.soft_temperature > 0.0)) throw validation_error("soft-map temperature must be positive");
  if (cfg.refine_steps < 0 || cfg.refine_tau < 1) throw validation_error("invalid refinement settings");
  if (cfg.refine_steps > 0 && cfg.solver.k_max - cfg.refine_steps * cfg.refine_tau < 1)
    throw validation_error("refine_steps x refine_tau must be smaller than k_max");
  if (cfg.index_base != 0 && cfg.index_base != 1) throw validation_error("index base must be 0 or 1");
  if (cfg.threads < 1) throw validation_error("threads must be at least 1");
  if (opt.attention.kind == AttentionKind::external) {
    if (!fs::exists(opt.attention.external_file))
      throw validation_error("attention weight file not found: " + opt.attention.external_file.string());
    weights_external(opt.attention.external_file, cfg.solver.ladder_length());
  }
  return opt;
}

inline void require_file(const fs::path& path, const std::string& what) {
  if (path.empty()) throw validation_error(what + " is required");
  if (!fs::exists(path)) throw validation_error(what + " not found: " + path.string());
}

/// Descriptor file for a mesh under a file:<...> strategy. `role` is 0 for the
/// source and 1 for the target of a pair.
inline fs::path descriptor_file(const std::string& choice, const fs::path& mesh_path, int role) {
  const std::string rest = choice.substr(5);
  const auto comma = rest.find(',');
  if (comma != std::string::npos) return role == 0 ? fs::path(rest.substr(0, comma)) : fs::path(rest.substr(comma + 1));
  return fs::path(rest) / (mesh_path.stem().string() + ".csv");
}

struct PreparedMesh {
  fs::path path;
  TriMesh mesh;
  SpectralBasis basis;
  DescriptorSet descriptors;
  CacheOutcome cache = CacheOutcome::computed;
};

inline EigensolverOptions eigensolver_options(const RunConfig& cfg) {
  EigensolverOptions opt;
  opt.seed = cfg.seed;
  return opt;
}

inline TriMesh load_for_pipeline(const fs::path& path, const RunConfig& cfg) {
  TriMesh mesh = load_mesh(path);
  return cfg.normalize ? normalize_unit_area(mesh) : mesh;
}

inline PreparedMesh prepare_mesh(const fs::path& path, const RunConfig& cfg, const PipelineOptions& opt, int role,
                                 const Log& log) {
  PreparedMesh pm;
  pm.path = path;
  pm.mesh = load_for_pipeline(path, cfg);
  auto cached = cached_eigenbasis(pm.mesh, cfg.resolved_basis_k(), cfg.cache_dir, eigensolver_options(cfg));
  if (!cached.warning.empty()) log.warn(cached.warning + "; recomputed");
  pm.cache = cached.outcome;
  pm.basis = std::move(cached.basis);
  if (opt.descriptors.kind == DescriptorKind::file) {
    pm.descriptors = import_descriptors(descriptor_file(cfg.descriptors, path, role), pm.mesh);
  } else {
    pm.descriptors = compute_descriptors(pm.basis, opt.descriptors);
  }
  return pm;
}

// ---------------------------------------------------------------- precompute

struct PrecomputeSummary {
  int hits = 0;
  int computed = 0;
  int recomputed = 0;
  std::vector<std::string> failures;
  int exit_code = 0;
};

inline PrecomputeSummary cmd_precompute(const RunConfig& cfg) {
  const Log log(cfg.quiet);
  if (cfg.meshes.empty()) throw validation_error("precompute needs at least one mesh");
  if (cfg.cache_dir.empty()) throw validation_error("precompute needs --cache-dir");
  for (const auto& m : cfg.meshes) require_file(m, "mesh");
  PrecomputeSummary summary;
  for (const auto& path : cfg.meshes) {
    try {
      const TriMesh mesh = load_for_pipeline(path, cfg);
      const auto result = cached_eigenbasis(mesh, cfg.resolved_basis_k(), cfg.cache_dir, eigensolver_options(cfg));
      switch (result.outcome) {
        case CacheOutcome::hit:
          ++summary.hits;
          log.info(path.string() + ": cache hit (" + result.file.string() + ")");
          break;
        case CacheOutcome::computed:
          ++summary.computed;
          log.info(path.string() + ": computed " + std::to_string(cfg.resolved_basis_k()) + " eigenpairs");
          break;
        case CacheOutcome::recomputed_corrupt:
          ++summary.recomputed;
          log.warn(result.warning + "; recomputed " + path.string());
          break;
      }
    } catch (const Error& e) {
      summary.failures.push_back(path.string() + ": " + e.what());
      log.warn(path.string() + ": " + e.what());
      summary.exit_code = std::max(summary.exit_code, e.kind() == ErrorKind::numerical ? 2 : 1);
    }
  }
  return summary;
}

// --------------------------------------------------------------------- match

struct MatchOutput {
  MatchResult result;
  std::optional<EvalReport> report;
  fs::path directory;
};

inline void write_attention_csv(const MatchResult& r, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw validation_error("cannot write " + path.string());
  out << std::setprecision(17) << "map,resolution,weight,mean_residual,soft_temperature\n";
  for (Index i = 0; i < r.ladder.size(); ++i)
    out << i << ',' << r.ladder.resolutions[static_cast<std::size_t>(i)] << ',' << r.weights.weights[i] << ','
        << r.mean_residuals[i] << ',' << r.soft_temperatures[static_cast<std::size_t>(i)] << '\n';
}

inline json timings_json(const MatchResult& r) {
  json j = json::object();
  for (const auto& [name, s] : r.timings) j[name] = s;
  return j;
}

/// Evaluates the source-to-target prediction (and optionally the reverse one)
/// against ground truth on unit-area meshes.
inline EvalReport evaluate_prediction(const MatchResult& r, const TriMesh& source, const TriMesh& target,
                                      const PointwiseMap& gt, const PointwiseMap* gt_reverse) {
  EvalReport report = geodesic_error(r.p2p.source_to_target, gt, target);
  if (gt_reverse) {
    const EvalReport back = geodesic_error(r.p2p.target_to_source, *gt_reverse, source);
    report.diagnostics["mean_error_x100_forward"] = report.mean_error_x100;
    report.diagnostics["mean_error_x100_reverse"] = back.mean_error_x100;
    report.mean_error_x100 = 0.5 * (report.mean_error_x100 + back.mean_error_x100);
  }
  const auto ortho = loss_diagnostics(r.ladder, r.final_map, Penalty::orthogonality);
  report.diagnostics["orthogonality_penalty_final"] = penalty_orthogonality(r.final_map);
  report.diagnostics["L_inter_orthogonality"] = ortho.inter;
  report.diagnostics["L_final_orthogonality"] = ortho.final;
  return report;
}

inline void add_supervised_diagnostics(EvalReport& report, const MatchResult& r, const PointwiseMap& gt,
                                       const SpectralBasis& source, const SpectralBasis& target) {
  const Index top = std::max(r.ladder.top_resolution(), r.final_map.k());
  const FunctionalMap c_gt = gt_fmap(gt, source, target, top);
  const auto sup = loss_diagnostics(r.ladder, r.final_map, Penalty::supervised, &c_gt);
  report.diagnostics["supervised_penalty_final"] = penalty_supervised(r.final_map, principal_submatrix(c_gt, r.final_map.k()));
  report.diagnostics["L_inter_supervised"] = sup.inter;
  report.diagnostics["L_final_supervised"] = sup.final;
}

inline MatchOutput cmd_match(const RunConfig& cfg) {
  const Log log(cfg.quiet);
  const PipelineOptions opt = validate_pipeline_config(cfg);
  require_file(cfg.source, "source mesh");
  require_file(cfg.target, "target mesh");
  if (!cfg.gt.empty()) require_file(cfg.gt, "ground-truth file");
  if (cfg.symmetric && cfg.gt_reverse.empty()) throw validation_error("--symmetric needs --gt-reverse");

  const PreparedMesh src = prepare_mesh(cfg.source, cfg, opt, 0, log);
  const PreparedMesh tgt = prepare_mesh(cfg.target, cfg, opt, 1, log);
  log.info("source " + std::to_string(src.mesh.num_vertices()) + " vertices, target " +
           std::to_string(tgt.mesh.num_vertices()) + " vertices");

  MatchOutput out;
  out.directory = cfg.output_dir;
  out.result = match_pair(src.basis, tgt.basis, src.descriptors, tgt.descriptors, opt);
  const auto& r = out.result;

  fs::create_directories(cfg.output_dir);
  save_correspondence(r.p2p.source_to_target, cfg.output_dir / "p2p_source_to_target.txt", cfg.index_base);
  save_correspondence(r.p2p.target_to_source, cfg.output_dir / "p2p_target_to_source.txt", cfg.index_base);
  save_fmap(r.final_map, cfg.output_dir / "fmap.csv");
  write_attention_csv(r, cfg.output_dir / "attention.csv");
  if (cfg.export_residuals) write_csv(r.features.per_point, cfg.output_dir / "residuals.csv");

  json summary;
  summary["source"] = cfg.source.string();
  summary["target"] = cfg.target.string();
  summary["config"] = to_json(cfg);
  summary["attention_weights"] = std::vector<double>(r.weights.weights.data(), r.weights.weights.data() + r.weights.size());
  summary["resolutions"] = r.ladder.resolutions;
  if (!cfg.gt.empty()) {
    const PointwiseMap gt =
        load_correspondence(cfg.gt, src.mesh.num_vertices(), tgt.mesh.num_vertices(), cfg.index_base);
    std::optional<PointwiseMap> gt_rev;
    if (cfg.symmetric)
      gt_rev = load_correspondence(cfg.gt_reverse, tgt.mesh.num_vertices(), src.mesh.num_vertices(), cfg.index_base);
    EvalReport report = evaluate_prediction(r, src.mesh, tgt.mesh, gt, gt_rev ? &*gt_rev : nullptr);
    add_supervised_diagnostics(report, r, gt, src.basis, tgt.basis);
    write_curve_csv(report.curve, cfg.output_dir / "curve.csv");
    write_errors_csv(report.per_point_errors, cfg.output_dir / "errors.csv");
    summary["evaluation"] = to_json(report);
    log.info("mean geodesic error x100: " + std::to_string(report.mean_error_x100));
    out.report = std::move(report);
  }
  {
    std::ofstream f(cfg.output_dir / "summary.json");
    f << std::setw(2) << summary << '\n';
  }
  {
    // Wall-clock timings live in their own file so the other outputs are reproducible byte for byte.
    std::ofstream f(cfg.output_dir / "timing.json");
    f << std::setw(2) << timings_json(r) << '\n';
  }
  std::ostringstream msg;
  msg << "done in " << std::fixed << std::setprecision(3) << r.timing("total") << " s; outputs in "
      << cfg.output_dir.string();
  log.info(msg.str());
  return out;
}

// ---------------------------------------------------------------------- eval

struct ManifestEntry {
  fs::path source, target, gt, gt_reverse;
};

/// Whitespace-separated lines "source target gt [gt_reverse]"; '#' starts a
/// comment. Relative paths are resolved against the manifest's directory.
inline std::vector<ManifestEntry> read_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw validation_error("cannot open manifest " + path.string());
  const fs::path base = path.parent_path();
  auto resolve = [&](const std::string& s) {
    fs::path p(s);
    return p.is_absolute() ? p : base / p;
  };
  std::vector<ManifestEntry> entries;
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    std::istringstream ls(line);
    std::vector<std::string> tokens;
    for (std::string t; ls >> t;) tokens.push_back(t);
    if (tokens.empty()) continue;
    if (tokens.size() < 3 || tokens.size() > 4)
      throw validation_error(path.string() + ":" + std::to_string(line_no) +
                             ": expected 'source target gt [gt_reverse]'");
    ManifestEntry e{resolve(tokens[0]), resolve(tokens[1]), resolve(tokens[2]), {}};
    if (tokens.size() == 4) e.gt_reverse = resolve(tokens[3]);
    entries.push_back(std::move(e));
  }
  if (entries.empty()) throw validation_error(path.string() + ": manifest lists no pairs");
  return entries;
}

struct PairOutcome {
  ManifestEntry entry;
  std::optional<EvalReport> report;
  std::string error;
  int error_code = 0;
};

struct EvalSummary {
  std::vector<PairOutcome> pairs;
  double mean_of_means_x100 = 0.0;
  int successes = 0;
  int exit_code = 0;
};

inline EvalSummary cmd_eval(const RunConfig& cfg) {
  const Log log(cfg.quiet);
  const PipelineOptions opt = validate_pipeline_config(cfg);
  require_file(cfg.manifest, "manifest");
  const auto entries = read_manifest(cfg.manifest);
  for (const auto& e : entries) {
    require_file(e.source, "source mesh");
    require_file(e.target, "target mesh");
    require_file(e.gt, "ground-truth file");
    if (cfg.symmetric) require_file(e.gt_reverse, "reverse ground-truth file");
  }

  EvalSummary summary;
  summary.pairs.resize(entries.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (std::size_t i = next++; i < entries.size(); i = next++) {
      auto& outcome = summary.pairs[i];
      outcome.entry = entries[i];
      try {
        const PreparedMesh src = prepare_mesh(entries[i].source, cfg, opt, 0, log);
        const PreparedMesh tgt = prepare_mesh(entries[i].target, cfg, opt, 1, log);
        const MatchResult r = match_pair(src.basis, tgt.basis, src.descriptors, tgt.descriptors, opt);
        const PointwiseMap gt =
            load_correspondence(entries[i].gt, src.mesh.num_vertices(), tgt.mesh.num_vertices(), cfg.index_base);
        std::optional<PointwiseMap> gt_rev;
        if (cfg.symmetric)
          gt_rev = load_correspondence(entries[i].gt_reverse, tgt.mesh.num_vertices(), src.mesh.num_vertices(),
                                       cfg.index_base);
        EvalReport report = evaluate_prediction(r, src.mesh, tgt.mesh, gt, gt_rev ? &*gt_rev : nullptr);
        add_supervised_diagnostics(report, r, gt, src.basis, tgt.basis);
        log.info("pair " + std::to_string(i) + " (" + entries[i].source.filename().string() + " -> " +
                 entries[i].target.filename().string() + "): mean error x100 = " +
                 std::to_string(report.mean_error_x100));
        outcome.report = std::move(report);
      } catch (const Error& e) {
        outcome.error = e.what();
        outcome.error_code = e.kind() == ErrorKind::numerical ? 2 : 1;
        log.warn("pair " + std::to_string(i) + " failed: " + e.what());
      }
    }
  };
  const int workers = std::max(1, std::min<int>(cfg.threads, static_cast<int>(entries.size())));
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  fs::create_directories(cfg.output_dir / "pairs");
  json report;
  report["config"] = to_json(cfg);
  report["pairs"] = json::array();
  double sum = 0.0;
  std::vector<double> pooled;
  for (std::size_t i = 0; i < summary.pairs.size(); ++i) {
    const auto& p = summary.pairs[i];
    json jp;
    jp["source"] = p.entry.source.string();
    jp["target"] = p.entry.target.string();
    if (p.report) {
      jp["result"] = to_json(*p.report);
      sum += p.report->mean_error_x100;
      ++summary.successes;
      const fs::path stem = cfg.output_dir / "pairs" / ("pair_" + std::to_string(i));
      write_curve_csv(p.report->curve, stem.string() + "_curve.csv");
      write_errors_csv(p.report->per_point_errors, stem.string() + "_errors.csv");
      pooled.insert(pooled.end(), p.report->per_point_errors.data(),
                    p.report->per_point_errors.data() + p.report->per_point_errors.size());
    } else {
      jp["error"] = p.error;
      summary.exit_code = std::max(summary.exit_code, p.error_code);
    }
    report["pairs"].push_back(jp);
  }
  if (summary.successes > 0) {
    summary.mean_of_means_x100 = sum / summary.successes;
    write_curve_csv(accuracy_curve(Eigen::Map<const Vector>(pooled.data(), static_cast<Index>(pooled.size()))),
                    cfg.output_dir / "curve.csv");
  }
  report["mean_of_means_x100"] = summary.successes > 0 ? json(summary.mean_of_means_x100) : json(nullptr);
  report["successes"] = summary.successes;
  report["failures"] = static_cast<int>(summary.pairs.size()) - summary.successes;
  std::ofstream(cfg.output_dir / "report.json") << std::setw(2) << report << '\n';
  log.info("evaluated " + std::to_string(summary.successes) + "/" + std::to_string(summary.pairs.size()) +
           " pairs; mean of means x100 = " + std::to_string(summary.mean_of_means_x100));
  if (summary.successes == 0) summary.exit_code = std::max(summary.exit_code, 1);
  return summary;
}

// --------------------------------------------------------------------- bench

struct BenchRow {
  LadderMode mode;
  int repeat;
  std::vector<std::pair<std::string, double>> timings;
};

inline std::vector<BenchRow> cmd_bench(const RunConfig& cfg, std::ostream& table) {
  const Log log(cfg.quiet);
  PipelineOptions opt = validate_pipeline_config(cfg);
  require_file(cfg.source, "source mesh");
  require_file(cfg.target, "target mesh");
  const PreparedMesh src = prepare_mesh(cfg.source, cfg, opt, 0, log);
  const PreparedMesh tgt = prepare_mesh(cfg.target, cfg, opt, 1, log);

  std::vector<BenchRow> rows;
  for (LadderMode mode : {LadderMode::fast, LadderMode::standard}) {
    opt.solver.mode = mode;
    for (int rep = 0; rep < std::max(1, cfg.repeats); ++rep) {
      const MatchResult r = match_pair(src.basis, tgt.basis, src.descriptors, tgt.descriptors, opt);
      rows.push_back({mode, rep, r.timings});
    }
  }
  const std::vector<std::string> stages = {"functional_map", "attention", "upsample", "extract", "total"};
  table << std::left << std::setw(10) << "mode" << std::setw(8) << "repeat";
  for (const auto& s : stages) table << std::right << std::setw(16) << s;
  table << '\n';
  for (const auto& row : rows) {
    table << std::left << std::setw(10) << to_string(row.mode) << std::setw(8) << row.repeat;
    for (const auto& s : stages) {
      double v = 0.0;
      for (const auto& [name, t] : row.timings)
        if (name == s) v = t;
      table << std::right << std::setw(16) << std::fixed << std::setprecision(4) << v;
    }
    table << '\n';
  }
  fs::create_directories(cfg.output_dir);
  std::ofstream csv(cfg.output_dir / "bench.csv");
  csv << "mode,repeat,stage,seconds\n" << std::setprecision(9);
  for (const auto& row : rows)
    for (const auto& [name, t] : row.timings) csv << to_string(row.mode) << ',' << row.repeat << ',' << name << ',' << t << '\n';
  return rows;
}

}  // namespace mrfm::cli

// mrfm command-line tool: precompute, match, eval, bench.

#include "commands.hpp"

#include "CLI11.hpp"

#include <iostream>
#include <optional>
#include <string>

namespace {

using mrfm::cli::RunConfig;

// Flags are parsed into optionals so only the ones given override the config file.
struct Flags {
  std::string config;
  std::vector<std::string> meshes;
  std::string source, target, manifest, gt, gt_reverse;
  std::optional<int> index_base;
  std::optional<std::string> descriptors;
  std::optional<long> wks_energies;
  std::optional<double> alpha;
  std::optional<long> k_min, k_max, tau, basis_k;
  std::optional<std::string> mode;
  std::optional<std::string> attention;
  std::optional<double> attn_temp, soft_temp;
  bool area_weighted = false;
  std::optional<long> refine_steps, refine_tau;
  bool no_normalize = false;
  bool symmetric = false;
  bool export_residuals = false;
  bool deterministic = false;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads, repeats;
  std::string output, cache_dir;
  bool quiet = false;
};

void add_common(CLI::App* cmd, Flags& f) {
  cmd->add_option("--config", f.config, "JSON config file; flags override its values");
  cmd->add_option("--cache-dir", f.cache_dir, "directory for cached eigenbases");
  cmd->add_option("--k-max", f.k_max, "largest spectral resolution");
  cmd->add_option("--basis-k", f.basis_k, "eigenpairs to compute (default k-max)");
  cmd->add_option("--seed", f.seed, "eigensolver start-vector seed");
  cmd->add_flag("--no-normalize", f.no_normalize, "keep the input scale instead of rescaling to unit area");
  cmd->add_flag("--quiet", f.quiet, "only print warnings and errors");
}

void add_pipeline(CLI::App* cmd, Flags& f) {
  cmd->add_option("--descriptors", f.descriptors, "wks | hks | file:<src>,<tgt> | file:<dir>");
  cmd->add_option("--wks-energies", f.wks_energies, "number of WKS energy samples");
  cmd->add_option("--alpha", f.alpha, "Laplacian commutativity weight");
  cmd->add_option("--k-min", f.k_min, "smallest spectral resolution");
  cmd->add_option("--tau", f.tau, "resolution step");
  cmd->add_option("--mode", f.mode, "ladder mode: fast | standard");
  cmd->add_option("--attention", f.attention, "uniform | mean-residual | external:<path>");
  cmd->add_option("--attn-temp", f.attn_temp, "mean-residual softmax temperature (adaptive if unset)");
  cmd->add_flag("--area-weighted", f.area_weighted, "area-weight the mean residuals");
  cmd->add_option("--soft-temp", f.soft_temp, "soft pointwise map temperature (adaptive if unset)");
  cmd->add_option("--refine-steps", f.refine_steps, "refinement iterations after assembly");
  cmd->add_option("--refine-tau", f.refine_tau, "refinement step size");
  cmd->add_option("--index-base", f.index_base, "index base of correspondence files (0 or 1)");
  cmd->add_flag("--deterministic", f.deterministic, "accepted for scripts; every run is deterministic");
  cmd->add_option("-o,--output", f.output, "output directory");
}

RunConfig resolve(const Flags& f) {
  RunConfig cfg;
  if (!f.config.empty()) mrfm::cli::load_config_file(cfg, f.config);
  for (const auto& m : f.meshes) cfg.meshes.emplace_back(m);
  if (!f.source.empty()) cfg.source = f.source;
  if (!f.target.empty()) cfg.target = f.target;
  if (!f.manifest.empty()) cfg.manifest = f.manifest;
  if (!f.gt.empty()) cfg.gt = f.gt;
  if (!f.gt_reverse.empty()) cfg.gt_reverse = f.gt_reverse;
  if (f.index_base) cfg.index_base = *f.index_base;
  if (f.descriptors) cfg.descriptors = *f.descriptors;
  if (f.wks_energies) cfg.wks_energies = *f.wks_energies;
  if (f.alpha) cfg.solver.alpha = *f.alpha;
  if (f.k_min) cfg.solver.k_min = *f.k_min;
  if (f.k_max) cfg.solver.k_max = *f.k_max;
  if (f.tau) cfg.solver.tau = *f.tau;
  if (f.basis_k) cfg.basis_k = *f.basis_k;
  if (f.mode) cfg.solver.mode = mrfm::cli::parse_mode(*f.mode);
  if (f.attention) cfg.attention = *f.attention;
  if (f.attn_temp) cfg.attention_temperature = *f.attn_temp;
  if (f.area_weighted) cfg.attention_area_weighted = true;
  if (f.soft_temp) cfg.soft_temperature = *f.soft_temp;
  if (f.refine_steps) cfg.refine_steps = *f.refine_steps;
  if (f.refine_tau) cfg.refine_tau = *f.refine_tau;
  if (f.no_normalize) cfg.normalize = false;
  if (f.symmetric) cfg.symmetric = true;
  if (f.export_residuals) cfg.export_residuals = true;
  if (f.deterministic) cfg.deterministic = true;
  if (f.seed) cfg.seed = *f.seed;
  if (f.threads) cfg.threads = *f.threads;
  if (f.repeats) cfg.repeats = *f.repeats;
  if (!f.output.empty()) cfg.output_dir = f.output;
  if (!f.cache_dir.empty()) cfg.cache_dir = f.cache_dir;
  if (f.quiet) cfg.quiet = true;
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-resolution functional maps with residual attention"};
  app.require_subcommand(1);
  Flags f;

  auto* pre = app.add_subcommand("precompute", "compute and cache Laplacian eigenbases");
  pre->add_option("meshes", f.meshes, "mesh files (OFF, OBJ, PLY)");
  add_common(pre, f);

  auto* match = app.add_subcommand("match", "match one shape pair");
  match->add_option("source", f.source, "source mesh");
  match->add_option("target", f.target, "target mesh");
  match->add_option("--gt", f.gt, "ground-truth correspondence, one target index per source vertex");
  match->add_option("--gt-reverse", f.gt_reverse, "ground truth from target to source for --symmetric");
  match->add_flag("--symmetric", f.symmetric, "also evaluate the target-to-source map");
  match->add_flag("--export-residuals", f.export_residuals, "write per-point residual features");
  add_common(match, f);
  add_pipeline(match, f);

  auto* eval = app.add_subcommand("eval", "match and evaluate every pair of a manifest");
  eval->add_option("manifest", f.manifest, "lines 'source target gt [gt_reverse]'");
  eval->add_option("--threads", f.threads, "pairs processed concurrently");
  eval->add_flag("--symmetric", f.symmetric, "also evaluate target-to-source using the reverse ground truth");
  add_common(eval, f);
  add_pipeline(eval, f);

  auto* bench = app.add_subcommand("bench", "time fast and standard ladder modes on one pair");
  bench->add_option("source", f.source, "source mesh");
  bench->add_option("target", f.target, "target mesh");
  bench->add_option("--repeats", f.repeats, "runs per mode");
  add_common(bench, f);
  add_pipeline(bench, f);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    const RunConfig cfg = resolve(f);
    if (pre->parsed()) return mrfm::cli::cmd_precompute(cfg).exit_code;
    if (match->parsed()) {
      mrfm::cli::cmd_match(cfg);
      return 0;
    }
    if (eval->parsed()) return mrfm::cli::cmd_eval(cfg).exit_code;
    if (bench->parsed()) {
      mrfm::cli::cmd_bench(cfg, std::cout);
      return 0;
    }
  } catch (const mrfm::Error& e) {
    std::cerr << "mrfm: error: " << e.what() << '\n';
    return e.kind() == mrfm::ErrorKind::numerical ? 2 : 1;
  } catch (const std::exception& e) {
    std::cerr << "mrfm: error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}

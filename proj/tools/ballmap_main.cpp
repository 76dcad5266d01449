// Command-line driver: single runs, epsilon sweeps, refinement studies, and
// mesh utilities. Exit codes: 0 certified/pass, 2 verdict failed, 3 stage
// error, 4 config error.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ballmap/pipeline.hpp"

namespace {

using namespace ballmap;

constexpr int kExitPass = 0;
constexpr int kExitVerdictFailed = 2;
constexpr int kExitStageError = 3;
constexpr int kExitConfigError = 4;

struct Overrides {
  std::string config_path;
  std::string mesh_path;
  double gen_h = -1;
  double radius = -1;
  std::string family;
  std::vector<double> eps;
  int levels = -1;
  int jobs = -1;
  std::string out;
  long long seed = -1;
  double tol = -1;
  std::string boundary_map;
  bool flip = false;
  int n_random_fields = -1;
};

// Attach the shared flag set to one subcommand; every flag mirrors a config
// key and wins over the config file.
void add_common_flags(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--config", o.config_path, "JSON config file");
  cmd->add_option("--mesh", o.mesh_path, "mesh file (native ascii, or .mesh medit)");
  cmd->add_option("--gen-h", o.gen_h, "generated ball resolution");
  cmd->add_option("--radius", o.radius, "generated ball radius");
  cmd->add_option("--family", o.family, "metric family: flat, conformal, bump-tensor");
  cmd->add_option("--eps", o.eps, "metric amplitude (list for sweep)")->delimiter(',');
  cmd->add_option("--levels", o.levels, "number of refinement levels (halving from 0.3)");
  cmd->add_option("--jobs", o.jobs, "sweep worker threads");
  cmd->add_option("--out", o.out, "output report path (stdout when omitted)");
  cmd->add_option("--seed", o.seed, "random seed for the inequality ledger");
  cmd->add_option("--tol", o.tol, "linear solver relative tolerance");
  cmd->add_option("--boundary-map", o.boundary_map, "identity or uniformize");
  cmd->add_flag("--flip-first-coordinate", o.flip,
                "adversarial: reflect the first boundary coordinate");
  cmd->add_option("--n-random-fields", o.n_random_fields, "random fields in the ledger");
}

RunConfig build_config(const Overrides& o, bool eps_is_list) {
  RunConfig cfg;
  if (!o.config_path.empty()) cfg = load_config(o.config_path);
  if (!o.mesh_path.empty()) cfg.mesh_path = o.mesh_path;
  if (o.gen_h > 0) {
    cfg.generate_h = o.gen_h;
    cfg.sweep_h = o.gen_h;
  }
  if (o.radius > 0) cfg.radius = o.radius;
  if (!o.family.empty()) cfg.family = parse_family(o.family);
  if (!o.eps.empty()) {
    if (eps_is_list) {
      cfg.sweep_eps = o.eps;
    } else if (o.eps.size() == 1) {
      cfg.eps = o.eps[0];
    } else {
      throw ConfigError("this verb takes a single --eps value");
    }
  }
  if (o.levels >= 0) {
    if (o.levels < 1) throw ConfigError("--levels must be positive");
    cfg.levels.clear();
    double h = 0.3;
    for (int k = 0; k < o.levels; ++k, h *= 0.5) cfg.levels.push_back(h);
  }
  if (o.jobs > 0) cfg.jobs = o.jobs;
  if (!o.out.empty()) cfg.out_path = o.out;
  if (o.seed >= 0) cfg.seed = static_cast<std::uint64_t>(o.seed);
  if (o.tol > 0) cfg.solver_tol = o.tol;
  if (!o.boundary_map.empty()) {
    if (o.boundary_map == "identity")
      cfg.uniformize_boundary = false;
    else if (o.boundary_map == "uniformize")
      cfg.uniformize_boundary = true;
    else
      throw ConfigError("--boundary-map must be 'identity' or 'uniformize'");
  }
  if (o.flip) cfg.flip_first_coordinate = true;
  if (o.n_random_fields >= 0) cfg.n_random_fields = o.n_random_fields;
  cfg.validate();
  return cfg;
}

void emit(const ordered_json& j, const std::string& out_path) {
  std::string text = j.dump(2);
  text.push_back('\n');
  if (out_path.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream f(out_path);
  if (!f) throw ConfigError("cannot open output path '" + out_path + "'");
  f << text;
}

int verb_run(const Overrides& o) {
  RunConfig cfg = build_config(o, false);
  PipelineReport rep = run_pipeline(cfg);
  emit(report_to_json(rep), cfg.out_path);
  if (!cfg.out_path.empty()) {
    std::cout << "verdict: " << rep.verdict();
    if (!rep.completed()) std::cout << " (stage " << rep.failed_stage << ")";
    std::cout << "\nreport: " << cfg.out_path << "\n";
  }
  if (!rep.completed()) return kExitStageError;
  return rep.certified() ? kExitPass : kExitVerdictFailed;
}

int verb_sweep(const Overrides& o) {
  RunConfig cfg = build_config(o, true);
  SweepReport sr = epsilon_sweep(cfg);
  emit(sweep_to_json(sr), cfg.out_path);
  if (!cfg.out_path.empty()) {
    std::string csv_path = cfg.out_path + ".csv";
    std::ofstream f(csv_path);
    if (!f) throw ConfigError("cannot open output path '" + csv_path + "'");
    f << sweep_to_csv(sr);
    for (const auto& fit : sr.fits)
      std::printf("fit %-32s slope %+.4f  r2 %.6f  (n=%d)\n", fit.name.c_str(), fit.slope,
                  fit.r2, fit.n_used);
    std::printf("slopes_ok: %s\n", sr.slopes_ok ? "true" : "false");
  }
  return sr.slopes_ok ? kExitPass : kExitVerdictFailed;
}

int verb_converge(const Overrides& o) {
  RunConfig cfg = build_config(o, false);
  ConvergenceReport cr = convergence_study(cfg);
  emit(convergence_to_json(cr), cfg.out_path);
  if (!cfg.out_path.empty()) {
    for (const auto& ord : cr.orders)
      std::printf("order %-16s %.3f  r2 %.6f  (n=%d)\n", ord.name.c_str(), ord.order, ord.r2,
                  ord.n_used);
    std::printf("orders_ok: %s\n", cr.orders_ok ? "true" : "false");
  }
  return cr.orders_ok ? kExitPass : kExitVerdictFailed;
}

ordered_json mesh_stats(const TetMesh& mesh) {
  double min_vol = std::numeric_limits<double>::infinity();
  for (size_t t = 0; t < mesh.tets.size(); ++t)
    min_vol = std::min(min_vol, mesh.tet_volume(static_cast<int>(t)));
  return ordered_json{{"vertices", mesh.vertices.size()},
                      {"tets", mesh.tets.size()},
                      {"boundary_faces", mesh.boundary_faces.size()},
                      {"max_edge", mesh.max_edge_length()},
                      {"min_tet_volume", min_vol},
                      {"chart_volume", mesh.total_chart_volume()}};
}

int verb_mesh_gen(const Overrides& o) {
  if (o.out.empty()) throw ConfigError("mesh gen requires --out");
  double h = o.gen_h > 0 ? o.gen_h : 0.15;
  double radius = o.radius > 0 ? o.radius : 1.0;
  TetMesh mesh = generate_ball_mesh(h, radius);
  save_mesh(mesh, o.out);
  ordered_json j = mesh_stats(mesh);
  j["path"] = o.out;
  std::cout << j.dump(2) << "\n";
  return kExitPass;
}

int verb_mesh_check(const Overrides& o) {
  if (o.mesh_path.empty()) throw ConfigError("mesh check requires --mesh");
  // construction runs the full validation suite (orientation, closed
  // 2-manifold boundary, positive volumes); failures surface as stage errors
  TetMesh mesh = load_mesh(o.mesh_path, mesh_format_for_path(o.mesh_path));
  ordered_json j = mesh_stats(mesh);
  j["path"] = o.mesh_path;
  j["valid"] = true;
  std::cout << j.dump(2) << "\n";
  return kExitPass;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ballmap: harmonic-coordinate diffeomorphism certification on discrete balls"};
  app.require_subcommand(1);

  Overrides o;
  CLI::App* run = app.add_subcommand("run", "full pipeline on one configuration");
  CLI::App* sweep = app.add_subcommand("sweep", "epsilon scaling experiment");
  CLI::App* converge = app.add_subcommand("converge", "mesh refinement study");
  CLI::App* mesh = app.add_subcommand("mesh", "mesh utilities");
  mesh->require_subcommand(1);
  CLI::App* mesh_gen = mesh->add_subcommand("gen", "generate a ball mesh");
  CLI::App* mesh_check = mesh->add_subcommand("check", "validate a mesh file");
  for (CLI::App* cmd : {run, sweep, converge, mesh_gen, mesh_check}) add_common_flags(cmd, o);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfigError;
  }

  try {
    if (run->parsed()) return verb_run(o);
    if (sweep->parsed()) return verb_sweep(o);
    if (converge->parsed()) return verb_converge(o);
    if (mesh->parsed()) {
      if (mesh_gen->parsed()) return verb_mesh_gen(o);
      if (mesh_check->parsed()) return verb_mesh_check(o);
    }
    std::cerr << "no verb selected\n";
    return kExitConfigError;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitStageError;
  }
}

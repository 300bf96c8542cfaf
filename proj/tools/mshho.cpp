#include "mshho/study.hpp"

#include <CLI11.hpp>

#include <iostream>

using namespace mshho;

namespace {

struct CommonArgs {
  std::string config_path;
  int workers = 0;
  std::string cache;
  std::string out;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config_path, "configuration file (key = value with sections)")
      ->required();
  cmd->add_option("--workers", args.workers, "worker threads for the offline step");
  cmd->add_option("--cache", args.cache, "cache directory override");
  cmd->add_option("--out", args.out, "output directory override");
}

StudyConfig load_config(const CommonArgs& args) {
  StudyConfig cfg = parse_config_file(args.config_path);
  if (args.workers > 0)
    cfg.workers = args.workers;
  if (!args.cache.empty())
    cfg.cache_dir = args.cache;
  if (!args.out.empty())
    cfg.out_dir = args.out;
  return cfg;
}

void cmd_correctors(const StudyConfig& cfg) {
  const DiffusionSpec spec = cfg.spec();
  std::cout << "coefficient " << spec.name << ", unit-cell resolution "
            << cfg.corrector_resolution << ", degree " << cfg.corrector_degree << "\n";
  const CorrectorSet cs = solve_correctors(spec, cfg.corrector_resolution, cfg.corrector_degree);
  const HomogenizedTensor t = homogenized_tensor(spec, cs);
  std::cout << std::setprecision(10);
  std::cout << "A0 (flux form)      = [" << t.A0(0, 0) << ", " << t.A0(0, 1) << "; " << t.A0(1, 0)
            << ", " << t.A0(1, 1) << "]\n";
  std::cout << "A0 (symmetric form) = [" << t.A0_symmetric(0, 0) << ", " << t.A0_symmetric(0, 1)
            << "; " << t.A0_symmetric(1, 0) << ", " << t.A0_symmetric(1, 1) << "]\n";
  std::cout << "form disagreement   = " << t.form_disagreement << "\n";
  std::cout << "stabilization energy (resolution indicator) = " << t.stabilization_energy << "\n";
  for (int l = 0; l < 2; ++l)
    std::cout << "corrector " << l + 1 << ": solve residual " << cs.solve_residual[static_cast<size_t>(l)]
              << ", mean residual " << cs.mean_residual[static_cast<size_t>(l)] << "\n";
  atomic_write(fs::path(cfg.out_dir) / "correctors.txt", [&](std::ostream& os) {
    os << std::setprecision(17);
    os << "A0 " << t.A0(0, 0) << ' ' << t.A0(0, 1) << ' ' << t.A0(1, 0) << ' ' << t.A0(1, 1)
       << "\n";
    os << "form_disagreement " << t.form_disagreement << "\n";
    os << "stabilization_energy " << t.stabilization_energy << "\n";
  });
}

void cmd_offline(const StudyConfig& cfg) {
  const MeshHierarchy h = build_hierarchy(cfg.levels, cfg.H0, cfg.max_cells);
  const OfflineSummary s = run_offline(cfg, h);
  std::cout << "offline: " << s.cells_computed << " cells computed, " << s.cells_cached
            << " served from cache (" << s.basis_solves << " local solves)\n";
  std::cout << "  basis functions: " << s.basis_seconds << " s\n";
  std::cout << "  reconstruction + condensation: " << s.pack_seconds << " s\n";
}

void cmd_online(const StudyConfig& cfg) {
  const MeshHierarchy h = build_hierarchy(cfg.levels, cfg.H0, cfg.max_cells);
  const ScalarField f = cfg.source();
  std::cout << "level,H,k,variant,dofs,online_s\n";
  for (const auto& [k, variant] : cfg.rows()) {
    const int l = cfg.levels - 1;
    const CoarseMesh& mesh = h.levels[static_cast<size_t>(l)];
    const LevelData data = load_level(cfg, mesh, l, k, variant);
    const OnlineResult r = run_online(cfg, mesh, data, f);
    std::cout << l << ',' << mesh.mesh_size << ',' << k << ',' << variant_name(variant) << ','
              << r.solution.n_dofs << ',' << r.online_seconds << "\n";
    const fs::path sol_path = fs::path(cfg.out_dir) / ("solution_L" + std::to_string(l) + "_k" +
                                                       std::to_string(k) + "_" +
                                                       variant_name(variant) + ".txt");
    atomic_write(sol_path, [&](std::ostream& os) {
      write_solution(os, mesh, data.set_ptrs(), r.solution);
    });
  }
}

void cmd_reference(const StudyConfig& cfg) {
  const MeshHierarchy h = build_hierarchy(cfg.reference_level() + 1, cfg.H0, cfg.max_cells);
  const Reference ref = compute_reference(cfg, h);
  std::cout << "reference: level " << cfg.reference_level() << ", degree " << cfg.ref_k << ", "
            << ref.mesh.tris.size() << " triangles";
  if (ref.seconds > 0.0)
    std::cout << ", solved in " << ref.seconds << " s";
  else
    std::cout << ", served from cache";
  std::cout << "\n";
}

void cmd_convergence(const StudyConfig& cfg) {
  const StudyResult res = run_convergence_study(cfg);
  atomic_write(fs::path(cfg.out_dir) / "convergence.csv",
               [&](std::ostream& os) { write_csv(os, res.records); });
  write_plot_data(fs::path(cfg.out_dir), cfg, res.records);
  write_csv(std::cout, res.records);
  std::cout << "offline: basis " << res.offline.basis_seconds << " s, packs "
            << res.offline.pack_seconds << " s (" << res.offline.cells_computed
            << " cells computed, " << res.offline.cells_cached << " cached)\n";
  std::cout << "reference: " << res.reference_seconds << " s\n";
  std::cout << "wrote " << (fs::path(cfg.out_dir) / "convergence.csv").string() << "\n";
}

void cmd_diagnose_expansion(const StudyConfig& cfg) {
  const ExpansionDiagnostic d = run_expansion_diagnostic(cfg);
  std::cout << "eps,energy,fine_h\n";
  for (size_t i = 0; i < d.eps_values.size(); ++i)
    std::cout << d.eps_values[i] << ',' << d.energies[i] << ',' << d.fine_h[i] << "\n";
  std::cout << "fitted slope of log E vs log eps: " << d.fitted_slope << "\n";
  atomic_write(fs::path(cfg.out_dir) / "expansion.csv", [&](std::ostream& os) {
    os << std::setprecision(17) << "eps,energy,fine_h\n";
    for (size_t i = 0; i < d.eps_values.size(); ++i)
      os << d.eps_values[i] << ',' << d.energies[i] << ',' << d.fine_h[i] << "\n";
    os << "# slope " << d.fitted_slope << "\n";
  });
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"multiscale hybrid high-order solver for oscillatory diffusion"};
  app.require_subcommand(1);
  CommonArgs args;

  auto* correctors = app.add_subcommand("correctors", "solve the unit-cell corrector problems and "
                                                      "compute the homogenized tensor");
  auto* offline = app.add_subcommand("offline", "populate the oscillatory basis cache");
  auto* online = app.add_subcommand("online", "solve the condensed problem from a complete cache");
  auto* convergence = app.add_subcommand("convergence", "run the full convergence study");
  auto* reference = app.add_subcommand("reference", "compute the monoscale reference solution");
  auto* diagnose = app.add_subcommand("diagnose-expansion",
                                      "report the two-scale expansion energy scaling");
  for (auto* cmd : {correctors, offline, online, convergence, reference, diagnose})
    add_common(cmd, args);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    const StudyConfig cfg = load_config(args);
    if (correctors->parsed())
      cmd_correctors(cfg);
    else if (offline->parsed())
      cmd_offline(cfg);
    else if (online->parsed())
      cmd_online(cfg);
    else if (convergence->parsed())
      cmd_convergence(cfg);
    else if (reference->parsed())
      cmd_reference(cfg);
    else if (diagnose->parsed())
      cmd_diagnose_expansion(cfg);
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}

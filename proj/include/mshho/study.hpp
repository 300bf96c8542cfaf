#pragma once

#include "mshho/expr.hpp"
#include "mshho/homogenization.hpp"
#include "mshho/mshho.hpp"

#include <atomic>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <thread>

namespace mshho {

namespace fs = std::filesystem;

/// Wall-clock stopwatch for the substep timings.
class Stopwatch {
public:
  Stopwatch() : t0_(std::chrono::steady_clock::now()) {}
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count();
  }

private:
  std::chrono::steady_clock::time_point t0_;
};

/// Run fn(0..n-1) on a small thread pool. The first exception wins and is
/// rethrown on the caller thread.
inline void parallel_for(int n, int workers, const std::function<void(int)>& fn) {
  workers = std::max(1, std::min(workers, n));
  if (workers == 1) {
    for (int i = 0; i < n; ++i)
      fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> threads;
  for (int w = 0; w < workers; ++w)
    threads.emplace_back([&] {
      for (;;) {
        const int i = next.fetch_add(1);
        if (i >= n || failed.load())
          return;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!error)
            error = std::current_exception();
          failed.store(true);
          return;
        }
      }
    });
  for (auto& t : threads)
    t.join();
  if (error)
    std::rethrow_exception(error);
}

/// Study configuration (flat key=value text with [sections]).
struct StudyConfig {
  // [problem]
  std::string coefficient = "periodic_paper";
  double epsilon = pi() / 150.0;
  std::string f = "sin(x)*sin(y)";
  // [study]
  std::vector<std::string> variants{"equal", "mixed"};
  std::vector<int> k_list{0, 1, 2};
  int levels = 3;
  double H0 = 1.42;
  int k_osc = 1;
  double fine_eps_divisor = 4.0;
  double fine_H_divisor = 4.0;
  int max_fine_tris = 1 << 22;
  int max_cells = 1 << 24;
  // [reference]
  int ref_level = -1; ///< default: last study level + 3
  int ref_k = 2;
  // [correctors]
  int corrector_resolution = 64;
  int corrector_degree = 1;
  // [expansion]
  std::vector<double> eps_list{0.2, 0.1, 0.05};
  int u0_resolution = 128;
  int u0_degree = 2;
  double diag_h_over_eps = 1.0 / 6.0;
  int diag_degree = 2;
  // [solver]
  bool use_cg = false;
  double cg_tolerance = 1e-10;
  bool oscillatory_rhs = false;
  // [run]
  int workers = 1;
  std::string cache_dir = "mshho-cache";
  std::string out_dir = "mshho-out";
  std::uint64_t seed = 24601;

  int reference_level() const { return ref_level >= 0 ? ref_level : levels - 1 + 3; }

  DiffusionSpec spec() const { return make_spec(coefficient, epsilon); }

  ScalarField source() const {
    Expression e(f, epsilon);
    return [e](const Vec2& x) { return e(x); };
  }

  SparseSolveOptions sparse_options() const {
    SparseSolveOptions o;
    o.use_cg = use_cg;
    o.cg_tolerance = cg_tolerance;
    return o;
  }

  double target_h(const DiffusionSpec& spec, double HT) const {
    const double by_H = HT / fine_H_divisor;
    return spec.oscillatory ? std::min(epsilon / fine_eps_divisor, by_H) : by_H;
  }

  void validate() const {
    if (levels < 1)
      throw ConfigError("study.levels must be at least 1");
    if (!(H0 > 0.0))
      throw ConfigError("study.H0 must be positive");
    if (!(epsilon > 0.0))
      throw ConfigError("problem.epsilon must be positive");
    if (reference_level() < levels)
      throw ConfigError("reference.level must be strictly finer than every study level");
    if (k_osc < 1)
      throw ConfigError("study.k_osc must be at least 1");
    for (int k : k_list)
      if (k < 0 || k > 6)
        throw ConfigError("study.k entries must lie in [0, 6]");
    for (const auto& v : variants)
      variant_from_name(v); // throws on unknown names
    if (workers < 1)
      throw ConfigError("run.workers must be at least 1");
    Expression check(f, epsilon); // parse errors surface as ConfigError
  }

  /// Study rows: each variant per k, skipping the undefined mixed k=0 pair.
  std::vector<std::pair<int, Variant>> rows() const {
    std::vector<std::pair<int, Variant>> out;
    for (int k : k_list)
      for (const auto& vs : variants) {
        const Variant v = variant_from_name(vs);
        if (v == Variant::Mixed && k == 0)
          continue;
        out.emplace_back(k, v);
      }
    return out;
  }
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  const auto e = s.find_last_not_of(" \t\r");
  return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ',') {
      out.push_back(trim(cur));
      cur.clear();
    } else
      cur += c;
  }
  if (!trim(cur).empty())
    out.push_back(trim(cur));
  return out;
}

} // namespace detail

inline StudyConfig parse_config(std::istream& is) {
  StudyConfig c;
  std::string line, section;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos)
      line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty())
      continue;
    if (line.front() == '[' && line.back() == ']') {
      section = line.substr(1, line.size() - 2);
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = section + "." + detail::trim(line.substr(0, eq));
    const std::string val = detail::trim(line.substr(eq + 1));
    try {
      if (key == "problem.coefficient")
        c.coefficient = val;
      else if (key == "problem.epsilon")
        c.epsilon = std::stod(val);
      else if (key == "problem.f")
        c.f = val;
      else if (key == "study.variants")
        c.variants = detail::split_list(val);
      else if (key == "study.k") {
        c.k_list.clear();
        for (const auto& s : detail::split_list(val))
          c.k_list.push_back(std::stoi(s));
      } else if (key == "study.levels")
        c.levels = std::stoi(val);
      else if (key == "study.H0")
        c.H0 = std::stod(val);
      else if (key == "study.k_osc")
        c.k_osc = std::stoi(val);
      else if (key == "study.fine_eps_divisor")
        c.fine_eps_divisor = std::stod(val);
      else if (key == "study.fine_H_divisor")
        c.fine_H_divisor = std::stod(val);
      else if (key == "study.max_fine_tris")
        c.max_fine_tris = std::stoi(val);
      else if (key == "study.max_cells")
        c.max_cells = std::stoi(val);
      else if (key == "reference.level")
        c.ref_level = std::stoi(val);
      else if (key == "reference.k")
        c.ref_k = std::stoi(val);
      else if (key == "correctors.resolution")
        c.corrector_resolution = std::stoi(val);
      else if (key == "correctors.degree")
        c.corrector_degree = std::stoi(val);
      else if (key == "expansion.eps_list") {
        c.eps_list.clear();
        for (const auto& s : detail::split_list(val))
          c.eps_list.push_back(std::stod(s));
      } else if (key == "expansion.u0_resolution")
        c.u0_resolution = std::stoi(val);
      else if (key == "expansion.u0_degree")
        c.u0_degree = std::stoi(val);
      else if (key == "expansion.h_over_eps")
        c.diag_h_over_eps = std::stod(val);
      else if (key == "expansion.degree")
        c.diag_degree = std::stoi(val);
      else if (key == "solver.use_cg")
        c.use_cg = val == "true" || val == "1";
      else if (key == "solver.cg_tolerance")
        c.cg_tolerance = std::stod(val);
      else if (key == "solver.oscillatory_rhs")
        c.oscillatory_rhs = val == "true" || val == "1";
      else if (key == "run.workers")
        c.workers = std::stoi(val);
      else if (key == "run.cache")
        c.cache_dir = val;
      else if (key == "run.out")
        c.out_dir = val;
      else if (key == "run.seed")
        c.seed = static_cast<std::uint64_t>(std::stoull(val));
      else
        throw ConfigError("unknown config key: " + key);
    } catch (const std::invalid_argument&) {
      throw ConfigError("config line " + std::to_string(lineno) + ": bad value for " + key);
    }
  }
  c.validate();
  return c;
}

inline StudyConfig parse_config_file(const std::string& path) {
  std::ifstream is(path);
  if (!is)
    throw ConfigError("cannot open config file: " + path);
  return parse_config(is);
}

/// Atomic file write: temp file then rename.
inline void atomic_write(const fs::path& path, const std::function<void(std::ostream&)>& writer) {
  fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary);
    if (!os)
      throw ConfigError("cannot open file for writing: " + tmp.string());
    writer(os);
  }
  fs::rename(tmp, path);
}

/// On-disk cache of basis sets, keyed by coefficient, level, k and k_osc.
/// One file per cell; files are written atomically and never rewritten, so
/// concurrent workers and repeated runs are safe. Deleting the directory is
/// always safe.
class BasisCache {
public:
  BasisCache(fs::path root, const DiffusionSpec& spec) : root_(std::move(root)) {
    std::string key = spec.cache_key();
    for (char& ch : key)
      if (!std::isalnum(static_cast<unsigned char>(ch)))
        ch = '_';
    root_ /= key;
  }

  fs::path cell_path(int level, int k, int q, int cell) const {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "L%d_k%d_q%d", level, k, q);
    return root_ / buf / ("cell" + std::to_string(cell) + ".bin");
  }

  bool has(int level, int k, int q, int cell) const {
    return fs::exists(cell_path(level, k, q, cell));
  }

  CellBasisSet load(int level, int k, int q, int cell) const {
    const fs::path p = cell_path(level, k, q, cell);
    std::ifstream is(p, std::ios::binary);
    if (!is)
      throw ConfigError("cache miss: " + p.string());
    return read_basis_set(is);
  }

  void store(int level, int k, int q, int cell, const CellBasisSet& set) const {
    atomic_write(cell_path(level, k, q, cell), [&](std::ostream& os) { write_basis_set(os, set); });
  }

  const fs::path& root() const { return root_; }

private:
  fs::path root_;
};

/// Offline summary: what was computed vs served from the cache, with the
/// per-substep wall times of the offline pipeline.
struct OfflineSummary {
  int cells_total = 0;
  int cells_computed = 0;
  int cells_cached = 0;
  long long basis_solves = 0; ///< local Neumann solves actually performed
  double basis_seconds = 0.0;
  double pack_seconds = 0.0;
};

/// Populate the cache for every cell of every study level and degree, then
/// build (and discard) the operator packs to time the condensation substep.
/// Per-cell work runs on the worker pool; each cache file's bytes depend only
/// on the cell's inputs, so worker count does not change the cache.
inline OfflineSummary run_offline(const StudyConfig& cfg, const MeshHierarchy& hierarchy) {
  const DiffusionSpec spec = cfg.spec();
  const BasisCache cache(cfg.cache_dir, spec);
  OfflineSummary sum;
  Stopwatch total;
  for (int k : cfg.k_list) {
    for (int l = 0; l < cfg.levels; ++l) {
      const CoarseMesh& mesh = hierarchy.levels[static_cast<size_t>(l)];
      const int nc = static_cast<int>(mesh.cells.size());
      sum.cells_total += nc;
      std::atomic<int> computed{0};
      std::atomic<long long> solves{0};
      Stopwatch sw;
      parallel_for(nc, cfg.workers, [&](int c) {
        if (cache.has(l, k, cfg.k_osc, c)) {
          return;
        }
        const double th = cfg.target_h(spec, mesh.cells[static_cast<size_t>(c)].diameter);
        const CellBasisSet set =
            compute_basis_set(mesh, c, spec, k, cfg.k_osc, th, cfg.max_fine_tris);
        cache.store(l, k, cfg.k_osc, c, set);
        computed.fetch_add(1);
        solves.fetch_add(set.dimension());
      });
      sum.basis_seconds += sw.seconds();
      sum.cells_computed += computed.load();
      sum.cells_cached += nc - computed.load();
      sum.basis_solves += solves.load();
    }
  }
  // reconstruction operators + static condensation (packs are cheap to build
  // and are rebuilt from the cache when used; timing reported here)
  Stopwatch pk;
  for (int k : cfg.k_list)
    for (int l = 0; l < cfg.levels; ++l) {
      const CoarseMesh& mesh = hierarchy.levels[static_cast<size_t>(l)];
      parallel_for(static_cast<int>(mesh.cells.size()), cfg.workers, [&](int c) {
        const CellBasisSet set = cache.load(l, k, cfg.k_osc, c);
        for (const auto& vs : cfg.variants) {
          const Variant v = variant_from_name(vs);
          if (v == Variant::Mixed && k == 0)
            continue;
          (void)build_pack(set, v, spec.alpha);
        }
      });
    }
  sum.pack_seconds = pk.seconds();
  return sum;
}

/// One row of the convergence study output.
struct ConvergenceRecord {
  int level = 0;
  double H = 0.0;
  int k = 0;
  Variant variant = Variant::Equal;
  int dofs = 0;
  double energy_error = -1.0;
  double offline_seconds = 0.0;
  double online_seconds = 0.0;
};

/// In-memory offline data of one (level, k): the basis sets and packs of all
/// cells, ready for online solves.
struct LevelData {
  std::vector<CellBasisSet> sets;
  std::vector<LocalOperatorPack> packs;
  double load_seconds = 0.0;
  double pack_seconds = 0.0;

  std::vector<const CellBasisSet*> set_ptrs() const {
    std::vector<const CellBasisSet*> p;
    for (const auto& s : sets)
      p.push_back(&s);
    return p;
  }
  std::vector<const LocalOperatorPack*> pack_ptrs() const {
    std::vector<const LocalOperatorPack*> p;
    for (const auto& s : packs)
      p.push_back(&s);
    return p;
  }
};

inline LevelData load_level(const StudyConfig& cfg, const CoarseMesh& mesh, int level, int k,
                            Variant variant) {
  const DiffusionSpec spec = cfg.spec();
  const BasisCache cache(cfg.cache_dir, spec);
  LevelData data;
  const int nc = static_cast<int>(mesh.cells.size());
  data.sets.resize(static_cast<size_t>(nc));
  data.packs.resize(static_cast<size_t>(nc));
  Stopwatch sw;
  std::vector<std::string> missing;
  std::mutex mmut;
  parallel_for(nc, cfg.workers, [&](int c) {
    if (!cache.has(level, k, cfg.k_osc, c)) {
      std::lock_guard<std::mutex> lock(mmut);
      missing.push_back(cache.cell_path(level, k, cfg.k_osc, c).string());
      return;
    }
    data.sets[static_cast<size_t>(c)] = cache.load(level, k, cfg.k_osc, c);
  });
  if (!missing.empty()) {
    std::string msg = "offline cache incomplete; missing keys:";
    for (size_t i = 0; i < missing.size() && i < 8; ++i)
      msg += "\n  " + missing[i];
    if (missing.size() > 8)
      msg += "\n  ... (" + std::to_string(missing.size() - 8) + " more)";
    throw ConfigError(msg);
  }
  data.load_seconds = sw.seconds();
  Stopwatch pk;
  parallel_for(nc, cfg.workers, [&](int c) {
    data.packs[static_cast<size_t>(c)] =
        build_pack(data.sets[static_cast<size_t>(c)], variant, spec.alpha);
  });
  data.pack_seconds = pk.seconds();
  return data;
}

/// The f-dependent online step: project the source and solve the condensed
/// face system. Requires a complete cache (throws naming missing keys).
struct OnlineResult {
  MsHhoSolution solution;
  double online_seconds = 0.0;
};

inline OnlineResult run_online(const StudyConfig& cfg, const CoarseMesh& mesh,
                               const LevelData& data, const ScalarField& f) {
  MsHhoOptions opt;
  opt.sparse = cfg.sparse_options();
  opt.oscillatory_rhs = cfg.oscillatory_rhs;
  Stopwatch sw;
  OnlineResult r;
  r.solution = mshho_solve(mesh, data.set_ptrs(), data.pack_ptrs(), f, opt);
  r.online_seconds = sw.seconds();
  return r;
}

/// Monoscale reference solution on a global structured mesh, cached on disk.
struct Reference {
  TriMesh mesh;
  FineField field;
  double seconds = 0.0;
};

inline std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

inline Reference compute_reference(const StudyConfig& cfg, const MeshHierarchy& hierarchy,
                                   bool use_cache = true) {
  const DiffusionSpec spec = cfg.spec();
  const int lref = cfg.reference_level();
  // the reference mesh is the structured refinement of the coarse family
  const int n0 = static_cast<int>(
      std::round(std::sqrt(2.0) / hierarchy.levels[0].mesh_size));
  const int nref = n0 << lref;
  Reference ref;
  ref.mesh = structured_tri_mesh(nref);
  const std::string key = "ref_" + std::to_string(fnv1a(spec.cache_key() + "|" + cfg.f)) + "_L" +
                          std::to_string(lref) + "_k" + std::to_string(cfg.ref_k) + ".bin";
  const fs::path path = fs::path(cfg.cache_dir) / key;
  if (use_cache && fs::exists(path)) {
    std::ifstream is(path, std::ios::binary);
    const auto rows = detail::get_u64(is), cols = detail::get_u64(is);
    if (rows == ref.mesh.tris.size() && cols == static_cast<std::uint64_t>(CellBasis::dim(cfg.ref_k + 1))) {
      ref.field.degree = cfg.ref_k + 1;
      ref.field.coeffs.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
      is.read(reinterpret_cast<char*>(ref.field.coeffs.data()),
              static_cast<std::streamsize>(sizeof(double) * rows * cols));
      if (is)
        return ref;
    }
  }
  Stopwatch sw;
  const HhoSolution sol = solve_dirichlet(ref.mesh, cfg.ref_k, spec.field(), cfg.source(),
                                          spec.alpha, cfg.sparse_options(), 2 * cfg.ref_k + 6);
  ref.field = sol.recon;
  ref.seconds = sw.seconds();
  if (use_cache)
    atomic_write(path, [&](std::ostream& os) {
      detail::put_u64(os, static_cast<std::uint64_t>(ref.field.coeffs.rows()));
      detail::put_u64(os, static_cast<std::uint64_t>(ref.field.coeffs.cols()));
      os.write(reinterpret_cast<const char*>(ref.field.coeffs.data()),
               static_cast<std::streamsize>(sizeof(double) *
                                            static_cast<size_t>(ref.field.coeffs.size())));
    });
  return ref;
}

/// Full convergence study: offline population, reference solve, one online
/// solve and energy error per (level, k, variant).
struct StudyResult {
  std::vector<ConvergenceRecord> records;
  OfflineSummary offline;
  double reference_seconds = 0.0;
};

inline StudyResult run_convergence_study(const StudyConfig& cfg) {
  const DiffusionSpec spec = cfg.spec();
  const MeshHierarchy hierarchy =
      build_hierarchy(cfg.reference_level() + 1, cfg.H0, cfg.max_cells);
  StudyResult out;
  out.offline = run_offline(cfg, hierarchy);
  const Reference ref = compute_reference(cfg, hierarchy);
  out.reference_seconds = ref.seconds;
  const TriLocator ref_loc(ref.mesh);
  const ScalarField f = cfg.source();
  for (const auto& [k, variant] : cfg.rows()) {
    for (int l = 0; l < cfg.levels; ++l) {
      const CoarseMesh& mesh = hierarchy.levels[static_cast<size_t>(l)];
      const LevelData data = load_level(cfg, mesh, l, k, variant);
      const OnlineResult online = run_online(cfg, mesh, data, f);
      ConvergenceRecord rec;
      rec.level = l;
      rec.H = mesh.mesh_size;
      rec.k = k;
      rec.variant = variant;
      rec.dofs = online.solution.n_dofs;
      rec.energy_error = energy_error(mesh, data.set_ptrs(), online.solution, ref.mesh, ref.field,
                                      ref_loc, spec);
      rec.offline_seconds = data.pack_seconds; // per-row share; basis time is global
      rec.online_seconds = online.online_seconds;
      out.records.push_back(rec);
    }
  }
  return out;
}

/// CSV emission with the exact header the harness documents.
inline void write_csv(std::ostream& os, const std::vector<ConvergenceRecord>& records) {
  os << "level,H,k,variant,dofs,energy_error,offline_s,online_s\n";
  os << std::setprecision(17);
  for (const auto& r : records)
    os << r.level << ',' << r.H << ',' << r.k << ',' << variant_name(r.variant) << ',' << r.dofs
       << ',' << r.energy_error << ',' << r.offline_seconds << ',' << r.online_seconds << '\n';
}

/// Gnuplot-ready data: one row per level, one error column per (k, variant),
/// plus a driver script drawing the vertical eps marker.
inline void write_plot_data(const fs::path& dir, const StudyConfig& cfg,
                            const std::vector<ConvergenceRecord>& records) {
  std::map<int, std::map<std::string, double>> by_level;
  std::vector<std::string> columns;
  std::map<int, double> level_H;
  for (const auto& r : records) {
    const std::string col =
        "k" + std::to_string(r.k) + (r.variant == Variant::Mixed ? "mo" : "eo");
    if (by_level[r.level].count(col) == 0 &&
        std::find(columns.begin(), columns.end(), col) == columns.end())
      columns.push_back(col);
    by_level[r.level][col] = r.energy_error;
    level_H[r.level] = r.H;
  }
  atomic_write(dir / "convergence.dat", [&](std::ostream& os) {
    os << std::setprecision(17);
    os << "# eps = " << cfg.epsilon << "\n";
    os << "# H";
    for (const auto& c : columns)
      os << ' ' << c;
    os << '\n';
    for (const auto& [l, cols] : by_level) {
      os << level_H[l];
      for (const auto& c : columns) {
        auto it = cols.find(c);
        os << ' ' << (it == cols.end() ? std::nan("") : it->second);
      }
      os << '\n';
    }
  });
  atomic_write(dir / "convergence.gp", [&](std::ostream& os) {
    os << std::setprecision(17);
    os << "set logscale xy\nset xlabel 'H'\nset ylabel 'energy error'\n";
    os << "set xrange [*:*] reverse\n";
    os << "eps = " << cfg.epsilon << "\n";
    os << "set arrow from eps, graph 0 to eps, graph 1 nohead lc rgb 'red'\n";
    os << "plot";
    for (size_t i = 0; i < columns.size(); ++i)
      os << (i ? ", " : " ") << "'convergence.dat' using 1:" << i + 2 << " with linespoints title '"
         << columns[i] << "'";
    os << "\n";
  });
}

/// Expansion-diagnostic driver wired to the configuration.
inline ExpansionDiagnostic run_expansion_diagnostic(const StudyConfig& cfg) {
  DiffusionSpec spec = cfg.spec();
  for (double e : cfg.eps_list)
    if (cfg.diag_h_over_eps * e > e / 4.0 + 1e-15)
      throw ConfigError("expansion.h_over_eps leaves eps unresolved (h > eps/4)");
  ExpansionDiagnosticOptions opt;
  opt.corrector_resolution = cfg.corrector_resolution;
  opt.corrector_degree = cfg.corrector_degree;
  opt.fine_degree = cfg.diag_degree;
  opt.fine_h_over_eps = cfg.diag_h_over_eps;
  opt.u0_resolution = cfg.u0_resolution;
  opt.u0_degree = cfg.u0_degree;
  return expansion_energy_diagnostic(spec, cfg.source(), cfg.eps_list, opt);
}

} // namespace mshho

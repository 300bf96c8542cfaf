#include "mshho/study.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <fstream>
#include <sstream>

using namespace mshho;

namespace {

StudyConfig tiny_config(const fs::path& dir) {
  StudyConfig cfg;
  cfg.coefficient = "constant";
  cfg.epsilon = 1.0;
  cfg.f = "sin(pi*x)*sin(pi*y)";
  cfg.variants = {"equal", "mixed"};
  cfg.k_list = {0, 1};
  cfg.levels = 2;
  cfg.H0 = 1.42;
  cfg.k_osc = 1;
  cfg.ref_level = 4;
  cfg.ref_k = 2;
  cfg.workers = 1;
  cfg.cache_dir = (dir / "cache").string();
  cfg.out_dir = (dir / "out").string();
  cfg.validate();
  return cfg;
}

fs::path fresh_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

} // namespace

TEST_CASE("config parsing") {
  SECTION("sections, lists, comments, overrides") {
    std::stringstream ss(R"(
# a comment
[problem]
coefficient = laminate
epsilon = 0.125
f = sin(x)*sin(y)   # trailing comment

[study]
variants = mixed, equal
k = 1, 2
levels = 3
H0 = 0.71
k_osc = 2

[reference]
level = 6
k = 2

[run]
workers = 4
cache = /tmp/c
out = /tmp/o
seed = 99
)");
    const StudyConfig cfg = parse_config(ss);
    REQUIRE(cfg.coefficient == "laminate");
    REQUIRE(cfg.epsilon == 0.125);
    REQUIRE(cfg.k_list == std::vector<int>{1, 2});
    REQUIRE(cfg.variants == std::vector<std::string>{"mixed", "equal"});
    REQUIRE(cfg.levels == 3);
    REQUIRE(cfg.k_osc == 2);
    REQUIRE(cfg.ref_level == 6);
    REQUIRE(cfg.workers == 4);
    REQUIRE(cfg.seed == 99);
  }
  SECTION("unknown keys and malformed values are configuration errors") {
    std::stringstream s1("[problem]\nnot_a_key = 3\n");
    REQUIRE_THROWS_AS(parse_config(s1), ConfigError);
    std::stringstream s2("[study]\nlevels = many\n");
    REQUIRE_THROWS_AS(parse_config(s2), ConfigError);
    std::stringstream s3("[study]\nlevels = 3\n[reference]\nlevel = 2\n");
    REQUIRE_THROWS_AS(parse_config(s3), ConfigError); // reference not finer
    std::stringstream s4("[problem]\nf = sin(x\n");
    REQUIRE_THROWS_AS(parse_config(s4), ConfigError); // expression parse error
  }
  SECTION("study rows skip the undefined mixed k=0 pair") {
    StudyConfig cfg;
    cfg.variants = {"equal", "mixed"};
    cfg.k_list = {0, 1};
    const auto rows = cfg.rows();
    REQUIRE(rows.size() == 3);
    for (const auto& [k, v] : rows)
      REQUIRE(!(v == Variant::Mixed && k == 0));
  }
}

TEST_CASE("offline cache: idempotence and worker determinism") {
  const fs::path dir = fresh_dir("mshho-harness-offline");
  StudyConfig cfg = tiny_config(dir);
  cfg.levels = 2;
  const MeshHierarchy h = build_hierarchy(cfg.levels, cfg.H0, cfg.max_cells);

  const OfflineSummary s1 = run_offline(cfg, h);
  REQUIRE(s1.cells_computed == s1.cells_total);
  REQUIRE(s1.basis_solves > 0);

  // rerun: pure cache hits, zero new local solves
  const OfflineSummary s2 = run_offline(cfg, h);
  REQUIRE(s2.cells_computed == 0);
  REQUIRE(s2.basis_solves == 0);
  REQUIRE(s2.cells_cached == s2.cells_total);

  // a different worker count produces bitwise-identical cache payloads
  StudyConfig cfg4 = cfg;
  cfg4.workers = 4;
  cfg4.cache_dir = (dir / "cache4").string();
  const OfflineSummary s3 = run_offline(cfg4, h);
  REQUIRE(s3.cells_computed == s3.cells_total);
  const BasisCache c1(cfg.cache_dir, cfg.spec());
  const BasisCache c4(cfg4.cache_dir, cfg4.spec());
  int compared = 0;
  for (int k : cfg.k_list)
    for (int l = 0; l < cfg.levels; ++l)
      for (size_t cell = 0; cell < h.levels[static_cast<size_t>(l)].cells.size(); ++cell) {
        const auto p1 = c1.cell_path(l, k, cfg.k_osc, static_cast<int>(cell));
        const auto p4 = c4.cell_path(l, k, cfg.k_osc, static_cast<int>(cell));
        REQUIRE(fs::exists(p1));
        REQUIRE(fs::exists(p4));
        REQUIRE(slurp(p1) == slurp(p4));
        ++compared;
      }
  REQUIRE(compared == s1.cells_total);
}

TEST_CASE("cache misses are reported with the missing keys") {
  const fs::path dir = fresh_dir("mshho-harness-miss");
  StudyConfig cfg = tiny_config(dir);
  const MeshHierarchy h = build_hierarchy(cfg.levels, cfg.H0, cfg.max_cells);
  try {
    (void)load_level(cfg, h.levels[0], 0, 1, Variant::Equal);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    REQUIRE(std::string(e.what()).find("missing keys") != std::string::npos);
    REQUIRE(std::string(e.what()).find("cell") != std::string::npos);
  }
}

TEST_CASE("convergence study output contracts") {
  const fs::path dir = fresh_dir("mshho-harness-study");
  StudyConfig cfg = tiny_config(dir);
  const StudyResult res = run_convergence_study(cfg);

  // row count = levels x rows
  REQUIRE(res.records.size() == static_cast<size_t>(cfg.levels) * cfg.rows().size());
  const MeshHierarchy h = build_hierarchy(cfg.levels, cfg.H0);
  for (const auto& r : res.records) {
    REQUIRE(r.energy_error >= 0.0);
    REQUIRE(r.dofs ==
            static_cast<int>(h.levels[static_cast<size_t>(r.level)].interior_faces.size()) *
                (r.k + 1));
  }
  // constant coefficient + smooth source: errors decay with the level
  for (const auto& [k, variant] : cfg.rows()) {
    std::vector<double> errs;
    for (const auto& r : res.records)
      if (r.k == k && r.variant == variant)
        errs.push_back(r.energy_error);
    REQUIRE(errs.size() == 2);
    REQUIRE(errs[1] < errs[0]);
  }
  // CSV shape
  std::stringstream csv;
  write_csv(csv, res.records);
  std::string header;
  std::getline(csv, header);
  REQUIRE(header == "level,H,k,variant,dofs,energy_error,offline_s,online_s");
  int rows = 0;
  std::string line;
  while (std::getline(csv, line))
    if (!line.empty())
      ++rows;
  REQUIRE(rows == static_cast<int>(res.records.size()));
  // plot data: the eps marker equals the configured value exactly
  write_plot_data(dir, cfg, res.records);
  std::ifstream dat(dir / "convergence.dat");
  std::string first;
  std::getline(dat, first);
  REQUIRE(first.rfind("# eps = ", 0) == 0);
  REQUIRE(std::stod(first.substr(8)) == cfg.epsilon);
  REQUIRE(fs::exists(dir / "convergence.gp"));
}

TEST_CASE("study results are independent of the worker count") {
  const fs::path dir = fresh_dir("mshho-harness-det");
  StudyConfig c1 = tiny_config(dir);
  c1.k_list = {1};
  c1.variants = {"equal"};
  StudyConfig c4 = c1;
  c4.workers = 4;
  c4.cache_dir = (dir / "cache-w4").string();
  const StudyResult r1 = run_convergence_study(c1);
  const StudyResult r4 = run_convergence_study(c4);
  REQUIRE(r1.records.size() == r4.records.size());
  for (size_t i = 0; i < r1.records.size(); ++i)
    REQUIRE_THAT(r1.records[i].energy_error,
                 Catch::Matchers::WithinAbs(r4.records[i].energy_error, 1e-12));
}

TEST_CASE("online step reruns on the same cache for a new source") {
  const fs::path dir = fresh_dir("mshho-harness-online");
  StudyConfig cfg = tiny_config(dir);
  cfg.k_list = {1};
  cfg.variants = {"equal"};
  const MeshHierarchy h = build_hierarchy(cfg.levels, cfg.H0, cfg.max_cells);
  (void)run_offline(cfg, h);
  const OfflineSummary again = run_offline(cfg, h);
  REQUIRE(again.cells_computed == 0);

  const CoarseMesh& mesh = h.levels[1];
  const LevelData data = load_level(cfg, mesh, 1, 1, Variant::Equal);
  const OnlineResult a = run_online(cfg, mesh, data, cfg.source());
  Expression g("x*y", cfg.epsilon);
  const OnlineResult b = run_online(cfg, mesh, data, [g](const Vec2& x) { return g(x); });
  REQUIRE((a.solution.faces - b.solution.faces).norm() > 1e-6);
  // and the cache is untouched
  const OfflineSummary after = run_offline(cfg, h);
  REQUIRE(after.cells_computed == 0);
}

TEST_CASE("solution export writes the mesh format with a values column") {
  const fs::path dir = fresh_dir("mshho-harness-export");
  StudyConfig cfg = tiny_config(dir);
  cfg.k_list = {0};
  cfg.variants = {"equal"};
  cfg.levels = 1;
  const MeshHierarchy h = build_hierarchy(cfg.levels, cfg.H0, cfg.max_cells);
  (void)run_offline(cfg, h);
  const LevelData data = load_level(cfg, h.levels[0], 0, 0, Variant::Equal);
  const OnlineResult r = run_online(cfg, h.levels[0], data, cfg.source());
  std::stringstream ss;
  write_solution(ss, h.levels[0], data.set_ptrs(), r.solution);
  std::string line;
  std::getline(ss, line);
  REQUIRE(line == "#nodes");
  std::getline(ss, line);
  std::istringstream node(line);
  int id;
  double x, y, v;
  REQUIRE(static_cast<bool>(node >> id >> x >> y >> v));
  REQUIRE(ss.str().find("#cells") != std::string::npos);
}

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "sparse_ch/config.hpp"

using namespace sparse_ch;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("sparse_ch_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void expect_same_spec(const ProblemSpec& a, const ProblemSpec& b) {
  EXPECT_EQ(a.grid.n_cells, b.grid.n_cells);
  EXPECT_EQ(a.grid.h, b.grid.h);
  EXPECT_EQ(a.phys.n_steps, b.phys.n_steps);
  EXPECT_EQ(a.phys.T, b.phys.T);
  EXPECT_EQ(a.phys.tau, b.phys.tau);
  EXPECT_EQ(a.phys.gamma, b.phys.gamma);
  EXPECT_EQ(a.phys.gamma0, b.phys.gamma0);
  EXPECT_EQ(a.potential.c1, b.potential.c1);
  EXPECT_EQ(a.potential.c2, b.potential.c2);
  EXPECT_EQ(a.initial.phi0, b.initial.phi0);
  EXPECT_EQ(a.initial.w0, b.initial.w0);
  EXPECT_TRUE(std::equal(a.targets.phi_Q.flat().begin(), a.targets.phi_Q.flat().end(),
                         b.targets.phi_Q.flat().begin(), b.targets.phi_Q.flat().end()));
  EXPECT_EQ(a.targets.phi_Omega, b.targets.phi_Omega);
  EXPECT_EQ(a.weights.b1, b.weights.b1);
  EXPECT_EQ(a.weights.b2, b.weights.b2);
  EXPECT_EQ(a.weights.b3, b.weights.b3);
  EXPECT_EQ(a.weights.kappa, b.weights.kappa);
  EXPECT_EQ(a.bounds.lower_const, b.bounds.lower_const);
  EXPECT_EQ(a.bounds.upper_const, b.bounds.upper_const);
}

}  // namespace

TEST(Config, DefaultsReproduceDefaultInstance) {
  const RunConfig rc = resolve_config(Json::object());
  expect_same_spec(rc.spec, default_instance());
  EXPECT_EQ(max_abs(rc.control.flat()), 0.0);
  EXPECT_EQ(rc.optimizer.stat_tol, 1e-8);
  EXPECT_EQ(rc.output.snapshot_stride, 1u);
}

TEST(Config, ShippedDefaultFileMatches) {
  const RunConfig rc = load_config(fs::path(SPARSE_CH_CONFIG_DIR) / "default.json");
  expect_same_spec(rc.spec, default_instance());
}

TEST(Config, ShippedConfigsLoadOrFailAsIntended) {
  for (const char* name : {"homogeneous.json", "sparse_mid.json", "large_kappa.json", "small.json", "mutation.json"}) {
    EXPECT_NO_THROW(load_config(fs::path(SPARSE_CH_CONFIG_DIR) / name)) << name;
  }
  EXPECT_THROW(load_config(fs::path(SPARSE_CH_CONFIG_DIR) / "invalid_c2.json"), ValidationError);
}

TEST(Config, DottedOverrides) {
  Json j = default_config_json();
  apply_override(j, "cost.kappa=0.02");
  apply_override(j, "output.dir=results/run1");
  apply_override(j, "initial.phi0={\"cos\":{\"amplitude\":0.1,\"mode\":2}}");
  apply_override(j, "new_section.key=3");
  EXPECT_EQ(j["cost"]["kappa"].get<double>(), 0.02);
  EXPECT_EQ(j["output"]["dir"].get<std::string>(), "results/run1");
  EXPECT_EQ(j["initial"]["phi0"]["cos"]["mode"].get<int>(), 2);
  EXPECT_EQ(j["new_section"]["key"].get<int>(), 3);
  EXPECT_THROW(apply_override(j, "no_equals_sign"), ValidationError);
  EXPECT_THROW(apply_override(j, "cost..kappa=1"), ValidationError);
  EXPECT_THROW(apply_override(j, "cost.kappa.deeper=1"), ValidationError);

  const RunConfig rc = resolve_config(Json::object(), {"cost.kappa=0.02", "time.n_steps=16", "grid.n_cells=8"});
  EXPECT_EQ(rc.spec.weights.kappa, 0.02);
  EXPECT_EQ(rc.spec.n_steps(), 16u);
  EXPECT_EQ(rc.resolved["cost"]["kappa"].get<double>(), 0.02);
  EXPECT_THROW(resolve_config(Json::object(), {"new_section.key=3"}), ValidationError);
}

TEST(Config, FieldForms) {
  Json user = {{"grid", {{"n_cells", 4}}},
               {"time", {{"n_steps", 4}}},
               {"initial", {{"phi0", {0.1, 0.2, -0.1, 0.0}}, {"w0", 0.3}}},
               {"targets", {{"phi_Q", 0.25}, {"phi_Omega", {{"cos", {{"amplitude", 0.5}, {"offset", 0.1}}}}}}},
               {"physics", {{"gamma", {0.5, 0.6, 0.7, 0.8}}}}};
  const RunConfig rc = resolve_config(user);
  EXPECT_EQ(rc.spec.initial.phi0, (Field{0.1, 0.2, -0.1, 0.0}));
  EXPECT_EQ(rc.spec.initial.w0, Field(4, 0.3));
  EXPECT_EQ(rc.spec.targets.phi_Q(4, 2), 0.25);
  EXPECT_NEAR(rc.spec.targets.phi_Omega[0], 0.1 + 0.5 * std::cos(std::numbers::pi / 8.0), 1e-15);
  EXPECT_EQ(rc.spec.phys.gamma[3], 0.8);
  user["initial"]["phi0"] = {0.1, 0.2};
  EXPECT_THROW(resolve_config(user), ValidationError);
  user["initial"]["phi0"] = "zero";
  EXPECT_THROW(resolve_config(user), ValidationError);
}

TEST(Config, AdmissibilityChecks) {
  const std::vector<std::vector<std::string>> bad{
      {"physics.c2=1.0"},      {"physics.c1=0"},        {"physics.tau=0"},
      {"physics.gamma=0.4"},   {"physics.gamma0=0"},    {"initial.phi0=1.0"},
      {"cost.b3=0"},           {"cost.b1=-1"},          {"bounds.lower=2", "bounds.upper=1"},
      {"time.n_steps=0"},      {"grid.n_cells=2.5"},    {"time.T=-1"},
      {"optimizer.backtrack=1"}, {"optimizer.stat_tol=0"}, {"oracle.fd_steps=[1e-3,1e-2]"},
      {"sweep.fractions=[0.5,0.1]"}, {"check.suites=[\"bogus\"]"}, {"output.snapshot_stride=0"},
      {"seed=-3"},             {"cost.kappa=\"big\""},  {"grid.extra=1"},
      {"control=\"ones\""},
  };
  for (const auto& o : bad) {
    EXPECT_THROW(resolve_config(Json::object(), o), ValidationError) << o.front();
  }
}

TEST(Config, RandomControlIsSeeded) {
  const Json user = {{"grid", {{"n_cells", 8}}}, {"time", {{"n_steps", 8}}},
                     {"control", {{"random", {{"amplitude", 2.0}}}}}};
  const RunConfig a = resolve_config(user, {"seed=5"});
  const RunConfig b = resolve_config(user, {"seed=5"});
  const RunConfig c = resolve_config(user, {"seed=6"});
  EXPECT_TRUE(std::equal(a.control.flat().begin(), a.control.flat().end(), b.control.flat().begin()));
  EXPECT_FALSE(std::equal(a.control.flat().begin(), a.control.flat().end(), c.control.flat().begin()));
  EXPECT_LE(max_abs(a.control.flat()), 2.0);
  ASSERT_TRUE(a.optimizer.u_init.has_value());
  EXPECT_EQ(a.suite.seed, 5u);
  EXPECT_EQ(a.oracle.seed, 5u);
}

TEST(ControlFile, RoundTripIsExact) {
  const fs::path dir = temp_dir("control");
  ProblemSpec spec = default_instance(8, 6);
  const SpaceTimeField u = random_uniform_control(spec, 3.0, 9);
  write_control_csv(dir / "u.csv", u, spec);
  const std::string text = slurp(dir / "u.csv");
  EXPECT_EQ(text.rfind("# sparse_ch control v1\nlevel,t_start,cell,x,u\n", 0), 0u);
  const SpaceTimeField back = read_control_csv(dir / "u.csv", 6, 8);
  for (std::size_t k = 0; k < u.size(); ++k) EXPECT_EQ(back.flat()[k], u.flat()[k]);

  const Json user = {{"grid", {{"n_cells", 8}}}, {"time", {{"n_steps", 6}}}, {"control", {{"file", "u.csv"}}}};
  const RunConfig rc = resolve_config(user, {}, dir);
  for (std::size_t k = 0; k < u.size(); ++k) EXPECT_EQ(rc.control.flat()[k], u.flat()[k]);
  EXPECT_THROW(resolve_config(user, {"time.n_steps=7"}, dir), ValidationError);
  EXPECT_THROW(resolve_config(user, {}, dir / "missing"), ValidationError);
}

TEST(Csv, SnapshotLevelsIncludeFinal) {
  EXPECT_EQ(snapshot_levels(10, 4), (std::vector<std::size_t>{0, 4, 8, 10}));
  EXPECT_EQ(snapshot_levels(8, 4), (std::vector<std::size_t>{0, 4, 8}));
  EXPECT_EQ(snapshot_levels(3, 1), (std::vector<std::size_t>{0, 1, 2, 3}));
  EXPECT_THROW(snapshot_levels(3, 0), std::invalid_argument);
}

TEST(Csv, NumbersRoundTrip) {
  for (double v : {0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23}) EXPECT_EQ(std::stod(num(v)), v);
  EXPECT_EQ(csv_quote("a,b"), "\"a,b\"");
  EXPECT_EQ(csv_quote("say \"x\","), "\"say \"\"x\"\",\"");
  EXPECT_EQ(csv_quote("plain"), "plain");
}

TEST(Csv, TrajectoryIsDeterministic) {
  const fs::path dir = temp_dir("trajectory");
  const ProblemSpec spec = default_instance(8, 8);
  const SpaceTimeField u = random_uniform_control(spec, 1.0, 3);
  write_trajectory_csv(dir / "a.csv", solve_state(u, spec), spec, 3);
  write_trajectory_csv(dir / "b.csv", solve_state(u, spec), spec, 3);
  const std::string a = slurp(dir / "a.csv");
  EXPECT_EQ(a, slurp(dir / "b.csv"));
  EXPECT_EQ(a.rfind("# sparse_ch trajectory v1\nlevel,t,cell,x,phi,mu,w\n", 0), 0u);
  // levels 0, 3, 6, 8 with 8 cells each plus two header lines
  EXPECT_EQ(std::count(a.begin(), a.end(), '\n'), 2 + 4 * 8);
}

TEST(SuiteText, SummarizesFailures) {
  SuiteReport rep;
  rep.entries.push_back({"a", "x", CheckStatus::Pass, 1.0, 2.0, "", 1});
  rep.entries.push_back({"a", "y", CheckStatus::Fail, 3.0, 2.0, "too big", 1});
  rep.entries.push_back({"b", "z", CheckStatus::Skipped, 0.0, 0.0, "", 1});
  const std::string t = suite_report_text(rep);
  EXPECT_NE(t.find("FAIL a: 1 pass, 1 fail, 0 skipped"), std::string::npos);
  EXPECT_NE(t.find("fail y value=3"), std::string::npos);
  EXPECT_NE(t.find("ok   b: 0 pass, 0 fail, 1 skipped"), std::string::npos);
  EXPECT_NE(t.find("verification FAILED"), std::string::npos);
}

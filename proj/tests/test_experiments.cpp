#include "helpers.hpp"

#include "domo/experiments.hpp"
#include "domo/serialization.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

using namespace domo;

namespace {

ExperimentConfig parse(const std::string& text) {
  std::istringstream in(text);
  return parse_config(in, "test.cfg");
}

std::string csv_of(const ExperimentResult& r) {
  std::ostringstream os;
  write_csv(os, r.rows);
  return os.str();
}

std::string error_of(const std::string& text) {
  try {
    parse(text);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("empty config gives the documented defaults") {
  const ExperimentConfig c = parse("");
  CHECK(c.experiment == Experiment::FigRate);
  CHECK(c.n_states == 20);
  CHECK(c.n_actions == 5);
  CHECK(c.alpha == 0.01);
  CHECK(c.gamma == 0.9);
  CHECK(c.c_bar == 10.0);
  CHECK(c.n_mdps == 100);
  CHECK(c.gradient_steps == std::vector<int>{1, 10, 100});
  CHECK(c.c_bar_grid == std::vector<double>{0.0, 0.25, 0.5, 1.0, 2.0, 5.0, 10.0});
}

TEST_CASE("config parsing") {
  const ExperimentConfig c = parse("# comment\nexperiment = fig_gradient_step\n  n_mdps=3 # trailing\ngradient_steps = 2, 4\n"
                                   "behavior = uniform\nseed = 18446744073709551615\ninject_clip_bug = true\n");
  CHECK(c.experiment == Experiment::FigGradientStep);
  CHECK(c.n_mdps == 3);
  CHECK(c.gradient_steps == std::vector<int>{2, 4});
  CHECK(c.behavior == BehaviorMode::Uniform);
  CHECK(c.seed == 18446744073709551615ULL);
  CHECK(c.inject_clip_bug);
}

TEST_CASE("config errors carry line numbers") {
  CHECK(error_of("gamma = 1.0").find("test.cfg:1:") == 0);
  CHECK(error_of("gamma = 1.0").find("[0, 1)") != std::string::npos);
  CHECK(error_of("\nalpha = 0").find("test.cfg:2:") == 0);
  CHECK(error_of("colour = red").find("unknown key 'colour'") != std::string::npos);
  CHECK(error_of("n_mdps = 3\nn_mdps = 4").find("duplicate") != std::string::npos);
  CHECK(error_of("n_mdps = three").find("integer") != std::string::npos);
  CHECK(error_of("n_mdps").find("key = value") != std::string::npos);
  CHECK(error_of("experiment = atari").find("unknown experiment") != std::string::npos);
  CHECK(error_of("c_bar_grid = 1,,2") != "");
  CHECK(error_of("n_mdps = 0") != "");
  CHECK_THROWS_AS(validate_config("/nonexistent/path.cfg"), ConfigError);
}

TEST_CASE("number formatting round-trips") {
  for (double x : {0.1, 1.0 / 3.0, 1e-300, 123456789.125, -2.5e-9, 0.0}) CHECK(std::stod(format_double(x)) == x);
  CHECK(format_double(0.1) == "0.1");
  CHECK(format_double(10.0) == "10");
  CHECK(format_double(std::nan("")) == "nan");
  CHECK(format_double(-kInfinity) == "-inf");
}

TEST_CASE("csv schema is pinned") {
  ResultRow r;
  r.experiment = "fig_rate";
  r.seed = 3;
  r.algorithm = "domo_vi";
  r.trace_kind = "vtrace";
  r.trace_param = 10.0;
  r.iteration = 2;
  r.metric = "error_l2";
  r.value = 0.5;
  ResultRow bad = r;
  bad.value = std::nan("");
  bad.note = "solver failed, retry";
  std::ostringstream os;
  write_csv(os, {r, bad});
  CHECK(os.str() ==
        "# domo-lab results v1\n"
        "experiment,seed,algorithm,trace_kind,trace_param,iteration,metric,value,note\n"
        "fig_rate,3,domo_vi,vtrace,10,2,error_l2,0.5,\n"
        "fig_rate,3,domo_vi,vtrace,10,2,error_l2,nan,\"solver failed, retry\"\n");
}

TEST_CASE("atomic csv write") {
  const auto dir = std::filesystem::temp_directory_path() / "domo_lab_test";
  std::filesystem::create_directories(dir);
  const std::string path = (dir / "out.csv").string();
  write_csv_atomic(path, {});
  std::ifstream in(path);
  std::string first;
  std::getline(in, first);
  CHECK(first == kCsvVersionLine);
  CHECK_FALSE(std::filesystem::exists(path + ".tmp"));
  CHECK_THROWS_AS(write_csv_atomic((dir / "missing" / "out.csv").string(), {}), ParameterError);
}

TEST_CASE("smallest run is schema-valid") {
  ExperimentConfig c = parse("n_mdps = 1\niterations = 1\n");
  const ExperimentResult r = run_experiment(c, 1);
  CHECK(r.failures == 0);
  int data_rows = 0;
  for (const ResultRow& row : r.rows) {
    CHECK(std::isfinite(row.value));
    CHECK(row.note.empty());
    if (row.algorithm != "config") ++data_rows;
  }
  CHECK(data_rows > 0);
  std::set<std::string> algorithms;
  for (const ResultRow& row : r.rows) algorithms.insert(row.algorithm);
  CHECK(algorithms == std::set<std::string>{"config", "vi", "multistep_pe", "multistep_pi", "domo_vi"});
  CHECK(r.summary.find("mean +- se") != std::string::npos);
}

TEST_CASE("results do not depend on the number of workers") {
  for (const char* e : {"fig_rate", "fig_gradient_step", "fig_bias_variance", "online", "theorem_audit"}) {
    ExperimentConfig c = parse(std::string("experiment = ") + e +
                               "\nn_mdps = 4\naudit_mdps = 3\niterations = 3\ntotal_iterations = 30\n"
                               "audit_samples = 2000\nn_rep = 10\ngradient_steps = 1, 5\n");
    CAPTURE(e);
    CHECK(csv_of(run_experiment(c, 1)) == csv_of(run_experiment(c, 3)));
  }
}

TEST_CASE("audit negative control") {
  ExperimentConfig c = parse("experiment = theorem_audit\naudit_mdps = 1\naudit_samples = 2000\niterations = 5\n");
  CHECK(theorem_audit(c, 1).failures == 0);
  c.inject_clip_bug = true;
  const ExperimentResult bad = theorem_audit(c, 1);
  CHECK(bad.failures > 0);
  bool fd_failed = false;
  for (const ResultRow& r : bad.rows)
    if (r.algorithm == "stochastic_gradient_fd" && r.metric == "pass" && r.value == 0.0) fd_failed = true;
  CHECK(fd_failed);
}

TEST_CASE("audit on a myopic model") {
  ExperimentConfig c = parse("experiment = theorem_audit\naudit_mdps = 1\naudit_samples = 2000\ngamma = 0\niterations = 3\n");
  const ExperimentResult r = theorem_audit(c, 1);
  CHECK(r.failures == 0);
}

TEST_CASE("mdp json round trip") {
  const Mdpd mdp = test::random_mdp(5, 4, 3);
  const Mdpd back = mdp_from_json(mdp_to_json(mdp));
  CHECK(back.transition() == mdp.transition());
  CHECK(back.reward() == mdp.reward());
  CHECK(back.gamma() == mdp.gamma());
  REQUIRE(back.provenance().has_value());
  CHECK(back.provenance()->seed == 5);
  const Mdpd capped(mdp.transition(), mdp.reward(), 0.5, 12);
  CHECK(mdp_from_json(mdp_to_json(capped)).horizon_cap() == 12);
  CHECK_THROWS_AS(mdp_from_json("{}"), ParameterError);
  CHECK_THROWS_AS(mdp_from_json("not json"), ParameterError);
  std::string text = mdp_to_json(mdp);
  text.replace(text.find("\"gamma\": 0.9"), 12, "\"gamma\": 1.5");
  CHECK_THROWS_AS(mdp_from_json(text), ParameterError);
}

TEST_CASE("experiment names") {
  for (Experiment e : {Experiment::FigRate, Experiment::FigGradientStep, Experiment::FigBiasVariance,
                       Experiment::TheoremAudit, Experiment::Online})
    CHECK(experiment_from_string(to_string(e)) == e);
}

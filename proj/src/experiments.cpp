#include "domo/experiments.hpp"

#include "domo/audit.hpp"
#include "domo/sampling.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <istream>
#include <map>
#include <set>
#include <sstream>
#include <thread>

namespace domo {

namespace {

constexpr std::uint64_t kThetaStream = 0x544854;  // "THT"

struct ExperimentName {
  Experiment value;
  const char* name;
};

constexpr ExperimentName kExperimentNames[] = {
    {Experiment::FigRate, "fig_rate"},
    {Experiment::FigGradientStep, "fig_gradient_step"},
    {Experiment::FigBiasVariance, "fig_bias_variance"},
    {Experiment::TheoremAudit, "theorem_audit"},
    {Experiment::Online, "online"},
};

}  // namespace

std::string to_string(Experiment e) {
  for (const auto& n : kExperimentNames)
    if (n.value == e) return n.name;
  return "unknown";
}

Experiment experiment_from_string(const std::string& name) {
  for (const auto& n : kExperimentNames)
    if (name == n.name) return n.value;
  throw ParameterError("unknown experiment '" + name +
                       "' (expected fig_rate, fig_gradient_step, fig_bias_variance, theorem_audit or online)");
}

// ---------------------------------------------------------------------------
// Configuration

namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return "";
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

double parse_double(const std::string& text) {
  double v = 0.0;
  const char* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || ptr != end) throw ParameterError("expected a number, got '" + text + "'");
  return v;
}

long long parse_integer(const std::string& text) {
  long long v = 0;
  const char* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || ptr != end) throw ParameterError("expected an integer, got '" + text + "'");
  return v;
}

int parse_int(const std::string& text, long long lo, long long hi = 1000000000LL) {
  const long long v = parse_integer(text);
  if (v < lo || v > hi)
    throw ParameterError("value " + text + " out of range [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
  return static_cast<int>(v);
}

std::uint64_t parse_seed(const std::string& text) {
  std::uint64_t v = 0;
  const char* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || ptr != end) throw ParameterError("expected a non-negative integer seed, got '" + text + "'");
  return v;
}

bool parse_bool(const std::string& text) {
  if (text == "true" || text == "1") return true;
  if (text == "false" || text == "0") return false;
  throw ParameterError("expected true or false, got '" + text + "'");
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(trim(item));
  if (out.empty() || std::any_of(out.begin(), out.end(), [](const std::string& s) { return s.empty(); }))
    throw ParameterError("expected a non-empty comma-separated list");
  return out;
}

void require(bool ok, const std::string& message) {
  if (!ok) throw ParameterError(message);
}

using Setter = std::function<void(ExperimentConfig&, const std::string&)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"experiment", [](ExperimentConfig& c, const std::string& v) { c.experiment = experiment_from_string(v); }},
      {"n_states", [](ExperimentConfig& c, const std::string& v) { c.n_states = parse_int(v, 2, 1000); }},
      {"n_actions", [](ExperimentConfig& c, const std::string& v) { c.n_actions = parse_int(v, 1, 1000); }},
      {"alpha",
       [](ExperimentConfig& c, const std::string& v) {
         c.alpha = parse_double(v);
         require(c.alpha > 0.0 && std::isfinite(c.alpha), "alpha must be > 0 (Dirichlet parameter)");
       }},
      {"gamma",
       [](ExperimentConfig& c, const std::string& v) {
         c.gamma = parse_double(v);
         require(c.gamma >= 0.0 && c.gamma < 1.0, "gamma must lie in [0, 1)");
       }},
      {"n_mdps", [](ExperimentConfig& c, const std::string& v) { c.n_mdps = parse_int(v, 1); }},
      {"seed", [](ExperimentConfig& c, const std::string& v) { c.seed = parse_seed(v); }},
      {"iterations", [](ExperimentConfig& c, const std::string& v) { c.iterations = parse_int(v, 1); }},
      {"c_bar",
       [](ExperimentConfig& c, const std::string& v) {
         c.c_bar = parse_double(v);
         require(c.c_bar >= 0.0, "c_bar must be >= 0");
       }},
      {"behavior",
       [](ExperimentConfig& c, const std::string& v) {
         if (v == "uniform") c.behavior = BehaviorMode::Uniform;
         else if (v == "mixed_previous") c.behavior = BehaviorMode::MixedPrevious;
         else throw ParameterError("behavior must be uniform or mixed_previous");
       }},
      {"behavior_epsilon",
       [](ExperimentConfig& c, const std::string& v) {
         c.behavior_epsilon = parse_double(v);
         require(c.behavior_epsilon > 0.0 && c.behavior_epsilon <= 1.0, "behavior_epsilon must lie in (0, 1]");
       }},
      {"improvement",
       [](ExperimentConfig& c, const std::string& v) {
         if (v == "converge") c.improvement = AscentMode::Converge;
         else if (v == "exact") c.improvement = AscentMode::Exact;
         else throw ParameterError("improvement must be converge or exact");
       }},
      {"learning_rate",
       [](ExperimentConfig& c, const std::string& v) {
         c.learning_rate = parse_double(v);
         require(c.learning_rate >= 0.0 && std::isfinite(c.learning_rate), "learning_rate must be >= 0");
       }},
      {"ascent_tol",
       [](ExperimentConfig& c, const std::string& v) {
         c.ascent_tol = parse_double(v);
         require(c.ascent_tol > 0.0, "ascent_tol must be > 0");
       }},
      {"ascent_max_steps", [](ExperimentConfig& c, const std::string& v) { c.ascent_max_steps = parse_int(v, 1); }},
      {"gradient_steps",
       [](ExperimentConfig& c, const std::string& v) {
         c.gradient_steps.clear();
         for (const auto& item : split_list(v)) c.gradient_steps.push_back(parse_int(item, 1));
       }},
      {"c_bar_grid",
       [](ExperimentConfig& c, const std::string& v) {
         c.c_bar_grid.clear();
         for (const auto& item : split_list(v)) {
           c.c_bar_grid.push_back(parse_double(item));
           require(c.c_bar_grid.back() >= 0.0, "c_bar_grid entries must be >= 0");
         }
       }},
      {"theta_scale",
       [](ExperimentConfig& c, const std::string& v) {
         c.theta_scale = parse_double(v);
         require(c.theta_scale >= 0.0 && std::isfinite(c.theta_scale), "theta_scale must be >= 0");
       }},
      {"n_traj", [](ExperimentConfig& c, const std::string& v) { c.n_traj = parse_int(v, 1); }},
      {"n_rep", [](ExperimentConfig& c, const std::string& v) { c.n_rep = parse_int(v, 2); }},
      {"horizon", [](ExperimentConfig& c, const std::string& v) { c.horizon = parse_int(v, 1); }},
      {"actor_lr",
       [](ExperimentConfig& c, const std::string& v) {
         c.online.actor_lr = parse_double(v);
         require(c.online.actor_lr >= 0.0, "actor_lr must be >= 0");
       }},
      {"critic_lr",
       [](ExperimentConfig& c, const std::string& v) {
         c.online.critic_lr = parse_double(v);
         require(c.online.critic_lr >= 0.0, "critic_lr must be >= 0");
       }},
      {"polyak_tau",
       [](ExperimentConfig& c, const std::string& v) {
         c.online.polyak_tau = parse_double(v);
         require(c.online.polyak_tau > 0.0 && c.online.polyak_tau <= 1.0, "polyak_tau must lie in (0, 1]");
       }},
      {"segment_length", [](ExperimentConfig& c, const std::string& v) { c.online.segment_length = parse_int(v, 1); }},
      {"total_iterations",
       [](ExperimentConfig& c, const std::string& v) { c.online.total_iterations = parse_int(v, 1); }},
      {"record_every", [](ExperimentConfig& c, const std::string& v) { c.record_every = parse_int(v, 1); }},
      {"audit_mdps", [](ExperimentConfig& c, const std::string& v) { c.audit_mdps = parse_int(v, 1); }},
      {"audit_samples", [](ExperimentConfig& c, const std::string& v) { c.audit_samples = parse_int(v, 2); }},
      {"audit_horizon", [](ExperimentConfig& c, const std::string& v) { c.audit_horizon = parse_int(v, 1); }},
      {"inject_clip_bug", [](ExperimentConfig& c, const std::string& v) { c.inject_clip_bug = parse_bool(v); }},
      {"output",
       [](ExperimentConfig& c, const std::string& v) {
         require(!v.empty(), "output must not be empty");
         c.output = v;
       }},
  };
  return table;
}

}  // namespace

void ExperimentConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError(m); };
  if (n_states < 2) fail("n_states must be >= 2");
  if (n_actions < 1) fail("n_actions must be >= 1");
  if (!(alpha > 0.0)) fail("alpha must be > 0 (Dirichlet parameter)");
  if (!(gamma >= 0.0 && gamma < 1.0)) fail("gamma must lie in [0, 1)");
  if (n_mdps < 1) fail("n_mdps must be >= 1");
  if (iterations < 1) fail("iterations must be >= 1");
  if (!(c_bar >= 0.0)) fail("c_bar must be >= 0");
  if (!(behavior_epsilon > 0.0 && behavior_epsilon <= 1.0)) fail("behavior_epsilon must lie in (0, 1]");
  if (gradient_steps.empty()) fail("gradient_steps must not be empty");
  if (c_bar_grid.empty()) fail("c_bar_grid must not be empty");
  if (!(theta_scale >= 0.0)) fail("theta_scale must be >= 0");
  if (n_traj < 1 || n_rep < 2 || horizon < 1) fail("n_traj >= 1, n_rep >= 2 and horizon >= 1 are required");
  if (record_every < 1) fail("record_every must be >= 1");
  if (audit_mdps < 1 || audit_samples < 2 || audit_horizon < 1) fail("audit sizes must be positive");
  try {
    online.validate();
  } catch (const ParameterError& e) {
    fail(e.what());
  }
}

ExperimentConfig parse_config(std::istream& in, const std::string& source) {
  ExperimentConfig cfg;
  std::set<std::string> seen;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = source + ":" + std::to_string(line_no) + ": ";
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + "expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const auto it = setters().find(key);
    if (it == setters().end()) throw ConfigError(where + "unknown key '" + key + "'");
    if (!seen.insert(key).second) throw ConfigError(where + "duplicate key '" + key + "'");
    if (value.empty()) throw ConfigError(where + "missing value for '" + key + "'");
    try {
      it->second(cfg, value);
    } catch (const ConfigError&) {
      throw;
    } catch (const ParameterError& e) {
      throw ConfigError(where + key + ": " + e.what());
    }
  }
  try {
    cfg.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(source + ": " + e.what());
  }
  return cfg;
}

ExperimentConfig validate_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path + ": cannot open config file");
  return parse_config(in, path);
}

// ---------------------------------------------------------------------------
// CSV

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc()) throw NumericError("failed to format a double");
  return std::string(buf, ptr);
}

namespace {

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

void write_csv(std::ostream& out, const std::vector<ResultRow>& rows) {
  out << kCsvVersionLine << '\n' << kCsvHeader << '\n';
  for (const ResultRow& r : rows) {
    out << csv_field(r.experiment) << ',' << r.seed << ',' << csv_field(r.algorithm) << ',' << csv_field(r.trace_kind)
        << ',' << format_double(r.trace_param) << ',' << r.iteration << ',' << csv_field(r.metric) << ','
        << format_double(r.value) << ',' << csv_field(r.note) << '\n';
  }
}

void write_csv_atomic(const std::string& path, const std::vector<ResultRow>& rows) {
  namespace fs = std::filesystem;
  const fs::path target(path);
  fs::path tmp = target;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ParameterError("cannot open '" + tmp.string() + "' for writing");
    write_csv(out, rows);
    out.flush();
    if (!out) throw ParameterError("failed writing '" + tmp.string() + "'");
  }
  std::error_code ec;
  fs::rename(tmp, target, ec);
  if (ec) {
    fs::remove(tmp);
    throw ParameterError("cannot move results into '" + path + "': " + ec.message());
  }
}

// ---------------------------------------------------------------------------
// Runs

Mdpd two_state_chain(double gamma) {
  Matrixd p = Matrixd::Zero(4, 2);
  p(0, 0) = 1.0;  // state 0, stay
  p(1, 1) = 1.0;  // state 0, switch
  p(2, 1) = 1.0;  // state 1, stay
  p(3, 0) = 1.0;  // state 1, switch
  Matrixd r = Matrixd::Zero(2, 2);
  r(1, 0) = 1.0;
  return Mdpd(std::move(p), std::move(r), gamma);
}

namespace {

struct SeedOutput {
  std::vector<ResultRow> rows;
  int failures = 0;
};

/// Runs work(i) for i < n on up to `jobs` threads; results come back in index order.
std::vector<SeedOutput> parallel_seeds(int n, int jobs, const std::function<SeedOutput(int)>& work) {
  std::vector<SeedOutput> out(static_cast<std::size_t>(n));
  std::atomic<int> next{0};
  auto worker = [&] {
    for (int i = next++; i < n; i = next++) out[static_cast<std::size_t>(i)] = work(i);
  };
  const int threads = std::max(1, std::min(jobs, n));
  if (threads == 1) {
    worker();
    return out;
  }
  std::vector<std::thread> pool;
  for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  return out;
}

struct RowFactory {
  std::string experiment;
  std::uint64_t seed;

  ResultRow operator()(const std::string& algorithm, const TraceSpec* spec, int iteration, const std::string& metric,
                       double value) const {
    ResultRow r;
    r.experiment = experiment;
    r.seed = seed;
    r.algorithm = algorithm;
    r.trace_kind = spec ? to_string(spec->kind) : "none";
    r.trace_param = spec ? spec->param : 0.0;
    r.iteration = iteration;
    r.metric = metric;
    r.value = value;
    if (!std::isfinite(value)) r.note = "non-finite value";
    return r;
  }
};

void append_trace(std::vector<ResultRow>& rows, const RowFactory& row, const IterationTrace& t, const TraceSpec* spec,
                  bool with_eta, const Mdpd* mdp_for_bound) {
  for (int i = 0; i < t.iterations(); ++i) {
    rows.push_back(row(t.algorithm, spec, i + 1, "error_l2", t.errors_l2[static_cast<std::size_t>(i)]));
    rows.push_back(row(t.algorithm, spec, i + 1, "error_inf", t.errors_inf[static_cast<std::size_t>(i)]));
    if (with_eta && static_cast<std::size_t>(i) < t.eta_seq.size())
      rows.push_back(row(t.algorithm, spec, i + 1, "eta", t.eta_seq[static_cast<std::size_t>(i)]));
  }
  if (with_eta && t.eta_star) rows.push_back(row(t.algorithm, spec, 0, "eta_star", *t.eta_star));
  if (mdp_for_bound) {
    const auto env = convergence_envelope(t, mdp_for_bound->reward_bound(), mdp_for_bound->gamma());
    for (int i = 0; i < t.iterations(); ++i)
      rows.push_back(row(t.algorithm, spec, i + 1, "bound_inf", env[static_cast<std::size_t>(i)]));
  }
}

Behavior make_behavior(const ExperimentConfig& cfg) {
  if (cfg.behavior == BehaviorMode::Uniform) return Behavior(TabularPolicyd::uniform(cfg.n_states, cfg.n_actions));
  return Behavior::mixed_previous(cfg.behavior_epsilon);
}

double effective_epsilon(const ExperimentConfig& cfg) {
  return cfg.behavior == BehaviorMode::Uniform ? 1.0 : cfg.behavior_epsilon;
}

InnerAscentConfig improvement_config(const ExperimentConfig& cfg) {
  if (cfg.improvement == AscentMode::Exact) return InnerAscentConfig::exact();
  InnerAscentConfig c = InnerAscentConfig::converge();
  c.learning_rate = cfg.learning_rate;
  c.tol = cfg.ascent_tol;
  c.max_steps = cfg.ascent_max_steps;
  return c;
}

SeedOutput fig_rate_seed(const ExperimentConfig& cfg, std::uint64_t seed) {
  const Mdpd mdp = gen_random_mdp(cfg.n_states, cfg.n_actions, cfg.alpha, cfg.gamma, seed);
  const Behavior mu = make_behavior(cfg);
  const TraceSpec spec = TraceSpec::vtrace(cfg.c_bar);
  const InnerAscentConfig ic = improvement_config(cfg);
  const RowFactory row{to_string(cfg.experiment), seed};
  SeedOutput out;
  append_trace(out.rows, row, run_vi(mdp, cfg.iterations), nullptr, false, nullptr);
  append_trace(out.rows, row, run_multistep_pe(mdp, mu, spec, cfg.iterations), &spec, true, nullptr);
  append_trace(out.rows, row, run_multistep_pi(mdp, mu, spec, cfg.iterations, ic), &spec, true, nullptr);
  append_trace(out.rows, row, run_domo_vi(mdp, mu, spec, cfg.iterations, ic), &spec, true, &mdp);
  return out;
}

SeedOutput fig_gradient_step_seed(const ExperimentConfig& cfg, std::uint64_t seed) {
  const Mdpd mdp = gen_random_mdp(cfg.n_states, cfg.n_actions, cfg.alpha, cfg.gamma, seed);
  const Behavior mu = make_behavior(cfg);
  const TraceSpec spec = TraceSpec::vtrace(cfg.c_bar);
  const RowFactory row{to_string(cfg.experiment), seed};
  SeedOutput out;
  append_trace(out.rows, row, run_vi(mdp, cfg.iterations), nullptr, false, nullptr);
  append_trace(out.rows, row, run_multistep_pe(mdp, mu, spec, cfg.iterations), &spec, true, nullptr);
  for (int n : cfg.gradient_steps)
    append_trace(out.rows, row,
                 run_domo_ac_tabular(mdp, mu, spec, cfg.iterations, InnerAscentConfig::fixed(n, cfg.learning_rate)),
                 &spec, true, nullptr);
  return out;
}

SeedOutput fig_bias_variance_seed(const ExperimentConfig& cfg, std::uint64_t seed) {
  const Mdpd mdp = gen_random_mdp(cfg.n_states, cfg.n_actions, cfg.alpha, cfg.gamma, seed);
  std::mt19937_64 rng(derive_seed(seed, kThetaStream));
  std::normal_distribution<double> normal(0.0, cfg.theta_scale);
  Matrixd logits(cfg.n_states, cfg.n_actions);
  for (int x = 0; x < cfg.n_states; ++x)
    for (int a = 0; a < cfg.n_actions; ++a) logits(x, a) = normal(rng);
  const SoftmaxPolicyd theta(logits);
  const TabularPolicyd mu = TabularPolicyd::uniform(cfg.n_states, cfg.n_actions);
  const Vectord v = exact_value(mdp, theta.policy());
  BiasVarianceSetup setup;
  setup.c_bar_grid = cfg.c_bar_grid;
  setup.n_traj = cfg.n_traj;
  setup.n_rep = cfg.n_rep;
  setup.horizon = cfg.horizon;
  const RowFactory row{to_string(cfg.experiment), seed};
  SeedOutput out;
  const auto stats = bias_variance_sweep(mdp, theta, mu, v, setup, seed);
  for (std::size_t g = 0; g < stats.size(); ++g) {
    const TraceSpec spec = TraceSpec::vtrace(stats[g].c_bar);
    const int idx = static_cast<int>(g);
    out.rows.push_back(row("stochastic_gradient", &spec, idx, "bias_sq", stats[g].bias_sq));
    out.rows.push_back(row("stochastic_gradient", &spec, idx, "variance", stats[g].variance));
    out.rows.push_back(row("stochastic_gradient", &spec, idx, "mse", stats[g].mse));
  }
  return out;
}

SeedOutput online_seed(const ExperimentConfig& cfg, std::uint64_t seed) {
  const Mdpd mdp = gen_random_mdp(cfg.n_states, cfg.n_actions, cfg.alpha, cfg.gamma, seed);
  const TraceSpec spec = TraceSpec::vtrace(cfg.c_bar, std::max(cfg.c_bar, 1.0));
  const IterationTrace t = run_domo_ac_online(mdp, spec, cfg.online, seed);
  const RowFactory row{to_string(cfg.experiment), seed};
  SeedOutput out;
  for (int i = 0; i < t.iterations(); ++i)
    if ((i + 1) % cfg.record_every == 0 || i + 1 == t.iterations())
      out.rows.push_back(row(t.algorithm, &spec, i + 1, "error_l2", t.errors_l2[static_cast<std::size_t>(i)]));
  out.rows.push_back(row(t.algorithm, &spec, 0, "diverged_at", t.diverged_at ? *t.diverged_at : 0));
  return out;
}

std::vector<ResultRow> config_rows(const ExperimentConfig& cfg) {
  const RowFactory row{to_string(cfg.experiment), cfg.seed};
  const TraceSpec spec = TraceSpec::vtrace(cfg.c_bar);
  return {row("config", &spec, 0, "behavior_epsilon", effective_epsilon(cfg)),
          row("config", &spec, 0, "learning_rate", cfg.learning_rate),
          row("config", &spec, 0, "exact_improvement", cfg.improvement == AscentMode::Exact ? 1.0 : 0.0),
          row("config", &spec, 0, "n_mdps", cfg.n_mdps)};
}

}  // namespace

ExperimentResult theorem_audit(const ExperimentConfig& cfg, int jobs) {
  cfg.validate();
  AuditSettings settings;
  settings.n_states = cfg.n_states;
  settings.n_actions = cfg.n_actions;
  settings.alpha = cfg.alpha;
  settings.gamma = cfg.gamma;
  settings.iterations = cfg.iterations;
  settings.behavior_epsilon = cfg.behavior_epsilon;
  settings.samples = cfg.audit_samples;
  settings.horizon = cfg.audit_horizon;
  settings.clip = cfg.inject_clip_bug ? ClipSubgradient::One : ClipSubgradient::Zero;
  const std::string name = to_string(Experiment::TheoremAudit);
  const auto outputs = parallel_seeds(cfg.audit_mdps, jobs, [&](int i) {
    const std::uint64_t seed = cfg.seed + static_cast<std::uint64_t>(i);
    const RowFactory row{name, seed};
    SeedOutput out;
    try {
      for (const AuditCase& c : audit_all(settings, seed)) {
        out.rows.push_back(row(c.check, &c.spec, 0, "statistic", c.statistic));
        out.rows.push_back(row(c.check, &c.spec, 0, "tolerance", c.tolerance));
        out.rows.push_back(row(c.check, &c.spec, 0, "pass", c.passed ? 1.0 : 0.0));
        if (!c.passed) ++out.failures;
      }
    } catch (const std::exception& e) {
      ResultRow r = row("run", nullptr, 0, "failed", std::nan(""));
      r.note = e.what();
      out.rows.push_back(std::move(r));
      ++out.failures;
    }
    return out;
  });
  ExperimentResult result;
  std::map<std::string, std::pair<int, int>> tally;  // check -> (passed, total)
  for (const auto& o : outputs) {
    result.rows.insert(result.rows.end(), o.rows.begin(), o.rows.end());
    result.failures += o.failures;
    for (const ResultRow& r : o.rows)
      if (r.metric == "pass" || r.metric == "failed") {
        auto& t = tally[r.algorithm];
        t.first += r.value == 1.0 ? 1 : 0;
        ++t.second;
      }
  }
  std::ostringstream os;
  os << std::left << std::setw(24) << "check" << "passed/total\n";
  for (const auto& [check, t] : tally)
    os << std::setw(24) << check << t.first << "/" << t.second << (t.first == t.second ? "" : "  FAIL") << "\n";
  os << (result.failures == 0 ? "all checks passed\n" : std::to_string(result.failures) + " check(s) failed\n");
  result.summary = os.str();
  return result;
}

ExperimentResult run_experiment(const ExperimentConfig& cfg, int jobs) {
  cfg.validate();
  if (cfg.experiment == Experiment::TheoremAudit) return theorem_audit(cfg, jobs);
  std::function<SeedOutput(const ExperimentConfig&, std::uint64_t)> per_seed;
  switch (cfg.experiment) {
    case Experiment::FigRate: per_seed = fig_rate_seed; break;
    case Experiment::FigGradientStep: per_seed = fig_gradient_step_seed; break;
    case Experiment::FigBiasVariance: per_seed = fig_bias_variance_seed; break;
    case Experiment::Online: per_seed = online_seed; break;
    case Experiment::TheoremAudit: break;
  }
  const auto outputs = parallel_seeds(cfg.n_mdps, jobs, [&](int i) {
    const std::uint64_t seed = cfg.seed + static_cast<std::uint64_t>(i);
    try {
      return per_seed(cfg, seed);
    } catch (const std::exception& e) {
      SeedOutput failed;
      ResultRow r = RowFactory{to_string(cfg.experiment), seed}("run", nullptr, 0, "failed", std::nan(""));
      r.note = e.what();
      failed.rows.push_back(std::move(r));
      failed.failures = 1;
      return failed;
    }
  });
  ExperimentResult result;
  result.rows = config_rows(cfg);
  for (const auto& o : outputs) {
    result.rows.insert(result.rows.end(), o.rows.begin(), o.rows.end());
    result.failures += o.failures;
  }
  result.summary = summarize(result.rows);
  return result;
}

std::string summarize(const std::vector<ResultRow>& rows) {
  using Key = std::tuple<std::string, std::string, double, std::string, int>;
  struct Acc {
    double sum = 0.0;
    double sum_sq = 0.0;
    int n = 0;
  };
  std::map<Key, Acc> acc;
  for (const ResultRow& r : rows) {
    if (r.algorithm == "config" || !std::isfinite(r.value)) continue;
    Acc& a = acc[{r.algorithm, r.trace_kind, r.trace_param, r.metric, r.iteration}];
    a.sum += r.value;
    a.sum_sq += r.value * r.value;
    ++a.n;
  }
  std::ostringstream os;
  os << std::left << std::setw(22) << "algorithm" << std::setw(14) << "trace" << std::setw(12) << "metric"
     << std::setw(6) << "iter" << "mean +- se (n)\n";
  for (const auto& [key, a] : acc) {
    const double mean = a.sum / a.n;
    const double var = a.n > 1 ? std::max(0.0, (a.sum_sq - a.n * mean * mean) / (a.n - 1)) : 0.0;
    std::ostringstream trace;
    trace << std::get<1>(key) << "(" << std::get<2>(key) << ")";
    os << std::setw(22) << std::get<0>(key) << std::setw(14) << trace.str() << std::setw(12) << std::get<3>(key)
       << std::setw(6) << std::get<4>(key) << std::scientific << std::setprecision(4) << mean << " +- "
       << std::sqrt(var / a.n) << " (" << a.n << ")\n"
       << std::defaultfloat;
  }
  return os.str();
}

}  // namespace domo

#include "covlab/commands.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <charconv>
#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>

#include "covlab/acceptance.hpp"
#include "covlab/estar.hpp"
#include "covlab/mcsim.hpp"
#include "covlab/slicewidth.hpp"
#include "covlab/spiked.hpp"

namespace covlab {

using nlohmann::json;

namespace {

// Reads JSON config files into CLI11. Nested objects address subcommands,
// e.g. {"phase-diagram": {"p": 500, "lambdas": "0,1,3"}}.
class JsonConfig : public CLI::Config {
 public:
  std::string to_config(const CLI::App* app, bool default_also, bool, std::string) const override {
    json j;
    for (const CLI::Option* opt : app->get_options({})) {
      if (opt->get_lnames().empty() || !opt->get_configurable()) continue;
      const std::string name = opt->get_lnames().front();
      if (opt->count() > 0) {
        j[name] = opt->results().size() == 1 ? json(opt->results().front()) : json(opt->results());
      } else if (default_also && !opt->get_default_str().empty()) {
        j[name] = opt->get_default_str();
      }
    }
    for (const CLI::App* sub : app->get_subcommands({})) {
      const std::string text = to_config(sub, default_also, false, "");
      const json child = json::parse(text);
      if (!child.empty()) j[sub->get_name()] = child;
    }
    return j.dump(2);
  }

  std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
    json j;
    try {
      input >> j;
    } catch (const json::exception& e) {
      throw CLI::ConversionError(std::string("config file is not valid JSON: ") + e.what());
    }
    std::vector<CLI::ConfigItem> items;
    walk(j, {}, items);
    return items;
  }

 private:
  static std::string scalar_text(const json& value) {
    if (value.is_string()) return value.get<std::string>();
    if (value.is_boolean()) return value.get<bool>() ? "true" : "false";
    return value.dump();
  }

  static void walk(const json& node, const std::vector<std::string>& parents, std::vector<CLI::ConfigItem>& items) {
    for (auto it = node.begin(); it != node.end(); ++it) {
      if (it->is_object()) {
        std::vector<std::string> deeper = parents;
        deeper.push_back(it.key());
        // A marker item activates the subcommand even when its object is empty.
        CLI::ConfigItem marker;
        marker.parents = parents;
        marker.name = "++";
        marker.inputs = {};
        items.push_back(marker);
        items.back().parents.push_back(it.key());
        walk(*it, deeper, items);
        CLI::ConfigItem closing;
        closing.parents = deeper;
        closing.name = "--";
        items.push_back(closing);
        continue;
      }
      CLI::ConfigItem item;
      item.parents = parents;
      item.name = it.key();
      if (it->is_array()) {
        for (const json& element : *it) item.inputs.push_back(scalar_text(element));
      } else {
        item.inputs.push_back(scalar_text(*it));
      }
      items.push_back(std::move(item));
    }
  }
};

std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> parts;
  std::string current;
  std::istringstream stream(text);
  while (std::getline(stream, current, sep)) parts.push_back(current);
  if (!text.empty() && text.back() == sep) parts.emplace_back();
  return parts;
}

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t");
  return s.substr(begin, end - begin + 1);
}

double parse_double(const std::string& text, const std::string& what) {
  const std::string t = trim(text);
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), value);
  if (ec != std::errc() || ptr != t.data() + t.size() || t.empty())
    throw InvariantError(what + " is not a number: '" + text + "'");
  return value;
}

std::size_t parse_count(const std::string& text, const std::string& what) {
  const std::string t = trim(text);
  std::size_t value = 0;
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), value);
  if (ec != std::errc() || ptr != t.data() + t.size() || t.empty())
    throw InvariantError(what + " is not a non-negative integer: '" + text + "'");
  return value;
}

json estimate_json(const MonteCarloEstimate& est) {
  return json{{"mean", est.mean},
              {"std_error", est.std_error},
              {"std_dev", est.std_dev},
              {"reps", est.reps},
              {"seed", est.seed}};
}

void emit(const std::string& text, const std::string& path, std::ostream& out) {
  if (path.empty() || path == "-") {
    out << text;
    return;
  }
  std::ofstream file(path, std::ios::binary);
  if (!file) throw InvariantError("cannot open output file '" + path + "'");
  file << text;
  if (!file) throw InvariantError("failed writing output file '" + path + "'");
}

std::string read_file(const std::string& path) {
  std::ifstream file(path, std::ios::binary);
  if (!file) throw InvariantError("cannot open spec file '" + path + "'");
  std::ostringstream buffer;
  buffer << file.rdbuf();
  return buffer.str();
}

// Options naming a covariance, shared by estar, width and simulate.
struct SpecSource {
  std::string spec_file;
  std::string spiked;
  std::size_t identity = 0;
  std::size_t n = 0;

  void attach(CLI::App* cmd, bool wants_n) {
    auto* file = cmd->add_option("--spec", spec_file, "Covariance JSON file");
    auto* id = cmd->add_option("--identity", identity, "Use the identity covariance of this dimension");
    auto* sp = cmd->add_option("--spiked", spiked, "Spiked model p=..,n=..,r=..,lambda=..");
    file->excludes(id)->excludes(sp);
    id->excludes(sp);
    if (wants_n) cmd->add_option("--n", n, "Sample size (defaults to the spiked n)");
  }

  LoadedSpec load() const {
    if (!spec_file.empty()) return load_spec_file(spec_file);
    if (!spiked.empty()) {
      const SpikedParams params = parse_spiked(spiked);
      return {build_spiked(params), params.n, params};
    }
    if (identity > 0) return {CovarianceSpec::identity(identity), std::nullopt, std::nullopt};
    throw InvariantError("one of --spec, --identity or --spiked is required");
  }

  std::size_t sample_size(const LoadedSpec& loaded) const {
    if (n > 0) return n;
    if (loaded.n) return *loaded.n;
    throw InvariantError("sample size n must be at least 1 (pass --n)");
  }
};

struct EstarArgs {
  SpecSource source;
  std::size_t reps = 10000;
  std::uint64_t seed = kDefaultSeed;
  std::size_t threads = 0;
  double x = 1.0;
  std::string format = "json";
  std::string output;
};

int cmd_estar(const EstarArgs& args, std::ostream& out) {
  const LoadedSpec loaded = args.source.load();
  const std::size_t n = args.source.sample_size(loaded);
  EstarOptions options;
  options.threads = args.threads;
  const MonteCarloEstimate est = estimate_estar(loaded.spec, n, args.reps, args.seed, options);
  const double upper = kl_upper_bound(loaded.spec, n);
  const double floor = kl_lower_floor(n);
  const double budget = relative_error_budget(loaded.spec, n, args.x);
  const double rank = effective_rank(loaded.spec);

  if (args.format == "csv") {
    std::ostringstream csv;
    csv << "mean,std_error,std_dev,reps,seed,kl_upper_bound,kl_lower_floor,relative_error_budget,effective_rank,n,p,x\n";
    csv << format_number(est.mean) << ',' << format_number(est.std_error) << ',' << format_number(est.std_dev) << ','
        << est.reps << ',' << est.seed << ',' << format_number(upper) << ',' << format_number(floor) << ','
        << format_number(budget) << ',' << format_number(rank) << ',' << n << ',' << loaded.spec.dim() << ','
        << format_number(args.x) << '\n';
    csv << csv_trailer(args.seed) << '\n';
    emit(csv.str(), args.output, out);
    return kExitOk;
  }
  json j = estimate_json(est);
  j["kl_upper_bound"] = upper;
  j["kl_lower_floor"] = floor;
  j["relative_error_budget"] = budget;
  j["x"] = args.x;
  j["effective_rank"] = rank;
  j["n"] = n;
  j["p"] = loaded.spec.dim();
  j["version"] = library_version();
  emit(j.dump(2) + "\n", args.output, out);
  return kExitOk;
}

struct WidthArgs {
  SpecSource source;
  std::string h;
  std::uint64_t h_seed = 0;
  bool draw_h = false;
  double alpha = -1.0;
  bool trace = false;
  std::string output;
};

int cmd_width(const WidthArgs& args, std::ostream& out) {
  const LoadedSpec loaded = args.source.load();
  const CovarianceSpec standardized = standardize(loaded.spec);
  const auto p = static_cast<Eigen::Index>(loaded.spec.dim());
  Eigen::VectorXd h(p);
  if (!args.h.empty()) {
    const std::vector<std::string> parts = split(args.h, ',');
    if (static_cast<Eigen::Index>(parts.size()) != p) throw InvariantError("h must have p entries");
    for (Eigen::Index i = 0; i < p; ++i) h(i) = parse_double(parts[static_cast<std::size_t>(i)], "h entry");
  } else if (args.draw_h) {
    RngStream rng(args.h_seed);
    rng.fill_normal(h);
  } else {
    throw InvariantError("one of --direction or --direction-seed is required");
  }
  const GroupedWidthProblem problem = reduce_to_groups(standardized, h, args.alpha);
  const WidthSolution sol = slice_width(problem);

  json j{{"value", sol.value}, {"alpha", args.alpha}};
  if (args.trace) {
    j["gammas"] = problem.gammas;
    j["weights"] = problem.weights;
    j["mu"] = sol.mu;
    j["nu"] = sol.nu;
    j["budgets"] = sol.budgets;
    j["dual_value"] = sol.dual_value;
    j["duality_gap"] = sol.duality_gap;
    j["regime"] = to_string(sol.regime);
    j["iterations"] = sol.iterations;
  }
  if (args.source.n > 0 || loaded.n) {
    const std::size_t n = args.source.sample_size(loaded);
    const ScalarMax best = phi_sup(standardized, h, n);
    j["n"] = n;
    j["phi_sup"] = best.value;
    j["phi_argmax"] = best.argmax;
    if (args.trace) j["phi_multi_bracket_tie"] = best.multi_bracket_tie;
  }
  emit(j.dump(2) + "\n", args.output, out);
  return kExitOk;
}

struct TheoryArgs {
  std::string deltas = "1";
  std::string lambdas = "0:8:33";
  std::string output;
};

int cmd_spiked_theory(const TheoryArgs& args, std::ostream& out) {
  emit(spiked_theory_csv(parse_grid(args.deltas), parse_grid(args.lambdas)), args.output, out);
  return kExitOk;
}

struct SimulateArgs {
  SpecSource source;
  std::size_t reps = 100;
  std::uint64_t seed = kDefaultSeed;
  std::size_t threads = 0;
  bool no_top_eig = false;
  std::string dump_reps;
  std::string output;
};

int cmd_simulate(const SimulateArgs& args, std::ostream& out) {
  const LoadedSpec loaded = args.source.load();
  const std::size_t n = args.source.sample_size(loaded);
  std::optional<Eigen::MatrixXd> frame;
  if (loaded.spiked && loaded.spiked->lambda > 0.0) frame = top_group_frame(loaded.spec);
  if (loaded.spiked && loaded.spiked->lambda == 0.0)
    frame = Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(loaded.spiked->p),
                                      static_cast<Eigen::Index>(loaded.spiked->r));
  ReplicationOptions options;
  options.threads = args.threads;
  options.top_eig = !args.no_top_eig;
  const ReplicationSummary summary = run_replications(loaded.spec, n, args.reps, args.seed, frame, options);

  if (!args.dump_reps.empty()) {
    std::ostringstream csv;
    csv << "rep,op_norm,lambda_plus,lambda_minus,proj_sq,sign_flag,top_eig\n";
    for (std::size_t i = 0; i < summary.replicates.size(); ++i) {
      const ReplicationResult& r = summary.replicates[i];
      csv << i << ',' << format_number(r.op_norm) << ',' << format_number(r.lambda_plus) << ','
          << format_number(r.lambda_minus) << ',' << format_number(r.proj_sq) << ',' << to_string(r.sign_flag) << ','
          << format_number(r.top_eig) << '\n';
    }
    csv << csv_trailer(args.seed) << '\n';
    emit(csv.str(), args.dump_reps, out);
  }

  json j{{"op_norm", estimate_json(summary.op_norm)},
         {"lambda_plus", estimate_json(summary.lambda_plus)},
         {"lambda_minus", estimate_json(summary.lambda_minus)},
         {"plus_fraction", summary.plus_fraction},
         {"ties", summary.ties},
         {"n", n},
         {"p", loaded.spec.dim()},
         {"version", library_version()}};
  if (summary.proj_sq) j["proj_sq"] = estimate_json(*summary.proj_sq);
  if (summary.top_eig) j["top_eig"] = estimate_json(*summary.top_eig);
  emit(j.dump(2) + "\n", args.output, out);
  return kExitOk;
}

struct PhaseArgs {
  PhaseDiagramConfig config;
  std::string lambdas = "0,0.5,1,2,3,5,8";
  bool no_top_eig = false;
  std::string output;
};

int cmd_phase_diagram(PhaseArgs args, std::ostream& out) {
  args.config.lambdas = parse_grid(args.lambdas);
  args.config.top_eig = !args.no_top_eig;
  emit(phase_diagram_csv(args.config), args.output, out);
  return kExitOk;
}

struct VerifyArgs {
  AcceptanceOptions options;
  std::string only;
  std::string report;
};

int cmd_verify(VerifyArgs args, std::ostream& out) {
  if (!args.only.empty())
    for (const std::string& id : split(args.only, ',')) args.options.only.push_back(trim(id));
  const std::vector<CriterionResult> results = run_acceptance(args.options, out);
  if (!args.report.empty()) emit(acceptance_report_json(results, args.options), args.report, out);
  return all_passed(results) ? kExitOk : kExitAcceptanceFailure;
}

}  // namespace

const char* library_version() { return COVLAB_VERSION; }

std::string format_number(double value) {
  if (std::isnan(value)) return "nan";
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  char buffer[64];
  const auto result = std::to_chars(buffer, buffer + sizeof buffer, value);
  return std::string(buffer, result.ptr);
}

std::string csv_trailer(std::uint64_t seed) {
  return "# seed=" + std::to_string(seed) + " version=" + library_version();
}

LoadedSpec parse_spec_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw InvariantError(std::string("spec is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw InvariantError("spec JSON must be an object");
  try {
    if (j.contains("lambda")) {
      SpikedParams params;
      params.p = j.at("p").get<std::size_t>();
      params.n = j.at("n").get<std::size_t>();
      params.r = j.value("r", std::size_t{1});
      params.lambda = j.at("lambda").get<double>();
      return {build_spiked(params), params.n, params};
    }
    std::vector<double> values = j.at("eigenvalues").get<std::vector<double>>();
    std::vector<std::size_t> mults = j.contains("multiplicities")
                                         ? j.at("multiplicities").get<std::vector<std::size_t>>()
                                         : std::vector<std::size_t>(values.size(), 1);
    std::optional<Eigen::MatrixXd> basis;
    if (j.contains("basis")) {
      const auto rows = j.at("basis").get<std::vector<std::vector<double>>>();
      const auto p = static_cast<Eigen::Index>(rows.size());
      Eigen::MatrixXd q(p, p);
      for (Eigen::Index i = 0; i < p; ++i) {
        if (static_cast<Eigen::Index>(rows[static_cast<std::size_t>(i)].size()) != p)
          throw InvariantError("eigenbasis must be p x p");
        for (Eigen::Index k = 0; k < p; ++k) q(i, k) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)];
      }
      basis = std::move(q);
    }
    CovarianceSpec spec = CovarianceSpec::from_groups(std::move(values), std::move(mults), std::move(basis));
    if (j.contains("p") && j.at("p").get<std::size_t>() != spec.dim())
      throw InvariantError("multiplicities must sum to p");
    std::optional<std::size_t> n;
    if (j.contains("n")) n = j.at("n").get<std::size_t>();
    return {std::move(spec), n, std::nullopt};
  } catch (const json::exception& e) {
    throw InvariantError(std::string("spec JSON has a missing or mistyped field: ") + e.what());
  }
}

LoadedSpec load_spec_file(const std::string& path) { return parse_spec_json(read_file(path)); }

SpikedParams parse_spiked(const std::string& text) {
  SpikedParams params;
  bool has_p = false;
  bool has_n = false;
  bool has_lambda = false;
  for (const std::string& field : split(text, ',')) {
    const auto eq = field.find('=');
    if (eq == std::string::npos) throw InvariantError("spiked field must be key=value: '" + field + "'");
    const std::string key = trim(field.substr(0, eq));
    const std::string value = field.substr(eq + 1);
    if (key == "p") {
      params.p = parse_count(value, "p");
      has_p = true;
    } else if (key == "n") {
      params.n = parse_count(value, "n");
      has_n = true;
    } else if (key == "r") {
      params.r = parse_count(value, "r");
    } else if (key == "lambda") {
      params.lambda = parse_double(value, "lambda");
      has_lambda = true;
    } else {
      throw InvariantError("unknown spiked field '" + key + "'");
    }
  }
  if (!has_p || !has_n || !has_lambda) throw InvariantError("spiked model needs p, n and lambda");
  params.validate();
  return params;
}

std::vector<double> parse_grid(const std::string& text) {
  const std::string t = trim(text);
  if (t.empty()) throw InvariantError("grid must contain at least one value");
  std::vector<double> values;
  if (t.find(':') != std::string::npos) {
    const std::vector<std::string> parts = split(t, ':');
    if (parts.size() != 3) throw InvariantError("range grid must be start:stop:count");
    const double start = parse_double(parts[0], "grid start");
    const double stop = parse_double(parts[1], "grid stop");
    const std::size_t count = parse_count(parts[2], "grid count");
    if (count == 0) throw InvariantError("grid must contain at least one value");
    for (std::size_t i = 0; i < count; ++i)
      values.push_back(count == 1 ? start
                                  : start + (stop - start) * static_cast<double>(i) / static_cast<double>(count - 1));
    return values;
  }
  for (const std::string& part : split(t, ',')) values.push_back(parse_double(part, "grid value"));
  return values;
}

std::string phase_diagram_csv(const PhaseDiagramConfig& config) {
  if (config.lambdas.empty()) throw InvariantError("lambda grid must contain at least one value");
  const SpikedParams base{config.p, config.n, config.r, 0.0};
  base.validate();
  for (double lambda : config.lambdas) SpikedParams{config.p, config.n, config.r, lambda}.validate();
  const double delta = base.delta();
  const Eigen::MatrixXd frame =
      Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(config.p), static_cast<Eigen::Index>(config.r));

  std::ostringstream csv;
  csv << "lambda,delta,psi_theory,eta_theory,bbp_max,bbp_argmax,op_norm_mean,op_norm_se,proj_mean,proj_se,"
         "top_eig_mean,reps,n,p,r,seed\n";
  ReplicationOptions options;
  options.threads = config.threads;
  options.top_eig = config.top_eig;
  for (std::size_t i = 0; i < config.lambdas.size(); ++i) {
    const double lambda = config.lambdas[i];
    const CovarianceSpec spec = build_spiked({config.p, config.n, config.r, lambda});
    // Each λ gets its own experiment seed so grid points are independent.
    const std::uint64_t seed = config.seed + i;
    const ReplicationSummary s = run_replications(spec, config.n, config.reps, seed, frame, options);
    csv << format_number(lambda) << ',' << format_number(delta) << ',' << format_number(psi_clamped(delta, lambda))
        << ',' << format_number(eta_clamped(delta, lambda)) << ',' << format_number(bbp_max(delta, lambda)) << ','
        << format_number(bbp_argmax(delta, lambda)) << ',' << format_number(s.op_norm.mean) << ','
        << format_number(s.op_norm.std_error) << ',' << format_number(s.proj_sq->mean) << ','
        << format_number(s.proj_sq->std_error) << ','
        << format_number(s.top_eig ? s.top_eig->mean : std::numeric_limits<double>::quiet_NaN()) << ','
        << config.reps << ',' << config.n << ',' << config.p << ',' << config.r << ',' << seed << '\n';
  }
  csv << csv_trailer(config.seed) << '\n';
  return csv.str();
}

std::string spiked_theory_csv(const std::vector<double>& deltas, const std::vector<double>& lambdas) {
  if (deltas.empty() || lambdas.empty()) throw InvariantError("delta and lambda grids must be non-empty");
  std::ostringstream csv;
  csv << "delta,lambda,psi,eta,bbp_max,bbp_argmax,transition\n";
  for (double delta : deltas) {
    for (double lambda : lambdas) {
      const TheoryCurves c = evaluate_curves(delta, lambda);
      csv << format_number(delta) << ',' << format_number(lambda) << ',' << format_number(c.psi_clamped) << ','
          << format_number(c.eta_clamped) << ',' << format_number(c.bbp_max) << ',' << format_number(c.bbp_argmax)
          << ',' << format_number(c.transition_point) << '\n';
    }
  }
  csv << csv_trailer(0) << '\n';
  return csv.str();
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Sample-covariance error laboratory: slice widths, E_*, spiked theory and simulation", "covlab"};
  app.set_version_flag("--version", std::string(library_version()));
  app.config_formatter(std::make_shared<JsonConfig>());
  app.set_config("--config", "", "JSON config file mirroring the flags");
  app.require_subcommand(1);

  EstarArgs estar_args;
  auto* estar = app.add_subcommand("estar", "Monte Carlo estimate of E_* with the closed-form bounds");
  estar_args.source.attach(estar, true);
  estar->add_option("--reps", estar_args.reps, "Number of h draws")->capture_default_str();
  estar->add_option("--seed", estar_args.seed, "Experiment seed")->capture_default_str();
  estar->add_option("--threads", estar_args.threads, "Worker threads (0 = all cores)");
  estar->add_option("--x", estar_args.x, "Deviation level for the relative error budget")->capture_default_str();
  estar->add_option("--format", estar_args.format, "json or csv")
      ->check(CLI::IsMember({"json", "csv"}))
      ->capture_default_str();
  estar->add_option("--output,-o", estar_args.output, "Output file (default stdout)");

  WidthArgs width_args;
  auto* width = app.add_subcommand("width", "Single slice-width query");
  width_args.source.attach(width, true);
  auto* h_opt = width->add_option("--direction", width_args.h, "Comma-separated vector h");
  width->add_option("--direction-seed", width_args.h_seed, "Draw h ~ N(0, I_p) from this seed")->excludes(h_opt);
  width->add_option("--alpha", width_args.alpha, "Slice radius in [0, 1]")->required();
  width->add_flag("--trace", width_args.trace, "Dump the dual certificate");
  width->add_option("--output,-o", width_args.output, "Output file (default stdout)");

  TheoryArgs theory_args;
  auto* theory = app.add_subcommand("spiked-theory", "Tabulate the spiked-model theory curves");
  theory->add_option("--deltas", theory_args.deltas, "Delta grid (list or start:stop:count)")->capture_default_str();
  theory->add_option("--lambdas", theory_args.lambdas, "Lambda grid (list or start:stop:count)")
      ->capture_default_str();
  theory->add_option("--output,-o", theory_args.output, "Output file (default stdout)");

  SimulateArgs sim_args;
  auto* simulate = app.add_subcommand("simulate", "Simulate the sample covariance error");
  sim_args.source.attach(simulate, true);
  simulate->add_option("--reps", sim_args.reps, "Replicates")->capture_default_str();
  simulate->add_option("--seed", sim_args.seed, "Experiment seed")->capture_default_str();
  simulate->add_option("--threads", sim_args.threads, "Worker threads (0 = all cores)");
  simulate->add_flag("--no-top-eig", sim_args.no_top_eig, "Skip the top eigenvalue of the sample covariance");
  simulate->add_option("--dump-reps", sim_args.dump_reps, "Per-replicate CSV file");
  simulate->add_option("--output,-o", sim_args.output, "Output file (default stdout)");

  PhaseArgs phase_args;
  auto* phase = app.add_subcommand("phase-diagram", "Sweep lambda for the spiked model");
  phase->add_option("--p", phase_args.config.p, "Dimension")->capture_default_str();
  phase->add_option("--n", phase_args.config.n, "Sample size")->capture_default_str();
  phase->add_option("--r", phase_args.config.r, "Spike count")->capture_default_str();
  phase->add_option("--lambdas", phase_args.lambdas, "Lambda grid (list or start:stop:count)")->capture_default_str();
  phase->add_option("--reps", phase_args.config.reps, "Replicates per lambda")->capture_default_str();
  phase->add_option("--seed", phase_args.config.seed, "Experiment seed")->capture_default_str();
  phase->add_option("--threads", phase_args.config.threads, "Worker threads (0 = all cores)");
  phase->add_flag("--no-top-eig", phase_args.no_top_eig, "Skip the top eigenvalue of the sample covariance");
  phase->add_option("--output,-o", phase_args.output, "Output file (default stdout)");

  VerifyArgs verify_args;
  auto* verify = app.add_subcommand("verify", "Run the acceptance suite");
  verify->add_flag("--quick", verify_args.options.quick, "Reduced replication counts, widened tolerances");
  verify->add_option("--psi-perturbation", verify_args.options.psi_perturbation,
                     "Test hook: scale theory Psi by (1 + value)");
  verify->add_option("--seed", verify_args.options.seed, "Experiment seed")->capture_default_str();
  verify->add_option("--threads", verify_args.options.threads, "Worker threads (0 = all cores)");
  verify->add_option("--only", verify_args.only, "Comma-separated item ids, e.g. T1,T10");
  verify->add_option("--report", verify_args.report, "JSON report file");

  for (CLI::App* sub : app.get_subcommands({})) sub->configurable();

  std::vector<std::string> reversed;
  for (int i = argc - 1; i > 0; --i) reversed.emplace_back(argv[i]);
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::CallForVersion&) {
    out << library_version() << '\n';
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }

  try {
    if (*estar) return cmd_estar(estar_args, out);
    if (*width) {
      width_args.draw_h = width->count("--direction-seed") > 0;
      return cmd_width(width_args, out);
    }
    if (*theory) return cmd_spiked_theory(theory_args, out);
    if (*simulate) return cmd_simulate(sim_args, out);
    if (*phase) return cmd_phase_diagram(phase_args, out);
    if (*verify) return cmd_verify(verify_args, out);
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::domain_error& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }
  err << "error: no subcommand given\n";
  return kExitUsage;
}

}  // namespace covlab

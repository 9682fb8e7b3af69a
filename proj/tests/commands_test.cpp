#include <gtest/gtest.h>

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "covlab/acceptance.hpp"
#include "covlab/commands.hpp"

using namespace covlab;

namespace {

struct CliRun {
  int code = 0;
  std::string out;
  std::string err;
};

CliRun run(std::vector<std::string> args) {
  args.insert(args.begin(), "covlab");
  std::vector<const char*> argv;
  for (const std::string& a : args) argv.push_back(a.c_str());
  std::ostringstream out;
  std::ostringstream err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::filesystem::path temp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("covlab_test_" + name);
}

std::string read(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::string last_line(const std::string& text) {
  std::string trimmed = text;
  while (!trimmed.empty() && trimmed.back() == '\n') trimmed.pop_back();
  return trimmed.substr(trimmed.rfind('\n') + 1);
}

}  // namespace

TEST(Parsing, SpikedAndGrid) {
  const SpikedParams params = parse_spiked("p=400,n=300,r=2,lambda=3.5");
  EXPECT_EQ(params.p, 400u);
  EXPECT_EQ(params.n, 300u);
  EXPECT_EQ(params.r, 2u);
  EXPECT_DOUBLE_EQ(params.lambda, 3.5);
  EXPECT_THROW(parse_spiked("p=4,n=4"), InvariantError);
  EXPECT_THROW(parse_spiked("p=4,n=4,lambda=x"), InvariantError);
  EXPECT_THROW(parse_spiked("p=4,n=4,r=5,lambda=1"), InvariantError);
  EXPECT_EQ(parse_grid("0,0.5,1"), (std::vector<double>{0.0, 0.5, 1.0}));
  EXPECT_EQ(parse_grid("0:1:3"), (std::vector<double>{0.0, 0.5, 1.0}));
  EXPECT_THROW(parse_grid(""), InvariantError);
  EXPECT_THROW(parse_grid("0:1:0"), InvariantError);
}

TEST(Parsing, SpecJson) {
  const LoadedSpec plain = parse_spec_json(R"({"eigenvalues":[4,1],"multiplicities":[1,2],"p":3})");
  EXPECT_EQ(plain.spec.dim(), 3u);
  EXPECT_FALSE(plain.n.has_value());
  const LoadedSpec spiked = parse_spec_json(R"({"p":10,"n":20,"r":1,"lambda":3})");
  EXPECT_EQ(spiked.spec.eigenvalues, (std::vector<double>{4.0, 1.0}));
  EXPECT_EQ(*spiked.n, 20u);
  EXPECT_THROW(parse_spec_json(R"({"eigenvalues":[1,2],"multiplicities":[1,1],"p":2})"), InvariantError);
  EXPECT_THROW(parse_spec_json(R"({"eigenvalues":[2,1],"multiplicities":[1,1],"p":3})"), InvariantError);
  EXPECT_THROW(parse_spec_json("{not json"), InvariantError);
}

TEST(FormatNumber, RoundTrips) {
  EXPECT_EQ(format_number(0.1), "0.1");
  EXPECT_EQ(std::stod(format_number(1.0 / 3.0)), 1.0 / 3.0);
  EXPECT_EQ(format_number(std::numeric_limits<double>::quiet_NaN()), "nan");
}

TEST(Cli, EstarIdentityJson) {
  const CliRun r = run({"estar", "--identity", "4", "--n", "100", "--reps", "2000", "--seed", "7"});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  const nlohmann::json j = nlohmann::json::parse(r.out);
  EXPECT_NEAR(j["mean"].get<double>(), 0.416, 5.0 * j["std_error"].get<double>());
  EXPECT_EQ(j["seed"].get<std::uint64_t>(), 7u);
  EXPECT_NEAR(j["kl_upper_bound"].get<double>(), 2.0 * 0.2 + 0.04, 1e-12);
}

TEST(Cli, EstarCsvHasTrailer) {
  const CliRun r = run({"estar", "--spiked", "p=30,n=30,r=1,lambda=3", "--reps", "50", "--format", "csv"});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  EXPECT_EQ(r.out.rfind("mean,std_error,", 0), 0u);
  EXPECT_EQ(last_line(r.out), csv_trailer(kDefaultSeed));
}

TEST(Cli, SpecFileErrors) {
  EXPECT_EQ(run({"estar", "--spec", "/nonexistent/spec.json", "--n", "10"}).code, kExitUsage);
  const auto path = temp_file("bad_spec.json");
  std::ofstream(path) << R"({"eigenvalues":[1,3],"multiplicities":[1,1],"p":2})";
  const CliRun r = run({"estar", "--spec", path.string(), "--n", "10"});
  EXPECT_EQ(r.code, kExitUsage);
  EXPECT_NE(r.err.find("strictly decreasing"), std::string::npos);
  EXPECT_EQ(run({"estar", "--identity", "3"}).code, kExitUsage);
  EXPECT_EQ(run({"estar", "--identity", "3", "--n", "5", "--reps", "1"}).code, kExitUsage);
  EXPECT_EQ(run({"no-such-command"}).code, kExitUsage);
  EXPECT_EQ(run({}).code, kExitUsage);
}

TEST(Cli, WidthTrace) {
  const CliRun r = run({"width", "--spiked", "p=2,n=4,r=1,lambda=3", "--direction", "1,2", "--alpha", "0.75", "--trace"});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  const nlohmann::json j = nlohmann::json::parse(r.out);
  EXPECT_TRUE(j.contains("duality_gap"));
  EXPECT_TRUE(j.contains("phi_sup"));
  EXPECT_EQ(j["regime"], "ball_active");
  EXPECT_EQ(run({"width", "--identity", "2", "--direction", "1,2", "--alpha", "1.5"}).code, kExitUsage);
}

TEST(Cli, SpikedTheoryCsv) {
  const CliRun r = run({"spiked-theory", "--deltas", "1", "--lambdas", "0,3"});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  EXPECT_EQ(r.out.rfind("delta,lambda,psi,eta,bbp_max,bbp_argmax,transition\n", 0), 0u);
  EXPECT_NE(r.out.find("1,0,3,0,4,0,2\n"), std::string::npos);
}

TEST(Cli, SimulateDumpsReplicates) {
  const auto dump = temp_file("reps.csv");
  const CliRun r = run({"simulate", "--spiked", "p=20,n=30,r=1,lambda=4", "--reps", "5", "--dump-reps", dump.string()});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  const std::string csv = read(dump);
  EXPECT_EQ(csv.rfind("rep,op_norm,lambda_plus,lambda_minus,proj_sq,sign_flag,top_eig\n", 0), 0u);
  EXPECT_EQ(last_line(csv), csv_trailer(kDefaultSeed));
  EXPECT_TRUE(nlohmann::json::parse(r.out).contains("proj_sq"));
}

TEST(Cli, PhaseDiagramRepeatable) {
  const auto a = temp_file("phase_a.csv");
  const auto b = temp_file("phase_b.csv");
  const std::vector<std::string> args{"phase-diagram", "--p", "30", "--n", "30", "--lambdas", "0,3", "--reps", "3"};
  auto with_output = [&](const std::filesystem::path& path) {
    std::vector<std::string> full = args;
    full.push_back("--output");
    full.push_back(path.string());
    return run(full);
  };
  ASSERT_EQ(with_output(a).code, kExitOk);
  ASSERT_EQ(with_output(b).code, kExitOk);
  const std::string csv = read(a);
  EXPECT_EQ(csv, read(b));
  EXPECT_EQ(csv.rfind("lambda,delta,psi_theory,eta_theory,bbp_max,bbp_argmax,op_norm_mean,", 0), 0u);
  EXPECT_NE(csv.find(",0.9666666666666667,"), std::string::npos);  // δ = 29/30
  EXPECT_EQ(run({"phase-diagram", "--lambdas", ""}).code, kExitUsage);
}

TEST(Cli, JsonConfigFile) {
  const auto config = temp_file("config.json");
  std::ofstream(config) << R"({"spiked-theory": {"deltas": "4", "lambdas": [1]}})";
  const CliRun r = run({"--config", config.string()});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  EXPECT_NE(r.out.find("\n4,1,8,0,"), std::string::npos);
}

TEST(Cli, Version) {
  const CliRun r = run({"--version"});
  EXPECT_EQ(r.code, kExitOk);
  EXPECT_EQ(r.out, std::string(library_version()) + "\n");
}

TEST(Acceptance, MutationOfPsiIsCaught) {
  AcceptanceOptions options;
  options.only = {"T10"};
  std::ostringstream log;
  EXPECT_TRUE(all_passed(run_acceptance(options, log))) << log.str();
  options.psi_perturbation = 0.01;
  const auto results = run_acceptance(options, log);
  ASSERT_EQ(results.size(), 1u);
  EXPECT_FALSE(results[0].passed);
  EXPECT_LT(results[0].margin, 0.0);
}

TEST(Acceptance, ReportJson) {
  AcceptanceOptions options;
  options.only = {"T2", "T11"};
  options.quick = true;
  std::ostringstream log;
  const auto results = run_acceptance(options, log);
  const nlohmann::json report = nlohmann::json::parse(acceptance_report_json(results, options));
  EXPECT_EQ(report["items"].size(), 2u);
  EXPECT_TRUE(report["passed"].get<bool>()) << log.str();
  EXPECT_TRUE(report["quick"].get<bool>());
}

#include <filesystem>
#include <fstream>

#include "doctest.h"

#include "deer/experiment.hpp"
#include "deer/synth.hpp"
#include "deer/trace_io.hpp"

using namespace deer;

namespace {

std::string write_temp(const char* name, const std::string& text) {
  auto path = (std::filesystem::temp_directory_path() / name).string();
  std::ofstream f(path, std::ios::trunc);
  f << text;
  return path;
}

}  // namespace

TEST_CASE("experiment: defaults only yields one report per mode") {
  std::string spec_path = write_temp("deer_exp_wl.toml", R"(
name = "exp-smoke"
function_count = 20
mean_function_size = 50
max_call_depth = 3
target_trace_length = 8000
rng_seed = 3
)");
  std::string recipe = write_temp("deer_exp.toml", std::string(R"(
name = "smoke"
[trace]
generate = ")") + spec_path + R"("
[cache]
l1i_kb = 2
l2_kb = 8
[run]
modes = ["off", "ssra"]
accuracy = false
)");
  auto out_dir = (std::filesystem::temp_directory_path() / "deer_exp_out").string();
  ExperimentResult result = run_experiment(ExperimentSpec::from_toml_file(recipe), out_dir, 2);
  REQUIRE(result.mode_reports.size() == 2);
  CHECK(result.sweep_reports.empty());
  CHECK(std::filesystem::exists(std::filesystem::path(out_dir) / "off.json"));
  CHECK(std::filesystem::exists(std::filesystem::path(out_dir) / "ssra.json"));
  CHECK(std::filesystem::exists(std::filesystem::path(out_dir) / "comparison.csv"));
  CHECK(std::filesystem::exists(std::filesystem::path(out_dir) / "comparison.svg"));
}

TEST_CASE("experiment: the metadata-latency sweep direction") {
  std::string spec_path = write_temp("deer_exp_wl2.toml", R"(
name = "exp-sweep"
function_count = 60
mean_function_size = 60
max_call_depth = 5
loop_probability = 0.3
target_trace_length = 40000
rng_seed = 8
)");
  std::string recipe = write_temp("deer_exp2.toml", std::string(R"(
name = "latency-sweep"
[trace]
generate = ")") + spec_path + R"("
[cache]
l1i_kb = 2
l2_kb = 8
[run]
modes = ["off"]
accuracy = false
[sweep]
md_latency = [0, 400]
)");
  ExperimentResult result = run_experiment(ExperimentSpec::from_toml_file(recipe), "", 2);
  REQUIRE(result.mode_reports.size() == 1);
  REQUIRE(result.sweep_reports.size() == 2);
  u64 base = result.mode_reports[0].counters.l2_demand_misses;
  u64 at0 = result.sweep_reports[0].counters.l2_demand_misses;
  u64 at400 = result.sweep_reports[1].counters.l2_demand_misses;
  CHECK(result.sweep_reports[0].label == "ssra-mdlat0");
  // reduction at latency 0 is at least the reduction at 400
  CHECK(base - at0 >= base - at400);
}

TEST_CASE("experiment spec validation catches bad recipes") {
  CHECK_THROWS_AS(ExperimentSpec::from_toml_text("name = \"x\"\n"), Error);  // no trace
  CHECK_THROWS_AS(ExperimentSpec::from_toml_text(R"(
[trace]
file = "a"
[run]
modes = ["warp-drive"]
)"),
                  Error);
}

TEST_CASE("errors propagate with sweep-point context") {
  std::string recipe = write_temp("deer_exp3.toml", R"(
name = "broken"
[trace]
file = "/nonexistent/trace.deer"
)");
  CHECK_THROWS_AS(run_experiment(ExperimentSpec::from_toml_file(recipe), "", 1), Error);
}

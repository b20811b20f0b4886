#include "mbscore/io.hpp"

#include <doctest.h>

#include <filesystem>

using namespace mbs;

namespace {
const char* kMinimal = R"({"schema_version": 1})";
}

TEST_CASE("config round-trips losslessly") {
  ExperimentConfig c = parse_config(kMinimal);
  c.seed = 17;
  c.schedule = ScheduleKind::SubVP;
  c.beta_max = 12.5;
  c.n_steps = 321;
  c.dataset.kind = DatasetKind::Checkerboard;
  c.hidden = {7, 9};
  c.training.learning_rate = 3.3e-4;
  c.residual_output = false;
  c.metrics.mmd_bandwidth = 0.1 + 0.2;  // not exactly representable as a short decimal
  const std::string j = to_json(c);
  const ExperimentConfig back = parse_config(j);
  CHECK(to_json(back) == j);
  CHECK(back.metrics.mmd_bandwidth == c.metrics.mmd_bandwidth);
  CHECK(back.hidden == c.hidden);
  CHECK_FALSE(back.residual_output);
  CHECK(config_hash(back) == config_hash(c));
  c.seed = 18;
  CHECK(config_hash(back) != config_hash(c));
}

TEST_CASE("strict parsing") {
  CHECK_THROWS_AS(parse_config("{}"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"schema_version": 2})"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"schema_version": 1, "sed": 3})"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"schema_version": 1, "training": {"epoch": 3}})"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"schema_version": 1, "schedule": {"kind": "vpp"}})"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"schema_version": 1, "schedule": {"kind": "vp", "beta_min": -1}})"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"schema_version": 1, "seed": "x"})"), ConfigError);
  CHECK_THROWS_AS(parse_config("{not json"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"schema_version": 1, "training": {"output_parametrization": "other"}})"), ConfigError);
  CHECK(parse_config(R"({"schema_version": 1, "grid": {"n_steps": 9}})").n_steps == 9);
}

TEST_CASE("CSV helpers") {
  CHECK(std::stod(fmt(0.1 + 0.2)) == 0.1 + 0.2);
  MatrixXd p(2, 3);
  p << 0.1, -2.5e-300, 3, 1.0 / 3.0, 4, -0.0;
  const auto dir = std::filesystem::temp_directory_path() / "mbscore_test_io";
  const std::string f = (dir / "pts.csv").string();
  write_text(f, points_csv(p));
  const MatrixXd back = read_points_csv(f);
  CHECK((back.array() == p.array()).all());

  const auto spec = linear_sde(vp_schedule<double>(0.1, 20.0, 2));
  const TimeGrid<double> grid(0.0, 1.0, 25);
  const auto mal = malliavin_matrix(propagate_first_variation(spec, grid), spec, grid);
  const std::string g = gamma_csv(mal.gamma, grid);
  CHECK(std::count(g.begin(), g.end(), '\n') == 1 + 26);

  ExperimentConfig c = parse_config(kMinimal);
  write_manifest(dir.string(), "test", c, {"pts.csv"});
  const std::string m1 = read_text((dir / "manifest.json").string());
  write_manifest(dir.string(), "test", c, {"pts.csv"});
  CHECK(read_text((dir / "manifest.json").string()) == m1);
  CHECK(m1.find("config_hash") != std::string::npos);
  CHECK_THROWS(read_text((dir / "missing.csv").string()));
  std::filesystem::remove_all(dir);
}

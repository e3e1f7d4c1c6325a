#include "doctest.h"

#include "eyewear/app.hpp"
#include "eyewear/persistence.hpp"

#include "../support/fixtures.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace eyewear;
using fixture::code_of;
namespace fs = std::filesystem;

TEST_CASE("parse_edit") {
  CHECK(app::parse_edit("2:-0.5") == EditParams{2, -0.5});
  CHECK(app::parse_edit("0:3") == EditParams{0, 3.0});
  for (const char* bad : {"2", "a:1", "1:x", "1:2:3", ":1", "1.5:2"}) {
    CAPTURE(bad);
    CHECK(code_of([&] { app::parse_edit(bad); }) == ErrorCode::InvalidConfig);
  }
}

TEST_CASE("fit config parsing validates and resolves paths") {
  const auto c = app::FitConfig::from_json(
      {{"images", {{"source", "toy"}, {"count", 5}}}, {"radii", {2}}, {"d_prime", 3}, {"output", "out.ggss"}},
      "/base");
  CHECK(c.images.count == 5);
  CHECK(c.output == fs::path("/base/out.ggss"));
  CHECK(code_of([] { app::FitConfig::from_json({{"d_prime", 0}}); }) == ErrorCode::InvalidConfig);
  CHECK(code_of([] { app::FitConfig::from_json({{"radii", {0}}}); }) == ErrorCode::InvalidConfig);
  CHECK(code_of([] { app::FitConfig::from_json({{"eigen_path", "qr"}}); }) == ErrorCode::InvalidConfig);
  CHECK(code_of([] { app::FitConfig::from_json({{"d_prime", "six"}}); }) == ErrorCode::InvalidConfig);
  CHECK(code_of([] { app::FitConfig::from_json({{"images", {{"source", "web"}}}}); }) == ErrorCode::InvalidConfig);
  CHECK(code_of([] { app::edit_config_from_json({{"b_min", 2.0}, {"b_max", 1.0}}); }) == ErrorCode::InvalidConfig);
  CHECK(code_of([] { make_backend({{"name", "gan"}}); }) == ErrorCode::InvalidConfig);
}

TEST_CASE("exit codes") {
  CHECK(app::exit_code(ErrorCode::NoGlassesFound) == app::kExitEdit);
  CHECK(app::exit_code(ErrorCode::RankDeficient) == app::kExitConfig);
  CHECK(app::exit_code(ErrorCode::InvalidConfig) == app::kExitConfig);
}

TEST_CASE("run_fit writes identical files on repeated runs") {
  const auto dir = fs::temp_directory_path() / "eyewear-app-fit";
  fs::remove_all(dir);
  fs::create_directories(dir);
  app::FitConfig cfg = app::FitConfig::from_json(
      {{"images", {{"count", 3}}}, {"templates", {{"builtin", 4}}}, {"radii", {2}}, {"d_prime", 2},
       {"timestamp", "2024-05-01T00:00:00Z"}},
      dir);
  std::ostringstream log;
  cfg.output = dir / "a.ggss";
  app::run_fit(cfg, log, true);
  cfg.output = dir / "b.ggss";
  app::run_fit(cfg, log, false);
  auto slurp = [](const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), {});
  };
  CHECK(slurp(dir / "a.ggss") == slurp(dir / "b.ggss"));
  CHECK(load_subspace(dir / "a.ggss").metadata.timestamp == "2024-05-01T00:00:00Z");
  CHECK(log.str().find("eigenvalues:") != std::string::npos);

  cfg.d_prime = 500;
  try {
    app::run_fit(cfg, log, false);
    FAIL("expected RankDeficient");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::RankDeficient);
    CHECK(e.message().rfind("fit stage:", 0) == 0);
  }
  fs::remove_all(dir);
}

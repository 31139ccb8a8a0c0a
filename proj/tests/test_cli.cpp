#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include <sys/wait.h>

#include <nlohmann/json.hpp>

#include "oracles.hpp"

using namespace scaleset;

namespace {

struct RunResult {
  int code;
  std::string out;
  std::string err;
};

RunResult run_cli(const std::string& args) {
  std::string out_path = oracle::temp_path(".out");
  std::string err_path = oracle::temp_path(".err");
  std::string cmd =
      std::string(SCALESET_CLI_PATH) + " " + args + " > " + out_path + " 2> " + err_path;
  int status = std::system(cmd.c_str());
  RunResult r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  auto slurp = [](const std::string& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  };
  r.out = slurp(out_path);
  r.err = slurp(err_path);
  return r;
}

std::string file_bytes(const std::string& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

// Deterministic 5x4 grayscale test image.
std::string fixture_image() {
  static std::string path = [] {
    oracle::Rng rng(6060);
    RasterImage img = oracle::random_nonconstant_image(rng, 5, 4, 1, 40);
    std::string p = oracle::temp_path(".pgm");
    save_image(img, p);
    return p;
  }();
  return path;
}

}  // namespace

TEST_CASE("build writes the same container the library produces") {
  std::string img_path = fixture_image();
  std::string out = oracle::temp_path(".ssh");
  RunResult r = run_cli("build " + img_path + " -o " + out);
  REQUIRE(r.code == 0);
  CHECK(r.out.find("lambda_max=") != std::string::npos);

  RasterImage img = load_image(img_path);
  BuildResult want = build(img, flat_zone_partition(img), BuilderConfig{});
  std::string lib_path = oracle::temp_path(".ssh");
  save_hierarchy(want.hierarchy, lib_path);
  CHECK(file_bytes(out) == file_bytes(lib_path));
}

TEST_CASE("build honours heuristic, energy and base label options") {
  std::string img_path = fixture_image();
  RasterImage img = load_image(img_path);

  LabelMap base = oracle::grid_partition(img.width, img.height);
  std::string labels_path = oracle::temp_path(".labels");
  save_label_map(base, labels_path);

  std::string out = oracle::temp_path(".ssh");
  RunResult r = run_cli("build " + img_path + " --labels " + labels_path +
                        " --heuristic smk --k 4 --energy contrast -o " + out);
  REQUIRE(r.code == 0);

  BuilderConfig cfg;
  cfg.method = heuristic::smk;
  cfg.k = 4;
  cfg.model = EnergyModel::contrast();
  BuildResult want = build(img, load_label_map(labels_path), cfg);
  std::string lib_path = oracle::temp_path(".ssh");
  save_hierarchy(want.hierarchy, lib_path);
  CHECK(file_bytes(out) == file_bytes(lib_path));
}

TEST_CASE("build reports metrics as json") {
  std::string img_path = fixture_image();
  std::string out = oracle::temp_path(".ssh");
  std::string metrics = oracle::temp_path(".json");
  RunResult r = run_cli("build " + img_path + " --heuristic mm -o " + out + " --metrics " + metrics);
  REQUIRE(r.code == 0);

  nlohmann::json j = nlohmann::json::parse(file_bytes(metrics));
  RasterImage img = load_image(img_path);
  BuilderConfig cfg;
  cfg.method = heuristic::mm;
  BuildResult want = build(img, flat_zone_partition(img), cfg);
  CHECK(j.at("levels").get<std::uint32_t>() == want.metrics.levels);
  CHECK(j.at("merges").get<std::uint64_t>() == want.metrics.merges);
  CHECK(j.at("first_merge_lambda").get<double>() ==
        Catch::Approx(want.metrics.first_merge_lambda).epsilon(1e-9));
  REQUIRE(j.at("vertex_ratio_per_level").size() == want.metrics.vertex_ratio_per_level.size());
  CHECK(j.at("wall_ms").get<double>() >= 0.0);
}

TEST_CASE("cut paints label maps and renders at requested scales") {
  std::string img_path = fixture_image();
  std::string ssh = oracle::temp_path(".ssh");
  REQUIRE(run_cli("build " + img_path + " -o " + ssh).code == 0);

  std::string prefix = oracle::temp_path("");
  RunResult r = run_cli("cut " + ssh + " " + img_path + " --x 0 --x 0.5 -o " + prefix);
  REQUIRE(r.code == 0);

  RasterImage img = load_image(img_path);
  LabelMap base = flat_zone_partition(img);
  Hierarchy h = load_hierarchy(ssh);
  double lmax = lambda_max(h);
  for (int i = 0; i < 2; ++i) {
    double lam = (i == 0 ? 0.0 : 0.5) * lmax;
    LabelMap want = cut_to_label_map(h, optimal_cut(h, lam), base);
    LabelMap got = load_label_map(prefix + ".cut" + std::to_string(i) + ".labels.pgm");
    CHECK(got.region_count == want.region_count);
    CHECK(got.labels == want.labels);
    RasterImage render =
        load_image(prefix + ".cut" + std::to_string(i) + ".render.pgm");
    CHECK(render.width == img.width);
    CHECK(render.height == img.height);
  }
}

TEST_CASE("cut accepts absolute scales") {
  std::string img_path = fixture_image();
  std::string ssh = oracle::temp_path(".ssh");
  REQUIRE(run_cli("build " + img_path + " -o " + ssh).code == 0);

  std::string prefix = oracle::temp_path("");
  RunResult r = run_cli("cut " + ssh + " " + img_path + " --lambda 1e9 -o " + prefix);
  REQUIRE(r.code == 0);
  LabelMap coarse = load_label_map(prefix + ".cut0.labels.pgm");
  CHECK(coarse.region_count == 1);  // far beyond lambda_max: single region
}

TEST_CASE("curve emits csv tables and a summary matching the library") {
  std::string img_path = fixture_image();
  std::string ssh = oracle::temp_path(".ssh");
  REQUIRE(run_cli("build " + img_path + " -o " + ssh).code == 0);

  std::string prefix = oracle::temp_path("");
  RunResult r = run_cli("curve " + ssh + " -o " + prefix);
  REQUIRE(r.code == 0);

  Hierarchy h = load_hierarchy(ssh);
  NormalizedCurve nc = normalize(h);
  nlohmann::json j = nlohmann::json::parse(file_bytes(prefix + ".summary.json"));
  CHECK(j.at("lambda_max").get<double>() == Catch::Approx(lambda_max(h)).epsilon(1e-9));
  CHECK(j.at("E_I").get<double>() == Catch::Approx(nc.e_full).epsilon(1e-9));
  CHECK(j.at("quality_area").get<double>() == Catch::Approx(quality_area(h)).epsilon(1e-9));
  CHECK(j.at("bound_max_violation").get<double>() <= 1e-9);

  std::istringstream curves(file_bytes(prefix + ".curve.csv"));
  std::string line;
  REQUIRE(std::getline(curves, line));
  CHECK(line == "x_lambda,normalized_energy,lower_bound");
  std::size_t rows = 0;
  while (std::getline(curves, line)) {
    double x, v, low;
    REQUIRE(std::sscanf(line.c_str(), "%lf,%lf,%lf", &x, &v, &low) == 3);
    CHECK(v == Catch::Approx(nc.value_at(x)).margin(1e-9));
    CHECK(low == Catch::Approx(nc.lower_bound_at(x)).margin(1e-9));
    ++rows;
  }
  CHECK(rows == nc.xs.size());

  std::istringstream segs(file_bytes(prefix + ".segments.csv"));
  REQUIRE(std::getline(segs, line));
  CHECK(line == "lambda,value,slope");
  std::size_t seg_rows = 0;
  while (std::getline(segs, line)) ++seg_rows;
  CHECK(seg_rows == energy_curve(h).breakpoints().size() + 1);
}

TEST_CASE("compare ranks all heuristics by saved area") {
  std::string img_path = fixture_image();
  std::string prefix = oracle::temp_path("");
  RunResult r = run_cli("compare " + img_path + " -o " + prefix);
  REQUIRE(r.code == 0);

  std::istringstream ranking(file_bytes(prefix + ".ranking.csv"));
  std::string line;
  REQUIRE(std::getline(ranking, line));
  CHECK(line == "heuristic,quality_area,lambda_max,first_merge_lambda");
  std::vector<std::string> names;
  std::vector<double> areas;
  while (std::getline(ranking, line)) {
    char name[32];
    double qa, lm, fm;
    REQUIRE(std::sscanf(line.c_str(), "%31[^,],%lf,%lf,%lf", name, &qa, &lm, &fm) == 4);
    names.push_back(name);
    areas.push_back(qa);
  }
  REQUIRE(names.size() == 5);
  for (const char* expect : {"sm2", "smk", "sm", "mm", "mm1"})
    CHECK(std::count(names.begin(), names.end(), expect) == 1);
  for (std::size_t i = 0; i + 1 < areas.size(); ++i) CHECK(areas[i] >= areas[i + 1]);
  CHECK(r.out.find(names.front()) != std::string::npos);

  std::istringstream curves(file_bytes(prefix + ".curves.csv"));
  REQUIRE(std::getline(curves, line));
  CHECK(line == "heuristic,x_lambda,normalized_energy,lower_bound");
  std::set<std::string> seen;
  while (std::getline(curves, line)) seen.insert(line.substr(0, line.find(',')));
  CHECK(seen.size() == 5);
}

TEST_CASE("usage errors exit with 2 and runtime failures with 1") {
  std::string img_path = fixture_image();
  CHECK(run_cli("build " + oracle::temp_path(".missing.pgm") + " -o x.ssh").code == 2);
  CHECK(run_cli("build " + img_path + " --heuristic smk --k 1 -o " +
                oracle::temp_path(".ssh"))
            .code == 2);
  CHECK(run_cli("build " + img_path + " --heuristic bogus -o " + oracle::temp_path(".ssh"))
            .code == 2);
  CHECK(run_cli("frobnicate").code == 2);
  CHECK(run_cli("--help").code == 0);
  CHECK(run_cli("build --help").code == 0);

  std::string ssh = oracle::temp_path(".ssh");
  REQUIRE(run_cli("build " + img_path + " -o " + ssh).code == 0);
  std::string prefix = oracle::temp_path("");
  CHECK(run_cli("cut " + ssh + " " + img_path + " -o " + prefix).code == 2);  // no scales
  CHECK(run_cli("cut " + ssh + " " + img_path + " --x 0.5 --lambda 1 -o " + prefix).code == 2);
  CHECK(run_cli("cut " + ssh + " " + img_path + " --x 1.5 -o " + prefix).code == 2);
  CHECK(run_cli("cut " + ssh + " " + img_path + " --lambda -3 -o " + prefix).code == 2);

  // Valid pnm, wrong dimensions for the hierarchy: a runtime failure.
  RasterImage other;
  other.width = 2;
  other.height = 2;
  other.channels = 1;
  other.data = {0, 1, 2, 3};
  std::string other_path = oracle::temp_path(".pgm");
  save_image(other, other_path);
  CHECK(run_cli("cut " + ssh + " " + other_path + " --x 0.5 -o " + prefix).code == 1);

  // Truncated container: a runtime failure, not a usage error.
  std::string bad = oracle::temp_path(".ssh");
  std::ofstream(bad, std::ios::binary) << "SSH1 garbage";
  CHECK(run_cli("curve " + bad + " -o " + prefix).code == 1);
}

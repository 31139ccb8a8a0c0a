// Command-line front end: thin composition of library calls, no computation
// of its own. Exit codes: 0 ok, 1 runtime failure, 2 usage/config error.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>
#include <scaleset/scaleset.hpp>

namespace {

using nlohmann::json;
using namespace scaleset;

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

heuristic parse_heuristic(const std::string& name) {
  static const std::map<std::string, heuristic> table = {
      {"sm2", heuristic::sm2}, {"smk", heuristic::smk}, {"sm", heuristic::sm},
      {"mm", heuristic::mm},   {"mm1", heuristic::mm1},
  };
  auto it = table.find(name);
  if (it == table.end()) fail(errc::invalid_config, "unknown heuristic: " + name);
  return it->second;
}

struct CommonOpts {
  std::string energy = "mumford";
  double sigmoid_center = 0.5;
  double sigmoid_steepness = 8.0;
  std::uint32_t k = 3;
};

EnergyModel make_model(const CommonOpts& o) {
  if (o.energy == "mumford") return EnergyModel::piecewise_constant();
  if (o.energy == "contrast") return EnergyModel::contrast(o.sigmoid_center, o.sigmoid_steepness);
  fail(errc::invalid_config, "unknown energy model: " + o.energy);
}

void require_file(const std::string& path) {
  if (!std::filesystem::exists(path))
    throw CLI::ValidationError("file not found: " + path);
}

LabelMap base_partition(const RasterImage& img, const std::string& labels_path) {
  if (labels_path.empty()) return flat_zone_partition(img);
  LabelMap m = load_label_map(labels_path);
  require_same_dims(img, m);
  return m;
}

json metrics_json(const BuildMetrics& m) {
  json j;
  j["levels"] = m.levels;
  j["vertex_ratio_per_level"] = m.vertex_ratio_per_level;
  j["edge_ratio_per_level"] = m.edge_ratio_per_level;  // NaN serializes as null
  j["merges"] = m.merges;
  j["wall_ms"] = m.wall_ms;
  j["first_merge_lambda"] = m.first_merge_lambda;
  return j;
}

// Scales may come as absolute --lambda or normalized --x, never both.
std::vector<double> resolve_scales(const std::vector<double>& lambdas,
                                   const std::vector<double>& xs, double lmax) {
  if (!lambdas.empty() && !xs.empty())
    fail(errc::invalid_config, "--lambda and --x cannot be mixed");
  if (lambdas.empty() && xs.empty())
    fail(errc::invalid_config, "no scale given (use --lambda or --x)");
  std::vector<double> out;
  for (double l : lambdas) {
    if (l < 0.0) fail(errc::invalid_config, "--lambda must be nonnegative");
    out.push_back(l);
  }
  for (double x : xs) {
    if (x < 0.0 || x > 1.0) fail(errc::invalid_config, "--x must be in [0,1]");
    out.push_back(x * lmax);
  }
  return out;
}

int cmd_build(const std::string& image_path, const std::string& labels_path,
              const std::string& heuristic_name_, const CommonOpts& opts,
              const std::string& out_path, const std::string& metrics_path) {
  RasterImage img = load_image(image_path);
  LabelMap base = base_partition(img, labels_path);
  BuilderConfig cfg;
  cfg.method = parse_heuristic(heuristic_name_);
  cfg.k = opts.k;
  cfg.model = make_model(opts);
  if (cfg.method == heuristic::smk && cfg.k < 2)
    fail(errc::invalid_config, "--k must be at least 2");

  BuildResult r = build(img, base, cfg);
  save_hierarchy(r.hierarchy, out_path);
  std::cout << "hierarchy: " << out_path << "  nodes=" << r.hierarchy.node_count()
            << "  lambda_max=" << fmt(lambda_max(r.hierarchy)) << "\n";
  if (!metrics_path.empty()) {
    std::ofstream mf(metrics_path);
    if (!mf) fail(errc::io_failure, "cannot write " + metrics_path);
    mf << metrics_json(r.metrics).dump(2) << "\n";
  }
  return 0;
}

int cmd_cut(const std::string& hierarchy_path, const std::string& image_path,
            const std::string& labels_path, const std::vector<double>& lambdas,
            const std::vector<double>& xs, const std::string& out_prefix) {
  Hierarchy h = load_hierarchy(hierarchy_path);
  RasterImage img = load_image(image_path);
  LabelMap base = base_partition(img, labels_path);
  if (base.region_count != h.base_region_count())
    fail(errc::dimension_mismatch,
         "base partition has " + std::to_string(base.region_count) + " regions, hierarchy expects " +
             std::to_string(h.base_region_count()));
  std::vector<double> scales = resolve_scales(lambdas, xs, lambda_max(h));

  for (std::size_t i = 0; i < scales.size(); ++i) {
    std::vector<NodeId> cut = optimal_cut(h, scales[i]);
    LabelMap cm = cut_to_label_map(h, cut, base);
    std::string tag = out_prefix + ".cut" + std::to_string(i);
    std::string label_file = tag + ".labels.pgm";
    std::string render_file = tag + (img.channels == 3 ? ".render.ppm" : ".render.pgm");
    save_label_map(cm, label_file);
    save_image(render_partition(img, cm), render_file);
    std::cout << "lambda=" << fmt(scales[i]) << "  regions=" << cut.size() << "  " << label_file
              << "  " << render_file << "\n";
  }
  return 0;
}

int cmd_curve(const std::string& hierarchy_path, const std::string& out_prefix) {
  Hierarchy h = load_hierarchy(hierarchy_path);
  PlConcave curve = energy_curve(h);
  NormalizedCurve nc = normalize(h);
  BoundsReport rep = check_bounds(nc);

  std::string seg_path = out_prefix + ".segments.csv";
  std::ofstream seg(seg_path);
  if (!seg) fail(errc::io_failure, "cannot write " + seg_path);
  seg << "lambda,value,slope\n";
  for (const Segment& s : curve.segments())
    seg << fmt(s.start) << "," << fmt(s.value_at(s.start)) << "," << fmt(s.slope) << "\n";

  std::string csv_path = out_prefix + ".curve.csv";
  std::ofstream csv(csv_path);
  if (!csv) fail(errc::io_failure, "cannot write " + csv_path);
  csv << "x_lambda,normalized_energy,lower_bound\n";
  for (std::size_t i = 0; i < nc.xs.size(); ++i)
    csv << fmt(nc.xs[i]) << "," << fmt(nc.values[i]) << "," << fmt(nc.lower_bound_at(nc.xs[i]))
        << "\n";

  json summary;
  summary["lambda_max"] = nc.lambda_max;
  summary["E_I"] = nc.e_full;
  summary["quality_area"] = quality_area(h);
  summary["bound_max_violation"] = rep.max_violation;
  std::string json_path = out_prefix + ".summary.json";
  std::ofstream js(json_path);
  if (!js) fail(errc::io_failure, "cannot write " + json_path);
  js << summary.dump(2) << "\n";

  std::cout << "lambda_max=" << fmt(nc.lambda_max) << "  E_I=" << fmt(nc.e_full)
            << "  quality_area=" << fmt(summary["quality_area"].get<double>())
            << "  bound_max_violation=" << fmt(rep.max_violation) << "\n";
  return 0;
}

int cmd_compare(const std::string& image_path, const std::string& labels_path,
                std::vector<std::string> heuristics, const CommonOpts& opts,
                const std::string& out_prefix, const std::string& metrics_path) {
  RasterImage img = load_image(image_path);
  LabelMap base = base_partition(img, labels_path);
  if (heuristics.empty()) heuristics = {"sm2", "smk", "sm", "mm", "mm1"};

  struct Row {
    std::string name;
    double quality;
    double lmax;
    BuildMetrics metrics;
    NormalizedCurve curve;
  };
  std::vector<Row> rows;
  for (const std::string& name : heuristics) {
    BuilderConfig cfg;
    cfg.method = parse_heuristic(name);
    cfg.k = opts.k;
    cfg.model = make_model(opts);
    if (cfg.method == heuristic::smk && cfg.k < 2)
      fail(errc::invalid_config, "--k must be at least 2");
    BuildResult r = build(img, base, cfg);
    Row row;
    row.name = name;
    row.quality = quality_area(r.hierarchy);
    row.lmax = lambda_max(r.hierarchy);
    row.metrics = r.metrics;
    row.curve = normalize(r.hierarchy);
    rows.push_back(std::move(row));
  }

  std::string curves_path = out_prefix + ".curves.csv";
  std::ofstream cf(curves_path);
  if (!cf) fail(errc::io_failure, "cannot write " + curves_path);
  cf << "heuristic,x_lambda,normalized_energy,lower_bound\n";
  for (const Row& r : rows)
    for (std::size_t i = 0; i < r.curve.xs.size(); ++i)
      cf << r.name << "," << fmt(r.curve.xs[i]) << "," << fmt(r.curve.values[i]) << ","
         << fmt(r.curve.lower_bound_at(r.curve.xs[i])) << "\n";

  std::vector<std::size_t> order(rows.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return rows[a].quality > rows[b].quality;
  });

  std::string rank_path = out_prefix + ".ranking.csv";
  std::ofstream rf(rank_path);
  if (!rf) fail(errc::io_failure, "cannot write " + rank_path);
  rf << "heuristic,quality_area,lambda_max,first_merge_lambda\n";
  for (std::size_t i : order)
    rf << rows[i].name << "," << fmt(rows[i].quality) << "," << fmt(rows[i].lmax) << ","
       << fmt(rows[i].metrics.first_merge_lambda) << "\n";

  if (!metrics_path.empty()) {
    json all;
    for (const Row& r : rows) all[r.name] = metrics_json(r.metrics);
    std::ofstream mf(metrics_path);
    if (!mf) fail(errc::io_failure, "cannot write " + metrics_path);
    mf << all.dump(2) << "\n";
  }

  for (std::size_t i : order)
    std::cout << rows[i].name << "  quality_area=" << fmt(rows[i].quality)
              << "  lambda_max=" << fmt(rows[i].lmax)
              << "  first_merge_lambda=" << fmt(rows[i].metrics.first_merge_lambda) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"scale-set segmentation hierarchies"};
  app.require_subcommand(1);

  CommonOpts opts;
  std::string image_path, labels_path, hierarchy_path, out_path, metrics_path;
  std::string heur = "sm2";
  std::vector<std::string> heur_list;
  std::vector<double> lambdas, xs;

  auto add_energy_opts = [&](CLI::App* cmd) {
    cmd->add_option("--energy", opts.energy, "data term: mumford or contrast")
        ->check(CLI::IsMember({"mumford", "contrast"}));
    cmd->add_option("--sigmoid-center", opts.sigmoid_center, "contrast sigmoid midpoint");
    cmd->add_option("--sigmoid-steepness", opts.sigmoid_steepness, "contrast sigmoid steepness");
    cmd->add_option("--k", opts.k, "regions per merge for smk");
  };

  CLI::App* b = app.add_subcommand("build", "build a hierarchy from an image");
  b->add_option("image", image_path, "input image (PGM/PPM)")->required()
      ->check([](const std::string& p) { require_file(p); return std::string(); });
  b->add_option("--labels", labels_path, "base partition label map (default: flat zones)");
  b->add_option("--heuristic", heur, "sm2 | smk | sm | mm | mm1")
      ->check(CLI::IsMember({"sm2", "smk", "sm", "mm", "mm1"}));
  add_energy_opts(b);
  b->add_option("--out,-o", out_path, "output hierarchy file")->required();
  b->add_option("--metrics", metrics_path, "write build metrics JSON here");

  CLI::App* c = app.add_subcommand("cut", "extract optimal cuts at given scales");
  c->add_option("hierarchy", hierarchy_path, "hierarchy file")->required()
      ->check([](const std::string& p) { require_file(p); return std::string(); });
  c->add_option("image", image_path, "image the hierarchy was built on")->required()
      ->check([](const std::string& p) { require_file(p); return std::string(); });
  c->add_option("--labels", labels_path, "base partition label map (default: flat zones)");
  c->add_option("--lambda", lambdas, "absolute scale (repeatable)");
  c->add_option("--x", xs, "normalized scale in [0,1] (repeatable)");
  c->add_option("--out,-o", out_path, "output prefix")->required();

  CLI::App* v = app.add_subcommand("curve", "emit energy curve, normalization and bounds");
  v->add_option("hierarchy", hierarchy_path, "hierarchy file")->required()
      ->check([](const std::string& p) { require_file(p); return std::string(); });
  v->add_option("--out,-o", out_path, "output prefix")->required();

  CLI::App* m = app.add_subcommand("compare", "rank heuristics on one image");
  m->add_option("image", image_path, "input image (PGM/PPM)")->required()
      ->check([](const std::string& p) { require_file(p); return std::string(); });
  m->add_option("--labels", labels_path, "base partition label map (default: flat zones)");
  m->add_option("--heuristic", heur_list, "heuristics to compare (repeatable; default all)");
  add_energy_opts(m);
  m->add_option("--out,-o", out_path, "output prefix")->required();
  m->add_option("--metrics", metrics_path, "write per-heuristic metrics JSON here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (app.got_subcommand(b))
      return cmd_build(image_path, labels_path, heur, opts, out_path, metrics_path);
    if (app.got_subcommand(c))
      return cmd_cut(hierarchy_path, image_path, labels_path, lambdas, xs, out_path);
    if (app.got_subcommand(v)) return cmd_curve(hierarchy_path, out_path);
    if (app.got_subcommand(m))
      return cmd_compare(image_path, labels_path, heur_list, opts, out_path, metrics_path);
  } catch (const scaleset::error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.code() == errc::invalid_config ? 2 : 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

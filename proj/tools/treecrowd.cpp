// treecrowd: command-line driver for the crowd tree-mapping pipeline.
//
//   treecrowd preprocess --cloud C --dtm D --out DIR      cut annotation tiles
//   treecrowd simulate   --tiles DIR --gt GT --out SUBS   synthetic submissions
//   treecrowd integrate  --submissions SUBS --out STEMS   integrate acquisitions
//   treecrowd evaluate   --stems STEMS --gt GT ...        metrics and costs
//   treecrowd report     --in EVAL...                     evaluation table
//   treecrowd serve      --campaign C --tiles DIR         job service over HTTP
//
// Exit codes: 0 ok, 1 runtime failure, 2 usage error.

#include <csignal>
#include <filesystem>
#include <future>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <pthread.h>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "treecrowd/campaign.hpp"
#include "treecrowd/campaign_http.hpp"
#include "treecrowd/crowdsim.hpp"
#include "treecrowd/evaluator.hpp"
#include "treecrowd/integrator.hpp"
#include "treecrowd/pointcloud.hpp"
#include "treecrowd/records.hpp"
#include "treecrowd/tiler.hpp"

namespace fs = std::filesystem;
using namespace treecrowd;

namespace {

class UsageError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Configuration file: a JSON object with optional sections "tile_spec",
/// "integration", "view", "simulation" and "evaluation". Flags override it.
nlohmann::json load_config(const std::string& path) {
  if (path.empty()) return nlohmann::json::object();
  try {
    return nlohmann::json::parse(detail::read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw UsageError("bad config file " + path + ": " + e.what());
  }
}

template <typename T>
void from_config(const nlohmann::json& cfg, const char* section, const char* key, T& target) {
  if (cfg.contains(section) && cfg[section].contains(key)) target = cfg[section][key].get<T>();
}

// --- preprocess -----------------------------------------------------------------

struct PreprocessArgs {
  std::string cloud, dtm, out, config, format = "xyz", orientation = "auto";
  double spacing = 0.20;
  TileSpec spec;
  ViewParams view;
  bool forest = false;
  std::size_t jobs = 1;
};

int run_preprocess(PreprocessArgs& a, const CLI::App& cmd) {
  const auto cfg = load_config(a.config);
  TileSpec spec = a.forest ? TileSpec::forest() : TileSpec{};
  from_config(cfg, "tile_spec", "target_length", spec.target_length);
  from_config(cfg, "tile_spec", "target_depth", spec.target_depth);
  from_config(cfg, "tile_spec", "stretch_factor", spec.stretch_factor);
  from_config(cfg, "tile_spec", "spacing", a.spacing);
  from_config(cfg, "view", "color_h_min", a.view.color_h_min);
  from_config(cfg, "view", "color_h_max", a.view.color_h_max);
  if (cmd.count("--tile-length")) spec.target_length = a.spec.target_length;
  if (cmd.count("--tile-depth")) spec.target_depth = a.spec.target_depth;
  if (cmd.count("--stretch")) spec.stretch_factor = a.spec.stretch_factor;
  if (a.orientation == "x") spec.orientation = StripOrientation::along_x;
  else if (a.orientation == "y") spec.orientation = StripOrientation::along_y;
  try {
    spec.validate();
    a.view.validate();
  } catch (const InvalidArgument& e) {
    throw UsageError(e.what());
  }

  const auto format = a.format == "xyzrgb" ? CloudFormat::ascii_xyzrgb : CloudFormat::ascii_xyz;
  const auto dtm = read_dtm(a.dtm);
  const auto raw = read_cloud(a.cloud, format);
  if (raw.empty()) throw Error("input cloud is empty");
  auto cloud = voxel_subsample(raw, a.spacing);
  const auto heights = height_above_ground(cloud, dtm);
  cloud = colorize(std::move(cloud), heights, a.view);
  const auto plan = plan_grid(cloud.bbox().planar(), spec);
  auto tiles = cut_tiles(cloud, plan, &dtm);

  // Everything goes to a staging directory that replaces --out at the end.
  const fs::path out = a.out;
  fs::path staging = out;
  staging += ".partial";
  fs::remove_all(staging);
  fs::create_directories(staging);
  auto export_range = [&](std::size_t w, std::size_t n_workers) {
    for (std::size_t i = w; i < tiles.size(); i += n_workers) {
      auto t = spec.stretch_factor > 1.0 ? apply_stretch(tiles[i], spec.stretch_factor) : tiles[i];
      export_tile_bundle(t, staging / t.tile_id);
    }
  };
  const std::size_t n_workers = std::max<std::size_t>(1, a.jobs);
  std::vector<std::future<void>> futures;
  for (std::size_t w = 0; w < n_workers; ++w)
    futures.push_back(std::async(std::launch::async, export_range, w, n_workers));
  for (auto& f : futures) f.get();
  fs::remove_all(out);
  fs::rename(staging, out);

  const auto ext = plan.extent;
  std::cout << fmt::format("points      {} raw, {} after {:.2f} m subsampling\n", raw.size(),
                           cloud.size(), a.spacing);
  std::cout << fmt::format("Area Size   {:.2f} ha\n", ext.area() / 10000.0);
  std::cout << fmt::format("# Tiles     {}\n", plan.tile_count());
  std::cout << fmt::format("Tile Size   {:.0f} x {:.0f} m\n", plan.tile_length(), plan.tile_depth());
  std::cout << fmt::format("stretch     {}\n", spec.stretch_factor);
  return 0;
}

// --- simulate -------------------------------------------------------------------

struct SimulateArgs {
  std::string tiles, gt, config, out;
  std::size_t replication = 0;
  std::uint64_t seed = 0;
};

/// Tile regions of every bundle below `root`, sorted by tile id.
std::vector<TileRegion> read_regions(const fs::path& root) {
  std::vector<TileRegion> regions;
  for (const auto& entry : fs::recursive_directory_iterator(root)) {
    if (entry.path().filename() != kManifestFile) continue;
    const auto m = nlohmann::json::parse(detail::read_file(entry.path()));
    const auto& b = m.at("bounds");
    regions.push_back({m.at("tile_id").get<std::string>(),
                       {b[0].get<double>(), b[1].get<double>(), b[2].get<double>(), b[3].get<double>()}});
  }
  std::sort(regions.begin(), regions.end(),
            [](const TileRegion& x, const TileRegion& y) { return x.tile_id < y.tile_id; });
  return regions;
}

int run_simulate(SimulateArgs& a, const CLI::App& cmd) {
  const auto cfg = load_config(a.config);
  CampaignSimConfig sim = default_sim_config();
  if (cfg.contains("simulation")) sim = sim_config_from_record(cfg["simulation"]);
  else if (cfg.contains("workers")) sim = sim_config_from_record(cfg);
  if (cmd.count("--replication")) sim.replication = a.replication;
  if (cmd.count("--seed")) sim.campaign_seed = a.seed;
  try {
    sim.validate();
  } catch (const InvalidArgument& e) {
    throw UsageError(e.what());
  }
  const auto regions = read_regions(a.tiles);
  if (regions.empty()) throw Error("no tile bundles under " + a.tiles);
  const auto gt = read_ground_truth(a.gt);
  double gxmax = -INFINITY, gymax = -INFINITY;
  for (const auto& r : regions) {
    gxmax = std::max(gxmax, r.bounds.xmax);
    gymax = std::max(gymax, r.bounds.ymax);
  }
  std::vector<SimTile> tiles;
  for (const auto& r : regions) tiles.push_back({r, {}});
  for (const auto& g : gt) {
    for (auto& t : tiles) {
      const auto& b = t.region.bounds;
      const bool in_x = g.x >= b.xmin && (g.x < b.xmax || (b.xmax == gxmax && g.x <= b.xmax));
      const bool in_y = g.y >= b.ymin && (g.y < b.ymax || (b.ymax == gymax && g.y <= b.ymax));
      if (in_x && in_y) {
        t.gt.push_back(g);
        break;
      }
    }
  }
  const auto subs = simulate_campaign(tiles, sim);
  write_records(a.out, subs);
  std::cout << fmt::format("{} submissions for {} tiles (k = {})\n", subs.size(), tiles.size(),
                           sim.replication);
  return 0;
}

// --- integrate ------------------------------------------------------------------

struct IntegrateArgs {
  std::string submissions, out, config;
  IntegrationParams params;
  std::size_t jobs = 1;
};

int run_integrate(IntegrateArgs& a, const CLI::App& cmd) {
  const auto cfg = load_config(a.config);
  IntegrationParams p;
  from_config(cfg, "integration", "eps", p.eps);
  from_config(cfg, "integration", "n_min", p.n_min);
  from_config(cfg, "integration", "n_max", p.n_max);
  from_config(cfg, "integration", "eps_step", p.eps_step);
  from_config(cfg, "integration", "d_pos", p.d_pos);
  from_config(cfg, "integration", "d_h", p.d_h);
  if (cmd.count("--eps")) p.eps = a.params.eps;
  if (cmd.count("--n-min")) p.n_min = a.params.n_min;
  if (cmd.count("--n-max")) p.n_max = a.params.n_max;
  if (cmd.count("--eps-step")) p.eps_step = a.params.eps_step;
  if (cmd.count("--d-pos")) p.d_pos = a.params.d_pos;
  if (cmd.count("--d-h")) p.d_h = a.params.d_h;
  try {
    p.validate();
  } catch (const InvalidArgument& e) {
    throw UsageError(e.what());
  }
  const auto subs = read_submissions(a.submissions);
  const auto stems = integrate_campaign(subs, p, a.jobs);
  write_records(a.out, stems);
  std::cout << fmt::format("{} integrated stems from {} submissions\n", stems.size(), subs.size());
  return 0;
}

// --- evaluate / report ----------------------------------------------------------

struct EvaluateArgs {
  std::string stems, gt, out, name = "Data Set", counts, config;
  double area_ha = 0.0, unit_price = 0.10, fee = 0.10, d_pos = 1.0, d_h = 2.0;
  std::size_t tiles = 0, k = 10;
};

int run_evaluate(EvaluateArgs& a, const CLI::App& cmd) {
  const auto cfg = load_config(a.config);
  from_config(cfg, "evaluation", "d_pos", a.d_pos);
  from_config(cfg, "evaluation", "d_h", a.d_h);
  std::size_t tp = 0, fn = 0, fp = 0, gt_count = 0;
  if (!a.counts.empty()) {
    if (std::sscanf(a.counts.c_str(), "%zu,%zu,%zu", &tp, &fn, &fp) != 3)
      throw UsageError("--counts expects TP,FN,FP");
    gt_count = tp + fn;
  } else {
    if (a.stems.empty() || a.gt.empty()) throw UsageError("--stems and --gt are required without --counts");
    const auto stems = read_stems(a.stems);
    const auto gt = read_ground_truth(a.gt);
    const auto m = match_one_to_one(gt, stems, {a.d_pos, a.d_h});
    tp = m.tp();
    fn = m.fn();
    fp = m.fp();
    gt_count = gt.size();
  }
  std::optional<CostReport> cost;
  if (cmd.count("--area-ha") || cmd.count("--tiles")) {
    if (!(a.area_ha > 0.0) || a.tiles == 0) throw UsageError("costs need both --area-ha and --tiles");
    cost = cost_report(a.tiles, a.k, a.unit_price, a.fee, tp, a.area_ha);
  }
  const auto row = evaluation_row(a.name, gt_count, tp, fn, fp, cost);
  std::vector<EvaluationRow> rows{row};
  std::cout << format_table(rows);
  if (cost)
    std::cout << fmt::format("campaign cost ${} + {:.0f}% fee = ${}\n", format_money(cost->base_cost),
                             100.0 * cost->fee_rate, format_money(cost->total_cost));
  if (!a.out.empty()) write_records(a.out, rows);
  return 0;
}

int run_report(const std::vector<std::string>& inputs, const std::string& out) {
  std::vector<EvaluationRow> rows;
  for (const auto& in : inputs) {
    auto part = read_records<EvaluationRow>(in, evaluation_from_record);
    rows.insert(rows.end(), part.begin(), part.end());
  }
  const auto table = format_table(rows);
  std::cout << table;
  if (!out.empty()) detail::write_file_atomic(out, table);
  return 0;
}

// --- serve ----------------------------------------------------------------------

struct ServeArgs {
  std::string campaign, tiles, log, host = "127.0.0.1";
  int port = 8080;
  std::uint64_t seed = 0;
  double lease_minutes = 30.0;
  std::size_t max_alternatives = 3;
};

int run_serve(ServeArgs& a) {
  Campaign campaign;
  if (!a.campaign.empty()) {
    campaign = campaign_from_record(nlohmann::json::parse(detail::read_file(a.campaign)));
  } else if (!a.log.empty() && fs::exists(a.log)) {
    campaign = CampaignService::campaign_in_log(a.log);
  } else {
    throw UsageError("--campaign is required unless --log names an existing event log");
  }
  ServiceOptions opts;
  opts.seed = a.seed;
  opts.lease = std::chrono::milliseconds(static_cast<std::int64_t>(a.lease_minutes * 60000.0));
  opts.max_alternatives = a.max_alternatives;

  // SIGINT/SIGTERM are handled synchronously by a dedicated thread.
  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  CampaignService service(campaign, opts,
                          a.log.empty() ? std::nullopt : std::optional<fs::path>(a.log));
  TileStore store = a.tiles.empty() ? TileStore{} : TileStore(a.tiles);
  httplib::Server server;
  mount_campaign_routes(server, service, store);

  int port = a.port;
  if (port == 0) port = server.bind_to_any_port(a.host);
  else if (!server.bind_to_port(a.host, port)) port = -1;
  if (port < 0) throw Error(fmt::format("cannot bind {}:{}", a.host, a.port));

  std::thread waiter([&] {
    int sig = 0;
    sigwait(&signals, &sig);
    server.stop();
  });
  std::cout << fmt::format("campaign {} ({} payload tiles, {} bundles) listening on {}:{}\n",
                           campaign.campaign_id, campaign.payload_tiles.size(), store.size(), a.host, port)
            << std::flush;
  server.listen_after_bind();
  // listen returned: either a signal arrived or the server failed.
  pthread_kill(waiter.native_handle(), SIGTERM);
  waiter.join();
  const auto s = service.status();
  std::cout << fmt::format("stopped: {} accepted jobs, owed ${}\n", s.accepted_jobs, format_money(s.owed));
  return 0;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"Crowd-based tree mapping from 3D point clouds"};
  app.require_subcommand(1);

  PreprocessArgs pre;
  auto* c_pre = app.add_subcommand("preprocess", "Subsample, colourise and cut a cloud into tile bundles");
  c_pre->add_option("--cloud", pre.cloud, "ASCII point cloud")->required()->check(CLI::ExistingFile);
  c_pre->add_option("--dtm", pre.dtm, "ESRI ASCII terrain grid")->required()->check(CLI::ExistingFile);
  c_pre->add_option("--out", pre.out, "Output directory for tile bundles")->required();
  c_pre->add_option("--format", pre.format, "Cloud format")->check(CLI::IsMember({"xyz", "xyzrgb"}));
  c_pre->add_option("--spacing", pre.spacing, "Subsampling voxel size [m]")->check(CLI::PositiveNumber);
  c_pre->add_option("--tile-length", pre.spec.target_length, "Target strip length [m]");
  c_pre->add_option("--tile-depth", pre.spec.target_depth, "Target strip depth [m]");
  c_pre->add_option("--stretch", pre.spec.stretch_factor, "xy stretch factor for display");
  c_pre->add_option("--orientation", pre.orientation, "Strip axis")->check(CLI::IsMember({"auto", "x", "y"}));
  c_pre->add_flag("--forest", pre.forest, "Forest profile: 20 x 4 m tiles stretched 1.5x");
  c_pre->add_option("--config", pre.config, "JSON configuration file")->check(CLI::ExistingFile);
  c_pre->add_option("--jobs", pre.jobs, "Parallel tile exports");

  SimulateArgs sim;
  auto* c_sim = app.add_subcommand("simulate", "Simulate crowd submissions for tile bundles");
  c_sim->add_option("--tiles", sim.tiles, "Directory of tile bundles")->required()->check(CLI::ExistingDirectory);
  c_sim->add_option("--gt", sim.gt, "Ground-truth stems (line records)")->required()->check(CLI::ExistingFile);
  c_sim->add_option("--config", sim.config, "Simulation config (JSON)")->check(CLI::ExistingFile);
  c_sim->add_option("--replication,-k", sim.replication, "Workers per tile");
  c_sim->add_option("--seed", sim.seed, "Campaign seed");
  c_sim->add_option("--out", sim.out, "Submissions output file")->required();

  IntegrateArgs integ;
  auto* c_int = app.add_subcommand("integrate", "Integrate submissions into stem positions");
  c_int->add_option("--submissions", integ.submissions, "Submissions file")->required()->check(CLI::ExistingFile);
  c_int->add_option("--out", integ.out, "Integrated stems output file")->required();
  c_int->add_option("--eps", integ.params.eps, "Initial clustering radius [m]");
  c_int->add_option("--n-min", integ.params.n_min, "Minimum cluster support");
  c_int->add_option("--n-max", integ.params.n_max, "Cluster size that triggers refinement");
  c_int->add_option("--eps-step", integ.params.eps_step, "Refinement radius decrement [m]");
  c_int->add_option("--d-pos", integ.params.d_pos, "Purge position tolerance [m]");
  c_int->add_option("--d-h", integ.params.d_h, "Purge height tolerance [m]");
  c_int->add_option("--config", integ.config, "JSON configuration file")->check(CLI::ExistingFile);
  c_int->add_option("--jobs", integ.jobs, "Tiles integrated in parallel");

  EvaluateArgs ev;
  auto* c_ev = app.add_subcommand("evaluate", "Match stems against ground truth; metrics and costs");
  c_ev->add_option("--stems", ev.stems, "Integrated stems")->check(CLI::ExistingFile);
  c_ev->add_option("--gt", ev.gt, "Ground-truth stems")->check(CLI::ExistingFile);
  c_ev->add_option("--counts", ev.counts, "Evaluate given TP,FN,FP instead of matching");
  c_ev->add_option("--name", ev.name, "Data set name");
  c_ev->add_option("--area-ha", ev.area_ha, "Site area [ha]");
  c_ev->add_option("--tiles", ev.tiles, "Number of payload tiles");
  c_ev->add_option("-k,--replication", ev.k, "Workers per tile");
  c_ev->add_option("--unit-price", ev.unit_price, "Payment per accepted job [$]");
  c_ev->add_option("--fee", ev.fee, "Platform fee rate");
  c_ev->add_option("--d-pos", ev.d_pos, "Match position tolerance [m]");
  c_ev->add_option("--d-h", ev.d_h, "Match height tolerance [m]");
  c_ev->add_option("--config", ev.config, "JSON configuration file")->check(CLI::ExistingFile);
  c_ev->add_option("--out", ev.out, "Evaluation record output file");

  std::vector<std::string> report_in;
  std::string report_out;
  auto* c_rep = app.add_subcommand("report", "Render evaluation records as a table");
  c_rep->add_option("--in", report_in, "Evaluation record files")->required()->check(CLI::ExistingFile);
  c_rep->add_option("--out", report_out, "Write the table to a file");

  ServeArgs srv;
  auto* c_srv = app.add_subcommand("serve", "Run the campaign job service");
  c_srv->add_option("--campaign", srv.campaign, "Campaign definition (JSON)")->check(CLI::ExistingFile);
  c_srv->add_option("--tiles", srv.tiles, "Directory of tile bundles")->check(CLI::ExistingDirectory);
  c_srv->add_option("--log", srv.log, "Event log file");
  c_srv->add_option("--host", srv.host, "Bind address");
  c_srv->add_option("--port", srv.port, "Port (0 picks a free one)");
  c_srv->add_option("--seed", srv.seed, "Seed for qualification tile draws");
  c_srv->add_option("--lease-minutes", srv.lease_minutes, "Reservation lease");
  c_srv->add_option("--max-alternatives", srv.max_alternatives, "\"No stems\" swaps per job");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*c_pre) return run_preprocess(pre, *c_pre);
    if (*c_sim) return run_simulate(sim, *c_sim);
    if (*c_int) return run_integrate(integ, *c_int);
    if (*c_ev) return run_evaluate(ev, *c_ev);
    if (*c_rep) return run_report(report_in, report_out);
    if (*c_srv) return run_serve(srv);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "bgf/experiments.hpp"
#include "bgf/io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct CommonOpts {
  std::string mesh_file;
  std::string out_dir = ".";
  std::string model = "mb";
  double range = 1.0;
  double sigma_u = 1.0;
  double sigma_eps = 0.1;
  double barrier_fraction = 0.1;
  std::uint64_t seed = 1;
  int threads = 0;
};

void ensure_dir(const std::string& dir) {
  if (!dir.empty() && dir != ".") fs::create_directories(dir);
}

bgf::ObservationSet load_observations_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open observations file: " + path);
  bgf::ObservationSet obs;
  std::vector<double> vals;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream ss(line);
    double x, y, v;
    if (!(ss >> x >> y >> v)) {
      if (lineno == 1) continue;  // header row
      throw std::runtime_error("observations: cannot parse line " + std::to_string(lineno) +
                               " of " + path);
    }
    obs.locations.push_back({x, y});
    vals.push_back(v);
  }
  obs.values = Eigen::Map<bgf::Vector>(vals.data(), static_cast<int>(vals.size()));
  obs.validate();
  return obs;
}

// Build the model mesh/fem for one of ms/mb/mn from a labeled mesh.
struct ModelContext {
  bgf::TriangleMesh mesh;
  bgf::FemMatrices fem;
  bgf::ModelKind kind;
  std::vector<int> parent_node;  // only for mn
};

ModelContext make_model_context(const bgf::TriangleMesh& mesh, const std::string& model) {
  ModelContext ctx;
  ctx.kind = bgf::model_kind_from_string(model);
  if (ctx.kind == bgf::ModelKind::Neumann) {
    bgf::RestrictedMesh water = bgf::restrict_to_subdomain(mesh, 1);
    ctx.mesh = std::move(water.mesh);
    ctx.parent_node = std::move(water.parent_node);
  } else {
    ctx.mesh = mesh;
  }
  ctx.fem = bgf::assemble(ctx.mesh);
  return ctx;
}

bgf::BarrierSpec make_spec(const CommonOpts& o, bgf::ModelKind kind) {
  bgf::BarrierSpec spec;
  spec.range = o.range;
  spec.sigma_u = o.sigma_u;
  spec.barrier_fraction = kind == bgf::ModelKind::Barrier ? o.barrier_fraction : 1.0;
  return spec;
}

int run_precision_field(const CommonOpts& o, bool correlation, int node,
                        const std::vector<double>& at, bool rescale,
                        const std::string& dump_dir) {
  const bgf::TriangleMesh mesh = bgf::load_mesh_json(o.mesh_file);
  ModelContext ctx = make_model_context(mesh, o.model);
  bgf::PrecisionOperator op =
      bgf::assemble_Q(ctx.fem, make_spec(o, ctx.kind), ctx.kind, ctx.mesh.id());
  if (rescale) op = op.rescaled_to_unit_variance();

  if (!dump_dir.empty()) {
    ensure_dir(dump_dir);
    bgf::dump_coordinate_format(ctx.fem.mass, dump_dir + "/J.txt");
    for (int q = 0; q < ctx.fem.subdomain_count; ++q)
      bgf::dump_coordinate_format(ctx.fem.stiffness[q],
                                  dump_dir + "/D" + std::to_string(q + 1) + ".txt");
    bgf::dump_coordinate_format(op.matrix(), dump_dir + "/Q.txt");
  }

  ensure_dir(o.out_dir);
  if (correlation) {
    int target = node;
    if (!at.empty()) {
      double best = std::numeric_limits<double>::infinity();
      for (int i = 0; i < ctx.mesh.node_count(); ++i) {
        const double dx = ctx.mesh.vertices[i][0] - at[0];
        const double dy = ctx.mesh.vertices[i][1] - at[1];
        if (dx * dx + dy * dy < best) {
          best = dx * dx + dy * dy;
          target = i;
        }
      }
    }
    if (target < 0 || target >= ctx.mesh.node_count())
      throw std::runtime_error("precision corr: node index out of range");
    const bgf::Vector surf = op.correlation_surface(target);
    bgf::write_text_file(o.out_dir + "/corr.csv", bgf::node_field_csv(ctx.mesh, surf));
    // heatmap replicates the 0.1 correlation cutoff used for plots
    bgf::write_pgm(o.out_dir + "/corr.pgm", 500, 500,
                   bgf::rasterize_field(ctx.mesh, surf, 500, 500, 0.1, 1.0));
    std::cout << "wrote " << o.out_dir << "/corr.csv and corr.pgm (center node " << target
              << ")\n";
  } else {
    const bgf::Vector sd = op.marginal_sd();
    bgf::write_text_file(o.out_dir + "/sd.csv", bgf::node_field_csv(ctx.mesh, sd));
    bgf::write_pgm(o.out_dir + "/sd.pgm", 500, 500,
                   bgf::rasterize_field(ctx.mesh, sd, 500, 500, sd.minCoeff(), sd.maxCoeff()));
    std::cout << "wrote " << o.out_dir << "/sd.csv and sd.pgm (sd range [" << sd.minCoeff()
              << ", " << sd.maxCoeff() << "])\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sparse precision matrices for stationary and barrier Matern fields"};
  app.require_subcommand(1);

  CommonOpts o;
  int exit_code = 0;

  // mesh ------------------------------------------------------------------
  auto* mesh_cmd = app.add_subcommand("mesh", "build, mark, and inspect meshes");
  mesh_cmd->require_subcommand(1);

  std::vector<double> bbox{0.0, 0.0, 1.0, 1.0};
  int nx = 10, ny = 10;
  double extension = 0.0;
  std::string out_file = "mesh.json";
  auto* mesh_build = mesh_cmd->add_subcommand("build", "regular crisscross mesh over a rectangle");
  mesh_build->add_option("--bbox", bbox, "x0,y0,x1,y1")->expected(4);
  mesh_build->add_option("--nx", nx, "cells across the bbox");
  mesh_build->add_option("--ny", ny, "cells up the bbox");
  mesh_build->add_option("--extension", extension, "outer extension length");
  mesh_build->add_option("--out", out_file, "output mesh JSON");

  std::string barrier_file;
  auto* mesh_mark = mesh_cmd->add_subcommand("mark", "label triangles covered by barrier polygons");
  mesh_mark->add_option("--mesh", o.mesh_file, "mesh JSON")->required();
  mesh_mark->add_option("--barrier", barrier_file, "polygons JSON")->required();
  mesh_mark->add_option("--out", out_file, "output mesh JSON");

  std::string dump_fem_dir;
  auto* mesh_info = mesh_cmd->add_subcommand("info", "print mesh summary as JSON");
  mesh_info->add_option("--mesh", o.mesh_file, "mesh JSON")->required();
  mesh_info->add_option("--dump-fem", dump_fem_dir, "dump J/D_q in coordinate format to DIR");

  // precision --------------------------------------------------------------
  auto* prec_cmd = app.add_subcommand("precision", "correlation and sd fields of the prior");
  prec_cmd->require_subcommand(1);
  int corr_node = 0;
  std::vector<double> corr_at;
  bool rescale = false;
  std::string dump_dir;
  auto add_prec_common = [&](CLI::App* c) {
    c->add_option("--mesh", o.mesh_file, "mesh JSON")->required();
    c->add_option("--model", o.model, "ms|mb|mn");
    c->add_option("--range", o.range, "range in the normal subdomain");
    c->add_option("--sigma-u", o.sigma_u, "marginal sd scale");
    c->add_option("--barrier-fraction", o.barrier_fraction, "r_b = fraction * r");
    c->add_flag("--rescale-unit-variance", rescale, "rescale Q to unit marginal variances");
    c->add_option("--dump-matrices", dump_dir, "dump J/D_q/Q in coordinate format to DIR");
    c->add_option("--out", o.out_dir, "output directory");
  };
  auto* prec_corr = prec_cmd->add_subcommand("corr", "correlation surface around a node");
  add_prec_common(prec_corr);
  prec_corr->add_option("--node", corr_node, "center node index");
  prec_corr->add_option("--at", corr_at, "center x,y (nearest node)")->expected(2);
  auto* prec_sd = prec_cmd->add_subcommand("sd", "marginal standard deviation field");
  add_prec_common(prec_sd);

  // validate ----------------------------------------------------------------
  auto* validate_cmd = app.add_subcommand("validate", "model validation runs");
  validate_cmd->require_subcommand(1);
  std::vector<double> vbbox{0.0, 0.0, 10.0, 10.0};
  int vnx = 50, vny = 50;
  double vext = 4.5;
  auto* validate_stat = validate_cmd->add_subcommand(
      "stationary", "empirical vs analytic Matern correlation on a fine mesh");
  validate_stat->add_option("--bbox", vbbox, "x0,y0,x1,y1")->expected(4);
  validate_stat->add_option("--nx", vnx, "cells across");
  validate_stat->add_option("--ny", vny, "cells up");
  validate_stat->add_option("--extension", vext, "outer extension");
  validate_stat->add_option("--range", o.range, "range")->default_val(3.0);
  validate_stat->add_option("--sigma-u", o.sigma_u, "marginal sd");
  validate_stat->add_option("--out", o.out_dir, "output directory");

  // experiment ---------------------------------------------------------------
  auto* exp_cmd = app.add_subcommand("experiment", "paper experiments");
  exp_cmd->require_subcommand(1);

  bgf::ChannelConfig channel;
  bool heatmaps = false;
  auto* exp_channel = exp_cmd->add_subcommand("channel", "barrier-gap robustness");
  exp_channel->add_option("--gaps", channel.gap_widths, "gap widths, nonincreasing");
  exp_channel->add_option("--range", channel.range, "range in water");
  exp_channel->add_option("--sigma-u", channel.sigma_u, "marginal sd");
  exp_channel->add_option("--barrier-fraction", channel.barrier_fraction, "r_b fraction");
  exp_channel->add_option("--mesh-edge", channel.mesh_edge, "cell edge length");
  exp_channel->add_option("--extension", channel.extension, "outer extension");
  exp_channel->add_flag("--heatmaps", heatmaps, "write correlation heatmaps (slow)");
  exp_channel->add_option("--out", o.out_dir, "output directory");

  bgf::HorseshoeConfig horseshoe;
  int grid_coarse = 9, grid_refine = 9;
  int grid_coarse_noise = 7, grid_refine_noise = 3;
  std::vector<double> fixed_hyper;
  auto* exp_horseshoe = exp_cmd->add_subcommand("horseshoe", "MS/MB/MN reconstruction study");
  exp_horseshoe->add_option("--sigma-eps", horseshoe.noise_sd, "observation noise sd");
  exp_horseshoe->add_option("--n", horseshoe.n_obs, "observations per replicate");
  exp_horseshoe->add_option("--replicates", horseshoe.replicates, "replicate count");
  exp_horseshoe->add_option("--seed", horseshoe.seed, "master seed");
  exp_horseshoe->add_option("--mesh-edge", horseshoe.mesh_edge, "cell edge length");
  exp_horseshoe->add_option("--extension", horseshoe.extension, "outer extension");
  exp_horseshoe->add_option("--barrier-fraction", horseshoe.barrier_fraction, "r_b fraction");
  exp_horseshoe->add_option("--eval-nx", horseshoe.eval_nx, "evaluation grid width");
  exp_horseshoe->add_option("--eval-ny", horseshoe.eval_ny, "evaluation grid height");
  exp_horseshoe->add_option("--grid-coarse", grid_coarse, "MAP grid points per axis");
  exp_horseshoe->add_option("--grid-refine", grid_refine, "refinement points per axis");
  exp_horseshoe->add_option("--grid-coarse-noise", grid_coarse_noise,
                            "coarse points on the sigma_eps axis");
  exp_horseshoe->add_option("--grid-refine-noise", grid_refine_noise,
                            "refinement points on the sigma_eps axis");
  exp_horseshoe->add_option("--fixed-hyper", fixed_hyper, "fixed r,sigma_u,sigma_eps (skip MAP)")
      ->expected(3);
  exp_horseshoe->add_option("--out", o.out_dir, "output directory");
  exp_horseshoe->add_option("--threads", o.threads, "OpenMP thread count (0 = default)");

  // fit -----------------------------------------------------------------------
  std::string obs_file;
  bool map_mode = false;
  bool drop_outside = false;
  double prior_median_range = 0.0;
  auto* fit_cmd = app.add_subcommand("fit", "fit one model to observations");
  fit_cmd->add_option("--mesh", o.mesh_file, "mesh JSON")->required();
  fit_cmd->add_option("--obs", obs_file, "observations CSV (x,y,value)")->required();
  fit_cmd->add_option("--model", o.model, "ms|mb|mn");
  fit_cmd->add_option("--range", o.range, "fixed range");
  fit_cmd->add_option("--sigma-u", o.sigma_u, "fixed sigma_u");
  fit_cmd->add_option("--sigma-eps", o.sigma_eps, "fixed sigma_eps");
  fit_cmd->add_option("--barrier-fraction", o.barrier_fraction, "r_b fraction");
  fit_cmd->add_flag("--map", map_mode, "select hyperparameters by MAP over PC priors");
  fit_cmd->add_option("--prior-median-range", prior_median_range,
                      "PC prior median range (default: half the longest bbox side)");
  fit_cmd->add_flag("--drop-outside", drop_outside, "drop observations outside the model mesh");
  fit_cmd->add_option("--out", o.out_dir, "output directory");

  CLI11_PARSE(app, argc, argv);

  try {
#ifdef _OPENMP
    if (o.threads > 0) omp_set_num_threads(o.threads);
#endif
    if (*mesh_build) {
      const bgf::Rect r{bbox[0], bbox[1], bbox[2], bbox[3]};
      const bgf::TriangleMesh mesh = bgf::build_regular_mesh(r, nx, ny, extension);
      bgf::save_mesh_json(mesh, out_file);
      std::cout << "wrote " << out_file << " (" << mesh.node_count() << " nodes, "
                << mesh.triangle_count() << " triangles)\n";
    } else if (*mesh_mark) {
      const bgf::TriangleMesh mesh = bgf::load_mesh_json(o.mesh_file);
      const bgf::BarrierGeometry barrier = bgf::load_polygons_json(barrier_file);
      const bgf::TriangleMesh marked = bgf::mark_barrier(mesh, barrier);
      bgf::save_mesh_json(marked, out_file);
      int n2 = 0;
      for (int q : marked.subdomain) n2 += q == 2;
      std::cout << "wrote " << out_file << " (" << n2 << " of " << marked.triangle_count()
                << " triangles marked as barrier)\n";
    } else if (*mesh_info) {
      const bgf::TriangleMesh mesh = bgf::load_mesh_json(o.mesh_file);
      mesh.validate();
      json j;
      j["nodes"] = mesh.node_count();
      j["triangles"] = mesh.triangle_count();
      j["subdomains"] = mesh.subdomain_count();
      const bgf::Rect bb = mesh.bounding_box();
      j["bbox"] = {bb.xmin, bb.ymin, bb.xmax, bb.ymax};
      j["total_area"] = mesh.total_area();
      std::vector<double> areas(mesh.subdomain_count(), 0.0);
      for (int t = 0; t < mesh.triangle_count(); ++t)
        areas[mesh.subdomain[t] - 1] += mesh.triangle_area(t);
      j["subdomain_area"] = areas;
      j["id"] = mesh.id();
      if (!dump_fem_dir.empty()) {
        const bgf::FemMatrices fem = bgf::assemble(mesh);
        ensure_dir(dump_fem_dir);
        bgf::dump_coordinate_format(fem.mass, dump_fem_dir + "/J.txt");
        for (int q = 0; q < fem.subdomain_count; ++q)
          bgf::dump_coordinate_format(fem.stiffness[q],
                                      dump_fem_dir + "/D" + std::to_string(q + 1) + ".txt");
        j["fem_dump"] = dump_fem_dir;
      }
      std::cout << j.dump(2) << '\n';
    } else if (*prec_corr) {
      exit_code = run_precision_field(o, true, corr_node, corr_at, rescale, dump_dir);
    } else if (*prec_sd) {
      exit_code = run_precision_field(o, false, 0, {}, rescale, dump_dir);
    } else if (*validate_stat) {
      bgf::StationaryValidationSpec spec;
      spec.bbox = bgf::Rect{vbbox[0], vbbox[1], vbbox[2], vbbox[3]};
      spec.nx = vnx;
      spec.ny = vny;
      spec.extension = vext;
      const auto res = bgf::run_stationary_validation(spec, o.range, o.sigma_u);
      ensure_dir(o.out_dir);
      bgf::write_text_file(o.out_dir + "/stationary.csv", res.csv);
      std::cout << "wrote " << o.out_dir << "/stationary.csv\n"
                << "max |empirical - analytic| for d in [0.3r, 2r]: " << res.max_abs_error_band
                << "\ninterior marginal sd in [" << res.interior_sd_min << ", "
                << res.interior_sd_max << "] (sigma_u = " << o.sigma_u << ")\n";
    } else if (*exp_channel) {
      ensure_dir(o.out_dir);
      const auto res = bgf::run_channel(channel, heatmaps ? o.out_dir : "");
      bgf::write_text_file(o.out_dir + "/channel.csv", res.csv);
      std::cout << "wrote " << o.out_dir << "/channel.csv\n"
                << "stationary reference: cross " << res.stationary_cross << ", same side "
                << res.stationary_same << '\n';
      for (const auto& row : res.rows)
        std::cout << "gap " << row.gap << ' ' << bgf::to_string(row.model) << ": cross "
                  << row.cross_correlation << ", same side " << row.same_side_correlation << '\n';
    } else if (*exp_horseshoe) {
      if (!fixed_hyper.empty()) {
        horseshoe.hyper_mode = bgf::Hyper{fixed_hyper[0], fixed_hyper[1], fixed_hyper[2]};
      } else {
        bgf::GridSpec grid;
        grid.coarse_points = grid_coarse;
        grid.refine_points = grid_refine;
        grid.coarse_points_noise = grid_coarse_noise;
        grid.refine_points_noise = grid_refine_noise;
        grid.length_scale = 1.0;  // prior median range is 1 in this study
        horseshoe.hyper_mode = bgf::MapOptions{bgf::PcPriors::horseshoe_defaults(), grid};
      }
      const auto res = bgf::run_horseshoe(horseshoe);
      ensure_dir(o.out_dir);
      bgf::write_text_file(o.out_dir + "/replicates.csv", res.replicates_csv);
      bgf::write_text_file(o.out_dir + "/summary.csv", res.summary_csv);
      std::cout << "wrote " << o.out_dir << "/replicates.csv and summary.csv\n"
                << "median RMSE: ms " << res.median_rmse(bgf::ModelKind::Stationary) << ", mb "
                << res.median_rmse(bgf::ModelKind::Barrier) << ", mn "
                << res.median_rmse(bgf::ModelKind::Neumann) << '\n'
                << "mb beats ms in "
                << res.wins(bgf::ModelKind::Barrier, bgf::ModelKind::Stationary) << " of "
                << horseshoe.replicates << " replicates; failures: " << res.failures << '\n';
      if (res.failures > 0) exit_code = 2;
    } else if (*fit_cmd) {
      const bgf::TriangleMesh mesh = bgf::load_mesh_json(o.mesh_file);
      ModelContext ctx = make_model_context(mesh, o.model);
      bgf::ObservationSet obs = load_observations_csv(obs_file);
      if (drop_outside) {
        const bgf::Projector p = bgf::project_points(ctx.mesh, obs.locations);
        bgf::ObservationSet kept;
        std::vector<double> vals;
        for (int i = 0; i < p.rows(); ++i) {
          if (!p.valid[i]) continue;
          kept.locations.push_back(obs.locations[i]);
          vals.push_back(obs.values[i]);
        }
        kept.values = Eigen::Map<bgf::Vector>(vals.data(), static_cast<int>(vals.size()));
        obs = std::move(kept);
      }
      bgf::HyperMode mode;
      if (map_mode) {
        bgf::GridSpec grid;
        const bgf::Rect bb = ctx.mesh.bounding_box();
        double median_range = prior_median_range > 0.0
                                  ? prior_median_range
                                  : 0.5 * std::max(bb.width(), bb.height());
        grid.length_scale = median_range;
        bgf::PcPriors priors;
        priors.rate_inv_range = std::log(2.0) * median_range;
        mode = bgf::MapOptions{priors, grid};
      } else {
        mode = bgf::Hyper{o.range, o.sigma_u, o.sigma_eps};
      }
      const bgf::FitResult f =
          bgf::fit(ctx.mesh, ctx.fem, ctx.kind, o.barrier_fraction, obs, mode);
      ensure_dir(o.out_dir);
      json j;
      j["model"] = bgf::to_string(f.kind);
      j["range"] = f.hyper.range;
      j["sigma_u"] = f.hyper.sigma_u;
      j["sigma_eps"] = f.hyper.sigma_eps;
      j["log_evidence"] = f.log_evidence;
      j["intercept_mean"] = f.intercept_mean;
      j["intercept_sd"] = f.intercept_sd;
      j["n_observations"] = obs.values.size();
      j["map"] = map_mode;
      bgf::write_text_file(o.out_dir + "/fit.json", j.dump(2) + "\n");
      bgf::CsvBuilder field({"node", "x", "y", "mean", "sd"});
      for (int i = 0; i < ctx.mesh.node_count(); ++i)
        field.add_row({std::to_string(i), bgf::format_double(ctx.mesh.vertices[i][0]),
                       bgf::format_double(ctx.mesh.vertices[i][1]), bgf::format_double(f.mean[i]),
                       bgf::format_double(f.sd[i])});
      bgf::write_text_file(o.out_dir + "/field.csv", field.str());
      std::cout << "wrote " << o.out_dir << "/fit.json and field.csv\n" << j.dump(2) << '\n';
    }
  } catch (const std::exception& e) {
    json err;
    err["error"] = e.what();
    std::cerr << err.dump() << '\n';
    return 1;
  }
  return exit_code;
}

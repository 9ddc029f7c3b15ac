#include "bgf/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <sstream>
#include <stdexcept>

#include "bgf/io.hpp"

namespace bgf {

namespace {

constexpr double kPi = 3.14159265358979323846;

// modified-horseshoe parameters
constexpr double kR0 = 0.1;
constexpr double kRMid = 0.5;
constexpr double kArmLength = 3.0;
constexpr double kSlope = 1.0;

double quantile(std::vector<double> v, double p) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const double pos = p * (v.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  const double frac = pos - lo;
  return v[lo] * (1.0 - frac) + v[hi] * frac;
}

int nearest_node(const TriangleMesh& mesh, const Point& p) {
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (int i = 0; i < mesh.node_count(); ++i) {
    const double dx = mesh.vertices[i][0] - p[0];
    const double dy = mesh.vertices[i][1] - p[1];
    const double d = dx * dx + dy * dy;
    if (d < best_d) {
      best_d = d;
      best = i;
    }
  }
  return best;
}

}  // namespace

HorseshoeValue horseshoe_truth(double x, double y) {
  double a, d;
  if (x >= 0.0) {
    if (y > 0.0) {
      a = kPi * kRMid / 2.0 + x;
      d = y - kRMid;
    } else {
      a = -kPi * kRMid / 2.0 - x;
      d = -y - kRMid;
    }
  } else {
    a = -std::atan(y / x) * kRMid;
    d = std::sqrt(x * x + y * y) - kRMid;
  }
  const double half_width = kRMid - kR0;
  const bool inside =
      std::abs(d) <= half_width &&
      (x <= kArmLength || (x - kArmLength) * (x - kArmLength) + d * d <= half_width * half_width);
  return {a * kSlope + d * d, inside};
}

Rect horseshoe_bbox() {
  const double w = kRMid + (kRMid - kR0);
  return Rect{-w, -w, kArmLength + (kRMid - kR0), w};
}

void HorseshoeConfig::validate() const {
  if (n_obs < 10) throw std::invalid_argument("horseshoe: n_obs must be >= 10");
  if (replicates < 1) throw std::invalid_argument("horseshoe: replicates must be >= 1");
  if (!(noise_sd >= 0.0)) throw std::invalid_argument("horseshoe: negative noise sd");
  if (eval_nx < 2 || eval_ny < 2) throw std::invalid_argument("horseshoe: evaluation grid too small");
  if (!(mesh_edge > 0.0) || !(extension >= 0.0))
    throw std::invalid_argument("horseshoe: bad mesh parameters");
}

double HorseshoeResult::median_rmse(ModelKind kind) const {
  std::vector<double> v;
  for (const auto& row : rows)
    if (row.model == kind && std::isfinite(row.rmse)) v.push_back(row.rmse);
  return quantile(std::move(v), 0.5);
}

int HorseshoeResult::wins(ModelKind a, ModelKind b) const {
  std::map<int, double> ra, rb;
  for (const auto& row : rows) {
    if (row.model == a) ra[row.replicate] = row.rmse;
    if (row.model == b) rb[row.replicate] = row.rmse;
  }
  int count = 0;
  for (const auto& [rep, va] : ra) {
    const auto it = rb.find(rep);
    if (it != rb.end() && va < it->second) ++count;
  }
  return count;
}

HorseshoeResult run_horseshoe(const HorseshoeConfig& config) {
  config.validate();

  const Rect bbox = horseshoe_bbox();
  const int nx = std::max(2, static_cast<int>(std::lround(bbox.width() / config.mesh_edge)));
  const int ny = std::max(2, static_cast<int>(std::lround(bbox.height() / config.mesh_edge)));
  const TriangleMesh base = build_regular_mesh(bbox, nx, ny, config.extension);
  const TriangleMesh marked =
      mark_by_predicate(base, [](double x, double y) { return !horseshoe_truth(x, y).inside; });
  const FemMatrices fem_full = assemble(marked);
  const RestrictedMesh water = restrict_to_subdomain(marked, 1);
  const FemMatrices fem_water = assemble(water.mesh);

  // Fixed evaluation grid: all in-domain bounding-box cell centers. Each
  // model predicts through its water representation: the centroid-marked
  // water triangles miss thin boundary slivers of the domain, and both
  // barrier-aware models (MB, MN) predict those points from the nearest
  // water node; the stationary model has no barrier and interpolates
  // everywhere.
  std::vector<Point> eval_pts;
  std::vector<double> truth;
  for (int j = 0; j < config.eval_ny; ++j) {
    const double y = bbox.ymin + (j + 0.5) * bbox.height() / config.eval_ny;
    for (int i = 0; i < config.eval_nx; ++i) {
      const double x = bbox.xmin + (i + 0.5) * bbox.width() / config.eval_nx;
      if (!horseshoe_truth(x, y).inside) continue;
      eval_pts.push_back({x, y});
      truth.push_back(horseshoe_truth(x, y).value);
    }
  }
  const Projector eval_full = project_points(marked, eval_pts);
  Projector eval_water = project_points(water.mesh, eval_pts);
  for (int i = 0; i < eval_water.rows(); ++i) {
    if (eval_water.valid[i]) continue;
    const int nearest = nearest_node(water.mesh, eval_pts[i]);
    eval_water.nodes[i] = {nearest, nearest, nearest};
    eval_water.weights[i] = {1.0, 0.0, 0.0};
    eval_water.valid[i] = 1;
  }
  // eval_water mapped back to full-mesh node indices, for the barrier model
  Projector eval_barrier = eval_water;
  for (int i = 0; i < eval_barrier.rows(); ++i)
    for (int k = 0; k < 3; ++k)
      eval_barrier.nodes[i][k] = water.parent_node[eval_barrier.nodes[i][k]];

  const auto model_list = {ModelKind::Stationary, ModelKind::Barrier, ModelKind::Neumann};

  HorseshoeResult result;
  result.rows.assign(static_cast<std::size_t>(config.replicates) * 3, HorseshoeReplicateRow{});
  int failures = 0;

#pragma omp parallel for schedule(dynamic) reduction(+ : failures)
  for (int rep = 0; rep < config.replicates; ++rep) {
    RngStream rng = RngStream::substream(config.seed, static_cast<std::uint64_t>(rep));

    ObservationSet obs;
    ObservationSet obs_water;
    bool prepared = false;
    try {
      obs.locations.reserve(config.n_obs);
      for (int i = 0; i < config.n_obs; ++i) {
        int attempts = 0;
        for (;;) {
          const double x = rng.uniform(bbox.xmin, bbox.xmax);
          const double y = rng.uniform(bbox.ymin, bbox.ymax);
          if (horseshoe_truth(x, y).inside) {
            obs.locations.push_back({x, y});
            break;
          }
          if (++attempts > 1000000)
            throw std::runtime_error("horseshoe: rejection sampling failed");
        }
      }
      obs.values.resize(config.n_obs);
      for (int i = 0; i < config.n_obs; ++i)
        obs.values[i] = horseshoe_truth(obs.locations[i][0], obs.locations[i][1]).value +
                        config.noise_sd * rng.normal();

      // observations in boundary slivers not covered by the water mesh are
      // dropped for the Neumann model only
      const Projector p = project_points(water.mesh, obs.locations);
      std::vector<double> vals;
      for (int i = 0; i < config.n_obs; ++i) {
        if (!p.valid[i]) continue;
        obs_water.locations.push_back(obs.locations[i]);
        vals.push_back(obs.values[i]);
      }
      obs_water.values = Eigen::Map<Vector>(vals.data(), static_cast<int>(vals.size()));
      prepared = true;
    } catch (const std::exception&) {
      prepared = false;
    }

    int slot = 0;
    for (ModelKind kind : model_list) {
      HorseshoeReplicateRow row;
      row.replicate = rep;
      row.model = kind;
      row.rmse = std::numeric_limits<double>::quiet_NaN();
      if (!prepared) {
        failures += 1;
        result.rows[static_cast<std::size_t>(rep) * 3 + slot] = row;
        ++slot;
        continue;
      }
      try {
        const bool neumann = kind == ModelKind::Neumann;
        const ObservationSet& o = neumann ? obs_water : obs;
        const FitResult f = fit(neumann ? water.mesh : marked, neumann ? fem_water : fem_full,
                                kind, config.barrier_fraction, o, config.hyper_mode, false);
        const Projector& eval_proj = neumann         ? eval_water
                                     : kind == ModelKind::Barrier ? eval_barrier
                                                                  : eval_full;
        const Prediction pred = predict(f, eval_proj, false);
        double sse = 0.0;
        for (std::size_t i = 0; i < truth.size(); ++i) {
          const double e = pred.mean[static_cast<int>(i)] - truth[i];
          sse += e * e;
        }
        row.rmse = std::sqrt(sse / truth.size());
        row.hyper = f.hyper;
        row.n_used = static_cast<int>(o.locations.size());
      } catch (const std::exception&) {
        failures += 1;
      }
      result.rows[static_cast<std::size_t>(rep) * 3 + slot] = row;
      ++slot;
    }
  }
  result.failures = failures;

  CsvBuilder rep_csv({"replicate", "model", "rmse", "range", "sigma_u", "sigma_eps", "n_used"});
  for (const auto& row : result.rows)
    rep_csv.add_row({std::to_string(row.replicate), to_string(row.model), format_double(row.rmse),
                     format_double(row.hyper.range), format_double(row.hyper.sigma_u),
                     format_double(row.hyper.sigma_eps), std::to_string(row.n_used)});
  result.replicates_csv = rep_csv.str();

  CsvBuilder sum_csv({"model", "min", "q1", "median", "q3", "max", "mean"});
  for (ModelKind kind : model_list) {
    std::vector<double> v;
    for (const auto& row : result.rows)
      if (row.model == kind && std::isfinite(row.rmse)) v.push_back(row.rmse);
    double mean = 0.0;
    for (double x : v) mean += x;
    if (!v.empty()) mean /= static_cast<double>(v.size());
    sum_csv.add_row({to_string(kind), format_double(quantile(v, 0.0)),
                     format_double(quantile(v, 0.25)), format_double(quantile(v, 0.5)),
                     format_double(quantile(v, 0.75)), format_double(quantile(v, 1.0)),
                     format_double(mean)});
  }
  result.summary_csv = sum_csv.str();
  return result;
}

void ChannelConfig::validate() const {
  if (!(domain_side > 0.0)) throw std::invalid_argument("channel: domain side must be positive");
  if (!(strip_y0 < strip_y1)) throw std::invalid_argument("channel: empty barrier strip");
  for (std::size_t i = 1; i < gap_widths.size(); ++i)
    if (gap_widths[i] > gap_widths[i - 1])
      throw std::invalid_argument("channel: gap widths must be nonincreasing");
  const bool a_below = probe_a[1] < strip_y0, b_above = probe_b[1] > strip_y1;
  const bool a_above = probe_a[1] > strip_y1, b_below = probe_b[1] < strip_y0;
  if (!((a_below && b_above) || (a_above && b_below)))
    throw std::invalid_argument("channel: probes must lie on opposite sides of the strip");
  if (!(range > 0.0) || !(mesh_edge > 0.0))
    throw std::invalid_argument("channel: bad range or mesh edge");
}

ChannelResult run_channel(const ChannelConfig& config, const std::string& heatmap_dir) {
  config.validate();

  const int n_cells = std::max(2, static_cast<int>(std::lround(config.domain_side / config.mesh_edge)));
  const Rect bbox{0.0, 0.0, config.domain_side, config.domain_side};
  const TriangleMesh base = build_regular_mesh(bbox, n_cells, n_cells, config.extension);
  const double gap_center = config.domain_side / 2.0;

  const BarrierSpec spec{config.range, config.barrier_fraction, config.sigma_u, {}};

  ChannelResult result;
  CsvBuilder csv({"gap_width", "model", "cross_correlation", "same_side_correlation"});

  auto probe_correlations = [&](const PrecisionOperator& op, const TriangleMesh& mesh) {
    const int a = nearest_node(mesh, config.probe_a);
    const int b = nearest_node(mesh, config.probe_b);
    const int c = nearest_node(mesh, config.probe_same_side);
    return std::pair<double, double>{op.correlation(a, b), op.correlation(a, c)};
  };

  // no-barrier reference: the Barrier construction on an unmarked mesh is the
  // stationary model
  {
    const FemMatrices fem = assemble(base);
    const PrecisionOperator op = assemble_Q(fem, spec, ModelKind::Stationary, base.id());
    const auto [cross, same] = probe_correlations(op, base);
    result.stationary_cross = cross;
    result.stationary_same = same;
  }

  for (double gap : config.gap_widths) {
    const TriangleMesh marked = mark_by_predicate(base, [&](double x, double y) {
      return y >= config.strip_y0 && y <= config.strip_y1 && std::abs(x - gap_center) >= gap / 2.0;
    });
    const FemMatrices fem = assemble(marked, 2);
    const PrecisionOperator mb = assemble_Q(fem, spec, ModelKind::Barrier, marked.id());
    const auto [mb_cross, mb_same] = probe_correlations(mb, marked);
    result.rows.push_back({gap, ModelKind::Barrier, mb_cross, mb_same});

    const RestrictedMesh water = restrict_to_subdomain(marked, 1);
    const FemMatrices fem_w = assemble(water.mesh);
    const PrecisionOperator mn = assemble_Q(fem_w, BarrierSpec{config.range, 1.0, config.sigma_u, {}},
                                            ModelKind::Neumann, water.mesh.id());
    const auto [mn_cross, mn_same] = probe_correlations(mn, water.mesh);
    result.rows.push_back({gap, ModelKind::Neumann, mn_cross, mn_same});

    if (!heatmap_dir.empty()) {
      const auto surf = mb.correlation_surface(nearest_node(marked, config.probe_a));
      const auto img = rasterize_field(marked, surf, 400, 400, 0.1, 1.0);
      std::ostringstream name;
      name << heatmap_dir << "/channel_corr_mb_gap" << format_double(gap) << ".pgm";
      write_pgm(name.str(), 400, 400, img);
      const auto surf_n = mn.correlation_surface(nearest_node(water.mesh, config.probe_a));
      const auto img_n = rasterize_field(water.mesh, surf_n, 400, 400, 0.1, 1.0);
      std::ostringstream name_n;
      name_n << heatmap_dir << "/channel_corr_mn_gap" << format_double(gap) << ".pgm";
      write_pgm(name_n.str(), 400, 400, img_n);
    }
  }

  for (const auto& row : result.rows)
    csv.add_row({format_double(row.gap), to_string(row.model),
                 format_double(row.cross_correlation), format_double(row.same_side_correlation)});
  // last row: stationary reference, gap code -1 (no barrier anywhere)
  csv.add_row({"-1", "ms", format_double(result.stationary_cross),
               format_double(result.stationary_same)});
  result.csv = csv.str();
  return result;
}

StationaryValidationResult run_stationary_validation(const StationaryValidationSpec& spec,
                                                     double range, double sigma_u) {
  const double edge = std::max(spec.bbox.width() / spec.nx, spec.bbox.height() / spec.ny);
  if (edge > range / 5.0)
    throw std::invalid_argument("stationary validation: mesh edge must be <= range/5");
  if (spec.extension < 1.5 * range)
    throw std::invalid_argument("stationary validation: extension must be >= 1.5 * range");

  const TriangleMesh mesh = build_regular_mesh(spec.bbox, spec.nx, spec.ny, spec.extension);
  const FemMatrices fem = assemble(mesh);
  const PrecisionOperator op =
      assemble_Q(fem, BarrierSpec{range, 1.0, sigma_u, {}}, ModelKind::Stationary, mesh.id());

  const Point center{(spec.bbox.xmin + spec.bbox.xmax) / 2.0,
                     (spec.bbox.ymin + spec.bbox.ymax) / 2.0};
  const int center_node = nearest_node(mesh, center);
  const Vector corr = op.correlation_surface(center_node);
  const Vector sd = op.marginal_sd();

  StationaryValidationResult result;
  const Point c = mesh.vertices[center_node];

  std::map<long, std::array<double, 3>> bins;  // index -> (count, sum d, sum corr)
  result.max_abs_error_band = 0.0;
  for (int i = 0; i < mesh.node_count(); ++i) {
    const double dx = mesh.vertices[i][0] - c[0];
    const double dy = mesh.vertices[i][1] - c[1];
    const double d = std::sqrt(dx * dx + dy * dy);
    auto& b = bins[std::lround(d / edge)];
    b[0] += 1.0;
    b[1] += d;
    b[2] += corr[i];
    if (d >= 0.3 * range && d <= 2.0 * range)
      result.max_abs_error_band =
          std::max(result.max_abs_error_band, std::abs(corr[i] - matern_correlation(d, range)));
  }

  CsvBuilder csv({"distance", "empirical", "analytic", "abs_error"});
  for (const auto& [idx, b] : bins) {
    StationaryValidationResult::Bin bin;
    bin.distance = b[1] / b[0];
    bin.empirical = b[2] / b[0];
    bin.analytic = matern_correlation(bin.distance, range);
    bin.abs_error = std::abs(bin.empirical - bin.analytic);
    result.bins.push_back(bin);
    csv.add_row({format_double(bin.distance), format_double(bin.empirical),
                 format_double(bin.analytic), format_double(bin.abs_error)});
  }
  result.csv = csv.str();

  result.interior_sd_min = std::numeric_limits<double>::infinity();
  result.interior_sd_max = 0.0;
  for (int i = 0; i < mesh.node_count(); ++i) {
    const auto& v = mesh.vertices[i];
    if (v[0] < spec.bbox.xmin || v[0] > spec.bbox.xmax || v[1] < spec.bbox.ymin ||
        v[1] > spec.bbox.ymax)
      continue;
    result.interior_sd_min = std::min(result.interior_sd_min, sd[i]);
    result.interior_sd_max = std::max(result.interior_sd_max, sd[i]);
  }
  return result;
}

}  // namespace bgf

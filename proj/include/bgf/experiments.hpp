#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bgf/inference.hpp"

namespace bgf {

struct HorseshoeValue {
  double value = 0.0;
  bool inside = false;
};

/// Modified horseshoe test surface with parameters r0 = 0.1, r_mid = 0.5,
/// l = 3, b = 1. Points outside the horseshoe get inside = false.
HorseshoeValue horseshoe_truth(double x, double y);
Rect horseshoe_bbox();

struct HorseshoeConfig {
  double noise_sd = 0.1;
  int n_obs = 600;
  int replicates = 100;
  std::uint64_t seed = 1;
  int eval_nx = 200;
  int eval_ny = 100;
  double mesh_edge = 0.1;
  double extension = 1.5;  // 1.5 x prior median range
  double barrier_fraction = 0.1;
  // 9 points per axis for range and sigma_u with a dense refinement pass
  // (their evidence surfaces are flat, and argmax quantization would drown
  // the model differences); sigma_eps is sharply identified and gets 7 + 3.
  HyperMode hyper_mode =
      MapOptions{PcPriors::horseshoe_defaults(),
                 GridSpec{9, 9, 1.0, 0.1, 10.0, 0.01, 10.0, 0.01, 10.0, 7, 3}};
  void validate() const;
};

struct HorseshoeReplicateRow {
  int replicate = 0;
  ModelKind model = ModelKind::Stationary;
  double rmse = 0.0;
  Hyper hyper;
  int n_used = 0;
};

struct HorseshoeResult {
  std::vector<HorseshoeReplicateRow> rows;  // replicate-major; model order ms, mb, mn
  int failures = 0;
  std::string replicates_csv;
  std::string summary_csv;

  double median_rmse(ModelKind kind) const;
  int wins(ModelKind a, ModelKind b) const;  // replicates where rmse(a) < rmse(b)
};

HorseshoeResult run_horseshoe(const HorseshoeConfig& config);

struct ChannelConfig {
  double domain_side = 10.0;
  double strip_y0 = 5.0, strip_y1 = 5.5;
  std::vector<double> gap_widths = {0.4, 0.2, 0.1, 0.0};
  Point probe_a = {5.0, 4.5};
  Point probe_b = {5.0, 6.0};          // opposite side of the strip
  Point probe_same_side = {6.5, 4.5};  // same distance from probe_a as probe_b
  double range = 5.0;
  double sigma_u = 1.0;
  double barrier_fraction = 0.1;
  double mesh_edge = 0.125;
  double extension = 7.5;  // 1.5 x range
  bool heatmaps = false;
  void validate() const;
};

struct ChannelRow {
  double gap = 0.0;
  ModelKind model = ModelKind::Barrier;
  double cross_correlation = 0.0;
  double same_side_correlation = 0.0;
};

struct ChannelResult {
  std::vector<ChannelRow> rows;
  double stationary_cross = 0.0;  // no-barrier reference at the probe pair
  double stationary_same = 0.0;
  std::string csv;
};

/// The barrier strip spans the full extended mesh horizontally, minus a gap
/// of the given width centered at x = domain_side/2.
ChannelResult run_channel(const ChannelConfig& config, const std::string& heatmap_dir = "");

struct StationaryValidationSpec {
  Rect bbox{0.0, 0.0, 10.0, 10.0};
  int nx = 50, ny = 50;
  double extension = 4.5;
};

struct StationaryValidationResult {
  struct Bin {
    double distance = 0.0;
    double empirical = 0.0;
    double analytic = 0.0;
    double abs_error = 0.0;
  };
  std::vector<Bin> bins;
  double max_abs_error_band = 0.0;  // per-node error over d in [0.3r, 2r]
  double interior_sd_min = 0.0;     // marginal sd over the unextended bbox
  double interior_sd_max = 0.0;
  std::string csv;
};

StationaryValidationResult run_stationary_validation(const StationaryValidationSpec& spec,
                                                     double range, double sigma_u);

}  // namespace bgf

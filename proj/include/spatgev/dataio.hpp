// dataio.hpp
// CSV ingestion and export, track-record gridding, run configuration, and
// fit serialization for the CLI.

#ifndef SPATGEV_DATAIO_HPP
#define SPATGEV_DATAIO_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "spatgev/fit.hpp"
#include "spatgev/model.hpp"

namespace spatgev {

// Reads `lon,lat,value` (one observation per row, one site per row) or
// `lon,lat,value1;value2;...` (ragged per-site) CSV. Fails fast with the
// offending line number.
SiteDataset ingest_csv(const std::string& path);

// Ragged per-site CSV; round-trips through ingest_csv.
void export_dataset_csv(const SiteDataset& data, const std::string& path);

struct TrackRecord {
  double lon = 0.0;
  double lat = 0.0;
  double value = 0.0;
};

std::vector<TrackRecord> ingest_records_csv(const std::string& path);

struct GridSpec {
  double cell_deg = 3.0;
  int min_records = 20;
  double lon_min = -180.0, lon_max = 180.0;
  double lat_min = -90.0, lat_max = 90.0;

  void validate() const;
};

struct GridResult {
  SiteDataset data;        // one site per kept cell, obs = [cell maximum]
  std::vector<int> counts; // record count per kept cell
};

// Bins records into cell_deg x cell_deg cells over the bbox, drops cells
// with fewer than min_records records, keeps the per-cell maximum as the
// single observation at the cell center. Cells are half-open [lo, hi)
// except the global upper boundary, which is closed.
GridResult grid_maxima(const std::vector<TrackRecord>& records,
                       const GridSpec& spec);

struct RunConfig {
  std::string model = "m2";
  std::string kernel_form = "exponential";
  double jitter = -1.0;  // < 0 means the kernel default
  double outer_grad_tol = 1e-5;
  int outer_max_evals = 500;
  double inner_grad_tol = 1e-8;
  int inner_max_iter = 100;
  int n_sim = 10000;
  std::uint64_t seed = 0;
  double prob_upper = 0.1;

  ModelSpec model_spec() const { return ModelSpec::from_name(model); }
  KernelSettings kernel_settings() const;
  laplace::OuterOptions outer_options() const;
  // Serialized form; re-validates against the schema.
  std::string to_json() const;
};

// Parses and schema-validates a config JSON; unknown keys are rejected.
RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::string& path);

// 17 significant digits, round-half-even (IEEE shortest-exact superset).
std::string format_g17(double v);

// Writes via a temp file + rename so readers never see partial output.
void atomic_write(const std::string& path, const std::string& content);

void save_fit_json(const GevFit& fit, const Coords& coords,
                   const std::string& path);
// Returns the fit and the site coordinates it was computed on.
std::pair<GevFit, Coords> load_fit_json(const std::string& path);

}  // namespace spatgev

#endif  // SPATGEV_DATAIO_HPP

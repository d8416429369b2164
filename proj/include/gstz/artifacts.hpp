#pragma once

#include <fstream>
#include <string>
#include <vector>

#include "gstz/grid.hpp"
#include "gstz/irl.hpp"
#include "gstz/sim.hpp"

namespace gstz {

// Costmap export: magic "STCM", u32 T, u32 height, u32 width, f32 resolution,
// then T*height*width little-endian f32, row-major.
void export_costmap_stcm(const SpatioTemporalCostmap& costmap,
                         const std::string& path);
SpatioTemporalCostmap import_costmap_stcm(const std::string& path);

// Per-timestep 8-bit PGM (cost 0 -> white) with the config hash in a header
// comment.
void export_costmap_pgm(const SpatioTemporalCostmap& costmap, int t,
                        const std::string& path, const std::string& hash_hex);

// Native demonstration dataset, f64 end to end (exact round trip).
void save_demonstrations(const std::vector<Demonstration>& demos,
                         const std::string& path);
std::vector<Demonstration> load_demonstrations_native(const std::string& path);

struct NgsimLoadStats {
  int lane_changes = 0;
  int windows_dropped = 0;
  int tuples = 0;
};

// NGSIM-style CSV: columns vehicle_id,frame,x,y,v,lane_id at 10 Hz. Each lane
// change contributes an 18 s window (9 s either side of the change) sliced
// into sliding T-step tuples; windows with frame gaps are dropped and
// counted. Schema violations raise with the offending row and column.
std::vector<Demonstration> load_demonstrations_ngsim(
    const std::string& path, const LaneGeometry& lanes, int horizon,
    const GridSpec& spec, NgsimLoadStats* stats = nullptr);

// Minimal CSV writer; every file starts with "# config_hash=<hex>".
class CsvWriter {
 public:
  CsvWriter(const std::string& path, const std::string& hash_hex,
            const std::vector<std::string>& columns);
  void row(const std::vector<std::string>& cells);
  void row_values(const std::vector<double>& values);
  static std::string format(double v);

 private:
  std::string path_;
  std::ofstream os_;
  int columns_ = 0;
};

// Self-contained SVG artifacts (no rendering dependency).
void svg_costmap(const SpatioTemporalCostmap& costmap, int t,
                 const std::string& path, const std::string& title,
                 const std::string& hash_hex);
void svg_trajectory(const std::vector<StepLog>& logs, const LaneGeometry& lanes,
                    const std::string& path, const std::string& title,
                    const std::string& hash_hex);
void svg_bars(const std::vector<std::string>& labels,
              const std::vector<double>& values, const std::string& path,
              const std::string& title, const std::string& hash_hex);

}  // namespace gstz

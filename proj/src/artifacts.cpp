#include "gstz/artifacts.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace gstz {

namespace {

void write_u32(std::ostream& os, uint32_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
void write_f32(std::ostream& os, float v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
void write_f64(std::ostream& os, double v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
uint32_t read_u32(std::istream& is) {
  uint32_t v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof(v));
  return v;
}
float read_f32(std::istream& is) {
  float v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof(v));
  return v;
}
double read_f64(std::istream& is) {
  double v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof(v));
  return v;
}

}  // namespace

// ---------------------------------------------------------------------------
// STCM / PGM

void export_costmap_stcm(const SpatioTemporalCostmap& cm,
                         const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write costmap: " + path);
  os.write("STCM", 4);
  write_u32(os, static_cast<uint32_t>(cm.horizon));
  write_u32(os, static_cast<uint32_t>(cm.spec.height));
  write_u32(os, static_cast<uint32_t>(cm.spec.width));
  write_f32(os, static_cast<float>(cm.spec.resolution));
  for (double v : cm.maps.data()) write_f32(os, static_cast<float>(v));
  if (!os) throw std::runtime_error("costmap write failed: " + path);
}

SpatioTemporalCostmap import_costmap_stcm(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open costmap: " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "STCM", 4) != 0) {
    throw std::runtime_error("bad costmap magic: " + path);
  }
  SpatioTemporalCostmap cm;
  cm.horizon = static_cast<int>(read_u32(is));
  cm.spec.height = static_cast<int>(read_u32(is));
  cm.spec.width = static_cast<int>(read_u32(is));
  cm.spec.resolution = static_cast<double>(read_f32(is));
  cm.maps = ChannelStack(cm.horizon, cm.spec.height, cm.spec.width);
  for (double& v : cm.maps.data()) v = static_cast<double>(read_f32(is));
  if (!is) throw std::runtime_error("truncated costmap: " + path);
  return cm;
}

void export_costmap_pgm(const SpatioTemporalCostmap& cm, int t,
                        const std::string& path, const std::string& hash_hex) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write pgm: " + path);
  os << "P5\n# config_hash=" << hash_hex << "\n"
     << cm.spec.width << " " << cm.spec.height << "\n255\n";
  const auto map = cm.maps.channel(t);
  // Row 0 holds ego-left; flip so left-of-ego renders at the top.
  for (int r = cm.spec.height - 1; r >= 0; --r) {
    for (int c = 0; c < cm.spec.width; ++c) {
      const double j = map[static_cast<size_t>(r) * cm.spec.width + c];
      const int value = 255 - std::clamp(static_cast<int>(j * 255.0), 0, 255);
      os.put(static_cast<char>(value));
    }
  }
}

// ---------------------------------------------------------------------------
// Native demonstration dataset

void save_demonstrations(const std::vector<Demonstration>& demos,
                         const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write dataset: " + path);
  os.write("GDEM", 4);
  write_u32(os, 1);
  write_u32(os, static_cast<uint32_t>(demos.size()));
  for (const Demonstration& d : demos) {
    write_u32(os, static_cast<uint32_t>(d.goal.source_lane));
    write_u32(os, static_cast<uint32_t>(d.goal.target_lane));
    write_u32(os, static_cast<uint32_t>(d.obs.spec.height));
    write_u32(os, static_cast<uint32_t>(d.obs.spec.width));
    write_f64(os, d.obs.spec.resolution);
    write_u32(os, static_cast<uint32_t>(d.obs.channels.channels()));
    for (double v : d.obs.channels.data()) write_f64(os, v);
    write_u32(os, static_cast<uint32_t>(d.states.size()));
    for (const VehicleState& s : d.states) {
      write_f64(os, s.x);
      write_f64(os, s.y);
      write_f64(os, s.psi);
      write_f64(os, s.v);
      write_f64(os, s.beta);
    }
  }
  if (!os) throw std::runtime_error("dataset write failed: " + path);
}

std::vector<Demonstration> load_demonstrations_native(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open dataset: " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "GDEM", 4) != 0) {
    throw std::runtime_error("bad dataset magic: " + path);
  }
  if (read_u32(is) != 1) throw std::runtime_error("unsupported dataset version");
  const uint32_t count = read_u32(is);
  std::vector<Demonstration> demos(count);
  for (Demonstration& d : demos) {
    d.goal.source_lane = static_cast<int>(read_u32(is));
    d.goal.target_lane = static_cast<int>(read_u32(is));
    d.obs.spec.height = static_cast<int>(read_u32(is));
    d.obs.spec.width = static_cast<int>(read_u32(is));
    d.obs.spec.resolution = read_f64(is);
    const uint32_t channels = read_u32(is);
    d.obs.channels =
        ChannelStack(channels, d.obs.spec.height, d.obs.spec.width);
    for (double& v : d.obs.channels.data()) v = read_f64(is);
    const uint32_t n_states = read_u32(is);
    d.states.resize(n_states);
    for (VehicleState& s : d.states) {
      s.x = read_f64(is);
      s.y = read_f64(is);
      s.psi = read_f64(is);
      s.v = read_f64(is);
      s.beta = read_f64(is);
    }
    if (!is) throw std::runtime_error("truncated dataset: " + path);
  }
  return demos;
}

// ---------------------------------------------------------------------------
// NGSIM-style CSV

namespace {

struct NgsimRow {
  long vehicle_id;
  long frame;
  double x, y, v;
  int lane_id;
};

NgsimRow parse_ngsim_row(const std::string& line, int lineno) {
  static const char* kCols[] = {"vehicle_id", "frame", "x", "y", "v", "lane_id"};
  NgsimRow row{};
  std::istringstream ss(line);
  std::string cell;
  double values[6];
  for (int c = 0; c < 6; ++c) {
    if (!std::getline(ss, cell, ',')) {
      throw std::runtime_error("ngsim row " + std::to_string(lineno) +
                               ": missing column '" + kCols[c] + "'");
    }
    try {
      size_t pos = 0;
      values[c] = std::stod(cell, &pos);
      if (pos != cell.size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw std::runtime_error("ngsim row " + std::to_string(lineno) +
                               ": column '" + kCols[c] + "' is not numeric: '" +
                               cell + "'");
    }
  }
  std::string extra;
  if (std::getline(ss, extra, ',')) {
    throw std::runtime_error("ngsim row " + std::to_string(lineno) +
                             ": unexpected extra column");
  }
  row.vehicle_id = static_cast<long>(values[0]);
  row.frame = static_cast<long>(values[1]);
  row.x = values[2];
  row.y = values[3];
  row.v = values[4];
  row.lane_id = static_cast<int>(values[5]);
  return row;
}

}  // namespace

std::vector<Demonstration> load_demonstrations_ngsim(
    const std::string& path, const LaneGeometry& lanes, int horizon,
    const GridSpec& spec, NgsimLoadStats* stats) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open ngsim csv: " + path);
  constexpr double kDt = 0.1;
  constexpr int kHalfWindow = 90;  // 9 s either side of the lane change

  std::map<long, std::vector<NgsimRow>> by_vehicle;
  std::map<long, std::vector<NgsimRow>> by_frame;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    if (lineno == 1 && line.find("vehicle_id") != std::string::npos) {
      continue;  // header
    }
    const NgsimRow row = parse_ngsim_row(line, lineno);
    by_vehicle[row.vehicle_id].push_back(row);
    by_frame[row.frame].push_back(row);
  }

  NgsimLoadStats local;
  std::vector<Demonstration> demos;
  for (auto& [vid, rows] : by_vehicle) {
    std::sort(rows.begin(), rows.end(),
              [](const NgsimRow& a, const NgsimRow& b) {
                return a.frame < b.frame;
              });
    for (size_t i = 1; i < rows.size(); ++i) {
      if (rows[i].lane_id == rows[i - 1].lane_id) continue;
      ++local.lane_changes;
      const int source = rows[i - 1].lane_id;
      const int target = rows[i].lane_id;
      const long mid_frame = rows[i].frame;

      // Collect the 18 s window and reject on gaps.
      std::vector<const NgsimRow*> window;
      bool ok = true;
      size_t cursor = 0;
      for (long f = mid_frame - kHalfWindow; f <= mid_frame + kHalfWindow;
           ++f) {
        while (cursor < rows.size() && rows[cursor].frame < f) ++cursor;
        if (cursor >= rows.size() || rows[cursor].frame != f) {
          ok = false;
          break;
        }
        window.push_back(&rows[cursor]);
      }
      if (!ok) {
        ++local.windows_dropped;
        continue;
      }

      // Heading from forward differences; stationary rows keep the previous.
      std::vector<VehicleState> states(window.size());
      for (size_t k = 0; k < window.size(); ++k) {
        states[k].x = window[k]->x;
        states[k].y = window[k]->y;
        states[k].v = window[k]->v;
        if (k + 1 < window.size()) {
          const double dx = window[k + 1]->x - window[k]->x;
          const double dy = window[k + 1]->y - window[k]->y;
          states[k].psi = (dx * dx + dy * dy > 1e-12)
                              ? std::atan2(dy, dx)
                              : (k ? states[k - 1].psi : lanes.direction);
        } else {
          states[k].psi = states[k - 1].psi;
        }
      }

      for (size_t start = 0; start + horizon < window.size(); ++start) {
        Demonstration d;
        d.goal = GoalLabel{source - 1, target - 1};  // NGSIM lanes are 1-based
        d.states.assign(states.begin() + start,
                        states.begin() + start + horizon + 1);
        // Other vehicles present at the tuple's first frame.
        std::vector<ActorState> others;
        const long f0 = window[start]->frame;
        if (auto it = by_frame.find(f0); it != by_frame.end()) {
          for (const NgsimRow& r : it->second) {
            if (r.vehicle_id == vid) continue;
            ActorState a;
            a.state.x = r.x;
            a.state.y = r.y;
            a.state.v = r.v;
            a.state.psi = lanes.direction;
            others.push_back(a);
          }
        }
        d.obs = rasterize(d.states.front(), 0.0, others, lanes, d.goal, spec);
        demos.push_back(std::move(d));
        ++local.tuples;
      }
    }
  }
  if (stats) *stats = local;
  return demos;
}

// ---------------------------------------------------------------------------
// CSV

CsvWriter::CsvWriter(const std::string& path, const std::string& hash_hex,
                     const std::vector<std::string>& columns)
    : path_(path), os_(path, std::ios::trunc | std::ios::binary),
      columns_(static_cast<int>(columns.size())) {
  if (!os_) throw std::runtime_error("cannot write csv: " + path);
  os_ << "# config_hash=" << hash_hex << "\n";
  for (size_t i = 0; i < columns.size(); ++i) {
    os_ << columns[i] << ((i + 1 == columns.size()) ? '\n' : ',');
  }
}

std::string CsvWriter::format(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

void CsvWriter::row(const std::vector<std::string>& cells) {
  if (static_cast<int>(cells.size()) != columns_) {
    throw std::runtime_error("csv row width mismatch in " + path_);
  }
  for (size_t i = 0; i < cells.size(); ++i) {
    os_ << cells[i] << ((i + 1 == cells.size()) ? '\n' : ',');
  }
  os_.flush();
}

void CsvWriter::row_values(const std::vector<double>& values) {
  std::vector<std::string> cells;
  cells.reserve(values.size());
  for (double v : values) cells.push_back(format(v));
  row(cells);
}

// ---------------------------------------------------------------------------
// SVG

namespace {

std::ofstream open_svg(const std::string& path, int w, int h,
                       const std::string& title, const std::string& hash_hex) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write svg: " + path);
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w
     << "\" height=\"" << h << "\">\n"
     << "<!-- config_hash=" << hash_hex << " -->\n"
     << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
     << "<text x=\"8\" y=\"16\" font-size=\"13\" font-family=\"monospace\">"
     << title << "</text>\n";
  return os;
}

}  // namespace

void svg_costmap(const SpatioTemporalCostmap& cm, int t,
                 const std::string& path, const std::string& title,
                 const std::string& hash_hex) {
  const int cell = 4;
  const int w = cm.spec.width * cell + 16;
  const int h = cm.spec.height * cell + 40;
  std::ofstream os = open_svg(path, w, h, title, hash_hex);
  const auto map = cm.maps.channel(t);
  for (int r = 0; r < cm.spec.height; ++r) {
    for (int c = 0; c < cm.spec.width; ++c) {
      const double j = map[static_cast<size_t>(r) * cm.spec.width + c];
      const int v = 255 - std::clamp(static_cast<int>(j * 255.0), 0, 255);
      // flip rows so ego-left renders on top
      const int y = (cm.spec.height - 1 - r) * cell + 24;
      os << "<rect x=\"" << 8 + c * cell << "\" y=\"" << y << "\" width=\""
         << cell << "\" height=\"" << cell << "\" fill=\"rgb(" << v << ","
         << v << ",0)\"/>\n";
    }
  }
  os << "</svg>\n";
}

void svg_trajectory(const std::vector<StepLog>& logs,
                    const LaneGeometry& lanes, const std::string& path,
                    const std::string& title, const std::string& hash_hex) {
  if (logs.empty()) throw std::runtime_error("empty episode log");
  double min_x = logs.front().ego.x, max_x = min_x;
  for (const StepLog& l : logs) {
    min_x = std::min(min_x, l.ego.x);
    max_x = std::max(max_x, l.ego.x);
  }
  min_x -= 10;
  max_x += 10;
  const double road_w = lanes.n_lanes * lanes.lane_width;
  const double scale = 900.0 / std::max(1.0, max_x - min_x);
  const int h = static_cast<int>(road_w * scale) + 60;
  std::ofstream os = open_svg(path, 932, h, title, hash_hex);
  auto px = [&](double x) { return 16 + (x - min_x) * scale; };
  auto py = [&](double y) { return 30 + (road_w - y) * scale; };
  for (int i = 0; i <= lanes.n_lanes; ++i) {
    const double y = i * lanes.lane_width;
    os << "<line x1=\"" << px(min_x) << "\" y1=\"" << py(y) << "\" x2=\""
       << px(max_x) << "\" y2=\"" << py(y)
       << "\" stroke=\"gray\" stroke-dasharray=\""
       << (i == 0 || i == lanes.n_lanes ? "none" : "6,6") << "\"/>\n";
  }
  os << "<polyline fill=\"none\" stroke=\"green\" stroke-width=\"2\" points=\"";
  for (const StepLog& l : logs) os << px(l.ego.x) << "," << py(l.ego.y) << " ";
  os << "\"/>\n</svg>\n";
}

void svg_bars(const std::vector<std::string>& labels,
              const std::vector<double>& values, const std::string& path,
              const std::string& title, const std::string& hash_hex) {
  const int n = static_cast<int>(values.size());
  const int bar_w = 64, gap = 28, h = 260;
  const int w = 32 + n * (bar_w + gap);
  std::ofstream os = open_svg(path, w, h + 70, title, hash_hex);
  double vmax = 1e-9;
  for (double v : values) vmax = std::max(vmax, std::abs(v));
  for (int i = 0; i < n; ++i) {
    const double frac = std::abs(values[i]) / vmax;
    const int bh = static_cast<int>(frac * h);
    const int x = 24 + i * (bar_w + gap);
    os << "<rect x=\"" << x << "\" y=\"" << 30 + (h - bh) << "\" width=\""
       << bar_w << "\" height=\"" << bh << "\" fill=\"steelblue\"/>\n"
       << "<text x=\"" << x << "\" y=\"" << 30 + h + 16
       << "\" font-size=\"11\" font-family=\"monospace\">" << labels[i]
       << "</text>\n"
       << "<text x=\"" << x << "\" y=\"" << 30 + (h - bh) - 4
       << "\" font-size=\"11\" font-family=\"monospace\">"
       << CsvWriter::format(values[i]) << "</text>\n";
  }
  os << "</svg>\n";
}

}  // namespace gstz

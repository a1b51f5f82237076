#include "mtmc/model.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

namespace mtmc {

namespace {

constexpr std::array<char, 4> kEmbeddingMagic = {'E', 'M', 'B', '1'};

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

bool skippable(std::string_view line) {
  line = trim(line);
  return line.empty() || line.front() == '#';
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    auto comma = line.find(',', start);
    fields.push_back(trim(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return fields;
}

template <typename T>
bool parse_number(std::string_view text, T& out) {
  if (text.empty()) return false;
  if (text.front() == '+') text.remove_prefix(1);
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
  return ec == std::errc() && ptr == text.data() + text.size();
}

std::string line_error(std::size_t line_number, const std::string& what) {
  return "line " + std::to_string(line_number) + ": " + what;
}

void write_file(const std::filesystem::path& path, const std::string& contents, bool binary) {
  std::ofstream out(path, binary ? std::ios::binary | std::ios::trunc : std::ios::trunc);
  if (!out) throw DataError("cannot open " + path.string() + " for writing");
  out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
  if (!out) throw DataError("failed writing " + path.string());
}

std::uint32_t load_u32_le(const char* p) {
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(p[i]);
  return v;
}

void store_u32_le(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

}  // namespace

double distance(const WorldPoint& a, const WorldPoint& b) { return std::hypot(a.x - b.x, a.y - b.y); }

void EmbeddingSet::validate() const {
  if (rows.cols() == 0 && rows.rows() > 0) throw DataError("embedding dim must be positive");
  if (!rows.allFinite()) throw DataError("non-finite embedding value");
  if (!identity.empty()) {
    if (identity.size() != count()) throw DataError("labels do not cover every embedding row");
    for (int label : identity)
      if (label < 0) throw DataError("negative identity label");
  }
}

std::set<int> Trajectory::cameras() const {
  std::set<int> out;
  for (const auto& d : detections) out.insert(d.camera);
  return out;
}

void validate_trajectory(const Trajectory& trajectory) {
  if (trajectory.detections.empty()) throw DataError("empty trajectory " + std::to_string(trajectory.identity));
  std::map<int, std::int64_t> last_frame;
  for (const auto& d : trajectory.detections) {
    if (!(d.box.width > 0.0) || !(d.box.height > 0.0)) throw DataError("non-positive box");
    auto it = last_frame.find(d.camera);
    if (it != last_frame.end() && d.frame <= it->second)
      throw DataError("trajectory " + std::to_string(trajectory.identity) + " is not strictly increasing in frame on camera " +
                      std::to_string(d.camera));
    last_frame[d.camera] = d.frame;
  }
}

void ScenarioConfig::validate() const {
  if (fps <= 0) throw DataError("fps must be positive");
  if (camera_count <= 0) throw DataError("camera_count must be positive");
  if (!(window_tracklet_s > 0.0) || !(window_tracklet_s <= window_sc_s) || !(window_sc_s <= window_mc_s))
    throw DataError("window widths must satisfy 0 < tracklet <= single-camera <= multi-camera");
  if (!(overlap_fraction >= 0.0 && overlap_fraction < 1.0)) throw DataError("overlap_fraction must lie in [0,1)");
  if (!(t_a > 0.0)) throw DataError("t_a must be positive");
  if (!(t_m > 0.0) || !(alpha > 0.0) || !(beta >= 0.0) || !(speed_limit > 0.0))
    throw DataError("motion parameters require t_m > 0, alpha > 0, beta >= 0, speed_limit > 0");
  if (!(margin >= 0.0)) throw DataError("margin must be non-negative");
  if (P <= 0 || K <= 0 || H <= 0) throw DataError("P, K, H must be positive");
  if (exact_limit < 1) throw DataError("exact_limit must be at least 1");
  if (threads < 1) throw DataError("threads must be at least 1");
}

std::int64_t seconds_to_frames(double seconds, int fps) {
  return static_cast<std::int64_t>(std::floor(seconds * fps + 0.5));
}

std::vector<std::pair<std::string, std::string>> parse_key_values(const std::string& text) {
  std::vector<std::pair<std::string, std::string>> out;
  std::istringstream in(text);
  std::string raw;
  std::size_t line_number = 0;
  while (std::getline(in, raw)) {
    ++line_number;
    if (skippable(raw)) continue;
    std::string_view line = trim(raw);
    auto eq = line.find('=');
    if (eq == std::string_view::npos) throw DataError(line_error(line_number, "expected key=value"));
    out.emplace_back(std::string(trim(line.substr(0, eq))), std::string(trim(line.substr(eq + 1))));
  }
  return out;
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

ScenarioConfig parse_config_text(const std::string& text, ScenarioConfig base) {
  ScenarioConfig c = base;
  auto real = [](const std::string& key, const std::string& v) {
    double out = 0;
    if (!parse_number(std::string_view(v), out)) throw DataError("bad value for " + key + ": " + v);
    return out;
  };
  auto integer = [](const std::string& key, const std::string& v) {
    long long out = 0;
    if (!parse_number(std::string_view(v), out)) throw DataError("bad value for " + key + ": " + v);
    return out;
  };
  for (const auto& [key, value] : parse_key_values(text)) {
    if (key == "fps") c.fps = static_cast<int>(integer(key, value));
    else if (key == "camera_count") c.camera_count = static_cast<int>(integer(key, value));
    else if (key == "window_tracklet_s") c.window_tracklet_s = real(key, value);
    else if (key == "window_sc_s") c.window_sc_s = real(key, value);
    else if (key == "window_mc_s") c.window_mc_s = real(key, value);
    else if (key == "overlap_fraction") c.overlap_fraction = real(key, value);
    else if (key == "alpha") c.alpha = real(key, value);
    else if (key == "beta") c.beta = real(key, value);
    else if (key == "t_m") c.t_m = real(key, value);
    else if (key == "t_a") c.t_a = real(key, value);
    else if (key == "speed_limit") c.speed_limit = real(key, value);
    else if (key == "margin") c.margin = real(key, value);
    else if (key == "P") c.P = static_cast<int>(integer(key, value));
    else if (key == "K") c.K = static_cast<int>(integer(key, value));
    else if (key == "H") c.H = static_cast<int>(integer(key, value));
    else if (key == "pruning_min_length") c.pruning_min_length = static_cast<int>(integer(key, value));
    else if (key == "exact_limit") c.exact_limit = static_cast<int>(integer(key, value));
    else if (key == "seed") c.seed = static_cast<std::uint64_t>(integer(key, value));
    else if (key == "threads") c.threads = static_cast<int>(integer(key, value));
    else throw DataError("unknown config key: " + key);
  }
  c.validate();
  return c;
}

ScenarioConfig load_config(const std::filesystem::path& path, ScenarioConfig base) {
  return parse_config_text(read_text_file(path), base);
}

std::string format_config(const ScenarioConfig& c) {
  std::ostringstream out;
  out << "# scenario config v1\n";
  out << "fps=" << c.fps << "\ncamera_count=" << c.camera_count << "\n";
  out << "window_tracklet_s=" << format_real(c.window_tracklet_s) << "\nwindow_sc_s=" << format_real(c.window_sc_s)
      << "\nwindow_mc_s=" << format_real(c.window_mc_s) << "\noverlap_fraction=" << format_real(c.overlap_fraction) << "\n";
  out << "alpha=" << format_real(c.alpha) << "\nbeta=" << format_real(c.beta) << "\nt_m=" << format_real(c.t_m)
      << "\nt_a=" << format_real(c.t_a) << "\nspeed_limit=" << format_real(c.speed_limit) << "\n";
  out << "margin=" << format_real(c.margin) << "\nP=" << c.P << "\nK=" << c.K << "\nH=" << c.H << "\n";
  out << "pruning_min_length=" << c.pruning_min_length << "\nexact_limit=" << c.exact_limit << "\n";
  return out.str();
}

std::string format_real(double value) {
  std::array<char, 64> buf{};
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), value);
  return std::string(buf.data(), ptr);
}

std::vector<Detection> parse_detections_text(const std::string& text) {
  std::vector<Detection> out;
  std::istringstream in(text);
  std::string raw;
  std::size_t line_number = 0;
  while (std::getline(in, raw)) {
    ++line_number;
    if (skippable(raw)) continue;
    auto f = split_fields(raw);
    if (f.size() != 8) throw DataError(line_error(line_number, "expected 8 fields, got " + std::to_string(f.size())));
    Detection d;
    long long camera = 0;
    long long frame = 0;
    bool ok = parse_number(f[0], camera) && parse_number(f[1], frame) && parse_number(f[2], d.box.x) &&
              parse_number(f[3], d.box.y) && parse_number(f[4], d.box.width) && parse_number(f[5], d.box.height) &&
              parse_number(f[6], d.world.x) && parse_number(f[7], d.world.y);
    if (!ok) throw DataError(line_error(line_number, "malformed detection"));
    if (camera < 0 || frame < 0) throw DataError(line_error(line_number, "negative camera or frame"));
    if (!std::isfinite(d.box.x) || !std::isfinite(d.box.y) || !std::isfinite(d.world.x) || !std::isfinite(d.world.y))
      throw DataError(line_error(line_number, "non-finite coordinate"));
    if (!(d.box.width > 0.0) || !(d.box.height > 0.0) || !std::isfinite(d.box.width) || !std::isfinite(d.box.height))
      throw DataError(line_error(line_number, "non-positive box"));
    d.camera = static_cast<int>(camera);
    d.frame = frame;
    d.embedding_index = out.size();
    out.push_back(d);
  }
  std::stable_sort(out.begin(), out.end(), [](const Detection& a, const Detection& b) {
    return std::tie(a.camera, a.frame) < std::tie(b.camera, b.frame);
  });
  return out;
}

std::vector<Detection> parse_detections(const std::filesystem::path& path, int fps) {
  if (fps <= 0) throw DataError("fps must be positive");
  return parse_detections_text(read_text_file(path));
}

void write_detections(const std::vector<Detection>& detections, const std::filesystem::path& path) {
  std::string out = "# detections v1: camera_id,frame,x,y,w,h,wx,wy\n";
  for (const auto& d : detections) {
    out += std::to_string(d.camera) + ',' + std::to_string(d.frame) + ',' + format_real(d.box.x) + ',' +
           format_real(d.box.y) + ',' + format_real(d.box.width) + ',' + format_real(d.box.height) + ',' +
           format_real(d.world.x) + ',' + format_real(d.world.y) + '\n';
  }
  write_file(path, out, false);
}

EmbeddingSet read_embeddings(const std::filesystem::path& path) {
  std::string bytes = read_text_file(path);
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kEmbeddingMagic.data(), 4) != 0) throw DataError("bad magic");
  if (bytes.size() < 12) throw DataError("truncated header");
  std::uint32_t count = load_u32_le(bytes.data() + 4);
  std::uint32_t dim = load_u32_le(bytes.data() + 8);
  std::uint64_t expected = 12 + 4ull * count * dim;
  if (bytes.size() < expected) throw DataError("truncated payload");
  if (bytes.size() > expected) throw DataError("trailing bytes after payload");
  EmbeddingSet set;
  set.rows.resize(count, dim);
  const char* p = bytes.data() + 12;
  for (std::uint32_t i = 0; i < count; ++i) {
    for (std::uint32_t j = 0; j < dim; ++j, p += 4) {
      float v = std::bit_cast<float>(load_u32_le(p));
      if (!std::isfinite(v)) throw DataError("non-finite value at row " + std::to_string(i));
      set.rows(i, j) = v;
    }
  }
  return set;
}

void write_embeddings(const EmbeddingSet& embeddings, const std::filesystem::path& path) {
  std::string out(kEmbeddingMagic.begin(), kEmbeddingMagic.end());
  store_u32_le(out, static_cast<std::uint32_t>(embeddings.count()));
  store_u32_le(out, static_cast<std::uint32_t>(embeddings.dim()));
  out.reserve(out.size() + 4 * embeddings.count() * embeddings.dim());
  for (Eigen::Index i = 0; i < embeddings.rows.rows(); ++i)
    for (Eigen::Index j = 0; j < embeddings.rows.cols(); ++j)
      store_u32_le(out, std::bit_cast<std::uint32_t>(embeddings.rows(i, j)));
  write_file(path, out, true);
}

std::vector<int> read_labels(const std::filesystem::path& path) {
  std::vector<int> out;
  std::istringstream in(read_text_file(path));
  std::string raw;
  std::size_t line_number = 0;
  while (std::getline(in, raw)) {
    ++line_number;
    if (skippable(raw)) continue;
    int v = 0;
    if (!parse_number(trim(raw), v)) throw DataError(line_error(line_number, "malformed label"));
    out.push_back(v);
  }
  return out;
}

void write_labels(const std::vector<int>& labels, const std::filesystem::path& path) {
  std::string out = "# labels v1\n";
  for (int v : labels) out += std::to_string(v) + '\n';
  write_file(path, out, false);
}

std::vector<Trajectory> parse_ground_truth_text(const std::string& text) {
  std::map<int, Trajectory> by_identity;
  std::istringstream in(text);
  std::string raw;
  std::size_t line_number = 0;
  while (std::getline(in, raw)) {
    ++line_number;
    if (skippable(raw)) continue;
    auto f = split_fields(raw);
    if (f.size() != 9) throw DataError(line_error(line_number, "expected 9 fields, got " + std::to_string(f.size())));
    Detection d;
    long long camera = 0;
    long long identity = 0;
    long long frame = 0;
    bool ok = parse_number(f[0], camera) && parse_number(f[1], identity) && parse_number(f[2], frame) &&
              parse_number(f[3], d.box.x) && parse_number(f[4], d.box.y) && parse_number(f[5], d.box.width) &&
              parse_number(f[6], d.box.height) && parse_number(f[7], d.world.x) && parse_number(f[8], d.world.y);
    if (!ok) throw DataError(line_error(line_number, "malformed trajectory line"));
    if (camera < 0 || identity < 0 || frame < 0) throw DataError(line_error(line_number, "negative camera, identity or frame"));
    if (!(d.box.width > 0.0) || !(d.box.height > 0.0)) throw DataError(line_error(line_number, "non-positive box"));
    d.camera = static_cast<int>(camera);
    d.frame = frame;
    auto& t = by_identity[static_cast<int>(identity)];
    t.identity = static_cast<int>(identity);
    t.detections.push_back(d);
  }
  std::vector<Trajectory> out;
  out.reserve(by_identity.size());
  for (auto& [id, t] : by_identity) {
    std::stable_sort(t.detections.begin(), t.detections.end(), [](const Detection& a, const Detection& b) {
      return std::tie(a.frame, a.camera) < std::tie(b.frame, b.camera);
    });
    validate_trajectory(t);
    out.push_back(std::move(t));
  }
  return out;
}

std::vector<Trajectory> parse_ground_truth(const std::filesystem::path& path) {
  return parse_ground_truth_text(read_text_file(path));
}

std::string format_trajectories(const std::vector<Trajectory>& trajectories) {
  struct Row {
    int camera;
    std::int64_t frame;
    int identity;
    const Detection* d;
  };
  std::vector<Row> rows;
  for (const auto& t : trajectories)
    for (const auto& d : t.detections) rows.push_back({d.camera, d.frame, t.identity, &d});
  std::stable_sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) {
    return std::tie(a.camera, a.frame, a.identity) < std::tie(b.camera, b.frame, b.identity);
  });
  std::string out = "# trajectories v1: camera_id,identity,frame,x,y,w,h,wx,wy\n";
  for (const auto& r : rows) {
    const Detection& d = *r.d;
    out += std::to_string(r.camera) + ',' + std::to_string(r.identity) + ',' + std::to_string(r.frame) + ',' +
           format_real(d.box.x) + ',' + format_real(d.box.y) + ',' + format_real(d.box.width) + ',' +
           format_real(d.box.height) + ',' + format_real(d.world.x) + ',' + format_real(d.world.y) + '\n';
  }
  return out;
}

void write_trajectories(const std::vector<Trajectory>& trajectories, const std::filesystem::path& path) {
  for (const auto& t : trajectories) validate_trajectory(t);
  write_file(path, format_trajectories(trajectories), false);
}

}  // namespace mtmc

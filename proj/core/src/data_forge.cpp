#include "spikefuse/data_forge.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numbers>
#include <random>
#include <sstream>

#include "spikefuse/errors.hpp"

namespace spikefuse {

namespace fs = std::filesystem;

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a ^ (b + 0x9e3779b97f4a7c15ULL + (a << 6) + (a >> 2));
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

RoiBox roi_from_skeleton(std::span<const Point2> joints, double frame_w, double frame_h) {
  if (joints.empty()) throw InvalidInput("roi: no joints");
  if (!(frame_w > 0.0) || !(frame_h > 0.0)) throw InvalidInput("roi: frame size must be positive");
  RoiBox r;
  r.x_min = r.x_max = joints[0].x;
  r.y_min = r.y_max = joints[0].y;
  for (const auto& p : joints) {
    if (!std::isfinite(p.x) || !std::isfinite(p.y)) throw InvalidInput("roi: non-finite joint");
    r.x_min = std::min(r.x_min, p.x);
    r.x_max = std::max(r.x_max, p.x);
    r.y_min = std::min(r.y_min, p.y);
    r.y_max = std::max(r.y_max, p.y);
  }
  const double w = std::max(r.x_max - r.x_min, 1.0 / 1.2);
  const double h = std::max(r.y_max - r.y_min, 1.0 / 1.3);
  r.roi_w = 1.2 * w;
  r.roi_h = 1.3 * h;
  const double cx = 0.5 * (r.x_min + r.x_max);
  const double cy = 0.5 * (r.y_min + r.y_max);
  r.left = std::clamp(cx - 0.5 * r.roi_w, 0.0, frame_w);
  r.right = std::clamp(cx + 0.5 * r.roi_w, 0.0, frame_w);
  r.top = std::clamp(cy - 0.5 * r.roi_h, 0.0, frame_h);
  r.bottom = std::clamp(cy + 0.5 * r.roi_h, 0.0, frame_h);
  if (r.right - r.left < 1.0) {
    r.left = std::clamp(std::floor(cx), 0.0, frame_w - 1.0);
    r.right = r.left + 1.0;
  }
  if (r.bottom - r.top < 1.0) {
    r.top = std::clamp(std::floor(cy), 0.0, frame_h - 1.0);
    r.bottom = r.top + 1.0;
  }
  return r;
}

EventStream v2e_convert(const GrayClip& clip, const V2eConfig& cfg, std::uint64_t seed) {
  if (clip.width == 0 || clip.height == 0) throw InvalidInput("v2e: empty frame size");
  if (clip.width > 65535 || clip.height > 65535) throw InvalidInput("v2e: frame too large");
  if (!(clip.fps > 0.0)) throw InvalidInput("v2e: fps must be positive");
  if (!(cfg.pos_threshold > 0.0) || !(cfg.neg_threshold > 0.0) || cfg.sigma_threshold < 0.0 ||
      !(cfg.min_threshold > 0.0) || !(cfg.timestamp_resolution > 0.0) || cfg.cutoff_hz < 0.0 ||
      !(cfg.intensity_floor > 0.0))
    throw InvalidInput("v2e: invalid configuration");
  const std::size_t pixels = clip.width * clip.height;
  for (const auto& f : clip.frames)
    if (f.size() != pixels) throw InvalidInput("v2e: frame size does not match clip dimensions");

  EventStream out;
  out.width = static_cast<std::uint16_t>(clip.width);
  out.height = static_cast<std::uint16_t>(clip.height);
  if (clip.frames.size() < 2) return out;

  const double dt = 1.0 / clip.fps;
  const double alpha = cfg.cutoff_hz > 0.0 ? 1.0 - std::exp(-2.0 * std::numbers::pi * cfg.cutoff_hz * dt) : 1.0;
  auto log_i = [&](double v) { return std::log(std::max(v, cfg.intensity_floor)); };

  for (std::size_t p = 0; p < pixels; ++p) {
    double th_pos = cfg.pos_threshold, th_neg = cfg.neg_threshold;
    if (cfg.sigma_threshold > 0.0) {
      std::mt19937_64 rng(mix_seed(seed, p));
      std::normal_distribution<double> pos(cfg.pos_threshold, cfg.sigma_threshold);
      std::normal_distribution<double> neg(cfg.neg_threshold, cfg.sigma_threshold);
      th_pos = std::max(cfg.min_threshold, pos(rng));
      th_neg = std::max(cfg.min_threshold, neg(rng));
    }
    double filtered = log_i(clip.frames[0][p]);
    double ref = filtered;
    const auto x = static_cast<std::uint16_t>(p % clip.width);
    const auto y = static_cast<std::uint16_t>(p / clip.width);
    for (std::size_t k = 1; k < clip.frames.size(); ++k) {
      filtered += alpha * (log_i(clip.frames[k][p]) - filtered);
      const double delta = filtered - ref;
      const int pol = delta > 0.0 ? 1 : -1;
      const double th = pol > 0 ? th_pos : th_neg;
      const auto n = static_cast<std::size_t>(std::floor(std::abs(delta) / th + 1e-9));
      if (n == 0) continue;
      ref += pol * static_cast<double>(n) * th;
      const double t_prev = static_cast<double>(k - 1) * dt;
      for (std::size_t j = 0; j < n; ++j) {
        const double t = t_prev + dt * static_cast<double>(j + 1) / static_cast<double>(n);
        const double q = std::round(t / cfg.timestamp_resolution) * cfg.timestamp_resolution;
        out.events.push_back({q, x, y, pol});
      }
    }
  }
  std::stable_sort(out.events.begin(), out.events.end(), [](const Event& a, const Event& b) {
    if (a.t != b.t) return a.t < b.t;
    if (a.y != b.y) return a.y < b.y;
    return a.x < b.x;
  });
  return out;
}

void write_skeleton_csv(std::ostream& os, const SkeletonClip& clip) {
  const std::size_t row = clip.channels * clip.total_joints();
  if (clip.data.size() != clip.frames * row) throw InvalidInput("skeleton csv: data size mismatch");
  os << "T,C,V,persons\n" << clip.frames << ',' << clip.channels << ',' << clip.joints << ',' << clip.persons << '\n';
  os << std::setprecision(std::numeric_limits<double>::max_digits10);
  for (std::size_t f = 0; f < clip.frames; ++f) {
    for (std::size_t i = 0; i < row; ++i) os << (i ? "," : "") << clip.data[f * row + i];
    os << '\n';
  }
}

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  return out;
}

double parse_double(const std::string& s, const char* what) {
  try {
    std::size_t pos = 0;
    double v = std::stod(s, &pos);
    if (pos != s.size() && s.find_first_not_of(" \r", pos) != std::string::npos) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw InvalidInput(std::string("skeleton csv: bad ") + what + " '" + s + "'");
  }
}

}  // namespace

SkeletonClip read_skeleton_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line.rfind("T,C,V,persons", 0) != 0)
    throw InvalidInput("skeleton csv: missing T,C,V,persons header");
  if (!std::getline(is, line)) throw InvalidInput("skeleton csv: missing dimensions");
  auto dims = split_csv(line);
  if (dims.size() != 4) throw InvalidInput("skeleton csv: dimension line needs 4 fields");
  SkeletonClip clip;
  std::array<std::size_t, 4> d{};
  for (std::size_t i = 0; i < 4; ++i) {
    double v = parse_double(dims[i], "dimension");
    if (v < 1 || v != std::floor(v)) throw InvalidInput("skeleton csv: dimensions must be positive integers");
    d[i] = static_cast<std::size_t>(v);
  }
  clip.frames = d[0];
  clip.channels = d[1];
  clip.joints = d[2];
  clip.persons = d[3];
  const std::size_t row = clip.channels * clip.total_joints();
  clip.data.reserve(clip.frames * row);
  for (std::size_t f = 0; f < clip.frames; ++f) {
    if (!std::getline(is, line)) throw InvalidInput("skeleton csv: expected " + std::to_string(clip.frames) + " rows");
    auto cells = split_csv(line);
    if (cells.size() != row)
      throw InvalidInput("skeleton csv: row " + std::to_string(f) + " has " + std::to_string(cells.size()) +
                         " values, expected " + std::to_string(row));
    for (const auto& c : cells) clip.data.push_back(parse_double(c, "value"));
  }
  return clip;
}

void write_skeleton_file(const std::string& path, const SkeletonClip& clip) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path);
  write_skeleton_csv(os, clip);
}

SkeletonClip read_skeleton_file(const std::string& path, std::size_t channels, std::size_t joints) {
  std::ifstream is(path);
  if (!is) throw InvalidInput("cannot open skeleton file " + path);
  SkeletonClip clip = read_skeleton_csv(is);
  if (channels && clip.channels != channels)
    throw InvalidInput(path + ": " + std::to_string(clip.channels) + " channels, expected " + std::to_string(channels));
  if (joints && clip.total_joints() != joints)
    throw InvalidInput(path + ": " + std::to_string(clip.total_joints()) + " joints, expected " +
                       std::to_string(joints));
  return clip;
}

namespace {

// pelvis, chest, head, r-elbow, r-hand, l-elbow, l-hand, r-foot, l-foot
constexpr std::array<std::array<double, 3>, 9> kRestPose{{{0.0, 0.0, 0.0},
                                                          {0.0, 0.5, 0.0},
                                                          {0.0, 0.8, 0.0},
                                                          {0.25, 0.45, 0.0},
                                                          {0.45, 0.35, 0.0},
                                                          {-0.25, 0.45, 0.0},
                                                          {-0.45, 0.35, 0.0},
                                                          {0.12, -0.6, 0.0},
                                                          {-0.12, -0.6, 0.0}}};
constexpr double kJointRadius = 0.07;
constexpr double kPropHalf = 0.08;
constexpr double kBackground = 0.1;

struct Scene {
  std::vector<std::array<double, 3>> joints;
  Point2 prop;
};

struct Projection {
  double scale, cx, cy;
  Point2 operator()(double x, double y) const { return {cx + x * scale, cy - (y - 0.1) * scale}; }
};

double render_pixel(const Scene& s, const Projection& proj, double px, double py) {
  double v = kBackground;
  const double r = kJointRadius * proj.scale;
  for (const auto& j : s.joints) {
    Point2 c = proj(j[0], j[1]);
    const double d = std::hypot(px - c.x, py - c.y);
    v = std::max(v, kBackground + 0.6 * std::clamp(r + 0.5 - d, 0.0, 1.0));
  }
  Point2 c = proj(s.prop.x, s.prop.y);
  const double h = kPropHalf * proj.scale;
  const double cover = std::clamp(h + 0.5 - std::abs(px - c.x), 0.0, 1.0) *
                       std::clamp(h + 0.5 - std::abs(py - c.y), 0.0, 1.0);
  return std::max(v, kBackground + 0.9 * cover);
}

double bilinear(const std::vector<double>& img, std::size_t w, std::size_t h, double x, double y) {
  x = std::clamp(x, 0.0, static_cast<double>(w - 1));
  y = std::clamp(y, 0.0, static_cast<double>(h - 1));
  const auto x0 = static_cast<std::size_t>(x), y0 = static_cast<std::size_t>(y);
  const std::size_t x1 = std::min(x0 + 1, w - 1), y1 = std::min(y0 + 1, h - 1);
  const double fx = x - static_cast<double>(x0), fy = y - static_cast<double>(y0);
  const double top = img[y0 * w + x0] * (1 - fx) + img[y0 * w + x1] * fx;
  const double bot = img[y1 * w + x0] * (1 - fx) + img[y1 * w + x1] * fx;
  return top * (1 - fy) + bot * fy;
}

}  // namespace

SynthClip synth_micro_action(int label, const SynthConfig& cfg, std::uint64_t seed, double amplitude) {
  if (label < 0 || static_cast<std::size_t>(label) >= cfg.classes) throw InvalidInput("synth: label out of range");
  if (cfg.classes < 2) throw InvalidInput("synth: need at least 2 classes");
  if (cfg.frames < 2 || !(cfg.fps > 0.0)) throw InvalidInput("synth: need >= 2 frames and positive fps");
  if (cfg.render_width < 8 || cfg.render_height < 8 || cfg.event_width == 0 || cfg.event_height == 0)
    throw InvalidInput("synth: bad frame size");

  std::mt19937_64 rng(mix_seed(seed, static_cast<std::uint64_t>(label)));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double amp = amplitude < 0.0 ? cfg.amplitude * (0.8 + 0.4 * unit(rng)) : amplitude;
  std::array<double, 4> phase{};
  for (auto& p : phase) p = 2.0 * std::numbers::pi * unit(rng);
  const int factor_a = label % 2;
  const int factor_b = (label / 2) % 2;
  const double speed = 1.0 + static_cast<double>(label / 4) * 0.75;
  const double duration = static_cast<double>(cfg.frames) / cfg.fps;
  const double omega = 2.0 * std::numbers::pi * speed / duration;
  const std::size_t pushing = factor_a == 0 ? 4 : 6;

  std::vector<Scene> scenes(cfg.frames);
  for (std::size_t f = 0; f < cfg.frames; ++f) {
    const double t = static_cast<double>(f) / cfg.fps;
    Scene& s = scenes[f];
    s.joints.assign(kRestPose.begin(), kRestPose.end());
    const double sway = 0.05 * amp * std::sin(omega * t + phase[0]);
    const double wave = 0.06 * amp * std::sin(2.0 * omega * t + phase[1]);
    for (auto& j : s.joints) j[0] += sway;
    for (std::size_t j : {3, 4, 5, 6}) s.joints[j][1] += (j == 4 || j == 6) ? wave : 0.5 * wave;
    const double depth = 0.35 * amp * std::sin(omega * t + phase[2]);
    s.joints[pushing][2] += depth;
    s.joints[pushing - 1][2] += 0.5 * depth;
    const double slide = 0.18 * amp * std::sin(1.5 * omega * t + phase[3]);
    s.prop = {sway + (factor_b == 0 ? slide : 0.0), 0.15 + (factor_b == 1 ? slide : 0.0)};
  }

  SynthClip clip;
  clip.label = label;
  clip.skeleton.frames = cfg.frames;
  clip.skeleton.channels = 3;
  clip.skeleton.joints = kRestPose.size();
  clip.skeleton.fps = cfg.fps;
  clip.skeleton.data.resize(cfg.frames * 3 * kRestPose.size());
  std::normal_distribution<double> noise(0.0, cfg.skeleton_noise);
  for (std::size_t f = 0; f < cfg.frames; ++f)
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t v = 0; v < kRestPose.size(); ++v)
        clip.skeleton.at(f, c, v) = scenes[f].joints[v][c] + (cfg.skeleton_noise > 0.0 ? noise(rng) : 0.0);
  for (const auto& s : scenes) clip.prop.push_back(s.prop);

  const auto rw = cfg.render_width, rh = cfg.render_height;
  const double body_scale = static_cast<double>(rh) / 1.7;
  const Projection proj{body_scale, 0.5 * static_cast<double>(rw), 0.5 * static_cast<double>(rh)};
  std::vector<Point2> projected;
  for (const auto& s : scenes)
    for (const auto& j : s.joints) projected.push_back(proj(j[0], j[1]));
  clip.roi = roi_from_skeleton(projected, static_cast<double>(rw), static_cast<double>(rh));

  clip.video.width = cfg.event_width;
  clip.video.height = cfg.event_height;
  clip.video.fps = cfg.fps;
  std::vector<double> raster(rw * rh);
  const double sx = (clip.roi.right - clip.roi.left) / static_cast<double>(cfg.event_width);
  const double sy = (clip.roi.bottom - clip.roi.top) / static_cast<double>(cfg.event_height);
  for (const auto& s : scenes) {
    for (std::size_t y = 0; y < rh; ++y)
      for (std::size_t x = 0; x < rw; ++x)
        raster[y * rw + x] = render_pixel(s, proj, static_cast<double>(x) + 0.5, static_cast<double>(y) + 0.5);
    std::vector<double> frame(cfg.event_width * cfg.event_height);
    for (std::size_t y = 0; y < cfg.event_height; ++y)
      for (std::size_t x = 0; x < cfg.event_width; ++x)
        frame[y * cfg.event_width + x] =
            bilinear(raster, rw, rh, clip.roi.left + (static_cast<double>(x) + 0.5) * sx - 0.5,
                     clip.roi.top + (static_cast<double>(y) + 0.5) * sy - 0.5);
    clip.video.frames.push_back(std::move(frame));
  }
  return clip;
}

Sample build_pairs(const SkeletonClip& skeleton, const EventStream& events, std::size_t steps, std::size_t height,
                   std::size_t width, int label) {
  if (steps == 0) throw InvalidInput("build_pairs: steps must be positive");
  if (skeleton.frames == 0 || !(skeleton.fps > 0.0)) throw InvalidInput("build_pairs: empty skeleton clip");
  if (skeleton.data.size() != skeleton.frames * skeleton.channels * skeleton.total_joints())
    throw InvalidInput("build_pairs: skeleton data size mismatch");
  if (events.width != width || events.height != height)
    throw InvalidInput("build_pairs: event stream is " + std::to_string(events.width) + "x" +
                       std::to_string(events.height) + ", expected " + std::to_string(width) + "x" +
                       std::to_string(height));
  const double duration = static_cast<double>(skeleton.frames) / skeleton.fps;
  if (!events.events.empty() && (events.events.back().t < 0.0 || events.events.front().t >= duration))
    throw InvalidInput("build_pairs: event and skeleton time ranges do not overlap");

  Sample s;
  s.label = label;
  const std::size_t c = skeleton.channels, v = skeleton.total_joints();
  std::vector<double> sk(steps * c * v);
  for (std::size_t i = 0; i < steps; ++i) {
    const std::size_t f = i * skeleton.frames / steps;
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t j = 0; j < v; ++j) sk[(i * c + ch) * v + j] = skeleton.at(f, ch, j);
  }
  s.skeleton = Tensor::from({steps, c, v}, std::move(sk));
  BinnedEvents binned = bin_events(events, steps, height, width, duration, 0.0);
  s.events = binned.frames;
  s.skipped_events = binned.skipped;
  return s;
}

Dataset synth_dataset(const SynthConfig& cfg, const V2eConfig& v2e, std::size_t per_class, std::size_t steps,
                      std::uint64_t seed) {
  Dataset d;
  d.classes = cfg.classes;
  for (std::size_t i = 0; i < per_class; ++i)
    for (std::size_t c = 0; c < cfg.classes; ++c) {
      const std::uint64_t clip_seed = mix_seed(seed, i * cfg.classes + c);
      SynthClip clip = synth_micro_action(static_cast<int>(c), cfg, clip_seed);
      EventStream ev = v2e_convert(clip.video, v2e, mix_seed(clip_seed, 0x5e));
      d.samples.push_back(
          build_pairs(clip.skeleton, ev, steps, cfg.event_height, cfg.event_width, static_cast<int>(c)));
    }
  return d;
}

std::string write_synth_files(const std::string& dir, const SynthConfig& cfg, const V2eConfig& v2e,
                              std::size_t per_class, std::uint64_t seed) {
  fs::create_directories(dir);
  const fs::path root(dir);
  const fs::path manifest = root / "manifest.tsv";
  std::ofstream mf(manifest);
  if (!mf) throw std::runtime_error("cannot write " + manifest.string());
  for (std::size_t i = 0; i < per_class; ++i)
    for (std::size_t c = 0; c < cfg.classes; ++c) {
      const std::uint64_t clip_seed = mix_seed(seed, i * cfg.classes + c);
      SynthClip clip = synth_micro_action(static_cast<int>(c), cfg, clip_seed);
      EventStream ev = v2e_convert(clip.video, v2e, mix_seed(clip_seed, 0x5e));
      const std::string stem = "clip_" + std::to_string(i * cfg.classes + c);
      write_skeleton_file((root / (stem + ".csv")).string(), clip.skeleton);
      write_events_file((root / (stem + ".evt")).string(), ev);
      mf << stem << ".csv\t" << stem << ".evt\t" << c << '\n';
    }
  return manifest.string();
}

Dataset load_manifest(const std::string& manifest, std::size_t steps, std::size_t height, std::size_t width,
                      std::size_t channels, std::size_t joints) {
  std::ifstream is(manifest);
  if (!is) throw InvalidInput("cannot open manifest " + manifest);
  const fs::path base = fs::path(manifest).parent_path();
  Dataset d;
  std::string line;
  std::size_t lineno = 0;
  int max_label = -1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::stringstream ss(line);
    std::string sk, ev, lab;
    if (!std::getline(ss, sk, '\t') || !std::getline(ss, ev, '\t') || !std::getline(ss, lab))
      throw InvalidInput(manifest + ":" + std::to_string(lineno) + ": expected skeleton<TAB>events<TAB>label");
    int label = 0;
    try {
      label = std::stoi(lab);
    } catch (const std::exception&) {
      throw InvalidInput(manifest + ":" + std::to_string(lineno) + ": bad label '" + lab + "'");
    }
    if (label < 0) throw InvalidInput(manifest + ":" + std::to_string(lineno) + ": negative label");
    SkeletonClip clip = read_skeleton_file((base / sk).string(), channels, joints);
    EventStream stream = read_events_file((base / ev).string());
    d.samples.push_back(build_pairs(clip, stream, steps, height, width, label));
    max_label = std::max(max_label, label);
  }
  if (d.samples.empty()) throw InvalidInput("manifest " + manifest + " lists no samples");
  d.classes = static_cast<std::size_t>(max_label + 1);
  return d;
}

Batch make_batch(const Dataset& data, std::span<const std::size_t> indices) {
  if (indices.empty()) throw InvalidInput("make_batch: empty batch");
  const Sample& first = data.samples.at(indices[0]);
  Shape sk_shape{indices.size()};
  Shape ev_shape{indices.size()};
  for (auto d : first.skeleton.shape()) sk_shape.push_back(d);
  for (auto d : first.events.shape()) ev_shape.push_back(d);
  std::vector<double> sk, ev;
  sk.reserve(indices.size() * first.skeleton.size());
  ev.reserve(indices.size() * first.events.size());
  Batch b;
  for (std::size_t i : indices) {
    const Sample& s = data.samples.at(i);
    if (s.skeleton.shape() != first.skeleton.shape() || s.events.shape() != first.events.shape())
      throw InvalidInput("make_batch: samples have different shapes");
    auto a = s.skeleton.values();
    sk.insert(sk.end(), a.begin(), a.end());
    auto e = s.events.values();
    ev.insert(ev.end(), e.begin(), e.end());
    b.labels.push_back(s.label);
  }
  b.skeleton = Tensor::from(sk_shape, std::move(sk));
  b.events = Tensor::from(ev_shape, std::move(ev));
  return b;
}

}  // namespace spikefuse

#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "spikefuse/event_encoder.hpp"
#include "spikefuse/tensor.hpp"

namespace spikefuse {

struct Point2 {
  double x = 0.0;
  double y = 0.0;
};

struct RoiBox {
  double x_min = 0.0, x_max = 0.0, y_min = 0.0, y_max = 0.0;
  double roi_w = 0.0, roi_h = 0.0;
  // expanded box about the centre, clipped to the frame
  double left = 0.0, top = 0.0, right = 0.0, bottom = 0.0;
};

/// Bounding box of the joints expanded to 1.2 x width and 1.3 x height about its
/// centre, then clipped to [0, frame_w] x [0, frame_h]. A degenerate extent becomes
/// a 1-pixel box.
RoiBox roi_from_skeleton(std::span<const Point2> joints, double frame_w, double frame_h);

/// Grayscale video with intensities in [0, 1], frames row-major.
struct GrayClip {
  std::size_t width = 0;
  std::size_t height = 0;
  double fps = 30.0;
  std::vector<std::vector<double>> frames;
};

struct V2eConfig {
  double pos_threshold = 0.15;
  double neg_threshold = 0.15;
  double sigma_threshold = 0.03;
  double min_threshold = 0.01;
  double timestamp_resolution = 0.01;  // seconds
  double cutoff_hz = 15.0;             // 0 disables the log-intensity low-pass
  double intensity_floor = 1.0 / 255.0;
};

/// Log-intensity change detector. Each pixel draws its thresholds once from
/// N(theta, sigma^2) (clamped to min_threshold) using a generator seeded by
/// (seed, pixel). Per frame pair, floor(|dL| / theta) events are emitted, spread
/// over (t - dt, t], quantized to the timestamp resolution, and the pixel's
/// reference level advances by the emitted amount. Output is sorted by time.
EventStream v2e_convert(const GrayClip& clip, const V2eConfig& cfg, std::uint64_t seed);

/// Per-frame joint coordinates [frames][channels][joints].
struct SkeletonClip {
  std::size_t frames = 0;
  std::size_t channels = 3;
  std::size_t joints = 0;  // per person
  std::size_t persons = 1;
  double fps = 30.0;
  std::vector<double> data;

  std::size_t total_joints() const { return joints * persons; }
  double& at(std::size_t f, std::size_t c, std::size_t v) { return data[(f * channels + c) * total_joints() + v]; }
  double at(std::size_t f, std::size_t c, std::size_t v) const {
    return data[(f * channels + c) * total_joints() + v];
  }
};

/// CSV: a "T,C,V,persons" line, a line with those four numbers, then one row of
/// C * V * persons values per frame (channel-major).
void write_skeleton_csv(std::ostream& os, const SkeletonClip& clip);
SkeletonClip read_skeleton_csv(std::istream& is);
void write_skeleton_file(const std::string& path, const SkeletonClip& clip);
// Validates channels and total joint count when they are non-zero.
SkeletonClip read_skeleton_file(const std::string& path, std::size_t channels = 0, std::size_t joints = 0);

struct SynthConfig {
  std::size_t classes = 4;
  std::size_t frames = 32;
  double fps = 30.0;
  std::size_t render_width = 64;
  std::size_t render_height = 48;
  std::size_t event_width = 32;
  std::size_t event_height = 24;
  double amplitude = 1.0;
  double skeleton_noise = 0.01;
};

struct SynthClip {
  SkeletonClip skeleton;           // 9 joints, (x, y, z)
  std::vector<Point2> prop;        // hand-held prop centre per frame (body units)
  GrayClip video;                  // ROI-cropped, event resolution
  RoiBox roi;
  int label = 0;
};

/// One clip of class `label`. Classes combine two factors: factor A = label % 2
/// picks which hand pushes in depth (seen only by the skeleton, since rendering is
/// orthographic) and factor B = (label / 2) % 2 picks a horizontal or vertical
/// prop motion (seen only in the frames). Higher labels speed the motion up.
/// amplitude < 0 draws a per-clip amplitude; 0 gives a static clip.
SynthClip synth_micro_action(int label, const SynthConfig& cfg, std::uint64_t seed, double amplitude = -1.0);

struct Sample {
  Tensor skeleton;  // [T, C, V]
  Tensor events;    // [T, 2, H, W]
  int label = 0;
  std::size_t skipped_events = 0;
};

/// Skeleton resampled to T frames (index floor(i * F / T)) and events binned into T
/// slices over the same span [0, F / fps).
Sample build_pairs(const SkeletonClip& skeleton, const EventStream& events, std::size_t steps, std::size_t height,
                   std::size_t width, int label);

struct Dataset {
  std::vector<Sample> samples;
  std::size_t classes = 0;
};

Dataset synth_dataset(const SynthConfig& cfg, const V2eConfig& v2e, std::size_t per_class, std::size_t steps,
                      std::uint64_t seed);

/// Writes clip files and a tab-separated manifest (skeleton path, event path, label).
/// Returns the manifest path.
std::string write_synth_files(const std::string& dir, const SynthConfig& cfg, const V2eConfig& v2e,
                              std::size_t per_class, std::uint64_t seed);

Dataset load_manifest(const std::string& manifest, std::size_t steps, std::size_t height, std::size_t width,
                      std::size_t channels = 0, std::size_t joints = 0);

struct Batch {
  Tensor skeleton;  // [B, T, C, V]
  Tensor events;    // [B, T, 2, H, W]
  std::vector<int> labels;
};

Batch make_batch(const Dataset& data, std::span<const std::size_t> indices);

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

}  // namespace spikefuse

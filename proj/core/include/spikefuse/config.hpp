#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "spikefuse/data_forge.hpp"
#include "spikefuse/model.hpp"
#include "spikefuse/trainer.hpp"

namespace spikefuse {

struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  SynthConfig synth;
  V2eConfig v2e;
  std::size_t train_per_class = 16;
  std::size_t test_per_class = 8;
  std::uint64_t seed = 0;
};

/// Full-size defaults: 256-dim, 4 layers, 25 joints, 64x48 event frames.
RunConfig full_preset();
/// The small configuration used by the toy benchmarks: 32-dim, 1 layer, 9 joints, 32x24 frames.
RunConfig toy_preset();

/// Synthetic-data settings with the frame size taken from the event encoder.
SynthConfig synth_for(const RunConfig& cfg);

/// Synthetic train and test splits drawn from the run seed.
std::pair<Dataset, Dataset> synth_splits(const RunConfig& cfg);

/// Loads a manifest file, or DIR/manifest.tsv when given a directory, shaped for the model.
Dataset load_dataset(const std::string& path, const RunConfig& cfg);

using KeyValues = std::vector<std::pair<std::string, std::string>>;

/// Every setting as "section.name" keys in a fixed order. Doubles round-trip exactly.
KeyValues to_key_values(const RunConfig& cfg);
/// Throws InvalidInput for unknown keys or malformed values.
void set_key_value(RunConfig& cfg, const std::string& key, const std::string& value);
std::vector<std::string> config_keys();

/// "key = value" lines; '#' starts a comment; blank lines are ignored.
void read_config(std::istream& is, RunConfig& cfg);
void write_config(std::ostream& os, const RunConfig& cfg);
void load_config_file(const std::string& path, RunConfig& cfg);
/// Applies one "key=value" override.
void apply_override(RunConfig& cfg, const std::string& assignment);

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Binary: magic "SFCKPT01", uint32 version, the configuration key/values, then every
/// parameter and buffer by name with its shape and raw little-endian doubles.
void save_checkpoint(const std::string& path, const RunConfig& cfg, const SpikeFuseNet& model);

struct LoadedCheckpoint {
  RunConfig config;
  std::unique_ptr<SpikeFuseNet> model;
};

/// Rejects files with a different version, missing tensors, or shape mismatches.
LoadedCheckpoint load_checkpoint(const std::string& path);

}  // namespace spikefuse

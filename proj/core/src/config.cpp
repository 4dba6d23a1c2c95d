#include "spikefuse/config.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

#include "spikefuse/errors.hpp"

namespace spikefuse {

RunConfig full_preset() {
  RunConfig c;
  c.model.classes = 60;
  c.synth.classes = 60;
  return c;
}

RunConfig toy_preset() {
  RunConfig c;
  c.model.skeleton.joints = 9;
  c.model.skeleton.dim = 32;
  c.model.skeleton.layers = 1;
  c.model.event.height = 24;
  c.model.event.width = 32;
  c.model.event.dim = 32;
  c.model.event.layers = 1;
  c.model.event.state = 16;
  c.model.classes = 4;
  c.train.batch_size = 8;
  c.synth.classes = 4;
  c.synth.frames = 32;
  c.test_per_class = 8;
  return c;
}

SynthConfig synth_for(const RunConfig& cfg) {
  SynthConfig s = cfg.synth;
  s.event_width = cfg.model.event.width;
  s.event_height = cfg.model.event.height;
  s.render_width = 2 * s.event_width;
  s.render_height = 2 * s.event_height;
  return s;
}

std::pair<Dataset, Dataset> synth_splits(const RunConfig& cfg) {
  const SynthConfig s = synth_for(cfg);
  const std::size_t steps = cfg.model.skeleton.window;
  return {synth_dataset(s, cfg.v2e, cfg.train_per_class, steps, mix_seed(cfg.seed, 1)),
          synth_dataset(s, cfg.v2e, cfg.test_per_class, steps, mix_seed(cfg.seed, 2))};
}

Dataset load_dataset(const std::string& path, const RunConfig& cfg) {
  std::filesystem::path p(path);
  if (std::filesystem::is_directory(p)) p /= "manifest.tsv";
  const auto& m = cfg.model;
  return load_manifest(p.string(), m.skeleton.window, m.event.height, m.event.width, m.skeleton.in_channels,
                       m.skeleton.joints);
}

namespace {

std::string fmt(double v) {
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}
std::string fmt(std::size_t v) { return std::to_string(v); }
std::string fmt(bool v) { return v ? "true" : "false"; }
std::string fmt(const std::vector<std::size_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double parse_real(const std::string& key, const std::string& v) {
  double out = 0.0;
  auto r = std::from_chars(v.data(), v.data() + v.size(), out);
  if (r.ec != std::errc() || r.ptr != v.data() + v.size())
    throw InvalidInput("config: " + key + " expects a number, got '" + v + "'");
  return out;
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  auto r = std::from_chars(v.data(), v.data() + v.size(), out);
  if (r.ec != std::errc() || r.ptr != v.data() + v.size())
    throw InvalidInput("config: " + key + " expects a non-negative integer, got '" + v + "'");
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "on") return true;
  if (v == "false" || v == "0" || v == "off") return false;
  throw InvalidInput("config: " + key + " expects true/false, got '" + v + "'");
}

std::vector<std::size_t> parse_list(const std::string& key, const std::string& v) {
  std::vector<std::size_t> out;
  if (v.empty()) return out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_u64(key, trim(item)));
  return out;
}

struct Field {
  const char* key;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&, const std::string&)> set;
};

#define SF_REAL(k, path) \
  Field{k, [](const RunConfig& c) { return fmt(c.path); }, [](RunConfig& c, const std::string& key, const std::string& v) { c.path = parse_real(key, v); }}
#define SF_SIZE(k, path) \
  Field{k, [](const RunConfig& c) { return fmt(std::size_t(c.path)); }, [](RunConfig& c, const std::string& key, const std::string& v) { c.path = parse_u64(key, v); }}
#define SF_BOOL(k, path) \
  Field{k, [](const RunConfig& c) { return fmt(bool(c.path)); }, [](RunConfig& c, const std::string& key, const std::string& v) { c.path = parse_bool(key, v); }}

const std::vector<Field>& fields() {
  static const std::vector<Field> table{
      Field{"run.seed", [](const RunConfig& c) { return std::to_string(c.seed); },
            [](RunConfig& c, const std::string& k, const std::string& v) { c.seed = parse_u64(k, v); }},
      SF_SIZE("model.classes", model.classes),
      SF_REAL("model.dropout", model.dropout),
      SF_BOOL("model.sgn", model.toggles.sgn),
      SF_BOOL("model.mamba", model.toggles.mamba),
      SF_BOOL("model.sse", model.toggles.sse),
      SF_BOOL("model.scm", model.toggles.scm),
      SF_BOOL("model.dib", model.toggles.dib),
      SF_SIZE("skeleton.channels", model.skeleton.in_channels),
      SF_SIZE("skeleton.joints", model.skeleton.joints),
      SF_SIZE("skeleton.window", model.skeleton.window),
      SF_SIZE("skeleton.dim", model.skeleton.dim),
      SF_SIZE("skeleton.layers", model.skeleton.layers),
      Field{"skeleton.dilations", [](const RunConfig& c) { return fmt(c.model.skeleton.dilations); },
            [](RunConfig& c, const std::string& k, const std::string& v) {
              c.model.skeleton.dilations = parse_list(k, v);
            }},
      SF_REAL("skeleton.ssa_scale", model.skeleton.ssa_scale),
      SF_SIZE("event.height", model.event.height),
      SF_SIZE("event.width", model.event.width),
      SF_SIZE("event.patch", model.event.patch),
      SF_SIZE("event.window", model.event.window),
      SF_SIZE("event.dim", model.event.dim),
      SF_SIZE("event.layers", model.event.layers),
      SF_SIZE("event.state", model.event.state),
      SF_SIZE("sse.k", model.sse.k),
      SF_SIZE("sse.groups", model.sse.groups),
      SF_REAL("dib.alpha", model.dib.alpha),
      SF_REAL("dib.lambda1", model.dib.lambda1),
      SF_REAL("dib.lambda2", model.dib.lambda2),
      SF_REAL("dib.momentum", model.dib.momentum),
      SF_REAL("dib.sampler_bias", model.dib.sampler_bias),
      SF_BOOL("dib.swap_targets", model.dib.swap_targets),
      SF_REAL("train.lr", train.lr),
      SF_REAL("train.momentum", train.momentum),
      SF_BOOL("train.nesterov", train.nesterov),
      SF_REAL("train.weight_decay", train.weight_decay),
      Field{"train.milestones", [](const RunConfig& c) { return fmt(c.train.milestones); },
            [](RunConfig& c, const std::string& k, const std::string& v) { c.train.milestones = parse_list(k, v); }},
      SF_REAL("train.lr_decay", train.lr_decay),
      SF_SIZE("train.epochs", train.epochs),
      SF_SIZE("train.batch_size", train.batch_size),
      SF_SIZE("train.eval_every", train.eval_every),
      SF_SIZE("synth.classes", synth.classes),
      SF_SIZE("synth.frames", synth.frames),
      SF_REAL("synth.fps", synth.fps),
      SF_REAL("synth.amplitude", synth.amplitude),
      SF_REAL("synth.skeleton_noise", synth.skeleton_noise),
      SF_SIZE("synth.train_per_class", train_per_class),
      SF_SIZE("synth.test_per_class", test_per_class),
      SF_REAL("v2e.pos_threshold", v2e.pos_threshold),
      SF_REAL("v2e.neg_threshold", v2e.neg_threshold),
      SF_REAL("v2e.sigma_threshold", v2e.sigma_threshold),
      SF_REAL("v2e.min_threshold", v2e.min_threshold),
      SF_REAL("v2e.timestamp_resolution", v2e.timestamp_resolution),
      SF_REAL("v2e.cutoff_hz", v2e.cutoff_hz),
      SF_REAL("v2e.intensity_floor", v2e.intensity_floor),
  };
  return table;
}

#undef SF_REAL
#undef SF_SIZE
#undef SF_BOOL

}  // namespace

KeyValues to_key_values(const RunConfig& cfg) {
  KeyValues kv;
  for (const auto& f : fields()) kv.emplace_back(f.key, f.get(cfg));
  return kv;
}

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& f : fields()) keys.emplace_back(f.key);
  return keys;
}

void set_key_value(RunConfig& cfg, const std::string& key, const std::string& value) {
  for (const auto& f : fields())
    if (key == f.key) {
      f.set(cfg, key, value);
      return;
    }
  throw InvalidInput("config: unknown key '" + key + "'");
}

void apply_override(RunConfig& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw InvalidInput("config: expected key=value, got '" + assignment + "'");
  set_key_value(cfg, trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

void read_config(std::istream& is, RunConfig& cfg) {
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    try {
      apply_override(cfg, line);
    } catch (const InvalidInput& e) {
      throw InvalidInput("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
}

void write_config(std::ostream& os, const RunConfig& cfg) {
  for (const auto& [k, v] : to_key_values(cfg)) os << k << " = " << v << '\n';
}

void load_config_file(const std::string& path, RunConfig& cfg) {
  std::ifstream is(path);
  if (!is) throw InvalidInput("cannot open config " + path);
  try {
    read_config(is, cfg);
  } catch (const InvalidInput& e) {
    throw InvalidInput(path + ": " + e.what());
  }
}

namespace {

constexpr char kCheckpointMagic[8] = {'S', 'F', 'C', 'K', 'P', 'T', '0', '1'};

template <typename T>
void put(std::ostream& os, T v) {
  unsigned char b[sizeof(T)];
  std::memcpy(b, &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(T));
  os.write(reinterpret_cast<const char*>(b), sizeof(T));
}

template <typename T>
T get(std::istream& is) {
  unsigned char b[sizeof(T)];
  if (!is.read(reinterpret_cast<char*>(b), sizeof(T))) throw InvalidInput("checkpoint: truncated file");
  if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(T));
  T v;
  std::memcpy(&v, b, sizeof(T));
  return v;
}

void put_string(std::ostream& os, const std::string& s) {
  put<std::uint32_t>(os, static_cast<std::uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_string(std::istream& is) {
  const auto n = get<std::uint32_t>(is);
  if (n > (1u << 20)) throw InvalidInput("checkpoint: corrupt string length");
  std::string s(n, '\0');
  if (!is.read(s.data(), n)) throw InvalidInput("checkpoint: truncated file");
  return s;
}

}  // namespace

void save_checkpoint(const std::string& path, const RunConfig& cfg, const SpikeFuseNet& model) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write checkpoint " + path);
  os.write(kCheckpointMagic, sizeof kCheckpointMagic);
  put<std::uint32_t>(os, kCheckpointVersion);
  RunConfig stored = cfg;
  stored.model = model.config();
  const KeyValues kv = to_key_values(stored);
  put<std::uint32_t>(os, static_cast<std::uint32_t>(kv.size()));
  for (const auto& [k, v] : kv) {
    put_string(os, k);
    put_string(os, v);
  }
  const ParamSet ps = model.parameters();
  put<std::uint32_t>(os, static_cast<std::uint32_t>(ps.entries().size()));
  for (const auto& e : ps.entries()) {
    put_string(os, e.name);
    put<std::uint32_t>(os, static_cast<std::uint32_t>(e.tensor.rank()));
    for (auto d : e.tensor.shape()) put<std::uint64_t>(os, d);
    for (double v : e.tensor.values()) put<double>(os, v);
  }
  if (!os) throw std::runtime_error("failed writing checkpoint " + path);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw InvalidInput("cannot open checkpoint " + path);
  char magic[8];
  if (!is.read(magic, 8) || std::memcmp(magic, kCheckpointMagic, 8) != 0)
    throw InvalidInput(path + ": not a checkpoint file");
  const auto version = get<std::uint32_t>(is);
  if (version != kCheckpointVersion)
    throw InvalidInput(path + ": checkpoint version " + std::to_string(version) + " is not supported (expected " +
                       std::to_string(kCheckpointVersion) + ")");
  LoadedCheckpoint out;
  const auto nkv = get<std::uint32_t>(is);
  for (std::uint32_t i = 0; i < nkv; ++i) {
    std::string k = get_string(is);
    std::string v = get_string(is);
    set_key_value(out.config, k, v);
  }
  Rng rng(0);
  out.model = std::make_unique<SpikeFuseNet>(out.config.model, rng);
  ParamSet ps = out.model->parameters();
  const auto count = get<std::uint32_t>(is);
  if (count != ps.entries().size())
    throw InvalidInput(path + ": checkpoint holds " + std::to_string(count) + " tensors, model expects " +
                       std::to_string(ps.entries().size()));
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::string name = get_string(is);
    const ParamSet::Entry* e = ps.find(name);
    if (!e) throw InvalidInput(path + ": unexpected tensor '" + name + "'");
    const auto rank = get<std::uint32_t>(is);
    Shape shape;
    for (std::uint32_t r = 0; r < rank; ++r) shape.push_back(static_cast<std::size_t>(get<std::uint64_t>(is)));
    if (shape != e->tensor.shape())
      throw InvalidInput(path + ": tensor '" + name + "' has shape " + shape_str(shape) + ", expected " +
                         shape_str(e->tensor.shape()));
    Tensor t = e->tensor;
    for (double& v : t.mutable_values()) v = get<double>(is);
  }
  return out;
}

}  // namespace spikefuse

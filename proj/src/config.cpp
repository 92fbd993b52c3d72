#include "part/config.hpp"

#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "part/error.hpp"

namespace part {

using nlohmann::json;

namespace {

std::string join(const std::string& path, const std::string& key) { return path.empty() ? key : path + "." + key; }

[[noreturn]] void type_error(const std::string& path, const std::string& expected) {
  throw ConfigError("config key '" + path + "': expected " + expected);
}

json encode(int v) { return v; }
json encode(double v) { return v; }
json encode(bool v) { return v; }
json encode(std::uint64_t v) { return v; }
json encode(const std::string& v) { return v; }
json encode(SamplingMode v) { return to_string(v); }
json encode(BoxAspect v) { return to_string(v); }
json encode(TargetMode v) { return to_string(v); }
json encode(HeadKind v) { return to_string(v); }
json encode(Schedule v) { return to_string(v); }
json encode(TrainMode v) { return to_string(v); }
json encode(SceneKind v) { return to_string(v); }
json encode(LabelRule v) { return to_string(v); }
json encode(const std::array<Color, 6>& v);
json encode(const std::vector<SinusoidComponent>& v);
json encode(const SyntheticSceneSpec& v);
json encode(const SignalSpec& v);

void decode(const json& j, int& out, const std::string& path);
void decode(const json& j, double& out, const std::string& path);
void decode(const json& j, bool& out, const std::string& path);
void decode(const json& j, std::uint64_t& out, const std::string& path);
void decode(const json& j, std::string& out, const std::string& path);
template <class E>
void decode_enum(const json& j, E& out, const std::string& path, E (*parse)(const std::string&));
void decode(const json& j, SamplingMode& out, const std::string& path) { decode_enum(j, out, path, sampling_mode_from_string); }
void decode(const json& j, BoxAspect& out, const std::string& path) { decode_enum(j, out, path, box_aspect_from_string); }
void decode(const json& j, TargetMode& out, const std::string& path) { decode_enum(j, out, path, target_mode_from_string); }
void decode(const json& j, HeadKind& out, const std::string& path) { decode_enum(j, out, path, head_kind_from_string); }
void decode(const json& j, Schedule& out, const std::string& path) { decode_enum(j, out, path, schedule_from_string); }
void decode(const json& j, TrainMode& out, const std::string& path) { decode_enum(j, out, path, train_mode_from_string); }
void decode(const json& j, SceneKind& out, const std::string& path) { decode_enum(j, out, path, scene_kind_from_string); }
void decode(const json& j, LabelRule& out, const std::string& path) { decode_enum(j, out, path, label_rule_from_string); }
void decode(const json& j, std::array<Color, 6>& out, const std::string& path);
void decode(const json& j, std::vector<SinusoidComponent>& out, const std::string& path);
void decode(const json& j, SyntheticSceneSpec& out, const std::string& path);
void decode(const json& j, SignalSpec& out, const std::string& path);

struct Writer {
  json j = json::object();
  template <class T>
  void operator()(const char* key, const T& value) {
    j[key] = encode(value);
  }
};

struct Reader {
  const json& j;
  std::string path;
  std::set<std::string> known;

  template <class T>
  void operator()(const char* key, T& value) {
    known.insert(key);
    auto it = j.find(key);
    if (it != j.end()) decode(*it, value, join(path, key));
  }
  void finish() const {
    for (const auto& [key, _] : j.items()) {
      if (!known.count(key)) throw ConfigError("unknown config key '" + join(path, key) + "'");
    }
  }
};

template <class T, class F>
json write_object(const T& value, F visit) {
  Writer w;
  visit(value, w);
  return w.j;
}

template <class T, class F>
void read_object(const json& j, T& out, const std::string& path, F visit) {
  if (!j.is_object()) type_error(path.empty() ? "<root>" : path, "an object");
  Reader r{j, path, {}};
  visit(out, r);
  r.finish();
}

template <class S, class V>
void visit_sampler(S& c, V& v) {
  v("patch_count", c.patch_count);
  v("patch_size", c.patch_size);
  v("size_min", c.size_min);
  v("size_max", c.size_max);
  v("mode", c.mode);
  v("aspect", c.aspect);
  v("seed", c.seed);
}

template <class S, class V>
void visit_vit(S& c, V& v) {
  v("embed_dim", c.embed_dim);
  v("depth", c.depth);
  v("heads", c.heads);
  v("mlp_ratio", c.mlp_ratio);
  v("patch_size", c.patch_size);
  v("use_cls", c.use_cls);
  v("use_positional", c.use_positional);
  v("max_positions", c.max_positions);
}

template <class S, class V>
void visit_head_public(S& c, V& v) {
  v("kind", c.kind);
  v("heads", c.heads);
  v("learned_kv", c.learned_kv);
  v("query_residual", c.query_residual);
}

template <class S, class V>
void visit_head_full(S& c, V& v) {
  visit_head_public(c, v);
  v("target", c.target);
  v("patch_count", c.patch_count);
}

template <class S, class V>
void visit_dims(S& c, V& v) {
  v("height", c.height);
  v("width", c.width);
  v("channels", c.channels);
}

template <class S, class V>
void visit_train(S& c, V& v) {
  v("learning_rate", c.learning_rate);
  v("batch_size", c.batch_size);
  v("steps", c.steps);
  v("warmup_steps", c.warmup_steps);
  v("weight_decay", c.weight_decay);
  v("beta1", c.beta1);
  v("beta2", c.beta2);
  v("schedule", c.schedule);
  v("seed", c.seed);
  v("mode", c.mode);
  v("target_mode", c.target_mode);
  v("pair_count", c.pair_count);
  v("freeze_pairs", c.freeze_pairs);
  v("hflip", c.hflip);
  v("threads", c.threads);
  v("eval_every", c.eval_every);
  v("checkpoint_every", c.checkpoint_every);
  v("val_pair_count", c.val_pair_count);
  v("antisymmetry_images", c.antisymmetry_images);
}

template <class S, class V>
void visit_scene(S& c, V& v) {
  v("height", c.height);
  v("width", c.width);
  v("channels", c.channels);
  v("kind", c.kind);
  v("label_rule", c.label_rule);
  v("palette", c.palette);
  v("color_jitter", c.color_jitter);
  v("shape_size", c.shape_size);
  v("offset_x", c.offset_x);
  v("offset_y", c.offset_y);
  v("jitter", c.jitter);
  v("stripe_period", c.stripe_period);
  v("brightness_shift", c.brightness_shift);
  v("seed", c.seed);
}

template <class S, class V>
void visit_signal(S& c, V& v) {
  v("length", c.length);
  v("sample_rate", c.sample_rate);
  v("channels", c.channels);
  v("components", c.components);
  v("envelope", c.envelope);
  v("noise", c.noise);
  v("num_classes", c.num_classes);
  v("normalize", c.normalize);
  v("seed", c.seed);
}

template <class S, class V>
void visit_component(S& c, V& v) {
  v("frequency", c.frequency);
  v("amplitude", c.amplitude);
  v("drift", c.drift);
}

template <class S, class V>
void visit_data(S& c, V& v) {
  v("kind", c.kind);
  v("scene", c.scene);
  v("signal", c.signal);
  v("path", c.path);
  v("val_path", c.val_path);
  v("height", c.height);
  v("width", c.width);
  v("channels", c.channels);
  v("num_classes", c.num_classes);
  v("train_count", c.train_count);
  v("val_count", c.val_count);
}

#define PART_VISITOR(fn) [](auto& c, auto& v) { fn(c, v); }

void decode(const json& j, int& out, const std::string& path) {
  if (!j.is_number_integer()) type_error(path, "an integer");
  const auto v = j.get<std::int64_t>();
  if (v < std::numeric_limits<int>::min() || v > std::numeric_limits<int>::max()) type_error(path, "a 32-bit integer");
  out = static_cast<int>(v);
}

void decode(const json& j, double& out, const std::string& path) {
  if (!j.is_number()) type_error(path, "a number");
  out = j.get<double>();
}

void decode(const json& j, bool& out, const std::string& path) {
  if (!j.is_boolean()) type_error(path, "true or false");
  out = j.get<bool>();
}

void decode(const json& j, std::uint64_t& out, const std::string& path) {
  if (j.is_number_unsigned()) {
    out = j.get<std::uint64_t>();
    return;
  }
  if (!j.is_number_integer() || j.get<std::int64_t>() < 0) type_error(path, "a non-negative integer");
  out = static_cast<std::uint64_t>(j.get<std::int64_t>());
}

void decode(const json& j, std::string& out, const std::string& path) {
  if (!j.is_string()) type_error(path, "a string");
  out = j.get<std::string>();
}

template <class E>
void decode_enum(const json& j, E& out, const std::string& path, E (*parse)(const std::string&)) {
  if (!j.is_string()) type_error(path, "a string");
  try {
    out = parse(j.get<std::string>());
  } catch (const ConfigError& e) {
    throw ConfigError("config key '" + path + "': " + e.what());
  }
}

json encode(const std::array<Color, 6>& v) {
  json a = json::array();
  for (const Color& c : v) a.push_back({c[0], c[1], c[2]});
  return a;
}

void decode(const json& j, std::array<Color, 6>& out, const std::string& path) {
  if (!j.is_array() || j.size() != 6) type_error(path, "an array of 6 RGB triples");
  for (std::size_t i = 0; i < 6; ++i) {
    const json& c = j[i];
    if (!c.is_array() || c.size() != 3) type_error(path, "an array of 6 RGB triples");
    for (std::size_t k = 0; k < 3; ++k) decode(c[k], out[i][k], path + "[" + std::to_string(i) + "]");
  }
}

json encode(const std::vector<SinusoidComponent>& v) {
  json a = json::array();
  for (const SinusoidComponent& c : v) a.push_back(write_object(c, PART_VISITOR(visit_component)));
  return a;
}

void decode(const json& j, std::vector<SinusoidComponent>& out, const std::string& path) {
  if (!j.is_array()) type_error(path, "an array of components");
  out.assign(j.size(), SinusoidComponent{});
  for (std::size_t i = 0; i < j.size(); ++i) {
    read_object(j[i], out[i], path + "[" + std::to_string(i) + "]", PART_VISITOR(visit_component));
  }
}

json encode(const SyntheticSceneSpec& v) { return write_object(v, PART_VISITOR(visit_scene)); }
json encode(const SignalSpec& v) { return write_object(v, PART_VISITOR(visit_signal)); }

void decode(const json& j, SyntheticSceneSpec& out, const std::string& path) {
  read_object(j, out, path, PART_VISITOR(visit_scene));
}

void decode(const json& j, SignalSpec& out, const std::string& path) {
  read_object(j, out, path, PART_VISITOR(visit_signal));
}

struct RunSections {
  static json write(const RunConfig& c) {
    json j = json::object();
    j["sampler"] = write_object(c.sampler, PART_VISITOR(visit_sampler));
    j["vit"] = write_object(c.vit, PART_VISITOR(visit_vit));
    j["head"] = write_object(c.head, PART_VISITOR(visit_head_public));
    j["train"] = write_object(c.train, PART_VISITOR(visit_train));
    j["data"] = write_object(c.data, PART_VISITOR(visit_data));
    j["out"] = c.out;
    j["checkpoint"] = c.checkpoint;
    return j;
  }
};

}  // namespace

ImageDims DataConfig::dims() const {
  if (kind == "scenes") return scene.dims();
  if (kind == "signals") return signal.dims();
  return {height, width, channels};
}

int DataConfig::classes() const {
  if (kind == "scenes") return scene.num_classes();
  if (kind == "signals") return signal.num_classes;
  return num_classes;
}

void DataConfig::validate() const {
  if (kind == "scenes") {
    scene.validate();
  } else if (kind == "signals") {
    signal.validate();
  } else if (kind == "raw") {
    if (path.empty()) throw ConfigError("data.path is required when data.kind = raw");
    ImageDims{height, width, channels}.validate();
    if (num_classes < 0 || num_classes > 256) throw ConfigError("data.num_classes must be in [0, 256]");
  } else {
    throw ConfigError("data.kind must be one of scenes|signals|raw, got '" + kind + "'");
  }
  if (kind != "raw" && train_count < 1) throw ConfigError("data.train_count must be >= 1");
  if (kind != "raw" && val_count < 1) throw ConfigError("data.val_count must be >= 1");
}

Datasets make_datasets(const DataConfig& data) {
  data.validate();
  Datasets d;
  if (data.kind == "scenes") {
    d.train = generate_scenes(data.scene, data.train_count, 0);
    d.val = generate_scenes(data.scene, data.val_count, data.train_count);
  } else if (data.kind == "signals") {
    d.train = generate_signals(data.signal, data.train_count, 0);
    d.val = generate_signals(data.signal, data.val_count, data.train_count);
  } else {
    d.train = load_raw_images(data.path, data.dims(), data.num_classes);
    d.val = load_raw_images(data.val_path.empty() ? data.path : data.val_path, data.dims(), data.num_classes);
  }
  return d;
}

ModelConfig RunConfig::model_config() const {
  ModelConfig m;
  m.dims = data.dims();
  m.sampler = sampler;
  m.vit = vit;
  m.head = head;
  m.head.target = train.target_mode;
  m.head.patch_count = sampler.patch_count;
  m.relative_head = true;
  m.num_classes = 0;
  return m;
}

void RunConfig::validate() const {
  data.validate();
  train.validate();
  model_config().validate();
  if (out.empty()) throw ConfigError("out must not be empty");
}

json to_json(const RunConfig& c) { return RunSections::write(c); }

RunConfig run_config_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("run config must be a JSON object");
  RunConfig c;
  static const std::set<std::string> sections{"sampler", "vit", "head", "train", "data", "out", "checkpoint"};
  for (const auto& [key, _] : j.items()) {
    if (!sections.count(key)) throw ConfigError("unknown config key '" + key + "'");
  }
  if (j.contains("sampler")) read_object(j["sampler"], c.sampler, "sampler", PART_VISITOR(visit_sampler));
  if (j.contains("vit")) read_object(j["vit"], c.vit, "vit", PART_VISITOR(visit_vit));
  if (j.contains("head")) read_object(j["head"], c.head, "head", PART_VISITOR(visit_head_public));
  if (j.contains("train")) read_object(j["train"], c.train, "train", PART_VISITOR(visit_train));
  if (j.contains("data")) read_object(j["data"], c.data, "data", PART_VISITOR(visit_data));
  if (j.contains("out")) decode(j["out"], c.out, "out");
  if (j.contains("checkpoint")) decode(j["checkpoint"], c.checkpoint, "checkpoint");
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config file " + path.string() + " is not valid JSON: " + e.what());
  }
  return run_config_from_json(j);
}

json to_json(const ModelConfig& c) {
  json j = json::object();
  j["dims"] = write_object(c.dims, PART_VISITOR(visit_dims));
  j["sampler"] = write_object(c.sampler, PART_VISITOR(visit_sampler));
  j["vit"] = write_object(c.vit, PART_VISITOR(visit_vit));
  j["head"] = write_object(c.head, PART_VISITOR(visit_head_full));
  j["relative_head"] = c.relative_head;
  j["num_classes"] = c.num_classes;
  return j;
}

ModelConfig model_config_from_json(const json& j) {
  ModelConfig c;
  read_object(j, c, "model", [](ModelConfig& m, Reader& r) {
    r.known.insert({"dims", "sampler", "vit", "head"});
    if (r.j.contains("dims")) read_object(r.j["dims"], m.dims, "model.dims", PART_VISITOR(visit_dims));
    if (r.j.contains("sampler")) read_object(r.j["sampler"], m.sampler, "model.sampler", PART_VISITOR(visit_sampler));
    if (r.j.contains("vit")) read_object(r.j["vit"], m.vit, "model.vit", PART_VISITOR(visit_vit));
    if (r.j.contains("head")) read_object(r.j["head"], m.head, "model.head", PART_VISITOR(visit_head_full));
    r("relative_head", m.relative_head);
    r("num_classes", m.num_classes);
  });
  return c;
}

json to_json(const TrainConfig& c) { return write_object(c, PART_VISITOR(visit_train)); }

TrainConfig train_config_from_json(const json& j) {
  TrainConfig c;
  read_object(j, c, "train", PART_VISITOR(visit_train));
  return c;
}

void apply_override(json& config, const std::string& dotted_key, const std::string& value) {
  json* node = &config;
  std::stringstream ss(dotted_key);
  std::string part;
  std::string path;
  while (std::getline(ss, part, '.')) {
    path = join(path, part);
    if (!node->is_object() || !node->contains(part)) throw ConfigError("unknown config key '" + path + "'");
    node = &(*node)[part];
  }
  if (path.empty()) throw ConfigError("empty config key");
  json parsed;
  try {
    parsed = json::parse(value);
  } catch (const json::parse_error&) {
    parsed = value;
  }
  if (node->is_string() && !parsed.is_string()) parsed = value;
  *node = parsed;
}

}  // namespace part

// Copyright 2026 The Relate Authors
// SPDX-License-Identifier: Apache-2.0

#include "relate/experiment.hpp"

#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include "relate/energy_isa.hpp"
#include "relate/errors.hpp"
#include "relate/grbm.hpp"
#include "relate/infer_tools.hpp"
#include "relate/render.hpp"
#include "relate/spectral.hpp"
#include "relate/batch_io.hpp"

namespace relate::experiment {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// ---- config parsing ----

void reject_unknown(const json& j, const std::set<std::string>& known, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected a JSON object");
  for (const auto& [key, _] : j.items())
    if (!known.count(key)) throw ConfigError(where + ": unknown key '" + key + "'");
}

template <class T>
void read(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  const json& v = j.at(key);
  try {
    if constexpr (std::is_same_v<T, std::size_t> || std::is_same_v<T, std::uint64_t>) {
      if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0)) throw ConfigError("");
    } else if constexpr (std::is_same_v<T, int>) {
      if (!v.is_number_integer()) throw ConfigError("");
    } else if constexpr (std::is_same_v<T, double>) {
      if (!v.is_number()) throw ConfigError("");
    } else if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) throw ConfigError("");
    } else {
      if (!v.is_string()) throw ConfigError("");
    }
    out = v.get<T>();
  } catch (const std::exception&) {
    throw ConfigError(where + "." + key + ": bad value " + v.dump());
  }
}

std::string to_string(Normalization n) {
  switch (n) {
    case Normalization::kNone: return "none";
    case Normalization::kUnit: return "unit";
    case Normalization::kSqrtDim: return "sqrt_dim";
  }
  return "none";
}

Normalization normalization_from_string(const std::string& s) {
  if (s == "none") return Normalization::kNone;
  if (s == "unit") return Normalization::kUnit;
  if (s == "sqrt_dim") return Normalization::kSqrtDim;
  throw ConfigError("dataset.normalization: expected none, unit or sqrt_dim, got '" + s + "'");
}

ModelKind model_kind_from_string(const std::string& s) {
  if (s == "gae") return ModelKind::kGae;
  if (s == "grbm") return ModelKind::kGrbm;
  if (s == "isa") return ModelKind::kIsa;
  throw ConfigError("model.kind: expected gae, grbm or isa, got '" + s + "'");
}

json shape_json(const datagen::Shape& s) { return json::array({s.height, s.width}); }

datagen::Shape shape_from_json(const json& j) {
  if (!j.is_array() || j.size() != 2) throw DataError("manifest: bad shape " + j.dump());
  return {j[0].get<std::size_t>(), j[1].get<std::size_t>()};
}

std::string timestamp() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream out;
  out << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return out.str();
}

// ---- file helpers ----

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw DataError(dir + ": cannot create directory: " + ec.message());
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError(path + ": cannot open for writing");
  out << text;
  if (!out) throw DataError(path + ": write failed");
}

std::string join(const std::string& dir, const std::string& name) { return (fs::path(dir) / name).string(); }

}  // namespace

std::string to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::kGae: return "gae";
    case ModelKind::kGrbm: return "grbm";
    case ModelKind::kIsa: return "isa";
  }
  return "gae";
}

// ---- config types ----

json DatasetSpec::to_json() const {
  return {{"generator", generator},   {"num_pairs", num_pairs},   {"height", height},
          {"width", width},           {"dot_density", dot_density}, {"max_shift", max_shift},
          {"wraparound", wraparound}, {"max_angle", max_angle},   {"nearest", nearest},
          {"num_frames", num_frames}, {"max_speed", max_speed},   {"normalization", to_string(normalization)}};
}

DatasetSpec DatasetSpec::from_json(const json& j) {
  const std::string w = "dataset";
  reject_unknown(j, {"generator", "num_pairs", "height", "width", "dot_density", "max_shift", "wraparound",
                     "max_angle", "nearest", "num_frames", "max_speed", "normalization"},
                 w);
  DatasetSpec s;
  read(j, "generator", s.generator, w);
  read(j, "num_pairs", s.num_pairs, w);
  read(j, "height", s.height, w);
  read(j, "width", s.width, w);
  read(j, "dot_density", s.dot_density, w);
  read(j, "max_shift", s.max_shift, w);
  read(j, "wraparound", s.wraparound, w);
  read(j, "max_angle", s.max_angle, w);
  read(j, "nearest", s.nearest, w);
  read(j, "num_frames", s.num_frames, w);
  read(j, "max_speed", s.max_speed, w);
  std::string norm = to_string(s.normalization);
  read(j, "normalization", norm, w);
  s.normalization = normalization_from_string(norm);
  if (s.generator != "shift" && s.generator != "splitscreen" && s.generator != "rotation" && s.generator != "movies")
    throw ConfigError("dataset.generator: expected shift, splitscreen, rotation or movies, got '" + s.generator + "'");
  return s;
}

json ModelSpec::to_json() const {
  return {{"kind", to_string(kind)},       {"factors", factors},
          {"code_dim", code_dim},          {"tied", tied},
          {"subspace_size", subspace_size}, {"learn_pooling", learn_pooling},
          {"whitening_variance", whitening_variance},
          {"input_dim", input_dim},        {"output_dim", output_dim}};
}

ModelSpec ModelSpec::from_json(const json& j) {
  const std::string w = "model";
  reject_unknown(j,
                 {"kind", "factors", "code_dim", "tied", "subspace_size", "learn_pooling", "whitening_variance",
                  "input_dim", "output_dim"},
                 w);
  ModelSpec s;
  std::string kind = to_string(s.kind);
  read(j, "kind", kind, w);
  s.kind = model_kind_from_string(kind);
  read(j, "factors", s.factors, w);
  read(j, "code_dim", s.code_dim, w);
  read(j, "tied", s.tied, w);
  read(j, "subspace_size", s.subspace_size, w);
  read(j, "learn_pooling", s.learn_pooling, w);
  read(j, "whitening_variance", s.whitening_variance, w);
  read(j, "input_dim", s.input_dim, w);
  read(j, "output_dim", s.output_dim, w);
  if (s.factors == 0 || s.code_dim == 0 || s.subspace_size == 0)
    throw ConfigError("model: factors, code_dim and subspace_size must be positive");
  if (s.tied && s.kind != ModelKind::kGae) throw ConfigError("model.tied is only supported for gae");
  if (!(s.whitening_variance > 0.0 && s.whitening_variance <= 1.0))
    throw ConfigError("model.whitening_variance must be in (0, 1]");
  return s;
}

json TrainSpec::to_json() const {
  return {{"learning_rate", learning_rate},     {"momentum", momentum},
          {"epochs", epochs},                   {"batch_size", batch_size},
          {"sparsity_weight", sparsity_weight}, {"corruption_level", corruption_level},
          {"norm_constraint", norm_constraint}, {"norm_decay", norm_decay}};
}

TrainSpec TrainSpec::from_json(const json& j) {
  const std::string w = "train";
  reject_unknown(j, {"learning_rate", "momentum", "epochs", "batch_size", "sparsity_weight", "corruption_level",
                     "norm_constraint", "norm_decay"},
                 w);
  TrainSpec s;
  read(j, "learning_rate", s.learning_rate, w);
  read(j, "momentum", s.momentum, w);
  read(j, "epochs", s.epochs, w);
  read(j, "batch_size", s.batch_size, w);
  read(j, "sparsity_weight", s.sparsity_weight, w);
  read(j, "corruption_level", s.corruption_level, w);
  read(j, "norm_constraint", s.norm_constraint, w);
  read(j, "norm_decay", s.norm_decay, w);
  return s;
}

json AnalyzeSpec::to_json() const { return {{"warp", warp}, {"samples", samples}}; }

AnalyzeSpec AnalyzeSpec::from_json(const json& j) {
  const std::string w = "analyze";
  reject_unknown(j, {"warp", "samples"}, w);
  AnalyzeSpec s;
  read(j, "warp", s.warp, w);
  read(j, "samples", s.samples, w);
  static const std::set<std::string> warps{"auto", "shift", "split", "identity", "none"};
  if (!warps.count(s.warp)) throw ConfigError("analyze.warp: expected auto, shift, split, identity or none");
  return s;
}

std::string ExperimentConfig::resolved_dataset_path() const {
  return dataset_path.empty() ? join(output_dir, "data.relb") : dataset_path;
}

json ExperimentConfig::to_json() const {
  return {{"seed", seed},          {"output_dir", output_dir},  {"dataset_path", dataset_path},
          {"dataset", dataset.to_json()}, {"model", model.to_json()}, {"train", train.to_json()},
          {"analyze", analyze.to_json()}};
}

ExperimentConfig ExperimentConfig::from_json(const json& j) {
  const std::string w = "config";
  reject_unknown(j, {"seed", "output_dir", "dataset_path", "dataset", "model", "train", "analyze"}, w);
  if (!j.contains("seed")) throw ConfigError("config: seed is mandatory");
  ExperimentConfig c;
  read(j, "seed", c.seed, w);
  read(j, "output_dir", c.output_dir, w);
  read(j, "dataset_path", c.dataset_path, w);
  if (j.contains("dataset")) c.dataset = DatasetSpec::from_json(j["dataset"]);
  if (j.contains("model")) c.model = ModelSpec::from_json(j["model"]);
  if (j.contains("train")) c.train = TrainSpec::from_json(j["train"]);
  if (j.contains("analyze")) c.analyze = AnalyzeSpec::from_json(j["analyze"]);
  return c;
}

void apply_override(json& config, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + assignment + "': expected key=value");
  const std::string path = assignment.substr(0, eq), text = assignment.substr(eq + 1);
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;
  json* node = &config;
  std::size_t start = 0;
  while (true) {
    const auto dot = path.find('.', start);
    const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (key.empty()) throw ConfigError("override '" + assignment + "': empty key");
    if (!node->is_object()) *node = json::object();
    if (dot == std::string::npos) {
      (*node)[key] = value;
      return;
    }
    node = &(*node)[key];
    start = dot + 1;
  }
}

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path + ": cannot open config");
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) throw ConfigError(path + ": not valid JSON");
  return j;
}

std::uint64_t data_seed(std::uint64_t seed) { return derive_seed(seed, 0xda7a); }
std::uint64_t init_seed(std::uint64_t seed) { return derive_seed(seed, 0x1417); }
std::uint64_t train_seed(std::uint64_t seed) { return derive_seed(seed, 0x7a1e); }

// ---- datasets ----

datagen::PairBatch generate_dataset(const DatasetSpec& spec, std::uint64_t seed) {
  datagen::PairBatch raw;
  if (spec.generator == "shift") {
    datagen::ShiftedDotsParams p;
    p.num_pairs = spec.num_pairs;
    p.height = spec.height;
    p.width = spec.width;
    p.dot_density = spec.dot_density;
    p.max_shift = spec.max_shift;
    p.edge = spec.wraparound ? datagen::EdgeMode::kWrap : datagen::EdgeMode::kZeroPad;
    p.seed = seed;
    raw = datagen::gen_shifted_dots(p);
  } else if (spec.generator == "splitscreen") {
    datagen::SplitScreenParams p;
    p.num_pairs = spec.num_pairs;
    p.height = spec.height;
    p.width = spec.width;
    p.dot_density = spec.dot_density;
    p.max_shift = spec.max_shift;
    p.seed = seed;
    raw = datagen::gen_splitscreen_dots(p);
  } else if (spec.generator == "rotation") {
    datagen::RotatedPairsParams p;
    p.num_pairs = spec.num_pairs;
    p.height = spec.height;
    p.width = spec.width;
    p.dot_density = spec.dot_density;
    p.max_angle = spec.max_angle;
    p.interp = spec.nearest ? datagen::Interpolation::kNearest : datagen::Interpolation::kBilinear;
    p.seed = seed;
    raw = datagen::gen_rotated_pairs(p);
  } else if (spec.generator == "movies") {
    datagen::DotMoviesParams p;
    p.num_movies = spec.num_pairs;
    p.height = spec.height;
    p.width = spec.width;
    p.num_frames = spec.num_frames;
    p.dot_density = spec.dot_density;
    p.max_speed = spec.max_speed;
    p.seed = seed;
    raw = datagen::gen_dot_movies(p);
  } else {
    throw ConfigError("unknown generator '" + spec.generator + "'");
  }
  switch (spec.normalization) {
    case Normalization::kNone: return raw;
    case Normalization::kUnit: return datagen::normalize(raw);
    case Normalization::kSqrtDim: return datagen::normalize(raw, std::sqrt(double(raw.input_dim())));
  }
  return raw;
}

std::string manifest_path_for(const std::string& dataset_path) {
  fs::path p(dataset_path);
  return (p.parent_path() / (p.stem().string() + ".manifest.json")).string();
}

LoadedDataset load_dataset(const std::string& path) {
  if (!fs::exists(path)) throw DataError(path + ": dataset not found");
  LoadedDataset out;
  out.batch = datagen::read_batch(path);
  const std::string mpath = manifest_path_for(path);
  if (fs::exists(mpath)) {
    std::ifstream in(mpath);
    out.manifest = json::parse(in, nullptr, false);
    if (out.manifest.is_discarded()) throw DataError(mpath + ": not valid JSON");
    try {
      const datagen::Shape xs = shape_from_json(out.manifest.at("x_shape"));
      const datagen::Shape ys = shape_from_json(out.manifest.at("y_shape"));
      if (xs.size() != out.batch.input_dim() || ys.size() != out.batch.output_dim())
        throw DataError(mpath + ": shapes do not match the dataset");
      out.batch.x_shape = xs;
      out.batch.y_shape = ys;
    } catch (const json::exception& e) {
      throw DataError(mpath + ": " + e.what());
    }
  }
  return out;
}

datagen::PairBatch regenerate_from_manifest(const json& manifest) {
  try {
    return generate_dataset(DatasetSpec::from_json(manifest.at("generator")), manifest.at("seed").get<std::uint64_t>());
  } catch (const json::exception& e) {
    throw DataError(std::string("manifest: ") + e.what());
  }
}

GenerateResult cmd_generate(const ExperimentConfig& config) {
  GenerateResult r;
  r.dataset_path = config.resolved_dataset_path();
  r.manifest_path = manifest_path_for(r.dataset_path);
  const fs::path parent = fs::path(r.dataset_path).parent_path();
  if (!parent.empty()) ensure_dir(parent.string());
  const std::uint64_t seed = data_seed(config.seed);
  const datagen::PairBatch batch = generate_dataset(config.dataset, seed);
  datagen::write_batch(r.dataset_path, batch);
  const json manifest = {{"format", "RELB"},
                         {"version", datagen::kBatchVersion},
                         {"generator", config.dataset.to_json()},
                         {"seed", seed},
                         {"config_seed", config.seed},
                         {"num_pairs", batch.size()},
                         {"input_dim", batch.input_dim()},
                         {"output_dim", batch.output_dim()},
                         {"x_shape", shape_json(batch.x_shape)},
                         {"y_shape", shape_json(batch.y_shape)},
                         {"label_kind", datagen::to_string(batch.label_kind)},
                         {"created_at", timestamp()}};
  write_text(r.manifest_path, manifest.dump(2) + "\n");
  return r;
}

// ---- training ----

namespace {

void write_filter_grids(const std::string& dir, const Matrix& wx, const Matrix& wy, datagen::Shape xs,
                        datagen::Shape ys) {
  render::write_pgm(join(dir, "filters_x.pgm"), render::filter_grid(wx, xs));
  if (wy.cols() > 0) render::write_pgm(join(dir, "filters_y.pgm"), render::filter_grid(wy, ys));
}

Matrix rows_of(const Matrix& m, std::size_t begin, std::size_t end) {
  Matrix out(end - begin, m.cols());
  for (std::size_t r = begin; r < end; ++r) std::copy(m.row(r).begin(), m.row(r).end(), out.row(r - begin).begin());
  return out;
}

json trace_line(std::size_t epoch, std::optional<std::size_t> batch, double loss, std::optional<double> grad_norm) {
  json j;
  j["epoch"] = epoch;
  j["batch"] = batch ? json(*batch) : json(nullptr);
  j["loss"] = loss;
  j["grad_norm"] = grad_norm ? json(*grad_norm) : json(nullptr);
  return j;
}

void check_dims(const ModelSpec& m, const datagen::PairBatch& b) {
  if (m.input_dim && m.input_dim != b.input_dim())
    throw ConfigError("model.input_dim " + std::to_string(m.input_dim) + " does not match the dataset's " +
                      std::to_string(b.input_dim()));
  if (m.output_dim && m.output_dim != b.output_dim())
    throw ConfigError("model.output_dim " + std::to_string(m.output_dim) + " does not match the dataset's " +
                      std::to_string(b.output_dim()));
}

json whitening_to_json(const isa::PairWhitening& w) {
  return {{"mean", w.transform.mean},
          {"projection", w.transform.projection.storage()},
          {"rows", w.transform.projection.rows()},
          {"inverse_projection", w.transform.inverse_projection.storage()},
          {"retained_variance", w.transform.retained_variance},
          {"pixel_split", w.pixel_split},
          {"split", w.split}};
}

isa::PairWhitening whitening_from_json(const json& j) {
  isa::PairWhitening w;
  w.transform.mean = j.at("mean").get<Vector>();
  const std::size_t k = j.at("rows").get<std::size_t>(), n = w.transform.mean.size();
  w.transform.projection = Matrix(k, n);
  w.transform.projection.storage() = j.at("projection").get<std::vector<double>>();
  w.transform.inverse_projection = Matrix(n, k);
  w.transform.inverse_projection.storage() = j.at("inverse_projection").get<std::vector<double>>();
  if (w.transform.projection.storage().size() != k * n || w.transform.inverse_projection.storage().size() != k * n)
    throw DataError("whitening: matrix sizes do not match");
  w.transform.retained_variance = j.at("retained_variance").get<double>();
  w.pixel_split = j.at("pixel_split").get<std::size_t>();
  w.split = j.at("split").get<std::size_t>();
  return w;
}

json read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError(path + ": cannot open (train the model first)");
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) throw DataError(path + ": not valid JSON");
  return j;
}

constexpr double kLinearDriftR2 = 0.8;

// Frames per sample of a movie dataset, 0 for anything else.
std::size_t movie_frames(const LoadedDataset& data) {
  if (data.batch.label_kind != datagen::LabelKind::kVelocity) return 0;
  return data.manifest.at("generator").at("num_frames").get<std::size_t>();
}

// What the energy model sees: movies are split into leading and trailing
// frames so its stacked filters cover the whole movie.
datagen::PairBatch isa_view(const LoadedDataset& data) {
  const std::size_t frames = movie_frames(data);
  return frames ? isa::movie_halves(data.batch, frames) : data.batch;
}

}  // namespace

TrainResult cmd_train(const ExperimentConfig& config, bool resume) {
  const std::string dataset_path = config.resolved_dataset_path();
  const LoadedDataset data = load_dataset(dataset_path);
  const datagen::PairBatch& batch = data.batch;
  check_dims(config.model, batch);
  ensure_dir(config.output_dir);

  TrainResult r;
  r.checkpoint_path = join(config.output_dir, "model.relw");
  r.trace_path = join(config.output_dir, "trace.jsonl");
  const std::string manifest_path = join(config.output_dir, "train_manifest.json");
  const ModelSpec& ms = config.model;
  const TrainSpec& ts = config.train;
  const std::uint64_t seed = train_seed(config.seed);
  const std::size_t I = batch.input_dim(), J = batch.output_dim();

  std::size_t first_epoch = 0;
  json previous;
  if (resume) {
    if (ms.kind != ModelKind::kGae) throw ConfigError("resume is supported for gae runs only");
    previous = read_manifest(manifest_path);
    if (previous.value("kind", "") != "gae") throw ConfigError(manifest_path + ": not a gae run");
    first_epoch = previous.at("epochs_completed").get<std::size_t>();
  }

  std::ofstream trace(r.trace_path, resume ? std::ios::app : std::ios::trunc);
  if (!trace) throw DataError(r.trace_path + ": cannot open for writing");
  auto emit = [&](const json& line) { trace << line.dump() << '\n'; };

  json manifest = {{"kind", to_string(ms.kind)},
                   {"config", config.to_json()},
                   {"dataset", dataset_path},
                   {"checkpoint", "model.relw"},
                   {"trace", "trace.jsonl"},
                   {"x_shape", shape_json(batch.x_shape)},
                   {"y_shape", shape_json(batch.y_shape)}};
  std::vector<double> epoch_losses;

  if (ms.kind == ModelKind::kGae) {
    gae::GaeModel model;
    if (resume) {
      FactoredParams p = read_checkpoint(r.checkpoint_path);
      if (p.input_dim() != I || p.output_dim() != J || p.code_dim() != ms.code_dim || p.factors() != ms.factors)
        throw ConfigError(r.checkpoint_path + ": checkpoint dimensions do not match the config and dataset");
      const bool tied = previous.value("tied", false);
      if (tied != ms.tied) throw ConfigError("resume: tied flag differs from the checkpoint");
      model = gae::GaeModel::from_params(std::move(p), tied);
      model.set_norm_running_avg(previous.at("norm_running_avg").get<double>());
      epoch_losses = previous.value("epoch_losses", std::vector<double>{});
    } else {
      model = gae::GaeModel::init(I, J, ms.code_dim, ms.factors, ms.tied, init_seed(config.seed));
    }
    gae::TrainConfig tc;
    tc.learning_rate = ts.learning_rate;
    tc.momentum = ts.momentum;
    tc.epochs = ts.epochs > first_epoch ? ts.epochs - first_epoch : 0;
    tc.batch_size = ts.batch_size;
    tc.sparsity_weight = ts.sparsity_weight;
    tc.corruption_level = ts.corruption_level;
    tc.norm_constraint = ts.norm_constraint;
    tc.norm_decay = ts.norm_decay;
    tc.seed = seed;
    gae::TrainCallbacks cb;
    cb.on_batch = [&](const gae::TraceRecord& t) { emit(trace_line(t.epoch, t.batch, t.loss, t.grad_norm)); };
    const gae::TrainResult res = gae::train(model, batch, tc, cb, first_epoch);
    epoch_losses.insert(epoch_losses.end(), res.epoch_losses.begin(), res.epoch_losses.end());
    r.initial_loss = resume ? previous.value("initial_loss", res.initial_loss) : res.initial_loss;
    r.final_loss = res.final_loss;
    r.epochs_completed = first_epoch + tc.epochs;
    const FactoredParams p = model.to_params();
    write_checkpoint(r.checkpoint_path, p);
    write_filter_grids(config.output_dir, p.wx, ms.tied ? Matrix() : p.wy, batch.x_shape, batch.y_shape);
    manifest["tied"] = ms.tied;
    manifest["norm_running_avg"] = model.norm_running_avg();
  } else if (ms.kind == ModelKind::kGrbm) {
    grbm::GbmModel model = grbm::GbmModel::init(I, J, ms.code_dim, ms.factors, init_seed(config.seed));
    grbm::CdConfig cc;
    cc.learning_rate = ts.learning_rate;
    cc.momentum = ts.momentum;
    cc.epochs = ts.epochs;
    cc.batch_size = ts.batch_size;
    cc.norm_constraint = ts.norm_constraint;
    cc.norm_decay = ts.norm_decay;
    cc.seed = seed;
    const grbm::CdResult res = grbm::train(model, batch, cc);
    for (std::size_t e = 0; e < res.epoch_reconstruction_error.size(); ++e)
      emit(trace_line(e, std::nullopt, res.epoch_reconstruction_error[e], std::nullopt));
    epoch_losses = res.epoch_reconstruction_error;
    r.initial_loss = epoch_losses.empty() ? 0.0 : epoch_losses.front();
    r.final_loss = epoch_losses.empty() ? 0.0 : epoch_losses.back();
    r.epochs_completed = ts.epochs;
    write_checkpoint(r.checkpoint_path, model.params);
    write_filter_grids(config.output_dir, model.params.wx, model.params.wy, batch.x_shape, batch.y_shape);
    manifest["norm_running_avg"] = model.norm_running_avg;
  } else {
    if (ms.factors % ms.subspace_size != 0) throw ConfigError("model.factors must be a multiple of subspace_size");
    const datagen::PairBatch pairs = isa_view(data);
    const isa::PairWhitening pw = isa::fit_pair_whitening(pairs, ms.whitening_variance);
    const datagen::PairBatch white = isa::apply_pair_whitening(pairs, pw);
    isa::EnergyModel model =
        isa::init_energy_model(white.input_dim(), white.output_dim(), ms.factors, ms.subspace_size, init_seed(config.seed));
    isa::IsaConfig ic;
    ic.learning_rate = ts.learning_rate;
    ic.momentum = ts.momentum;
    ic.epochs = ts.epochs;
    ic.batch_size = ts.batch_size;
    ic.learn_pooling = ms.learn_pooling;
    ic.seed = seed;
    const isa::IsaResult res = isa::train_isa(model, white, ic);
    for (std::size_t e = 0; e < res.epoch_objective.size(); ++e)
      emit(trace_line(e, std::nullopt, res.epoch_objective[e], std::nullopt));
    epoch_losses = res.epoch_objective;
    r.initial_loss = isa::isa_objective(isa::init_energy_model(white.input_dim(), white.output_dim(), ms.factors,
                                                               ms.subspace_size, init_seed(config.seed)),
                                        white, ic.epsilon);
    r.final_loss = epoch_losses.empty() ? r.initial_loss : epoch_losses.back();
    r.epochs_completed = ts.epochs;
    isa::write_isa_checkpoint(r.checkpoint_path, model);
    write_text(join(config.output_dir, "whitening.json"), whitening_to_json(pw).dump() + "\n");
    const Matrix px = isa::pixel_filters(model, pw);
    if (movie_frames(data))
      write_filter_grids(config.output_dir, px, Matrix(), batch.x_shape, batch.y_shape);
    else
      write_filter_grids(config.output_dir, rows_of(px, 0, I), rows_of(px, I, I + J), batch.x_shape, batch.y_shape);
    manifest["whitening"] = "whitening.json";
  }
  trace.close();
  if (!trace) throw DataError(r.trace_path + ": write failed");

  manifest["epochs_completed"] = r.epochs_completed;
  manifest["initial_loss"] = r.initial_loss;
  manifest["final_loss"] = r.final_loss;
  manifest["epoch_losses"] = epoch_losses;
  manifest["created_at"] = timestamp();
  write_text(manifest_path, manifest.dump(2) + "\n");
  return r;
}

// ---- analysis ----

namespace {

std::vector<WarpMatrix> reference_warps(const std::string& kind, datagen::Shape s) {
  const std::size_t h = s.height, w = s.width, n = s.size();
  if (n > infer::kMaxFlowPixels) throw ConfigError("analyze: reference warps limited to 1024 pixels");
  std::vector<WarpMatrix> warps;
  if (kind == "identity") {
    WarpMatrix id;
    id.L = Matrix(n, n);
    for (std::size_t i = 0; i < n; ++i) id.L(i, i) = 1.0;
    id.kind = WarpKind::kPermutation;
    warps.push_back(std::move(id));
  } else if (kind == "shift") {
    if (w > 1) warps.push_back(spectral::make_2d_shift(h, w, 0, 1));
    if (h > 1) warps.push_back(spectral::make_2d_shift(h, w, 1, 0));
  } else if (kind == "split") {
    if (h % 2) throw ConfigError("analyze: split warps need an even patch height");
    warps.push_back(spectral::make_split_shift(h, w, {1, 0}, {0, 0}));
    warps.push_back(spectral::make_split_shift(h, w, {0, 1}, {0, 0}));
    warps.push_back(spectral::make_split_shift(h, w, {0, 0}, {1, 0}));
    warps.push_back(spectral::make_split_shift(h, w, {0, 0}, {0, 1}));
  }
  return warps;
}

// Ground-truth y for x_new under the transformation labeled on pair a, when
// the dataset's labels determine it exactly.
std::optional<Vector> transferred_target(const datagen::PairBatch& b, std::size_t a, std::span<const double> x_new,
                                         bool wraparound) {
  if (b.label_kind == datagen::LabelKind::kShift && wraparound)
    return datagen::shift_image(x_new, b.x_shape, {int(b.labels(a, 0)), int(b.labels(a, 1))},
                                datagen::EdgeMode::kWrap);
  if (b.label_kind == datagen::LabelKind::kSplitShift)
    return datagen::split_shift_image(x_new, b.x_shape, {int(b.labels(a, 0)), int(b.labels(a, 1))},
                                      {int(b.labels(a, 2)), int(b.labels(a, 3))});
  return std::nullopt;
}

json label_json(const datagen::PairBatch& b, std::size_t a) {
  if (b.label_kind == datagen::LabelKind::kNone) return nullptr;
  json arr = json::array();
  for (double v : b.labels.row(a)) arr.push_back(v);
  return arr;
}

}  // namespace

AnalyzeResult cmd_analyze(const ExperimentConfig& config) {
  const json run = read_manifest(join(config.output_dir, "train_manifest.json"));
  const std::string kind = run.value("kind", "");
  const LoadedDataset data = load_dataset(config.resolved_dataset_path());
  const datagen::PairBatch& batch = data.batch;
  const std::size_t I = batch.input_dim(), J = batch.output_dim(), n = batch.size();
  const datagen::Shape xs = batch.x_shape, ys = batch.y_shape;
  const std::string ckpt = join(config.output_dir, run.value("checkpoint", "model.relw"));
  const bool wraparound = data.manifest.contains("generator") ? data.manifest["generator"].value("wraparound", true)
                                                               : true;

  json report;
  report["kind"] = kind;
  report["dataset"] = config.resolved_dataset_path();
  report["num_pairs"] = n;

  // Filters in pixel space for the diagnostics.
  Matrix filters_x;
  FactoredParams params;
  std::optional<isa::EnergyModel> energy;
  std::optional<isa::PairWhitening> whitening;
  datagen::PairBatch isa_pairs;
  if (kind == "gae" || kind == "grbm") {
    params = read_checkpoint(ckpt);
    if (params.input_dim() != I || params.output_dim() != J)
      throw DimensionError(ckpt + ": checkpoint dimensions do not match the dataset");
    filters_x = params.wx;
  } else if (kind == "isa") {
    energy = isa::read_isa_checkpoint(ckpt);
    whitening = whitening_from_json(read_manifest(join(config.output_dir, run.value("whitening", "whitening.json"))));
    isa_pairs = isa_view(data);
    if (whitening->pixel_split != isa_pairs.input_dim() ||
        whitening->transform.input_dim() != isa_pairs.input_dim() + isa_pairs.output_dim())
      throw DimensionError("analyze: whitening does not match the dataset");
    // A movie's filter is the whole stack; a pair's x filter the leading rows.
    filters_x = rows_of(isa::pixel_filters(*energy, *whitening), 0, I);
  } else {
    throw DataError("train_manifest.json: unknown model kind '" + kind + "'");
  }

  std::string warp = config.analyze.warp;
  if (warp == "auto") {
    warp = batch.label_kind == datagen::LabelKind::kShift        ? "shift"
           : batch.label_kind == datagen::LabelKind::kSplitShift ? "split"
                                                                  : "none";
  }
  report["warp"] = warp;
  if (warp != "none") {
    const std::vector<WarpMatrix> warps = reference_warps(warp, xs);
    const spectral::EigenStructure eig = spectral::shared_eigenbasis(warps);
    const spectral::DiagnosticsReport diag = spectral::filter_diagnostics(filters_x, eig);
    write_text(join(config.output_dir, "diagnostics.json"), diag.to_json() + "\n");
    write_text(join(config.output_dir, "diagnostics.csv"), diag.to_csv());
    report["diagnostics"] = {{"mean_fraction", diag.mean_fraction},
                             {"mean_quadrature", diag.mean_quadrature},
                             {"histogram", diag.histogram},
                             {"file", "diagnostics.json"}};
    json eigs = json::array();
    for (const auto& ev : eig.eigenvalues) {
      json list = json::array();
      for (Eigen::Index i = 0; i < ev.size(); ++i) list.push_back({ev(i).real(), ev(i).imag()});
      eigs.push_back(std::move(list));
    }
    report["eigenvalues"] = std::move(eigs);
  }

  if (const std::size_t frames = movie_frames(data)) {
    const datagen::Shape frame{xs.height / frames, xs.width};
    json per_factor = json::array();
    std::size_t linear = 0;
    for (std::size_t f = 0; f < filters_x.cols(); ++f) {
      const Vector col = filters_x.col(f);
      const spectral::PhaseDrift d = spectral::phase_drift(col, frame, frames);
      linear += d.r_squared > kLinearDriftR2;
      per_factor.push_back({{"factor", f},
                            {"freq_u", d.freq_u},
                            {"freq_v", d.freq_v},
                            {"slope", d.slope},
                            {"r_squared", d.r_squared}});
    }
    report["phase_drift"] = {{"r_squared_threshold", kLinearDriftR2},
                             {"linear_fraction", double(linear) / double(filters_x.cols())},
                             {"factors", std::move(per_factor)}};
  }

  const std::size_t samples = std::min(config.analyze.samples, n);
  if (kind == "isa") {
    const datagen::PairBatch white = isa::apply_pair_whitening(isa_pairs, *whitening);
    double worst = 0.0;
    for (std::size_t a = 0; a < std::min<std::size_t>(n, 1000); ++a) {
      const Vector z = isa::energy_response(*energy, white.x.row(a), white.y.row(a));
      const isa::EnergyExpansion e = isa::expand_energy(*energy, white.x.row(a), white.y.row(a));
      for (std::size_t k = 0; k < z.size(); ++k)
        worst = std::max(worst, std::abs(z[k] - (2 * e.cross[k] + e.quadratic[k] + energy->bias_z[k])) /
                                    std::max(1.0, std::abs(z[k])));
    }
    report["energy_identity_max_error"] = worst;
  } else if (xs == ys && xs.height == xs.width && xs.size() <= infer::kMaxFlowPixels &&
             batch.label_kind != datagen::LabelKind::kVelocity && n > 1) {
    const FactorView view = FactorView::of(params);
    const std::size_t zoom = 12;
    std::vector<std::vector<render::GrayImage>> strip;
    json flows = json::array(), analogies = json::array();
    double corr_sum = 0.0;
    std::size_t corr_count = 0;
    for (std::size_t a = 0; a < samples; ++a) {
      const std::size_t b = (a + 1) % n;
      const auto x_src = batch.x.row(a), y_src = batch.y.row(a), x_new = batch.x.row(b);
      const infer::FlowField flow = infer::infer_flow(view, x_src, y_src, xs);
      const datagen::Shift med = infer::median_displacement(flow);
      const render::GrayImage flow_img = infer::render_flow(flow, zoom);
      render::write_pgm(join(config.output_dir, "flow_" + std::to_string(a) + ".pgm"), flow_img);
      flows.push_back({{"pair", a},
                       {"median", {{"dr", med.dy}, {"dc", med.dx}}},
                       {"uniform_fraction", infer::uniform_fraction(flow)},
                       {"label", label_json(batch, a)}});
      const Vector pred = infer::analogy(view, x_src, y_src, x_new);
      json entry = {{"pair", a}, {"new_input", b}};
      if (const auto want = transferred_target(batch, a, x_new, wraparound)) {
        const double c = infer::correlation(pred, *want);
        entry["correlation"] = c;
        corr_sum += c;
        ++corr_count;
      }
      analogies.push_back(std::move(entry));
      strip.push_back({render::panel(x_src, xs, zoom), render::panel(y_src, ys, zoom), flow_img,
                       render::panel(x_new, xs, zoom), render::panel(pred, ys, zoom)});
    }
    render::write_pgm(join(config.output_dir, "analogy.pgm"), render::panel_rows(strip));
    report["flow"] = std::move(flows);
    report["analogy"] = std::move(analogies);
    report["analogy_columns"] = {"x_src", "y_src", "flow", "x_new", "y_pred"};
    if (corr_count) report["analogy_mean_correlation"] = corr_sum / double(corr_count);
  }

  AnalyzeResult r;
  r.report_path = join(config.output_dir, "analysis.json");
  write_text(r.report_path, report.dump(2) + "\n");
  r.report = std::move(report);
  return r;
}

// ---- export ----

void export_filters(const std::string& checkpoint_path, const std::string& out_dir,
                    std::optional<datagen::Shape> x_shape, std::optional<datagen::Shape> y_shape) {
  const FactoredParams p = read_checkpoint(checkpoint_path);
  auto default_shape = [](std::size_t n) {
    const auto side = static_cast<std::size_t>(std::llround(std::sqrt(double(n))));
    return side * side == n ? datagen::Shape{side, side} : datagen::Shape{1, n};
  };
  const datagen::Shape xs = x_shape.value_or(default_shape(p.input_dim()));
  const datagen::Shape ys = y_shape.value_or(default_shape(p.output_dim()));
  if (xs.size() != p.input_dim() || ys.size() != p.output_dim())
    throw DimensionError("export-filters: shape does not match the checkpoint dimensions");
  ensure_dir(out_dir);
  write_filter_grids(out_dir, p.wx, p.wy, xs, ys);
  std::ostringstream csv;
  csv.precision(17);
  csv << "factor,block,index,value\n";
  for (std::size_t f = 0; f < p.factors(); ++f) {
    for (std::size_t i = 0; i < p.input_dim(); ++i) csv << f << ",x," << i << ',' << p.wx(i, f) << '\n';
    for (std::size_t j = 0; j < p.output_dim(); ++j) csv << f << ",y," << j << ',' << p.wy(j, f) << '\n';
    for (std::size_t k = 0; k < p.code_dim(); ++k) csv << f << ",z," << k << ',' << p.wz(k, f) << '\n';
  }
  write_text(join(out_dir, "filters.csv"), csv.str());
}

// ---- gradient check ----

GradcheckReport run_gradcheck(std::uint64_t seed, std::size_t num_configs) {
  GradcheckReport report;
  Rng rng(seed);
  std::uniform_int_distribution<std::size_t> dim(4, 36), fac(2, 8), code(2, 6);
  std::normal_distribution<double> g(0.0, 1.0);
  for (std::size_t c = 0; c < num_configs; ++c) {
    GradcheckCase gc;
    gc.tied = c & 1;
    gc.sparsity_weight = (c >> 1) & 1 ? 0.01 : 0.0;
    gc.corruption_level = (c >> 2) & 1 ? 0.3 : 0.0;
    gc.input_dim = dim(rng);
    const std::size_t J = gc.tied ? gc.input_dim : dim(rng);
    gc.factors = fac(rng);
    gc.code_dim = code(rng);
    FactoredParams p = FactoredParams::zeros(gc.input_dim, J, gc.code_dim, gc.factors);
    fill_gaussian(p.wx, 0.3, rng);
    fill_gaussian(p.wy, 0.3, rng);
    fill_gaussian(p.wz, 0.3, rng);
    for (double& v : p.bias_x) v = 0.1 * g(rng);
    for (double& v : p.bias_y) v = 0.1 * g(rng);
    for (double& v : p.bias_z) v = 0.1 * g(rng);
    if (gc.tied) p.wy = p.wx;
    datagen::PairBatch b;
    b.x = Matrix(4, gc.input_dim);
    b.y = Matrix(4, J);
    fill_gaussian(b.x, 1.0, rng);
    fill_gaussian(b.y, 1.0, rng);
    b.x_shape = {1, gc.input_dim};
    b.y_shape = {1, J};
    gae::TrainConfig cfg;
    cfg.sparsity_weight = gc.sparsity_weight;
    cfg.corruption_level = gc.corruption_level;
    cfg.seed = rng();
    const gae::GradCheckResult r =
        gae::check_gradients(gae::GaeModel::from_params(std::move(p), gc.tied), b, cfg, 1e-5);
    gc.max_rel_error = r.max_rel_error;
    gc.entries_checked = r.entries_checked;
    report.max_rel_error = std::max(report.max_rel_error, r.max_rel_error);
    report.cases.push_back(gc);
  }
  return report;
}

}  // namespace relate::experiment

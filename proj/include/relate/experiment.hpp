// Copyright 2026 The Relate Authors
// SPDX-License-Identifier: Apache-2.0

// Reproducible experiment runs behind the `relate` command: dataset
// generation, training, analysis and filter export, driven by one JSON
// config. Every output except the timestamps inside manifests is a pure
// function of (config, seed, input files).

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "relate/datagen.hpp"
#include "relate/gae.hpp"

namespace relate::experiment {

enum class ModelKind { kGae, kGrbm, kIsa };
std::string to_string(ModelKind kind);

// How generated patches are scaled before training. sqrt_dim gives unit
// mean-square pixels, which is the scale the gated models train well at.
enum class Normalization { kNone, kUnit, kSqrtDim };

struct DatasetSpec {
  std::string generator = "shift";  // shift | splitscreen | rotation | movies
  std::size_t num_pairs = 1000;
  std::size_t height = 13;
  std::size_t width = 13;
  double dot_density = 0.1;
  int max_shift = 2;           // shift, splitscreen
  bool wraparound = true;      // shift
  double max_angle = 3.141592653589793;  // rotation
  bool nearest = false;        // rotation: nearest-neighbour instead of bilinear
  std::size_t num_frames = 10;  // movies
  int max_speed = 1;            // movies
  Normalization normalization = Normalization::kSqrtDim;

  nlohmann::json to_json() const;
  static DatasetSpec from_json(const nlohmann::json& j);
};

struct ModelSpec {
  ModelKind kind = ModelKind::kGae;
  std::size_t factors = 64;
  std::size_t code_dim = 16;
  bool tied = false;              // gae only
  std::size_t subspace_size = 2;  // isa pooling
  bool learn_pooling = false;     // isa
  double whitening_variance = 1.0;  // isa: share of variance kept by PCA whitening
  // 0 means "take it from the dataset"; otherwise must match it.
  std::size_t input_dim = 0;
  std::size_t output_dim = 0;

  nlohmann::json to_json() const;
  static ModelSpec from_json(const nlohmann::json& j);
};

struct TrainSpec {
  double learning_rate = 0.01;
  double momentum = 0.9;
  std::size_t epochs = 10;
  std::size_t batch_size = 100;
  double sparsity_weight = 0.0;
  double corruption_level = 0.0;
  bool norm_constraint = true;
  double norm_decay = 0.95;

  nlohmann::json to_json() const;
  static TrainSpec from_json(const nlohmann::json& j);
};

struct AnalyzeSpec {
  // Reference warps for the filter diagnostics: auto (from the dataset's
  // labels), shift, split, identity or none.
  std::string warp = "auto";
  std::size_t samples = 8;  // pairs rendered as flow fields / analogy rows

  nlohmann::json to_json() const;
  static AnalyzeSpec from_json(const nlohmann::json& j);
};

struct ExperimentConfig {
  std::uint64_t seed = 0;
  std::string output_dir = ".";
  std::string dataset_path;  // empty: <output_dir>/data.relb
  DatasetSpec dataset;
  ModelSpec model;
  TrainSpec train;
  AnalyzeSpec analyze;

  std::string resolved_dataset_path() const;
  nlohmann::json to_json() const;
  // Throws ConfigError on unknown keys, bad values or a missing seed.
  static ExperimentConfig from_json(const nlohmann::json& j);
};

// "a.b.c=value": value parsed as JSON when possible, else taken as a string.
void apply_override(nlohmann::json& config, const std::string& assignment);
nlohmann::json read_json_file(const std::string& path);

// Seeds for the independent parts of a run.
std::uint64_t data_seed(std::uint64_t seed);
std::uint64_t init_seed(std::uint64_t seed);
std::uint64_t train_seed(std::uint64_t seed);

datagen::PairBatch generate_dataset(const DatasetSpec& spec, std::uint64_t seed);

// <dir>/<stem>.manifest.json next to <dir>/<stem>.relb
std::string manifest_path_for(const std::string& dataset_path);

struct LoadedDataset {
  datagen::PairBatch batch;
  nlohmann::json manifest;
};
// Reads the RELB file and restores patch shapes from its manifest.
LoadedDataset load_dataset(const std::string& path);
// Regenerates the batch a dataset manifest describes.
datagen::PairBatch regenerate_from_manifest(const nlohmann::json& manifest);

struct GenerateResult {
  std::string dataset_path;
  std::string manifest_path;
};
GenerateResult cmd_generate(const ExperimentConfig& config);

struct TrainResult {
  std::string checkpoint_path;
  std::string trace_path;
  std::size_t epochs_completed = 0;
  double initial_loss = 0.0;
  double final_loss = 0.0;
};
// With resume, continues a gae run in output_dir from its last completed
// epoch up to train.epochs, appending to the trace.
TrainResult cmd_train(const ExperimentConfig& config, bool resume = false);

struct AnalyzeResult {
  std::string report_path;
  nlohmann::json report;
};
// Analyzes the trained run in output_dir against its dataset.
AnalyzeResult cmd_analyze(const ExperimentConfig& config);

// Writes filters_x.pgm / filters_y.pgm (and filters.csv) for a RELW
// checkpoint. Shapes default to square patches.
void export_filters(const std::string& checkpoint_path, const std::string& out_dir,
                    std::optional<datagen::Shape> x_shape = std::nullopt,
                    std::optional<datagen::Shape> y_shape = std::nullopt);

struct GradcheckCase {
  bool tied = false;
  double sparsity_weight = 0.0;
  double corruption_level = 0.0;
  std::size_t input_dim = 0;
  std::size_t factors = 0;
  std::size_t code_dim = 0;
  double max_rel_error = 0.0;
  std::size_t entries_checked = 0;
};
struct GradcheckReport {
  std::vector<GradcheckCase> cases;
  double max_rel_error = 0.0;
};
// Finite-difference check of the gae gradients over num_configs random
// models cycling through tied/untied, λ ∈ {0, 0.01} and denoising on/off.
GradcheckReport run_gradcheck(std::uint64_t seed, std::size_t num_configs = 24);

}  // namespace relate::experiment

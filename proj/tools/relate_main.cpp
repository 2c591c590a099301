// Copyright 2026 The Relate Authors
// SPDX-License-Identifier: Apache-2.0

// relate: generate | train | analyze | export-filters | gradcheck
//
// Exit codes: 0 ok, 2 config error, 3 data error, 4 numerical failure.

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "relate/errors.hpp"
#include "relate/experiment.hpp"

namespace ex = relate::experiment;
using nlohmann::json;

namespace {

constexpr int kConfigError = 2;
constexpr int kDataError = 3;
constexpr int kNumericalError = 4;

struct Common {
  std::string config_path;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string dataset;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("-c,--config", c.config_path, "JSON config file");
  app->add_option("--set", c.overrides, "Override a config key, e.g. --set train.epochs=5 (repeatable)");
  app->add_option("--seed", c.seed, "Experiment seed");
  app->add_option("-o,--out", c.out, "Output directory");
  app->add_option("--dataset", c.dataset, "Dataset path (default <out>/data.relb)");
}

// Config file first, then --set, then the dedicated flags: the command line
// wins over the file.
ex::ExperimentConfig build_config(const Common& c, const std::vector<std::string>& extra) {
  json j = c.config_path.empty() ? json::object() : ex::read_json_file(c.config_path);
  for (const auto& o : c.overrides) ex::apply_override(j, o);
  for (const auto& o : extra) ex::apply_override(j, o);
  if (c.seed) j["seed"] = *c.seed;
  if (!c.out.empty()) j["output_dir"] = c.out;
  if (!c.dataset.empty()) j["dataset_path"] = c.dataset;
  return ex::ExperimentConfig::from_json(j);
}

relate::datagen::Shape parse_shape(const std::string& s) {
  const auto x = s.find('x');
  if (x == std::string::npos) throw relate::ConfigError("shape '" + s + "': expected HxW");
  try {
    return {std::stoul(s.substr(0, x)), std::stoul(s.substr(x + 1))};
  } catch (const std::exception&) {
    throw relate::ConfigError("shape '" + s + "': expected HxW");
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Gated relational feature learning experiments"};
  app.require_subcommand(1);

  Common gen_opts, train_opts, analyze_opts;
  std::optional<std::string> generator;
  std::optional<std::size_t> num_pairs;
  auto* gen = app.add_subcommand("generate", "Generate a RELB dataset and its manifest");
  add_common(gen, gen_opts);
  gen->add_option("--generator", generator, "shift | splitscreen | rotation | movies");
  gen->add_option("--num-pairs", num_pairs, "Number of pairs");

  std::optional<std::size_t> epochs;
  std::optional<double> lr;
  std::optional<std::string> model_kind;
  bool resume = false;
  auto* train = app.add_subcommand("train", "Train a model on a generated dataset");
  add_common(train, train_opts);
  train->add_option("--epochs", epochs, "Total epochs");
  train->add_option("--lr", lr, "Learning rate");
  train->add_option("--model", model_kind, "gae | grbm | isa");
  train->add_flag("--resume", resume, "Continue a gae run from its checkpoint");

  std::optional<std::string> warp;
  std::optional<std::size_t> samples;
  auto* analyze = app.add_subcommand("analyze", "Diagnostics, flow fields and analogies for a trained run");
  add_common(analyze, analyze_opts);
  analyze->add_option("--warp", warp, "auto | shift | split | identity | none");
  analyze->add_option("--samples", samples, "Pairs rendered as flow fields and analogy rows");

  std::string checkpoint, export_out = ".", x_shape, y_shape;
  auto* exp = app.add_subcommand("export-filters", "Render the filters of a RELW checkpoint");
  exp->add_option("checkpoint", checkpoint, "RELW checkpoint")->required();
  exp->add_option("-o,--out", export_out, "Output directory");
  exp->add_option("--x-shape", x_shape, "Input patch shape HxW");
  exp->add_option("--y-shape", y_shape, "Output patch shape HxW");

  std::uint64_t gc_seed = 0;
  std::size_t gc_configs = 24;
  auto* gc = app.add_subcommand("gradcheck", "Finite-difference check of the gae gradients");
  gc->add_option("--seed", gc_seed, "Seed for the random models");
  gc->add_option("--configs", gc_configs, "Number of random configurations");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kConfigError;
  }

  try {
    if (gen->parsed()) {
      std::vector<std::string> extra;
      if (generator) extra.push_back("dataset.generator=\"" + *generator + "\"");
      if (num_pairs) extra.push_back("dataset.num_pairs=" + std::to_string(*num_pairs));
      const auto r = ex::cmd_generate(build_config(gen_opts, extra));
      std::cout << "wrote " << r.dataset_path << " and " << r.manifest_path << "\n";
    } else if (train->parsed()) {
      std::vector<std::string> extra;
      if (epochs) extra.push_back("train.epochs=" + std::to_string(*epochs));
      if (lr) extra.push_back("train.learning_rate=" + json(*lr).dump());
      if (model_kind) extra.push_back("model.kind=\"" + *model_kind + "\"");
      const auto r = ex::cmd_train(build_config(train_opts, extra), resume);
      std::cout << "epochs " << r.epochs_completed << ", loss " << r.initial_loss << " -> " << r.final_loss
                << "\nwrote " << r.checkpoint_path << " and " << r.trace_path << "\n";
    } else if (analyze->parsed()) {
      std::vector<std::string> extra;
      if (warp) extra.push_back("analyze.warp=\"" + *warp + "\"");
      if (samples) extra.push_back("analyze.samples=" + std::to_string(*samples));
      const auto r = ex::cmd_analyze(build_config(analyze_opts, extra));
      if (r.report.contains("diagnostics"))
        std::cout << "mean subspace fraction " << r.report["diagnostics"]["mean_fraction"].get<double>() << "\n";
      if (r.report.contains("analogy_mean_correlation"))
        std::cout << "mean analogy correlation " << r.report["analogy_mean_correlation"].get<double>() << "\n";
      std::cout << "wrote " << r.report_path << "\n";
    } else if (exp->parsed()) {
      std::optional<relate::datagen::Shape> xs, ys;
      if (!x_shape.empty()) xs = parse_shape(x_shape);
      if (!y_shape.empty()) ys = parse_shape(y_shape);
      ex::export_filters(checkpoint, export_out, xs, ys);
      std::cout << "wrote filters to " << export_out << "\n";
    } else if (gc->parsed()) {
      const auto r = ex::run_gradcheck(gc_seed, gc_configs);
      for (std::size_t i = 0; i < r.cases.size(); ++i) {
        const auto& c = r.cases[i];
        std::printf("config %2zu tied=%d lambda=%.2f corruption=%.1f I=%zu F=%zu K=%zu  max rel error %.3e\n", i,
                    int(c.tied), c.sparsity_weight, c.corruption_level, c.input_dim, c.factors, c.code_dim,
                    c.max_rel_error);
      }
      std::printf("max relative error %.3e\n", r.max_rel_error);
      if (!(r.max_rel_error < 1e-5)) return kNumericalError;
    }
  } catch (const relate::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const relate::DimensionError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const relate::NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kNumericalError;
  } catch (const relate::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kDataError;
  } catch (const std::exception& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kDataError;
  }
  return 0;
}

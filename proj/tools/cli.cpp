#include "cli.hpp"

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <ostream>
#include <sstream>

#include "invnet/analysis.hpp"
#include "invnet/data.hpp"
#include "invnet/error.hpp"
#include "invnet/image_io.hpp"
#include "invnet/model.hpp"
#include "invnet/rng.hpp"
#include "invnet/train.hpp"
#include "json.hpp"

namespace invnet::cli {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

class UsageError : public Error {
 public:
  using Error::Error;
};

// ---------------------------------------------------------------- helpers

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open " + path.string() + " for writing");
  out << text;
}

fs::path output_dir(const RunConfig& cfg) {
  fs::path dir = cfg.out_dir.empty() ? fs::path(".") : fs::path(cfg.out_dir);
  fs::create_directories(dir);
  return dir;
}

ModelVariant variant_of(const RunConfig& cfg) { return ModelVariant::parse(cfg.variant, cfg.inv_layers); }

TrainConfig train_config_of(const RunConfig& cfg) {
  TrainConfig t;
  t.learning_rate = cfg.lr;
  t.epochs = cfg.epochs;
  t.batch_size = cfg.batch;
  t.seed = Rng(cfg.seed).derive("train").seed();
  t.validate();
  return t;
}

Model fresh_model(const RunConfig& cfg, const ModelVariant& variant) {
  Rng init = Rng(cfg.seed).derive("init");
  return build_model(variant, init);
}

std::string dataset_label(const RunConfig& cfg) {
  if (!cfg.dataset_name.empty()) return cfg.dataset_name;
  if (cfg.synthetic_per_class > 0) return "synthetic";
  std::string label;
  for (const auto& root : cfg.data) {
    if (!label.empty()) label += "+";
    label += fs::path(root).lexically_normal().filename().string();
    if (label.empty() || label.back() == '+') label += root;
  }
  return label;
}

/// Unsplit dataset from --synthetic or the --data roots.
Dataset raw_dataset(const RunConfig& cfg, std::ostream& err) {
  if (cfg.synthetic_per_class > 0) {
    SyntheticSpec spec;
    spec.per_class = cfg.synthetic_per_class;
    Rng rng = Rng(cfg.seed).derive("synthetic");
    return generate_synthetic(spec, rng);
  }
  if (cfg.data.empty()) throw UsageError("no data: pass --data <root> or --synthetic <count per class>");
  Dataset ds;
  for (const auto& root : cfg.data) {
    merge_datasets(ds, load_directory(root, [&err](const std::string& msg) { err << "warning: " << msg << '\n'; }));
  }
  return ds;
}

/// Split (80:10:10) and augment according to --augment.
Dataset prepared_dataset(const RunConfig& cfg, std::ostream& err) {
  Dataset ds = raw_dataset(cfg, err);
  Rng aug = Rng(cfg.seed).derive("augment");
  if (cfg.augment == "paper-compat") return split_dataset(augment_all(ds, AugmentSpec{}, aug), cfg.seed);
  ds = split_dataset(std::move(ds), cfg.seed);
  if (cfg.augment == "on") return augment_dataset(ds, AugmentSpec{}, aug);
  if (cfg.augment == "off") return ds;
  throw UsageError("--augment must be on, off or paper-compat");
}

json metrics_json(const Metrics& m) {
  const auto& c = m.confusion.counts;
  return {{"accuracy", m.accuracy},
          {"recall", m.recall},
          {"f1", m.f1},
          {"class_recall", {{"ASD", m.class_recall[0]}, {"TD", m.class_recall[1]}}},
          {"class_precision", {{"ASD", m.class_precision[0]}, {"TD", m.class_precision[1]}}},
          {"confusion", {{c[0][0], c[0][1]}, {c[1][0], c[1][1]}}}};
}

std::string metrics_line(const Metrics& m) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(2) << "accuracy " << m.accuracy << "  recall " << m.recall << "  f1 " << m.f1;
  return s.str();
}

void print_split_counts(const Dataset& ds, std::ostream& out) {
  out << "dataset: " << ds.size() << " items (train " << ds.count(Split::Train) << ", val " << ds.count(Split::Val)
      << ", test " << ds.count(Split::Test) << ")\n";
}

TrainResult fit(Model& model, const Dataset& ds, const RunConfig& cfg, std::ostream& out) {
  return train(model, ds, train_config_of(cfg), [&out](const EpochLog& e) {
    out << "epoch " << std::setw(3) << e.epoch << "  loss " << std::fixed << std::setprecision(6) << e.train_loss
        << "  val " << metrics_line(e.val) << '\n';
  });
}

// ---------------------------------------------------------------- commands

int run_summary(const RunConfig& cfg, std::ostream& out) {
  const ModelVariant variant = variant_of(cfg);
  const Model model = fresh_model(cfg, variant);
  const ModelSummary s = summarize(model);
  std::ostringstream text;
  text << "Model: " << variant.label() << '\n' << s.to_string();
  text << "Storage size: " << std::fixed << std::setprecision(2) << storage_size_mb(model) << " MB\n";
  out << text.str();
  if (!cfg.out_dir.empty()) write_text(output_dir(cfg) / "summary.txt", text.str());
  return kOk;
}

int run_train(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  const ModelVariant variant = variant_of(cfg);
  const Dataset ds = prepared_dataset(cfg, err);
  print_split_counts(ds, out);
  Model model = fresh_model(cfg, variant);
  const TrainResult result = fit(model, ds, cfg, out);
  const Metrics test = evaluate(model, ds, Split::Test);
  out << "test " << metrics_line(test) << '\n';

  const fs::path dir = output_dir(cfg);
  save_model(model, dir / "model.ivcn");
  write_text(dir / "epochs.csv", epoch_log_csv(result));
  write_text(dir / "summary.txt", summarize(model).to_string());
  const std::vector<ReportRow> rows{
      {dataset_label(cfg), variant.label(), test, model.param_count().total, storage_size_mb(model)}};
  export_report(rows, dir / "report.json", dir / "report.csv");
  return kOk;
}

int run_eval(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  if (cfg.model_path.empty()) throw UsageError("eval needs --model");
  Model model = load_model(cfg.model_path);
  const Dataset ds = prepared_dataset(cfg, err);
  std::vector<std::size_t> idx;
  if (cfg.split == "all") {
    for (std::size_t i = 0; i < ds.size(); ++i)
      if (ds.items[i].provenance == Provenance::Original) idx.push_back(i);
  } else if (cfg.split == "train") {
    idx = ds.indices(Split::Train);
  } else if (cfg.split == "val") {
    idx = ds.indices(Split::Val);
  } else if (cfg.split == "test") {
    idx = ds.indices(Split::Test);
  } else {
    throw UsageError("--split must be train, val, test or all");
  }
  const Metrics m = evaluate_indices(model, ds, idx);
  json j = {{"dataset", dataset_label(cfg)},
            {"variant", model.variant().label()},
            {"split", cfg.split},
            {"samples", idx.size()}};
  j.update(metrics_json(m));
  out << j.dump(2) << '\n';
  return kOk;
}

int run_ablate(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  const Dataset ds = prepared_dataset(cfg, err);
  print_split_counts(ds, out);
  std::vector<ModelVariant> variants;
  for (int n = 0; n <= kMaxInvolutionLayers; ++n) variants.push_back(ModelVariant::hybrid(n));
  if (cfg.include_inv_only) variants.push_back(ModelVariant::inv_only());

  std::vector<ReportRow> rows;
  for (const auto& variant : variants) {
    out << "== " << variant.label() << '\n';
    Model model = fresh_model(cfg, variant);
    fit(model, ds, cfg, out);
    const Metrics test = evaluate(model, ds, Split::Test);
    out << "test " << metrics_line(test) << '\n';
    rows.push_back({dataset_label(cfg), variant.label(), test, model.param_count().total, storage_size_mb(model)});
  }
  const fs::path dir = output_dir(cfg);
  export_report(rows, dir / "report.json", dir / "report.csv");
  out << report_csv(rows);
  return kOk;
}

int run_synth(const RunConfig& cfg, std::ostream& out) {
  RunConfig c = cfg;
  if (c.synthetic_per_class <= 0) c.synthetic_per_class = 250;
  std::ostringstream sink;
  const Dataset ds = raw_dataset(c, sink);
  const fs::path dir = output_dir(c);
  export_dataset(ds, dir);
  out << "wrote " << ds.size() << " images to " << dir.string() << '\n';
  return kOk;
}

int run_analyze(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  const Dataset ds = raw_dataset(cfg, err);
  const ClassMeans m = class_mean_images(ds);
  const fs::path dir = output_dir(cfg);
  write_ppm(dir / "mean_ASD.ppm", m.mean_asd);
  write_ppm(dir / "mean_TD.ppm", m.mean_td);
  const json j = {{"dataset", dataset_label(cfg)},
                  {"ASD", {{"count", m.count_asd}, {"dispersion", m.dispersion_asd}}},
                  {"TD", {{"count", m.count_td}, {"dispersion", m.dispersion_td}}}};
  write_text(dir / "dispersion.json", j.dump(2) + "\n");
  out << j.dump(2) << '\n';
  return kOk;
}

int run_visualize(const RunConfig& cfg, const std::string& image_path, std::ostream& out, std::ostream& err) {
  Model model = cfg.model_path.empty() ? fresh_model(cfg, variant_of(cfg)) : load_model(cfg.model_path);
  Tensor image;
  if (!image_path.empty()) {
    image = resize_bilinear(read_image(image_path), kImageSize, kImageSize);
  } else {
    const Dataset ds = raw_dataset(cfg, err);
    if (cfg.sample < 0 || static_cast<std::size_t>(cfg.sample) >= ds.size()) {
      throw UsageError("--sample out of range (dataset has " + std::to_string(ds.size()) + " items)");
    }
    image = ds.items[static_cast<std::size_t>(cfg.sample)].image;
  }
  std::vector<std::size_t> layers;
  if (cfg.layers.empty()) {
    for (std::size_t i = 0; i < model.layer_count(); ++i)
      if (model.layer(i).kind() == LayerKind::Involution) layers.push_back(i);
    if (layers.empty()) throw UsageError("model " + model.variant().label() + " has no involution layers");
  } else {
    for (int l : cfg.layers) {
      if (l < 0) throw UsageError("--layer must be >= 0");
      layers.push_back(static_cast<std::size_t>(l));
    }
  }
  const fs::path dir = output_dir(cfg);
  for (auto l : layers) {
    const auto norm = dir / ("kernels_L" + std::to_string(l) + ".ppm");
    const auto grid = dir / ("kernels_grid_L" + std::to_string(l) + ".ppm");
    export_kernel_norm_map(model, image, l, norm);
    export_kernel_grid(model, image, l, grid, cfg.grid);
    out << "wrote " << norm.string() << " and " << grid.string() << '\n';
  }
  return kOk;
}

// ---------------------------------------------------------------- config file

struct ConfigKey {
  const char* option;
  std::function<void(RunConfig&, const json&)> apply;
};

const std::map<std::string, ConfigKey>& config_keys() {
  static const std::map<std::string, ConfigKey> keys = {
      {"variant", {"--variant", [](RunConfig& c, const json& v) { c.variant = v.get<std::string>(); }}},
      {"inv_layers", {"--inv-layers", [](RunConfig& c, const json& v) { c.inv_layers = v.get<int>(); }}},
      {"lr", {"--lr", [](RunConfig& c, const json& v) { c.lr = v.get<double>(); }}},
      {"epochs", {"--epochs", [](RunConfig& c, const json& v) { c.epochs = v.get<int>(); }}},
      {"batch", {"--batch", [](RunConfig& c, const json& v) { c.batch = v.get<int>(); }}},
      {"seed", {"--seed", [](RunConfig& c, const json& v) { c.seed = v.get<std::uint64_t>(); }}},
      {"data", {"--data",
                [](RunConfig& c, const json& v) {
                  c.data = v.is_array() ? v.get<std::vector<std::string>>() : std::vector{v.get<std::string>()};
                }}},
      {"synthetic_per_class",
       {"--synthetic", [](RunConfig& c, const json& v) { c.synthetic_per_class = v.get<int>(); }}},
      {"out_dir", {"--out-dir", [](RunConfig& c, const json& v) { c.out_dir = v.get<std::string>(); }}},
      {"augment", {"--augment", [](RunConfig& c, const json& v) { c.augment = v.get<std::string>(); }}},
      {"model_path", {"--model", [](RunConfig& c, const json& v) { c.model_path = v.get<std::string>(); }}},
      {"split", {"--split", [](RunConfig& c, const json& v) { c.split = v.get<std::string>(); }}},
      {"dataset_name", {"--dataset-name", [](RunConfig& c, const json& v) { c.dataset_name = v.get<std::string>(); }}},
  };
  return keys;
}

void apply_config_file(const std::string& path, const CLI::App& sub, RunConfig& cfg) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open config file " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw UsageError("config file " + path + ": " + e.what());
  }
  if (!j.is_object()) throw UsageError("config file must hold a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (key == "command") continue;
    const auto it = config_keys().find(key);
    if (it == config_keys().end()) throw UsageError("unknown config key '" + key + "'");
    const CLI::Option* opt = sub.get_option_no_throw(it->second.option);
    if (opt && opt->count() > 0) continue;  // flags win
    try {
      it->second.apply(cfg, value);
    } catch (const json::exception& e) {
      throw UsageError("config key '" + key + "': " + e.what());
    }
  }
}

}  // namespace

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Involution-convolution eye-tracking classifier", "invnet"};
  app.require_subcommand(1);

  RunConfig cfg;
  std::string config_path;
  std::string image_path;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--seed", cfg.seed, "Master random seed");
    sub->add_option("--config", config_path, "JSON config; flags override its keys");
    sub->add_option("--out-dir", cfg.out_dir, "Output directory");
  };
  auto add_model = [&](CLI::App* sub) {
    sub->add_option("--variant", cfg.variant, "conv-only | inv-only | hybrid | hybrid(n)");
    sub->add_option("--inv-layers", cfg.inv_layers, "Involution layers for the hybrid variant (0..6)");
  };
  auto add_data = [&](CLI::App* sub) {
    sub->add_option("--data", cfg.data, "Dataset root with ASD/ and TD/ (repeatable)");
    sub->add_option("--synthetic", cfg.synthetic_per_class, "Generate N synthetic images per class instead");
    sub->add_option("--dataset-name", cfg.dataset_name, "Dataset label used in reports");
  };
  auto add_training = [&](CLI::App* sub) {
    sub->add_option("--lr", cfg.lr, "Adam learning rate");
    sub->add_option("--epochs", cfg.epochs, "Training epochs");
    sub->add_option("--batch", cfg.batch, "Mini-batch size");
    sub->add_option("--augment", cfg.augment, "on | off | paper-compat");
  };

  auto* summary = app.add_subcommand("summary", "Print the layer-wise parameter table");
  add_common(summary);
  add_model(summary);

  auto* train_cmd = app.add_subcommand("train", "Train a model and save it with its epoch log");
  add_common(train_cmd);
  add_model(train_cmd);
  add_data(train_cmd);
  add_training(train_cmd);

  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a saved model and print metrics as JSON");
  add_common(eval_cmd);
  add_data(eval_cmd);
  eval_cmd->add_option("--model", cfg.model_path, "Model file");
  eval_cmd->add_option("--split", cfg.split, "train | val | test | all");
  eval_cmd->add_option("--augment", cfg.augment, "Augmentation mode used when training");

  auto* ablate = app.add_subcommand("ablate", "Train hybrid(0..6) and write the comparison report");
  add_common(ablate);
  add_data(ablate);
  add_training(ablate);
  ablate->add_flag("--include-inv-only", cfg.include_inv_only, "Append the involution-only variant");

  auto* synth = app.add_subcommand("synth", "Write a synthetic scanpath-style dataset");
  add_common(synth);
  synth->add_option("--per-class,--synthetic", cfg.synthetic_per_class, "Images per class (default 250)");

  auto* analyze = app.add_subcommand("analyze", "Write class mean images and dispersion");
  add_common(analyze);
  add_data(analyze);

  auto* visualize = app.add_subcommand("visualize", "Write involution kernel maps and grids");
  add_common(visualize);
  add_model(visualize);
  add_data(visualize);
  visualize->add_option("--model", cfg.model_path, "Model file (default: freshly initialized variant)");
  visualize->add_option("--image", image_path, "Input image (PNG or PPM)");
  visualize->add_option("--sample", cfg.sample, "Dataset item index when --image is not given");
  visualize->add_option("--layer", cfg.layers, "Layer index (repeatable; default all involution layers)");
  visualize->add_option("--grid", cfg.grid, "Kernel grid size");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(std::move(reversed));
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? kOk : kUsage;
  }

  CLI::App* sub = app.get_subcommands().front();
  cfg.command = sub->get_name();
  try {
    if (!config_path.empty()) apply_config_file(config_path, *sub, cfg);
    if (cfg.command == "summary") return run_summary(cfg, out);
    if (cfg.command == "train") return run_train(cfg, out, err);
    if (cfg.command == "eval") return run_eval(cfg, out, err);
    if (cfg.command == "ablate") return run_ablate(cfg, out, err);
    if (cfg.command == "synth") return run_synth(cfg, out);
    if (cfg.command == "analyze") return run_analyze(cfg, out, err);
    if (cfg.command == "visualize") return run_visualize(cfg, image_path, out, err);
    err << "error: unknown command " << cfg.command << '\n';
    return kUsage;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const ArgumentError& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << '\n';
    return kData;
  } catch (const FormatError& e) {
    err << "data error: " << e.what() << '\n';
    return kData;
  } catch (const fs::filesystem_error& e) {
    err << "data error: " << e.what() << '\n';
    return kData;
  } catch (const Error& e) {
    err << "numeric error: " << e.what() << '\n';
    return kNumeric;
  }
}

int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return dispatch(args, out, err);
}

}  // namespace invnet::cli

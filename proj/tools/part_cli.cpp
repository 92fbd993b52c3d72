#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "part/analysis.hpp"
#include "part/checkpoint.hpp"
#include "part/config.hpp"
#include "part/error.hpp"
#include "part/gradcheck.hpp"
#include "part/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace part;

namespace {

constexpr int kExitFailure = 1;
constexpr int kExitConfig = 2;
constexpr int kExitThreshold = 3;

struct Common {
  std::string config_path;
  std::string out;
  std::string checkpoint;
  std::vector<std::pair<std::string, std::string>> overrides;
};

// Pulls "--section.key value" and "--section.key=value" out of argv; everything else is
// left for CLI11.
std::vector<std::string> extract_overrides(int argc, char** argv, std::vector<std::pair<std::string, std::string>>& out) {
  std::vector<std::string> rest;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    const bool dotted = a.rfind("--", 0) == 0 && a.find('.') != std::string::npos &&
                        a.find('.') < a.find('=') && a.size() > 2 && std::isalpha(static_cast<unsigned char>(a[2]));
    if (!dotted) {
      rest.push_back(a);
      continue;
    }
    const std::size_t eq = a.find('=');
    if (eq != std::string::npos) {
      out.emplace_back(a.substr(2, eq - 2), a.substr(eq + 1));
    } else {
      if (i + 1 >= argc) throw ConfigError("flag " + a + " needs a value");
      out.emplace_back(a.substr(2), argv[++i]);
    }
  }
  return rest;
}

// Precedence: built-in defaults < --config file < dotted flags < subcommand flags.
RunConfig resolve(const Common& c) {
  json j = c.config_path.empty() ? to_json(RunConfig{}) : to_json(load_run_config(c.config_path));
  for (const auto& [key, value] : c.overrides) apply_override(j, key, value);
  RunConfig rc = run_config_from_json(j);
  if (!c.out.empty()) rc.out = c.out;
  if (!c.checkpoint.empty()) rc.checkpoint = c.checkpoint;
  return rc;
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

fs::path prepare_output(const RunConfig& rc) {
  const fs::path out(rc.out);
  fs::create_directories(out);
  write_json(out / "config.json", to_json(rc));
  return out;
}

fs::path checkpoint_path(const fs::path& out, std::uint64_t step) {
  return out / ("ckpt_" + std::to_string(step) + ".part");
}

Checkpoint require_checkpoint(const RunConfig& rc) {
  if (rc.checkpoint.empty()) throw ConfigError("checkpoint is required (--checkpoint PATH)");
  return load_checkpoint(rc.checkpoint);
}

void print(const json& j) { std::cout << j.dump() << std::endl; }

int cmd_gen_data(const RunConfig& rc, int previews) {
  rc.data.validate();
  const fs::path out = prepare_output(rc);
  Datasets ds = make_datasets(rc.data);
  json summary{{"command", "gen-data"}, {"kind", rc.data.kind}, {"train", ds.train->size()}, {"val", ds.val->size()}};
  if (ds.train->dims().height == 1) {
    write_signals_csv(out / "train.csv", *ds.train);
    write_signals_csv(out / "val.csv", *ds.val);
    summary["files"] = {"train.csv", "val.csv"};
  } else {
    write_raw_images(out / "train.bin", *ds.train);
    write_raw_images(out / "val.bin", *ds.val);
    const int c = ds.train->dims().channels;
    for (int i = 0; i < previews && static_cast<std::size_t>(i) < ds.train->size(); ++i) {
      if (c == 1 || c == 3) write_pnm(out / ("preview_" + std::to_string(i) + ".ppm"), ds.train->item(i).image);
    }
    summary["files"] = {"train.bin", "val.bin"};
  }
  print(summary);
  return 0;
}

int cmd_pretrain(RunConfig rc, const std::string& resume) {
  rc.train.mode = TrainMode::pretrain;
  rc.validate();
  const fs::path out = prepare_output(rc);
  Datasets ds = make_datasets(rc.data);
  json embedded = to_json(rc);
  embedded.erase("out");
  embedded.erase("checkpoint");

  std::unique_ptr<Pretrainer> trainer;
  MetricsLog log;
  const fs::path metrics = out / "metrics.csv";
  if (resume.empty()) {
    trainer = std::make_unique<Pretrainer>(rc.model_config(), rc.train, *ds.train, embedded);
    MetricsLog{}.write_csv(metrics);
  } else {
    const Checkpoint ckpt = load_checkpoint(resume);
    trainer = std::make_unique<Pretrainer>(ckpt, rc.model_config(), rc.train, *ds.train, embedded);
    // Keep the log contiguous: drop rows written after the checkpoint was taken.
    MetricsLog kept;
    if (fs::exists(metrics)) {
      for (const MetricsRecord& r : MetricsLog::read_csv(metrics).records()) {
        if (r.step <= ckpt.step) kept.append(r);
      }
    }
    kept.write_csv(metrics);
  }

  std::optional<std::uint64_t> last_saved;
  trainer->run(log, ds.val.get(), [&](const Pretrainer& p, const MetricsRecord&) {
    log.append_csv(metrics, log.records().size() - 1);
    const int every = rc.train.checkpoint_every;
    if (every > 0 && p.current_step() % static_cast<std::uint64_t>(every) == 0) {
      save_checkpoint(checkpoint_path(out, p.current_step()), p.checkpoint());
      last_saved = p.current_step();
    }
  });
  const fs::path final_path = checkpoint_path(out, trainer->current_step());
  if (last_saved != trainer->current_step()) save_checkpoint(final_path, trainer->checkpoint());

  json summary{{"command", "pretrain"}, {"step", trainer->current_step()}, {"checkpoint", final_path.string()}};
  if (!log.empty()) {
    summary["loss"] = log.records().back().loss;
    if (log.records().back().val_loss) summary["val_loss"] = *log.records().back().val_loss;
    if (log.records().back().antisymmetry) summary["antisymmetry"] = *log.records().back().antisymmetry;
  }
  print(summary);
  return 0;
}

int cmd_finetune(RunConfig rc, TrainMode mode) {
  rc.train.mode = mode;
  rc.data.validate();
  rc.train.validate();
  const fs::path out = prepare_output(rc);
  const Checkpoint pretrained = require_checkpoint(rc);
  Datasets ds = make_datasets(rc.data);
  if (ds.train->num_classes() < 2) {
    throw ConfigError("data has no labels: set data.scene.label_rule, data.signal.num_classes or data.num_classes");
  }
  FinetuneResult r = finetune(pretrained, *ds.train, *ds.val, rc.train);
  r.log.write_csv(out / "metrics.csv");
  const fs::path path = checkpoint_path(out, r.checkpoint.step);
  save_checkpoint(path, r.checkpoint);
  json summary{{"command", to_string(mode)},
               {"accuracy", r.eval.accuracy},
               {"kappa", r.eval.kappa},
               {"val_loss", r.eval.loss},
               {"checkpoint", path.string()}};
  write_json(out / "eval.json", summary);
  print(summary);
  return 0;
}

int cmd_evaluate(const RunConfig& rc) {
  rc.data.validate();
  const fs::path out = prepare_output(rc);
  const Checkpoint ckpt = require_checkpoint(rc);
  std::unique_ptr<PartModel> model = model_from_checkpoint(ckpt);
  Datasets ds = make_datasets(rc.data);
  json summary{{"command", "evaluate"}, {"checkpoint", rc.checkpoint}, {"images", ds.val->size()}};
  if (model->head() != nullptr) {
    const ModelConfig& m = model->config();
    const PretextEval e = evaluate_pretext(*model, *ds.val, m.sampler, m.head.target,
                                           static_cast<std::size_t>(rc.train.val_pair_count), kValidationSeed);
    summary["val_mse"] = e.loss;
    summary["val_mse_per_coord"] = e.mse_per_coord;
    summary["l2_error"] = e.l2_error;
    summary["antisymmetry"] = antisymmetry_correlation(*model, *ds.val, m.sampler, ds.val->size(), kValidationSeed);
  }
  if (model->config().num_classes > 0) {
    const ClassificationEval e = evaluate_classifier(*model, *ds.val);
    summary["accuracy"] = e.accuracy;
    summary["kappa"] = e.kappa;
    summary["val_loss"] = e.loss;
  }
  write_json(out / "evaluate.json", summary);
  print(summary);
  return 0;
}

struct MatrixSource {
  std::unique_ptr<PartModel> model;
  ImageDims dims;
  SamplerConfig sampler;
  int patch_size = 0;
  TargetMode mode = TargetMode::base;
};

MatrixSource matrix_source(const RunConfig& rc, bool ground_truth) {
  MatrixSource s;
  if (ground_truth) {
    const ModelConfig m = rc.model_config();
    s.dims = m.dims;
    s.sampler = m.sampler;
    s.patch_size = m.vit.patch_size;
    s.mode = m.head.target;
    return s;
  }
  s.model = model_from_checkpoint(require_checkpoint(rc));
  if (s.model->head() == nullptr) throw ConfigError("checkpoint has no relative head (finetuned models cannot be diagnosed)");
  s.dims = s.model->config().dims;
  s.sampler = s.model->config().sampler;
  s.patch_size = s.model->config().vit.patch_size;
  s.mode = s.model->config().head.target;
  return s;
}

PredictionMatrix build_matrix(const MatrixSource& s, const Image& image, const std::vector<PatchBox>& boxes) {
  return s.model ? prediction_matrix(*s.model, image, boxes) : ground_truth_matrix(boxes, s.mode);
}

int cmd_reconstruct(const RunConfig& rc, bool ground_truth, bool grid, std::size_t image_index,
                    std::optional<std::size_t> ref) {
  rc.data.validate();
  const fs::path out = prepare_output(rc);
  const MatrixSource s = matrix_source(rc, ground_truth);
  Datasets ds = make_datasets(rc.data);
  if (!(ds.val->dims() == s.dims)) throw ConfigError("data dims do not match the model");
  if (s.dims.height == 1) throw ConfigError("reconstruct renders 2-D images only");
  if (image_index >= ds.val->size()) throw ConfigError("--image is out of range for the validation set");
  const Image image = ds.val->item(image_index).image;
  Rng rng = Rng(rc.sampler.seed).split(image_index);
  Rng box_rng = rng.split(1);
  const std::vector<PatchBox> boxes = grid ? grid_boxes(s.dims, s.patch_size) : pretext_boxes(s.dims, s.sampler, box_rng);
  const PredictionMatrix m = build_matrix(s, image, boxes);
  const std::size_t ref_index = ref ? *ref : static_cast<std::size_t>(rng.split(2).below(boxes.size()));
  const Canvas canvas = reconstruct_from_reference(extract_and_resize(image, boxes, s.patch_size), m, ref_index, s.dims);
  const std::string id = std::to_string(image_index);
  write_pnm(out / ("canvas_" + id + ".ppm"), canvas.render_marked());
  write_pnm(out / ("original_" + id + ".ppm"), image);
  const Image frame = canvas.frame_view();
  double max_diff = 0.0;
  for (std::size_t i = 0; i < frame.pixels.size(); ++i) {
    max_diff = std::max(max_diff, std::abs(frame.pixels[i] - image.pixels[i]));
  }
  print(json{{"command", "reconstruct"},
             {"image", image_index},
             {"reference", ref_index},
             {"patches", boxes.size()},
             {"canvas", {canvas.dims.height, canvas.dims.width}},
             {"max_abs_diff", max_diff},
             {"pixel_exact", max_diff == 0.0}});
  return 0;
}

int cmd_diagnose(const RunConfig& rc, bool ground_truth, bool grid, std::size_t images) {
  rc.data.validate();
  const fs::path out = prepare_output(rc);
  const MatrixSource s = matrix_source(rc, ground_truth);
  Datasets ds = make_datasets(rc.data);
  if (!(ds.val->dims() == s.dims)) throw ConfigError("data dims do not match the model");
  const std::size_t n_images = std::min(images, ds.val->size());
  std::ofstream csv(out / "diagnose.csv");
  csv.precision(17);
  csv << "image,rho,degenerate,mean_residual,mean_std_x,mean_std_y,sync_residual,sync_error_px,sync_error_patches\n";
  double rho_sum = 0.0, err_sum = 0.0;
  for (std::size_t i = 0; i < n_images; ++i) {
    const Image image = ds.val->item(i).image;
    Rng box_rng = Rng(kValidationSeed).split(i).split(1);
    const std::vector<PatchBox> boxes =
        grid ? grid_boxes(s.dims, s.patch_size) : pretext_boxes(s.dims, s.sampler, box_rng);
    const PredictionMatrix m = build_matrix(s, image, boxes);
    const AntisymmetryReport a = antisymmetry_residual(m);
    double sx = 0.0, sy = 0.0;
    if (m.n >= 3) {
      const UncertaintyReport u = placement_uncertainty(m, boxes);
      for (std::size_t j = 0; j < m.n; ++j) {
        sx += u.std_x[j] / static_cast<double>(m.n);
        sy += u.std_y[j] / static_cast<double>(m.n);
      }
      std::ofstream uc(out / ("uncertainty_" + std::to_string(i) + ".csv"));
      write_uncertainty_csv(uc, u);
    }
    const GlobalPositions g = solve_global_positions(m, boxes);
    double err = 0.0, width = 0.0;
    for (std::size_t j = 0; j < m.n; ++j) {
      err += std::hypot(g.x[j] - boxes[j].center_x(), g.y[j] - boxes[j].center_y());
      width += boxes[j].width;
    }
    err /= static_cast<double>(m.n);
    width /= static_cast<double>(m.n);
    std::ofstream mc(out / ("matrix_" + std::to_string(i) + ".csv"));
    write_matrix_csv(mc, m);
    csv << i << ',' << a.correlation << ',' << (a.degenerate ? 1 : 0) << ',' << a.mean_residual << ',' << sx << ','
        << sy << ',' << g.residual << ',' << err << ',' << err / width << '\n';
    rho_sum += a.correlation;
    err_sum += err / width;
  }
  print(json{{"command", "diagnose"},
             {"images", n_images},
             {"mean_rho", rho_sum / static_cast<double>(n_images)},
             {"mean_sync_error_patches", err_sum / static_cast<double>(n_images)},
             {"dispersion_statistic", "standard deviation"}});
  return 0;
}

ModelConfig tiny_model(HeadKind kind, bool signal) {
  ModelConfig m;
  if (signal) {
    m.dims = {1, 64, 1};
    m.sampler.patch_size = 8;
    m.sampler.size_min = 6;
    m.sampler.size_max = 12;
    m.head.target = TargetMode::time;
  } else {
    m.dims = {8, 8, 1};
    m.sampler.patch_size = 4;
    m.sampler.size_min = 4;
    m.sampler.size_max = 4;
  }
  m.sampler.patch_count = 4;
  m.vit.embed_dim = 16;
  m.vit.depth = 2;
  m.vit.heads = 2;
  m.vit.patch_size = m.sampler.patch_size;
  m.head.kind = kind;
  m.head.patch_count = 4;
  return m;
}

int cmd_gradcheck(const RunConfig& rc, bool tiny, bool signal, const std::string& head, double threshold,
                  std::optional<double> weight_scale, const GradCheckOptions& options) {
  const fs::path out = prepare_output(rc);
  std::vector<HeadKind> kinds;
  if (!head.empty()) {
    kinds.push_back(head_kind_from_string(head));
  } else if (tiny) {
    kinds = {HeadKind::cross_attention, HeadKind::pairwise_mlp, HeadKind::full_mlp};
  } else {
    kinds.push_back(rc.head.kind);
  }
  json results = json::array();
  double worst = 0.0;
  for (HeadKind kind : kinds) {
    ModelConfig m;
    std::size_t pair_count = 4;
    if (tiny) {
      m = tiny_model(kind, signal);
    } else {
      rc.validate();
      m = rc.model_config();
      m.head.kind = kind;
      pair_count = static_cast<std::size_t>(rc.train.pair_count);
    }
    PartModel model(m, rc.train.seed);
    scale_weights(model.params(), weight_scale ? *weight_scale : (tiny ? 10.0 : 1.0));
    Rng rng = Rng(options.seed).split(7);
    Image image(m.dims);
    for (double& v : image.pixels) v = rng.uniform();
    Rng box_rng = rng.split(1), pair_rng = rng.split(2);
    const PretextSample sample =
        make_pretext_sample(image, m.sampler, m.head.target, pair_count, box_rng, pair_rng, m.vit.patch_size);
    const auto loss = [&](ad::Tape& t) {
      return pretrain_loss(model.predict(t, sample.seq, sample.pairs), t.constant(sample.targets));
    };
    const std::vector<Parameter*> params = model.params().all();
    const GradCheckResult r = grad_check(loss, params, options);
    worst = std::max(worst, r.max_rel_error);
    results.push_back({{"head", to_string(kind)},
                       {"max_rel_error", r.max_rel_error},
                       {"coordinates", r.coordinates_checked},
                       {"worst_param", r.worst_param},
                       {"worst_index", r.worst_index},
                       {"worst_analytic", r.worst_analytic},
                       {"worst_numeric", r.worst_numeric}});
  }
  const json summary{{"command", "gradcheck"},
                     {"max_rel_error", worst},
                     {"threshold", threshold},
                     {"passed", worst <= threshold},
                     {"heads", results}};
  write_json(out / "gradcheck.json", summary);
  print(summary);
  if (worst > threshold) {
    std::cerr << json{{"error", "GradCheckThreshold"},
                      {"message", "max relative error " + std::to_string(worst) + " exceeds threshold " +
                                      std::to_string(threshold)}}
                     .dump()
              << std::endl;
    return kExitThreshold;
  }
  return 0;
}

std::string error_type(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return "ConfigError";
  if (dynamic_cast<const GeometryError*>(&e)) return "GeometryError";
  if (dynamic_cast<const ShapeError*>(&e)) return "ShapeError";
  if (dynamic_cast<const NumericError*>(&e)) return "NumericError";
  if (dynamic_cast<const FormatError*>(&e)) return "FormatError";
  if (dynamic_cast<const CLI::Error*>(&e)) return "UsageError";
  return "Error";
}

}  // namespace

int main(int argc, char** argv) {
  Common common;
  std::vector<std::string> args;
  try {
    args = extract_overrides(argc, argv, common.overrides);
  } catch (const std::exception& e) {
    std::cerr << json{{"error", error_type(e)}, {"message", e.what()}}.dump() << std::endl;
    return kExitConfig;
  }

  CLI::App app{"PART: relative patch-translation pretraining and diagnostics"};
  app.require_subcommand(1);
  app.footer(
      "Any config key can be set with a dotted flag, e.g. --train.learning_rate 0.001.\n"
      "Precedence: defaults < --config file < dotted flags < subcommand flags.");

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", common.config_path, "JSON run configuration");
    sub->add_option("--out", common.out, "Output directory (overrides the config's out)");
  };
  auto add_checkpoint = [&](CLI::App* sub) {
    sub->add_option("--checkpoint", common.checkpoint, "Input checkpoint (.part)");
  };

  int previews = 4;
  auto* gen = app.add_subcommand("gen-data", "Generate the configured dataset into the output directory");
  add_common(gen);
  gen->add_option("--previews", previews, "Number of preview images to write");

  std::optional<int> steps;
  std::string resume;
  auto* pre = app.add_subcommand("pretrain", "Pretrain the trunk with the relative-translation pretext task");
  add_common(pre);
  pre->add_option("--steps", steps, "Shortcut for train.steps");
  pre->add_option("--resume", resume, "Continue from a checkpoint written by pretrain");

  auto* fine = app.add_subcommand("finetune", "Finetune a pretrained trunk with a classifier on labeled data");
  add_common(fine);
  add_checkpoint(fine);
  fine->add_option("--steps", steps, "Shortcut for train.steps");

  auto* probe = app.add_subcommand("probe", "Linear probe on a frozen pretrained trunk");
  add_common(probe);
  add_checkpoint(probe);
  probe->add_option("--steps", steps, "Shortcut for train.steps");

  auto* eval = app.add_subcommand("evaluate", "Evaluate a checkpoint on the validation set");
  add_common(eval);
  add_checkpoint(eval);

  bool ground_truth = false, grid = false;
  std::size_t image_index = 0;
  std::optional<std::size_t> ref;
  auto* rec = app.add_subcommand("reconstruct", "Reassemble an image from relative predictions");
  add_common(rec);
  add_checkpoint(rec);
  rec->add_flag("--ground-truth", ground_truth, "Use ground-truth targets instead of a model");
  rec->add_flag("--grid", grid, "Use grid boxes instead of off-grid sampling");
  rec->add_option("--image", image_index, "Validation image index");
  rec->add_option("--ref", ref, "Reference patch index (default: random from sampler.seed)");

  std::size_t images = 8;
  auto* diag = app.add_subcommand("diagnose", "Antisymmetry, placement uncertainty and global-position diagnostics");
  add_common(diag);
  add_checkpoint(diag);
  diag->add_flag("--ground-truth", ground_truth, "Use ground-truth targets instead of a model");
  diag->add_flag("--grid", grid, "Use grid boxes instead of off-grid sampling");
  diag->add_option("--images", images, "Number of validation images");

  bool tiny = false, signal = false;
  std::string head;
  double threshold = 1e-4;
  GradCheckOptions gc;
  auto* grad = app.add_subcommand("gradcheck", "Compare analytic gradients against central differences");
  add_common(grad);
  grad->add_flag("--tiny", tiny, "Tiny 8x8x1 model, N=4, d=16, depth 2, 4 pairs (all three heads)");
  grad->add_flag("--signal", signal, "With --tiny: the 1-D window variant");
  grad->add_option("--head", head, "cross_attention | pairwise_mlp | full_mlp");
  grad->add_option("--threshold", threshold, "Exit nonzero when the max relative error exceeds this");
  grad->add_option("--samples", gc.samples_per_param, "Sampled coordinates per parameter");
  grad->add_option("--step", gc.step, "Central-difference step");
  grad->add_option("--seed", gc.seed, "Coordinate sampling seed");
  std::optional<double> weight_scale;
  grad->add_option("--weight-scale", weight_scale, "Multiply projection weights before checking (default 10 with --tiny, else 1)");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << json{{"error", "UsageError"}, {"message", e.what()}}.dump() << std::endl;
    return kExitConfig;
  }

  try {
    RunConfig rc = resolve(common);
    if (steps) rc.train.steps = *steps;
    if (*gen) return cmd_gen_data(rc, previews);
    if (*pre) return cmd_pretrain(rc, resume);
    if (*fine) return cmd_finetune(rc, TrainMode::finetune);
    if (*probe) return cmd_finetune(rc, TrainMode::probe);
    if (*eval) return cmd_evaluate(rc);
    if (*rec) return cmd_reconstruct(rc, ground_truth, grid, image_index, ref);
    if (*diag) return cmd_diagnose(rc, ground_truth, grid, images);
    if (*grad) return cmd_gradcheck(rc, tiny, signal, head, threshold, weight_scale, gc);
  } catch (const std::exception& e) {
    std::cerr << json{{"error", error_type(e)}, {"message", e.what()}}.dump() << std::endl;
    return dynamic_cast<const ConfigError*>(&e) ? kExitConfig : kExitFailure;
  }
  return kExitFailure;
}

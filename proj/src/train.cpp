#include "part/train.hpp"

#include <omp.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <exception>
#include <fstream>
#include <sstream>

#include "part/analysis.hpp"
#include "part/config.hpp"
#include "part/error.hpp"

namespace part {

std::string to_string(TrainMode m) {
  switch (m) {
    case TrainMode::pretrain:
      return "pretrain";
    case TrainMode::finetune:
      return "finetune";
    case TrainMode::probe:
      return "probe";
  }
  return "pretrain";
}

TrainMode train_mode_from_string(const std::string& s) {
  if (s == "pretrain") return TrainMode::pretrain;
  if (s == "finetune") return TrainMode::finetune;
  if (s == "probe") return TrainMode::probe;
  throw ConfigError("train.mode must be one of pretrain|finetune|probe, got '" + s + "'");
}

std::uint64_t TrainConfig::warmup() const {
  if (warmup_steps >= 0) return static_cast<std::uint64_t>(warmup_steps);
  return static_cast<std::uint64_t>(steps) * 5 / 100;
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw ConfigError("train.learning_rate must be > 0");
  if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
  if (steps < 0) throw ConfigError("train.steps must be >= 0");
  if (warmup_steps > steps) throw ConfigError("train.warmup_steps must be <= train.steps");
  if (weight_decay < 0.0) throw ConfigError("train.weight_decay must be >= 0");
  if (beta1 < 0.0 || beta1 >= 1.0) throw ConfigError("train.beta1 must be in [0, 1)");
  if (beta2 < 0.0 || beta2 >= 1.0) throw ConfigError("train.beta2 must be in [0, 1)");
  if (pair_count < 1) throw ConfigError("train.pair_count must be >= 1");
  if (threads < 0) throw ConfigError("train.threads must be >= 0");
  if (eval_every < 0) throw ConfigError("train.eval_every must be >= 0");
  if (checkpoint_every < 0) throw ConfigError("train.checkpoint_every must be >= 0");
  if (val_pair_count < 1) throw ConfigError("train.val_pair_count must be >= 1");
  if (antisymmetry_images < 0) throw ConfigError("train.antisymmetry_images must be >= 0");
}

void MetricsLog::append(const MetricsRecord& r) {
  if (!records_.empty() && r.step <= records_.back().step) {
    throw ConfigError("metrics log: step " + std::to_string(r.step) + " does not follow step " +
                      std::to_string(records_.back().step));
  }
  records_.push_back(r);
}

namespace {

constexpr const char* kMetricsHeader = "step,loss,lr,val_loss,antisymmetry,wall_time";

void write_record(std::ostream& out, const MetricsRecord& r) {
  out << r.step << ',' << r.loss << ',' << r.learning_rate << ',';
  if (r.val_loss) out << *r.val_loss;
  out << ',';
  if (r.antisymmetry) out << *r.antisymmetry;
  out << ',' << r.wall_time << '\n';
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

double parse_double(const std::string& s, const std::string& line) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw FormatError("metrics CSV: bad number in row '" + line + "'");
  }
}

}  // namespace

void MetricsLog::write_csv(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FormatError("cannot write " + path.string());
  out.precision(17);
  out << kMetricsHeader << '\n';
  for (const MetricsRecord& r : records_) write_record(out, r);
}

void MetricsLog::append_csv(const std::filesystem::path& path, std::size_t from_record) const {
  const bool fresh = !std::filesystem::exists(path) || std::filesystem::file_size(path) == 0;
  std::ofstream out(path, std::ios::app);
  if (!out) throw FormatError("cannot write " + path.string());
  out.precision(17);
  if (fresh) out << kMetricsHeader << '\n';
  for (std::size_t i = from_record; i < records_.size(); ++i) write_record(out, records_[i]);
}

MetricsLog MetricsLog::read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot read " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != kMetricsHeader) throw FormatError("metrics CSV: unexpected header");
  MetricsLog log;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const std::vector<std::string> c = split_csv(line);
    if (c.size() != 6) throw FormatError("metrics CSV: expected 6 columns in row '" + line + "'");
    MetricsRecord r;
    r.step = static_cast<std::uint64_t>(parse_double(c[0], line));
    r.loss = parse_double(c[1], line);
    r.learning_rate = parse_double(c[2], line);
    if (!c[3].empty()) r.val_loss = parse_double(c[3], line);
    if (!c[4].empty()) r.antisymmetry = parse_double(c[4], line);
    r.wall_time = parse_double(c[5], line);
    log.append(r);
  }
  return log;
}

namespace {

int thread_count(int requested) { return requested > 0 ? requested : omp_get_max_threads(); }

// Forward/backward for every batch item in parallel; per-item gradients are summed in
// item order so the result does not depend on the thread count. The gradient of the
// mean loss is written to Parameter::grad. Returns the mean loss.
template <class LossFn, class DescribeFn>
double batch_gradients(ParameterStore& store, std::size_t batch, int threads, LossFn&& loss_fn,
                       DescribeFn&& describe) {
  std::vector<Tensor> total = make_gradient_buffer(store);
  std::vector<double> losses(batch, 0.0);
  std::exception_ptr error;
  const double inv = 1.0 / static_cast<double>(batch);
  const auto n = static_cast<long>(batch);
#pragma omp parallel num_threads(thread_count(threads))
  {
    std::vector<Tensor> local = make_gradient_buffer(store);
#pragma omp for ordered schedule(static, 1)
    for (long b = 0; b < n; ++b) {
      std::exception_ptr item_error;
      double value = 0.0;
      try {
        ad::Tape tape;
        ad::Var loss = loss_fn(static_cast<std::size_t>(b), tape);
        value = loss.value().item();
        if (!std::isfinite(value)) {
          throw NumericError("non-finite loss " + std::to_string(value) + " (" +
                             describe(static_cast<std::size_t>(b)) + ")");
        }
        for (Tensor& t : local) t.fill(0.0);
        tape.backward(ad::scale(loss, inv), local);
      } catch (...) {
        item_error = std::current_exception();
      }
#pragma omp ordered
      {
        if (item_error) {
          if (!error) error = item_error;
        } else if (!error) {
          for (std::size_t i = 0; i < total.size(); ++i) total[i].add(local[i]);
          losses[static_cast<std::size_t>(b)] = value;
        }
      }
    }
  }
  if (error) std::rethrow_exception(error);
  for (std::size_t i = 0; i < store.size(); ++i) store[i].grad = std::move(total[i]);
  double sum = 0.0;
  for (double l : losses) sum += l;
  return sum / static_cast<double>(batch);
}

void append_state(Checkpoint& c, const ParameterStore& store, const AdamW& opt) {
  for (std::size_t i = 0; i < store.size(); ++i) c.tensors.push_back({"param:" + store[i].name, store[i].value});
  for (std::size_t i = 0; i < store.size(); ++i) {
    c.tensors.push_back({"adam_m:" + store[i].name, opt.first_moments()[i]});
  }
  for (std::size_t i = 0; i < store.size(); ++i) {
    c.tensors.push_back({"adam_v:" + store[i].name, opt.second_moments()[i]});
  }
}

void restore_moments(AdamW& opt, const ParameterStore& store, const Checkpoint& c) {
  for (std::size_t i = 0; i < store.size(); ++i) {
    const Tensor* m = c.find("adam_m:" + store[i].name);
    const Tensor* v = c.find("adam_v:" + store[i].name);
    if (m == nullptr || v == nullptr) throw FormatError("checkpoint has no optimizer moments for " + store[i].name);
    if (m->shape() != store[i].value.shape() || v->shape() != store[i].value.shape()) {
      throw ShapeError("checkpoint moments for " + store[i].name + " have the wrong shape");
    }
    opt.first_moments()[i] = *m;
    opt.second_moments()[i] = *v;
  }
  opt.set_steps_taken(c.optimizer_steps);
}

AdamWConfig adamw_config(const TrainConfig& t) {
  AdamWConfig c;
  c.beta1 = t.beta1;
  c.beta2 = t.beta2;
  c.weight_decay = t.weight_decay;
  return c;
}

template <class Fn>
void parallel_items(std::size_t count, int threads, Fn&& fn) {
  std::exception_ptr error;
  const auto n = static_cast<long>(count);
#pragma omp parallel for schedule(dynamic) num_threads(thread_count(threads))
  for (long i = 0; i < n; ++i) {
    try {
      fn(static_cast<std::size_t>(i));
    } catch (...) {
#pragma omp critical(part_parallel_items)
      if (!error) error = std::current_exception();
    }
  }
  if (error) std::rethrow_exception(error);
}

Image mirror(const Image& image) {
  Image out = image;
  const ImageDims& d = image.dims;
  for (int y = 0; y < d.height; ++y) {
    for (int x = 0; x < d.width; ++x) {
      for (int c = 0; c < d.channels; ++c) out.at(y, x, c) = image.at(y, d.width - 1 - x, c);
    }
  }
  return out;
}

}  // namespace

PretextEval evaluate_pretext(const PartModel& model, const Dataset& val, const SamplerConfig& sampler,
                             TargetMode mode, std::size_t pair_count, std::uint64_t seed) {
  if (val.size() == 0) throw ConfigError("evaluate: dataset is empty");
  if (model.head() == nullptr) throw ConfigError("evaluate: model has no relative head");
  if (arity(mode) != model.head()->arity()) throw ConfigError("evaluate: target mode does not match the head arity");
  if (!(val.dims() == model.config().dims)) throw ConfigError("evaluate: dataset dims do not match the model");
  const std::size_t a = arity(mode);
  const Rng root(seed);
  std::vector<std::vector<double>> sq(val.size(), std::vector<double>(a, 0.0));
  std::vector<double> l2(val.size(), 0.0);
  parallel_items(val.size(), 0, [&](std::size_t i) {
    Rng box_rng = root.split(i).split(1);
    Rng pair_rng = root.split(i).split(2);
    const Item item = val.item(i);
    const PretextSample s =
        make_pretext_sample(item.image, sampler, mode, pair_count, box_rng, pair_rng, model.config().vit.patch_size);
    ad::Tape tape;
    const Tensor pred = model.predict(tape, s.seq, s.pairs).value();
    for (std::size_t p = 0; p < s.pairs.count(); ++p) {
      double norm = 0.0;
      for (std::size_t k = 0; k < a; ++k) {
        const double e = pred(p, k) - s.targets(p, k);
        sq[i][k] += e * e;
        if (k < 2) norm += e * e;
      }
      l2[i] += std::sqrt(norm);
    }
  });
  PretextEval r;
  r.pairs = val.size() * pair_count;
  r.mse_per_coord.assign(a, 0.0);
  double l2_sum = 0.0;
  for (std::size_t i = 0; i < val.size(); ++i) {
    for (std::size_t k = 0; k < a; ++k) r.mse_per_coord[k] += sq[i][k];
    l2_sum += l2[i];
  }
  for (double& v : r.mse_per_coord) {
    v /= static_cast<double>(r.pairs);
    r.loss += v;
  }
  r.loss /= static_cast<double>(a);
  r.l2_error = l2_sum / static_cast<double>(r.pairs);
  return r;
}

double antisymmetry_correlation(const PartModel& model, const Dataset& val, const SamplerConfig& sampler,
                                std::size_t images, std::uint64_t seed) {
  const std::size_t n = std::min(images, val.size());
  if (n == 0) throw ConfigError("antisymmetry_correlation: no images");
  std::vector<double> rho(n, 0.0);
  const Rng root(seed);
  parallel_items(n, 0, [&](std::size_t i) {
    Rng box_rng = root.split(i).split(1);
    const Item item = val.item(i);
    const std::vector<PatchBox> boxes = pretext_boxes(item.image.dims, sampler, box_rng);
    rho[i] = antisymmetry_residual(prediction_matrix(model, item.image, boxes)).correlation;
  });
  double sum = 0.0;
  for (double r : rho) sum += r;
  return sum / static_cast<double>(n);
}

Pretrainer::Pretrainer(const ModelConfig& model, const TrainConfig& train, const Dataset& data,
                       const nlohmann::json& run_config)
    : model_config_(model), train_(train), data_(data), run_config_(run_config), root_(train.seed) {
  train_.validate();
  if (data_.size() == 0) throw ConfigError("pretrain: dataset is empty");
  model_config_.head.target = train_.target_mode;
  model_config_.relative_head = true;
  if (!(data_.dims() == model_config_.dims)) {
    throw ConfigError("pretrain: dataset dims do not match model dims");
  }
  model_ = std::make_unique<PartModel>(model_config_, train_.seed);
  init_optimizer();
}

Pretrainer::Pretrainer(const Checkpoint& ckpt, const ModelConfig& model, const TrainConfig& train,
                       const Dataset& data, const nlohmann::json& run_config)
    : Pretrainer(model, train, data, run_config) {
  const std::size_t loaded = load_parameters(model_->params(), ckpt);
  if (loaded != model_->params().size()) throw FormatError("checkpoint does not cover every model parameter");
  restore_moments(*opt_, model_->params(), ckpt);
  step_ = ckpt.step;
  root_ = Rng(ckpt.rng_key, ckpt.rng_counter);
}

void Pretrainer::init_optimizer() { opt_ = std::make_unique<AdamW>(model_->params(), adamw_config(train_)); }

double Pretrainer::step() {
  const std::uint64_t s = step_;
  const double lr = learning_rate_at(s, train_.learning_rate, static_cast<std::uint64_t>(train_.steps),
                                     train_.warmup(), train_.schedule);
  const Rng step_rng = root_.split(1).split(s);
  const Rng frozen_pairs = root_.split(2);
  const auto pair_count = static_cast<std::size_t>(train_.pair_count);
  const PartModel& model = *model_;
  const SamplerConfig& sampler = model_config_.sampler;

  const double loss = batch_gradients(
      model_->params(), static_cast<std::size_t>(train_.batch_size), train_.threads,
      [&](std::size_t b, ad::Tape& tape) {
        Rng r = step_rng.split(b);
        const std::size_t index = static_cast<std::size_t>(r.below(data_.size()));
        Rng box_rng = r.split(1);
        Rng pair_rng = train_.freeze_pairs ? frozen_pairs.split(index) : r.split(2);
        const Item item = data_.item(index);
        const PretextSample sample = make_pretext_sample(item.image, sampler, train_.target_mode, pair_count,
                                                         box_rng, pair_rng, model_config_.vit.patch_size);
        return pretrain_loss(model.predict(tape, sample.seq, sample.pairs), tape.constant(sample.targets));
      },
      [&](std::size_t b) {
        Rng r = step_rng.split(b);
        const std::uint64_t index = r.below(data_.size());
        std::ostringstream os;
        os << "step " << s << ", batch item " << b << ", dataset index " << index << ", train.seed " << train_.seed
           << ", item rng key " << step_rng.split(b).key();
        return os.str();
      });
  opt_->step(lr);
  ++step_;
  return loss;
}

void Pretrainer::run(MetricsLog& log, const Dataset* val,
                     const std::function<void(const Pretrainer&, const MetricsRecord&)>& on_step) {
  const auto start = std::chrono::steady_clock::now();
  const auto total = static_cast<std::uint64_t>(train_.steps);
  while (step_ < total) {
    MetricsRecord r;
    r.learning_rate = learning_rate_at(step_, train_.learning_rate, total, train_.warmup(), train_.schedule);
    r.loss = step();
    r.step = step_;
    if (val != nullptr && train_.eval_every > 0 &&
        (step_ % static_cast<std::uint64_t>(train_.eval_every) == 0 || step_ == total)) {
      r.val_loss = evaluate_pretext(*model_, *val, model_config_.sampler, train_.target_mode,
                                    static_cast<std::size_t>(train_.val_pair_count), kValidationSeed)
                       .loss;
      if (train_.antisymmetry_images > 0) {
        r.antisymmetry = antisymmetry_correlation(*model_, *val, model_config_.sampler,
                                                  static_cast<std::size_t>(train_.antisymmetry_images),
                                                  kValidationSeed);
      }
    }
    r.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    log.append(r);
    if (on_step) on_step(*this, r);
  }
}

Checkpoint Pretrainer::checkpoint() const {
  Checkpoint c;
  c.config = nlohmann::json{{"model", to_json(model_config_)}, {"train", to_json(train_)}, {"run", run_config_}};
  c.step = step_;
  c.optimizer_steps = opt_->steps_taken();
  c.rng_key = root_.key();
  c.rng_counter = root_.counter();
  append_state(c, model_->params(), *opt_);
  return c;
}

Checkpoint pretrain(const Dataset& data, const ModelConfig& model, const TrainConfig& train, MetricsLog* log,
                    const Dataset* val) {
  Pretrainer p(model, train, data);
  MetricsLog local;
  p.run(log != nullptr ? *log : local, val);
  return p.checkpoint();
}

std::size_t load_parameters(ParameterStore& store, const Checkpoint& ckpt,
                            const std::vector<std::string>& skip_prefixes) {
  std::size_t loaded = 0;
  for (std::size_t i = 0; i < store.size(); ++i) {
    Parameter& p = store[i];
    const bool skip = std::any_of(skip_prefixes.begin(), skip_prefixes.end(),
                                  [&](const std::string& prefix) { return p.name.rfind(prefix, 0) == 0; });
    if (skip) continue;
    const Tensor* t = ckpt.find("param:" + p.name);
    if (t == nullptr) continue;
    if (t->shape() != p.value.shape()) {
      throw ShapeError("checkpoint tensor param:" + p.name + " is " + shape_string(*t) + ", model expects " +
                       shape_string(p.value));
    }
    p.value = *t;
    ++loaded;
  }
  return loaded;
}

std::unique_ptr<PartModel> model_from_checkpoint(const Checkpoint& ckpt) {
  if (!ckpt.config.is_object() || !ckpt.config.contains("model")) {
    throw FormatError("checkpoint header has no model configuration");
  }
  auto model = std::make_unique<PartModel>(model_config_from_json(ckpt.config.at("model")), 0);
  const std::size_t loaded = load_parameters(model->params(), ckpt);
  if (loaded != model->params().size()) throw FormatError("checkpoint does not cover every model parameter");
  return model;
}

double cohen_kappa(std::span<const int> a, std::span<const int> b, int num_classes) {
  if (a.size() != b.size()) throw ConfigError("cohen_kappa: label sequences differ in length");
  if (a.empty()) throw ConfigError("cohen_kappa: no labels");
  if (num_classes < 1) throw ConfigError("cohen_kappa: num_classes must be >= 1");
  std::vector<double> pa(static_cast<std::size_t>(num_classes), 0.0), pb(pa);
  double agree = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] < 0 || a[i] >= num_classes || b[i] < 0 || b[i] >= num_classes) {
      throw ConfigError("cohen_kappa: label outside [0, num_classes)");
    }
    pa[static_cast<std::size_t>(a[i])] += 1.0;
    pb[static_cast<std::size_t>(b[i])] += 1.0;
    if (a[i] == b[i]) agree += 1.0;
  }
  const double n = static_cast<double>(a.size());
  const double po = agree / n;
  double pe = 0.0;
  for (std::size_t c = 0; c < pa.size(); ++c) pe += (pa[c] / n) * (pb[c] / n);
  if (pe >= 1.0) return 0.0;
  return (po - pe) / (1.0 - pe);
}

ClassificationEval evaluate_classifier(const PartModel& model, const Dataset& data) {
  const int classes = model.config().num_classes;
  if (classes < 1) throw ConfigError("evaluate: model has no classifier");
  if (data.num_classes() < 1) throw ConfigError("evaluate: dataset is unlabeled");
  if (data.num_classes() != classes) throw ConfigError("evaluate: dataset and classifier disagree on the class count");
  if (data.size() == 0) throw ConfigError("evaluate: dataset is empty");
  if (!(data.dims() == model.config().dims)) throw ConfigError("evaluate: dataset dims do not match the model");
  const std::vector<PatchBox> grid = grid_boxes(model.config().dims, model.config().vit.patch_size);
  ClassificationEval r;
  r.predictions.assign(data.size(), 0);
  r.labels.assign(data.size(), 0);
  std::vector<double> losses(data.size(), 0.0);
  parallel_items(data.size(), 0, [&](std::size_t i) {
    const Item item = data.item(i);
    ad::Tape tape;
    ad::Var logits = model.classify(tape, model.patches(item.image, grid));
    const Tensor& z = logits.value();
    std::size_t best = 0;
    for (std::size_t k = 1; k < z.cols(); ++k) {
      if (z(0, k) > z(0, best)) best = k;
    }
    r.predictions[i] = static_cast<int>(best);
    r.labels[i] = item.label;
    const int label = item.label;
    losses[i] = ad::softmax_cross_entropy(logits, std::span<const int>(&label, 1)).value().item();
  });
  std::size_t correct = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (r.predictions[i] == r.labels[i]) ++correct;
    r.loss += losses[i];
  }
  r.loss /= static_cast<double>(data.size());
  r.accuracy = static_cast<double>(correct) / static_cast<double>(data.size());
  r.kappa = cohen_kappa(r.predictions, r.labels, classes);
  return r;
}

FinetuneResult finetune(const Checkpoint& pretrained, const Dataset& labeled, const Dataset& val,
                        const TrainConfig& train) {
  train.validate();
  if (train.mode == TrainMode::pretrain) throw ConfigError("finetune: train.mode must be finetune or probe");
  const int classes = labeled.num_classes();
  if (classes < 2) throw ConfigError("finetune: dataset has no label space (num_classes < 2)");
  if (labeled.size() == 0) throw ConfigError("finetune: dataset is empty");
  if (!pretrained.config.is_object() || !pretrained.config.contains("model")) {
    throw FormatError("checkpoint header has no model configuration");
  }
  ModelConfig m = model_config_from_json(pretrained.config.at("model"));
  if (!(labeled.dims() == m.dims)) {
    throw ConfigError("finetune: dataset dims " + std::to_string(labeled.dims().height) + "x" +
                      std::to_string(labeled.dims().width) + "x" + std::to_string(labeled.dims().channels) +
                      " do not match checkpoint dims " + std::to_string(m.dims.height) + "x" +
                      std::to_string(m.dims.width) + "x" + std::to_string(m.dims.channels));
  }
  const std::vector<PatchBox> grid = grid_boxes(m.dims, m.vit.patch_size);
  m.relative_head = false;
  m.num_classes = classes;
  m.vit.use_positional = true;
  m.vit.max_positions = static_cast<int>(grid.size()) + (m.vit.use_cls ? 1 : 0);
  m.sampler.mode = SamplingMode::grid;
  m.sampler.patch_count = static_cast<int>(grid.size());
  m.sampler.size_min = m.sampler.size_max = m.vit.patch_size;

  auto model = std::make_unique<PartModel>(m, train.seed);
  ParameterStore& store = model->params();
  const std::size_t loaded = load_parameters(store, pretrained, {"head.", "classifier.", "vit.pos"});
  std::size_t trunk = 0;
  for (std::size_t i = 0; i < store.size(); ++i) {
    if (store[i].name.rfind("vit.", 0) == 0 && store[i].name != "vit.pos") ++trunk;
  }
  if (loaded != trunk) throw ConfigError("finetune: checkpoint does not match the trunk configuration");

  const bool probe = train.mode == TrainMode::probe;
  model->vit().set_frozen(probe);
  AdamW opt(store, adamw_config(train));
  if (probe) {
    std::vector<Parameter*> trainable = store.with_prefix("classifier.");
    for (Parameter* p : store.with_prefix("vit.pos")) trainable.push_back(p);
    opt.set_trainable(trainable);
  }

  const Rng root = Rng(train.seed).split(4);
  const auto total = static_cast<std::uint64_t>(train.steps);
  const bool flips = train.hflip && m.dims.height > 1;
  FinetuneResult result;
  const auto start = std::chrono::steady_clock::now();
  for (std::uint64_t s = 0; s < total; ++s) {
    const double lr = learning_rate_at(s, train.learning_rate, total, train.warmup(), train.schedule);
    const Rng step_rng = root.split(s);
    const PartModel& cmodel = *model;
    MetricsRecord r;
    r.learning_rate = lr;
    r.loss = batch_gradients(
        store, static_cast<std::size_t>(train.batch_size), train.threads,
        [&](std::size_t b, ad::Tape& tape) {
          Rng rng = step_rng.split(b);
          const std::size_t index = static_cast<std::size_t>(rng.below(labeled.size()));
          const Item item = labeled.item(index);
          if (item.label < 0 || item.label >= classes) {
            throw ConfigError("finetune: item " + std::to_string(index) + " has label " + std::to_string(item.label) +
                              " outside [0, " + std::to_string(classes) + ")");
          }
          const bool flip = flips && rng.below(2) == 1;
          const PatchSequence seq = cmodel.patches(flip ? mirror(item.image) : item.image, grid);
          const int label = item.label;
          return ad::softmax_cross_entropy(cmodel.classify(tape, seq), std::span<const int>(&label, 1));
        },
        [&](std::size_t b) {
          return "finetune step " + std::to_string(s) + ", batch item " + std::to_string(b) + ", train.seed " +
                 std::to_string(train.seed);
        });
    opt.step(lr);
    r.step = s + 1;
    if (train.eval_every > 0 && (r.step % static_cast<std::uint64_t>(train.eval_every) == 0 || r.step == total)) {
      r.val_loss = evaluate_classifier(*model, val).loss;
    }
    r.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    result.log.append(r);
  }
  result.eval = evaluate_classifier(*model, val);

  Checkpoint& c = result.checkpoint;
  c.config = nlohmann::json{{"model", to_json(m)}, {"train", to_json(train)}};
  c.step = total;
  c.optimizer_steps = opt.steps_taken();
  c.rng_key = root.key();
  c.rng_counter = root.counter();
  append_state(c, store, opt);
  return result;
}

}  // namespace part

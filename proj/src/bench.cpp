#include "lobg/bench.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "lobg/errors.hpp"
#include "lobg/fif.hpp"
#include "lobg/hld.hpp"
#include "lobg/log.hpp"
#include "lobg/ops.hpp"
#include "lobg/optim.hpp"
#include "lobg/pretrain.hpp"
#include "lobg/stp.hpp"

namespace lobg::bench {

void LossWeights::validate() const {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw InvalidParameter("loss.lambda must be >= 0");
  if (!(gamma >= 0.0) || !std::isfinite(gamma)) throw InvalidParameter("loss.gamma must be >= 0");
}

void TrainOptions::validate() const {
  auto fail = [](const std::string& key, const std::string& why) { throw InvalidParameter(key + ": " + why); };
  if (!(mask_threshold >= 0.0 && mask_threshold <= 100.0)) fail("loss.mask_threshold", "must be in [0, 100]");
  if (!(fif_probability >= 0.0 && fif_probability <= 1.0)) fail("train.fif_probability", "must be in [0, 1]");
  if (optimizer != "sgd" && optimizer != "adam") fail("train.optimizer", "expected sgd or adam");
  if (!(lr > 0.0)) fail("train.lr", "must be > 0");
  if (batch_size == 0) fail("train.batch_size", "must be > 0");
  if (visual_tokens + text_tokens == 0) fail("train.visual_tokens", "no prompt tokens to train");
  if (!(prompt_init_std > 0.0)) fail("train.prompt_init_std", "must be > 0");
  if (!(layer_sigma > 0.0)) fail("train.layer_sigma", "must be > 0");
  if (!(layer_jitter >= 0.0)) fail("train.layer_jitter", "must be >= 0");
  if (triplet_samples == 0) fail("train.triplet_samples", "must be > 0");
}

double harmonic_mean(double a, double b) {
  if (a < 0 || b < 0) throw InvalidParameter("harmonic_mean: accuracies must be >= 0");
  if (a == 0.0 || b == 0.0) return 0.0;
  return 2.0 * a * b / (a + b);
}

double evaluate(const DualEncoder& model, const PromptSet* prompts, const std::vector<ClassEntry>& classes,
                const std::vector<std::size_t>& class_ids, const std::vector<Sample>& samples) {
  return zero_shot_accuracy(model, prompts, classes, class_ids, samples);
}

namespace {

// Teacher-side data that never changes during a run.
struct TeacherView {
  std::vector<Tensor> layers;  // per block [1, d]
  Tensor embedding;            // [1, d]
};

TeacherView teacher_view(const DualEncoder& model, const Image& x) {
  auto fs = model.encode_image(x, nullptr);
  TeacherView v;
  for (auto& t : fs.layer_features) v.layers.push_back(t.detach());
  v.embedding = fs.embedding.detach();
  return v;
}

void dump_batch(const std::filesystem::path& dir, const std::vector<const Image*>& images,
                const std::vector<std::size_t>& labels, const StepInfo& info) {
  std::filesystem::create_directories(dir);
  nlohmann::json j;
  j["epoch"] = info.epoch;
  j["step"] = info.step;
  j["loss"] = {{"cls", info.parts.cls}, {"hld", info.parts.hld}, {"stp", info.parts.stp}, {"total", info.parts.total}};
  j["labels"] = labels;
  auto arr = nlohmann::json::array();
  for (const auto* img : images) arr.push_back({{"channels", img->channels}, {"size", img->size}, {"pixels", img->pixels}});
  j["images"] = std::move(arr);
  std::ofstream(dir / "nonfinite_batch.json") << j.dump();
}

}  // namespace

TrainResult train_prompts(const DualEncoder& model, const B2NDataset& data, const LossWeights& weights,
                          const TrainOptions& opts, std::uint64_t seed, const StepObserver& observer) {
  weights.validate();
  opts.validate();
  if (!model.frozen()) throw InvalidParameter("train_prompts: the teacher must be frozen");
  if (data.train.empty()) throw InvalidInput("train_prompts: empty training split");
  const auto& cfg = model.config();
  const double tau = cfg.temperature;

  std::vector<Image> probe;
  for (std::size_t i = 0; i < std::min<std::size_t>(2, data.train.size()); ++i) probe.push_back(data.train[i].image);
  const auto teacher_hash = probe_hash(model, probe);

  // Independent streams so enabling a component never perturbs another's draws.
  std::mt19937_64 init_rng(seed ^ 0x1111'2222'3333'4444ull);
  std::mt19937_64 order_rng(seed ^ 0x5555'6666'7777'8888ull);
  std::mt19937_64 fif_rng(seed ^ 0x9999'aaaa'bbbb'ccccull);
  std::mt19937_64 stp_rng(seed ^ 0xdddd'eeee'ffff'0000ull);

  TrainResult result;
  result.prompts = PromptSet::init(cfg, opts.visual_tokens, opts.text_tokens, init_rng, opts.prompt_init_std);
  result.initial = result.prompts.clone();
  auto optimizer = make_optimizer(opts.optimizer, result.prompts.parameters(), opts.lr);

  // Labels local to the base class list.
  std::map<std::size_t, std::size_t> local;
  for (std::size_t i = 0; i < data.base.size(); ++i) local[data.base[i]] = i;
  const auto base_seqs = data.class_tokens(data.base);
  const Tensor teacher_text = model.encode_texts(base_seqs, nullptr).detach();

  // FIF masks and the teacher's view of each (possibly masked) training image.
  const std::size_t n = data.train.size();
  std::vector<Image> masked;
  std::vector<TeacherView> view_raw(n), view_masked;
  for (std::size_t i = 0; i < n; ++i) view_raw[i] = teacher_view(model, data.train[i].image);
  if (opts.fif) {
    masked.reserve(n);
    view_masked.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      const auto& img = data.train[i].image;
      masked.push_back(fif::apply_mask(fif::build_mask(fif::extract_attention(model, img), opts.mask_threshold), img));
      view_masked[i] = teacher_view(model, masked.back());
    }
  }

  const double layer_center = opts.layer_center < 0 ? static_cast<double>(cfg.layers) : opts.layer_center;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::size_t step = 0;

  for (std::size_t epoch = 0; epoch < opts.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), order_rng);
    LossParts acc;
    std::size_t steps = 0;
    for (std::size_t start = 0; start < n; start += opts.batch_size) {
      const std::size_t end = std::min(n, start + opts.batch_size);
      const bool use_mask = opts.fif && std::bernoulli_distribution(opts.fif_probability)(fif_rng);

      std::vector<const Image*> inputs;
      std::vector<const TeacherView*> views;
      std::vector<std::size_t> labels;
      for (std::size_t i = start; i < end; ++i) {
        const std::size_t idx = order[i];
        inputs.push_back(use_mask ? &masked[idx] : &data.train[idx].image);
        views.push_back(use_mask ? &view_masked[idx] : &view_raw[idx]);
        labels.push_back(local.at(data.train[idx].label));
      }

      std::vector<FeatureStack> stacks;
      std::vector<Tensor> zs;
      for (const auto* img : inputs) {
        stacks.push_back(model.encode_image(*img, &result.prompts));
        zs.push_back(stacks.back().embedding);
      }
      const Tensor student_z = concat_rows(zs);
      const Tensor student_text = model.encode_texts(base_seqs, &result.prompts);
      const Tensor student_p = predict(student_z, student_text, tau);

      StepInfo info;
      info.epoch = epoch;
      info.step = step;
      Tensor l_cls = cross_entropy_loss(student_p, labels);
      Tensor total = l_cls;
      info.parts.cls = l_cls.item();

      if (opts.hld) {
        std::vector<Tensor> tz;
        for (const auto* v : views) tz.push_back(v->embedding);
        const Tensor teacher_p = predict(concat_rows(tz), teacher_text, tau);
        const Tensor l_hld = hld::hld_total(
            hld::ikd_loss(teacher_p, student_p),
            hld::ckd_loss(hld::class_relation(teacher_p), hld::class_relation(student_p)));
        info.parts.hld = l_hld.item();
        total = add(total, scale(l_hld, weights.lambda));
      }
      if (opts.stp) {
        const auto lw = stp::sample_layer_weights(cfg.layers, layer_center, opts.layer_sigma, opts.layer_jitter, stp_rng);
        std::vector<Tensor> fs, ft;
        for (std::size_t b = 0; b < stacks.size(); ++b) {
          fs.push_back(stp::fuse_layers(stacks[b], lw));
          ft.push_back(stp::fuse_layers(views[b]->layers, lw));
        }
        const auto triplets = stp::make_triplets(stacks.size(), stp_rng, opts.triplet_samples);
        auto vision = stp::stp_vision_loss(concat_rows(ft), concat_rows(fs), triplets);
        info.skipped_triplets = vision.skipped;
        const Tensor l_stp = stp::stp_total(vision.value, stp::stp_text_loss(teacher_text, student_text));
        info.parts.stp = l_stp.item();
        total = add(total, scale(l_stp, weights.gamma));
      }
      info.parts.total = total.item();

      if (!std::isfinite(info.parts.total)) {
        std::ostringstream msg;
        msg << "non-finite loss at epoch " << epoch << " step " << step << " (cls " << info.parts.cls << ", hld "
            << info.parts.hld << ", stp " << info.parts.stp << "); batch indices";
        for (std::size_t i = start; i < end; ++i) msg << ' ' << order[i];
        if (!opts.dump_dir.empty()) {
          dump_batch(opts.dump_dir, inputs, labels, info);
          msg << "; batch written to " << (opts.dump_dir / "nonfinite_batch.json").string();
        }
        throw TrainingFailed(msg.str());
      }
      const double recomposed = info.parts.cls + (opts.hld ? weights.lambda * info.parts.hld : 0.0) +
                                (opts.stp ? weights.gamma * info.parts.stp : 0.0);
      if (std::fabs(recomposed - info.parts.total) > 1e-10) {
        throw TrainingFailed("loss decomposition mismatch at step " + std::to_string(step));
      }

      backward(total);
      optimizer->step();
      if (observer) observer(info);

      acc.cls += info.parts.cls;
      acc.hld += info.parts.hld;
      acc.stp += info.parts.stp;
      acc.total += info.parts.total;
      ++steps;
      ++step;
    }
    const double k = static_cast<double>(std::max<std::size_t>(steps, 1));
    result.epoch_losses.push_back({acc.cls / k, acc.hld / k, acc.stp / k, acc.total / k});
  }

  if (probe_hash(model, probe) != teacher_hash) throw TrainingFailed("teacher output changed during prompt tuning");
  return result;
}

MetricsRecord run_cell(const DualEncoder& teacher, const DatasetConfig& data_cfg, const CellSpec& cell,
                       std::uint64_t seed, const std::string& config_hash, PromptSet* prompts_out) {
  MetricsRecord r;
  r.config_hash = config_hash;
  r.seed = seed;
  r.q = cell.train.mask_threshold;
  r.lambda = cell.weights.lambda;
  r.gamma = cell.weights.gamma;
  r.fif = cell.train.fif;
  r.stp = cell.train.stp;
  r.hld = cell.train.hld;
  r.epochs = cell.train.epochs;
  const auto t0 = std::chrono::steady_clock::now();
  try {
    const auto ds = generate_b2n(data_cfg, seed);
    auto trained = train_prompts(teacher, ds, cell.weights, cell.train, seed);
    r.epoch_losses = std::move(trained.epoch_losses);
    r.base_acc = evaluate(teacher, &trained.prompts, ds.classes, ds.base, ds.test_base);
    r.novel_acc = evaluate(teacher, &trained.prompts, ds.classes, ds.novel, ds.test_novel);
    r.hm = harmonic_mean(r.base_acc, r.novel_acc);
    if (prompts_out) *prompts_out = std::move(trained.prompts);
  } catch (const std::exception& e) {
    r.error = e.what();
    r.base_acc = r.novel_acc = r.hm = std::nan("");
    log_warning("cell '" + cell.name + "' seed " + std::to_string(seed) + " failed: " + r.error);
  }
  r.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

AblationResult run_ablation(const DualEncoder& teacher, const DatasetConfig& data_cfg, const std::vector<CellSpec>& cells,
                            const std::vector<std::uint64_t>& seeds, std::size_t threads,
                            const std::function<std::string(const CellSpec&)>& hash_fn) {
  if (cells.empty() || seeds.empty()) throw InvalidParameter("ablation grid must have at least one cell and seed");
  AblationResult out;
  out.cells = cells;
  out.seeds = seeds;
  const std::size_t jobs = cells.size() * seeds.size();
  out.records.resize(jobs);
  std::vector<std::string> hashes;
  for (const auto& c : cells) hashes.push_back(hash_fn ? hash_fn(c) : std::string());

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t j = next++; j < jobs; j = next++) {
      const std::size_t c = j / seeds.size(), s = j % seeds.size();
      out.records[j] = run_cell(teacher, data_cfg, cells[c], seeds[s], hashes[c]);
      log_info("  " + cells[c].name + " seed " + std::to_string(seeds[s]) + " done");
    }
  };
  const std::size_t n = std::max<std::size_t>(1, std::min(threads, jobs));
  if (n == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t i = 0; i < n; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  return out;
}

std::vector<CellSpec> component_grid(const CellSpec& full) {
  auto make = [&](const char* name, bool stp, bool hld, bool fif) {
    CellSpec c = full;
    c.name = name;
    c.train.stp = stp;
    c.train.hld = hld;
    c.train.fif = fif;
    if (!stp) c.weights.gamma = 0.0;
    if (!hld) c.weights.lambda = 0.0;
    return c;
  };
  return {make("baseline", false, false, false), make("+stp", true, false, false),
          make("+stp+hld", true, true, false),   make("+stp+hld+fif", true, true, true),
          make("+hld", false, true, false)};
}

std::vector<Summary> summarize(const AblationResult& result) {
  std::vector<Summary> out;
  for (std::size_t c = 0; c < result.cells.size(); ++c) {
    Summary s;
    s.name = result.cells[c].name;
    std::vector<double> b, nv, h;
    for (std::size_t k = 0; k < result.seeds.size(); ++k) {
      const auto& r = result.at(c, k);
      if (!r.error.empty()) continue;
      b.push_back(r.base_acc);
      nv.push_back(r.novel_acc);
      h.push_back(r.hm);
    }
    s.n = b.size();
    auto stats = [](const std::vector<double>& v, double& mean, double& sd) {
      if (v.empty()) {
        mean = sd = std::nan("");
        return;
      }
      mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
      double ss = 0.0;
      for (double x : v) ss += (x - mean) * (x - mean);
      sd = v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0;
    };
    stats(b, s.base_mean, s.base_std);
    stats(nv, s.novel_mean, s.novel_std);
    stats(h, s.hm_mean, s.hm_std);
    out.push_back(s);
  }
  return out;
}

const char* const kCsvHeader = "config_hash,seed,q,lambda,gamma,fif,stp,hld,base_acc,novel_acc,hm,epochs,wall_ms";

std::string csv_row_untimed(const MetricsRecord& r) {
  char buf[512];
  std::snprintf(buf, sizeof buf, "%s,%llu,%g,%g,%g,%d,%d,%d,%.6f,%.6f,%.6f,%zu", r.config_hash.c_str(),
                static_cast<unsigned long long>(r.seed), r.q, r.lambda, r.gamma, r.fif ? 1 : 0, r.stp ? 1 : 0,
                r.hld ? 1 : 0, r.base_acc, r.novel_acc, r.hm, r.epochs);
  return buf;
}

std::string csv_row(const MetricsRecord& r) {
  char buf[64];
  std::snprintf(buf, sizeof buf, ",%.0f", r.wall_ms);
  return csv_row_untimed(r) + buf;
}

void write_csv(const std::filesystem::path& path, const std::vector<MetricsRecord>& records) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw InvalidInput("cannot write " + path.string());
  out << kCsvHeader << '\n';
  for (const auto& r : records) out << csv_row(r) << '\n';
}

}  // namespace lobg::bench

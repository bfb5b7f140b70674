#include "lobg/config.hpp"

#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "lobg/errors.hpp"
#include "lobg/log.hpp"

namespace lobg {

PretrainOptions TeacherSettings::options() const {
  PretrainOptions o;
  o.max_epochs = epochs;
  o.batch_size = batch_size;
  o.lr = lr;
  o.target_accuracy = target_accuracy;
  o.seed = seed;
  return o;
}

namespace {

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const char* expected) {
  throw InvalidParameter(key + ": cannot parse '" + value + "' as " + expected);
}

double parse_double(const std::string& key, const std::string& v) {
  char* end = nullptr;
  const double d = std::strtod(v.c_str(), &end);
  if (v.empty() || end != v.c_str() + v.size()) bad_value(key, v, "a number");
  return d;
}

std::uint64_t parse_uint(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || ec != std::errc() || p != v.data() + v.size()) bad_value(key, v, "a non-negative integer");
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "on" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "off" || v == "no") return false;
  bad_value(key, v, "a boolean");
}

std::string fmt_double(double d) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", d);
  // Prefer the shortest representation that round-trips.
  for (int prec = 1; prec <= 17; ++prec) {
    char s[64];
    std::snprintf(s, sizeof s, "%.*g", prec, d);
    if (std::strtod(s, nullptr) == d) return s;
  }
  return buf;
}

struct Field {
  const char* section;
  const char* name;
  std::function<void(RunConfig&, const std::string& key, const std::string& value)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <typename T>
Field size_field(const char* sec, const char* name, T RunConfig::*group, std::size_t T::*member) {
  return {sec, name,
          [group, member](RunConfig& c, const std::string& k, const std::string& v) {
            (c.*group).*member = static_cast<std::size_t>(parse_uint(k, v));
          },
          [group, member](const RunConfig& c) { return std::to_string((c.*group).*member); }};
}

template <typename T>
Field u64_field(const char* sec, const char* name, T RunConfig::*group, std::uint64_t T::*member) {
  return {sec, name,
          [group, member](RunConfig& c, const std::string& k, const std::string& v) {
            (c.*group).*member = parse_uint(k, v);
          },
          [group, member](const RunConfig& c) { return std::to_string((c.*group).*member); }};
}

template <typename T>
Field double_field(const char* sec, const char* name, T RunConfig::*group, double T::*member) {
  return {sec, name,
          [group, member](RunConfig& c, const std::string& k, const std::string& v) {
            (c.*group).*member = parse_double(k, v);
          },
          [group, member](const RunConfig& c) { return fmt_double((c.*group).*member); }};
}

template <typename T>
Field bool_field(const char* sec, const char* name, T RunConfig::*group, bool T::*member) {
  return {sec, name,
          [group, member](RunConfig& c, const std::string& k, const std::string& v) {
            (c.*group).*member = parse_bool(k, v);
          },
          [group, member](const RunConfig& c) { return std::string((c.*group).*member ? "true" : "false"); }};
}

template <typename T>
Field string_field(const char* sec, const char* name, T RunConfig::*group, std::string T::*member) {
  return {sec, name, [group, member](RunConfig& c, const std::string&, const std::string& v) { (c.*group).*member = v; },
          [group, member](const RunConfig& c) { return (c.*group).*member; }};
}

const std::vector<Field>& fields() {
  using bench::LossWeights;
  using bench::TrainOptions;
  static const std::vector<Field> table = [] {
    std::vector<Field> f;
    auto m = &RunConfig::model;
    f.push_back(size_field("model", "embed_dim", m, &ModelConfig::embed_dim));
    f.push_back(size_field("model", "layers", m, &ModelConfig::layers));
    f.push_back(size_field("model", "heads", m, &ModelConfig::heads));
    f.push_back(size_field("model", "patch_size", m, &ModelConfig::patch_size));
    f.push_back(size_field("model", "image_size", m, &ModelConfig::image_size));
    f.push_back(size_field("model", "channels", m, &ModelConfig::channels));
    f.push_back(size_field("model", "vocab_size", m, &ModelConfig::vocab_size));
    f.push_back(size_field("model", "max_text_len", m, &ModelConfig::max_text_len));
    f.push_back(size_field("model", "mlp_ratio", m, &ModelConfig::mlp_ratio));
    f.push_back(size_field("model", "prompt_depth", m, &ModelConfig::prompt_depth));
    f.push_back(double_field("model", "temperature", m, &ModelConfig::temperature));

    auto d = &RunConfig::data;
    f.push_back(size_field("data", "num_classes", d, &DatasetConfig::num_classes));
    f.push_back(size_field("data", "shots", d, &DatasetConfig::shots));
    f.push_back(size_field("data", "test_per_class", d, &DatasetConfig::test_per_class));
    f.push_back(double_field("data", "rho", d, &DatasetConfig::rho));
    f.push_back(double_field("data", "noise", d, &DatasetConfig::noise));
    f.push_back(size_field("data", "confound_size", d, &DatasetConfig::confound_size));

    auto t = &RunConfig::teacher;
    f.push_back(size_field("teacher", "per_class", t, &TeacherSettings::per_class));
    f.push_back(size_field("teacher", "epochs", t, &TeacherSettings::epochs));
    f.push_back(size_field("teacher", "batch_size", t, &TeacherSettings::batch_size));
    f.push_back(double_field("teacher", "lr", t, &TeacherSettings::lr));
    f.push_back(double_field("teacher", "target_accuracy", t, &TeacherSettings::target_accuracy));
    f.push_back(u64_field("teacher", "seed", t, &TeacherSettings::seed));

    auto tr = &RunConfig::train;
    f.push_back(string_field("train", "optimizer", tr, &TrainOptions::optimizer));
    f.push_back(double_field("train", "lr", tr, &TrainOptions::lr));
    f.push_back(size_field("train", "epochs", tr, &TrainOptions::epochs));
    f.push_back(size_field("train", "batch_size", tr, &TrainOptions::batch_size));
    f.push_back(size_field("train", "visual_tokens", tr, &TrainOptions::visual_tokens));
    f.push_back(size_field("train", "text_tokens", tr, &TrainOptions::text_tokens));
    f.push_back(double_field("train", "prompt_init_std", tr, &TrainOptions::prompt_init_std));
    f.push_back(double_field("train", "fif_probability", tr, &TrainOptions::fif_probability));
    f.push_back(double_field("train", "layer_sigma", tr, &TrainOptions::layer_sigma));
    f.push_back(double_field("train", "layer_center", tr, &TrainOptions::layer_center));
    f.push_back(double_field("train", "layer_jitter", tr, &TrainOptions::layer_jitter));
    f.push_back(size_field("train", "triplet_samples", tr, &TrainOptions::triplet_samples));

    auto w = &RunConfig::weights;
    f.push_back(double_field("loss", "lambda", w, &LossWeights::lambda));
    f.push_back(double_field("loss", "gamma", w, &LossWeights::gamma));
    f.push_back(double_field("loss", "mask_threshold", tr, &TrainOptions::mask_threshold));
    f.push_back(bool_field("loss", "fif", tr, &TrainOptions::fif));
    f.push_back(bool_field("loss", "stp", tr, &TrainOptions::stp));
    f.push_back(bool_field("loss", "hld", tr, &TrainOptions::hld));

    f.push_back({"run", "seeds",
                 [](RunConfig& c, const std::string& k, const std::string& v) {
                   c.seeds.clear();
                   std::stringstream ss(v);
                   std::string item;
                   while (std::getline(ss, item, ',')) {
                     const auto b = item.find_first_not_of(" \t"), e = item.find_last_not_of(" \t");
                     if (b == std::string::npos) bad_value(k, v, "a comma-separated seed list");
                     c.seeds.push_back(parse_uint(k, item.substr(b, e - b + 1)));
                   }
                 },
                 [](const RunConfig& c) {
                   std::string s;
                   for (std::size_t i = 0; i < c.seeds.size(); ++i) s += (i ? "," : "") + std::to_string(c.seeds[i]);
                   return s;
                 }});
    f.push_back({"run", "output_dir", [](RunConfig& c, const std::string&, const std::string& v) { c.output_dir = v; },
                 [](const RunConfig& c) { return c.output_dir; }});
    f.push_back({"run", "teacher_checkpoint",
                 [](RunConfig& c, const std::string&, const std::string& v) { c.teacher_checkpoint = v; },
                 [](const RunConfig& c) { return c.teacher_checkpoint; }});
    f.push_back({"run", "threads",
                 [](RunConfig& c, const std::string& k, const std::string& v) {
                   c.threads = static_cast<std::size_t>(parse_uint(k, v));
                 },
                 [](const RunConfig& c) { return std::to_string(c.threads); }});
    return f;
  }();
  return table;
}

std::string render(const RunConfig& c, bool include_run) {
  std::string out, section;
  for (const auto& f : fields()) {
    if (!include_run && std::string(f.section) == "run") continue;
    if (section != f.section) {
      if (!section.empty()) out += '\n';
      section = f.section;
      out += "[" + section + "]\n";
    }
    out += std::string(f.name) + " = " + f.get(c) + '\n';
  }
  return out;
}

std::string fnv_hex(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace

void RunConfig::validate() const {
  model.validate();
  const DatasetConfig d = dataset();
  d.validate();
  if (d.num_classes + kFirstClassToken > model.vocab_size) {
    throw InvalidParameter("data.num_classes: " + std::to_string(d.num_classes) + " classes need vocab_size >= " +
                           std::to_string(d.num_classes + kFirstClassToken));
  }
  if (teacher.per_class == 0) throw InvalidParameter("teacher.per_class must be > 0");
  if (teacher.epochs == 0) throw InvalidParameter("teacher.epochs must be > 0");
  if (teacher.batch_size < 2) throw InvalidParameter("teacher.batch_size must be >= 2");
  if (!(teacher.lr > 0)) throw InvalidParameter("teacher.lr must be > 0");
  if (!(teacher.target_accuracy >= 0 && teacher.target_accuracy <= 1))
    throw InvalidParameter("teacher.target_accuracy must be in [0, 1]");
  weights.validate();
  train.validate();
  if (seeds.empty()) throw InvalidParameter("run.seeds must list at least one seed");
  if (threads == 0) throw InvalidParameter("run.threads must be >= 1");
}

std::string RunConfig::to_ini() const { return render(*this, true); }

RunConfig RunConfig::parse(const std::string& text) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  std::istringstream in(text);
  try {
    pt::ini_parser::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw InvalidParameter(std::string("config: ") + e.what());
  }
  RunConfig c;
  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty()) {
      throw InvalidParameter("config key '" + section + "' must live inside a [section]");
    }
    for (const auto& [name, value] : body) {
      const std::string key = section + "." + name;
      const Field* hit = nullptr;
      for (const auto& f : fields())
        if (section == f.section && name == f.name) hit = &f;
      if (!hit) throw InvalidParameter("unknown config key '" + key + "'");
      hit->set(c, key, value.data());
    }
  }
  c.validate();
  return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidParameter("cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

std::string RunConfig::hash() const { return fnv_hex(render(*this, false)); }

std::string RunConfig::teacher_hash() const {
  std::string text;
  for (const auto& f : fields()) {
    const std::string sec = f.section;
    if (sec == "model" || sec == "data" || sec == "teacher") text += sec + "." + f.name + "=" + f.get(*this) + "\n";
  }
  return fnv_hex(text);
}

std::filesystem::path RunConfig::resolved_teacher_checkpoint() const {
  if (!teacher_checkpoint.empty()) return teacher_checkpoint;
  return resolved_output_dir() / ("teacher-" + teacher_hash() + ".json");
}

std::string RunConfig::hash_for(const bench::CellSpec& cell) const {
  RunConfig c = *this;
  c.train = cell.train;
  c.weights = cell.weights;
  return c.hash();
}

DatasetConfig RunConfig::dataset() const {
  DatasetConfig d = data;
  d.image_size = model.image_size;
  d.channels = model.channels;
  return d;
}

bench::CellSpec RunConfig::cell(const std::string& name) const { return {name, weights, train}; }

std::filesystem::path RunConfig::resolved_output_dir() const {
  if (!output_dir.empty()) return output_dir;
  if (const char* env = std::getenv("LOBG_OUT"); env && *env) return env;
  return "runs";
}

DualEncoder obtain_teacher(const RunConfig& cfg, PretrainReport* report) {
  const auto path = cfg.resolved_teacher_checkpoint();
  if (std::filesystem::exists(path)) {
    log_info("loading teacher from " + path.string());
    auto m = DualEncoder::load(path);
    if (!(m.config() == cfg.model)) {
      throw InvalidParameter("run.teacher_checkpoint: " + path.string() +
                             " was trained with a different [model] section");
    }
    if (!m.frozen()) m.freeze();
    return m;
  }
  const DatasetConfig d = cfg.dataset();
  log_info("pretraining teacher (no checkpoint at " + path.string() + ")");
  const auto pool = generate_pretrain_set(d, cfg.teacher.per_class, cfg.teacher.seed);
  auto m = pretrain_teacher(pool, make_class_table(d.num_classes), cfg.model, cfg.teacher.options(), report);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  m.save(path);
  log_info("saved teacher to " + path.string());
  return m;
}

}  // namespace lobg

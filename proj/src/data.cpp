#include "lobg/data.hpp"

#include <array>
#include <cmath>
#include <fstream>
#include <functional>
#include <random>

#include <json.hpp>

#include "lobg/errors.hpp"

namespace lobg {

namespace {

// Shape membership in object coordinates (u, v) scaled so the shape spans
// roughly [-1, 1]. v grows downward.
using ShapeFn = bool (*)(double, double);

constexpr std::array<ShapeFn, 12> kShapes = {
    [](double u, double v) { return u * u + v * v <= 1.0; },                                   // disk
    [](double u, double v) { return std::max(std::fabs(u), std::fabs(v)) <= 0.8; },            // square
    [](double u, double v) { const double r = std::hypot(u, v); return r >= 0.55 && r <= 1.0; },  // ring
    [](double u, double v) { return v >= -0.9 && v <= 0.8 && std::fabs(u) <= 0.6 * (v + 0.9); },  // triangle
    [](double u, double v) {                                                                   // plus
      return (std::fabs(u) <= 0.3 && std::fabs(v) <= 1.0) || (std::fabs(v) <= 0.3 && std::fabs(u) <= 1.0);
    },
    [](double u, double v) {  // cross
      return std::max(std::fabs(u), std::fabs(v)) <= 0.85 && (std::fabs(u - v) <= 0.4 || std::fabs(u + v) <= 0.4);
    },
    [](double u, double v) {  // H
      const double au = std::fabs(u), av = std::fabs(v);
      return au <= 0.9 && av <= 0.9 && (au >= 0.55 || av <= 0.22);
    },
    [](double u, double v) { return std::fabs(u) + std::fabs(v) <= 1.0; },  // diamond
    [](double u, double v) {                                                // frame
      const double m = std::max(std::fabs(u), std::fabs(v));
      return m <= 0.9 && m >= 0.55;
    },
    [](double u, double v) { return std::fabs(u) <= 0.3 && std::fabs(v) <= 1.0; },               // bar
    [](double u, double v) { return u * u + v * v <= 1.0 && v >= 0.0; },                         // half-disk
    [](double u, double v) { return (u >= -0.8 && u <= -0.3 && std::fabs(v) <= 0.9) || (v >= 0.4 && v <= 0.9 && std::fabs(u) <= 0.8); },  // L
};

constexpr std::array<const char*, 12> kShapeNames = {"disk",  "square", "ring",    "triangle", "plus",      "cross",
                                                     "h",     "diamond", "frame",  "bar",      "half-disk", "l-shape"};

// Deterministic per-id texture: a bit pattern over the patch and a colour.
struct Texture {
  std::vector<int> bits;
  std::array<double, 3> color;
};

Texture texture_for(std::size_t id, std::size_t side) {
  std::mt19937_64 rng(0x9e3779b97f4a7c15ull ^ (id * 0x100000001b3ull));
  Texture t;
  t.bits.resize(side * side);
  for (std::size_t y = 0; y < side; ++y)
    for (std::size_t x = 0; x < side; ++x) {
      // stripe family chosen by id, then a per-id bit flip pattern on top
      int b = 0;
      switch (id % 4) {
        case 0: b = static_cast<int>((x + y) % 2); break;
        case 1: b = static_cast<int>(x % 2); break;
        case 2: b = static_cast<int>(y % 2); break;
        default: b = static_cast<int>((x / 2 + y / 2) % 2); break;
      }
      if ((rng() & 7) == 0 && id >= 4) b ^= 1;
      t.bits[y * side + x] = b;
    }
  static constexpr std::array<std::array<double, 3>, 6> kColors = {{
      {1.0, 0.1, 0.1}, {0.1, 1.0, 0.1}, {0.1, 0.1, 1.0}, {1.0, 1.0, 0.1}, {1.0, 0.1, 1.0}, {0.1, 1.0, 1.0}}};
  t.color = kColors[id % kColors.size()];
  return t;
}

class Renderer {
 public:
  Renderer(const DatasetConfig& cfg, std::uint64_t stream) : cfg_(cfg), rng_(stream) {}

  Sample draw(std::size_t label, std::size_t confound) {
    const double s = static_cast<double>(cfg_.image_size);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    std::normal_distribution<double> noise(0.0, cfg_.noise);
    const double cx = s / 2 + (u01(rng_) - 0.5) * s * 0.15;
    const double cy = s / 2 + (u01(rng_) - 0.5) * s * 0.15;
    const double radius = s * (0.28 + 0.08 * u01(rng_));
    const double angle = (u01(rng_) - 0.5) * 0.5;  // about +-14 degrees
    std::array<double, 3> color{};
    for (auto& c : color) c = 0.5 + 0.5 * u01(rng_);
    const double ca = std::cos(angle), sa = std::sin(angle);
    const ShapeFn shape = kShapes[label % kShapes.size()];

    Sample out;
    out.label = label;
    out.confound = confound;
    out.image = Image(cfg_.channels, cfg_.image_size);
    auto& img = out.image;
    for (std::size_t y = 0; y < cfg_.image_size; ++y)
      for (std::size_t x = 0; x < cfg_.image_size; ++x) {
        const double dx = (static_cast<double>(x) + 0.5 - cx) / radius;
        const double dy = (static_cast<double>(y) + 0.5 - cy) / radius;
        const double u = ca * dx + sa * dy;
        const double v = -sa * dx + ca * dy;
        const bool inside = shape(u, v);
        for (std::size_t c = 0; c < cfg_.channels; ++c) {
          img.at(c, y, x) = (inside ? color[c % 3] : 0.0) + noise(rng_);
        }
      }

    if (confound == kNoConfound) return out;

    // Texture sits on the object, near its centre.
    const std::size_t side = cfg_.confound_size;
    const Texture tex = texture_for(confound, side);
    const double jitter = side * 0.5;
    const long ox = std::lround(cx - side / 2.0 + (u01(rng_) - 0.5) * jitter);
    const long oy = std::lround(cy - side / 2.0 + (u01(rng_) - 0.5) * jitter);
    for (std::size_t y = 0; y < side; ++y)
      for (std::size_t x = 0; x < side; ++x) {
        const long px = ox + static_cast<long>(x), py = oy + static_cast<long>(y);
        if (px < 0 || py < 0 || px >= static_cast<long>(cfg_.image_size) || py >= static_cast<long>(cfg_.image_size)) continue;
        const double on = tex.bits[y * side + x] ? 1.5 : -0.5;
        for (std::size_t c = 0; c < cfg_.channels; ++c) {
          img.at(c, static_cast<std::size_t>(py), static_cast<std::size_t>(px)) = on * tex.color[c % 3];
        }
      }
    return out;
  }

  std::size_t uniform_index(std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng_); }
  bool bernoulli(double p) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng_) < p; }

 private:
  const DatasetConfig& cfg_;
  std::mt19937_64 rng_;
};

std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t split) {
  // splitmix64 of (seed, split)
  std::uint64_t z = seed * 0x9e3779b97f4a7c15ull + split + 0x632be59bd9b4e019ull;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

// confounds == 0 draws texture-free images.
std::vector<Sample> draw_decorrelated(const DatasetConfig& cfg, const std::vector<std::size_t>& classes,
                                      std::size_t per_class, std::size_t confounds, std::uint64_t stream) {
  Renderer r(cfg, stream);
  std::vector<Sample> out;
  out.reserve(classes.size() * per_class);
  for (std::size_t i = 0; i < per_class; ++i)
    for (auto c : classes) out.push_back(r.draw(c, confounds ? r.uniform_index(confounds) : kNoConfound));
  return out;
}

}  // namespace

void DatasetConfig::validate() const {
  auto fail = [](const std::string& key, const std::string& why) {
    throw InvalidParameter("data." + key + ": " + why);
  };
  if (num_classes < 4 || num_classes % 2 != 0) fail("num_classes", "need an even count >= 4");
  if (num_classes > kShapes.size()) fail("num_classes", "at most " + std::to_string(kShapes.size()) + " shapes available");
  if (!(rho >= 0.0 && rho <= 1.0)) fail("rho", "must be in [0, 1]");
  if (image_size < 8) fail("image_size", "must be >= 8");
  if (channels == 0) fail("channels", "must be > 0");
  if (shots == 0) fail("shots", "must be > 0");
  if (test_per_class == 0) fail("test_per_class", "must be > 0");
  if (!(noise >= 0.0)) fail("noise", "must be >= 0");
  if (confound_size == 0 || confound_size > image_size) fail("confound_size", "must be in [1, image_size]");
}

std::vector<ClassEntry> make_class_table(std::size_t num_classes) {
  std::vector<ClassEntry> out;
  for (std::size_t c = 0; c < num_classes; ++c) {
    out.push_back({kShapeNames[c % kShapeNames.size()], {kTemplateToken, kFirstClassToken + c}});
  }
  return out;
}

std::vector<TokenSeq> B2NDataset::class_tokens(const std::vector<std::size_t>& ids) const {
  std::vector<TokenSeq> out;
  for (auto id : ids) out.push_back(classes.at(id).tokens);
  return out;
}

B2NDataset generate_b2n(const DatasetConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  B2NDataset ds;
  ds.config = cfg;
  ds.seed = seed;
  ds.classes = make_class_table(cfg.num_classes);
  for (std::size_t c = 0; c < cfg.num_classes; ++c) (c < cfg.num_classes / 2 ? ds.base : ds.novel).push_back(c);
  const std::size_t nconf = ds.num_confounds();

  Renderer train(cfg, stream_seed(seed, 1));
  for (std::size_t i = 0; i < cfg.shots; ++i)
    for (std::size_t b = 0; b < ds.base.size(); ++b) {
      const std::size_t conf = train.bernoulli(cfg.rho) ? b : train.uniform_index(nconf);
      ds.train.push_back(train.draw(ds.base[b], conf));
    }
  ds.test_base = draw_decorrelated(cfg, ds.base, cfg.test_per_class, nconf, stream_seed(seed, 2));
  ds.test_novel = draw_decorrelated(cfg, ds.novel, cfg.test_per_class, nconf, stream_seed(seed, 3));
  return ds;
}

std::vector<Sample> generate_pretrain_set(const DatasetConfig& cfg, std::size_t per_class, std::uint64_t seed) {
  cfg.validate();
  std::vector<std::size_t> all(cfg.num_classes);
  for (std::size_t c = 0; c < all.size(); ++c) all[c] = c;
  return draw_decorrelated(cfg, all, per_class, cfg.num_classes / 2, stream_seed(seed, 4));
}

void dump_dataset(const B2NDataset& ds, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  nlohmann::json manifest;
  manifest["format"] = "lobg-b2n-dataset";
  manifest["version"] = 1;
  manifest["seed"] = ds.seed;
  manifest["rho"] = ds.config.rho;
  manifest["image_shape"] = {ds.config.channels, ds.config.image_size, ds.config.image_size};
  manifest["dtype"] = "float64-le";
  manifest["base"] = ds.base;
  manifest["novel"] = ds.novel;
  nlohmann::json classes = nlohmann::json::array();
  for (const auto& c : ds.classes) classes.push_back({{"name", c.name}, {"tokens", c.tokens}});
  manifest["classes"] = classes;

  auto write_split = [&](const std::string& name, const std::vector<Sample>& samples) {
    nlohmann::json entries = nlohmann::json::array();
    for (std::size_t i = 0; i < samples.size(); ++i) {
      char file[64];
      std::snprintf(file, sizeof file, "%s_%05zu.f64", name.c_str(), i);
      std::ofstream out(dir / file, std::ios::binary);
      if (!out) throw InvalidInput("cannot write " + (dir / file).string());
      out.write(reinterpret_cast<const char*>(samples[i].image.pixels.data()),
                static_cast<std::streamsize>(samples[i].image.pixels.size() * sizeof(double)));
      entries.push_back({{"file", file}, {"label", samples[i].label}, {"confound", samples[i].confound}});
    }
    manifest["splits"][name] = entries;
  };
  write_split("train", ds.train);
  write_split("test_base", ds.test_base);
  write_split("test_novel", ds.test_novel);
  std::ofstream(dir / "manifest.json") << manifest.dump(2) << '\n';
}

}  // namespace lobg

#include <doctest.h>

#include <filesystem>
#include <fstream>

#include <boost/math/distributions/chi_squared.hpp>
#include <json.hpp>

#include "lobg/data.hpp"
#include "lobg/errors.hpp"

using namespace lobg;

namespace {

// Pearson chi-squared independence test of label vs confound.
double independence_p_value(const std::vector<Sample>& samples, const std::vector<std::size_t>& labels,
                            std::size_t confounds) {
  const std::size_t R = labels.size(), C = confounds;
  std::vector<double> table(R * C, 0.0), row(R, 0.0), col(C, 0.0);
  for (const auto& s : samples) {
    const auto r = static_cast<std::size_t>(std::find(labels.begin(), labels.end(), s.label) - labels.begin());
    table[r * C + s.confound] += 1;
    row[r] += 1;
    col[s.confound] += 1;
  }
  const double n = static_cast<double>(samples.size());
  double stat = 0;
  for (std::size_t r = 0; r < R; ++r)
    for (std::size_t c = 0; c < C; ++c) {
      const double e = row[r] * col[c] / n;
      stat += (table[r * C + c] - e) * (table[r * C + c] - e) / e;
    }
  boost::math::chi_squared dist(static_cast<double>((R - 1) * (C - 1)));
  return boost::math::cdf(boost::math::complement(dist, stat));
}

}  // namespace

TEST_CASE("split sizes and class table") {
  DatasetConfig c;
  auto ds = generate_b2n(c, 0);
  CHECK(ds.base == std::vector<std::size_t>{0, 1, 2, 3});
  CHECK(ds.novel == std::vector<std::size_t>{4, 5, 6, 7});
  CHECK(ds.train.size() == c.shots * 4);
  CHECK(ds.test_base.size() == c.test_per_class * 4);
  CHECK(ds.test_novel.size() == c.test_per_class * 4);
  for (const auto& s : ds.train) CHECK(s.label < 4);
  for (const auto& s : ds.test_novel) CHECK(s.label >= 4);
  CHECK(ds.classes.size() == 8);
  CHECK(ds.classes[3].tokens == TokenSeq{kTemplateToken, kFirstClassToken + 3});
}

TEST_CASE("generation is deterministic in the seed") {
  DatasetConfig c;
  c.test_per_class = 5;
  auto a = generate_b2n(c, 42), b = generate_b2n(c, 42), d = generate_b2n(c, 43);
  REQUIRE(a.train.size() == b.train.size());
  for (std::size_t i = 0; i < a.train.size(); ++i) {
    CHECK(a.train[i].image == b.train[i].image);
    CHECK(a.train[i].confound == b.train[i].confound);
  }
  for (std::size_t i = 0; i < a.test_novel.size(); ++i) CHECK(a.test_novel[i].image == b.test_novel[i].image);
  CHECK_FALSE(a.train[0].image == d.train[0].image);
}

TEST_CASE("confounds are independent of labels at rho = 0") {
  DatasetConfig c;
  c.rho = 0.0;
  c.shots = 250;
  c.test_per_class = 1;
  auto ds = generate_b2n(c, 0);
  REQUIRE(ds.train.size() == 1000);
  CHECK(independence_p_value(ds.train, ds.base, ds.num_confounds()) > 0.01);
}

TEST_CASE("confounds track labels at rho = 0.95, test splits stay decorrelated") {
  DatasetConfig c;
  c.shots = 250;
  c.test_per_class = 250;
  auto ds = generate_b2n(c, 1);
  std::size_t matched = 0;
  for (const auto& s : ds.train) matched += s.confound == s.label;
  // P(match) = rho + (1 - rho) / 4
  CHECK(static_cast<double>(matched) / 1000.0 == doctest::Approx(0.9625).epsilon(0.02));
  CHECK(independence_p_value(ds.train, ds.base, 4) < 1e-6);
  CHECK(independence_p_value(ds.test_base, ds.base, 4) > 0.01);
  CHECK(independence_p_value(ds.test_novel, ds.novel, 4) > 0.01);
}

TEST_CASE("dataset validation") {
  DatasetConfig c;
  c.rho = 1.5;
  CHECK_THROWS_AS(generate_b2n(c, 0), InvalidParameter);
  c = DatasetConfig{};
  c.num_classes = 7;
  CHECK_THROWS_AS(generate_b2n(c, 0), InvalidParameter);
  c.num_classes = 2;
  CHECK_THROWS_AS(generate_b2n(c, 0), InvalidParameter);
}

TEST_CASE("dump_dataset writes raw arrays and a manifest") {
  DatasetConfig c;
  c.shots = 1;
  c.test_per_class = 1;
  auto ds = generate_b2n(c, 3);
  const auto dir = std::filesystem::temp_directory_path() / "lobg_tests" / "dump";
  std::filesystem::remove_all(dir);
  dump_dataset(ds, dir);
  nlohmann::json m;
  std::ifstream(dir / "manifest.json") >> m;
  CHECK(m["seed"] == 3);
  std::size_t files = 0;
  for (const auto& e : std::filesystem::recursive_directory_iterator(dir))
    if (e.path().extension() == ".f64") {
      ++files;
      CHECK(std::filesystem::file_size(e.path()) == 3 * 32 * 32 * sizeof(double));
    }
  CHECK(files == ds.train.size() + ds.test_base.size() + ds.test_novel.size());
}

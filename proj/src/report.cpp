#include "lobg/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <tuple>

#include "lobg/errors.hpp"
#include "lobg/log.hpp"

namespace lobg::report {

namespace {

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

bool to_double(const std::string& s, double& out) {
  if (s.empty()) return false;
  char* end = nullptr;
  out = std::strtod(s.c_str(), &end);
  return end == s.c_str() + s.size();
}

bool to_flag(const std::string& s, bool& out) {
  if (s == "0" || s == "1") {
    out = s == "1";
    return true;
  }
  return false;
}

bool to_count(const std::string& s, std::uint64_t& out) {
  if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos) return false;
  out = std::stoull(s);
  return true;
}

struct Stats {
  double mean = 0, sd = 0;
};

Stats stats(const std::vector<double>& v) {
  Stats s;
  if (v.empty()) return s;
  for (double x : v) s.mean += x;
  s.mean /= static_cast<double>(v.size());
  if (v.size() > 1) {
    for (double x : v) s.sd += (x - s.mean) * (x - s.mean);
    s.sd = std::sqrt(s.sd / static_cast<double>(v.size() - 1));
  }
  return s;
}

double value_of(const bench::MetricsRecord& r, Variable v) {
  switch (v) {
    case Variable::kQ: return r.q;
    case Variable::kLambda: return r.lambda;
    default: return r.gamma;
  }
}

std::string fmt(double v, const char* f = "%.4f") {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      default: out += c;
    }
  }
  return out;
}

void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p);
  if (!out) throw InvalidInput("cannot write " + p.string());
  out << text;
}

}  // namespace

bool parse_row(const std::string& line, bench::MetricsRecord& r) {
  const auto c = split(line);
  if (c.size() != 13) return false;
  r = {};
  r.config_hash = c[0];
  std::uint64_t epochs = 0;
  bool ok = !c[0].empty() && to_count(c[1], r.seed) && to_double(c[2], r.q) && to_double(c[3], r.lambda) &&
            to_double(c[4], r.gamma) && to_flag(c[5], r.fif) && to_flag(c[6], r.stp) && to_flag(c[7], r.hld) &&
            to_double(c[8], r.base_acc) && to_double(c[9], r.novel_acc) && to_double(c[10], r.hm) &&
            to_count(c[11], epochs) && to_double(c[12], r.wall_ms);
  r.epochs = static_cast<std::size_t>(epochs);
  if (!ok) return false;
  // Failed runs are recorded with NaN accuracies; they carry no metrics.
  for (double a : {r.base_acc, r.novel_acc, r.hm})
    if (!(a >= 0.0 && a <= 1.0)) return false;
  return true;
}

CsvData read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot read " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != bench::kCsvHeader) {
    throw InvalidInput(path.string() + ": expected header '" + bench::kCsvHeader + "'");
  }
  CsvData out;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    bench::MetricsRecord r;
    if (parse_row(line, r)) {
      out.rows.push_back(std::move(r));
    } else {
      ++out.skipped;
      log_warning(path.string() + ":" + std::to_string(lineno) + ": skipping malformed row");
    }
  }
  return out;
}

CsvData read_csvs(const std::vector<std::filesystem::path>& paths) {
  if (paths.empty()) throw InvalidInput("report needs at least one CSV");
  CsvData all;
  for (const auto& p : paths) {
    auto d = read_csv(p);
    all.skipped += d.skipped;
    all.rows.insert(all.rows.end(), d.rows.begin(), d.rows.end());
  }
  return all;
}

const char* variable_name(Variable v) {
  switch (v) {
    case Variable::kQ: return "q";
    case Variable::kLambda: return "lambda";
    default: return "gamma";
  }
}

std::vector<SweepPoint> sweep(const std::vector<bench::MetricsRecord>& rows, Variable v) {
  std::map<double, std::vector<double>> groups;
  for (const auto& r : rows) groups[value_of(r, v)].push_back(r.hm);
  std::vector<SweepPoint> out;
  for (const auto& [x, hms] : groups) {
    const auto s = stats(hms);
    out.push_back({x, s.mean, s.sd, hms.size()});
  }
  return out;
}

std::vector<ComponentRow> component_table(const std::vector<bench::MetricsRecord>& rows) {
  // Ordered by number of enabled components, then stp, hld, fif.
  using Key = std::tuple<int, bool, bool, bool>;
  std::map<Key, std::vector<const bench::MetricsRecord*>> groups;
  for (const auto& r : rows) groups[{r.fif + r.stp + r.hld, !r.stp, !r.hld, !r.fif}].push_back(&r);
  std::vector<ComponentRow> out;
  for (const auto& [key, members] : groups) {
    ComponentRow row;
    row.stp = !std::get<1>(key);
    row.hld = !std::get<2>(key);
    row.fif = !std::get<3>(key);
    row.n = members.size();
    std::vector<double> b, n, h;
    for (const auto* r : members) {
      b.push_back(r->base_acc);
      n.push_back(r->novel_acc);
      h.push_back(r->hm);
    }
    std::tie(row.base_mean, row.base_std) = std::pair{stats(b).mean, stats(b).sd};
    std::tie(row.novel_mean, row.novel_std) = std::pair{stats(n).mean, stats(n).sd};
    std::tie(row.hm_mean, row.hm_std) = std::pair{stats(h).mean, stats(h).sd};
    out.push_back(row);
  }
  return out;
}

double hm_consistency_error(const std::vector<bench::MetricsRecord>& rows) {
  double worst = 0;
  for (const auto& r : rows) worst = std::max(worst, std::fabs(r.hm - bench::harmonic_mean(r.base_acc, r.novel_acc)));
  return worst;
}

std::string line_plot_svg(const std::string& title, const std::string& x_label, const std::vector<SweepPoint>& points) {
  constexpr double W = 480, H = 320, L = 60, R = 20, T = 40, B = 50;
  double x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  if (!points.empty()) {
    x0 = x1 = points.front().x;
    y0 = y1 = points.front().hm_mean;
    for (const auto& p : points) {
      x0 = std::min(x0, p.x);
      x1 = std::max(x1, p.x);
      y0 = std::min(y0, p.hm_mean - p.hm_std);
      y1 = std::max(y1, p.hm_mean + p.hm_std);
    }
  }
  // A single point or a flat line still needs a non-empty range.
  if (x1 - x0 < 1e-12) {
    x0 -= 1;
    x1 += 1;
  }
  if (y1 - y0 < 1e-12) {
    y0 -= 0.05;
    y1 += 0.05;
  }
  auto px = [&](double x) { return L + (x - x0) / (x1 - x0) * (W - L - R); };
  auto py = [&](double y) { return H - B - (y - y0) / (y1 - y0) * (H - T - B); };

  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s << "<text x=\"" << W / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" << xml_escape(title) << "</text>\n";
  s << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
  s << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double yv = y0 + (y1 - y0) * i / 4.0, xv = x0 + (x1 - x0) * i / 4.0;
    s << "<text x=\"" << L - 6 << "\" y=\"" << py(yv) + 4 << "\" text-anchor=\"end\">" << fmt(yv, "%.3f") << "</text>\n";
    s << "<text x=\"" << px(xv) << "\" y=\"" << H - B + 16 << "\" text-anchor=\"middle\">" << fmt(xv, "%g") << "</text>\n";
  }
  s << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 12 << "\" text-anchor=\"middle\">" << xml_escape(x_label) << "</text>\n";
  s << "<text x=\"16\" y=\"" << (T + H - B) / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 " << (T + H - B) / 2
    << ")\">HM</text>\n";
  if (points.size() > 1) {
    s << "<polyline fill=\"none\" stroke=\"steelblue\" stroke-width=\"2\" points=\"";
    for (const auto& p : points) s << px(p.x) << "," << py(p.hm_mean) << " ";
    s << "\"/>\n";
  }
  for (const auto& p : points) {
    if (p.hm_std > 0)
      s << "<line x1=\"" << px(p.x) << "\" y1=\"" << py(p.hm_mean - p.hm_std) << "\" x2=\"" << px(p.x) << "\" y2=\""
        << py(p.hm_mean + p.hm_std) << "\" stroke=\"steelblue\"/>\n";
    s << "<circle cx=\"" << px(p.x) << "\" cy=\"" << py(p.hm_mean) << "\" r=\"4\" fill=\"steelblue\"/>\n";
  }
  s << "</svg>\n";
  return s.str();
}

Written write_report(const CsvData& data, const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  Written w;
  std::vector<Variable> vars;
  for (auto v : {Variable::kQ, Variable::kLambda, Variable::kGamma})
    if (sweep(data.rows, v).size() > 1) vars.push_back(v);
  if (vars.empty()) vars.push_back(Variable::kQ);
  for (auto v : vars) {
    const std::string name = variable_name(v);
    const auto path = out_dir / ("hm_vs_" + name + ".svg");
    write_text(path, line_plot_svg("HM vs " + name, name, sweep(data.rows, v)));
    w.plots.push_back(path);
  }

  std::ostringstream table;
  table << "| fif | stp | hld | n | base | novel | hm |\n|---|---|---|---|---|---|---|\n";
  for (const auto& r : component_table(data.rows)) {
    table << "| " << (r.fif ? "on" : "off") << " | " << (r.stp ? "on" : "off") << " | " << (r.hld ? "on" : "off") << " | "
          << r.n << " | " << fmt(r.base_mean) << " ± " << fmt(r.base_std) << " | " << fmt(r.novel_mean) << " ± "
          << fmt(r.novel_std) << " | " << fmt(r.hm_mean) << " ± " << fmt(r.hm_std) << " |\n";
  }
  w.table = out_dir / "components.md";
  write_text(w.table, table.str());

  std::ostringstream sum;
  sum << "rows " << data.rows.size() << "\nskipped " << data.skipped << '\n';
  std::map<std::string, std::size_t> hashes;
  for (const auto& r : data.rows) ++hashes[r.config_hash];
  for (const auto& [h, n] : hashes) sum << "config " << h << " rows " << n << '\n';
  sum << "hm_consistency_max_error " << fmt(hm_consistency_error(data.rows), "%.3g") << '\n';
  if (!data.rows.empty()) {
    const auto best = std::max_element(data.rows.begin(), data.rows.end(),
                                       [](const auto& a, const auto& b) { return a.hm < b.hm; });
    sum << "best_hm " << fmt(best->hm) << " config " << best->config_hash << " seed " << best->seed << '\n';
  }
  for (const auto& p : w.plots) sum << "plot " << p.filename().string() << '\n';
  w.summary = out_dir / "summary.txt";
  write_text(w.summary, sum.str());
  return w;
}

}  // namespace lobg::report

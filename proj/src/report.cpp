#include "emoprobe/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include <json.hpp>

#include "emoprobe/error.hpp"

namespace emoprobe {

namespace {

std::string fmt(const char* pattern, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, pattern, v);
  return buf;
}

std::string cell_text(const Cell& c) {
  return std::visit(
      [](const auto& v) -> std::string {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, std::monostate>) {
          return "";
        } else if constexpr (std::is_same_v<T, std::string>) {
          return v;
        } else if constexpr (std::is_same_v<T, std::int64_t>) {
          return std::to_string(v);
        } else {
          return format_number(v);
        }
      },
      c);
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + "\"";
}

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char ch : s) {
    switch (ch) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += ch;
    }
  }
  return out;
}

constexpr const char* kPalette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                                    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

}  // namespace

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  std::string s = fmt("%.6f", v);
  if (s == "-0.000000") s = "0.000000";
  return s;
}

std::string to_csv(const Table& table) {
  std::string out;
  for (std::size_t i = 0; i < table.columns.size(); ++i) out += (i ? "," : "") + csv_field(table.columns[i]);
  out += '\n';
  for (const auto& row : table.rows) {
    for (std::size_t i = 0; i < row.size(); ++i) out += (i ? "," : "") + csv_field(cell_text(row[i]));
    out += '\n';
  }
  return out;
}

std::string to_json(const Table& table) {
  auto arr = nlohmann::ordered_json::array();
  for (const auto& row : table.rows) {
    nlohmann::ordered_json obj = nlohmann::ordered_json::object();
    for (std::size_t i = 0; i < table.columns.size(); ++i) {
      std::visit(
          [&](const auto& v) {
            using T = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<T, std::monostate>) {
              obj[table.columns[i]] = nullptr;
            } else if constexpr (std::is_same_v<T, double>) {
              if (std::isfinite(v)) {
                obj[table.columns[i]] = v;
              } else {
                obj[table.columns[i]] = nullptr;
              }
            } else {
              obj[table.columns[i]] = v;
            }
          },
          row[i]);
    }
    arr.push_back(std::move(obj));
  }
  return arr.dump(2) + "\n";
}

Table probe_layer_table(std::span<const ProbeSweepRow> rows) {
  Table t;
  t.columns = {"model_tag", "task", "layer", "val_ua", "test_ua"};
  for (Emotion e : kAllEmotions) t.columns.push_back("recall_" + std::string(to_string(e)));
  t.columns.push_back("epoch_of_best");
  for (const auto& r : rows) {
    std::vector<Cell> row = {r.model_tag, std::string(to_string(r.task)), std::int64_t{r.layer}, r.val_ua, r.test_ua};
    for (double v : r.recall) row.emplace_back(v);
    row.emplace_back(std::int64_t{r.epoch_of_best});
    t.rows.push_back(std::move(row));
  }
  return t;
}

Table probe_summary_table(std::span<const ProbeSweepRow> rows) {
  Table t;
  t.columns = {"model_tag", "task", "stat", "test_ua", "layer"};
  // Groups keep first-appearance order.
  std::vector<std::pair<std::string, Task>> order;
  std::map<std::pair<std::string, Task>, std::vector<const ProbeSweepRow*>> groups;
  for (const auto& r : rows) {
    const auto key = std::make_pair(r.model_tag, r.task);
    if (!groups.contains(key)) order.push_back(key);
    groups[key].push_back(&r);
  }
  for (const auto& key : order) {
    auto members = groups[key];
    std::stable_sort(members.begin(), members.end(),
                     [](const ProbeSweepRow* a, const ProbeSweepRow* b) { return a->layer < b->layer; });
    const ProbeSweepRow* best = members.front();
    const ProbeSweepRow* worst = members.front();
    double sum = 0.0;
    for (const auto* m : members) {
      if (m->test_ua > best->test_ua) best = m;
      if (m->test_ua < worst->test_ua) worst = m;
      sum += m->test_ua;
    }
    const std::string task(to_string(key.second));
    t.rows.push_back({key.first, task, std::string("Best"), best->test_ua, std::int64_t{best->layer}});
    t.rows.push_back({key.first, task, std::string("Worst"), worst->test_ua, std::int64_t{worst->layer}});
    t.rows.push_back({key.first, task, std::string("Mean"), sum / static_cast<double>(members.size()), std::monostate{}});
  }
  return t;
}

Table adaptation_table(std::span<const AdaptationRow> rows) {
  Table t;
  t.columns = {"model_tag", "approach", "direction", "seed", "stage1_ua", "stage2_ua", "scratch_ua", "error"};
  for (const auto& r : rows) {
    t.rows.push_back({r.model_tag, std::string(to_string(r.approach)), r.direction(),
                      static_cast<std::int64_t>(r.seed), r.stage1_ua, r.stage2_ua, r.scratch_ua, r.error});
  }
  return t;
}

Table fad_table(std::span<const FadRow> rows) {
  Table t;
  t.columns = {"model_tag", "layer", "emotion", "fad", "n_speech", "n_music", "error"};
  for (const auto& r : rows) {
    t.rows.push_back({r.model_tag, std::int64_t{r.layer}, r.emotion, r.fad, static_cast<std::int64_t>(r.n_speech),
                      static_cast<std::int64_t>(r.n_music), r.error});
  }
  return t;
}

std::string render_svg(const LineChart& chart) {
  constexpr double kWidth = 720, kHeight = 420;
  constexpr double kLeft = 70, kRight = 170, kTop = 40, kBottom = 60;
  const double plot_w = kWidth - kLeft - kRight;
  const double plot_h = kHeight - kTop - kBottom;

  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (const auto& s : chart.series) {
    if (s.y.size() != chart.x.size()) {
      throw DimensionMismatch("series '" + s.name + "' has " + std::to_string(s.y.size()) + " points for " +
                              std::to_string(chart.x.size()) + " x values");
    }
    for (double v : s.y) {
      if (!std::isfinite(v)) continue;
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  if (!std::isfinite(lo)) {
    lo = 0.0;
    hi = 1.0;
  }
  if (hi - lo < 1e-12) {
    const double pad = std::max(0.5, std::abs(hi) * 0.1);
    lo -= pad;
    hi += pad;
  } else {
    const double pad = 0.05 * (hi - lo);
    lo -= pad;
    hi += pad;
  }

  const std::size_t n = chart.x.size();
  auto px = [&](std::size_t i) { return n <= 1 ? kLeft + plot_w / 2 : kLeft + plot_w * static_cast<double>(i) / static_cast<double>(n - 1); };
  auto py = [&](double v) { return kTop + plot_h * (hi - v) / (hi - lo); };

  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
    << "\" viewBox=\"0 0 " << kWidth << ' ' << kHeight << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  o << "<rect x=\"0\" y=\"0\" width=\"" << kWidth << "\" height=\"" << kHeight << "\" fill=\"white\"/>\n";
  o << "<text x=\"" << kWidth / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << xml_escape(chart.title)
    << "</text>\n";
  o << "<line class=\"axis\" x1=\"" << kLeft << "\" y1=\"" << kTop + plot_h << "\" x2=\"" << kLeft + plot_w
    << "\" y2=\"" << kTop + plot_h << "\" stroke=\"black\"/>\n";
  o << "<line class=\"axis\" x1=\"" << kLeft << "\" y1=\"" << kTop << "\" x2=\"" << kLeft << "\" y2=\""
    << kTop + plot_h << "\" stroke=\"black\"/>\n";
  for (std::size_t i = 0; i < n; ++i) {
    o << "<text class=\"xtick\" x=\"" << fmt("%.2f", px(i)) << "\" y=\"" << kTop + plot_h + 18
      << "\" text-anchor=\"middle\">" << chart.x[i] << "</text>\n";
  }
  for (int k = 0; k <= 4; ++k) {
    const double v = lo + (hi - lo) * k / 4.0;
    o << "<text class=\"ytick\" x=\"" << kLeft - 6 << "\" y=\"" << fmt("%.2f", py(v) + 4)
      << "\" text-anchor=\"end\">" << fmt("%.3g", v) << "</text>\n";
    o << "<line x1=\"" << kLeft << "\" y1=\"" << fmt("%.2f", py(v)) << "\" x2=\"" << kLeft + plot_w << "\" y2=\""
      << fmt("%.2f", py(v)) << "\" stroke=\"#dddddd\"/>\n";
  }
  o << "<text x=\"" << kLeft + plot_w / 2 << "\" y=\"" << kHeight - 15 << "\" text-anchor=\"middle\">"
    << xml_escape(chart.x_label) << "</text>\n";
  o << "<text x=\"18\" y=\"" << kTop + plot_h / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 18 "
    << kTop + plot_h / 2 << ")\">" << xml_escape(chart.y_label) << "</text>\n";

  for (std::size_t s = 0; s < chart.series.size(); ++s) {
    const auto& series = chart.series[s];
    const char* color = kPalette[s % std::size(kPalette)];
    std::string points, values;
    for (std::size_t i = 0; i < n; ++i) {
      values += (i ? " " : "") + format_number(series.y[i]);
      if (!std::isfinite(series.y[i])) continue;
      points += (points.empty() ? "" : " ") + fmt("%.2f", px(i)) + "," + fmt("%.2f", py(series.y[i]));
    }
    o << "<polyline class=\"series\" data-series=\"" << xml_escape(series.name) << "\" data-y=\"" << values
      << "\" points=\"" << points << "\" fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    const double ly = kTop + 10 + 18.0 * static_cast<double>(s);
    o << "<line x1=\"" << kLeft + plot_w + 15 << "\" y1=\"" << ly << "\" x2=\"" << kLeft + plot_w + 35 << "\" y2=\""
      << ly << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    o << "<text x=\"" << kLeft + plot_w + 40 << "\" y=\"" << ly + 4 << "\">" << xml_escape(series.name)
      << "</text>\n";
  }
  o << "</svg>\n";
  return o.str();
}

LineChart probe_chart(std::span<const ProbeSweepRow> rows, Task task) {
  LineChart c;
  c.title = "Layerwise " + std::string(to_string(task)) + " test UA";
  c.x_label = "layer";
  c.y_label = "UA";
  int max_layer = 0;
  std::vector<std::string> tags;
  for (const auto& r : rows) {
    if (r.task != task) continue;
    max_layer = std::max(max_layer, r.layer);
    if (std::find(tags.begin(), tags.end(), r.model_tag) == tags.end()) tags.push_back(r.model_tag);
  }
  for (int l = 1; l <= max_layer; ++l) c.x.push_back(l);
  for (const auto& tag : tags) {
    Series s{tag, std::vector<double>(static_cast<std::size_t>(max_layer), std::numeric_limits<double>::quiet_NaN())};
    for (const auto& r : rows) {
      if (r.task == task && r.model_tag == tag) s.y[static_cast<std::size_t>(r.layer - 1)] = r.test_ua;
    }
    c.series.push_back(std::move(s));
  }
  return c;
}

LineChart fad_chart(std::span<const FadRow> rows, const std::string& model_tag) {
  LineChart c;
  c.title = "Layerwise speech-music FAD (" + model_tag + ")";
  c.x_label = "layer";
  c.y_label = "FAD";
  int max_layer = 0;
  for (const auto& r : rows) {
    if (r.model_tag == model_tag) max_layer = std::max(max_layer, r.layer);
  }
  for (int l = 1; l <= max_layer; ++l) c.x.push_back(l);
  std::vector<std::string> names;
  for (Emotion e : kAllEmotions) names.emplace_back(to_string(e));
  names.emplace_back("all");
  for (const auto& name : names) {
    Series s{name, std::vector<double>(static_cast<std::size_t>(max_layer), std::numeric_limits<double>::quiet_NaN())};
    for (const auto& r : rows) {
      if (r.model_tag == model_tag && r.emotion == name) s.y[static_cast<std::size_t>(r.layer - 1)] = r.fad;
    }
    c.series.push_back(std::move(s));
  }
  return c;
}

void write_text_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace emoprobe

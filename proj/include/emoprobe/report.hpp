#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "emoprobe/adaptation.hpp"
#include "emoprobe/fad.hpp"
#include "emoprobe/probe_sweep.hpp"

namespace emoprobe {

// monostate renders as an empty CSV field and JSON null.
using Cell = std::variant<std::monostate, std::string, std::int64_t, double>;

struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<Cell>> rows;
};

// Fixed six decimals; non-finite values print as "nan", "inf" or "-inf".
std::string format_number(double v);

std::string to_csv(const Table& table);
// Array of objects, keys in column order. Non-finite numbers become null.
std::string to_json(const Table& table);

// model_tag, task, layer, val_ua, test_ua, recall_<emotion> x6, epoch_of_best
Table probe_layer_table(std::span<const ProbeSweepRow> rows);
// model_tag, task, stat (Best | Worst | Mean), test_ua, layer (empty for Mean).
// Ties go to the lowest layer.
Table probe_summary_table(std::span<const ProbeSweepRow> rows);
// model_tag, approach, direction, seed, stage1_ua, stage2_ua, scratch_ua, error
Table adaptation_table(std::span<const AdaptationRow> rows);
// model_tag, layer, emotion, fad, n_speech, n_music, error
Table fad_table(std::span<const FadRow> rows);

struct Series {
  std::string name;
  std::vector<double> y;  // one value per x; NaN leaves a gap
};

struct LineChart {
  std::string title;
  std::string x_label;
  std::string y_label;
  std::vector<int> x;
  std::vector<Series> series;
};

// Static SVG. Each series is a <polyline> carrying data-series and data-y
// attributes so the plotted values can be read back.
std::string render_svg(const LineChart& chart);

// Test UA per layer, one line per model.
LineChart probe_chart(std::span<const ProbeSweepRow> rows, Task task);
// FAD per layer for one model, one line per emotion plus "all".
LineChart fad_chart(std::span<const FadRow> rows, const std::string& model_tag);

void write_text_file(const std::filesystem::path& path, const std::string& content);

}  // namespace emoprobe

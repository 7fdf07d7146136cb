#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "etchfdc/core.hpp"
#include "etchfdc/gasel.hpp"
#include "etchfdc/pretreat.hpp"

namespace etchfdc {

// All writers emit '\n' line endings and format_double numerics, so a rerun
// with identical inputs reproduces files byte for byte.

namespace detail {

inline std::string csv_context(const std::filesystem::path& file, std::size_t line_no) {
  return file.string() + ":" + std::to_string(line_no);
}

inline std::vector<std::string> split_csv(const std::string& line,
                                          const std::string& context) {
  if (line.find('"') != std::string::npos)
    throw data_error(context + ": quoted fields are not supported");
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string::npos) {
      fields.push_back(line.substr(start));
      return fields;
    }
    fields.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
}

inline std::vector<std::string> read_text_lines(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw data_error("cannot open " + file.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

inline void write_text(const std::filesystem::path& file, const std::string& content) {
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw data_error("cannot write " + file.string());
  out.write(content.data(), std::streamsize(content.size()));
  out.flush();
  if (!out) throw data_error("write failed for " + file.string());
}

inline double parse_csv_double(const std::string& field, const std::string& context,
                               const std::string& column) {
  try {
    return parse_double(field);
  } catch (const std::exception&) {
    throw data_error(context + ": bad number '" + field + "' in column " + column);
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Trace files: one CSV per wafer and suite, column time_s then one column
// per channel.
// ---------------------------------------------------------------------------

inline std::string trace_file_name(const std::string& wafer_id, SensorSuite suite) {
  return wafer_id + "_" + to_string(suite) + ".csv";
}

inline void write_trace_csv(const std::filesystem::path& dir, const WaferRecord& rec,
                            SensorSuite suite) {
  std::vector<const SensorTrace*> traces;
  for (const auto& t : rec.traces)
    if (t.suite == suite) traces.push_back(&t);
  if (traces.empty())
    throw data_error("wafer " + rec.wafer_id + " has no " +
                     std::string(to_string(suite)) + " traces");
  const std::size_t n = traces.front()->samples.size();
  for (const auto* t : traces)
    if (t->samples.size() != n)
      throw data_error("wafer " + rec.wafer_id + " channel " + t->channel +
                       " sample count differs from " + traces.front()->channel);

  std::string out = "time_s";
  for (const auto* t : traces) out += "," + t->channel;
  out += '\n';
  for (std::size_t i = 0; i < n; ++i) {
    out += format_double(traces.front()->samples[i].time);
    for (const auto* t : traces) out += "," + format_double(t->samples[i].value);
    out += '\n';
  }
  detail::write_text(dir / trace_file_name(rec.wafer_id, suite), out);
}

inline std::vector<SensorTrace> read_trace_csv(const std::filesystem::path& file,
                                               const std::string& wafer_id,
                                               SensorSuite suite) {
  const auto lines = detail::read_text_lines(file);
  if (lines.empty()) throw data_error(file.string() + ": empty trace file");
  const auto header = detail::split_csv(lines[0], detail::csv_context(file, 1));
  if (header.size() < 2 || header[0] != "time_s")
    throw data_error(detail::csv_context(file, 1) +
                     ": expected header time_s,<channels>");

  std::vector<SensorTrace> traces(header.size() - 1);
  for (std::size_t c = 1; c < header.size(); ++c) {
    traces[c - 1].wafer_id = wafer_id;
    traces[c - 1].suite = suite;
    traces[c - 1].channel = header[c];
  }
  for (std::size_t li = 1; li < lines.size(); ++li) {
    if (lines[li].empty() && li + 1 == lines.size()) break;
    const std::string context = detail::csv_context(file, li + 1);
    const auto fields = detail::split_csv(lines[li], context);
    if (fields.size() != header.size())
      throw data_error(context + ": expected " + std::to_string(header.size()) +
                       " fields, got " + std::to_string(fields.size()));
    const double t = detail::parse_csv_double(fields[0], context, "time_s");
    for (std::size_t c = 1; c < fields.size(); ++c)
      traces[c - 1].samples.push_back(
          {t, detail::parse_csv_double(fields[c], context, header[c])});
  }
  if (traces.front().samples.empty())
    throw data_error(file.string() + ": trace file has no samples");
  return traces;
}

// ---------------------------------------------------------------------------
// Wafer manifest: id, lot, split, the seven nominal and actual recipe
// targets, and the 64 per-die wafer-state values.
// ---------------------------------------------------------------------------

namespace detail {

inline std::string die_tag(int die) {
  return (die < 10 ? "die0" : "die") + std::to_string(die);
}

}  // namespace detail

inline std::vector<std::string> manifest_columns() {
  std::vector<std::string> cols = {"wafer_id", "lot_id", "split"};
  for (const char* prefix : {"nominal_", "actual_"})
    for (RecipeTarget t : kRecipeTargets) cols.push_back(prefix + std::string(to_string(t)));
  for (int die = 1; die <= kDiesPerWafer; ++die) cols.push_back("lwr_" + detail::die_tag(die));
  for (int die = 1; die <= kDiesPerWafer; ++die)
    cols.push_back("oxide_" + detail::die_tag(die));
  return cols;
}

inline void write_manifest_csv(const std::filesystem::path& file,
                               const std::vector<WaferRecord>& wafers) {
  const auto cols = manifest_columns();
  std::string out;
  for (std::size_t i = 0; i < cols.size(); ++i)
    out += (i ? "," : "") + cols[i];
  out += '\n';
  for (const auto& w : wafers) {
    out += w.wafer_id + "," + w.lot_id + "," + to_string(w.split);
    for (const Recipe* r : {&w.nominal_recipe, &w.actual_recipe})
      for (double v : derive_recipe_targets(*r)) out += "," + format_double(v);
    if (w.wafer_state) {
      if (w.wafer_state->lwr_per_die.size() != std::size_t(kDiesPerWafer) ||
          w.wafer_state->oxide_loss_per_die.size() != std::size_t(kDiesPerWafer))
        throw data_error("wafer " + w.wafer_id + " state is not 32 dies");
      for (double v : w.wafer_state->lwr_per_die) out += "," + format_double(v);
      for (double v : w.wafer_state->oxide_loss_per_die) out += "," + format_double(v);
    } else {
      for (int i = 0; i < 2 * kDiesPerWafer; ++i) out += ",";
    }
    out += '\n';
  }
  detail::write_text(file, out);
}

/// Rows come back as records with empty trace lists; read_dataset fills them.
inline std::vector<WaferRecord> read_manifest_csv(const std::filesystem::path& file) {
  const auto expected = manifest_columns();
  const auto lines = detail::read_text_lines(file);
  if (lines.empty()) throw data_error(file.string() + ": empty manifest");
  const auto header = detail::split_csv(lines[0], detail::csv_context(file, 1));
  if (header != expected)
    throw data_error(detail::csv_context(file, 1) + ": unexpected manifest header");

  std::vector<WaferRecord> out;
  for (std::size_t li = 1; li < lines.size(); ++li) {
    if (lines[li].empty() && li + 1 == lines.size()) break;
    const std::string context = detail::csv_context(file, li + 1);
    const auto f = detail::split_csv(lines[li], context);
    if (f.size() != expected.size())
      throw data_error(context + ": expected " + std::to_string(expected.size()) +
                       " fields, got " + std::to_string(f.size()));
    WaferRecord w;
    w.wafer_id = f[0];
    w.lot_id = f[1];
    w.split = parse_split(f[2]);
    const auto recipe_at = [&](std::size_t base) {
      return make_recipe(detail::parse_csv_double(f[base + 0], context, expected[base + 0]),
                         detail::parse_csv_double(f[base + 1], context, expected[base + 1]),
                         detail::parse_csv_double(f[base + 2], context, expected[base + 2]),
                         detail::parse_csv_double(f[base + 3], context, expected[base + 3]),
                         detail::parse_csv_double(f[base + 4], context, expected[base + 4]));
    };
    w.nominal_recipe = recipe_at(3);
    w.actual_recipe = recipe_at(10);
    const std::size_t state_base = 17;
    bool any_state = false, all_state = true;
    for (std::size_t i = 0; i < std::size_t(2 * kDiesPerWafer); ++i) {
      if (f[state_base + i].empty())
        all_state = false;
      else
        any_state = true;
    }
    if (any_state && !all_state)
      throw data_error(context + ": wafer state is partially filled");
    if (all_state) {
      WaferState ws;
      for (int i = 0; i < kDiesPerWafer; ++i)
        ws.lwr_per_die.push_back(detail::parse_csv_double(
            f[state_base + std::size_t(i)], context, expected[state_base + std::size_t(i)]));
      for (int i = 0; i < kDiesPerWafer; ++i)
        ws.oxide_loss_per_die.push_back(detail::parse_csv_double(
            f[state_base + std::size_t(kDiesPerWafer + i)], context,
            expected[state_base + std::size_t(kDiesPerWafer + i)]));
      w.wafer_state = std::move(ws);
    }
    out.push_back(std::move(w));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Dataset directory: manifest.csv plus one trace file per wafer and suite.
// ---------------------------------------------------------------------------

inline void write_dataset(const std::filesystem::path& dir,
                          const std::vector<WaferRecord>& wafers) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw data_error("cannot create directory " + dir.string());
  write_manifest_csv(dir / "manifest.csv", wafers);
  for (const auto& w : wafers)
    for (SensorSuite s : kSensorSuites) write_trace_csv(dir, w, s);
}

inline std::vector<WaferRecord> read_dataset(const std::filesystem::path& dir) {
  const auto manifest = dir / "manifest.csv";
  if (!std::filesystem::exists(manifest))
    throw data_error("dataset missing: no manifest at " + manifest.string());
  std::vector<WaferRecord> wafers = read_manifest_csv(manifest);
  for (auto& w : wafers)
    for (SensorSuite s : kSensorSuites) {
      const auto file = dir / trace_file_name(w.wafer_id, s);
      if (!std::filesystem::exists(file))
        throw data_error("wafer " + w.wafer_id + " is missing its " +
                         std::string(to_string(s)) + " trace file " + file.string());
      auto traces = read_trace_csv(file, w.wafer_id, s);
      for (auto& t : traces) w.traces.push_back(std::move(t));
    }
  return wafers;
}

// ---------------------------------------------------------------------------
// Feature matrices
// ---------------------------------------------------------------------------

inline std::string feature_file_name(SensorSuite suite, EtchRegion region) {
  return std::string("features_") + to_string(suite) + "_" + to_string(region) + ".csv";
}

inline void write_feature_csv(const std::filesystem::path& file, const FeatureMatrix& m) {
  if (m.values.rows() != Eigen::Index(m.wafer_ids.size()) ||
      m.values.cols() != Eigen::Index(m.column_names.size()))
    throw data_error("feature matrix shape does not match its labels");
  std::string out = "wafer_id";
  for (const auto& c : m.column_names) out += "," + c;
  out += '\n';
  for (Eigen::Index r = 0; r < m.values.rows(); ++r) {
    out += m.wafer_ids[std::size_t(r)];
    for (Eigen::Index c = 0; c < m.values.cols(); ++c)
      out += "," + format_double(m.values(r, c));
    out += '\n';
  }
  detail::write_text(file, out);
}

inline FeatureMatrix read_feature_csv(const std::filesystem::path& file) {
  const auto lines = detail::read_text_lines(file);
  if (lines.empty()) throw data_error(file.string() + ": empty feature matrix");
  const auto header = detail::split_csv(lines[0], detail::csv_context(file, 1));
  if (header.size() < 2 || header[0] != "wafer_id")
    throw data_error(detail::csv_context(file, 1) +
                     ": expected header wafer_id,<columns>");

  FeatureMatrix m;
  m.column_names.assign(header.begin() + 1, header.end());
  std::vector<std::vector<double>> rows;
  for (std::size_t li = 1; li < lines.size(); ++li) {
    if (lines[li].empty() && li + 1 == lines.size()) break;
    const std::string context = detail::csv_context(file, li + 1);
    const auto f = detail::split_csv(lines[li], context);
    if (f.size() != header.size())
      throw data_error(context + ": expected " + std::to_string(header.size()) +
                       " fields, got " + std::to_string(f.size()));
    m.wafer_ids.push_back(f[0]);
    std::vector<double> row;
    for (std::size_t c = 1; c < f.size(); ++c)
      row.push_back(detail::parse_csv_double(f[c], context, header[c]));
    rows.push_back(std::move(row));
  }
  m.values.resize(Eigen::Index(rows.size()), Eigen::Index(m.column_names.size()));
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < rows[r].size(); ++c)
      m.values(Eigen::Index(r), Eigen::Index(c)) = rows[r][c];
  return m;
}

// ---------------------------------------------------------------------------
// Column lists and GA history
// ---------------------------------------------------------------------------

inline void write_column_list(const std::filesystem::path& file,
                              const std::vector<std::string>& columns) {
  std::string out;
  for (const auto& c : columns) out += c + '\n';
  detail::write_text(file, out);
}

inline std::vector<std::string> read_column_list(const std::filesystem::path& file) {
  std::vector<std::string> out;
  for (auto& line : detail::read_text_lines(file))
    if (!line.empty()) out.push_back(line);
  return out;
}

inline void write_ga_history_csv(const std::filesystem::path& file,
                                 const std::vector<GaHistoryRow>& history) {
  std::string out = "generation,best,mean,best_ever,best_ever_n_vars\n";
  for (const auto& row : history)
    out += std::to_string(row.generation) + "," + format_double(row.best_fitness) + "," +
           format_double(row.mean_fitness) + "," + format_double(row.best_ever_fitness) +
           "," + std::to_string(row.best_ever_n_vars) + '\n';
  detail::write_text(file, out);
}

}  // namespace etchfdc

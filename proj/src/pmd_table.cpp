#include <fstream>

#include <json.hpp>

#include "dscpmd/descriptors.hpp"
#include "dscpmd/error.hpp"
#include "internal_util.hpp"

namespace dscpmd {

void save_pmd_csv(const PMDTable& table, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw io_error("cannot write '" + path + "'");
  out << "subject,class";
  for (const auto& f : table.features) out << ',' << f.name;
  out << '\n';
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    out << table.subjects[r] << ',' << table.classes[r];
    for (const auto& v : table.rows[r]) {
      out << ',';
      if (v) out << detail::fmt_double(*v);
    }
    out << '\n';
  }
  if (!out) throw io_error("failed writing '" + path + "'");
}

PMDTable load_pmd_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) {
    throw format_error("'" + path + "' is empty");
  }
  if (!line.empty() && line.back() == '\r') line.pop_back();
  auto header = detail::split_csv_line(line);
  if (header.size() < 3 || header[0] != "subject" || header[1] != "class") {
    throw format_error("'" + path +
                       "': header must start with subject,class followed by "
                       "feature columns");
  }
  PMDTable table;
  for (std::size_t c = 2; c < header.size(); ++c) {
    const ParsedFeatureName parsed = parse_feature_name(header[c]);
    FeatureInfo f;
    f.name = header[c];
    f.map = parsed.map;
    f.stat = parsed.stat;
    f.asym = parsed.asym;
    f.region_id = 0;  // resolved against a region table when needed
    table.features.push_back(std::move(f));
  }
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto fields = detail::split_csv_line(line);
    if (fields.size() != header.size()) {
      throw format_error("'" + path + "' line " + std::to_string(lineno) +
                         ": expected " + std::to_string(header.size()) +
                         " fields, got " + std::to_string(fields.size()));
    }
    table.subjects.push_back(fields[0]);
    table.classes.push_back(fields[1]);
    std::vector<std::optional<double>> row;
    row.reserve(fields.size() - 2);
    for (std::size_t c = 2; c < fields.size(); ++c) {
      if (fields[c].empty()) {
        row.push_back(std::nullopt);
        continue;
      }
      bool ok = false;
      const double v = detail::parse_double(fields[c], &ok);
      if (!ok) {
        throw format_error("'" + path + "' line " + std::to_string(lineno) +
                           ": value '" + fields[c] + "' in column " +
                           header[c] + " is not a number");
      }
      row.push_back(v);
    }
    table.rows.push_back(std::move(row));
  }
  return table;
}

void save_pmd_json(const PMDTable& table, const std::string& path) {
  nlohmann::json j;
  nlohmann::json features = nlohmann::json::array();
  for (const auto& f : table.features) features.push_back(f.name);
  j["features"] = features;
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    nlohmann::json row;
    row["subject"] = table.subjects[r];
    row["class"] = table.classes[r];
    nlohmann::json vals = nlohmann::json::array();
    for (const auto& v : table.rows[r]) {
      if (v) {
        vals.push_back(*v);
      } else {
        vals.push_back(nullptr);
      }
    }
    row["values"] = vals;
    rows.push_back(row);
  }
  j["subjects"] = rows;
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw io_error("cannot write '" + path + "'");
  out << j.dump(2) << "\n";
}

}  // namespace dscpmd

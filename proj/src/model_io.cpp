#include "assoc/model_io.hpp"

#include <json.hpp>

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace assoc {

namespace {

using ordered_json = nlohmann::ordered_json;

constexpr int kFormatVersion = 1;

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, std::string_view text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

double parse_double(std::string_view token, std::size_t line_no) {
  double v = 0.0;
  const char* first = token.data();
  const char* last = token.data() + token.size();
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last) {
    throw std::runtime_error("malformed number '" + std::string(token) + "' on line " +
                             std::to_string(line_no));
  }
  return v;
}

std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(',', start);
    if (pos == std::string_view::npos) {
      out.emplace_back(line.substr(start));
      break;
    }
    out.emplace_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc()) throw std::logic_error("format_double failed");
  return std::string(buf, ptr);
}

std::string serialize_model(const MixtureModel& model) {
  ordered_json doc;
  doc["format_version"] = kFormatVersion;
  doc["dim"] = model.dim();
  doc["names"] = model.names();
  doc["bandwidth_scale"] = model.bandwidth_scale();
  doc["update_count"] = model.update_count();
  ordered_json kernels = ordered_json::array();
  for (const Kernel& k : model.kernels()) {
    ordered_json jk;
    jk["w"] = k.weight;
    jk["center"] = k.center;
    jk["bandwidth"] = k.bandwidth;
    jk["hits"] = k.hit_count;
    kernels.push_back(std::move(jk));
  }
  doc["kernels"] = std::move(kernels);
  return doc.dump(2) + "\n";
}

MixtureModel deserialize_model(std::string_view text, MixtureOptions options) {
  ordered_json doc;
  try {
    doc = ordered_json::parse(text);
  } catch (const ordered_json::parse_error& e) {
    throw std::runtime_error(std::string("model document is not valid JSON: ") + e.what());
  }
  try {
    if (doc.at("format_version").get<int>() != kFormatVersion) {
      throw std::runtime_error("unsupported model format version");
    }
    const auto dim = doc.at("dim").get<std::size_t>();
    auto names = doc.at("names").get<std::vector<std::string>>();
    if (names.size() != dim) throw std::runtime_error("names/dim mismatch");
    const auto scale = doc.at("bandwidth_scale").get<double>();
    const auto update_count = doc.at("update_count").get<std::uint64_t>();

    std::vector<Kernel> kernels;
    for (const auto& jk : doc.at("kernels")) {
      Kernel k;
      k.weight = jk.at("w").get<double>();
      k.center = jk.at("center").get<Vec>();
      k.bandwidth = jk.at("bandwidth").get<Vec>();
      k.hit_count = jk.at("hits").get<std::uint64_t>();
      kernels.push_back(std::move(k));
    }
    return MixtureModel::from_kernels(std::move(names), std::move(kernels), scale, update_count,
                                      options);
  } catch (const ordered_json::exception& e) {
    throw std::runtime_error(std::string("malformed model document: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw std::runtime_error(std::string("model document violates invariants: ") + e.what());
  }
}

void save_model(const std::filesystem::path& path, const MixtureModel& model) {
  write_file(path, serialize_model(model));
}

MixtureModel load_model(const std::filesystem::path& path, MixtureOptions options) {
  return deserialize_model(read_file(path), options);
}

CsvTable read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  CsvTable table;
  std::string line;
  std::size_t line_no = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    if (!header_seen) {
      table.names = split_csv_line(line);
      header_seen = true;
      continue;
    }
    const auto tokens = split_csv_line(line);
    if (tokens.size() != table.names.size()) {
      throw std::runtime_error("wrong column count on line " + std::to_string(line_no) + " of " +
                               path.string());
    }
    Vec row;
    row.reserve(tokens.size());
    for (const auto& t : tokens) row.push_back(parse_double(t, line_no));
    table.rows.push_back(std::move(row));
  }
  if (!header_seen) throw std::runtime_error("no header row in " + path.string());
  return table;
}

void write_csv(const std::filesystem::path& path, const std::vector<std::string>& comments,
               const std::vector<std::string>& names, const std::vector<Vec>& rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (const auto& c : comments) out << "# " << c << "\n";
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (i) out << ',';
    out << names[i];
  }
  out << "\n";
  for (const Vec& row : rows) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) out << ',';
      out << format_double(row[i]);
    }
    out << "\n";
  }
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

std::vector<DriveSample> read_samples_csv(const std::filesystem::path& path) {
  const CsvTable table = read_csv(path);
  if (table.names != kSampleNames) {
    throw std::runtime_error("sample CSV header must be v_prev,v,p,b in " + path.string());
  }
  std::vector<DriveSample> samples;
  samples.reserve(table.rows.size());
  for (const Vec& r : table.rows) samples.push_back({r[0], r[1], r[2], r[3]});
  return samples;
}

void write_samples_csv(const std::filesystem::path& path, const std::vector<std::string>& comments,
                       const std::vector<DriveSample>& samples) {
  std::vector<Vec> rows;
  rows.reserve(samples.size());
  for (const DriveSample& s : samples) rows.push_back({s[0], s[1], s[2], s[3]});
  write_csv(path, comments, kSampleNames, rows);
}

TargetProfile read_profile_csv(const std::filesystem::path& path) {
  const CsvTable table = read_csv(path);
  if (table.names != std::vector<std::string>{"time_s", "target_kmh"}) {
    throw std::runtime_error("profile CSV header must be time_s,target_kmh in " + path.string());
  }
  TargetProfile profile;
  for (const Vec& r : table.rows) profile.points.push_back({r[0], r[1]});
  profile.validate();
  return profile;
}

void write_profile_csv(const std::filesystem::path& path, const TargetProfile& profile) {
  std::vector<Vec> rows;
  rows.reserve(profile.points.size());
  for (const ProfilePoint& p : profile.points) rows.push_back({p.time_s, p.target_kmh});
  write_csv(path, {}, {"time_s", "target_kmh"}, rows);
}

void write_trace_csv(const std::filesystem::path& path, const std::vector<std::string>& comments,
                     const ControlTrace& trace) {
  std::vector<Vec> rows;
  rows.reserve(trace.size());
  for (const TraceRow& r : trace) {
    rows.push_back({r.time_s, r.target_kmh, r.actual_kmh, r.p, r.b, r.plausibility,
                    r.learned ? 1.0 : 0.0});
  }
  write_csv(path, comments, {"time_s", "target_kmh", "actual_kmh", "p", "b", "plausibility",
                             "learned"},
            rows);
}

}  // namespace assoc

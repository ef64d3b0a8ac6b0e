#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "assoc/control.hpp"
#include "assoc/mixture.hpp"
#include "assoc/powertrain.hpp"

namespace assoc {

/// Shortest decimal representation that parses back to the same double.
std::string format_double(double v);

/// Versioned JSON model document. Round trips are value-exact; a second
/// serialize of a deserialized document is byte-identical.
std::string serialize_model(const MixtureModel& model);
MixtureModel deserialize_model(std::string_view text, MixtureOptions options = {});

void save_model(const std::filesystem::path& path, const MixtureModel& model);
MixtureModel load_model(const std::filesystem::path& path, MixtureOptions options = {});

/// CSV with one header row of column names; comment lines start with '#'
/// and are skipped on read. Values use round-trip decimal formatting.
struct CsvTable {
  std::vector<std::string> names;
  std::vector<Vec> rows;
};

CsvTable read_csv(const std::filesystem::path& path);
void write_csv(const std::filesystem::path& path, const std::vector<std::string>& comments,
               const std::vector<std::string>& names, const std::vector<Vec>& rows);

/// (v_prev, v, p, b) sample stream, header exactly "v_prev,v,p,b".
std::vector<DriveSample> read_samples_csv(const std::filesystem::path& path);
void write_samples_csv(const std::filesystem::path& path, const std::vector<std::string>& comments,
                       const std::vector<DriveSample>& samples);

/// Target profile, header exactly "time_s,target_kmh".
TargetProfile read_profile_csv(const std::filesystem::path& path);
void write_profile_csv(const std::filesystem::path& path, const TargetProfile& profile);

/// Control trace, header "time_s,target_kmh,actual_kmh,p,b,plausibility,learned".
void write_trace_csv(const std::filesystem::path& path, const std::vector<std::string>& comments,
                     const ControlTrace& trace);

}  // namespace assoc

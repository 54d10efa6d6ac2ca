#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <boost/property_tree/ptree.hpp>

#include "ks2d/experiments.hpp"

namespace ks2d::cli {

/// Flat-section key/value configuration:
///
///   [domain]
///   L1 = 21
///   # comment
///
/// Keys are addressed as "section.key". Overrides ("section.key=value") are
/// applied on top of the file. Unknown keys are rejected.
class RunConfig {
 public:
  static RunConfig load(const std::optional<std::filesystem::path>& file, const std::vector<std::string>& overrides);
  static RunConfig parse(const std::string& text, const std::vector<std::string>& overrides,
                         const std::string& source = "<config>");

  bool has(const std::string& key) const;
  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  long get_int(const std::string& key, long fallback) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<double> get_list(const std::string& key, const std::vector<double>& fallback) const;
  std::vector<std::string> get_words(const std::string& key, const std::vector<std::string>& fallback) const;

  /// The config file exactly as read, and the override flags.
  const std::string& verbatim() const { return text_; }
  const std::vector<std::string>& overrides() const { return overrides_; }

 private:
  std::optional<std::string> raw(const std::string& key) const;
  [[noreturn]] void bad_value(const std::string& key, const std::string& value, const char* expected) const;
  int line_of(const std::string& key) const;

  boost::property_tree::ptree tree_;
  std::string text_;
  std::string source_;
  std::vector<std::string> overrides_;
};

/// Every key the tool understands.
const std::vector<std::string>& known_keys();

DomainSpec domain_from(const RunConfig& c);
PhysicsParams physics_from(const RunConfig& c);
IntegratorConfig integrator_from(const RunConfig& c);
ActuatorSet actuators_from(const RunConfig& c, const DomainSpec& domain);
SpectralField initial_from(const RunConfig& c, const DomainSpec& domain);
TargetState target_from(const RunConfig& c, const DomainSpec& domain);
SimulationConfig simulation_from(const RunConfig& c);

std::uint64_t master_seed(const RunConfig& c);

/// Writes config.ini (verbatim), overrides.txt and VERSION into dir.
void echo_provenance(const std::filesystem::path& dir, const RunConfig& c, const std::string& version);

}  // namespace ks2d::cli

#include "ilam/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>

#include "ilam/errors.hpp"

namespace ilam {

namespace {

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

template <typename T>
T parse_number(const std::string& value, const std::string& key, size_t lineno) {
  T out{};
  const char* first = value.data();
  const char* last = value.data() + value.size();
  auto [ptr, ec] = std::from_chars(first, last, out);
  if (ec != std::errc{} || ptr != last) {
    throw ConfigError("bad value for '" + key + "' at line " + std::to_string(lineno) + ": " +
                      value);
  }
  return out;
}

bool parse_bool(const std::string& value, const std::string& key, size_t lineno) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw ConfigError("bad value for '" + key + "' at line " + std::to_string(lineno) + ": " +
                    value);
}

}  // namespace

void Config::validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw ConfigError(std::string("config: ") + what);
  };
  require(intensity_cap > 0, "intensity_cap must be positive");
  require(fast_threshold > 0, "fast_threshold must be positive");
  require(feature_cap > 0, "feature_cap must be positive");
  require(max_hamming > 0 && max_hamming <= 256, "max_hamming must be in 1..256");
  require(match_ratio > 0, "match_ratio must be positive");
  require(min_matches > 0, "min_matches must be positive");
  require(feature_cap >= min_matches, "feature_cap must be >= min_matches");
  require(plane_per_sector > 0, "plane_per_sector must be positive");
  require(ground_voxel > 0, "ground_voxel must be positive");
  require(ground_ransac_iters > 0, "ground_ransac_iters must be positive");
  require(ba_window > 0, "ba_window must be positive");
  require(huber_delta > 0, "huber_delta must be positive");
  require(local_map_radius > 0, "local_map_radius must be positive");
  require(kf_dist > 0, "kf_dist must be positive");
  require(kf_angle > 0, "kf_angle must be positive");
  require(kf_min_matches > 0, "kf_min_matches must be positive");
  require(loop_gap > 0, "loop_gap must be positive");
  require(loop_sim_threshold > 0, "loop_sim_threshold must be positive");
  require(loop_min_inliers > 0, "loop_min_inliers must be positive");
  require(loop_max_residual > 0, "loop_max_residual must be positive");
  require(vocab_branching > 1, "vocab_branching must be > 1");
  require(vocab_depth > 0, "vocab_depth must be positive");
}

Config load_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open config file: " + path.string());

  Config cfg;
  using Setter = std::function<void(Config&, const std::string&, size_t)>;
  auto num = [](auto Config::* field) {
    return Setter([field](Config& c, const std::string& v, size_t line) {
      c.*field = parse_number<std::remove_reference_t<decltype(c.*field)>>(
          v, "", line);  // key name re-reported by caller
    });
  };
  // from_chars(double) needs the exact key for error messages, so wrap
  // the generic setters with the key below instead.
  const std::map<std::string, Setter> setters = {
      {"intensity_cap", num(&Config::intensity_cap)},
      {"row_gain_equalize",
       [](Config& c, const std::string& v, size_t l) { c.row_gain_equalize = parse_bool(v, "row_gain_equalize", l); }},
      {"fast_threshold", num(&Config::fast_threshold)},
      {"feature_cap", num(&Config::feature_cap)},
      {"max_hamming", num(&Config::max_hamming)},
      {"match_ratio", num(&Config::match_ratio)},
      {"min_matches", num(&Config::min_matches)},
      {"plane_per_sector", num(&Config::plane_per_sector)},
      {"ground_voxel", num(&Config::ground_voxel)},
      {"height_prior", num(&Config::height_prior)},
      {"ground_ransac_iters", num(&Config::ground_ransac_iters)},
      {"ransac_seed", num(&Config::ransac_seed)},
      {"ba_window", num(&Config::ba_window)},
      {"huber_delta", num(&Config::huber_delta)},
      {"local_map_radius", num(&Config::local_map_radius)},
      {"kf_dist", num(&Config::kf_dist)},
      {"kf_angle", num(&Config::kf_angle)},
      {"kf_min_matches", num(&Config::kf_min_matches)},
      {"loop_gap", num(&Config::loop_gap)},
      {"loop_sim_threshold", num(&Config::loop_sim_threshold)},
      {"loop_min_inliers", num(&Config::loop_min_inliers)},
      {"loop_max_residual", num(&Config::loop_max_residual)},
      {"vocab_branching", num(&Config::vocab_branching)},
      {"vocab_depth", num(&Config::vocab_depth)},
      {"vocab_path",
       [](Config& c, const std::string& v, size_t) { c.vocab_path = v; }},
      {"plane_only",
       [](Config& c, const std::string& v, size_t l) { c.plane_only = parse_bool(v, "plane_only", l); }},
  };

  std::string line;
  size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("missing '=' at line " + std::to_string(lineno) + ": " + line);
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const auto it = setters.find(key);
    if (it == setters.end()) {
      throw ConfigError("unknown key '" + key + "' at line " + std::to_string(lineno));
    }
    try {
      it->second(cfg, value, lineno);
    } catch (const ConfigError&) {
      throw ConfigError("bad value for '" + key + "' at line " + std::to_string(lineno) + ": " +
                        value);
    }
  }
  cfg.validate();
  return cfg;
}

}  // namespace ilam

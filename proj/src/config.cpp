#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <unordered_map>

#include "crsense/errors.hpp"
#include "crsense/experiments.hpp"

namespace crsense {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

template <typename T>
T parse_number(std::string_view key, std::string_view value, int line) {
  T out{};
  const auto* end = value.data() + value.size();
  const auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc{} || ptr != end)
    throw ConfigError("invalid value '" + std::string(value) + "' for " + std::string(key), line);
  return out;
}

bool parse_bool(std::string_view key, std::string_view value, int line) {
  if (value == "true" || value == "yes" || value == "1") return true;
  if (value == "false" || value == "no" || value == "0") return false;
  throw ConfigError("invalid boolean '" + std::string(value) + "' for " + std::string(key), line);
}

template <typename E>
E parse_enum(std::string_view key, std::string_view value, int line,
             std::initializer_list<std::pair<std::string_view, E>> options) {
  for (const auto& [name, e] : options)
    if (value == name) return e;
  std::string allowed;
  for (const auto& [name, e] : options) allowed += (allowed.empty() ? "" : "|") + std::string(name);
  throw ConfigError("invalid value '" + std::string(value) + "' for " + std::string(key) +
                        " (expected " + allowed + ")",
                    line);
}

enum class FadingKindName { Rayleigh, Lognormal };

// Fading keys are collected first; the variant is built once all are known.
struct FadingDraft {
  FadingKindName kind = FadingKindName::Rayleigh;
  double mean_snr_db;
  double mu_db;
  double sigma_db = 5.0;
  double rho = 0.0;

  FadingSpec build(LinkKind link) const {
    if (kind == FadingKindName::Rayleigh) return FadingSpec{RayleighIid{mean_snr_db}, link};
    return FadingSpec{LognormalCorrelated{mu_db, sigma_db, rho}, link};
  }
};

struct Draft {
  ScenarioConfig cfg;
  FadingDraft pu_su{FadingKindName::Rayleigh, -10.0, -10.0};
  FadingDraft su_su{FadingKindName::Rayleigh, 10.0, 10.0};
  std::optional<double> nmse;
  std::map<int, std::pair<std::optional<double>, std::optional<double>>> chain_overrides;
};

using Setter = std::function<void(Draft&, std::string_view key, std::string_view value, int line)>;

const std::map<std::string, Setter, std::less<>>& setters() {
  static const std::map<std::string, Setter, std::less<>> table = [] {
    std::map<std::string, Setter, std::less<>> t;
    t["M"] = [](Draft& d, auto k, auto v, int l) { d.cfg.num_sus = parse_number<int>(k, v, l); };
    t["N"] = [](Draft& d, auto k, auto v, int l) { d.cfg.num_channels = parse_number<int>(k, v, l); };
    t["T"] = [](Draft& d, auto k, auto v, int l) { d.cfg.num_slots = parse_number<int>(k, v, l); };
    t["replications"] = [](Draft& d, auto k, auto v, int l) {
      d.cfg.replications = parse_number<int>(k, v, l);
    };
    t["seed"] = [](Draft& d, auto k, auto v, int l) {
      d.cfg.seed = parse_number<std::uint64_t>(k, v, l);
    };
    t["pu_snr_db"] = [](Draft& d, auto k, auto v, int l) {
      d.cfg.pu_snr_db = parse_number<double>(k, v, l);
    };
    t["chain.p01"] = [](Draft& d, auto k, auto v, int l) {
      d.cfg.chain.p01 = parse_number<double>(k, v, l);
    };
    t["chain.p11"] = [](Draft& d, auto k, auto v, int l) {
      d.cfg.chain.p11 = parse_number<double>(k, v, l);
    };
    t["detector.nu"] = [](Draft& d, auto k, auto v, int l) {
      d.cfg.detector.nu = parse_number<int>(k, v, l);
    };
    t["detector.pmd_target"] = [](Draft& d, auto k, auto v, int l) {
      d.cfg.detector.pmd_target = parse_number<double>(k, v, l);
    };
    t["detector.threshold_mode"] = [](Draft& d, auto k, auto v, int l) {
      d.cfg.detector.threshold_mode = parse_enum<ThresholdMode>(
          k, v, l,
          {{"fixed", ThresholdMode::Fixed},
           {"adaptive", ThresholdMode::Adaptive},
           {"mismatched", ThresholdMode::Mismatched},
           {"cooperative", ThresholdMode::Cooperative}});
    };
    t["detector.cooperative_L"] = [](Draft& d, auto k, auto v, int l) {
      d.cfg.detector.cooperative_branches = parse_number<int>(k, v, l);
    };
    t["detector.approx"] = [](Draft& d, auto k, auto v, int l) {
      d.cfg.detector.approx_mode = parse_enum<ApproxMode>(
          k, v, l, {{"exact", ApproxMode::Exact}, {"gaussian", ApproxMode::Gaussian}});
    };
    t["strategy.reward"] = [](Draft& d, auto k, auto v, int l) {
      d.cfg.reward_mode = parse_enum<RewardMode>(
          k, v, l, {{"bandwidth", RewardMode::Bandwidth}, {"capacity", RewardMode::Capacity}});
    };
    t["strategy.bandwidth"] = [](Draft& d, auto k, auto v, int l) {
      d.cfg.bandwidth = parse_number<double>(k, v, l);
    };
    t["sensing.perfect"] = [](Draft& d, auto k, auto v, int l) {
      d.cfg.perfect_sensing = parse_bool(k, v, l);
    };
    t["sensing.oracle"] = [](Draft& d, auto k, auto v, int l) {
      d.cfg.oracle = parse_enum<SensingOracle>(
          k, v, l,
          {{"bernoulli", SensingOracle::Bernoulli}, {"statistic", SensingOracle::DecisionStatistic}});
    };
    t["mismatch.nmse"] = [](Draft& d, auto k, auto v, int l) { d.nmse = parse_number<double>(k, v, l); };

    for (const auto& [prefix, member] :
         {std::pair{std::string("fading.pu_su."), &Draft::pu_su},
          std::pair{std::string("fading.su_su."), &Draft::su_su}}) {
      const auto m = member;
      t[prefix + "kind"] = [m](Draft& d, auto k, auto v, int l) {
        (d.*m).kind = parse_enum<FadingKindName>(
            k, v, l, {{"rayleigh", FadingKindName::Rayleigh}, {"lognormal", FadingKindName::Lognormal}});
      };
      t[prefix + "mean_snr_db"] = [m](Draft& d, auto k, auto v, int l) {
        (d.*m).mean_snr_db = parse_number<double>(k, v, l);
      };
      t[prefix + "mu_db"] = [m](Draft& d, auto k, auto v, int l) {
        (d.*m).mu_db = parse_number<double>(k, v, l);
      };
      t[prefix + "sigma_db"] = [m](Draft& d, auto k, auto v, int l) {
        (d.*m).sigma_db = parse_number<double>(k, v, l);
      };
      t[prefix + "rho"] = [m](Draft& d, auto k, auto v, int l) {
        (d.*m).rho = parse_number<double>(k, v, l);
      };
    }
    return t;
  }();
  return table;
}

// `chain.<n>.p01` / `chain.<n>.p11` with 1-based channel n.
bool apply_chain_override(Draft& d, std::string_view key, std::string_view value, int line) {
  constexpr std::string_view prefix = "chain.";
  if (!key.starts_with(prefix)) return false;
  const auto rest = key.substr(prefix.size());
  const auto dot = rest.find('.');
  if (dot == std::string_view::npos) return false;
  const auto index_text = rest.substr(0, dot);
  const auto field = rest.substr(dot + 1);
  int channel = 0;
  const auto [ptr, ec] =
      std::from_chars(index_text.data(), index_text.data() + index_text.size(), channel);
  if (ec != std::errc{} || ptr != index_text.data() + index_text.size()) return false;
  if (field != "p01" && field != "p11") return false;
  if (channel < 1) throw ConfigError("channel index in " + std::string(key) + " must be >= 1", line);
  auto& entry = d.chain_overrides[channel - 1];
  (field == "p01" ? entry.first : entry.second) = parse_number<double>(key, value, line);
  return true;
}

}  // namespace

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> out;
    for (const auto& [k, v] : setters()) out.push_back(k);
    return out;
  }();
  return keys;
}

ScenarioConfig parse_config(std::string_view text) {
  Draft draft;
  std::set<std::string, std::less<>> seen;
  int line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto eol = text.find('\n', pos);
    std::string_view line = text.substr(pos, eol == std::string_view::npos ? text.npos : eol - pos);
    pos = eol == std::string_view::npos ? text.size() + 1 : eol + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ConfigError("expected 'key = value'", line_no);
    const auto key = trim(line.substr(0, eq));
    const auto value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError("missing key before '='", line_no);
    if (value.empty()) throw ConfigError("missing value for " + std::string(key), line_no);
    if (!seen.insert(std::string(key)).second)
      throw ConfigError("duplicate key " + std::string(key), line_no);
    if (const auto it = setters().find(key); it != setters().end()) {
      it->second(draft, key, value, line_no);
    } else if (!apply_chain_override(draft, key, value, line_no)) {
      throw ConfigError("unknown key " + std::string(key), line_no);
    }
  }

  ScenarioConfig cfg = draft.cfg;
  // Half-specified per-channel overrides inherit the other field from `chain`.
  for (const auto& [n, fields] : draft.chain_overrides)
    cfg.chain_overrides[n] = MarkovChainParams{fields.first.value_or(cfg.chain.p01),
                                               fields.second.value_or(cfg.chain.p11)};
  cfg.pu_su = draft.pu_su.build(LinkKind::PuToSu);
  cfg.su_su = draft.su_su.build(LinkKind::SuToSu);
  if (draft.nmse) cfg.mismatch = MismatchSpec{*draft.nmse};
  cfg.validate();
  return cfg;
}

ScenarioConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string(), 0);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_config(buffer.str());
}

}  // namespace crsense

#pragma once

// Experiment harness behind the gcoupling command-line tool.
//
// A run is described by a JSON config file plus the global flags --seed,
// --replicas and --out-dir, which override the matching config keys. The
// merged object is the effective config: it is validated in full before any
// computation, hashed, and embedded in every summary, so artifacts depend on
// nothing else.
//
// Exit codes: 0 all checks hold, 1 at least one check failed (listed under
// "violations"), 2 bad command line or config, 3 runtime failure.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include <nlohmann/json.hpp>

#include "gcoupling/gcoupling.hpp"

namespace gcoupling::cli {

using json = nlohmann::json;

inline const std::vector<std::string>& subcommands() {
  static const std::vector<std::string> names{"race", "couple", "ppp-check", "influence", "govern", "prime", "reconstruct"};
  return names;
}

/// A config problem with its location: "file:line:col" or a JSON pointer.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string location, const std::string& what)
      : std::runtime_error(location + ": " + what), location_(std::move(location)) {}
  const std::string& location() const noexcept { return location_; }

 private:
  std::string location_;
};

struct ExperimentConfig {
  std::string command;
  json params = json::object();  // effective config
  std::uint64_t seed = 0;
  std::size_t replicas = 0;
  std::filesystem::path out_dir = "out";
  std::filesystem::path base_dir = ".";  // resolves relative paths inside the config
  std::string hash;
};

struct Artifact {
  std::string name;
  std::string content;
};

struct Outcome {
  json results = json::object();
  json violations = json::array();
  std::vector<Artifact> files;  // CSV artifacts; the JSON summary is added by run()

  void violate(std::string check, json detail = json::object()) {
    detail["check"] = std::move(check);
    violations.push_back(std::move(detail));
  }
};

namespace detail {

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

inline std::string num(double v) {
  if (!std::isfinite(v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline json to_json(const Estimate& e) { return {{"value", e.value}, {"std_error", e.std_error}, {"samples", e.samples}}; }
inline json to_json(const TestResult& t) { return {{"statistic", t.statistic}, {"dof", t.dof}, {"p_value", t.p_value}}; }

inline std::string at(const std::string& ptr, const std::string& key) { return ptr + "/" + key; }

inline void check_keys(const json& obj, const std::string& ptr, const std::set<std::string>& allowed) {
  if (!obj.is_object()) throw ConfigError(ptr.empty() ? "/" : ptr, "expected an object");
  for (const auto& [k, v] : obj.items())
    if (!allowed.count(k)) throw ConfigError(at(ptr, k), "unknown key");
}

inline const json& require(const json& obj, const std::string& ptr, const std::string& key) {
  if (!obj.contains(key)) throw ConfigError(at(ptr, key), "missing required key");
  return obj.at(key);
}

inline double number(const json& obj, const std::string& ptr, const std::string& key, std::optional<double> def = {},
                     double lo = -INFINITY, double hi = INFINITY) {
  if (!obj.contains(key)) {
    if (def) return *def;
    throw ConfigError(at(ptr, key), "missing required key");
  }
  const json& v = obj.at(key);
  if (!v.is_number()) throw ConfigError(at(ptr, key), "expected a number");
  const double d = v.get<double>();
  if (!std::isfinite(d) || d < lo || d > hi)
    throw ConfigError(at(ptr, key), "value " + num(d) + " outside [" + num(lo) + ", " + num(hi) + "]");
  return d;
}

inline std::uint64_t integer(const json& obj, const std::string& ptr, const std::string& key,
                             std::optional<std::uint64_t> def = {}, std::uint64_t lo = 0,
                             std::uint64_t hi = UINT64_MAX) {
  if (!obj.contains(key)) {
    if (def) return *def;
    throw ConfigError(at(ptr, key), "missing required key");
  }
  const json& v = obj.at(key);
  if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<std::int64_t>() < 0))
    throw ConfigError(at(ptr, key), "expected a nonnegative integer");
  const auto u = v.get<std::uint64_t>();
  if (u < lo || u > hi)
    throw ConfigError(at(ptr, key), "value " + std::to_string(u) + " outside [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
  return u;
}

inline std::vector<double> number_list(const json& v, const std::string& ptr) {
  if (!v.is_array() || v.empty()) throw ConfigError(ptr, "expected a nonempty array of numbers");
  std::vector<double> out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!v[i].is_number()) throw ConfigError(at(ptr, std::to_string(i)), "expected a number");
    out.push_back(v[i].get<double>());
  }
  return out;
}

inline std::vector<double> weight_vector(const json& v, const std::string& ptr) {
  auto w = number_list(v, ptr);
  double s = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (!(w[i] >= 0.0) || !std::isfinite(w[i])) throw ConfigError(at(ptr, std::to_string(i)), "weights must be finite and nonnegative");
    s += w[i];
  }
  if (!(s > 0.0)) throw ConfigError(ptr, "weights sum to zero");
  for (double& x : w) x /= s;
  return w;
}

// Converts library validation failures raised while building config objects.
template <typename F>
auto build(const std::string& ptr, F&& f) {
  try {
    return f();
  } catch (const Error& e) {
    throw ConfigError(ptr.empty() ? "/" : ptr, e.what());
  }
}

/// State space config: {"atoms": k}, {"weights": [...]} or {"interval": [lo, hi]}.
inline SpacePtr parse_space(const json& j, const std::string& ptr) {
  check_keys(j, ptr, {"atoms", "weights", "interval"});
  if (j.size() != 1) throw ConfigError(ptr, "space needs exactly one of atoms, weights, interval");
  if (j.contains("atoms")) {
    const auto k = integer(j, ptr, "atoms", {}, 1, 1u << 20);
    return make_space(StateSpace::uniform_probability(static_cast<std::size_t>(k)));
  }
  if (j.contains("weights")) {
    auto w = number_list(j["weights"], at(ptr, "weights"));
    return build(at(ptr, "weights"), [&] { return make_space(StateSpace::discrete(w)); });
  }
  const auto iv = number_list(j["interval"], at(ptr, "interval"));
  if (iv.size() != 2) throw ConfigError(at(ptr, "interval"), "expected [lo, hi]");
  return build(at(ptr, "interval"), [&] { return make_space(StateSpace::interval(iv[0], iv[1])); });
}

/// Density config. Discrete: {"weights": [...]} (normalized). Interval:
/// {"family": "uniform" | "linear" | "piecewise_constant", ...} with an
/// optional "domain": [lo, hi]. Without a given space one is built from the
/// config; with one, the config must fit it.
inline Density parse_density(const json& j, const std::string& ptr, SpacePtr& space, bool require_probability = true) {
  check_keys(j, ptr, {"weights", "family", "domain", "intercept", "slope", "values"});
  std::optional<Density> out;
  if (j.contains("weights")) {
    if (j.contains("family")) throw ConfigError(ptr, "give either weights or family");
    const auto p = weight_vector(j["weights"], at(ptr, "weights"));
    if (!space) space = make_space(StateSpace::uniform_probability(p.size()));
    if (!space->is_discrete() || space->atom_count() != p.size())
      throw ConfigError(at(ptr, "weights"), "does not match the state space");
    out = build(ptr, [&] { return Density::from_probabilities(space, p); });
  } else {
    if (!j.contains("family") || !j["family"].is_string()) throw ConfigError(at(ptr, "family"), "missing density family");
    const std::string fam = j["family"].get<std::string>();
    if (!space) {
      std::vector<double> dom{0.0, 1.0};
      if (j.contains("domain")) dom = number_list(j["domain"], at(ptr, "domain"));
      if (dom.size() != 2) throw ConfigError(at(ptr, "domain"), "expected [lo, hi]");
      space = build(at(ptr, "domain"), [&] { return make_space(StateSpace::interval(dom[0], dom[1])); });
    } else if (j.contains("domain")) {
      throw ConfigError(at(ptr, "domain"), "domain is fixed by the surrounding state space");
    }
    if (fam == "uniform") {
      out = Density::uniform(space);
    } else if (fam == "linear") {
      const double a = number(j, ptr, "intercept"), b = number(j, ptr, "slope");
      out = build(ptr, [&] { return Density::linear(space, a, b); });
    } else if (fam == "piecewise_constant") {
      const auto v = number_list(require(j, ptr, "values"), at(ptr, "values"));
      out = build(ptr, [&] { return Density::piecewise_constant(space, v); });
    } else {
      throw ConfigError(at(ptr, "family"), "unknown density family '" + fam + "'");
    }
  }
  if (require_probability && !out->is_probability())
    throw ConfigError(ptr, "density must integrate to 1, got " + num(out->mass()));
  return *out;
}

/// Model config by family name: iid, markov, geometric_binary, geometric_continuous.
inline ModelPtr parse_model(const json& j, const std::string& ptr) {
  if (!j.is_object() || !j.contains("family") || !j["family"].is_string())
    throw ConfigError(at(ptr, "family"), "missing model family");
  const std::string fam = j["family"].get<std::string>();
  if (fam == "iid") {
    check_keys(j, ptr, {"family", "density"});
    SpacePtr space;
    const Density d = parse_density(require(j, ptr, "density"), at(ptr, "density"), space);
    return std::make_shared<IidModel>(d);
  }
  if (fam == "markov") {
    check_keys(j, ptr, {"family", "order", "rows"});
    const auto order = integer(j, ptr, "order", {}, 1, 4);
    const json& rows = require(j, ptr, "rows");
    if (!rows.is_array() || rows.empty()) throw ConfigError(at(ptr, "rows"), "expected an array of rows");
    std::vector<std::vector<double>> table;
    for (std::size_t i = 0; i < rows.size(); ++i) table.push_back(number_list(rows[i], at(at(ptr, "rows"), std::to_string(i))));
    const auto space = make_space(StateSpace::uniform_probability(table.front().size()));
    return build(at(ptr, "rows"), [&] { return std::make_shared<MarkovModel>(space, static_cast<std::size_t>(order), table); });
  }
  if (fam == "geometric_binary" || fam == "geometric_continuous") {
    check_keys(j, ptr, {"family", "c", "r"});
    const double c = number(j, ptr, "c"), r = number(j, ptr, "r");
    return build(ptr, [&]() -> ModelPtr {
      if (fam == "geometric_binary") return std::make_shared<GeometricBinaryModel>(c, r);
      return std::make_shared<GeometricContinuousModel>(c, r);
    });
  }
  throw ConfigError(at(ptr, "family"), "unknown model family '" + fam + "'");
}

inline const std::set<std::string>& common_keys() {
  static const std::set<std::string> keys{"command", "seed", "replicas", "out_dir"};
  return keys;
}

inline std::set<std::string> keys_with(std::initializer_list<std::string> extra) {
  std::set<std::string> k = common_keys();
  k.insert(extra.begin(), extra.end());
  return k;
}

// Two-sided check of an empirical rate against an exact value at 3 sigma.
inline bool within_3sigma(const Estimate& e, double exact) {
  const double sigma = std::sqrt(std::max(exact * (1.0 - exact), 0.0) / static_cast<double>(e.samples));
  return std::abs(e.value - exact) <= 3.0 * sigma + 1e-12;
}

}  // namespace detail

// ---------------------------------------------------------------- commands

inline Outcome run_race(const ExperimentConfig& cfg) {
  using namespace detail;
  const json& j = cfg.params;
  check_keys(j, "", keys_with({"p", "q"}));
  const auto p = weight_vector(require(j, "", "p"), "/p");
  const auto q = weight_vector(require(j, "", "q"), "/q");
  if (p.size() != q.size()) throw ConfigError("/q", "p and q need the same support size");

  Outcome o;
  const double exact = race_coincidence_exact(p, q);
  const double lb = race_lower_bound(p, q);
  const Estimate mc = race_coincidence_mc(p, q, cfg.replicas, cfg.seed);
  o.results = {{"exact", exact}, {"mc_estimate", mc.value}, {"stderr", mc.std_error},
               {"tv", tv_distance(std::span<const double>(p), std::span<const double>(q))}, {"lower_bound", lb}};
  if (exact < lb - 1e-12) o.violate("exact_above_lower_bound", {{"exact", exact}, {"bound", lb}});
  if (!within_3sigma(mc, exact)) o.violate("mc_matches_exact", {{"mc", mc.value}, {"exact", exact}});
  return o;
}

inline Outcome run_couple(const ExperimentConfig& cfg) {
  using namespace detail;
  const json& j = cfg.params;
  check_keys(j, "", keys_with({"f", "g"}));
  SpacePtr space;
  const Density f = parse_density(require(j, "", "f"), "/f", space);
  const Density g = parse_density(require(j, "", "g"), "/g", space);

  Outcome o;
  const std::vector<Region> regions{Region(f), Region(g)};
  std::ostringstream csv;
  csv << "seed,x_f,x_g,t_f,t_g,agree_t,agree_x\n";
  std::size_t t_hits = 0, x_hits = 0, inclusion = 0;
  for (std::size_t i = 0; i < cfg.replicas; ++i) {
    const std::uint64_t seed = cfg.seed + i;
    const auto pts = PointProcessSource(seed, space).joint_first_points(regions);
    const bool at = pts[0].t == pts[1].t, ax = pts[0].x == pts[1].x;
    t_hits += at;
    x_hits += ax;
    inclusion += at && !ax;
    csv << seed << ',' << num(pts[0].x) << ',' << num(pts[1].x) << ',' << num(pts[0].t) << ',' << num(pts[1].t) << ','
        << int(at) << ',' << int(ax) << '\n';
  }
  o.files.push_back({"couple.csv", csv.str()});
  const double d = tv_distance(f, g);
  const double exact = (1.0 - d) / (1.0 + d);
  const Estimate te = binomial_estimate(t_hits, cfg.replicas), xe = binomial_estimate(x_hits, cfg.replicas);
  o.results = {{"tv", d}, {"exact_t_coincidence", exact}, {"t_coincidence", to_json(te)}, {"x_coincidence", to_json(xe)},
               {"agreement_rate", xe.value}, {"disagreement_bound", 2.0 * d / (1.0 + d)}};
  if (inclusion) o.violate("t_coincidence_implies_x_coincidence", {{"count", inclusion}});
  if (!within_3sigma(te, exact)) o.violate("t_coincidence_law", {{"empirical", te.value}, {"exact", exact}});
  if (1.0 - xe.value > 2.0 * d / (1.0 + d) + 3.0 * xe.std_error)
    o.violate("x_disagreement_bound", {{"empirical", 1.0 - xe.value}, {"bound", 2.0 * d / (1.0 + d)}});
  return o;
}

inline Outcome run_ppp_check(const ExperimentConfig& cfg) {
  using namespace detail;
  const json& j = cfg.params;
  check_keys(j, "", keys_with({"space", "pairs", "bins"}));
  const SpacePtr space = parse_space(require(j, "", "space"), "/space");
  const std::size_t bins = space->is_discrete() ? space->atom_count()
                                                : static_cast<std::size_t>(integer(j, "", "bins", 4, 1, 1024));
  std::vector<std::pair<Density, Density>> pairs;
  if (j.contains("pairs")) {
    const json& arr = j["pairs"];
    if (!arr.is_array()) throw ConfigError("/pairs", "expected an array of {f, g} objects");
    for (std::size_t i = 0; i < arr.size(); ++i) {
      const std::string p = "/pairs/" + std::to_string(i);
      check_keys(arr[i], p, {"f", "g"});
      SpacePtr s = space;
      Density f = parse_density(require(arr[i], p, "f"), p + "/f", s);
      Density g = parse_density(require(arr[i], p, "g"), p + "/g", s);
      pairs.emplace_back(std::move(f), std::move(g));
    }
  }

  Outcome o;
  // Boxes: x-bin b, y in [0, 1), t in [k, k + 1) for k = 0, 1.
  const std::size_t boxes = 2 * bins;
  std::vector<std::vector<double>> counts(boxes, std::vector<double>(cfg.replicas, 0.0));
  auto bin_of = [&](State x) {
    if (space->is_discrete()) return static_cast<std::size_t>(x);
    const double u = (x - space->lo()) / (space->hi() - space->lo());
    return std::min(bins - 1, static_cast<std::size_t>(u * static_cast<double>(bins)));
  };
  for (std::size_t r = 0; r < cfg.replicas; ++r)
    for (const ProcessPoint& pt : PointProcessSource(cfg.seed + r, space).points_in_window(1.0, 2.0))
      counts[(pt.t < 1.0 ? 0 : bins) + bin_of(pt.x)][r] += 1.0;
  json box_report = json::array();
  const double z_crit = 3.890591886413;  // two-sided 1e-4
  for (std::size_t b = 0; b < boxes; ++b) {
    const std::size_t xb = b % bins;
    double expected;
    if (space->is_discrete()) {
      expected = space->weights()[xb];
    } else {
      const double w = (space->hi() - space->lo()) / static_cast<double>(bins);
      const double a = space->lo() + w * static_cast<double>(xb);
      const Density one = Density::constant(space, 1.0);
      const Envelope* env = &one.envelope();
      expected = integrate(*space, [&](State x) { return x >= a && x < a + w ? 1.0 : 0.0; },
                           std::span<const Envelope* const>(&env, 1));
    }
    const Estimate m = mean_estimate(counts[b]);
    const TestResult disp = poisson_dispersion(counts[b]);
    const double z = (m.value - expected) / std::sqrt(expected / static_cast<double>(cfg.replicas));
    box_report.push_back({{"box", b}, {"expected", expected}, {"mean", to_json(m)}, {"dispersion", to_json(disp)}});
    if (std::abs(z) > z_crit) o.violate("box_mean", {{"box", b}, {"mean", m.value}, {"expected", expected}});
    if (disp.p_value < 1e-4) o.violate("box_dispersion", {{"box", b}, {"p_value", disp.p_value}});
  }
  const double bound = 4.0 / std::sqrt(static_cast<double>(cfg.replicas));
  double max_corr = 0.0;
  for (std::size_t a = 0; a < boxes; ++a)
    for (std::size_t b = a + 1; b < boxes; ++b) {
      const double rho = correlation(counts[a], counts[b]);
      max_corr = std::max(max_corr, std::abs(rho));
      if (!(std::abs(rho) < bound)) o.violate("box_independence", {{"boxes", {a, b}}, {"correlation", rho}, {"bound", bound}});
    }
  json pair_report = json::array();
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const CoincidenceReport rep = coincidence_curve(cfg.seed, cfg.replicas, pairs[i].first, pairs[i].second);
    pair_report.push_back({{"pair", i}, {"tv", rep.tv}, {"exact", rep.exact}, {"t_coincidence", to_json(rep.t_coincidence)},
                           {"x_coincidence", to_json(rep.x_coincidence)}});
    if (!within_3sigma(rep.t_coincidence, rep.exact))
      o.violate("coincidence_law", {{"pair", i}, {"empirical", rep.t_coincidence.value}, {"exact", rep.exact}});
    if (!rep.inclusion_violations.empty())
      o.violate("t_coincidence_implies_x_coincidence", {{"pair", i}, {"count", rep.inclusion_violations.size()}});
    if (!space->is_discrete() && rep.t_coincidence.value != rep.x_coincidence.value)
      o.violate("diffuse_x_equals_t", {{"pair", i}});
  }
  o.results = {{"boxes", box_report}, {"max_abs_correlation", max_corr}, {"correlation_bound", bound}, {"pairs", pair_report}};
  return o;
}

inline Outcome run_influence(const ExperimentConfig& cfg) {
  using namespace detail;
  const json& j = cfg.params;
  check_keys(j, "", keys_with({"model", "max_n", "positivity_pasts"}));
  const ModelPtr model = parse_model(require(j, "", "model"), "/model");
  const auto max_n = static_cast<std::size_t>(integer(j, "", "max_n", 12, 0, 1000));
  const auto pasts = static_cast<std::size_t>(integer(j, "", "positivity_pasts", 10000));

  Outcome o;
  const InfluenceProfile prof = influence_profile(*model, max_n, cfg.replicas, cfg.seed);
  std::ostringstream csv;
  csv << "n,delta_exact,eta_hat,eta_stderr\n";
  for (std::size_t n = 0; n <= max_n; ++n) {
    const auto& d = prof.delta[n];
    csv << n << ',' << (d ? num(*d) : "") << ',' << num(prof.eta[n].value) << ',' << num(prof.eta[n].std_error) << '\n';
    if (d && prof.eta[n].value > *d + 3.0 * prof.eta[n].std_error + 1e-12)
      o.violate("eta_below_delta", {{"n", n}, {"eta", prof.eta[n].value}, {"delta", *d}});
    if (n > 0 && d && prof.delta[n - 1] && *d > *prof.delta[n - 1] + 1e-15)
      o.violate("delta_monotone", {{"n", n}});
  }
  o.files.push_back({"influence.csv", csv.str()});
  const std::size_t bad = pasts ? priming_condition_violations(*model, pasts, stream_key(cfg.seed, "positivity")) : 0;
  if (bad) o.violate("kernel_positivity", {{"violations", bad}, {"pasts", pasts}});
  o.results = {{"model", model->name()}, {"max_n", max_n}, {"positivity_pasts", pasts}, {"positivity_violations", bad}};
  return o;
}

/// Reads a path CSV with header "n,x" and consecutive n.
inline Path read_path_csv(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw ConfigError(file.string(), "cannot open path file");
  std::string line;
  std::size_t lineno = 1;
  if (!std::getline(in, line) || line != "n,x") throw ConfigError(file.string() + ":1", "expected header 'n,x'");
  Path p;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const std::string where = file.string() + ":" + std::to_string(lineno);
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw ConfigError(where, "expected two columns");
    long long n;
    double x;
    try {
      std::size_t used = 0;
      n = std::stoll(line.substr(0, comma), &used);
      if (used != comma) throw std::invalid_argument("n");
      const std::string xs = line.substr(comma + 1);
      x = std::stod(xs, &used);
      if (used != xs.size()) throw std::invalid_argument("x");
    } catch (const std::exception&) {
      throw ConfigError(where, "malformed row");
    }
    if (p.values.empty()) p.origin = n;
    else if (n != p.end()) throw ConfigError(where, "time indices must be consecutive");
    p.values.push_back(x);
  }
  if (p.values.size() < 3) throw ConfigError(file.string(), "path needs at least three rows");
  return p;
}

inline Outcome run_govern(const ExperimentConfig& cfg) {
  using namespace detail;
  const json& j = cfg.params;
  check_keys(j, "", keys_with({"model", "path_file"}));
  const ModelPtr model = parse_model(require(j, "", "model"), "/model");
  Path path;
  if (j.contains("path_file")) {
    if (!j["path_file"].is_string()) throw ConfigError("/path_file", "expected a string");
    std::filesystem::path file = j["path_file"].get<std::string>();
    if (file.is_relative()) file = cfg.base_dir / file;
    path = read_path_csv(file);
    for (std::size_t i = 0; i < path.values.size(); ++i)
      if (!model->space()->contains(path.values[i]))
        throw ConfigError(file.string() + ":" + std::to_string(i + 2), "symbol outside the state space");
  } else {
    if (cfg.replicas < 2) throw ConfigError("/replicas", "simulated path needs length at least 2");
    const std::int64_t start = 1 - static_cast<std::int64_t>(model->burn_in());
    path = simulate_path(*model, InnovationFamily(model->space(), cfg.seed, "govern-x"), start,
                         static_cast<std::int64_t>(cfg.replicas));
  }

  Outcome o;
  // The first symbol conditions the rest.
  const GoverningSequence u = extract_innovations(*model, path, stream_key(cfg.seed, "govern-u"), path.origin + 1);
  const Path replayed = replay(*model, u, Path{path.origin, {path.values.front()}});
  std::ostringstream csv;
  csv << "n,x,recursion_ok,replay_ok\n";
  std::size_t replay_bad = 0;
  for (std::int64_t n = u.origin(); n < u.end(); ++n) {
    const bool ok = replayed.at(n) == path.at(n);
    replay_bad += ok ? 0 : 1;
    csv << n << ',' << num(path.at(n)) << ',' << int(u.recursion_ok()[static_cast<std::size_t>(n - u.origin())]) << ','
        << int(ok) << '\n';
  }
  o.files.push_back({"govern.csv", csv.str()});
  const GovernDiagnostics d = govern_diagnostics(*model, path, u);
  const double box_z = (d.box_mean.value - d.box_expected) / std::sqrt(d.box_expected / static_cast<double>(d.steps));
  o.results = {{"model", model->name()}, {"steps", d.steps}, {"recursion_failures", d.recursion_failures},
               {"replay_mismatches", replay_bad}, {"first_time_ks", to_json(d.first_time_ks)},
               {"box_expected", d.box_expected}, {"box_mean", to_json(d.box_mean)},
               {"box_dispersion", to_json(d.box_dispersion)}, {"corr_past_time", d.corr_past_time},
               {"corr_lag_box", d.corr_lag_box}, {"corr_bound", d.corr_bound}};
  if (d.recursion_failures) o.violate("recursion_check", {{"failures", d.recursion_failures}});
  if (replay_bad) o.violate("exact_replay", {{"mismatches", replay_bad}});
  if (d.first_time_ks.p_value < 1e-4) o.violate("first_time_exponential", {{"p_value", d.first_time_ks.p_value}});
  if (d.box_dispersion.p_value < 1e-4) o.violate("box_dispersion", {{"p_value", d.box_dispersion.p_value}});
  if (std::abs(box_z) > 3.890591886413) o.violate("box_mean", {{"mean", d.box_mean.value}, {"expected", d.box_expected}});
  if (!(std::abs(d.corr_past_time) < d.corr_bound)) o.violate("past_independence", {{"correlation", d.corr_past_time}});
  if (!(std::abs(d.corr_lag_box) < d.corr_bound)) o.violate("lag_independence", {{"correlation", d.corr_lag_box}});
  return o;
}

inline json certificate_json(const PrimingCertificate& c) {
  auto trace = [](const std::vector<SearchProbe>& t) {
    json a = json::array();
    for (const auto& p : t) a.push_back({{"constant", p.constant}, {"criterion", detail::to_json(p.criterion)}});
    return a;
  };
  json steps = json::array();
  for (const auto& s : c.steps)
    steps.push_back({{"m", s.m}, {"n", s.n}, {"tolerance", s.tolerance}, {"event_probability", s.event_probability()},
                     {"conditioning_samples", s.conditioning_samples}, {"m_trace", trace(s.m_trace)},
                     {"n_trace", trace(s.n_trace)}});
  return {{"epsilon", c.epsilon}, {"length", c.length()}, {"predicted_rate", c.predicted_rate()}, {"steps", steps}};
}

inline CalibrationOptions parse_calibration(const json& j, const std::string& ptr, std::uint64_t seed) {
  using namespace detail;
  CalibrationOptions opt;
  opt.seed = seed;
  if (!j.contains("calibration")) return opt;
  const json& c = j["calibration"];
  const std::string p = ptr + "/calibration";
  check_keys(c, p, {"max_replicas", "min_accepted"});
  opt.max_replicas = static_cast<std::size_t>(integer(c, p, "max_replicas", opt.max_replicas, 1));
  opt.min_accepted = static_cast<std::size_t>(integer(c, p, "min_accepted", opt.min_accepted, 1));
  return opt;
}

inline Outcome run_prime(const ExperimentConfig& cfg) {
  using namespace detail;
  const json& j = cfg.params;
  check_keys(j, "", keys_with({"model", "length", "epsilon", "constants", "calibration"}));
  const ModelPtr model = parse_model(require(j, "", "model"), "/model");
  if (!model->space()->is_probability()) throw ConfigError("/model", "priming needs a probability reference measure");
  const auto len = static_cast<std::size_t>(integer(j, "", "length", {}, 0, 64));
  const double eps = number(j, "", "epsilon", {}, 0.0, 1.0);
  std::optional<std::pair<double, double>> fixed;
  if (j.contains("constants")) {
    check_keys(j["constants"], "/constants", {"m", "n"});
    fixed = {number(j["constants"], "/constants", "m", {}, 1.0, max_priming_constant),
             number(j["constants"], "/constants", "n", {}, 1.0, max_priming_constant)};
  } else if (!(eps > 0.0)) {
    throw ConfigError("/epsilon", "calibration needs a positive epsilon");
  }
  const CalibrationOptions cal = parse_calibration(j, "", stream_key(cfg.seed, "calibrate"));

  Outcome o;
  const PrimingCertificate cert =
      fixed ? fixed_certificate(len, fixed->first, fixed->second, eps) : calibrate_priming(*model, len, eps, cal);
  const PrimingReport rep = priming_experiment(*model, cert, cfg.replicas, cfg.seed);
  json steps = json::array();
  for (std::size_t k = 0; k < len; ++k) {
    steps.push_back({{"step", k + 1}, {"rate", to_json(rep.step_rates[k])}, {"predicted", rep.predicted_step_rates[k]}});
    if (!within_3sigma(rep.step_rates[k], rep.predicted_step_rates[k]))
      o.violate("step_event_rate", {{"step", k + 1}, {"empirical", rep.step_rates[k].value}, {"predicted", rep.predicted_step_rates[k]}});
  }
  o.results = {{"model", model->name()}, {"certificate", certificate_json(cert)}, {"h_count", rep.h_count},
               {"h_rate", to_json(rep.h_rate)}, {"predicted_h_rate", rep.predicted_h_rate}, {"steps", steps},
               {"mismatch_given_h", to_json(rep.mismatch_given_h)}, {"law_tests", rep.law_tests}};
  if (rep.law_tests) {
    o.results["z_law"] = to_json(rep.z_law);
    o.results["z_law"]["exact_reference"] = rep.z_law_exact;
    o.results["independence"] = to_json(rep.independence);
    if (rep.z_law_exact && rep.z_law.p_value < 1e-4) o.violate("z_law", {{"p_value", rep.z_law.p_value}});
    if (rep.independence.p_value < 1e-4) o.violate("z_h_independence", {{"p_value", rep.independence.p_value}});
  }
  if (!within_3sigma(rep.h_rate, rep.predicted_h_rate))
    o.violate("h_rate_product_form", {{"empirical", rep.h_rate.value}, {"predicted", rep.predicted_h_rate}});
  if (rep.mismatch_given_h.value > eps + 3.0 * rep.mismatch_given_h.std_error)
    o.violate("conditional_mismatch", {{"empirical", rep.mismatch_given_h.value}, {"epsilon", eps}});
  return o;
}

inline Outcome run_reconstruct(const ExperimentConfig& cfg) {
  using namespace detail;
  const json& j = cfg.params;
  check_keys(j, "", keys_with({"model", "schedule", "calibration", "disagreement"}));
  const ModelPtr model = parse_model(require(j, "", "model"), "/model");
  if (!model->space()->is_probability()) throw ConfigError("/model", "reconstruction needs a probability reference measure");
  if (!model->delta_tail(1)) throw ConfigError("/model", "model has no analytic influence tail bound");
  ScheduleOptions sopt;
  sopt.seed = stream_key(cfg.seed, "schedule");
  sopt.calibration = parse_calibration(j, "", 0);
  if (j.contains("schedule")) {
    const json& s = j["schedule"];
    check_keys(s, "/schedule", {"first_level", "stage_budget", "alpha_replicas", "repetitions"});
    sopt.first_level = static_cast<std::size_t>(integer(s, "/schedule", "first_level", 1, 1, 1000));
    sopt.stage_budget = static_cast<std::size_t>(integer(s, "/schedule", "stage_budget", 12, 1, 1000));
    sopt.alpha_replicas = static_cast<std::size_t>(integer(s, "/schedule", "alpha_replicas", sopt.alpha_replicas, 1));
    if (s.contains("repetitions")) {
      const auto reps = number_list(s["repetitions"], "/schedule/repetitions");
      for (std::size_t i = 0; i < reps.size(); ++i) {
        if (!(reps[i] >= 1.0) || reps[i] != std::floor(reps[i]))
          throw ConfigError("/schedule/repetitions/" + std::to_string(i), "expected a positive integer");
        sopt.repetitions.push_back(static_cast<std::size_t>(reps[i]));
      }
    }
  }
  std::optional<DisagreementOptions> dopt;
  double d_eps = 0.0;
  std::size_t d_horizon = 0;
  if (j.contains("disagreement")) {
    const json& d = j["disagreement"];
    check_keys(d, "/disagreement", {"epsilon", "horizon", "replicas", "eta_replicas", "law_horizon"});
    d_eps = number(d, "/disagreement", "epsilon", {}, 0.0, 1.0);
    if (!(d_eps > 0.0)) throw ConfigError("/disagreement/epsilon", "must be positive");
    d_horizon = static_cast<std::size_t>(integer(d, "/disagreement", "horizon", {}, 1, 10000));
    DisagreementOptions x;
    x.replicas = static_cast<std::size_t>(integer(d, "/disagreement", "replicas", cfg.replicas, 1));
    x.eta_replicas = static_cast<std::size_t>(integer(d, "/disagreement", "eta_replicas", x.eta_replicas, 1));
    x.law_horizon = static_cast<std::size_t>(integer(d, "/disagreement", "law_horizon", 0, 0, 6));
    if (x.law_horizon > d_horizon) throw ConfigError("/disagreement/law_horizon", "must not exceed the horizon");
    x.seed = stream_key(cfg.seed, "disagreement");
    dopt = x;
  }

  Outcome o;
  const ReconstructionSchedule sched = build_schedule(*model, sopt);
  const SuccessiveReport rep = successive_approximation(*model, sched, cfg.replicas, stream_key(cfg.seed, "stages"), true);
  std::ostringstream csv;
  csv << "stage,replica,h,recovered\n";
  for (const StageOutcome& s : rep.outcomes) csv << s.stage << ',' << s.replica << ',' << int(s.h) << ',' << int(s.recovered) << '\n';
  o.files.push_back({"reconstruct.csv", csv.str()});

  json levels = json::array();
  for (std::size_t i = 0; i < sched.levels.size(); ++i) {
    const ScheduleLevel& lv = sched.levels[i];
    levels.push_back({{"m", lv.m}, {"epsilon", lv.epsilon}, {"window", lv.window}, {"alpha", to_json(lv.alpha)},
                      {"repetitions", lv.repetitions}, {"certificate", certificate_json(lv.certificate)},
                      {"diverges", bool(sched.level_diverges[i])}});
    if (!sched.level_diverges[i]) o.violate("repetitions_cover_alpha", {{"m", lv.m}});
  }
  json stages = json::array();
  for (std::size_t k = 0; k < rep.stages.size(); ++k) {
    const StageStatistics& s = rep.stages[k];
    const StageInterval& iv = sched.stages[k];
    json row = {{"stage", s.stage}, {"start", iv.start}, {"end", iv.end}, {"epsilon", s.epsilon}, {"alpha", s.alpha},
                {"h_rate", to_json(s.h_rate)}, {"h_count", s.h_count}, {"bound", s.bound}, {"bound_ok", s.bound_ok},
                {"running_h_fraction", rep.running_h_fraction[k]}};
    if (s.h_count) row["recovery_given_h"] = to_json(s.recovery_given_h);
    stages.push_back(std::move(row));
    if (!s.bound_ok) o.violate("stage_recovery_bound", {{"stage", s.stage}, {"recovery", s.recovery_given_h.value}, {"bound", s.bound}});
  }
  o.results = {{"model", model->name()}, {"levels", levels}, {"stages", stages}, {"partial_alpha", sched.partial_alpha}};

  if (dopt) {
    const std::size_t L = window_for(*model, d_eps);
    CalibrationOptions cal = sopt.calibration;
    cal.seed = stream_key(cfg.seed, "disagreement-calibration");
    const PrimingCertificate cert = calibrate_priming(*model, L, d_eps, cal);
    const DisagreementReport d = disagreement_experiment(*model, cert, d_horizon, *dopt);
    json inc = json::array();
    for (std::size_t k = 1; k <= d_horizon; ++k) {
      inc.push_back({{"j", k}, {"increment", to_json(d.increments[k])}, {"eta_hat", to_json(d.eta_hat[L + k - 1])},
                     {"ok", bool(d.increment_ok[k])}});
      if (!d.increment_ok[k]) o.violate("increment_bound", {{"j", k}, {"increment", d.increments[k].value}});
    }
    json rates = json::array();
    for (const auto& r : d.rates) rates.push_back(to_json(r));
    o.results["disagreement"] = {{"window", L}, {"epsilon", d_eps}, {"eta_tail_bound", d.eta_tail_bound},
                                 {"certificate", certificate_json(cert)}, {"h_count", d.h_count}, {"rates", rates},
                                 {"increments", inc}, {"final_bound", 3.0 * d_eps}, {"final_ok", d.final_ok}};
    if (d.law_test_run) o.results["disagreement"]["law_test"] = to_json(d.law_test);
    if (!d.final_ok) o.violate("final_mismatch_bound", {{"rate", d.rates.back().value}, {"bound", 3.0 * d_eps}});
    if (d.law_test_run && d.law_test.p_value < 1e-4) o.violate("reconstructed_law", {{"p_value", d.law_test.p_value}});
  }
  return o;
}

// ---------------------------------------------------------------- driver

inline std::size_t default_replicas(const std::string& cmd) {
  if (cmd == "ppp-check" || cmd == "influence" || cmd == "govern") return 10000;
  if (cmd == "reconstruct") return 2000;
  return 100000;
}

/// Parses config text; errors carry "name:line:col".
inline json parse_config_text(const std::string& text, const std::string& name) {
  try {
    json j = json::parse(text);
    if (!j.is_object()) throw ConfigError(name + ":1:1", "config must be a JSON object");
    return j;
  } catch (const json::parse_error& e) {
    std::size_t line = 1, col = 1;
    const std::size_t stop = std::min<std::size_t>(e.byte > 0 ? e.byte - 1 : 0, text.size());
    for (std::size_t i = 0; i < stop; ++i) {
      if (text[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    throw ConfigError(name + ":" + std::to_string(line) + ":" + std::to_string(col), "JSON parse error (id " + std::to_string(e.id) + ")");
  }
}

struct FlagOverrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> replicas;
  std::optional<std::string> out_dir;
};

/// Merges config and flags into a validated ExperimentConfig.
inline ExperimentConfig make_config(const std::string& command, json params, const FlagOverrides& flags,
                                    const std::filesystem::path& base_dir) {
  using namespace detail;
  ExperimentConfig cfg;
  cfg.command = command;
  cfg.base_dir = base_dir;
  if (params.contains("command")) {
    if (!params["command"].is_string() || params["command"].get<std::string>() != command)
      throw ConfigError("/command", "config is for a different subcommand");
  }
  params["command"] = command;
  if (flags.seed) params["seed"] = *flags.seed;
  if (flags.replicas) params["replicas"] = *flags.replicas;
  if (flags.out_dir) params["out_dir"] = *flags.out_dir;
  if (!params.contains("seed")) throw ConfigError("/seed", "a seed is required (--seed or config key)");
  cfg.seed = integer(params, "", "seed");
  cfg.replicas = static_cast<std::size_t>(integer(params, "", "replicas", default_replicas(command), 1, 1000000000));
  params["replicas"] = cfg.replicas;
  if (params.contains("out_dir")) {
    if (!params["out_dir"].is_string()) throw ConfigError("/out_dir", "expected a string");
    cfg.out_dir = params["out_dir"].get<std::string>();
  }
  cfg.params = std::move(params);
  cfg.hash = hex64(gcoupling::detail::fnv1a(cfg.params.dump()));
  return cfg;
}

inline Outcome dispatch(const ExperimentConfig& cfg) {
  if (cfg.command == "race") return run_race(cfg);
  if (cfg.command == "couple") return run_couple(cfg);
  if (cfg.command == "ppp-check") return run_ppp_check(cfg);
  if (cfg.command == "influence") return run_influence(cfg);
  if (cfg.command == "govern") return run_govern(cfg);
  if (cfg.command == "prime") return run_prime(cfg);
  if (cfg.command == "reconstruct") return run_reconstruct(cfg);
  throw ConfigError("command", "unknown subcommand '" + cfg.command + "'");
}

inline void write_file(const std::filesystem::path& p, const std::string& content) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cli", "cannot write " + p.string());
  out << content;
  if (!out) throw Error("cli", "failed writing " + p.string());
}

/// Runs one validated config and writes its artifacts. Returns 0 or 1.
inline int run(const ExperimentConfig& cfg, std::ostream& out) {
  Outcome o = dispatch(cfg);
  json summary = {{"command", cfg.command}, {"version", version}, {"config_hash", cfg.hash}, {"config", cfg.params},
                  {"results", std::move(o.results)}, {"violations", o.violations},
                  {"status", o.violations.empty() ? "ok" : "violations"}};
  std::filesystem::create_directories(cfg.out_dir);
  for (const Artifact& a : o.files) write_file(cfg.out_dir / a.name, a.content);
  const std::string text = summary.dump(2) + "\n";
  write_file(cfg.out_dir / (cfg.command + ".json"), text);
  out << text;
  return o.violations.empty() ? 0 : 1;
}

/// Command-line entry point.
inline int main_entry(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Global couplings, innovation extraction and priming experiments"};
  std::string command, config_file;
  FlagOverrides flags;
  std::uint64_t seed = 0;
  std::size_t replicas = 0;
  std::string out_dir;
  app.add_option("command", command, "Subcommand")->required()->check(CLI::IsMember(subcommands()));
  auto* seed_opt = app.add_option("--seed", seed, "Master seed (required here or in the config)");
  auto* rep_opt = app.add_option("--replicas", replicas, "Replica budget")->check(CLI::PositiveNumber);
  auto* dir_opt = app.add_option("--out-dir", out_dir, "Artifact directory");
  app.add_option("--config", config_file, "JSON config file");
  app.set_version_flag("--version", version);
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      app.exit(e, out, err);
      return 0;
    }
    err << "error [cli]: " << e.what() << "\n";
    return 2;
  }
  if (*seed_opt) flags.seed = seed;
  if (*rep_opt) flags.replicas = replicas;
  if (*dir_opt) flags.out_dir = out_dir;

  ExperimentConfig cfg;
  try {
    json params = json::object();
    std::filesystem::path base = ".";
    if (!config_file.empty()) {
      std::ifstream in(config_file, std::ios::binary);
      if (!in) throw ConfigError(config_file, "cannot open config file");
      std::ostringstream ss;
      ss << in.rdbuf();
      params = parse_config_text(ss.str(), config_file);
      base = std::filesystem::path(config_file).parent_path();
      if (base.empty()) base = ".";
    }
    cfg = make_config(command, std::move(params), flags, base);
  } catch (const ConfigError& e) {
    err << "error [config] " << e.what() << "\n";
    return 2;
  }
  try {
    return run(cfg, out);
  } catch (const ConfigError& e) {
    err << "error [config] " << e.what() << "\n";
    return 2;
  } catch (const InadmissiblePath& e) {
    err << "error [" << e.module() << "] at index " << e.index() << ": " << e.what() << "\n";
    return 3;
  } catch (const Error& e) {
    err << "error [" << e.module() << "]: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    err << "error [cli]: " << e.what() << "\n";
    return 3;
  }
}

}  // namespace gcoupling::cli

#include "drf/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <charconv>
#include <fstream>
#include <iostream>
#include <sstream>

#include "drf/bootstrap.hpp"
#include "drf/csv.hpp"
#include "drf/diagnostics.hpp"
#include "drf/error.hpp"
#include "drf/random.hpp"

namespace drf::cli {

using nlohmann::json;

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;
constexpr int kExitAllFailed = 3;

// Stream offsets for derive_seed(seed, .), one per stochastic consumer.
constexpr std::uint64_t kGridStream = 7;
constexpr std::uint64_t kEstimatorStream = 100;
constexpr std::uint64_t kBootstrapStream = 1000;

double parse_double(const std::string& s, const std::string& what) {
  double v = 0.0;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  if (first < last && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last || !std::isfinite(v))
    throw Error(ErrorCode::invalid_input, what + ": '" + s + "' is not a number");
  return v;
}

std::size_t parse_count(const std::string& s, const std::string& what) {
  std::size_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size())
    throw Error(ErrorCode::invalid_input, what + ": '" + s + "' is not a non-negative integer");
  return v;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) out.push_back(cur);
  return out;
}

std::string within_name(WithinModel w) {
  switch (w) {
    case WithinModel::linear: return "linear";
    case WithinModel::quadratic: return "quadratic";
    case WithinModel::scm: return "scm";
  }
  return "linear";
}

WithinModel parse_within(const std::string& s) {
  if (s == "linear") return WithinModel::linear;
  if (s == "quadratic") return WithinModel::quadratic;
  if (s == "scm") return WithinModel::scm;
  throw Error(ErrorCode::invalid_input, "within model must be linear, quadratic or scm, not '" + s + "'");
}

std::string grid_mode_name(GridMode m) {
  switch (m) {
    case GridMode::automatic: return "auto";
    case GridMode::range: return "range";
    case GridMode::quantiles: return "quantiles";
    case GridMode::theoretical: return "theoretical";
  }
  return "auto";
}

GridMode parse_grid_mode(const std::string& s) {
  for (GridMode m : {GridMode::automatic, GridMode::range, GridMode::quantiles, GridMode::theoretical})
    if (grid_mode_name(m) == s) return m;
  throw Error(ErrorCode::invalid_input, "unknown grid mode '" + s + "'");
}

std::string grid_kind_name(GridKind k) {
  switch (k) {
    case GridKind::equally_spaced_range: return "equally_spaced_range";
    case GridKind::quantile_based: return "quantile_based";
    case GridKind::theoretical_subclass_medians: return "theoretical_subclass_medians";
    case GridKind::levels: return "levels";
  }
  return "";
}

// ---------------------------------------------------------------------------
// Config <-> JSON

json estimator_to_json(const EstimatorConfig& e) {
  json j;
  j["name"] = to_string(e.kind);
  j["label"] = display_name(e);
  j["subclasses"] = e.subclasses;
  j["within"] = within_name(e.within);
  j["adjust_theta"] = e.adjust_theta;
  j["bandwidth"] = e.bandwidth ? json(*e.bandwidth) : json(nullptr);
  j["k"] = e.smooth.k;
  j["overlap_window"] = e.overlap_window;
  j["mc_size"] = e.mc_size ? json(*e.mc_size) : json(nullptr);
  return j;
}

EstimatorConfig estimator_from_json(const json& j) {
  EstimatorConfig e;
  e.kind = parse_estimator(j.at("name").get<std::string>());
  e.subclasses = j.value("subclasses", 0);
  e.within = parse_within(j.value("within", std::string("linear")));
  e.adjust_theta = j.value("adjust_theta", false);
  if (j.contains("bandwidth") && !j["bandwidth"].is_null()) e.bandwidth = j["bandwidth"].get<double>();
  e.smooth.k = j.value("k", 5);
  e.overlap_window = j.value("overlap_window", 0.05);
  if (j.contains("mc_size") && !j["mc_size"].is_null()) e.mc_size = j["mc_size"].get<std::size_t>();
  if (j.contains("label")) {
    const std::string label = j["label"].get<std::string>();
    EstimatorConfig probe = e;
    if (label != display_name(probe)) e.label = label;
  }
  return e;
}

json config_to_json(const RunConfig& c) {
  json j;
  j["subcommand"] = c.subcommand;
  j["data"] = c.data_path ? json(c.data_path->string()) : json(nullptr);
  if (c.study) {
    j["study"] = {{"name", to_string(c.study->study)},
                  {"n", c.study->n},
                  {"seed", c.study->seed},
                  {"sd_reading", c.study->sd_reading}};
  } else {
    j["study"] = nullptr;
  }
  j["columns"] = {{"treatment", c.columns.treatment_col},
                  {"response", c.columns.response_col ? json(*c.columns.response_col) : json(nullptr)},
                  {"weight", c.columns.weight_col ? json(*c.columns.weight_col) : json(nullptr)},
                  {"covariates", c.columns.covariate_cols},
                  {"factors", c.columns.factor_cols}};
  j["design"] = {{"squared", c.design.squared}};
  j["estimators"] = json::array();
  for (const auto& e : c.estimators) j["estimators"].push_back(estimator_to_json(e));
  j["grid"] = {{"mode", grid_mode_name(c.grid.mode)},
               {"lo", c.grid.lo},
               {"hi", c.grid.hi},
               {"points", c.grid.points}};
  j["baseline"] = c.baseline ? json(*c.baseline) : json(nullptr);
  j["boot"] = c.boot;
  j["reps"] = c.reps;
  j["seed"] = c.seed ? json(*c.seed) : json(nullptr);
  j["diagnose"] = {{"cutpoints", c.diagnose.cutpoints},
                   {"blocks", c.diagnose.blocks},
                   {"window", c.diagnose.window}};
  j["out"] = c.out_dir.string();
  return j;
}

RunConfig config_from_json(const json& j) {
  RunConfig c;
  c.subcommand = j.at("subcommand").get<std::string>();
  if (!j.at("data").is_null()) c.data_path = j["data"].get<std::string>();
  if (!j.at("study").is_null()) {
    const json& s = j["study"];
    StudySpec spec = default_spec(parse_study(s.at("name").get<std::string>()));
    spec.n = s.at("n").get<std::size_t>();
    spec.seed = s.at("seed").get<std::uint64_t>();
    spec.sd_reading = s.value("sd_reading", false);
    c.study = spec;
  }
  const json& col = j.at("columns");
  c.columns.treatment_col = col.at("treatment").get<std::string>();
  if (!col.at("response").is_null()) c.columns.response_col = col["response"].get<std::string>();
  if (!col.at("weight").is_null()) c.columns.weight_col = col["weight"].get<std::string>();
  c.columns.covariate_cols = col.at("covariates").get<std::vector<std::string>>();
  c.columns.factor_cols = col.at("factors").get<std::vector<std::string>>();
  c.design.squared = j.at("design").at("squared").get<std::vector<std::string>>();
  for (const auto& e : j.at("estimators")) c.estimators.push_back(estimator_from_json(e));
  const json& g = j.at("grid");
  c.grid.mode = parse_grid_mode(g.at("mode").get<std::string>());
  c.grid.lo = g.at("lo").get<double>();
  c.grid.hi = g.at("hi").get<double>();
  c.grid.points = g.at("points").get<std::size_t>();
  if (!j.at("baseline").is_null()) c.baseline = j["baseline"].get<std::string>();
  c.boot = j.at("boot").get<std::size_t>();
  c.reps = j.at("reps").get<std::size_t>();
  if (!j.at("seed").is_null()) c.seed = j["seed"].get<std::uint64_t>();
  const json& d = j.at("diagnose");
  c.diagnose.cutpoints = d.at("cutpoints").get<std::vector<double>>();
  c.diagnose.blocks = d.at("blocks").get<int>();
  c.diagnose.window = d.at("window").get<double>();
  c.out_dir = j.at("out").get<std::string>();
  return c;
}

json optional_vector(const std::optional<std::vector<double>>& v) { return v ? json(*v) : json(nullptr); }

json bools(const std::vector<bool>& v) {
  json a = json::array();
  for (bool b : v) a.push_back(b);
  return a;
}

json estimate_to_json(const DrfEstimate& e) {
  json j;
  j["grid"] = e.grid.points;
  j["grid_kind"] = grid_kind_name(e.grid.kind);
  j["values"] = e.values;
  j["derivative"] = optional_vector(e.derivative);
  if (e.baseline_t)
    j["baseline"] = {{"t", *e.baseline_t}, {"value", *e.baseline_value}};
  else
    j["baseline"] = nullptr;
  j["se"] = optional_vector(e.se);
  if (e.band)
    j["bands"] = {{"level", e.band->level}, {"lower", e.band->lower}, {"upper", e.band->upper}};
  else
    j["bands"] = nullptr;
  j["flags"] = {{"singular", bools(e.singular)}, {"extrapolated", bools(e.extrapolated)}};
  if (!e.coverage.empty()) j["coverage"] = e.coverage;
  if (e.average_effect) j["average_effect"] = *e.average_effect;
  if (!e.subclass_sizes.empty()) j["subclass_sizes"] = e.subclass_sizes;
  return j;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::io_error, "cannot write " + path.string());
  out << text;
  if (!out) throw Error(ErrorCode::io_error, "write failed: " + path.string());
}

template <class Fn>
void write_with(const std::filesystem::path& path, Fn&& fn) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::io_error, "cannot write " + path.string());
  fn(out);
  if (!out) throw Error(ErrorCode::io_error, "write failed: " + path.string());
}

json error_record(const std::string& code, const std::string& message) {
  return json{{"error", {{"code", code}, {"message", message}}}};
}

// ---------------------------------------------------------------------------
// Run pieces

struct Inputs {
  Dataset data;
  std::size_t dropped = 0;
};

Inputs load_inputs(const RunConfig& c) {
  if (c.data_path) {
    LoadResult r = load_dataset(*c.data_path, c.columns);
    return {std::move(r.data), r.dropped_rows};
  }
  return {generate(*c.study), 0};
}

DesignSpec resolve_design(const RunConfig& c) {
  if (!c.design.squared.empty() || !c.study) return c.design;
  return study_design(c.study->study);
}

Grid resolve_grid(const RunConfig& c, const Dataset& data, const GaussianTreatmentModel& model) {
  switch (c.grid.mode) {
    case GridMode::range: return Grid::range(c.grid.lo, c.grid.hi, c.grid.points);
    case GridMode::quantiles: return Grid::quantile_based(data.treatment(), c.grid.points, c.grid.lo, c.grid.hi);
    case GridMode::theoretical: {
      const auto q = theoretical_quantiles(model, data, equal_probability_cuts(static_cast<int>(c.grid.points)),
                                           default_mc_size(data.n()), derive_seed(*c.seed, kGridStream));
      Grid g{q.subclass_medians, GridKind::theoretical_subclass_medians};
      g.validate();
      return g;
    }
    case GridMode::automatic:
      if (c.study) return study_grid(*c.study, &data);
      return Grid::range(data.treatment().minCoeff(), data.treatment().maxCoeff(), 10);
  }
  throw Error(ErrorCode::invalid_input, "unknown grid mode");
}

std::optional<double> resolve_baseline(const RunConfig& c, const Grid& grid) {
  if (c.baseline) {
    if (*c.baseline == "none") return std::nullopt;
    return parse_double(*c.baseline, "--baseline");
  }
  if (c.study) return study_baseline(c.study->study);
  return grid.points.front();
}

bool needs_seed(const RunConfig& c) {
  if (c.subcommand == "simulate" || c.subcommand == "study") return true;
  if (c.study || c.boot > 0 || c.grid.mode == GridMode::theoretical) return true;
  for (const auto& e : c.estimators)
    if (e.kind == EstimatorKind::cov_adj) return true;
  return false;
}

void write_manifest(const RunConfig& c, json extra) {
  json m;
  m["tool"] = "drf";
  m["manifest_version"] = 1;
  m["config"] = config_to_json(c);
  for (auto& [k, v] : extra.items()) m[k] = v;
  write_text(c.out_dir / "manifest.json", m.dump(2) + "\n");
}

int run_fit(const RunConfig& c, std::ostream& log) {
  Inputs in = load_inputs(c);
  if (in.dropped) log << "dropped " << in.dropped << " incomplete rows\n";
  const Dataset& data = in.data;
  const DesignSpec design = resolve_design(c);
  const GaussianTreatmentModel model = fit_treatment_model(data, design);
  const Grid grid = resolve_grid(c, data, model);
  const std::optional<double> baseline = resolve_baseline(c, grid);

  json results = json::object();
  json errors = json::object();
  std::ostringstream table;
  csv::write_row(table, {"estimator", "point", "t", "value", "derivative", "se", "lower", "upper", "singular",
                         "extrapolated"});
  std::size_t ok = 0;
  for (std::size_t j = 0; j < c.estimators.size(); ++j) {
    EstimatorConfig cfg = c.estimators[j];
    const std::string name = display_name(cfg);
    if (c.seed) cfg.seed = derive_seed(*c.seed, kEstimatorStream + j);
    cfg.smooth.execution = Execution::parallel;
    try {
      DrfEstimate est = run_estimator(cfg, data, model, grid);
      if (baseline) est = relative_drf(est, *baseline);
      json boot = nullptr;
      if (c.boot > 0) {
        BootstrapOptions bo;
        bo.design = design;
        bo.baseline = baseline;
        bo.execution = Execution::parallel;
        const BootstrapResult br =
            bootstrap_drf(data, cfg, grid, c.boot, derive_seed(*c.seed, kBootstrapStream + j), bo);
        attach(est, br);
        boot = {{"replicates", br.replicates}, {"failures", br.failures}, {"seed", br.seed},
                {"failure_reasons", br.failure_reasons}};
      }
      json r = estimate_to_json(est);
      r["estimator"] = to_string(cfg.kind);
      r["bootstrap"] = boot;
      results[name] = r;
      for (std::size_t p = 0; p < grid.size(); ++p) {
        auto num = [&](const std::optional<std::vector<double>>& v) {
          return v ? csv::format_double((*v)[p]) : std::string("NA");
        };
        csv::write_row(table, {name, std::to_string(p), csv::format_double(grid.points[p]),
                               csv::format_double(est.values[p]), num(est.derivative), num(est.se),
                               est.band ? csv::format_double(est.band->lower[p]) : "NA",
                               est.band ? csv::format_double(est.band->upper[p]) : "NA",
                               est.singular[p] ? "1" : "0", est.extrapolated[p] ? "1" : "0"});
      }
      ++ok;
    } catch (const Error& e) {
      log << name << ": " << e.what() << "\n";
      errors[name] = error_record(std::string(to_string(e.code())), e.what())["error"];
    }
  }

  json doc;
  doc["grid"] = grid.points;
  doc["grid_kind"] = grid_kind_name(grid.kind);
  doc["baseline"] = baseline ? json(*baseline) : json(nullptr);
  doc["estimates"] = results;
  doc["errors"] = errors;
  write_text(c.out_dir / "drf.json", doc.dump(2) + "\n");
  write_text(c.out_dir / "drf.csv", table.str());
  write_manifest(c, {{"status", ok == c.estimators.size() ? "ok" : (ok ? "partial" : "failed")},
                     {"outputs", {"drf.json", "drf.csv"}},
                     {"dropped_rows", in.dropped},
                     {"estimator_errors", errors}});
  return ok == 0 ? kExitAllFailed : 0;
}

int run_diagnose(const RunConfig& c, std::ostream& log) {
  Inputs in = load_inputs(c);
  if (in.dropped) log << "dropped " << in.dropped << " incomplete rows\n";
  const Dataset& data = in.data;
  const GaussianTreatmentModel model = fit_treatment_model(data, resolve_design(c));
  const Eigen::VectorXd theta = model.linear_predictor(data);
  const Grid grid = resolve_grid(c, data, model);

  const IvdBalanceReport ivd = balance_ivd(data, theta);
  const HiBalanceReport hi = balance_hi(data, model, c.diagnose.cutpoints, c.diagnose.blocks);
  const OverlapReport overlap = overlap_scatter(data, theta, grid, c.diagnose.window);
  write_with(c.out_dir / "balance_ivd.csv", [&](std::ostream& o) { write_csv(o, ivd); });
  write_with(c.out_dir / "balance_hi.csv", [&](std::ostream& o) { write_csv(o, hi); });
  write_with(c.out_dir / "overlap.csv", [&](std::ostream& o) { write_csv(o, overlap); });
  write_with(c.out_dir / "overlap_pairs.csv", [&](std::ostream& o) { write_pairs_csv(o, overlap); });
  write_manifest(c, {{"status", "ok"},
                     {"outputs", {"balance_ivd.csv", "balance_hi.csv", "overlap.csv", "overlap_pairs.csv"}},
                     {"dropped_rows", in.dropped},
                     {"hi_combination", hi.combination},
                     {"hi_cutpoints", hi.cutpoints}});
  return 0;
}

int run_simulate(const RunConfig& c, std::ostream&) {
  const Dataset data = generate(*c.study);
  const GaussianTreatmentModel model = fit_treatment_model(data, resolve_design(c));
  const Grid grid = resolve_grid(c, data, model);
  const std::optional<double> baseline = resolve_baseline(c, grid);
  write_dataset(c.out_dir / "data.csv", data);
  write_with(c.out_dir / "truth.csv", [&](std::ostream& o) { write_truth_csv(o, *c.study, grid, baseline); });
  write_manifest(c, {{"status", "ok"}, {"outputs", {"data.csv", "truth.csv"}},
                     {"baseline", baseline ? json(*baseline) : json(nullptr)}});
  return 0;
}

int run_study(const RunConfig& c, std::ostream& log) {
  StudySpec spec = *c.study;
  StudySpec first = spec;
  first.seed = derive_seed(*c.seed, 0);
  const Dataset sample = generate(first);
  const GaussianTreatmentModel model = fit_treatment_model(sample, resolve_design(c));
  const Grid grid = resolve_grid(c, sample, model);
  const std::optional<double> baseline = resolve_baseline(c, grid);

  const ReplicationSummary s =
      run_replications(spec, c.estimators, grid, baseline, c.reps, *c.seed, Execution::parallel);
  for (const auto& [name, why] : s.aborted) log << name << ": every replicate failed (" << why << ")\n";

  write_with(c.out_dir / "summary.csv", [&](std::ostream& o) { write_summary_csv(o, s); });
  write_with(c.out_dir / "truth.csv", [&](std::ostream& o) { write_truth_csv(o, spec, grid, baseline); });
  json rows = json::array();
  for (const auto& r : s.rows)
    rows.push_back({{"estimator", r.estimator}, {"point", r.point}, {"t", r.t}, {"truth", r.truth},
                    {"mean", r.mean}, {"sd", r.sd}, {"lower", r.lower}, {"upper", r.upper},
                    {"bias", r.bias}, {"successes", r.successes}, {"failures", r.failures}});
  json doc{{"study", to_string(spec.study)},
           {"reps", s.reps},
           {"seed", s.seed},
           {"grid", grid.points},
           {"baseline", baseline ? json(*baseline) : json(nullptr)},
           {"failures", s.failures},
           {"aborted", s.aborted},
           {"rows", rows}};
  write_text(c.out_dir / "summary.json", doc.dump(2) + "\n");
  write_manifest(c, {{"status", s.aborted.size() == c.estimators.size() ? "failed" : "ok"},
                     {"outputs", {"summary.csv", "summary.json", "truth.csv"}},
                     {"aborted", s.aborted}});
  return s.aborted.size() == c.estimators.size() ? kExitAllFailed : 0;
}

}  // namespace

// ---------------------------------------------------------------------------

GridSpec parse_range(const std::string& text) {
  const auto parts = split(text, ':');
  if (parts.size() != 3) throw Error(ErrorCode::invalid_input, "--grid expects lo:hi:D, got '" + text + "'");
  GridSpec g;
  g.mode = GridMode::range;
  g.lo = parse_double(parts[0], "--grid lo");
  g.hi = parse_double(parts[1], "--grid hi");
  g.points = parse_count(parts[2], "--grid D");
  return g;
}

GridSpec parse_quantiles(const std::string& text) {
  const auto parts = split(text, ':');
  GridSpec g;
  g.mode = GridMode::quantiles;
  g.lo = 0.05;
  g.hi = 0.95;
  if (parts.size() == 1) {
    g.points = parse_count(parts[0], "--grid-quantiles");
  } else if (parts.size() == 3) {
    g.lo = parse_double(parts[0], "--grid-quantiles lo");
    g.hi = parse_double(parts[1], "--grid-quantiles hi");
    g.points = parse_count(parts[2], "--grid-quantiles D");
  } else {
    throw Error(ErrorCode::invalid_input, "--grid-quantiles expects D or lo:hi:D");
  }
  if (!(g.lo >= 0.0 && g.hi <= 1.0 && g.lo < g.hi))
    throw Error(ErrorCode::invalid_input, "--grid-quantiles probabilities must satisfy 0 <= lo < hi <= 1");
  return g;
}

void RunConfig::validate() const {
  static const std::vector<std::string> subs{"fit", "diagnose", "simulate", "study"};
  if (std::find(subs.begin(), subs.end(), subcommand) == subs.end())
    throw Error(ErrorCode::invalid_input, "unknown subcommand '" + subcommand + "'");
  if (data_path.has_value() == study.has_value())
    throw Error(ErrorCode::invalid_input, "give exactly one input: --data FILE or --study NAME");
  if ((subcommand == "simulate" || subcommand == "study") && !study)
    throw Error(ErrorCode::invalid_input, subcommand + " needs --study");
  if (data_path) columns.validate();
  if (study) study->validate();
  if (subcommand == "fit" || subcommand == "study") {
    if (estimators.empty()) throw Error(ErrorCode::invalid_input, "no estimators given");
    if (data_path && !columns.response_col) throw Error(ErrorCode::invalid_input, "fit needs --response");
  }
  if (subcommand == "study" && reps < 1) throw Error(ErrorCode::invalid_input, "study needs --reps >= 1");
  if (boot == 1) throw Error(ErrorCode::invalid_input, "--boot must be 0 or at least 2");
  if (grid.mode != GridMode::automatic && grid.points < 2 && grid.mode != GridMode::theoretical)
    throw Error(ErrorCode::invalid_input, "grid needs at least 2 points");
  if (grid.mode == GridMode::theoretical && grid.points < 2)
    throw Error(ErrorCode::invalid_input, "--grid-theoretical needs at least 2 subclasses");
  if (needs_seed(*this) && !seed) throw Error(ErrorCode::invalid_input, "this run is stochastic: --seed is required");
}

std::string to_json_text(const RunConfig& config) { return config_to_json(config).dump(2); }

RunConfig config_from_json_text(const std::string& text) {
  try {
    json j = json::parse(text);
    if (j.contains("config")) j = j["config"];
    return config_from_json(j);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::parse_error, std::string("manifest: ") + e.what());
  }
}

int run(const RunConfig& config, std::ostream& log) {
  config.validate();
  std::filesystem::create_directories(config.out_dir);
  if (config.subcommand == "fit") return run_fit(config, log);
  if (config.subcommand == "diagnose") return run_diagnose(config, log);
  if (config.subcommand == "simulate") return run_simulate(config, log);
  return run_study(config, log);
}

// ---------------------------------------------------------------------------
// Command line

namespace {

struct RawOptions {
  std::string data, study, treatment = "t", response, weight, covariates, factors, square;
  std::string estimators = "scm-pf", grid, grid_quantiles, baseline, within = "linear", cutpoints;
  std::size_t n = 0, boot = 0, reps = 0, grid_theoretical = 0;
  std::optional<std::uint64_t> seed;
  int subclasses = 0, k = 5, blocks = 5;
  std::optional<double> bandwidth;
  std::optional<std::size_t> mc_size;
  double window = 0.05;
  bool adjust_theta = false, sd_reading = false;
  std::string out = ".";
};

void add_options(CLI::App* app, RawOptions& o) {
  app->add_option("--data", o.data, "Input CSV");
  app->add_option("--study", o.study, "Simulation study instead of --data");
  app->add_option("--n", o.n, "Sample size for --study");
  app->add_option("--sd-reading", o.sd_reading, "Read N(m, v) as standard deviation v")->default_val(false);
  app->add_option("--seed", o.seed, "Seed for every stochastic step");
  app->add_option("--treatment", o.treatment, "Treatment column")->capture_default_str();
  app->add_option("--response", o.response, "Response column");
  app->add_option("--weight", o.weight, "Sampling weight column");
  app->add_option("--covariates", o.covariates, "Comma-separated covariate columns");
  app->add_option("--factors", o.factors, "Covariates to expand into indicators");
  app->add_option("--square", o.square, "Covariates that also enter the treatment model squared");
  app->add_option("--estimators,--estimator", o.estimators,
                  "hi,hi-linear,scm-gps,iw,iw-nw,ivd,scm-pf,cov-adj,cov-adj-cat")
      ->capture_default_str();
  app->add_option("--grid", o.grid, "lo:hi:D, endpoints included");
  app->add_option("--grid-quantiles", o.grid_quantiles, "D or lo:hi:D sample quantiles of T");
  app->add_option("--grid-theoretical", o.grid_theoretical, "S theoretical subclass medians");
  app->add_option("--baseline", o.baseline, "Baseline treatment value or 'none'");
  app->add_option("--boot", o.boot, "Bootstrap replicates");
  app->add_option("--reps", o.reps, "Replications (study)");
  app->add_option("--subclasses", o.subclasses, "Subclasses for ivd / cov-adj");
  app->add_option("--within", o.within, "Within-subclass model: linear, quadratic, scm")->capture_default_str();
  app->add_flag("--adjust-theta", o.adjust_theta, "IvD: adjust for recentred theta within subclasses");
  app->add_option("--bandwidth", o.bandwidth, "IW bandwidth (default rule of thumb)");
  app->add_option("--k", o.k, "Spline basis dimension")->capture_default_str();
  app->add_option("--mc-size", o.mc_size, "Monte Carlo draws for theoretical quantiles");
  app->add_option("--window", o.window, "Overlap neighbourhood half-width (probability)")->capture_default_str();
  app->add_option("--cutpoints", o.cutpoints, "Comma-separated HI balance cutpoints");
  app->add_option("--blocks", o.blocks, "HI balance GPS blocks")->capture_default_str();
  app->add_option("--out", o.out, "Output directory")->capture_default_str();
}

std::vector<std::string> list(const std::string& s) {
  std::vector<std::string> out;
  for (auto& p : split(s, ','))
    if (!p.empty()) out.push_back(p);
  return out;
}

RunConfig to_config(const std::string& sub, const RawOptions& o) {
  RunConfig c;
  c.subcommand = sub;
  if (!o.data.empty()) c.data_path = o.data;
  if (!o.study.empty()) {
    StudySpec spec = default_spec(parse_study(o.study));
    if (o.n) spec.n = o.n;
    spec.seed = o.seed.value_or(0);
    spec.sd_reading = o.sd_reading;
    c.study = spec;
  }
  c.columns.treatment_col = o.treatment;
  if (!o.response.empty()) c.columns.response_col = o.response;
  if (!o.weight.empty()) c.columns.weight_col = o.weight;
  c.columns.covariate_cols = list(o.covariates);
  c.columns.factor_cols = list(o.factors);
  c.design.squared = list(o.square);
  for (const auto& name : list(o.estimators)) {
    EstimatorConfig e;
    e.kind = parse_estimator(name);
    e.subclasses = o.subclasses;
    e.within = parse_within(o.within);
    e.adjust_theta = o.adjust_theta;
    e.bandwidth = o.bandwidth;
    e.smooth.k = o.k;
    e.overlap_window = o.window;
    e.mc_size = o.mc_size;
    c.estimators.push_back(e);
  }
  const int grids = !o.grid.empty() + !o.grid_quantiles.empty() + (o.grid_theoretical > 0);
  if (grids > 1) throw Error(ErrorCode::invalid_input, "give at most one of --grid, --grid-quantiles, --grid-theoretical");
  if (!o.grid.empty()) c.grid = parse_range(o.grid);
  if (!o.grid_quantiles.empty()) c.grid = parse_quantiles(o.grid_quantiles);
  if (o.grid_theoretical) c.grid = GridSpec{GridMode::theoretical, 0.0, 0.0, o.grid_theoretical};
  if (!o.baseline.empty()) c.baseline = o.baseline;
  c.boot = o.boot;
  c.reps = o.reps;
  c.seed = o.seed;
  for (const auto& p : list(o.cutpoints)) c.diagnose.cutpoints.push_back(parse_double(p, "--cutpoints"));
  c.diagnose.blocks = o.blocks;
  c.diagnose.window = o.window;
  c.out_dir = o.out;
  return c;
}

void report_error(const std::filesystem::path& out_dir, const std::string& code, const std::string& message) {
  const std::string record = error_record(code, message).dump();
  std::cerr << record << "\n";
  std::error_code ec;
  if (!out_dir.empty() && std::filesystem::is_directory(out_dir, ec)) {
    std::ofstream f(out_dir / "error.json", std::ios::binary);
    if (f) f << record << "\n";
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dose-response function estimation for continuous treatments"};
  app.require_subcommand(1);
  RawOptions fit_o, diag_o, sim_o, study_o;
  add_options(app.add_subcommand("fit", "Estimate dose-response functions"), fit_o);
  add_options(app.add_subcommand("diagnose", "Balance and overlap diagnostics"), diag_o);
  add_options(app.add_subcommand("simulate", "Generate a simulation dataset"), sim_o);
  add_options(app.add_subcommand("study", "Replicated simulation study"), study_o);
  std::string manifest_path, rerun_out;
  CLI::App* rerun = app.add_subcommand("rerun", "Repeat a run from its manifest.json");
  rerun->add_option("manifest", manifest_path, "manifest.json")->required();
  rerun->add_option("--out", rerun_out, "Override the output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    report_error({}, "usage", e.what());
    return kExitUsage;
  }

  std::filesystem::path out_dir;
  try {
    RunConfig config;
    if (rerun->parsed()) {
      std::ifstream in(manifest_path, std::ios::binary);
      if (!in) throw Error(ErrorCode::io_error, "cannot open " + manifest_path);
      std::stringstream ss;
      ss << in.rdbuf();
      config = config_from_json_text(ss.str());
      if (!rerun_out.empty()) config.out_dir = rerun_out;
    } else {
      for (const auto& [name, opts] : {std::pair{"fit", &fit_o}, std::pair{"diagnose", &diag_o},
                                       std::pair{"simulate", &sim_o}, std::pair{"study", &study_o}})
        if (app.got_subcommand(name)) config = to_config(name, *opts);
    }
    out_dir = config.out_dir;
    return run(config, std::cerr);
  } catch (const Error& e) {
    report_error(out_dir, std::string(to_string(e.code())), e.what());
    return kExitRuntime;
  } catch (const std::exception& e) {
    report_error(out_dir, "internal", e.what());
    return kExitRuntime;
  }
}

}  // namespace drf::cli

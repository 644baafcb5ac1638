// Command-line frontend: simulate single events, calibrate corpora, apply
// the validity filters, generate synthetic corpora, and summarize fit
// results into plot-ready CSV/JSON.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "mergesim/mergesim.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitParse = 2;
constexpr int kExitSim = 3;
constexpr int kExitStrict = 4;
constexpr int kExitAllFailed = 5;

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

mergesim::ModelKind parse_model_or_throw(const std::string& name) {
  const auto kind = mergesim::model_kind_from_string(name);
  if (!kind.has_value()) throw mergesim::ParseError("unknown model: " + name);
  return *kind;
}

mergesim::ModelParams load_params(const std::string& path, mergesim::ModelKind kind) {
  mergesim::ModelParams params = mergesim::default_params(kind);
  if (path.empty()) return params;
  std::ifstream in(path);
  if (!in) throw mergesim::ParseError("cannot open params file: " + path);
  json j;
  try {
    in >> j;
    for (const auto& [key, value] : j.items()) params.values[key] = value.get<double>();
  } catch (const json::exception& ex) {
    throw mergesim::ParseError(std::string("bad params file: ") + ex.what());
  }
  return params;
}

int cmd_simulate(const std::string& event_path, const std::string& model,
                 const std::string& params_path, const std::string& out_path, bool strict,
                 std::optional<double> window_begin, std::optional<double> window_end) {
  mergesim::MergeEvent event;
  mergesim::SimConfig cfg;
  try {
    event = mergesim::load_event(event_path);
    cfg.model = parse_model_or_throw(model);
    cfg.params = load_params(params_path, cfg.model);
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return kExitParse;
  }
  if (strict) {
    const auto violations = mergesim::validate_event(event);
    if (!violations.empty()) {
      for (const auto& v : violations)
        std::cerr << "violation [" << v.category << "] " << v.message << "\n";
      return kExitStrict;
    }
  }
  cfg.t_begin = window_begin;
  cfg.t_end = window_end;

  mergesim::SimResult res;
  try {
    res = mergesim::simulate_event(event, cfg);
  } catch (const std::exception& ex) {
    std::cerr << "simulation failed: " << ex.what() << "\n";
    return kExitSim;
  }

  std::ofstream out(out_path);
  if (!out) {
    std::cerr << "cannot write " << out_path << "\n";
    return kExitSim;
  }
  out << "time,speed_sim,speed_raw,accel,state,fallback\n";
  for (std::size_t i = 0; i < res.times.size(); ++i) {
    out << fmt(res.times[i]) << ',' << fmt(res.ta_speed[i]) << ',' << fmt(res.raw_speed[i])
        << ',' << fmt(res.accel[i]) << ',' << fmt(res.diags[i].state) << ','
        << (res.diags[i].fallback ? 1 : 0) << "\n";
  }
  std::cerr << "wrote " << res.times.size() << " steps to " << out_path << "\n";
  return kExitOk;
}

int cmd_filter(const std::string& corpus_path, const std::string& out_path) {
  mergesim::CorpusLoadResult corpus;
  try {
    corpus = mergesim::load_corpus(corpus_path);
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return kExitParse;
  }
  const mergesim::FilterResult filtered = mergesim::filter_corpus(corpus.events);

  json report;
  report["loaded"] = corpus.events.size();
  report["valid"] = json::array();
  for (const auto& e : filtered.valid) report["valid"].push_back(e.event_id);
  report["rejected"] = json::array();
  for (const auto& [event, violations] : filtered.rejected) {
    json r;
    r["event_id"] = event.event_id;
    for (const auto& v : violations)
      r["violations"].push_back({{"category", v.category}, {"message", v.message}});
    report["rejected"].push_back(r);
  }
  report["tallies"] = json::object();
  for (const auto& [category, count] : filtered.tallies) report["tallies"][category] = count;
  for (const auto& d : corpus.diagnostics)
    report["load_errors"].push_back({{"file", d.file}, {"message", d.message}});

  if (out_path.empty()) {
    std::cout << report.dump(1) << "\n";
  } else {
    std::ofstream out(out_path);
    if (!out) {
      std::cerr << "cannot write " << out_path << "\n";
      return kExitSim;
    }
    out << report.dump(1) << "\n";
  }
  std::cerr << filtered.valid.size() << "/" << corpus.events.size() << " events pass\n";
  return kExitOk;
}

void write_fit_outputs(const mergesim::CorpusFitResult& result, const fs::path& out_dir) {
  fs::create_directories(out_dir);
  {
    std::ofstream out(out_dir / "fits.csv");
    out << "event_id,model,cost,iterations,converged,restarts,params\n";
    for (const auto& fit : result.fits) {
      std::string params;
      for (const auto& [name, value] : fit.fitted_params.values) {
        if (!params.empty()) params += ';';
        params += name + "=" + fmt(value);
      }
      out << fit.event_id << ',' << mergesim::to_string(fit.model_kind) << ','
          << fmt(fit.cost) << ',' << fit.iterations << ',' << (fit.converged ? 1 : 0) << ','
          << fit.restarts_used << ',' << params << "\n";
    }
  }
  {
    std::ofstream out(out_dir / "summary.csv");
    out << "model,n,mean,median,std,q1,q3,min,max\n";
    for (const auto& [kind, st] : result.summaries) {
      out << mergesim::to_string(kind) << ',' << st.n << ',' << fmt(st.mean) << ','
          << fmt(st.median) << ',' << fmt(st.stddev) << ',' << fmt(st.q1) << ','
          << fmt(st.q3) << ',' << fmt(st.min) << ',' << fmt(st.max) << "\n";
    }
  }
  {
    json j;
    for (const auto& [kind, st] : result.summaries) {
      json s = {{"n", st.n},   {"mean", st.mean}, {"median", st.median},
                {"std", st.stddev}, {"q1", st.q1},     {"q3", st.q3},
                {"min", st.min},    {"max", st.max}};
      j["models"][mergesim::to_string(kind)] = s;
    }
    for (const auto& f : result.failures) j["failures"].push_back(f);
    std::ofstream out(out_dir / "summary.json");
    out << j.dump(1) << "\n";
  }
}

int cmd_fit(const std::string& corpus_path, const std::vector<std::string>& model_names,
            std::uint64_t seed, int jobs, const std::string& out_dir) {
  mergesim::CorpusLoadResult corpus;
  std::vector<mergesim::ModelKind> kinds;
  try {
    corpus = mergesim::load_corpus(corpus_path);
    for (const auto& name : model_names) kinds.push_back(parse_model_or_throw(name));
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return kExitParse;
  }
  for (const auto& d : corpus.diagnostics)
    std::cerr << "load error: " << d.file << ": " << d.message << "\n";
  if (corpus.events.empty()) {
    std::cerr << "error: corpus has no loadable events\n";
    return kExitParse;
  }

  mergesim::CorpusFitConfig cfg;
  cfg.seed = seed;
  cfg.jobs = jobs;
  mergesim::CorpusFitResult result;
  try {
    result = mergesim::fit_corpus(corpus.events, kinds, cfg);
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return kExitSim;
  }
  for (const auto& f : result.failures) std::cerr << "fit failed: " << f << "\n";
  write_fit_outputs(result, out_dir);
  std::cerr << result.fits.size() << " fits written to " << out_dir << "\n";
  return result.fits.empty() ? kExitAllFailed : kExitOk;
}

int cmd_generate(const std::string& spec_path, int n, std::uint64_t seed,
                 const std::string& out_dir) {
  mergesim::ScenarioSpec spec;
  try {
    if (!spec_path.empty()) {
      std::ifstream in(spec_path);
      if (!in) throw mergesim::ParseError("cannot open scenario file: " + spec_path);
      json j;
      in >> j;
      spec = mergesim::parse_scenario(j);
    }
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return kExitParse;
  }

  fs::create_directories(out_dir);
  json manifest;
  manifest["generator"] = mergesim::to_string(spec.generator);
  const mergesim::ModelParams params =
      spec.generator_params.value_or(mergesim::default_params(spec.generator));
  for (const auto& [name, value] : params.values) manifest["params"][name] = value;
  manifest["seed"] = seed;
  manifest["count"] = n;

  try {
    for (int i = 0; i < n; ++i) {
      mergesim::ScenarioSpec one = spec;
      char suffix[16];
      std::snprintf(suffix, sizeof(suffix), "%03d", i);
      one.event_id = spec.event_id + "_" + suffix;
      const mergesim::MergeEvent event =
          mergesim::generate_synthetic_event(one, seed + static_cast<std::uint64_t>(i));
      mergesim::save_event(event, fs::path(out_dir) / (one.event_id + ".event.json"));
      manifest["events"].push_back(one.event_id);
    }
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return kExitParse;
  }
  std::ofstream out(fs::path(out_dir) / "manifest.json");
  out << manifest.dump(1) << "\n";
  std::cerr << "wrote " << n << " events to " << out_dir << "\n";
  return kExitOk;
}

int cmd_report(const std::string& fits_csv, const std::string& out_dir) {
  std::ifstream in(fits_csv);
  if (!in) {
    std::cerr << "error: cannot open " << fits_csv << "\n";
    return kExitParse;
  }
  std::string line;
  std::getline(in, line);  // header
  std::map<std::string, std::vector<double>> costs;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::string cell;
    for (char ch : line) {
      if (ch == ',') {
        cells.push_back(cell);
        cell.clear();
      } else {
        cell += ch;
      }
    }
    cells.push_back(cell);
    if (cells.size() < 3) {
      std::cerr << "error: malformed fits csv row\n";
      return kExitParse;
    }
    try {
      costs[cells[1]].push_back(std::stod(cells[2]));
    } catch (const std::exception&) {
      std::cerr << "error: malformed cost in fits csv\n";
      return kExitParse;
    }
  }
  if (costs.empty()) {
    std::cerr << "error: no fit rows\n";
    return kExitParse;
  }
  fs::create_directories(out_dir);
  std::ofstream out(fs::path(out_dir) / "report.csv");
  out << "model,n,mean,median,std,q1,q3,min,max\n";
  for (auto& [model, list] : costs) {
    const mergesim::SummaryStats st = mergesim::summarize_errors(list);
    out << model << ',' << st.n << ',' << fmt(st.mean) << ',' << fmt(st.median) << ','
        << fmt(st.stddev) << ',' << fmt(st.q1) << ',' << fmt(st.q3) << ',' << fmt(st.min)
        << ',' << fmt(st.max) << "\n";
  }
  std::cerr << "report written to " << out_dir << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"merge-reactive car-following models: simulate, fit, filter, generate"};
  app.require_subcommand(1);

  // simulate
  std::string sim_event, sim_model = "MR_IDM", sim_params, sim_out = "sim.csv";
  bool sim_strict = false;
  std::vector<double> sim_window;
  auto* sim = app.add_subcommand("simulate", "roll one event under a model");
  sim->add_option("event", sim_event, "event JSON file")->required();
  sim->add_option("--model", sim_model, "model kind");
  sim->add_option("--params", sim_params, "JSON file of parameter overrides");
  sim->add_option("--out", sim_out, "output CSV path");
  sim->add_option("--window", sim_window, "override evaluation window: begin end")
      ->expected(2);
  sim->add_flag("--strict", sim_strict, "refuse events that fail the validity filters");

  // fit
  std::string fit_corpus_path, fit_out = "fit_out";
  std::vector<std::string> fit_models = {"MR_IDM"};
  std::uint64_t fit_seed = 0;
  int fit_jobs = 1;
  auto* fit = app.add_subcommand("fit", "calibrate models against a corpus");
  fit->add_option("corpus", fit_corpus_path, "corpus directory or event file")->required();
  fit->add_option("--models", fit_models, "model kinds to fit")->delimiter(',');
  fit->add_option("--seed", fit_seed, "optimizer seed");
  fit->add_option("--jobs", fit_jobs, "parallel fit workers");
  fit->add_option("--out", fit_out, "output directory");

  // filter
  std::string filter_corpus_path, filter_out;
  auto* filter = app.add_subcommand("filter", "apply validity filters, emit tallies");
  filter->add_option("corpus", filter_corpus_path, "corpus directory or event file")
      ->required();
  filter->add_option("--out", filter_out, "report JSON path (default: stdout)");

  // generate
  std::string gen_spec, gen_out = "corpus";
  int gen_n = 1;
  std::uint64_t gen_seed = 0;
  auto* gen = app.add_subcommand("generate", "write synthetic merge events");
  gen->add_option("--spec", gen_spec, "scenario JSON (defaults used when omitted)");
  gen->add_option("--n", gen_n, "number of events");
  gen->add_option("--seed", gen_seed, "base seed");
  gen->add_option("--out", gen_out, "output directory");

  // report
  std::string rep_fits, rep_out = "report_out";
  auto* rep = app.add_subcommand("report", "summarize a fits.csv into box-plot data");
  rep->add_option("fits", rep_fits, "fits.csv from a fit run")->required();
  rep->add_option("--out", rep_out, "output directory");

  CLI11_PARSE(app, argc, argv);

  if (sim->parsed()) {
    std::optional<double> wb, we;
    if (sim_window.size() == 2) {
      wb = sim_window[0];
      we = sim_window[1];
    }
    return cmd_simulate(sim_event, sim_model, sim_params, sim_out, sim_strict, wb, we);
  }
  if (fit->parsed()) return cmd_fit(fit_corpus_path, fit_models, fit_seed, fit_jobs, fit_out);
  if (filter->parsed()) return cmd_filter(filter_corpus_path, filter_out);
  if (gen->parsed()) return cmd_generate(gen_spec, gen_n, gen_seed, gen_out);
  if (rep->parsed()) return cmd_report(rep_fits, rep_out);
  return kExitOk;
}

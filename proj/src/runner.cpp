#include "plreg/runner.hpp"

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>
#include <thread>

#include "plreg/csv.hpp"
#include "plreg/errors.hpp"

#ifndef PLREG_VERSION
#define PLREG_VERSION "unknown"
#endif

namespace plreg {

namespace {

// Seed streams of one run; every random draw of a pipeline descends from these.
enum Stream : std::uint64_t { kSplit = 1, kInit = 2, kOptim = 3, kSchedule = 4, kCilData = 5 };

BundleShape shape_for(const ExperimentConfig& c, std::size_t head_width) {
  BundleShape s;
  s.input_dim = c.spec.resolved_input_dim();
  s.dim = c.dim;
  s.num_classes = head_width;
  s.depth = c.depth;
  s.head_input = c.head_input;
  s.use_mask = c.use_mask;
  return s;
}

std::vector<std::string> weight_fields(const ExperimentConfig& c) {
  return {format_number(c.train.weights.w_p1), format_number(c.train.weights.w_p2),
          format_number(c.train.weights.w_lreg)};
}

void append_trace(SeedOutcome& out, const ExperimentConfig& c, const std::string& stage,
                  const std::vector<LossBreakdown>& trace) {
  for (std::size_t e = 0; e < trace.size(); ++e) {
    const LossBreakdown& b = trace[e];
    out.trace_rows.push_back({to_string(c.task), std::to_string(out.seed), stage,
                              std::to_string(e + 1), format_number(b.l_p1), format_number(b.l_p2),
                              format_number(b.l_lreg), format_number(b.l_main),
                              format_number(b.l_plreg), format_number(b.l_final)});
  }
}

void append_gcd_row(SeedOutcome& out, const ExperimentConfig& c, const std::string& domain,
                    const Metrics& m) {
  std::vector<std::string> row{to_string(c.task), c.preset, std::to_string(out.seed), domain,
                               format_number(m.acc_all), format_number(m.acc_known),
                               format_number(m.acc_unknown)};
  for (auto& w : weight_fields(c)) row.push_back(std::move(w));
  out.metrics_rows.push_back(std::move(row));
}

void run_gcd(const ExperimentConfig& c, SeedOutcome& out, TrainRun run) {
  SyntheticSpec spec = c.spec;
  spec.seed = out.seed;
  const TaskSplit split = build_gcd_task(spec, derive_seed(out.seed, kSplit));
  ModelBundle bundle = init_bundle(shape_for(c, spec.num_classes), derive_seed(out.seed, kInit));
  const GcdResult result = train_gcd(split, bundle, run);
  out.metrics = evaluate_gcd(bundle, split);
  append_trace(out, c, "train", result.trace);
  append_gcd_row(out, c, "none", out.metrics);
  out.final_model = std::move(bundle);
}

void run_mdg(const ExperimentConfig& c, SeedOutcome& out, const TrainRun& run) {
  SyntheticSpec spec = c.spec;
  spec.seed = out.seed;
  const std::vector<Sample> samples = generate(spec);
  const std::uint64_t split_seed = derive_seed(out.seed, kSplit);
  auto factory = [&] {
    return init_bundle(shape_for(c, spec.num_classes), derive_seed(out.seed, kInit));
  };
  std::vector<MdgResult> results;
  if (c.held_out_domain) {
    const int d = *c.held_out_domain;
    const TaskSplit split = make_mdg_gcd_splits(samples, spec.num_known, d,
                                                derive_seed(split_seed, static_cast<std::uint64_t>(d)));
    results.push_back(train_mdg_gcd_split(split, factory(), run, d));
  } else {
    results = train_mdg_gcd(samples, spec.num_known, factory, run, split_seed);
  }
  Metrics mean;
  for (const MdgResult& r : results) {
    append_trace(out, c, "domain" + std::to_string(r.held_out_domain), r.trace);
    append_gcd_row(out, c, std::to_string(r.held_out_domain), r.metrics);
    mean.acc_all += r.metrics.acc_all;
    mean.acc_known += r.metrics.acc_known;
    mean.acc_unknown += r.metrics.acc_unknown;
  }
  const double n = static_cast<double>(results.size());
  mean.acc_all /= n;
  mean.acc_known /= n;
  mean.acc_unknown /= n;
  out.metrics = mean;
}

void run_cil(const ExperimentConfig& c, SeedOutcome& out, const TrainRun& run) {
  SyntheticSpec spec = c.spec;
  spec.seed = out.seed;
  const CilSchedule schedule =
      make_cil_schedule(spec, c.sessions, c.style, derive_seed(out.seed, kSchedule));
  const CilData data = build_cil_data(spec, schedule, c.test_per_class, derive_seed(out.seed, kCilData));
  ModelBundle bundle = init_bundle(shape_for(c, schedule.sessions.front().classes.size()),
                                   derive_seed(out.seed, kInit));
  CilResult result = train_cil(schedule, data, bundle, run);
  out.avg_acc = result.metrics.average;
  for (std::size_t i = 0; i < result.metrics.per_session_acc.size(); ++i) {
    std::vector<std::string> row{to_string(c.task), c.preset, std::to_string(out.seed),
                                 std::to_string(i), format_number(result.metrics.per_session_acc[i]),
                                 format_number(result.metrics.average)};
    for (auto& w : weight_fields(c)) row.push_back(std::move(w));
    out.metrics_rows.push_back(std::move(row));
    append_trace(out, c, "session" + std::to_string(i), result.traces[i]);
  }
  out.masks = std::move(result.masks);
  out.final_model = std::move(bundle);
}

void write_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ConfigError("cannot write '" + path.string() + "'");
  os << csv_row(header) << '\n';
  for (const auto& r : rows) os << csv_row(r) << '\n';
}

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void write_manifest(const ExperimentConfig& c, const std::string& command,
                    const std::string& status, const std::vector<std::string>& outputs) {
  std::ofstream os(std::filesystem::path(c.output_dir) / "manifest.txt", std::ios::binary);
  if (!os) throw ConfigError("cannot write manifest in '" + c.output_dir + "'");
  os << "plreg manifest\n"
     << "version: " << version_string() << '\n'
     << "timestamp: " << utc_timestamp() << '\n'
     << "command: " << command << '\n'
     << "status: " << status << '\n'
     << "outputs:";
  for (const auto& o : outputs) os << ' ' << o;
  os << "\nconfig:\n" << serialize_config(c);
}

// Runs job(i) for i in [0, n) on a bounded worker pool; results land by index.
template <class Job>
void parallel_for(std::size_t n, const Job& job) {
  const std::size_t workers = worker_count(n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) job(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::jthread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) job(i);
    });
  }
}

std::string failure_status(const std::vector<SeedOutcome>& outcomes) {
  std::string status;
  for (const SeedOutcome& o : outcomes) {
    if (o.error.empty()) continue;
    status += (status.empty() ? "failed: " : "; ") + std::string("seed ") +
              std::to_string(o.seed) + ": " + o.error;
  }
  return status.empty() ? "ok" : status + " (outputs cover the remaining seeds only)";
}

}  // namespace

SeedOutcome run_seed(const ExperimentConfig& config, std::uint64_t seed) {
  SeedOutcome out;
  out.seed = seed;
  TrainRun run = config.train;
  run.optim.seed = derive_seed(seed, kOptim);
  try {
    switch (config.task) {
      case Task::Gcd:
        run_gcd(config, out, run);
        break;
      case Task::MdgGcd:
        run_mdg(config, out, run);
        break;
      case Task::Cil:
        run_cil(config, out, run);
        break;
    }
  } catch (const std::exception& e) {
    SeedOutcome failed;
    failed.seed = seed;
    failed.error = e.what();
    return failed;
  }
  return out;
}

std::vector<std::string> metrics_header(Task task) {
  if (task == Task::Cil) {
    return {"task", "preset", "seed", "session", "session_acc", "avg_acc", "w_p1", "w_p2",
            "w_lreg"};
  }
  return {"task", "preset", "seed", "held_out_domain", "acc_all", "acc_known", "acc_unknown",
          "w_p1", "w_p2", "w_lreg"};
}

std::vector<std::string> traces_header() {
  return {"task", "seed", "stage", "epoch", "l_p1", "l_p2", "l_lreg", "l_main", "l_plreg",
          "l_final"};
}

std::vector<std::string> masks_header() {
  return {"seed", "session", "dim_index", "normalized_importance", "binarized"};
}

std::size_t worker_count(std::size_t jobs) {
  std::size_t cap = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("PLREG_THREADS"); env && *env) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (*end != '\0' || v < 1) {
      throw ConfigError(std::string("PLREG_THREADS must be a positive integer, got '") + env + "'");
    }
    cap = static_cast<std::size_t>(v);
  }
  return std::max<std::size_t>(1, std::min(cap, jobs));
}

std::string version_string() { return PLREG_VERSION; }

int run(const ExperimentConfig& config, std::ostream& log) {
  config.validate();
  std::vector<SeedOutcome> outcomes(config.seeds.size());
  parallel_for(outcomes.size(), [&](std::size_t i) {
    outcomes[i] = run_seed(config, config.seeds[i]);
  });

  std::filesystem::create_directories(config.output_dir);
  const std::filesystem::path dir(config.output_dir);
  std::vector<std::vector<std::string>> metrics, traces, masks;
  for (const SeedOutcome& o : outcomes) {
    metrics.insert(metrics.end(), o.metrics_rows.begin(), o.metrics_rows.end());
    traces.insert(traces.end(), o.trace_rows.begin(), o.trace_rows.end());
    for (const MaskReport& r : o.masks)
      for (std::size_t d = 0; d < r.normalized.size(); ++d)
        masks.push_back({std::to_string(o.seed), std::to_string(r.session), std::to_string(d),
                         format_number(r.normalized[d]), std::to_string(r.binarized[d])});
    if (!o.error.empty()) log << "seed " << o.seed << " aborted: " << o.error << '\n';
  }
  std::vector<std::string> outputs{"metrics.csv", "traces.csv"};
  write_csv(dir / "metrics.csv", metrics_header(config.task), metrics);
  write_csv(dir / "traces.csv", traces_header(), traces);
  if (config.task == Task::Cil) {
    write_csv(dir / "masks.csv", masks_header(), masks);
    outputs.push_back("masks.csv");
  }
  const std::string status = failure_status(outcomes);
  write_manifest(config, "run", status, outputs);
  log << "wrote " << metrics.size() << " metric rows to " << (dir / "metrics.csv").string()
      << " (status: " << status << ")\n";
  return status == "ok" ? 0 : 1;
}

int sweep(const ExperimentConfig& config, const std::string& axis,
          const std::vector<double>& values, std::ostream& log) {
  if (values.empty()) throw UsageError("sweep needs at least one value");
  std::vector<ExperimentConfig> points;
  for (double v : values) {
    ExperimentConfig c = config;
    set_axis(c, axis, v);
    c.validate();
    points.push_back(std::move(c));
  }
  const std::size_t n_seeds = config.seeds.size();
  std::vector<SeedOutcome> outcomes(points.size() * n_seeds);
  parallel_for(outcomes.size(), [&](std::size_t i) {
    outcomes[i] = run_seed(points[i / n_seeds], config.seeds[i % n_seeds]);
  });

  const bool cil = config.task == Task::Cil;
  std::vector<std::string> header{"axis", "value", "seed"};
  if (cil) {
    header.push_back("avg_acc");
  } else {
    header.insert(header.end(), {"acc_all", "acc_known", "acc_unknown"});
  }
  std::vector<std::vector<std::string>> rows;
  for (std::size_t p = 0; p < points.size(); ++p) {
    const std::string value = format_number(values[p]);
    std::vector<double> sum(cil ? 1 : 3, 0.0);
    std::size_t ok = 0;
    for (std::size_t s = 0; s < n_seeds; ++s) {
      const SeedOutcome& o = outcomes[p * n_seeds + s];
      if (!o.error.empty()) {
        log << axis << "=" << value << " seed " << o.seed << " aborted: " << o.error << '\n';
        continue;
      }
      const std::vector<double> v =
          cil ? std::vector<double>{o.avg_acc}
              : std::vector<double>{o.metrics.acc_all, o.metrics.acc_known, o.metrics.acc_unknown};
      std::vector<std::string> row{axis, value, std::to_string(o.seed)};
      for (std::size_t k = 0; k < v.size(); ++k) {
        row.push_back(format_number(v[k]));
        sum[k] += v[k];
      }
      rows.push_back(std::move(row));
      ++ok;
    }
    if (ok == 0) continue;
    std::vector<std::string> summary{axis, value, "mean"};
    for (double s : sum) summary.push_back(format_number(s / static_cast<double>(ok)));
    rows.push_back(std::move(summary));
  }

  std::filesystem::create_directories(config.output_dir);
  write_csv(std::filesystem::path(config.output_dir) / "sweep.csv", header, rows);
  std::string command = "sweep axis=" + axis + " values=";
  for (std::size_t i = 0; i < values.size(); ++i)
    command += (i ? "," : "") + format_number(values[i]);
  const std::string status = failure_status(outcomes);
  write_manifest(config, command, status, {"sweep.csv"});
  log << "wrote " << rows.size() << " sweep rows to "
      << (std::filesystem::path(config.output_dir) / "sweep.csv").string() << " (status: " << status
      << ")\n";
  return status == "ok" ? 0 : 1;
}

int export_masks(const std::filesystem::path& run_dir, std::ostream& log) {
  const ExperimentConfig config = parse_config(run_dir / "manifest.txt");
  if (config.task != Task::Cil) {
    throw UsageError("export-masks: run in '" + run_dir.string() + "' is a " +
                     to_string(config.task) + " run; only cil runs record masks");
  }
  std::ifstream in(run_dir / "masks.csv");
  if (!in) throw ConfigError("export-masks: no masks.csv in '" + run_dir.string() + "'");
  std::string line;
  std::getline(in, line);
  if (split(line, ',') != masks_header()) {
    throw ConfigError("export-masks: unexpected masks.csv header '" + line + "'");
  }
  // (seed, session) -> per-dim values, kept in file order
  std::vector<std::pair<std::string, std::string>> order;
  std::map<std::pair<std::string, std::string>, std::pair<std::vector<std::string>, std::vector<std::string>>> cells;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto f = split(line, ',');
    if (f.size() != 5) {
      throw ConfigError("export-masks: masks.csv line " + std::to_string(line_no) +
                        " has " + std::to_string(f.size()) + " fields");
    }
    const auto key = std::make_pair(f[0], f[1]);
    auto [it, inserted] = cells.try_emplace(key);
    if (inserted) order.push_back(key);
    it->second.first.push_back(f[3]);
    it->second.second.push_back(f[4]);
  }
  std::vector<std::string> header{"seed", "session", "view"};
  for (std::size_t d = 0; d < config.dim; ++d) header.push_back("d" + std::to_string(d));
  std::vector<std::vector<std::string>> rows;
  for (const auto& key : order) {
    const auto& [norm, bin] = cells.at(key);
    if (norm.size() != config.dim) {
      throw ConfigError("export-masks: seed " + key.first + " session " + key.second + " has " +
                        std::to_string(norm.size()) + " dims, expected " +
                        std::to_string(config.dim));
    }
    std::vector<std::string> a{key.first, key.second, "normalized"};
    a.insert(a.end(), norm.begin(), norm.end());
    std::vector<std::string> b{key.first, key.second, "binarized"};
    b.insert(b.end(), bin.begin(), bin.end());
    rows.push_back(std::move(a));
    rows.push_back(std::move(b));
  }
  write_csv(run_dir / "masks_heatmap.csv", header, rows);
  log << "wrote " << rows.size() << " rows to " << (run_dir / "masks_heatmap.csv").string() << '\n';
  return 0;
}

}  // namespace plreg

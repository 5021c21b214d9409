#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "ath/common.hpp"
#include "ath/data.hpp"
#include "ath/diagnostics.hpp"
#include "ath/graph.hpp"
#include "ath/model.hpp"
#include "ath/optimizer.hpp"
#include "ath/retrieval.hpp"

namespace ath::cli {

inline constexpr const char* kVersion = "0.1.0";

/// Resolved settings of one command invocation. The manifest written next to
/// every training run is exactly this struct in key=value form, so a run can
/// be reproduced with `train --config <manifest>`.
struct RunConfig {
  std::string source;
  std::string target;
  std::string model;
  bool use_synth = false;
  Index synth_c = 2;
  Index synth_ns = 40;
  Index synth_nt = 40;
  Index synth_dlatent = 2;
  Index synth_ds = 4;
  Index synth_dt = 4;
  double synth_noise = 0.1;
  Variant variant = Variant::U;
  Index r = 32;
  // Variant-dependent weights stay unset (NaN) until resolve_defaults().
  double alpha_s = std::numeric_limits<double>::quiet_NaN();
  double alpha_t = std::numeric_limits<double>::quiet_NaN();
  double beta_s = std::numeric_limits<double>::quiet_NaN();
  double beta_t = std::numeric_limits<double>::quiet_NaN();
  double lambda = std::numeric_limits<double>::quiet_NaN();
  Index eta_bipartite = 10;
  Index eta_knn_s = 10;
  Index eta_knn_t = 10;
  Index max_iters = 10;
  double ridge = 1e-8;
  double rel_tol = 1e-5;
  Index kernel_ms = 0;
  Index kernel_mt = 0;
  double sigma = 0.0;
  std::uint64_t seed = 0;
  Index query_count = 0;  // 0 = auto (max(1, n_t / 5))
  Direction direction = Direction::cross_domain;
  std::string format = "auto";  // auto | text | binary
  std::string out_dir = "ath_out";
  bool standardize = false;
  bool trace = false;
  bool pr_curve = false;
  bool graph_dump = false;

  void resolve_defaults() {
    const HyperParams d = HyperParams::defaults_for(variant);
    if (std::isnan(alpha_s)) alpha_s = d.alpha_s;
    if (std::isnan(alpha_t)) alpha_t = d.alpha_t;
    if (std::isnan(beta_s)) beta_s = d.beta_s;
    if (std::isnan(beta_t)) beta_t = d.beta_t;
    if (std::isnan(lambda)) lambda = d.lambda;
  }

  HyperParams hyper_params() const {
    HyperParams hp;
    hp.alpha_s = alpha_s;
    hp.alpha_t = alpha_t;
    hp.beta_s = beta_s;
    hp.beta_t = beta_t;
    hp.lambda = lambda;
    hp.eta_bipartite = eta_bipartite;
    hp.eta_knn_s = eta_knn_s;
    hp.eta_knn_t = eta_knn_t;
    hp.max_iters = max_iters;
    hp.ridge = ridge;
    hp.rel_tol = rel_tol;
    hp.r = r;
    return hp;
  }

  std::optional<KernelSpec> kernel_spec() const {
    if (variant != Variant::K) return std::nullopt;
    return KernelSpec{kernel_ms, kernel_mt, sigma};
  }

  bool operator==(const RunConfig&) const = default;
};

namespace detail {

inline std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline double parse_double(const std::string& key, const std::string& value) {
  char* end = nullptr;
  const double v = std::strtod(value.c_str(), &end);
  if (end == value.c_str() || *end != '\0')
    throw ValidationError("bad numeric value for config key " + key + ": " + value);
  return v;
}

inline long long parse_int(const std::string& key, const std::string& value) {
  char* end = nullptr;
  const long long v = std::strtoll(value.c_str(), &end, 10);
  if (end == value.c_str() || *end != '\0')
    throw ValidationError("bad integer value for config key " + key + ": " + value);
  return v;
}

inline bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "0" || value == "false") return false;
  if (value == "1" || value == "true") return true;
  throw ValidationError("bad boolean value for config key " + key + ": " + value);
}

inline std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r\n");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r\n");
  return s.substr(begin, end - begin + 1);
}

}  // namespace detail

inline std::string direction_name(Direction d) {
  return d == Direction::cross_domain ? "cross_domain" : "within_target";
}

inline Direction direction_from_name(const std::string& name) {
  if (name == "cross_domain") return Direction::cross_domain;
  if (name == "within_target") return Direction::within_target;
  throw ValidationError("unknown direction: " + name);
}

/// Applies one key=value pair. Unknown keys are rejected.
inline void apply_config_entry(RunConfig& cfg, const std::string& key,
                               const std::string& value) {
  using detail::parse_bool;
  using detail::parse_double;
  using detail::parse_int;
  if (key == "source") cfg.source = value;
  else if (key == "target") cfg.target = value;
  else if (key == "model") cfg.model = value;
  else if (key == "use_synth") cfg.use_synth = parse_bool(key, value);
  else if (key == "synth_c") cfg.synth_c = parse_int(key, value);
  else if (key == "synth_ns") cfg.synth_ns = parse_int(key, value);
  else if (key == "synth_nt") cfg.synth_nt = parse_int(key, value);
  else if (key == "synth_dlatent") cfg.synth_dlatent = parse_int(key, value);
  else if (key == "synth_ds") cfg.synth_ds = parse_int(key, value);
  else if (key == "synth_dt") cfg.synth_dt = parse_int(key, value);
  else if (key == "synth_noise") cfg.synth_noise = parse_double(key, value);
  else if (key == "variant") {
    if (value.size() != 1) throw ValidationError("unknown variant: " + value);
    cfg.variant = variant_from_tag(value[0]);
  } else if (key == "r") cfg.r = parse_int(key, value);
  else if (key == "alpha_s") cfg.alpha_s = parse_double(key, value);
  else if (key == "alpha_t") cfg.alpha_t = parse_double(key, value);
  else if (key == "beta_s") cfg.beta_s = parse_double(key, value);
  else if (key == "beta_t") cfg.beta_t = parse_double(key, value);
  else if (key == "lambda") cfg.lambda = parse_double(key, value);
  else if (key == "eta_bipartite") cfg.eta_bipartite = parse_int(key, value);
  else if (key == "eta_knn_s") cfg.eta_knn_s = parse_int(key, value);
  else if (key == "eta_knn_t") cfg.eta_knn_t = parse_int(key, value);
  else if (key == "max_iters") cfg.max_iters = parse_int(key, value);
  else if (key == "ridge") cfg.ridge = parse_double(key, value);
  else if (key == "rel_tol") cfg.rel_tol = parse_double(key, value);
  else if (key == "kernel_ms") cfg.kernel_ms = parse_int(key, value);
  else if (key == "kernel_mt") cfg.kernel_mt = parse_int(key, value);
  else if (key == "sigma") cfg.sigma = parse_double(key, value);
  else if (key == "seed") cfg.seed = static_cast<std::uint64_t>(parse_int(key, value));
  else if (key == "query_count") cfg.query_count = parse_int(key, value);
  else if (key == "direction") cfg.direction = direction_from_name(value);
  else if (key == "format") {
    if (value != "auto" && value != "text" && value != "binary")
      throw ValidationError("unknown format: " + value);
    cfg.format = value;
  } else if (key == "out_dir") cfg.out_dir = value;
  else if (key == "standardize") cfg.standardize = parse_bool(key, value);
  else if (key == "trace") cfg.trace = parse_bool(key, value);
  else if (key == "pr_curve") cfg.pr_curve = parse_bool(key, value);
  else if (key == "graph_dump") cfg.graph_dump = parse_bool(key, value);
  else throw ValidationError("unknown config key: " + key);
}

/// Flat key=value file; '#' starts a comment line.
inline RunConfig parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("config file does not exist or is unreadable: " + path);
  RunConfig cfg;
  std::string line;
  while (std::getline(in, line)) {
    const std::string trimmed = detail::trim(line);
    if (trimmed.empty() || trimmed[0] == '#') continue;
    const auto eq = trimmed.find('=');
    if (eq == std::string::npos)
      throw ValidationError("malformed config line (expected key=value): " + trimmed);
    apply_config_entry(cfg, detail::trim(trimmed.substr(0, eq)),
                       detail::trim(trimmed.substr(eq + 1)));
  }
  return cfg;
}

inline std::string serialize_config(const RunConfig& cfg) {
  using detail::format_double;
  std::ostringstream out;
  out << "# ath " << kVersion << '\n';
  out << "# eigen " << EIGEN_WORLD_VERSION << '.' << EIGEN_MAJOR_VERSION << '.'
      << EIGEN_MINOR_VERSION << '\n';
  out << "source=" << cfg.source << '\n';
  out << "target=" << cfg.target << '\n';
  out << "model=" << cfg.model << '\n';
  out << "use_synth=" << (cfg.use_synth ? 1 : 0) << '\n';
  out << "synth_c=" << cfg.synth_c << '\n';
  out << "synth_ns=" << cfg.synth_ns << '\n';
  out << "synth_nt=" << cfg.synth_nt << '\n';
  out << "synth_dlatent=" << cfg.synth_dlatent << '\n';
  out << "synth_ds=" << cfg.synth_ds << '\n';
  out << "synth_dt=" << cfg.synth_dt << '\n';
  out << "synth_noise=" << format_double(cfg.synth_noise) << '\n';
  out << "variant=" << variant_tag(cfg.variant) << '\n';
  out << "r=" << cfg.r << '\n';
  out << "alpha_s=" << format_double(cfg.alpha_s) << '\n';
  out << "alpha_t=" << format_double(cfg.alpha_t) << '\n';
  out << "beta_s=" << format_double(cfg.beta_s) << '\n';
  out << "beta_t=" << format_double(cfg.beta_t) << '\n';
  out << "lambda=" << format_double(cfg.lambda) << '\n';
  out << "eta_bipartite=" << cfg.eta_bipartite << '\n';
  out << "eta_knn_s=" << cfg.eta_knn_s << '\n';
  out << "eta_knn_t=" << cfg.eta_knn_t << '\n';
  out << "max_iters=" << cfg.max_iters << '\n';
  out << "ridge=" << format_double(cfg.ridge) << '\n';
  out << "rel_tol=" << format_double(cfg.rel_tol) << '\n';
  out << "kernel_ms=" << cfg.kernel_ms << '\n';
  out << "kernel_mt=" << cfg.kernel_mt << '\n';
  out << "sigma=" << format_double(cfg.sigma) << '\n';
  out << "seed=" << cfg.seed << '\n';
  out << "query_count=" << cfg.query_count << '\n';
  out << "direction=" << direction_name(cfg.direction) << '\n';
  out << "format=" << cfg.format << '\n';
  out << "out_dir=" << cfg.out_dir << '\n';
  out << "standardize=" << (cfg.standardize ? 1 : 0) << '\n';
  out << "trace=" << (cfg.trace ? 1 : 0) << '\n';
  out << "pr_curve=" << (cfg.pr_curve ? 1 : 0) << '\n';
  out << "graph_dump=" << (cfg.graph_dump ? 1 : 0) << '\n';
  return out.str();
}

inline void write_manifest(const std::string& path, const RunConfig& cfg) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << serialize_config(cfg);
  if (!out) throw IoError("write failure: " + path);
}

namespace detail {

inline MatrixFormat resolve_format(const std::string& format, const std::string& path) {
  if (format == "text") return MatrixFormat::text;
  if (format == "binary") return MatrixFormat::binary;
  return detect_format(path);
}

inline Subtask subtask_for(Index d_s, Index d_t, Direction direction) {
  if (direction == Direction::within_target)
    return d_s == d_t ? Subtask::HoSDR : Subtask::HeSDR;
  return d_s == d_t ? Subtask::HoCDR : Subtask::HeCDR;
}

/// Loads or synthesizes the task and resolves query_count in the config.
inline GitrTask load_task(RunConfig& cfg) {
  if (cfg.use_synth) {
    SynthSpec spec;
    spec.c = cfg.synth_c;
    spec.n_s = cfg.synth_ns;
    spec.n_t = cfg.synth_nt;
    spec.d_latent = cfg.synth_dlatent;
    spec.d_s = cfg.synth_ds;
    spec.d_t = cfg.synth_dt;
    spec.noise_sigma = cfg.synth_noise;
    spec.seed = cfg.seed;
    spec.query_count = cfg.query_count;
    GitrTask task = generate_synthetic_gitr(spec);
    task.subtask = subtask_for(task.source.dim(), task.target.dim(), cfg.direction);
    cfg.query_count = task.query_count;
    if (cfg.standardize) {
      standardize_features(task.source);
      standardize_features(task.target);
    }
    return task;
  }
  if (cfg.source.empty() || cfg.target.empty())
    throw ValidationError("source and target dataset paths are required (or use_synth=1)");
  GitrTask task;
  task.source = load_dataset(cfg.source, resolve_format(cfg.format, cfg.source),
                             DomainId::source);
  task.target = load_dataset(cfg.target, resolve_format(cfg.format, cfg.target),
                             DomainId::target);
  task.subtask = subtask_for(task.source.dim(), task.target.dim(), cfg.direction);
  if (cfg.query_count <= 0) cfg.query_count = std::max<Index>(1, task.target.size() / 5);
  task.query_count = cfg.query_count;
  task.validate();
  if (cfg.standardize) {
    standardize_features(task.source);
    standardize_features(task.target);
  }
  return task;
}

inline std::filesystem::path ensure_out_dir(const RunConfig& cfg) {
  std::filesystem::path dir(cfg.out_dir);
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory: " + cfg.out_dir);
  return dir;
}

}  // namespace detail

/// gen-synth: writes the two generated dataset files plus a task manifest
/// that train/eval/diagnose can consume directly via --config.
inline void run_gen_synth(RunConfig cfg) {
  cfg.resolve_defaults();
  cfg.use_synth = true;
  const auto dir = detail::ensure_out_dir(cfg);
  const GitrTask task = detail::load_task(cfg);

  const MatrixFormat fmt = cfg.format == "text" ? MatrixFormat::text : MatrixFormat::binary;
  const char* ext = fmt == MatrixFormat::text ? ".txt" : ".athm";
  const auto source_path = dir / (std::string("source") + ext);
  const auto target_path = dir / (std::string("target") + ext);
  save_dataset(source_path.string(), task.source, fmt);
  save_dataset(target_path.string(), task.target, fmt);

  // The manifest points at the written files, so it feeds train directly.
  RunConfig manifest = cfg;
  manifest.use_synth = false;
  manifest.source = source_path.string();
  manifest.target = target_path.string();
  manifest.format = fmt == MatrixFormat::text ? "text" : "binary";
  manifest.standardize = false;  // the written files already carry it
  write_manifest((dir / "task.manifest").string(), manifest);

  std::cout << "wrote " << source_path.string() << " (" << task.source.dim() << "x"
            << task.source.size() << "), " << target_path.string() << " ("
            << task.target.dim() << "x" << task.target.size() << "), "
            << (dir / "task.manifest").string() << "\n";
}

/// train: splits the query set off the target domain, trains on the rest,
/// and writes model.athf, trace.csv and manifest.txt into out_dir.
inline void run_train(RunConfig cfg) {
  cfg.resolve_defaults();
  GitrTask task = detail::load_task(cfg);
  const auto dir = detail::ensure_out_dir(cfg);

  auto [query, rest] = split_query(task.target, task.query_count, cfg.seed);
  (void)query;
  GitrTask train_task;
  train_task.subtask = task.subtask;
  train_task.source = task.source;
  train_task.target = std::move(rest);
  train_task.query_count = cfg.query_count;

  struct TraceRow {
    int iter;
    ObjectiveTerms terms;
    double gamma;
  };
  std::vector<TraceRow> rows;
  const HyperParams hp = cfg.hyper_params();
  TrainOptions options;
  options.on_iteration = [&](int iter, const TrainState& state) {
    rows.push_back({iter, objective_terms(state, hp), state.bipartite.gamma});
    if (cfg.trace) {
      const auto& row = rows.back();
      std::cout << iter << ',' << row.terms.total << ',' << row.terms.t1 << ','
                << row.terms.t2 << ',' << row.terms.t3 << ',' << row.gamma << '\n';
    }
  };
  const TrainState state = train(train_task, hp, cfg.variant, cfg.seed, options,
                                 cfg.kernel_spec());

  const auto model_path = dir / "model.athf";
  save_model(model_path.string(), state.model);
  write_manifest((dir / "manifest.txt").string(), cfg);

  {
    std::ofstream trace_out(dir / "trace.csv");
    if (!trace_out) throw IoError("cannot open for writing: " + (dir / "trace.csv").string());
    trace_out << "iter,J,T1,T2,T3,gamma\n";
    trace_out << std::setprecision(std::numeric_limits<double>::max_digits10);
    for (const auto& row : rows)
      trace_out << row.iter << ',' << row.terms.total << ',' << row.terms.t1 << ','
                << row.terms.t2 << ',' << row.terms.t3 << ',' << row.gamma << '\n';
  }

  if (cfg.graph_dump) {
    std::ofstream gs(dir / "graph_source.txt");
    dump_graph_triplets(gs, state.graph_s.weights);
    std::ofstream gt(dir / "graph_target.txt");
    dump_graph_triplets(gt, state.graph_t.weights);
  }

  std::cout << "wrote " << model_path.string() << " (J = "
            << state.objective_trace.back() << " after "
            << state.objective_trace.size() - 1 << " iterations)\n";
}

/// eval: encodes the query split and the database, ranks by asymmetric
/// Hamming distance, and prints the MAP with four decimals.
inline void run_eval(RunConfig cfg) {
  cfg.resolve_defaults();
  if (cfg.model.empty()) throw ValidationError("eval requires a model path");
  const HashModel model = load_model(cfg.model);
  GitrTask task = detail::load_task(cfg);

  const RetrievalResult result = run_gitr_retrieval(model, task, cfg.direction, cfg.seed);
  if (!result.has_relevance())
    throw ValidationError("evaluation requires labels in the query and database sets");
  const double map = mean_average_precision(result);
  std::printf("MAP=%.4f\n", map);

  if (cfg.pr_curve) {
    const auto dir = detail::ensure_out_dir(cfg);
    {
      std::ofstream out(dir / "pr.csv");
      if (!out) throw IoError("cannot open for writing: " + (dir / "pr.csv").string());
      out << "recall,precision\n";
      for (const auto& [recall, precision] : precision_recall_curve(result, 101))
        out << recall << ',' << precision << '\n';
    }
    {
      std::ofstream out(dir / "ap.csv");
      if (!out) throw IoError("cannot open for writing: " + (dir / "ap.csv").string());
      out << "query_index,ap\n";
      const auto aps = per_query_average_precision(result);
      for (std::size_t i = 0; i < aps.size(); ++i) out << i << ',' << aps[i] << '\n';
    }
  }
}

/// diagnose: positive-transfer trace as "iter,accuracy,objective" CSV.
inline void run_diagnose(RunConfig cfg) {
  cfg.resolve_defaults();
  GitrTask task = detail::load_task(cfg);
  const auto dir = detail::ensure_out_dir(cfg);

  auto [query, rest] = split_query(task.target, task.query_count, cfg.seed);
  (void)query;
  GitrTask train_task;
  train_task.subtask = task.subtask;
  train_task.source = task.source;
  train_task.target = std::move(rest);
  train_task.query_count = cfg.query_count;

  const TransferTrace trace = trace_transfer(train_task, cfg.hyper_params(), cfg.variant,
                                             cfg.seed, cfg.kernel_spec());
  const auto csv_path = dir / "transfer.csv";
  std::ofstream out(csv_path);
  if (!out) throw IoError("cannot open for writing: " + csv_path.string());
  out << "iter,accuracy,objective\n";
  out << std::setprecision(std::numeric_limits<double>::max_digits10);
  for (std::size_t i = 0; i < trace.accuracy_per_iter.size(); ++i)
    out << i << ',' << trace.accuracy_per_iter[i] << ',' << trace.objective_per_iter[i]
        << '\n';
  std::cout << "wrote " << csv_path.string() << " (" << trace.accuracy_per_iter.size()
            << " rows)\n";
}

struct DumpGraphConfig {
  std::string input;
  std::string kind = "knn";  // knn | semantic
  Index eta = 10;
  std::string format = "auto";
  std::string out;  // empty = stdout
};

/// dump-graph: builds one within-domain graph and dumps "i j w" triplets.
inline void run_dump_graph(const DumpGraphConfig& cfg) {
  if (cfg.input.empty()) throw ValidationError("dump-graph requires an input dataset");
  const DomainDataset data =
      load_dataset(cfg.input, detail::resolve_format(cfg.format, cfg.input));
  AffinityGraph graph;
  if (cfg.kind == "knn") {
    graph = build_knn_graph(data, cfg.eta);
  } else if (cfg.kind == "semantic") {
    graph = build_semantic_graph(data);
  } else {
    throw ValidationError("unknown graph kind: " + cfg.kind);
  }
  if (cfg.out.empty()) {
    dump_graph_triplets(std::cout, graph.weights);
  } else {
    std::ofstream out(cfg.out);
    if (!out) throw IoError("cannot open for writing: " + cfg.out);
    dump_graph_triplets(out, graph.weights);
  }
}

}  // namespace ath::cli

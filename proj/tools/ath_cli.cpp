// Command-line front end: gen-synth, train, eval, diagnose, dump-graph.
// Exit codes: 0 success, 1 internal error, 2 usage/validation, 3 I/O.

#include <functional>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ath/ath.hpp"
#include "ath/cli.hpp"

namespace {

using ath::cli::RunConfig;

/// Registers the shared config options on a subcommand. Option values land
/// in `flags`; appliers copy only explicitly-passed flags onto the final
/// config, so command-line flags override config-file values.
struct ConfigBinder {
  RunConfig flags;
  std::string config_path;
  std::string variant_name = "U";
  std::string direction_name = "cross_domain";
  std::vector<std::function<void(RunConfig&)>> appliers;

  template <typename T>
  void bind(CLI::App* cmd, const std::string& name, T& field, T RunConfig::*member,
            const std::string& help) {
    auto* opt = cmd->add_option(name, field, help);
    appliers.push_back([opt, member, &field](RunConfig& cfg) {
      if (opt->count() > 0) cfg.*member = field;
    });
  }

  void bind_flag(CLI::App* cmd, const std::string& name, bool RunConfig::*member,
                 const std::string& help) {
    auto* opt = cmd->add_flag(name, help);
    appliers.push_back([opt, member](RunConfig& cfg) {
      if (opt->count() > 0) cfg.*member = true;
    });
  }

  void add_config(CLI::App* cmd) {
    cmd->add_option("--config", config_path, "key=value config file; flags override it");
  }

  void add_task_inputs(CLI::App* cmd) {
    bind(cmd, "--source", flags.source, &RunConfig::source, "source dataset file");
    bind(cmd, "--target", flags.target, &RunConfig::target, "target dataset file");
    auto* opt = cmd->add_option("--format", flags.format, "dataset format: auto|text|binary")
                    ->check(CLI::IsMember({"auto", "text", "binary"}));
    appliers.push_back([opt, this](RunConfig& cfg) {
      if (opt->count() > 0) cfg.format = flags.format;
    });
  }

  void add_synth(CLI::App* cmd) {
    bind_flag(cmd, "--use-synth", &RunConfig::use_synth, "generate the task instead of loading files");
    bind(cmd, "--synth-c", flags.synth_c, &RunConfig::synth_c, "number of classes");
    bind(cmd, "--synth-ns", flags.synth_ns, &RunConfig::synth_ns, "source sample count");
    bind(cmd, "--synth-nt", flags.synth_nt, &RunConfig::synth_nt, "target sample count");
    bind(cmd, "--synth-dlatent", flags.synth_dlatent, &RunConfig::synth_dlatent, "latent dimension");
    bind(cmd, "--synth-ds", flags.synth_ds, &RunConfig::synth_ds, "source feature dimension");
    bind(cmd, "--synth-dt", flags.synth_dt, &RunConfig::synth_dt, "target feature dimension");
    bind(cmd, "--synth-noise", flags.synth_noise, &RunConfig::synth_noise, "isotropic noise sigma");
  }

  void add_hyper(CLI::App* cmd) {
    auto* vopt = cmd->add_option("--variant", variant_name, "ATH variant: U|M|S|K")
                     ->check(CLI::IsMember({"U", "M", "S", "K"}));
    appliers.push_back([vopt, this](RunConfig& cfg) {
      if (vopt->count() > 0) cfg.variant = ath::variant_from_tag(variant_name[0]);
    });
    bind(cmd, "--r", flags.r, &RunConfig::r, "code length");
    bind(cmd, "--alpha_s", flags.alpha_s, &RunConfig::alpha_s, "source fit weight");
    bind(cmd, "--alpha_t", flags.alpha_t, &RunConfig::alpha_t, "target fit weight");
    bind(cmd, "--beta_s", flags.beta_s, &RunConfig::beta_s, "source structure weight");
    bind(cmd, "--beta_t", flags.beta_t, &RunConfig::beta_t, "target structure weight");
    bind(cmd, "--lambda", flags.lambda, &RunConfig::lambda, "cross-domain weight");
    bind(cmd, "--eta_bipartite", flags.eta_bipartite, &RunConfig::eta_bipartite,
         "target nonzeros per bipartite row");
    bind(cmd, "--eta_knn_s", flags.eta_knn_s, &RunConfig::eta_knn_s, "source knn neighbors");
    bind(cmd, "--eta_knn_t", flags.eta_knn_t, &RunConfig::eta_knn_t, "target knn neighbors");
    bind(cmd, "--max_iters", flags.max_iters, &RunConfig::max_iters, "maximum passes");
    bind(cmd, "--ridge", flags.ridge, &RunConfig::ridge, "SPD regularizer for the A-step");
    bind(cmd, "--rel_tol", flags.rel_tol, &RunConfig::rel_tol, "relative convergence tolerance");
    bind(cmd, "--kernel_ms", flags.kernel_ms, &RunConfig::kernel_ms,
         "source anchors for variant K (0 = auto)");
    bind(cmd, "--kernel_mt", flags.kernel_mt, &RunConfig::kernel_mt,
         "target anchors for variant K (0 = auto)");
    bind(cmd, "--sigma", flags.sigma, &RunConfig::sigma,
         "kernel width (<= 0 = median heuristic)");
  }

  void add_run(CLI::App* cmd) {
    bind_flag(cmd, "--standardize", &RunConfig::standardize,
              "zero-mean/unit-variance preprocessing per feature");
    bind(cmd, "--seed", flags.seed, &RunConfig::seed, "random seed");
    bind(cmd, "--query-count", flags.query_count, &RunConfig::query_count,
         "target queries held out (0 = auto)");
    bind(cmd, "--out", flags.out_dir, &RunConfig::out_dir, "output directory");
  }

  void add_direction(CLI::App* cmd) {
    auto* opt = cmd->add_option("--direction", direction_name,
                                "retrieval direction: cross_domain|within_target")
                    ->check(CLI::IsMember({"cross_domain", "within_target"}));
    appliers.push_back([opt, this](RunConfig& cfg) {
      if (opt->count() > 0) cfg.direction = ath::cli::direction_from_name(direction_name);
    });
  }

  RunConfig resolve() const {
    RunConfig cfg;
    if (!config_path.empty()) cfg = ath::cli::parse_config_file(config_path);
    for (const auto& apply : appliers) apply(cfg);
    return cfg;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Asymmetric transfer hashing for generalized image transfer retrieval"};
  app.require_subcommand(1);

  auto* gen = app.add_subcommand("gen-synth", "generate a synthetic GITR task");
  ConfigBinder gen_binder;
  gen_binder.add_config(gen);
  gen_binder.add_synth(gen);
  gen_binder.add_run(gen);
  {
    auto* opt = gen->add_option("--format", gen_binder.flags.format,
                                "output dataset format: text|binary")
                    ->check(CLI::IsMember({"auto", "text", "binary"}));
    gen_binder.appliers.push_back([opt, &gen_binder](RunConfig& cfg) {
      if (opt->count() > 0) cfg.format = gen_binder.flags.format;
    });
  }

  auto* tr = app.add_subcommand("train", "train an ATH model");
  ConfigBinder train_binder;
  train_binder.add_config(tr);
  train_binder.add_task_inputs(tr);
  train_binder.add_synth(tr);
  train_binder.add_hyper(tr);
  train_binder.add_run(tr);
  train_binder.bind_flag(tr, "--trace", &RunConfig::trace, "print the objective trace");
  train_binder.bind_flag(tr, "--graph-dump", &RunConfig::graph_dump,
                         "dump domain graphs as triplet files");

  auto* ev = app.add_subcommand("eval", "evaluate a trained model (MAP, PR curves)");
  ConfigBinder eval_binder;
  eval_binder.add_config(ev);
  eval_binder.add_task_inputs(ev);
  eval_binder.add_synth(ev);
  eval_binder.add_run(ev);
  eval_binder.add_direction(ev);
  eval_binder.bind(ev, "--model", eval_binder.flags.model, &RunConfig::model,
                   "trained model file (ATHF)");
  eval_binder.bind_flag(ev, "--pr-curve", &RunConfig::pr_curve,
                        "write pr.csv and ap.csv into the output directory");

  auto* di = app.add_subcommand("diagnose", "positive-transfer accuracy trace");
  ConfigBinder diag_binder;
  diag_binder.add_config(di);
  diag_binder.add_task_inputs(di);
  diag_binder.add_synth(di);
  diag_binder.add_hyper(di);
  diag_binder.add_run(di);

  auto* dg = app.add_subcommand("dump-graph", "dump a domain graph as 'i j w' lines");
  ath::cli::DumpGraphConfig dump_cfg;
  dg->add_option("--input", dump_cfg.input, "dataset file")->required();
  dg->add_option("--kind", dump_cfg.kind, "graph kind: knn|semantic")
      ->check(CLI::IsMember({"knn", "semantic"}));
  dg->add_option("--eta", dump_cfg.eta, "neighbor count for knn graphs");
  dg->add_option("--format", dump_cfg.format, "dataset format: auto|text|binary")
      ->check(CLI::IsMember({"auto", "text", "binary"}));
  dg->add_option("--out", dump_cfg.out, "output file (default stdout)");

  try {
    app.parse(argc, argv);
    if (gen->parsed()) ath::cli::run_gen_synth(gen_binder.resolve());
    if (tr->parsed()) ath::cli::run_train(train_binder.resolve());
    if (ev->parsed()) ath::cli::run_eval(eval_binder.resolve());
    if (di->parsed()) ath::cli::run_diagnose(diag_binder.resolve());
    if (dg->parsed()) ath::cli::run_dump_graph(dump_cfg);
    return 0;
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const ath::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const ath::IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 1;
  }
}

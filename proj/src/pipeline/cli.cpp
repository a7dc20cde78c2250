#include "pfvc/pipeline/cli.hpp"

#include <CLI11.hpp>
#include <cstdio>
#include <sstream>

#include "pfvc/pipeline/commands.hpp"

namespace pfvc::pipeline {

namespace {

std::vector<int> parse_int_list(const std::string& s) {
  std::vector<int> out;
  std::istringstream is(s);
  std::string tok;
  while (std::getline(is, tok, ',')) out.push_back(std::stoi(tok));
  return out;
}

}  // namespace

int cli_run(const std::vector<std::string>& args) {
  CLI::App app{"pitch-conditioned flow matching voice conversion"};
  app.require_subcommand(1);

  std::string config_path, runs_dir = "runs";
  long long seed = -1;
  std::vector<std::string> overrides;
  app.add_option("--config", config_path, "pipeline config file");
  app.add_option("--seed", seed, "run seed (overrides run.seed)");
  app.add_option("--set", overrides, "override: section.key=value")->take_all();
  app.add_option("--runs", runs_dir, "directory for run logs");

  auto* mk = app.add_subcommand("make-corpus", "build the synthetic corpus");
  std::string mk_out;
  mk->add_option("--out", mk_out, "corpus output directory")->required();

  auto* tp = app.add_subcommand("train-pitch", "pretrain the pitch tokenizer");
  std::string tp_corpus, tp_out;
  tp->add_option("--corpus", tp_corpus)->required();
  tp->add_option("--out", tp_out)->required();

  auto* fc = app.add_subcommand("fit-content", "fit the semantic token quantizer");
  std::string fc_corpus, fc_out;
  fc->add_option("--corpus", fc_corpus)->required();
  fc->add_option("--out", fc_out)->required();

  auto* tc = app.add_subcommand("train-cfm", "train the conversion model");
  std::string tc_corpus, tc_pitch, tc_content, tc_out;
  tc->add_option("--corpus", tc_corpus)->required();
  tc->add_option("--pitch", tc_pitch)->required();
  tc->add_option("--content", tc_content)->required();
  tc->add_option("--out", tc_out)->required();

  auto* cv = app.add_subcommand("convert", "convert source audio to a prompt's voice");
  std::string cv_pitch, cv_content, cv_cfm, cv_manifest, cv_source, cv_prompt, cv_out;
  cv->add_option("--pitch", cv_pitch)->required();
  cv->add_option("--content", cv_content)->required();
  cv->add_option("--cfm", cv_cfm)->required();
  cv->add_option("--manifest", cv_manifest, "lines: source<TAB>prompt<TAB>out");
  cv->add_option("--source", cv_source);
  cv->add_option("--prompt", cv_prompt);
  cv->add_option("--out", cv_out);

  auto* ev = app.add_subcommand("eval", "run the conversion metrics on the test split");
  std::string ev_corpus, ev_pitch, ev_content, ev_cfm, ev_out, ev_sweep;
  int ev_pairs = -1;
  ev->add_option("--corpus", ev_corpus)->required();
  ev->add_option("--pitch", ev_pitch)->required();
  ev->add_option("--content", ev_content)->required();
  ev->add_option("--cfm", ev_cfm)->required();
  ev->add_option("--out", ev_out, "report TSV path");
  ev->add_option("--pairs", ev_pairs, "number of conversion pairs");
  ev->add_option("--sweep", ev_sweep, "comma-separated ode step counts");

  auto* gc = app.add_subcommand("gradcheck", "finite-difference check of all blocks");

  std::vector<const char*> argv;
  argv.push_back("pfvc");
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    PipelineConfig cfg;
    if (!config_path.empty()) cfg.load_file(config_path);
    for (const auto& kv : overrides) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos)
        throw StageError("--set expects section.key=value, got: " + kv);
      cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (seed >= 0) cfg.set("run.seed", std::to_string(seed));

    if (mk->parsed()) {
      write_run_log(cfg, "make-corpus", mk_out, runs_dir);
      cmd_make_corpus(cfg, mk_out);
    } else if (tp->parsed()) {
      write_run_log(cfg, "train-pitch", tp_out, runs_dir);
      cmd_train_pitch(cfg, tp_corpus, tp_out);
    } else if (fc->parsed()) {
      write_run_log(cfg, "fit-content", fc_out, runs_dir);
      cmd_fit_content(cfg, fc_corpus, fc_out);
    } else if (tc->parsed()) {
      write_run_log(cfg, "train-cfm", tc_out, runs_dir);
      cmd_train_cfm(cfg, tc_corpus, tc_pitch, tc_content, tc_out);
    } else if (cv->parsed()) {
      write_run_log(cfg, "convert", cv_manifest.empty() ? cv_out : cv_manifest, runs_dir);
      auto models = load_models(cfg, cv_pitch, cv_content, cv_cfm);
      if (!cv_manifest.empty()) {
        cmd_convert(cfg, models, cv_manifest);
      } else {
        if (cv_source.empty() || cv_prompt.empty() || cv_out.empty())
          throw StageError("convert: need --manifest or all of --source/--prompt/--out");
        auto out = convert_one(cfg, models, dsp::read_wav(cv_source),
                               dsp::read_wav(cv_prompt), cfg.seed());
        dsp::write_wav(out, cv_out);
      }
    } else if (ev->parsed()) {
      write_run_log(cfg, "eval", ev_out, runs_dir);
      auto models = load_models(cfg, ev_pitch, ev_content, ev_cfm);
      if (!ev_sweep.empty()) {
        auto rows = cmd_step_sweep(cfg, models, ev_corpus, parse_int_list(ev_sweep),
                                   ev_pairs > 0 ? ev_pairs : 8);
        std::printf("ode_steps\twall_s\tcontent_match\n");
        for (const auto& r : rows)
          std::printf("%d\t%.3f\t%.4f\n", r.ode_steps, r.wall_s, r.content_match);
      } else {
        EvalOptions opt;
        if (ev_pairs > 0) opt.n_pairs = ev_pairs;
        else opt.n_pairs = cfg.get_int("eval.pairs");
        cmd_eval(cfg, models, ev_corpus, ev_out, opt);
      }
    } else if (gc->parsed()) {
      write_run_log(cfg, "gradcheck", "", runs_dir);
      auto report = run_gradcheck_suite();
      std::printf("%s", report.summary().c_str());
      return report.pass ? 0 : 1;
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "pfvc: %s\n", e.what());
    return 1;
  }
  return 0;
}

}  // namespace pfvc::pipeline

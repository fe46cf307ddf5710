// Copyright 2026 TTRSS Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "ttr/alignment.hpp"
#include "ttr/config.hpp"
#include "ttr/corpus.hpp"
#include "ttr/encoders.hpp"
#include "ttr/errors.hpp"
#include "ttr/experiments.hpp"
#include "ttr/gradcheck.hpp"
#include "ttr/params.hpp"
#include "ttr/rng.hpp"
#include "ttr/separator.hpp"
#include "ttr/summarizer.hpp"
#include "ttr/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace ttr;

namespace {

constexpr int kExitBadConfig = 2;
constexpr int kExitMissingFiles = 3;
constexpr int kExitNumerical = 4;
constexpr int kExitGradCheck = 5;

struct EpochPrinter {
  std::chrono::steady_clock::time_point last = std::chrono::steady_clock::now();
  void operator()(int epoch, double train, double val, double lr) {
    const auto now = std::chrono::steady_clock::now();
    const double secs = std::chrono::duration<double>(now - last).count();
    last = now;
    std::printf("epoch %3d  train %.6f  validation %.6f  lr %.2e  (%.1fs)\n", epoch, train, val,
                lr, secs);
    std::fflush(stdout);
  }
};

void require_file(const std::string& path) {
  if (!fs::exists(path)) throw IoError("missing file: " + path);
}

void make_out_dir(const std::string& out) {
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) throw IoError("cannot create output directory: " + out);
}

void write_meta(const std::string& path, const json& extra) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write " + path);
  os << extra.dump(2) << "\n";
}

Encoders make_encoders(const RunConfig& cfg, const Lexicon& lex) {
  return Encoders(cfg.encoder, lex.signature_frequencies(), cfg.dataset.sample_rate);
}

std::vector<SummarizerItem> utterance_items(const std::vector<LoadedInstance>& instances,
                                            const Encoders& encoders, const Lexicon& lex) {
  std::vector<SummarizerItem> items;
  for (const auto& inst : instances)
    for (std::size_t k = 0; k < inst.sources.size(); ++k)
      items.push_back(make_summarizer_item(inst.sources[k], inst.transcripts[k], encoders, lex));
  return items;
}

std::string lambda_label(double lambda) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "ttr_lambda%g", lambda);
  return buf;
}

int cmd_gen_data(const std::string& config_path, const std::string& out) {
  const RunConfig cfg = load_run_config(config_path);
  gen_dataset(cfg.dataset, out, cfg.config_hash);
  std::printf("dataset written to %s (config %s)\n", out.c_str(), cfg.config_hash.c_str());
  return 0;
}

int cmd_pretrain_summarizer(const std::string& config_path, const std::string& data,
                            const std::string& out) {
  const RunConfig cfg = load_run_config(config_path);
  require_file(data + "/lexicon.json");
  const Lexicon lex = load_lexicon(data + "/lexicon.json");
  const Encoders encoders = make_encoders(cfg, lex);

  const auto train = utterance_items(load_split(data, "train"), encoders, lex);
  const auto validation = utterance_items(load_split(data, "validation"), encoders, lex);

  ParamStore params;
  init_summarizer_params(params, cfg.summarizer, cfg.encoder.d_audio, cfg.encoder.d_text,
                         derive_seed(cfg.seed, "summarizer-init"));

  make_out_dir(out);
  LossLog log(out + "/summarizer_loss_log.jsonl");
  const TrainHistory history =
      pretrain_summarizer(params, cfg.summarizer, train, validation, cfg.summarizer_stage,
                          derive_seed(cfg.seed, "summarizer-shuffle"), &log, EpochPrinter{});

  save_checkpoint(out + "/summarizer.ckpt", "summarizer", params);
  write_meta(out + "/summarizer.ckpt.meta.json",
             {{"stage", "pretrain-summarizer"},
              {"config_hash", cfg.config_hash},
              {"lambda", nullptr},
              {"best_epoch", history.best_epoch},
              {"best_validation_loss", history.best_validation_loss},
              {"epochs_run", history.validation_loss.size()}});
  std::printf("best validation TTR %.6f at epoch %d; checkpoint %s/summarizer.ckpt\n",
              history.best_validation_loss, history.best_epoch, out.c_str());
  return 0;
}

int cmd_pretrain_separator(const std::string& config_path, const std::string& data,
                           const std::string& out) {
  const RunConfig cfg = load_run_config(config_path);
  std::vector<SeparatorItem> train, validation;
  for (const auto& inst : load_split(data, "train")) train.push_back(make_separator_item(inst));
  for (const auto& inst : load_split(data, "validation"))
    validation.push_back(make_separator_item(inst));

  ParamStore sep;
  init_separator_params(sep, cfg.separator, derive_seed(cfg.seed, "separator-init"));

  make_out_dir(out);
  LossLog log(out + "/separator_loss_log.jsonl");
  const TrainHistory history =
      pretrain_separator(sep, cfg.separator, train, validation, cfg.separator_stage,
                         derive_seed(cfg.seed, "separator-shuffle"), &log, EpochPrinter{});

  save_checkpoint(out + "/separator.ckpt", "separator", sep);
  write_meta(out + "/separator.ckpt.meta.json",
             {{"stage", "pretrain-separator"},
              {"config_hash", cfg.config_hash},
              {"lambda", nullptr},
              {"best_epoch", history.best_epoch},
              {"best_validation_loss", history.best_validation_loss},
              {"epochs_run", history.validation_loss.size()}});
  std::printf("best validation PIT loss %.4f at epoch %d; checkpoint %s/separator.ckpt\n",
              history.best_validation_loss, history.best_epoch, out.c_str());
  return 0;
}

int cmd_finetune(const std::string& config_path, const std::string& data,
                 const std::string& summarizer_ckpt, const std::string& separator_ckpt,
                 double lambda, const std::string& out) {
  const RunConfig cfg = load_run_config(config_path);
  require_file(data + "/lexicon.json");
  const Lexicon lex = load_lexicon(data + "/lexicon.json");
  const Encoders encoders = make_encoders(cfg, lex);

  ParamStore sum_store;
  init_summarizer_params(sum_store, cfg.summarizer, cfg.encoder.d_audio, cfg.encoder.d_text,
                         derive_seed(cfg.seed, "summarizer-init"));
  require_file(summarizer_ckpt);
  load_checkpoint_into(summarizer_ckpt, "summarizer", sum_store);

  ParamStore sep;
  init_separator_params(sep, cfg.separator, derive_seed(cfg.seed, "separator-init"));
  require_file(separator_ckpt);
  load_checkpoint_into(separator_ckpt, "separator", sep);

  std::vector<SeparatorItem> train, validation;
  for (const auto& inst : load_split(data, "train"))
    train.push_back(make_finetune_item(inst, encoders, lex));
  for (const auto& inst : load_split(data, "validation"))
    validation.push_back(make_finetune_item(inst, encoders, lex));

  make_out_dir(out);
  LossLog log(out + "/finetune_loss_log.jsonl");
  const TrainHistory history = finetune_ttr(
      sep, cfg.separator, sum_store, cfg.summarizer, encoders, train, validation, lambda,
      cfg.freeze_summarizer, cfg.finetune_stage,
      derive_seed(cfg.seed, "finetune-shuffle:" + lambda_label(lambda)), &log, EpochPrinter{});

  save_checkpoint(out + "/separator_ttr.ckpt", "separator", sep);
  save_checkpoint(out + "/summarizer.ckpt", "summarizer", sum_store);
  write_meta(out + "/separator_ttr.ckpt.meta.json",
             {{"stage", "finetune"},
              {"config_hash", cfg.config_hash},
              {"lambda", lambda},
              {"label", lambda_label(lambda)},
              {"freeze_summarizer", cfg.freeze_summarizer},
              {"best_epoch", history.best_epoch},
              {"best_validation_loss", history.best_validation_loss},
              {"epochs_run", history.validation_loss.size()}});
  std::printf("best validation total loss %.4f at epoch %d; checkpoint %s/separator_ttr.ckpt\n",
              history.best_validation_loss, history.best_epoch, out.c_str());
  return 0;
}

int cmd_evaluate(const std::string& config_path, const std::string& data,
                 const std::vector<std::string>& checkpoints, const std::string& out) {
  const RunConfig cfg = load_run_config(config_path);
  const auto test = load_split(data, "test");

  std::vector<ScoreboardRow> rows;
  for (const auto& ckpt : checkpoints) {
    require_file(ckpt);
    ParamStore sep;
    init_separator_params(sep, cfg.separator, derive_seed(cfg.seed, "separator-init"));
    load_checkpoint_into(ckpt, "separator", sep);

    std::string label = fs::path(ckpt).stem().string();
    std::optional<double> lambda;
    const std::string meta_path = ckpt + ".meta.json";
    if (fs::exists(meta_path)) {
      std::ifstream is(meta_path);
      json meta;
      is >> meta;
      if (meta.contains("label") && meta.at("label").is_string())
        label = meta.at("label").get<std::string>();
      if (meta.contains("lambda") && meta.at("lambda").is_number())
        lambda = meta.at("lambda").get<double>();
    }

    const SeparateFn fn = [&sep, &cfg](const Waveform& mixture) {
      return separate(const_cast<ParamStore&>(sep), cfg.separator, mixture);
    };
    rows.push_back(evaluate_separation(test, fn, label, lambda, cfg.threads));
    std::printf("row %-24s  SDRi %8.4f dB  SI-SDRi %8.4f dB  (n=%zu)\n",
                rows.back().label.c_str(), rows.back().mean_sdri, rows.back().mean_si_sdri,
                rows.back().per_instance.size());
  }
  make_out_dir(out);
  write_scoreboard(out, rows, cfg.config_hash);
  std::printf("scoreboard written to %s/scoreboard.json\n", out.c_str());
  return 0;
}

int cmd_discriminate(const std::string& config_path, const std::string& data,
                     const std::string& summarizer_ckpt, const std::string& out) {
  const RunConfig cfg = load_run_config(config_path);
  require_file(data + "/lexicon.json");
  const Lexicon lex = load_lexicon(data + "/lexicon.json");
  const Encoders encoders = make_encoders(cfg, lex);

  ParamStore sum_store;
  init_summarizer_params(sum_store, cfg.summarizer, cfg.encoder.d_audio, cfg.encoder.d_text,
                         derive_seed(cfg.seed, "summarizer-init"));
  require_file(summarizer_ckpt);
  load_checkpoint_into(summarizer_ckpt, "summarizer", sum_store);

  const auto validation = load_split(data, "validation");
  const DiscriminationReport report = discrimination_eval(
      validation, lex, encoders, make_summarize_fn(sum_store, cfg.summarizer, encoders));
  make_out_dir(out);
  write_discrimination_report(out, report, cfg.config_hash);
  std::printf("fraction(d_mix >= d_clean) = %.4f, mean(d_mix - d_clean) = %.6f (n=%zu)\n",
              report.fraction_ge, report.mean_diff, report.pairs.size());
  return 0;
}

int cmd_inspect_align(const std::string& transcript_path, double frame_rate,
                      const std::string& lexicon_path) {
  require_file(transcript_path);
  require_file(lexicon_path);
  const TimedTranscript transcript = read_transcript(transcript_path);
  const Lexicon lex = load_lexicon(lexicon_path);
  const SubwordSequence tokens = tokenize_transcript(transcript, lex);
  if (transcript.words.empty()) throw std::invalid_argument("inspect-align: empty transcript");
  const int total_frames =
      static_cast<int>(std::ceil(transcript.words.back().end * frame_rate));
  const AlignmentMap map = align(transcript, tokens.per_word_counts, total_frames, frame_rate);
  std::fputs(to_text(map, tokens).c_str(), stdout);
  return 0;
}

int cmd_grad_check(const std::string& config_path, const std::string& stage) {
  const RunConfig cfg = load_run_config(config_path);
  constexpr int kCoords = 60;
  bool failed = false;
  const auto report = [&](const char* name, const GradCheckResult& r) {
    const bool ok = r.max_rel_error <= kGradCheckTolerance;
    std::printf("%-12s max rel error %.3e over %d coordinates: %s\n", name, r.max_rel_error,
                r.coordinates, ok ? "pass" : "FAIL");
    failed = failed || !ok;
  };
  if (stage == "transformer" || stage == "all")
    report("transformer", grad_check_transformer(cfg.summarizer, cfg.encoder.d_audio,
                                                 cfg.encoder.d_text, cfg.seed, kCoords));
  if (stage == "ttr" || stage == "all")
    report("ttr", grad_check_ttr(cfg.summarizer, cfg.encoder, cfg.seed, kCoords));
  if (stage == "total" || stage == "all")
    report("total", grad_check_total(cfg.summarizer, cfg.encoder, cfg.separator, cfg.seed,
                                     kCoords));
  return failed ? kExitGradCheck : 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Timed-text-regularized speech separation (TTR-SS) pipeline"};
  app.require_subcommand(1);

  std::string config_path, data_dir, out_dir, summarizer_ckpt, separator_ckpt;
  std::string transcript_path, lexicon_path, stage = "all";
  std::vector<std::string> checkpoints;
  double lambda = 0.5;
  double frame_rate = 50.0;

  auto* gen = app.add_subcommand("gen-data", "Generate the synthetic timed-text corpus");
  gen->add_option("--config", config_path, "Run config JSON")->required();
  gen->add_option("--out", out_dir, "Dataset output directory")->required();

  auto* psum = app.add_subcommand("pretrain-summarizer", "Pretrain the summarizer on clean sources");
  psum->add_option("--config", config_path)->required();
  psum->add_option("--data", data_dir, "Dataset directory")->required();
  psum->add_option("--out", out_dir)->required();

  auto* psep = app.add_subcommand("pretrain-separator", "PIT-pretrain the separation model");
  psep->add_option("--config", config_path)->required();
  psep->add_option("--data", data_dir)->required();
  psep->add_option("--out", out_dir)->required();

  auto* ft = app.add_subcommand("finetune", "TTR-regularized finetuning of the separator");
  ft->add_option("--config", config_path)->required();
  ft->add_option("--data", data_dir)->required();
  ft->add_option("--summarizer", summarizer_ckpt, "Pretrained summarizer checkpoint")->required();
  ft->add_option("--separator", separator_ckpt, "Pretrained separator checkpoint")->required();
  ft->add_option("--lambda", lambda, "TTR blending weight")->required();
  ft->add_option("--out", out_dir)->required();

  auto* ev = app.add_subcommand("evaluate", "Score checkpoints on the test split");
  ev->add_option("--config", config_path)->required();
  ev->add_option("--data", data_dir)->required();
  ev->add_option("--checkpoints", checkpoints, "Separator checkpoints")->required()->expected(-1);
  ev->add_option("--out", out_dir)->required();

  auto* di = app.add_subcommand("discriminate", "Clean-vs-mixture TTR discrimination study");
  di->add_option("--config", config_path)->required();
  di->add_option("--data", data_dir)->required();
  di->add_option("--summarizer", summarizer_ckpt)->required();
  di->add_option("--out", out_dir)->required();

  auto* ia = app.add_subcommand("inspect-align", "Dump the SLA frame assignment for a transcript");
  ia->add_option("--transcript", transcript_path)->required();
  ia->add_option("--frame-rate", frame_rate)->required();
  ia->add_option("--lexicon", lexicon_path, "Lexicon JSON (for token counts)")->required();

  auto* gc = app.add_subcommand("grad-check", "Finite-difference gradient verification");
  gc->add_option("--config", config_path)->required();
  gc->add_option("--stage", stage, "transformer|ttr|total|all")
      ->check(CLI::IsMember({"transformer", "ttr", "total", "all"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: usage: " << e.what() << "\n";
    return kExitBadConfig;
  }

  try {
    if (gen->parsed()) return cmd_gen_data(config_path, out_dir);
    if (psum->parsed()) return cmd_pretrain_summarizer(config_path, data_dir, out_dir);
    if (psep->parsed()) return cmd_pretrain_separator(config_path, data_dir, out_dir);
    if (ft->parsed())
      return cmd_finetune(config_path, data_dir, summarizer_ckpt, separator_ckpt, lambda, out_dir);
    if (ev->parsed()) return cmd_evaluate(config_path, data_dir, checkpoints, out_dir);
    if (di->parsed()) return cmd_discriminate(config_path, data_dir, summarizer_ckpt, out_dir);
    if (ia->parsed()) return cmd_inspect_align(transcript_path, frame_rate, lexicon_path);
    if (gc->parsed()) return cmd_grad_check(config_path, stage);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitBadConfig;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitMissingFiles;
  } catch (const NumericError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

// intentscale command-line tool: data generation, list building, training,
// evaluation, the experiment grids and the HTTP service.

#include <atomic>
#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "intentscale/catalog.hpp"
#include "intentscale/corpus.hpp"
#include "intentscale/error.hpp"
#include "intentscale/eval.hpp"
#include "intentscale/experiments.hpp"
#include "intentscale/inference.hpp"
#include "intentscale/lists.hpp"
#include "intentscale/model.hpp"
#include "intentscale/service.hpp"
#include "intentscale/trainer.hpp"

namespace fs = std::filesystem;
using namespace intentscale;

namespace {

std::atomic<bool> g_stop{false};

void on_signal(int) { g_stop = true; }

struct ModelFlags {
  bool no_intents = false;
  double noise = 0.0;
  std::uint64_t seed = 0;
  std::optional<double> lr;
  std::optional<double> weight_decay;
  std::optional<std::size_t> epochs;
  std::optional<std::size_t> batch;
  std::optional<std::size_t> patience;
  bool paper_preset = false;
  std::string aggregator = "concat";
  std::size_t buckets = 1u << 15;
  std::size_t dim = 64;

  void add(CLI::App* app, bool with_model_switches) {
    if (with_model_switches) {
      app->add_flag("--no-intents", no_intents, "Train without the relevant-intents feature");
      app->add_option("--noise", noise, "Training mask flip probability k")->check(CLI::Range(0.0, 1.0));
    }
    app->add_option("--seed", seed, "Training seed");
    app->add_option("--lr", lr, "Learning rate");
    app->add_option("--weight-decay", weight_decay, "Decoupled weight decay");
    app->add_option("--epochs", epochs, "Maximum epochs");
    app->add_option("--batch", batch, "Batch size");
    app->add_option("--patience", patience, "Early-stopping patience");
    app->add_flag("--paper-preset", paper_preset, "Use the published fine-tuning learning rate");
    app->add_option("--aggregator", aggregator, "concat, sum or mean")->check(CLI::IsMember({"concat", "sum", "mean"}));
    app->add_option("--buckets", buckets, "Hash buckets");
    app->add_option("--dim", dim, "Text embedding width");
  }

  ModelConfig config() const {
    ModelConfig c;
    if (paper_preset) c.train = TrainConfig::paper_preset();
    c.encoder.buckets = buckets;
    c.encoder.dim = dim;
    c.head.aggregator = parse_aggregator(aggregator);
    c.head.use_intents_feature = !no_intents;
    c.train.noise_rate = noise;
    c.train.seed = seed;
    if (lr) c.train.learning_rate = *lr;
    if (weight_decay) c.train.weight_decay = *weight_decay;
    if (epochs) c.train.max_epochs = *epochs;
    if (batch) c.train.batch_size = *batch;
    if (patience) c.train.patience = *patience;
    return c;
  }
};

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw Error(ErrorCode::io_error, "cannot write " + path.string());
}

ClientRegistry load_registry_or_default(const CorpusFiles& corpus, const std::string& path) {
  if (path.empty()) return corpus.clients;
  return load_registry(path, corpus.catalog.size(), corpus.industries);
}

std::vector<RelevantIntentsMask> masks_for(std::span<const LabeledExample> examples, const ClientRegistry& reg) {
  std::vector<RelevantIntentsMask> masks;
  masks.reserve(examples.size());
  for (const auto& e : examples) masks.push_back(reg.get(e.client_id)->relevant);
  return masks;
}

ExperimentConfig experiment_config(const ModelFlags& flags, std::size_t seeds, std::uint64_t split_seed,
                                   const std::string& history) {
  ExperimentConfig cfg;
  cfg.model = flags.config();
  cfg.grid.seeds = seeds;
  cfg.split_seed = split_seed;
  cfg.history = history == "predictions" ? HistorySource::predictions : HistorySource::gold;
  cfg.log = [](const std::string& m) { std::cerr << m << '\n'; };
  return cfg;
}

void emit_grid(const GridResult& grid, const fs::path& out) {
  fs::create_directories(out);
  const std::string text = format_grid(grid);
  std::cout << text;
  write_text(out / (grid.name + "_grid.txt"), text);
  std::ofstream records(out / (grid.name + "_grid.jsonl"));
  write_grid_records(grid, records);
}

void emit_table(const AccuracyTable& table, const fs::path& out) {
  fs::create_directories(out);
  const std::string text = format_table(table);
  std::cout << text;
  write_text(out / (table.name + "_table.txt"), text);
  std::ofstream records(out / (table.name + "_table.jsonl"));
  write_table_records(table, records);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"intentscale: generic intent classification with per-client relevant-intents lists"};
  app.require_subcommand(1);

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "Generate the synthetic multi-tenant corpus");
  SynthesisConfig synth;
  std::string gen_out;
  gen->add_option("--out", gen_out, "Output directory")->required();
  gen->add_option("--seed", synth.seed, "Generator seed");
  gen->add_option("--intents", synth.num_intents, "Catalog size");
  gen->add_option("--industries", synth.num_industries, "Number of industries");
  gen->add_option("--intents-per-industry", synth.intents_per_industry, "Intents per industry");
  gen->add_option("--overlap", synth.industry_overlap_fraction, "Shared fraction of each industry's intents");
  gen->add_option("--clients-per-industry", synth.clients_per_industry, "Clients per industry");
  gen->add_option("--tickets-per-client", synth.tickets_per_client, "Tickets per client");
  gen->add_option("--zipf", synth.zipf_exponent, "Zipf exponent of client intent frequencies");
  gen->add_option("--confusable-fraction", synth.confusable_pair_fraction, "Fraction of intents in twin pairs");
  gen->add_option("--keyword-rate", synth.keyword_rate, "Keyword probability per token");

  // split
  auto* split_cmd = app.add_subcommand("split", "Split a corpus into train/validation/test");
  std::string split_corpus, split_out, split_kind = "standard";
  std::uint64_t split_seed = 0;
  double test_fraction = 0.15, validation_fraction = 0.15;
  split_cmd->add_option("--corpus", split_corpus, "Corpus directory")->required();
  split_cmd->add_option("--out", split_out, "Output directory")->required();
  split_cmd->add_option("--kind", split_kind, "standard or ood")->check(CLI::IsMember({"standard", "ood"}));
  split_cmd->add_option("--seed", split_seed, "Split seed");
  split_cmd->add_option("--test-fraction", test_fraction, "Test fraction (standard)");
  split_cmd->add_option("--validation-fraction", validation_fraction, "Validation fraction (standard)");

  // build-lists
  auto* lists_cmd = app.add_subcommand("build-lists", "Build per-client relevant-intents lists");
  std::string lists_corpus, lists_split, lists_out, lists_model;
  double lists_coverage = 1.0;
  lists_cmd->add_option("--corpus", lists_corpus, "Corpus directory")->required();
  lists_cmd->add_option("--split", lists_split, "Split directory (history = training tickets)")->required();
  lists_cmd->add_option("--coverage", lists_coverage, "Ticket coverage c in (0, 1]")->check(CLI::Range(0.0, 1.0));
  lists_cmd->add_option("--model", lists_model, "Use this model's predictions as history instead of gold labels");
  lists_cmd->add_option("--out", lists_out, "Registry file to write")->required();

  // train
  auto* train_cmd = app.add_subcommand("train", "Train a classifier");
  std::string train_corpus, train_split, train_registry, train_out;
  ModelFlags train_flags;
  train_cmd->add_option("--corpus", train_corpus, "Corpus directory")->required();
  train_cmd->add_option("--split", train_split, "Split directory")->required();
  train_cmd->add_option("--registry", train_registry, "Registry with training masks (default: corpus clients)");
  train_cmd->add_option("--out", train_out, "Checkpoint path")->required();
  train_flags.add(train_cmd, true);

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on a split's test set");
  std::string eval_corpus, eval_split, eval_registry, eval_model, eval_records, eval_mode = "strict";
  eval_cmd->add_option("--corpus", eval_corpus, "Corpus directory")->required();
  eval_cmd->add_option("--split", eval_split, "Split directory")->required();
  eval_cmd->add_option("--model", eval_model, "Checkpoint")->required();
  eval_cmd->add_option("--registry", eval_registry, "Registry with test masks (default: corpus clients)");
  eval_cmd->add_option("--filter", eval_mode, "none, strict or search")
      ->check(CLI::IsMember({"none", "strict", "search"}));
  eval_cmd->add_option("--records", eval_records, "Write per-example records (JSONL)");

  // grid / ood / industry
  struct ExperimentFlags {
    std::string corpus, out = "results", kind = "both", history = "gold";
    std::size_t seeds = 4;
    std::uint64_t split_seed = 0;
    ModelFlags model;
  };
  ExperimentFlags grid_flags, ood_flags, industry_flags;
  const auto add_experiment = [&](CLI::App* cmd, ExperimentFlags& f) {
    cmd->add_option("--corpus", f.corpus, "Corpus directory")->required();
    cmd->add_option("--out", f.out, "Output directory");
    cmd->add_option("--seeds", f.seeds, "Training seeds per cell")->check(CLI::PositiveNumber);
    cmd->add_option("--split-seed", f.split_seed, "Split seed");
    cmd->add_option("--history", f.history, "List history source: gold or predictions")
        ->check(CLI::IsMember({"gold", "predictions"}));
    f.model.add(cmd, false);
  };
  auto* grid_cmd = app.add_subcommand("grid", "Coverage and noise grids");
  add_experiment(grid_cmd, grid_flags);
  grid_cmd->add_option("--kind", grid_flags.kind, "coverage, noise or both")
      ->check(CLI::IsMember({"coverage", "noise", "both"}));
  auto* ood_cmd = app.add_subcommand("ood", "In-domain versus out-of-domain table");
  add_experiment(ood_cmd, ood_flags);
  auto* industry_cmd = app.add_subcommand("industry", "Generic versus industry-specific models");
  add_experiment(industry_cmd, industry_flags);

  // gradcheck
  auto* grad_cmd = app.add_subcommand("gradcheck", "Finite-difference check of a checkpoint's gradients");
  std::string grad_model, grad_corpus;
  std::size_t grad_samples = 20;
  std::uint64_t grad_seed = 0;
  grad_cmd->add_option("--model", grad_model, "Checkpoint")->required();
  grad_cmd->add_option("--corpus", grad_corpus, "Draw ticket texts from this corpus");
  grad_cmd->add_option("--samples", grad_samples, "Number of samples")->check(CLI::PositiveNumber);
  grad_cmd->add_option("--seed", grad_seed, "Sampling seed");

  // serve
  auto* serve_cmd = app.add_subcommand("serve", "Run the HTTP prediction service");
  ServiceConfig service_config;
  std::string serve_model, serve_registry, serve_catalog, serve_log, serve_bind;
  serve_cmd->add_option("--model", serve_model, "Checkpoint");
  serve_cmd->add_option("--registry", serve_registry, "Registry file");
  serve_cmd->add_option("--catalog", serve_catalog, "Catalog file");
  serve_cmd->add_option("--log", serve_log, "Prediction log (JSONL)");
  serve_cmd->add_option("--bind", serve_bind, "host:port (default 127.0.0.1:8080)");
  serve_cmd->add_flag("--log-top1", service_config.log_top1, "Log the unfiltered top-1 intent");
  serve_cmd->add_flag("--persist-registry", service_config.persist_registry, "Write list updates back to disk");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return 2;
  }

  try {
    if (*gen) {
      const auto corpus = generate_corpus(synth);
      save_corpus_dir(corpus, gen_out);
      std::cout << "wrote " << corpus.examples.size() << " tickets, " << corpus.catalog.size() << " intents, "
                << corpus.clients.size() << " clients to " << gen_out << '\n';
    } else if (*split_cmd) {
      const auto corpus = load_corpus_dir(split_corpus);
      const DatasetSplit s = split_kind == "ood"
                                 ? ood_split(corpus.examples, 0.106, 0.117 / 0.894, split_seed)
                                 : standard_split(corpus.examples, test_fraction, validation_fraction, split_seed);
      save_split_dir(s, corpus.catalog, split_out);
      std::cout << "train " << s.train.size() << ", validation " << s.validation.size() << ", test "
                << s.test.size() << '\n';
    } else if (*lists_cmd) {
      const auto corpus = load_corpus_dir(lists_corpus);
      const auto s = load_split_dir(lists_split, corpus.catalog);
      // Clients with no training tickets (OOD test clients) use their test
      // tickets as history.
      std::vector<LabeledExample> pool = s.train;
      {
        std::set<std::string> seen;
        for (const auto& e : s.train) seen.insert(e.client_id);
        for (const auto& e : s.test) {
          if (!seen.contains(e.client_id)) pool.push_back(e);
        }
      }
      ClientHistories histories;
      if (lists_model.empty()) {
        histories = histories_from_examples(pool, corpus.catalog.size());
      } else {
        const auto model = load_checkpoint(lists_model);
        model.check_catalog(corpus.catalog);
        std::vector<std::string> texts;
        for (const auto& e : pool) texts.push_back(e.text());
        const std::vector<RelevantIntentsMask> masks(pool.size(), RelevantIntentsMask::all(corpus.catalog.size()));
        const auto predictions = predict_batch(model, texts, masks, masks, FilterMode::none);
        for (std::size_t i = 0; i < pool.size(); ++i) {
          histories.try_emplace(pool[i].client_id, corpus.catalog.size()).first->second.add(predictions[i].top1);
        }
      }
      const auto ids = corpus.clients.client_ids();
      const auto masks = build_all(histories, ids, corpus.catalog.size(), lists_coverage);
      const auto registry = registry_with_masks(corpus.clients, masks);
      save_registry(registry, lists_out);
      std::vector<RelevantIntentsMask> all;
      for (const auto& [id, m] : masks) all.push_back(m);
      const auto stats = list_stats(all);
      std::cout << "coverage " << lists_coverage << ": median list size " << stats.median << ", max " << stats.max
                << '\n';
    } else if (*train_cmd) {
      const auto corpus = load_corpus_dir(train_corpus);
      const auto s = load_split_dir(train_split, corpus.catalog);
      const auto registry = load_registry_or_default(corpus, train_registry);
      const ModelConfig cfg = train_flags.config();
      TrainObserver observer{[](const EpochLog& e) {
        std::fprintf(stderr, "epoch %zu train_loss %.6f validation_loss %.6f\n", e.epoch, e.train_loss,
                     e.validation_loss);
      }};
      const auto model = train(s, registry, corpus.catalog, cfg, observer);
      save_checkpoint(model, train_out);
      std::cout << "best epoch " << model.best_epoch << ", wrote " << train_out << '\n';
    } else if (*eval_cmd) {
      const auto corpus = load_corpus_dir(eval_corpus);
      const auto s = load_split_dir(eval_split, corpus.catalog);
      const auto registry = load_registry_or_default(corpus, eval_registry);
      const auto model = load_checkpoint(eval_model);
      model.check_catalog(corpus.catalog);
      std::vector<std::string> texts;
      for (const auto& e : s.test) texts.push_back(e.text());
      const auto masks = masks_for(s.test, registry);
      const auto results = predict_batch(model, texts, masks, masks, parse_filter_mode(eval_mode));
      const auto records = make_records(s.test, results);
      std::printf("accuracy %.6f (%zu tickets, filter %s)\n", accuracy(records), records.size(), eval_mode.c_str());
      if (!eval_records.empty()) {
        std::ofstream out(eval_records);
        for (const auto& r : records) {
          nlohmann::ordered_json j;
          j["ticket_id"] = r.ticket_id;
          j["gold"] = corpus.catalog.label(r.gold);
          j["chosen"] = r.chosen ? nlohmann::ordered_json(corpus.catalog.label(*r.chosen)) : nlohmann::ordered_json(nullptr);
          j["correct"] = r.correct;
          out << j.dump() << '\n';
        }
      }
    } else if (*grid_cmd) {
      auto corpus = load_corpus_dir(grid_flags.corpus);
      ExperimentRunner runner(std::move(corpus),
                              experiment_config(grid_flags.model, grid_flags.seeds, grid_flags.split_seed,
                                                grid_flags.history));
      if (grid_flags.kind != "noise") emit_grid(runner.coverage_grid(), grid_flags.out);
      if (grid_flags.kind != "coverage") emit_grid(runner.noise_grid(), grid_flags.out);
    } else if (*ood_cmd) {
      auto corpus = load_corpus_dir(ood_flags.corpus);
      ExperimentRunner runner(std::move(corpus), experiment_config(ood_flags.model, ood_flags.seeds,
                                                                   ood_flags.split_seed, ood_flags.history));
      emit_table(runner.ood_experiment(), ood_flags.out);
    } else if (*industry_cmd) {
      auto corpus = load_corpus_dir(industry_flags.corpus);
      ExperimentRunner runner(std::move(corpus),
                              experiment_config(industry_flags.model, industry_flags.seeds,
                                                industry_flags.split_seed, industry_flags.history));
      emit_table(runner.industry_experiment(), industry_flags.out);
    } else if (*grad_cmd) {
      const auto model = load_checkpoint(grad_model);
      std::vector<std::string> texts;
      if (!grad_corpus.empty()) {
        for (const auto& e : load_corpus_dir(grad_corpus).examples) texts.push_back(e.text());
      }
      Rng rng(grad_seed);
      const std::size_t c = model.num_classes();
      double worst = 0.0;
      for (std::size_t i = 0; i < grad_samples; ++i) {
        GradcheckSample sample;
        if (texts.empty()) {
          for (int t = 0; t < 12; ++t) sample.text += "tok" + std::to_string(rng.below(5000)) + " ";
        } else {
          sample.text = texts[rng.below(texts.size())];
        }
        sample.mask = RelevantIntentsMask(c);
        for (std::size_t k = 0; k < c; ++k) sample.mask.set(static_cast<IntentId>(k), rng.bernoulli(0.3));
        sample.gold = static_cast<IntentId>(rng.below(c));
        sample.dropout = model.head.sample_dropout(sample.mask, rng);
        GradcheckOptions options;
        options.seed = derive_seed(grad_seed, i);
        const auto report = gradcheck(model, sample, options);
        worst = std::max(worst, report.max_relative_error);
      }
      std::printf("max relative error %.3e over %zu samples\n", worst, grad_samples);
      return worst < 1e-4 ? 0 : 1;
    } else if (*serve_cmd) {
      // Flags take precedence over the environment.
      apply_env_overrides(service_config);
      if (!serve_bind.empty()) service_config.bind = serve_bind;
      if (!serve_model.empty()) service_config.model = serve_model;
      if (!serve_registry.empty()) service_config.registry = serve_registry;
      if (!serve_catalog.empty()) service_config.catalog = serve_catalog;
      if (!serve_log.empty()) service_config.log = serve_log;
      auto service = Service::load(service_config);
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      run_http(*service, service_config.bind, &g_stop, [&](int port) {
        std::cout << "listening on port " << port << " (model " << service->fingerprint() << ")" << std::endl;
      });
    }
  } catch (const Error& e) {
    std::cerr << "error [" << to_string(e.code()) << "]: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

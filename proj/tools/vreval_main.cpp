// vreval: multi-paradigm visual-reasoning evaluation harness CLI.
#include <filesystem>
#include <iostream>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "vreval/analysis.hpp"
#include "vreval/backends.hpp"
#include "vreval/datasets.hpp"
#include "vreval/errors.hpp"
#include "vreval/http_backends.hpp"
#include "vreval/paradigms.hpp"
#include "vreval/prompting.hpp"
#include "vreval/report.hpp"
#include "vreval/runner.hpp"
#include "vreval/runstore.hpp"
#include "vreval/util.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace vreval;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitBackendExhaustion = 3;
constexpr int kExitPartialRun = 4;

struct RunOptions {
  std::string dataset;  // openworld | hoi:<split> | winoground
  std::string paradigm = "ca";
  std::string model;
  std::string describer;
  std::string manifest;
  std::string descriptions_file;
  std::string rules_file;
  std::string id_list;
  int subset_k = 250;
  int n = 100;
  std::uint64_t seed = 0;
  int limit = 0;  // 0 = no limit
  std::string resume_run_id;
  std::string runs_dir = "runs";
  std::string cache_file = "cache/descriptions.jsonl";
  int parallelism = 4;
  bool minimal_prompt = false;
  bool no_fsync = false;
};

json template_hashes() {
  json out;
  for (PromptTemplateId id :
       {PromptTemplateId::DVRL, PromptTemplateId::DVRL_MINIMAL, PromptTemplateId::DRL_EXTRACT,
        PromptTemplateId::DRL_APPLY, PromptTemplateId::CA_DESCRIBE, PromptTemplateId::CA_REASON,
        PromptTemplateId::WG_CAPTION_CHOICE, PromptTemplateId::WG_IMAGE_CHOICE}) {
    out[to_string(id)] = prompt_template_hash(id);
  }
  return out;
}

json config_snapshot(const RunOptions& opt) {
  return json{{"dataset", opt.dataset},
              {"paradigm", opt.paradigm},
              {"model", opt.model},
              {"describer", opt.describer},
              {"manifest", opt.manifest},
              {"descriptions", opt.descriptions_file},
              {"rules", opt.rules_file},
              {"id_list", opt.id_list},
              {"subset_k", opt.subset_k},
              {"n", opt.n},
              {"seed", opt.seed},
              {"minimal_prompt", opt.minimal_prompt},
              {"prompt_templates", template_hashes()}};
}

std::vector<BongardEpisode> collect_episodes(const RunOptions& opt) {
  std::vector<BongardEpisode> episodes;
  if (opt.dataset == "openworld") {
    auto sources = load_openworld_manifest(opt.manifest);
    int k = std::min<int>(opt.subset_k, static_cast<int>(sources.size()));
    episodes = build_openworld_subset(sources, k);
  } else if (util::starts_with(opt.dataset, "hoi:")) {
    HoiSplit split = hoi_split_from_string(opt.dataset.substr(4));
    auto pool = load_episode_manifest(opt.manifest);
    std::vector<BongardEpisode> filtered;
    for (const BongardEpisode& ep : pool) {
      if (ep.source == EpisodeSource::hoi(split)) filtered.push_back(ep);
    }
    if (filtered.empty()) {
      throw ConfigError("manifest holds no episodes for split " + opt.dataset);
    }
    episodes = sample_hoi_split(split, filtered, opt.n, opt.seed);
  } else {
    throw ConfigError("unknown dataset \"" + opt.dataset + "\"");
  }
  if (!opt.id_list.empty()) episodes = apply_id_list(episodes, opt.id_list);
  return episodes;
}

// Builds the per-episode runner for the selected paradigm.
std::function<EvaluationRecord(const BongardEpisode&)> make_episode_runner(
    const RunOptions& opt, std::shared_ptr<Backend> model, std::shared_ptr<Backend> describer,
    std::shared_ptr<DescriptionCache> cache) {
  Paradigm paradigm = paradigm_from_string(opt.paradigm);
  switch (paradigm) {
    case Paradigm::DVRL: {
      DvrlVariant variant = opt.minimal_prompt ? DvrlVariant::Minimal : DvrlVariant::Structured;
      return [model, variant](const BongardEpisode& ep) { return run_dvrl(ep, *model, variant); };
    }
    case Paradigm::DRL:
      return [model](const BongardEpisode& ep) { return run_drl(ep, *model); };
    case Paradigm::CA: {
      DescriptionSource source =
          !opt.descriptions_file.empty()
              ? DescriptionSource::external(load_external_descriptions(opt.descriptions_file))
              : DescriptionSource::self_generated(describer);
      return [model, source, cache](const BongardEpisode& ep) {
        return run_ca(ep, *model, source, *cache);
      };
    }
    case Paradigm::RuleApply: {
      if (opt.rules_file.empty()) {
        throw ConfigError("rule-apply needs --rules <file> (or --rules captions)");
      }
      if (opt.rules_file == "captions") {
        return [model](const BongardEpisode& ep) {
          if (!ep.rule_caption) throw ConfigError("episode " + ep.episode_id + " has no caption");
          return run_rule_application(ep, count_rule_words(*ep.rule_caption), *model);
        };
      }
      auto rules = std::make_shared<std::unordered_map<std::string, RuleSummary>>(
          load_external_rules(opt.rules_file));
      return [model, rules](const BongardEpisode& ep) {
        auto it = rules->find(ep.episode_id);
        if (it == rules->end()) throw ConfigError("no external rule for " + ep.episode_id);
        return run_rule_application(ep, it->second, *model);
      };
    }
  }
  throw ConfigError("unreachable paradigm");
}

int cmd_run(const RunOptions& opt) {
  json config = config_snapshot(opt);
  std::string run_id = run_id_for_config(config);
  if (!opt.resume_run_id.empty() && opt.resume_run_id != run_id) {
    throw ConfigError("--resume " + opt.resume_run_id + " does not match this config (" + run_id +
                      "); config drift detected");
  }
  std::string run_dir = (fs::path(opt.runs_dir) / run_id).string();

  // Resolve backends, datasets and files before touching the run directory,
  // so config errors leave nothing behind.
  auto model = make_backend(opt.model);
  auto cache = std::make_shared<FileDescriptionCache>(opt.cache_file);
  auto describer = opt.describer.empty() ? model : make_backend(opt.describer);

  std::vector<WinogroundSample> samples;
  std::vector<BongardEpisode> episodes;
  std::function<EvaluationRecord(const BongardEpisode&)> runner;
  if (opt.dataset == "winoground") {
    samples = load_winoground(opt.manifest);
  } else {
    episodes = collect_episodes(opt);
    runner = make_episode_runner(opt, model, describer, cache);
  }

  RunManifest manifest;
  manifest.run_id = run_id;
  manifest.created_at = util::now_iso8601();
  manifest.config = config;
  FsyncPolicy fsync = opt.no_fsync ? FsyncPolicy::Never : FsyncPolicy::PerRecord;
  RunStore store = RunStore::create(run_dir, manifest, fsync);
  store.set_status(RunStatus::InProgress);
  std::cerr << "run " << run_id << " -> " << run_dir << "\n";

  std::mutex failure_mu;
  int backend_failures = 0;

  if (opt.dataset == "winoground") {
    auto remaining = resume_run(store, samples);
    if (opt.limit > 0 && static_cast<int>(remaining.size()) > opt.limit) {
      remaining.resize(static_cast<size_t>(opt.limit));
    }
    std::cerr << remaining.size() << " of " << samples.size() << " samples to run\n";
    run_concurrently<WinogroundSample, WinogroundRecord>(
        remaining,
        [&](const WinogroundSample& s) {
          WinogroundRecord rec = run_winoground_ca(s, *describer, *model, *cache);
          rec.run_id = run_id;
          return rec;
        },
        [&](WinogroundRecord rec) {
          if (rec.error && util::starts_with(*rec.error, "backend:")) {
            std::lock_guard lock(failure_mu);
            ++backend_failures;
            std::cerr << "sample " << rec.choices.sample_id << " deferred: " << *rec.error << "\n";
            return;  // transient; left pending for resume
          }
          store.append_record(rec);
        },
        opt.parallelism);
    size_t done = store.load_winoground_records().size();
    if (done == samples.size()) {
      store.set_status(RunStatus::Complete);
      std::cerr << "complete: " << done << " samples\n";
      return kExitOk;
    }
    store.set_status(backend_failures > 0 ? RunStatus::Aborted : RunStatus::InProgress);
    std::cerr << "partial: " << done << "/" << samples.size() << " samples recorded\n";
    return backend_failures > 0 ? kExitBackendExhaustion : kExitPartialRun;
  }

  Paradigm paradigm = paradigm_from_string(opt.paradigm);
  auto remaining = resume_run(store, episodes, paradigm);
  if (opt.limit > 0 && static_cast<int>(remaining.size()) > opt.limit) {
    remaining.resize(static_cast<size_t>(opt.limit));
  }
  std::cerr << remaining.size() << " of " << episodes.size() << " episodes to run\n";

  run_concurrently<BongardEpisode, EvaluationRecord>(
      remaining,
      [&](const BongardEpisode& ep) {
        EvaluationRecord rec = runner(ep);
        rec.run_id = run_id;
        return rec;
      },
      [&](EvaluationRecord rec) {
        if (rec.error && util::starts_with(*rec.error, "backend:")) {
          std::lock_guard lock(failure_mu);
          ++backend_failures;
          std::cerr << "episode " << rec.episode_id << " deferred: " << *rec.error << "\n";
          return;  // transient; left pending for resume
        }
        store.append_record(rec);
      },
      opt.parallelism);

  size_t done = store.load_records().size();
  if (done == episodes.size()) {
    store.set_status(RunStatus::Complete);
    std::cerr << "complete: " << done << " episodes\n";
    return kExitOk;
  }
  store.set_status(backend_failures > 0 ? RunStatus::Aborted : RunStatus::InProgress);
  std::cerr << "partial: " << done << "/" << episodes.size() << " episodes recorded\n";
  return backend_failures > 0 ? kExitBackendExhaustion : kExitPartialRun;
}

int cmd_describe(const RunOptions& opt) {
  auto model = make_backend(opt.model);
  FileDescriptionCache cache(opt.cache_file);

  std::vector<ImageRef> images;
  if (opt.dataset == "winoground") {
    for (const WinogroundSample& s : load_winoground(opt.manifest)) {
      images.push_back(s.image_0);
      images.push_back(s.image_1);
    }
  } else {
    for (const BongardEpisode& ep : collect_episodes(opt)) {
      for (const ImageRef& r : ep.positives) images.push_back(r);
      for (const ImageRef& r : ep.negatives) images.push_back(r);
      images.push_back(ep.query);
    }
  }
  // Deduplicate by content so shared context images are described once.
  std::set<std::string> seen;
  std::vector<ImageRef> unique;
  for (const ImageRef& r : images) {
    if (seen.insert(r.content_hash()).second) unique.push_back(r);
  }
  std::cerr << unique.size() << " unique images\n";
  run_concurrently<ImageRef, int>(
      unique,
      [&](const ImageRef& r) {
        describe_image(r, *model, cache);
        return 0;
      },
      [&](int) {}, opt.parallelism);
  std::cout << "cache now holds " << cache.size() << " descriptions\n";
  return kExitOk;
}

struct ScoreOptions {
  std::string run_id;
  std::string runs_dir = "runs";
  bool by_category = false;
  bool winoground = false;
  bool similarity = false;
  std::string embed_model;
  std::string similarity_source = "query-field";
};

int cmd_score(const ScoreOptions& opt) {
  RunStore store = RunStore::open((fs::path(opt.runs_dir) / opt.run_id).string());

  if (opt.winoground) {
    auto records = store.load_winoground_records();
    if (records.empty()) throw EmptyInput("run has no choice records");
    std::vector<WinogroundChoiceSet> sets;
    for (const WinogroundRecord& r : records) sets.push_back(r.choices);
    WinogroundScores s = winoground_scores(sets);
    std::cout << "samples: " << s.n << "\n"
              << "text:    " << util::format_percent(s.f_count, s.n, 2) << "\n"
              << "image:   " << util::format_percent(s.g_count, s.n, 2) << "\n"
              << "group:   " << util::format_percent(s.h_count, s.n, 2) << "\n";
    return kExitOk;
  }

  auto records = store.load_records();
  if (records.empty()) throw EmptyInput("run has no evaluation records");

  std::vector<std::pair<Polarity, bool>> outcomes;
  for (const EvaluationRecord& r : records) outcomes.emplace_back(r.query_label, r.correct);
  AccuracyReport rep = score_accuracy(outcomes);
  std::cout << "records: " << rep.n() << "\n"
            << "neg:     "
            << (rep.n_neg ? util::format_percent(rep.correct_neg, rep.n_neg, 1) : "-") << "\n"
            << "pos:     "
            << (rep.n_pos ? util::format_percent(rep.correct_pos, rep.n_pos, 1) : "-") << "\n"
            << "overall: " << util::format_percent(rep.correct(), rep.n(), 1) << "\n";

  if (opt.by_category) {
    std::cout << "\nby commonsense category:\n";
    for (const auto& [cid, cat] : score_by_category(records)) {
      std::cout << "  " << cid << ": " << util::format_percent(cat.correct(), cat.n(), 2) << " ("
                << cat.correct() << "/" << cat.n() << ")\n";
    }
  }

  if (opt.similarity) {
    if (opt.embed_model.empty()) throw ConfigError("--similarity needs --embed-model");
    auto backend = make_backend(opt.embed_model);
    std::vector<SimilarityPair> pairs;
    for (const EvaluationRecord& r : records) {
      if (!r.result) continue;
      std::string rule = r.rule ? r.rule->text : r.result->rule;
      std::string query_text = r.result->query_details;
      if (rule.empty() || query_text.empty()) continue;
      pairs.push_back(SimilarityPair{r.query_label, rule, query_text});
    }
    if (pairs.empty()) throw EmptyInput("no records carry both a rule and a query description");
    std::cout << "\nsemantic similarity (rule vs " << opt.similarity_source
              << "; population std):\n";
    for (const auto& [polarity, ms] : semantic_similarity_report(pairs, *backend)) {
      char buf[96];
      std::snprintf(buf, sizeof(buf), "  %s: mean %.3f  std %.3f  (n=%lld)\n",
                    to_string(polarity).c_str(), ms.mean, ms.std_dev,
                    static_cast<long long>(ms.n));
      std::cout << buf;
    }
  }
  return kExitOk;
}

struct ReportOptions {
  std::string run_id;
  std::string runs_dir = "runs";
  std::string format = "table-text";
  bool misclassified = false;
};

int cmd_report(const ReportOptions& opt) {
  RunStore store = RunStore::open((fs::path(opt.runs_dir) / opt.run_id).string());
  ReportFormat format = report_format_from_string(opt.format);

  auto records = store.load_records();
  auto choice_records = store.load_winoground_records();
  if (records.empty() && choice_records.empty()) throw EmptyInput("run has no records");

  bool printed = false;
  if (!records.empty()) {
    std::cout << render_report(records, ReportGrouping::Paradigm, format);
    printed = true;
    bool any_hoi = false;
    for (const EvaluationRecord& r : records) any_hoi |= util::starts_with(r.source, "hoi:");
    if (any_hoi) {
      std::cout << "\n" << render_report(records, ReportGrouping::HoiSplits, format);
    }
    if (opt.misclassified) {
      std::cout << "\n" << render_report(records, ReportGrouping::Misclassified, format);
    }
  }
  if (!choice_records.empty()) {
    if (printed) std::cout << "\n";
    std::cout << render_report(choice_records, format);
  }
  return kExitOk;
}

int cmd_prompts_dump(const std::string& dir) {
  fs::create_directories(dir);
  auto dump = [&](const std::string& name, const std::string& text) {
    util::write_file((fs::path(dir) / name).string(), text);
  };
  dump("dvrl_m6_n6.txt", render_dvrl(6, 6));
  dump("dvrl_minimal_m6_n6.txt", render_dvrl_minimal(6, 6));
  dump("drl_extract_m6_n6.txt", render_drl_extract(6, 6));
  dump("drl_extract_m6_n0.txt", render_drl_extract(6, 0));
  dump("drl_apply_m6_n6.txt", render_drl_apply(6, 6, count_rule_words("people riding bicycles")));
  dump("ca_describe.txt", render_ca_describe());
  std::vector<std::string> docs;
  for (int i = 1; i <= 13; ++i) docs.push_back("[image description " + std::to_string(i) + "]");
  dump("ca_reason_m6_n6.txt", render_ca_reason(docs, 6, 6));
  dump("wg_caption_choice.txt",
       render_winoground_choice(WinogroundChoiceKind::CaptionChoice, "[image description]",
                                "[caption 0]", "[caption 1]"));
  dump("wg_image_choice.txt",
       render_winoground_choice(WinogroundChoiceKind::ImageChoice, "[caption]",
                                "[image description 0]", "[image description 1]"));
  std::cout << "wrote 9 prompt files to " << dir << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"multi-paradigm visual-reasoning evaluation harness"};
  app.require_subcommand(1);

  RunOptions run_opt;
  CLI::App* run = app.add_subcommand("run", "evaluate a dataset under one paradigm");
  run->add_option("--dataset", run_opt.dataset, "openworld | hoi:<split> | winoground")
      ->required();
  run->add_option("--paradigm", run_opt.paradigm, "dvrl | drl | ca | rule-apply");
  run->add_option("--model", run_opt.model, "backend spec (see README)")->required();
  run->add_option("--describer", run_opt.describer, "describe-stage backend (CA)");
  run->add_option("--manifest", run_opt.manifest, "dataset manifest file")->required();
  run->add_option("--descriptions", run_opt.descriptions_file, "external description file (CA)");
  run->add_option("--rules", run_opt.rules_file, "external rules file, or \"captions\"");
  run->add_option("--id-list", run_opt.id_list, "episode id override list");
  run->add_option("--subset-k", run_opt.subset_k, "open-world sources to take (2 episodes each)");
  run->add_option("--n", run_opt.n, "HOI episodes to sample per split");
  run->add_option("--seed", run_opt.seed, "HOI sampling seed");
  run->add_option("--limit", run_opt.limit, "stop after this many episodes (smoke runs)");
  run->add_option("--resume", run_opt.resume_run_id, "expected run id when resuming");
  run->add_option("--runs-dir", run_opt.runs_dir, "run directory root");
  run->add_option("--cache-file", run_opt.cache_file, "description cache file");
  run->add_option("--parallelism", run_opt.parallelism, "concurrent episodes");
  run->add_flag("--minimal-prompt", run_opt.minimal_prompt, "DVRL without the output contract");
  run->add_flag("--no-fsync", run_opt.no_fsync, "skip fsync after each record");

  RunOptions describe_opt;
  CLI::App* describe = app.add_subcommand("describe", "pre-warm the description cache");
  describe->add_option("--model", describe_opt.model, "describer backend spec")->required();
  describe->add_option("--manifest", describe_opt.manifest, "dataset manifest file")->required();
  describe->add_option("--dataset", describe_opt.dataset, "openworld | hoi:<split> | winoground")
      ->required();
  describe->add_option("--subset-k", describe_opt.subset_k, "open-world sources to take");
  describe->add_option("--n", describe_opt.n, "HOI episodes per split");
  describe->add_option("--seed", describe_opt.seed, "HOI sampling seed");
  describe->add_option("--cache-file", describe_opt.cache_file, "description cache file");
  describe->add_option("--parallelism", describe_opt.parallelism, "concurrent images");

  ScoreOptions score_opt;
  CLI::App* score = app.add_subcommand("score", "print metrics for a stored run");
  score->add_option("--run", score_opt.run_id, "run id")->required();
  score->add_option("--runs-dir", score_opt.runs_dir, "run directory root");
  score->add_flag("--by-category", score_opt.by_category, "per-commonsense-category accuracy");
  score->add_flag("--winoground", score_opt.winoground, "text/image/group scores");
  score->add_flag("--similarity", score_opt.similarity, "rule/query-description similarity");
  score->add_option("--embed-model", score_opt.embed_model, "embedding backend spec");
  score->add_option("--similarity-source", score_opt.similarity_source,
                    "query-field | description-doc");

  ReportOptions report_opt;
  CLI::App* report = app.add_subcommand("report", "render tables for a stored run");
  report->add_option("--run", report_opt.run_id, "run id")->required();
  report->add_option("--runs-dir", report_opt.runs_dir, "run directory root");
  report->add_option("--format", report_opt.format, "table-text | csv");
  report->add_flag("--misclassified", report_opt.misclassified, "append misclassified listing");

  std::string prompts_dir;
  CLI::App* prompts = app.add_subcommand("prompts", "emit golden prompt templates for audit");
  prompts->add_option("--dump", prompts_dir, "output directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) return cmd_run(run_opt);
    if (describe->parsed()) return cmd_describe(describe_opt);
    if (score->parsed()) return cmd_score(score_opt);
    if (report->parsed()) return cmd_report(report_opt);
    if (prompts->parsed()) return cmd_prompts_dump(prompts_dir);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const ManifestError& e) {
    std::cerr << "manifest error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const ManifestMissing& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const AuthError& e) {
    std::cerr << "auth error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const MissingDescription& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const BackendError& e) {
    std::cerr << "backend error: " << e.what() << "\n";
    return kExitBackendExhaustion;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return kExitOk;
}

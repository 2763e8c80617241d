/*
 * Copyright 2026 The bioclap Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "gateway/cli.h"

#include <cstdio>
#include <fstream>
#include <map>
#include <set>

#include "CLI11.hpp"
#include "bioclap/archive_ingest.h"
#include "bioclap/caption_clients.h"
#include "bioclap/captioner.h"
#include "bioclap/error.h"
#include "bioclap/evaluator.h"
#include "bioclap/probe.h"
#include "bioclap/trainer.h"
#include "gateway/artifacts.h"
#include "gateway/service.h"
#include "json.hpp"

namespace bioclap::tools {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct IngestArgs {
  std::string source;
  fs::path manifest, out, issues, names, split_out;
  std::size_t min_count = 70;
  double test_fraction = 0.10;
  std::uint64_t seed = 0;
};

struct CaptionArgs {
  fs::path records, out, issues, gazetteer;
  std::string endpoint;
  int max_retries = 2;
  std::size_t max_in_flight = 4;
  bool template_only = false;
};

struct FeatureArgs {
  fs::path records, corpus_root, out;
  int mel_bins = 64;
};

struct TrainArgs {
  fs::path features, captions, split, checkpoint, loss_log;
  TrainConfig train;
  EncoderConfig encoder;
  bool resume = false;
  bool reference_scale = false;
};

struct EmbedArgs {
  fs::path checkpoint, features, out;
  std::string text;
};

struct IndexArgs {
  fs::path features, records, captions, checkpoint, embeddings, out;
};

struct SearchArgs {
  fs::path index, checkpoint;
  std::string query;
  std::size_t k = 10;
};

struct ClassifyArgs {
  fs::path index, checkpoint, audio;
  std::string clip;
  std::vector<std::string> labels;
};

struct EvalArgs {
  fs::path index, checkpoint, test, diagnostics, out, task, train_task;
  std::size_t n = 10;
  std::string prompt_template = "{label}";
  ProbeConfig probe;
};

struct ServeArgs {
  fs::path config, index, checkpoint;
  std::string host;
  int port = -1;
};

void WriteText(const fs::path& path, const std::string& text, std::ostream& out) {
  if (path.empty()) {
    out << text << '\n';
    return;
  }
  std::ofstream f(path);
  if (!f) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  f << text << '\n';
}

std::set<std::string> TestIds(const fs::path& split) {
  return ReadSplit(split).test_ids;
}

std::shared_ptr<const ServingState> LoadState(const fs::path& index, const fs::path& checkpoint) {
  return LoadServingState(index, checkpoint);
}

VectorIndex Restrict(const VectorIndex& index, const fs::path& split) {
  if (split.empty()) return index.Filter([](const IndexEntry&) { return true; });
  const auto test = TestIds(split);
  return index.Filter([&](const IndexEntry& e) { return test.contains(e.recording_id); });
}

std::string ApplyPromptTemplate(const std::string& templ, const std::string& label) {
  std::string out = templ;
  for (auto pos = out.find("{label}"); pos != std::string::npos; pos = out.find("{label}", pos)) {
    out.replace(pos, 7, label);
    pos += label.size();
  }
  return out;
}

LabelPromptSet Prompts(std::span<const std::string> labels, const std::string& templ,
                       const TextEmbedder& text) {
  std::vector<LabelPrompt> prompts;
  for (const auto& l : labels) prompts.push_back({l, ApplyPromptTemplate(templ, l)});
  return LabelPromptSet::FromPrompts(std::move(prompts), text);
}

Matrix EmbedTaskAudio(const TaskManifest& task, const DualEncoderModel& model) {
  Matrix x(static_cast<Eigen::Index>(task.items.size()), model.embedding_dim());
  for (std::size_t i = 0; i < task.items.size(); ++i) {
    const Embedding e =
        model.EmbedAudio(CanonicalMel(LoadWav(task.items[i].clip_path), model.config.mel_bins));
    for (int d = 0; d < model.embedding_dim(); ++d) {
      x(static_cast<Eigen::Index>(i), d) = e.values[static_cast<std::size_t>(d)];
    }
  }
  return x;
}

int Ingest(const IngestArgs& a, std::ostream& out) {
  ParseResult parsed = ParseManifest(a.manifest, ParseSource(a.source));
  json summary;
  if (!a.names.empty()) {
    NameMappingReport report;
    parsed.records = MapSpeciesNames(std::move(parsed.records), NameTable::FromCsv(a.names), &report);
    summary["filledCommon"] = report.filled_common;
    summary["filledScientific"] = report.filled_scientific;
    summary["unmapped"] = report.unmapped;
  }
  WriteNormalizedManifest(a.out, parsed.records);
  if (!a.issues.empty()) WriteIssueReport(a.issues, parsed.issues);
  std::size_t errors = 0;
  for (const auto& i : parsed.issues) errors += i.severity == ManifestIssue::Severity::kError;
  summary["records"] = parsed.records.size();
  summary["errors"] = errors;
  summary["warnings"] = parsed.issues.size() - errors;
  if (!a.split_out.empty()) {
    const SplitOptions options{a.min_count, a.test_fraction, a.seed};
    const CorpusSplit split = BuildSpeciesSplit(parsed.records, options);
    WriteSplit(a.split_out, split, options);
    summary["train"] = split.train_ids.size();
    summary["test"] = split.test_ids.size();
  }
  out << summary.dump() << '\n';
  return 0;
}

int Caption(const CaptionArgs& a, std::ostream& out) {
  const auto records = ReadNormalizedManifest(a.records);
  RuleBasedLocationDetector detector;
  if (!a.gazetteer.empty()) detector.LoadGazetteer(a.gazetteer);
  std::unique_ptr<CaptionClient> client;
  if (!a.template_only && !a.endpoint.empty()) {
    ServiceConfig env;
    ApplyEnvironment(env);
    client = std::make_unique<HttpCaptionClient>(a.endpoint, env.caption_token);
  }
  const PipelineResult result =
      CaptionCorpus(records, client.get(), detector, {a.max_retries, a.max_in_flight});
  WriteCaptions(a.out, result.captions);
  if (!a.issues.empty()) WriteCaptionIssues(a.issues, result.issues);
  out << json{{"records", records.size()},
              {"captions", result.captions.size()},
              {"issues", result.issues.size()},
              {"clientCalls", result.client_calls}}
             .dump()
      << '\n';
  return 0;
}

int Features(const FeatureArgs& a, std::ostream& out, std::ostream& err) {
  const auto records = ReadNormalizedManifest(a.records);
  MelConfig mel;
  mel.mel_bins = a.mel_bins;
  const FeatureReport report = BuildFeatures(records, a.corpus_root, a.out, mel);
  for (const auto& f : report.failed) err << json{{"warning", "SkippedRecording"}, {"detail", f}}.dump() << '\n';
  out << json{{"clips", report.clips.size()}, {"skipped", report.failed.size()}}.dump() << '\n';
  return 0;
}

int TrainCommand(TrainArgs a, std::ostream& out) {
  if (a.reference_scale) {
    a.train.batch_size = 680;
    a.train.learning_rate = 1e-4;
    a.train.epochs = 45;
  }
  const auto clips = ReadClipManifest(a.features);
  const auto captions = ReadCaptions(a.captions);
  const auto grouped = GroupCaptions(captions);
  std::set<std::string> train_ids;
  if (!a.split.empty()) train_ids = ReadSplit(a.split).train_ids;
  const auto examples = TrainingExamples(clips, grouped, a.split.empty() ? nullptr : &train_ids);
  if (examples.empty()) throw Error(ErrorCode::kEmptyCorpus, "no captioned training clips");
  a.encoder.mel_bins = static_cast<int>(examples.front().pooled_mel.size());
  a.train.checkpoint_path = a.checkpoint;

  const auto on_epoch = [&out](const EpochLog& log) {
    char line[96];
    std::snprintf(line, sizeof line, "epoch %d loss %.6f tau %.6f", log.epoch, log.train_loss,
                  log.tau);
    out << line << '\n' << std::flush;
  };
  const TrainResult result = a.resume ? ResumeTraining(LoadCheckpoint(a.checkpoint), examples,
                                                       a.train, on_epoch)
                                      : Train(examples, a.encoder, a.train, on_epoch);
  SaveCheckpoint(a.checkpoint, result.state);
  if (!a.loss_log.empty()) WriteLossLog(a.loss_log, result.log);
  return 0;
}

int Embed(const EmbedArgs& a, std::ostream& out) {
  const DualEncoderModel model = LoadCheckpoint(a.checkpoint).model;
  if (!a.text.empty()) {
    out << json(model.EmbedText(a.text).values).dump() << '\n';
    return 0;
  }
  if (a.features.empty() || a.out.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "embed needs --text or --features and --out");
  }
  std::vector<NamedEmbedding> entries;
  for (const auto& clip : ReadClipManifest(a.features)) {
    entries.push_back({clip.clip_id, model.EmbedAudio(ReadFeatureCache(clip.mel_path))});
  }
  WriteEmbeddings(a.out, entries);
  out << json{{"embeddings", entries.size()}, {"dim", model.embedding_dim()}}.dump() << '\n';
  return 0;
}

int Index(const IndexArgs& a, std::ostream& out) {
  IndexInputs inputs;
  inputs.clips = ReadClipManifest(a.features);
  inputs.records = RecordsById(ReadNormalizedManifest(a.records));
  const auto captions = ReadCaptions(a.captions);
  inputs.captions = GroupCaptions(captions);
  if (!a.embeddings.empty()) inputs.embeddings = LoadEmbeddings(a.embeddings);
  const DualEncoderModel model = LoadCheckpoint(a.checkpoint).model;
  VectorIndex index = BuildIndex(inputs, &model);
  index.attributes()["checkpoint"] = fs::absolute(a.checkpoint).lexically_normal().string();
  index.Save(a.out);
  out << json{{"clips", index.size()}, {"dim", index.dim()}}.dump() << '\n';
  return 0;
}

int Search(const SearchArgs& a, std::ostream& out) {
  if (a.query.find_first_not_of(" \t\r\n") == std::string::npos) {
    throw Error(ErrorCode::kInvalidArgument, "empty query");
  }
  const auto state = LoadState(a.index, a.checkpoint);
  for (const auto& hit : SearchText(*state, a.query, a.k)) {
    char score[32];
    std::snprintf(score, sizeof score, "%.6f", static_cast<double>(hit.score));
    out << hit.rank << '\t' << score << '\t' << hit.clip_id << '\t'
        << state->index.Find(hit.clip_id)->caption_common << '\n';
  }
  return 0;
}

int Classify(const ClassifyArgs& a, std::ostream& out) {
  const auto state = LoadState(a.index, a.checkpoint);
  Embedding audio;
  if (!a.audio.empty()) {
    audio = state->model.EmbedAudio(CanonicalMel(LoadWav(a.audio), state->model.config.mel_bins));
  } else {
    const IndexEntry* e = state->index.Find(a.clip);
    if (!e) throw Error(ErrorCode::kNotFound, "unknown clipId " + a.clip);
    audio = e->embedding;
  }
  const auto scores = ClassifyEmbedding(*state, audio, a.labels);
  json arr = json::array();
  std::size_t best = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    arr.push_back({{"label", scores[i].label}, {"score", scores[i].score}});
    if (scores[i].score > scores[best].score) best = i;
  }
  out << json{{"scores", arr}, {"argmaxLabel", scores[best].label}}.dump() << '\n';
  return 0;
}

int EvalRetrieval(const EvalArgs& a, std::ostream& out) {
  const auto state = LoadState(a.index, a.checkpoint);
  const VectorIndex index = Restrict(state->index, a.test);
  const RetrievalEvaluation eval = EvaluateRetrieval(index, state->model, a.n);
  if (!a.diagnostics.empty()) WriteQueryDiagnosticsCsv(a.diagnostics, eval.queries);
  const std::vector<EvalReport> reports{
      {"mAP@" + std::to_string(a.n), eval.map_at_n, a.n, eval.lists.size(), 0},
      {"precision@1", eval.precision_at_1, 1, eval.lists.size(), 0}};
  WriteText(a.out, ReportsToJson(reports), out);
  return 0;
}

int EvalOracle(const EvalArgs& a, std::ostream& out) {
  const VectorIndex index = Restrict(VectorIndex::Load(a.index), a.test);
  std::vector<OracleClip> corpus;
  for (const auto& e : index.entries()) {
    corpus.push_back({e.species_scientific.value_or(e.species_common.value_or("")),
                      e.caption_common});
  }
  const std::vector<EvalReport> reports{
      {"oraclePrecision@1", OraclePrecisionAt1(corpus), 1, corpus.size(), 0}};
  WriteText(a.out, ReportsToJson(reports), out);
  return 0;
}

int EvalZeroShot(const EvalArgs& a, std::ostream& out) {
  std::vector<EvalReport> reports;
  if (!a.task.empty()) {
    const DualEncoderModel model = LoadCheckpoint(a.checkpoint).model;
    const TaskManifest task = ReadTaskManifest(a.task);
    const LabelPromptSet prompts = Prompts(task.label_names, a.prompt_template, model);
    const Matrix x = EmbedTaskAudio(task, model);
    const ProbeLabels labels = LabelsFor(task, task.label_names);
    Matrix scores(x.rows(), static_cast<Eigen::Index>(task.label_names.size()));
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      Embedding e;
      for (Eigen::Index d = 0; d < x.cols(); ++d) e.values.push_back(static_cast<float>(x(i, d)));
      const auto s = ZeroShotDetectionScores(e, prompts);
      for (std::size_t c = 0; c < s.size(); ++c) scores(i, static_cast<Eigen::Index>(c)) = s[c];
    }
    if (task.task == ProbeTask::kDetection) {
      const ProbeMetrics m = DetectionMap(scores, labels.multi_hot);
      reports.push_back({"zeroShotMAP", m.value, 0, task.items.size(), m.skipped_classes});
    } else {
      std::size_t correct = 0;
      for (Eigen::Index i = 0; i < scores.rows(); ++i) {
        Eigen::Index best = 0;
        scores.row(i).maxCoeff(&best);
        correct += best == labels.classes[static_cast<std::size_t>(i)];
      }
      reports.push_back({"zeroShotAccuracy",
                         static_cast<double>(correct) / static_cast<double>(task.items.size()), 1,
                         task.items.size(), 0});
    }
  } else {
    const auto state = LoadState(a.index, a.checkpoint);
    const VectorIndex index = Restrict(state->index, a.test);
    std::set<std::string> names;
    for (const auto& e : index.entries()) {
      if (e.species_common) names.insert(*e.species_common);
    }
    const std::vector<std::string> labels(names.begin(), names.end());
    const LabelPromptSet prompts = Prompts(labels, a.prompt_template, state->model);
    std::size_t correct = 0, total = 0;
    for (const auto& e : index.entries()) {
      if (!e.species_common) continue;
      ++total;
      correct += ZeroShotClassify(e.embedding, prompts) == *e.species_common;
    }
    if (total == 0) throw Error(ErrorCode::kEmptyCorpus, "no clips with a common name");
    reports.push_back({"zeroShotAccuracy", static_cast<double>(correct) / static_cast<double>(total),
                       1, total, 0});
  }
  WriteText(a.out, ReportsToJson(reports), out);
  return 0;
}

int EvalProbeCommand(const EvalArgs& a, std::ostream& out) {
  const DualEncoderModel model = LoadCheckpoint(a.checkpoint).model;
  const TaskManifest train = ReadTaskManifest(a.train_task);
  const TaskManifest test = ReadTaskManifest(a.task);
  if (train.task != test.task) {
    throw Error(ErrorCode::kConfigMismatch, "train and test manifests differ in task type");
  }
  const ProbeTrainResult probe =
      TrainProbe(EmbedTaskAudio(train, model), LabelsFor(train, train.label_names), a.probe);
  const ProbeMetrics m =
      EvalProbe(probe.head, EmbedTaskAudio(test, model), LabelsFor(test, train.label_names));
  const std::vector<EvalReport> reports{
      {"probe" + std::string(m.metric_name == "accuracy" ? "Accuracy" : "MAP"), m.value, 0,
       test.items.size(), m.skipped_classes}};
  WriteText(a.out, ReportsToJson(reports), out);
  return 0;
}

int Serve(const ServeArgs& a, std::ostream& out) {
  ServiceConfig config;
  if (!a.config.empty()) config = LoadServiceConfig(a.config);
  ApplyEnvironment(config);
  if (!a.index.empty()) config.index_path = a.index;
  if (!a.checkpoint.empty()) config.checkpoint_path = a.checkpoint;
  if (!a.host.empty()) config.host = a.host;
  if (a.port >= 0) config.port = a.port;
  config.Validate();
  GatewayService service(config);
  service.Reload();
  HttpServer server(service);
  const int port = server.Bind(config.host, config.port);
  out << "listening on " << config.host << ':' << port << '\n' << std::flush;
  server.Run();
  return 0;
}

}  // namespace

int RunCli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"bioclap: bioacoustic audio-text workbench"};
  app.require_subcommand(1);
  int exit_code = 0;
  std::function<int()> action;

  IngestArgs ingest;
  auto* c = app.add_subcommand("ingest", "Normalize a source manifest and optionally split it");
  c->add_option("--source", ingest.source, "inaturalist|xenocanto|watkins|asa|audiocaps|synthetic")
      ->required();
  c->add_option("--manifest", ingest.manifest, "Source manifest (CSV or JSONL)")->required();
  c->add_option("--out", ingest.out, "Normalized records JSONL")->required();
  c->add_option("--issues", ingest.issues, "Row issue report JSONL");
  c->add_option("--names", ingest.names, "Name table CSV (scientific_name,common_name)");
  c->add_option("--split-out", ingest.split_out, "Write a species-stratified split here");
  c->add_option("--min-count", ingest.min_count, "Minimum records per species for the split");
  c->add_option("--test-fraction", ingest.test_fraction);
  c->add_option("--seed", ingest.seed);
  c->callback([&] { action = [&] { return Ingest(ingest, out); }; });

  CaptionArgs caption;
  c = app.add_subcommand("caption", "Produce captions for normalized records");
  c->add_option("--records", caption.records)->required();
  c->add_option("--out", caption.out, "Caption JSONL")->required();
  c->add_option("--issues", caption.issues, "Caption issue log JSONL");
  c->add_option("--endpoint", caption.endpoint,
                "Caption model endpoint; token from BIOCLAP_CAPTION_TOKEN");
  c->add_option("--gazetteer", caption.gazetteer, "Extra place names, one per line");
  c->add_option("--max-retries", caption.max_retries);
  c->add_option("--max-in-flight", caption.max_in_flight);
  c->add_flag("--template-only", caption.template_only, "Never call the caption model");
  c->callback([&] { action = [&] { return Caption(caption, out); }; });

  FeatureArgs features;
  c = app.add_subcommand("features", "Chunk audio to 10 s clips and cache mel spectrograms");
  c->add_option("--records", features.records)->required();
  c->add_option("--corpus-root", features.corpus_root, "Directory audio paths are relative to")
      ->required();
  c->add_option("--out", features.out, "Feature directory")->required();
  c->add_option("--mel-bins", features.mel_bins);
  c->callback([&] { action = [&] { return Features(features, out, err); }; });

  TrainArgs train;
  c = app.add_subcommand("train", "Contrastive training of the dual encoder");
  c->add_option("--features", train.features)->required();
  c->add_option("--captions", train.captions)->required();
  c->add_option("--split", train.split, "Train only on the split's train recordings");
  c->add_option("--checkpoint", train.checkpoint, "Checkpoint written after every epoch")
      ->required();
  c->add_option("--loss-log", train.loss_log, "CSV epoch,trainLoss,tau");
  c->add_option("--epochs", train.train.epochs);
  c->add_option("--batch-size", train.train.batch_size);
  c->add_option("--lr", train.train.learning_rate);
  c->add_option("--seed", train.train.seed);
  c->add_option("--initial-tau", train.train.initial_tau);
  c->add_option("--embedding-dim", train.encoder.embedding_dim);
  c->add_option("--hidden-dim", train.encoder.hidden_dim);
  c->add_option("--audio-feature-dim", train.encoder.audio_feature_dim);
  c->add_option("--text-feature-dim", train.encoder.text_feature_dim);
  c->add_option("--buckets", train.encoder.vocab_hash_buckets);
  c->add_flag("--resume", train.resume, "Continue from --checkpoint");
  c->add_flag("--reference-scale", train.reference_scale,
              "Batch 680, lr 1e-4, 45 epochs instead of desk defaults");
  c->callback([&] { action = [&] { return TrainCommand(train, out); }; });

  EmbedArgs embed;
  c = app.add_subcommand("embed", "Embed clips into an embedding container, or one text");
  c->add_option("--checkpoint", embed.checkpoint)->required();
  c->add_option("--features", embed.features);
  c->add_option("--out", embed.out);
  c->add_option("--text", embed.text, "Print the normalized text embedding as JSON");
  c->callback([&] { action = [&] { return Embed(embed, out); }; });

  IndexArgs index;
  c = app.add_subcommand("index", "Build a searchable index directory");
  c->add_option("--features", index.features)->required();
  c->add_option("--records", index.records)->required();
  c->add_option("--captions", index.captions)->required();
  c->add_option("--checkpoint", index.checkpoint)->required();
  c->add_option("--embeddings", index.embeddings, "Precomputed audio embeddings by clip id");
  c->add_option("--out", index.out)->required();
  c->callback([&] { action = [&] { return Index(index, out); }; });

  SearchArgs search;
  c = app.add_subcommand("search", "Free-text search; prints rank, score, clipId, caption");
  c->add_option("--index", search.index)->required();
  c->add_option("--checkpoint", search.checkpoint, "Defaults to the index's checkpoint");
  c->add_option("--query", search.query)->required();
  c->add_option("--k", search.k)->check(CLI::Range(std::size_t{1}, kMaxK));
  c->callback([&] { action = [&] { return Search(search, out); }; });

  ClassifyArgs classify;
  c = app.add_subcommand("classify", "Zero-shot scores of a clip against text labels");
  c->add_option("--index", classify.index)->required();
  c->add_option("--checkpoint", classify.checkpoint);
  auto* clip_opt = c->add_option("--clip", classify.clip, "Indexed clip id");
  auto* audio_opt = c->add_option("--audio", classify.audio, "WAV file to embed");
  clip_opt->excludes(audio_opt);
  c->add_option("--labels", classify.labels)->required()->delimiter(',');
  c->callback([&] {
    if (classify.clip.empty() && classify.audio.empty()) {
      throw CLI::ValidationError("classify", "one of --clip or --audio is required");
    }
    action = [&] { return Classify(classify, out); };
  });

  EvalArgs eval;
  auto* ev = app.add_subcommand("eval", "Evaluation reports");
  ev->require_subcommand(1);
  c = ev->add_subcommand("retrieval", "Text-to-audio mAP@N and precision@1");
  c->add_option("--index", eval.index)->required();
  c->add_option("--checkpoint", eval.checkpoint);
  c->add_option("--test", eval.test, "Split file; only its test recordings are evaluated");
  c->add_option("--n", eval.n)->check(CLI::PositiveNumber);
  c->add_option("--diagnostics", eval.diagnostics, "Per-query CSV");
  c->add_option("--out", eval.out, "Report JSON (stdout by default)");
  c->callback([&] { action = [&] { return EvalRetrieval(eval, out); }; });

  c = ev->add_subcommand("oracle", "Species-oracle precision@1");
  c->add_option("--index", eval.index)->required();
  c->add_option("--test", eval.test);
  c->add_option("--out", eval.out);
  c->callback([&] { action = [&] { return EvalOracle(eval, out); }; });

  c = ev->add_subcommand("zero-shot", "Zero-shot accuracy over species or a task manifest");
  c->add_option("--index", eval.index, "Score indexed clips against their species names");
  c->add_option("--test", eval.test);
  c->add_option("--task", eval.task, "Task manifest JSONL {clipPath, label|labels}");
  c->add_option("--checkpoint", eval.checkpoint);
  c->add_option("--prompt-template", eval.prompt_template, "Prompt text; {label} is replaced");
  c->add_option("--out", eval.out);
  c->callback([&] {
    if (eval.index.empty() == eval.task.empty()) {
      throw CLI::ValidationError("zero-shot", "exactly one of --index or --task is required");
    }
    if (!eval.task.empty() && eval.checkpoint.empty()) {
      throw CLI::ValidationError("zero-shot", "--task needs --checkpoint");
    }
    action = [&] { return EvalZeroShot(eval, out); };
  });

  c = ev->add_subcommand("probe", "Linear probe on frozen audio embeddings");
  c->add_option("--checkpoint", eval.checkpoint)->required();
  c->add_option("--train", eval.train_task, "Training task manifest")->required();
  c->add_option("--test", eval.task, "Test task manifest")->required();
  c->add_option("--epochs", eval.probe.epochs);
  c->add_option("--lr", eval.probe.learning_rate);
  c->add_option("--weight-decay", eval.probe.weight_decay);
  c->add_option("--out", eval.out);
  c->callback([&] { action = [&] { return EvalProbeCommand(eval, out); }; });

  ServeArgs serve;
  c = app.add_subcommand("serve", "HTTP gateway over an index");
  c->add_option("--config", serve.config, "Service config JSON");
  c->add_option("--index", serve.index);
  c->add_option("--checkpoint", serve.checkpoint);
  c->add_option("--host", serve.host);
  c->add_option("--port", serve.port);
  c->callback([&] { action = [&] { return Serve(serve, out); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << ErrorBody("Usage", e.what()) << '\n' << app.help();
    return 2;
  }
  try {
    exit_code = action ? action() : 2;
  } catch (const Error& e) {
    err << ErrorBody(ErrorCodeName(e.code()), e.what()) << '\n';
    return 1;
  } catch (const std::exception& e) {
    err << ErrorBody("Internal", e.what()) << '\n';
    return 1;
  }
  return exit_code;
}

}  // namespace bioclap::tools

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include <omp.h>

#include "CLI11.hpp"
#include "ctcattn/config.hpp"
#include "ctcattn/synth.hpp"
#include "ctcattn/train.hpp"

namespace fs = std::filesystem;
using namespace ctcattn;

namespace {

// One JSON file with optional "task", "model" and "train" sections.
struct RunConfig {
  SynthTaskSpec task;
  ModelConfig model;
  TrainConfig train;
};

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> mode;
  std::optional<std::size_t> tau;
  std::optional<std::size_t> epochs;
};

RunConfig load_run_config(const std::string& path, const Overrides& o) {
  RunConfig rc;
  if (!path.empty()) {
    const Json j = load_json(path);
    if (j.contains("task")) rc.task = j.at("task").get<SynthTaskSpec>();
    if (j.contains("model")) rc.model = j.at("model").get<ModelConfig>();
    if (j.contains("train")) rc.train = j.at("train").get<TrainConfig>();
  }
  if (o.seed) {
    rc.task.seed = *o.seed;
    rc.train.seed = *o.seed;
  }
  if (o.mode) rc.model.attn.set_mode(parse_mode(*o.mode));
  if (o.tau) rc.model.attn.tau = *o.tau;
  if (o.epochs) rc.train.epochs = *o.epochs;
  rc.model.sync();
  return rc;
}

void add_overrides(CLI::App* app, Overrides& o, bool with_mode = true) {
  app->add_option("--seed", o.seed, "Random seed");
  if (with_mode) {
    app->add_option("--mode", o.mode,
                    "vanilla, tc, ca, ha, lm or coma (also +ca style)");
  }
  app->add_option("--tau", o.tau, "Attention window half-width");
}

int cmd_gen_data(const std::string& config, const Overrides& o,
                 const std::string& out, std::size_t n_train, std::size_t n_dev,
                 std::size_t n_test) {
  const RunConfig rc = load_run_config(config, o);
  const fs::path dir(out);
  fs::create_directories(dir);
  const std::pair<const char*, std::size_t> splits[] = {
      {"train", n_train}, {"dev", n_dev}, {"test", n_test}};
  std::uint64_t stream = 0;
  for (const auto& [name, count] : splits) {
    write_dataset(dir / name, gen_dataset(rc.task, count, stream++));
    std::cerr << name << ": " << count << " utterances\n";
  }
  std::ofstream cs(dir / "charset.txt");
  rc.task.vocab.write(cs);
  std::ofstream(dir / "task.json") << Json(rc.task).dump(2) << '\n';
  return 0;
}

ModelConfig with_data_charset(ModelConfig cfg, const fs::path& data) {
  if (fs::exists(data / "charset.txt")) {
    cfg.charset = Charset::load(data / "charset.txt");
  }
  if (fs::exists(data / "task.json")) {
    cfg.encoder.input_dim =
        load_json(data / "task.json").get<SynthTaskSpec>().feature_dim;
  }
  cfg.sync();
  return cfg;
}

int cmd_train(const std::string& config, const Overrides& o,
              const std::string& data, const std::string& out,
              const std::string& metrics_path) {
  RunConfig rc = load_run_config(config, o);
  const fs::path dir(data);
  rc.model = with_data_charset(rc.model, dir);
  rc.model.validate();
  rc.train.checkpoint = out;
  const auto tr = prepare_examples(read_dataset(dir / "train"), rc.model, &std::cerr);
  const auto dv = prepare_examples(read_dataset(dir / "dev"), rc.model, &std::cerr);
  Model model(rc.model, rc.train.seed);
  std::ofstream mfile;
  std::ostream* metrics = &std::cout;
  if (!metrics_path.empty()) {
    mfile.open(metrics_path);
    metrics = &mfile;
  }
  train(model, tr, dv, rc.train, metrics, &std::cerr);
  save_checkpoint(out, model);
  return 0;
}

int cmd_decode(const std::string& model_path, const std::string& data,
               const std::string& out) {
  const Model model = load_checkpoint(model_path);
  const Dataset ds = read_dataset(data);
  std::vector<std::pair<std::string, std::string>> lines(ds.size());
  const auto n = static_cast<std::ptrdiff_t>(ds.size());
#pragma omp parallel for schedule(dynamic, 1)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    lines[i] = {ds[i].id, model.transcribe(ds[i].features).text()};
  }
  if (out.empty() || out == "-") {
    for (const auto& [id, text] : lines) std::cout << id << '\t' << text << '\n';
  } else {
    write_transcripts(out, lines);
  }
  return 0;
}

int cmd_score(const std::string& ref_path, const std::string& hyp_path) {
  const auto refs = read_transcripts(ref_path);
  std::unordered_map<std::string, std::string> hyps;
  for (auto& [id, text] : read_transcripts(hyp_path)) hyps[id] = text;
  ErrorCounts chars, words;
  std::size_t missing = 0;
  for (const auto& [id, text] : refs) {
    auto it = hyps.find(id);
    if (it == hyps.end()) ++missing;
    const Transcript ref = Transcript::from_text(text);
    const Transcript hyp =
        Transcript::from_text(it == hyps.end() ? "" : it->second);
    chars += char_errors(ref, hyp);
    words += word_errors(ref, hyp);
  }
  if (missing) std::cerr << "warning: " << missing << " utterances without hypothesis\n";
  std::printf("utterances\t%zu\n", refs.size());
  std::printf("CER\t%.2f\t(%zu/%zu)\n", 100.0 * chars.rate(), chars.errors,
              chars.ref_tokens);
  std::printf("WER\t%.2f\t(%zu/%zu)\n", 100.0 * words.rate(), words.errors,
              words.ref_tokens);
  return 0;
}

int cmd_ablate(const std::string& config, const Overrides& o,
               const std::string& data, const std::vector<std::string>& modes) {
  RunConfig rc = load_run_config(config, o);
  const fs::path dir(data);
  rc.model = with_data_charset(rc.model, dir);
  std::vector<AttnMode> list;
  for (const auto& m : modes) list.push_back(parse_mode(m));
  if (list.empty()) list.assign(kAllModes.begin(), kAllModes.end());
  const auto rows =
      ablate(rc.model, read_dataset(dir / "train"), read_dataset(dir / "dev"),
             read_dataset(dir / "test"), rc.train, list, &std::cerr);
  std::cout << format_ablation_table(rows);
  return 0;
}

int cmd_grad_check(const std::string& config, const Overrides& o) {
  RunConfig rc;
  // Small default geometry: n = 8, K = 5, tau = 2, T = 6.
  rc.model.encoder = EncoderConfig{4, 1, 8, false, 1, 1, 8};
  rc.model.charset = Charset::toy(3);
  rc.model.attn.set_mode(AttnMode::kComa);
  if (!config.empty()) rc = load_run_config(config, {});
  if (o.mode) rc.model.attn.set_mode(parse_mode(*o.mode));
  if (o.tau) rc.model.attn.tau = *o.tau;
  rc.model.sync();
  const GradCheckReport r = grad_check(rc.model, o.seed.value_or(1));
  std::cout << format_grad_check(r);
  return r.passed ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Attention-augmented CTC toolkit"};
  app.require_subcommand(1);
  int threads = 0;
  app.add_option("--threads", threads, "Worker threads (0 = OpenMP default)");

  std::string config, data, out, metrics, model, ref, hyp;
  std::size_t n_train = 2000, n_dev = 200, n_test = 200;
  std::vector<std::string> modes;
  Overrides ov;

  auto* gen = app.add_subcommand("gen-data", "Generate the synthetic toy task");
  gen->add_option("--config", config, "JSON config file");
  gen->add_option("--out", out, "Output directory")->required();
  gen->add_option("--train", n_train, "Training utterances");
  gen->add_option("--dev", n_dev, "Dev utterances");
  gen->add_option("--test", n_test, "Test utterances");
  gen->add_option("--seed", ov.seed, "Random seed");

  auto* tr = app.add_subcommand("train", "Train a model");
  tr->add_option("--config", config, "JSON config file");
  tr->add_option("--data", data, "Dataset directory (train/, dev/)")->required();
  tr->add_option("--out", out, "Checkpoint path")->required();
  tr->add_option("--metrics", metrics, "Per-epoch TSV metrics (default stdout)");
  tr->add_option("--epochs", ov.epochs, "Override epoch count");
  add_overrides(tr, ov);

  auto* dec = app.add_subcommand("decode", "Greedy-decode a dataset split");
  dec->add_option("--model", model, "Checkpoint")->required();
  dec->add_option("--data", data, "Split directory (feats/, text)")->required();
  dec->add_option("--out", out, "Transcript file (default stdout)");

  auto* ab = app.add_subcommand("ablate", "Train and score every attention mode");
  ab->add_option("--config", config, "JSON config file");
  ab->add_option("--data", data, "Dataset directory")->required();
  ab->add_option("--modes", modes, "Subset of modes");
  ab->add_option("--epochs", ov.epochs, "Override epoch count");
  add_overrides(ab, ov, false);

  auto* gc = app.add_subcommand("grad-check", "Finite-difference gradient check");
  gc->add_option("--config", config, "JSON config file");
  add_overrides(gc, ov);

  auto* sc = app.add_subcommand("score", "CER/WER between transcript files");
  sc->add_option("--ref", ref, "Reference transcripts")->required();
  sc->add_option("--hyp", hyp, "Hypothesis transcripts")->required();

  CLI11_PARSE(app, argc, argv);
  if (threads > 0) omp_set_num_threads(threads);

  try {
    if (*gen) return cmd_gen_data(config, ov, out, n_train, n_dev, n_test);
    if (*tr) return cmd_train(config, ov, data, out, metrics);
    if (*dec) return cmd_decode(model, data, out);
    if (*ab) return cmd_ablate(config, ov, data, modes);
    if (*gc) return cmd_grad_check(config, ov);
    if (*sc) return cmd_score(ref, hyp);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}

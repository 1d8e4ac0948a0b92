#include "cli.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "sfg/checkpoint.hpp"
#include "sfg/denoiser.hpp"
#include "sfg/errors.hpp"
#include "sfg/eval.hpp"
#include "sfg/guidance.hpp"
#include "sfg/image_io.hpp"
#include "sfg/sampler.hpp"
#include "sfg/schedule.hpp"
#include "sfg/text_encoder.hpp"
#include "sfg/toy_world.hpp"
#include "sfg/trainer.hpp"

namespace sfg::cli {

namespace fs = std::filesystem;

namespace {

constexpr const char* kEncoderPrefix = "encoder.";
constexpr int kImageScale = 8;

// One `key = value` per line; '#' starts a comment line. Values run to the end
// of the line, so prompts need no quoting. Keys are long flag names.
class FlatConfig : public CLI::Config {
 public:
  std::string to_config(const CLI::App*, bool, bool, std::string) const override { return {}; }

  std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
    std::vector<CLI::ConfigItem> items;
    std::string line;
    int line_no = 0;
    while (std::getline(input, line)) {
      ++line_no;
      const std::string trimmed = CLI::detail::trim_copy(line);
      if (trimmed.empty() || trimmed.front() == '#') continue;
      const auto eq = trimmed.find('=');
      if (eq == std::string::npos) {
        throw CLI::ConversionError("config line " + std::to_string(line_no) + ": expected key=value");
      }
      CLI::ConfigItem item;
      item.name = CLI::detail::trim_copy(trimmed.substr(0, eq));
      item.inputs = {CLI::detail::trim_copy(trimmed.substr(eq + 1))};
      items.push_back(std::move(item));
    }
    return items;
  }
};

struct Options {
  std::uint64_t seed = 7;
  std::string out = "sfg_out";
  std::string checkpoint;

  // Model and text encoder.
  int layers = 2;
  int width = 32;
  int heads = 1;
  int mlp_hidden = 64;
  int text_dim = 32;
  std::uint64_t model_seed = 3;
  std::uint64_t encoder_seed = 1234;

  // Schedule.
  int timesteps = 20;
  double lambda_max = kDefaultLambdaMax;
  double lambda_min = kDefaultLambdaMin;

  // Guidance and sampling.
  std::string prompt;
  std::string neg;
  std::string mode = "segfree";
  double w = 7.5;
  double w_bar = 2.5;
  double a = 10.0;
  int ts = -1;
  double variance_scale = 1.0;
  int at_step = 1;

  // Training.
  int train_steps = 8000;
  int batch = 8;
  double lr = 0.1;
  double dropout = 0.1;
  int scenes = 4000;
  std::uint64_t data_seed = 1;

  // Evaluation.
  std::string corpus;
  int corpus_size = 5000;
  std::string scores;
  std::size_t total = 150;
  std::string bands = "90,50,10";
  std::string embeddings;
  std::string sizes = "50,100,200,500,1000";
  int trials = 10;
  int repeats = 100;
  std::string frechet_a;
  std::string frechet_b;
};

// Everything a sampling command needs, loaded once.
struct Model {
  DenoiserParams params;
  EncoderParams encoder;
  NoiseSchedule sched;
};

std::vector<double> parse_reals(const std::string& text, const char* what) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    cell = CLI::detail::trim_copy(cell);
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(cell, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != cell.size()) throw ConfigError(std::string("bad number in ") + what + ": '" + cell + "'");
    out.push_back(v);
  }
  if (out.empty()) throw ConfigError(std::string(what) + " is empty");
  return out;
}

std::vector<std::size_t> parse_sizes(const std::string& text) {
  std::vector<std::size_t> out;
  for (double v : parse_reals(text, "sizes")) {
    if (v < 2 || v != static_cast<double>(static_cast<std::size_t>(v))) {
      throw ConfigError("sizes must be integers >= 2");
    }
    out.push_back(static_cast<std::size_t>(v));
  }
  return out;
}

ModelConfig model_config(const Options& o) {
  ModelConfig mc;
  mc.layers = o.layers;
  mc.width = o.width;
  mc.heads = o.heads;
  mc.mlp_hidden = o.mlp_hidden;
  mc.text_dim = o.text_dim;
  mc.validate();
  return mc;
}

EncoderConfig encoder_config(const Options& o) {
  EncoderConfig ec;
  ec.text_dim = o.text_dim;
  ec.seed = o.encoder_seed;
  return ec;
}

GuidanceConfig guidance_config(const Options& o, GuidanceMode mode) {
  GuidanceConfig g;
  g.w = o.w;
  g.w_bar = o.w_bar;
  g.a = o.a;
  g.t_s = o.ts;
  g.mode = mode;
  g.validate(o.timesteps);
  return g;
}

// Checkpoint when given, otherwise freshly initialised weights from the flags.
Model load_model(const Options& o) {
  Model m;
  m.sched = make_schedule(o.timesteps, o.lambda_max, o.lambda_min);
  if (o.checkpoint.empty()) {
    m.params = DenoiserParams::init(model_config(o), o.model_seed);
    m.encoder = EncoderParams::random(encoder_config(o));
    return m;
  }
  const ParamSet all = load_tensors(o.checkpoint);
  m.encoder = EncoderParams::from_params(all.with_prefix_stripped(kEncoderPrefix));
  ParamSet denoiser;
  for (std::size_t i = 0; i < all.size(); ++i) {
    if (all.name(i).rfind(kEncoderPrefix, 0) != 0) denoiser.add(all.name(i), all.tensor(i));
  }
  m.params = DenoiserParams::from_params(denoiser);
  if (m.params.config().text_dim != m.encoder.config.text_dim) {
    throw FormatError(o.checkpoint + ": encoder and denoiser text widths differ");
  }
  return m;
}

std::string format_real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path.string());
  out << text;
}

fs::path prepare_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw FormatError("cannot create output directory " + dir.string());
  return dir;
}

// Resolved values of every option, in declaration order.
std::string config_snapshot(const CLI::App& app, const std::string& command) {
  std::ostringstream out;
  out << "# sfg " << command << "\n";
  for (const CLI::Option* opt : app.get_options()) {
    const std::string name = opt->get_single_name();
    if (name == "help" || name == "config" || opt->get_positional()) continue;
    std::string value;
    if (opt->count() > 0) {
      const auto& results = opt->results();
      for (std::size_t i = 0; i < results.size(); ++i) value += (i ? " " : "") + results[i];
    } else {
      value = opt->get_default_str();
    }
    out << name << '=' << value << '\n';
  }
  return out.str();
}

void write_sample_outputs(const fs::path& dir, const SampleResult& result, const ModelConfig& mc, int tokens) {
  prepare_dir(dir);
  write_pgm(dir / "z0.pgm", latent_image(result.z0, mc.grid_h, mc.grid_w, kImageScale));
  ParamSet z;
  z.add("z0", result.z0);
  save_tensors(dir / "z0.sfge", z);
  std::ofstream trace(dir / "trace.txt", std::ios::binary);
  if (!trace) throw FormatError("cannot write " + (dir / "trace.txt").string());
  result.trace.write(trace);
  const auto& last = result.trace.steps.back();
  if (last.semantics) {
    for (std::size_t l = 0; l < last.semantics->layers.size(); ++l) {
      write_pgm(dir / ("semantic_l" + std::to_string(l) + ".pgm"),
                semantic_image(last.semantics->layers[l], tokens, mc.grid_h, mc.grid_w, kImageScale));
    }
  }
}

std::vector<std::string> load_corpus(const Options& o) {
  std::vector<std::string> prompts;
  if (!o.corpus.empty()) {
    std::ifstream in(o.corpus);
    if (!in) throw FormatError("cannot open corpus " + o.corpus);
    std::string line;
    while (std::getline(in, line)) {
      line = CLI::detail::trim_copy(line);
      if (!line.empty()) prompts.push_back(line);
    }
    if (prompts.empty()) throw InsufficientDataError("corpus " + o.corpus + " has no prompts");
    return prompts;
  }
  if (o.corpus_size < 1) throw ConfigError("corpus-size must be >= 1");
  for (const ToyScene& s : gen_dataset(o.corpus_size, Rng(o.data_seed, 0xC0))) prompts.push_back(s.prompt);
  return prompts;
}

std::vector<double> load_scores(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open scores " + path);
  std::vector<double> scores;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    line = CLI::detail::trim_copy(line);
    if (line.empty()) continue;
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(line, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != line.size()) {
      if (first) {
        first = false;
        continue;  // header
      }
      throw FormatError(path + ": non-numeric score '" + line + "'");
    }
    first = false;
    scores.push_back(v);
  }
  return scores;
}

// --- subcommands -------------------------------------------------------------

void cmd_train(const Options& o, const fs::path& dir, std::ostream& out) {
  if (o.scenes < 1) throw ConfigError("scenes must be >= 1");
  const ModelConfig mc = model_config(o);
  const EncoderParams encoder = EncoderParams::random(encoder_config(o));
  const NoiseSchedule sched = make_schedule(o.timesteps, o.lambda_max, o.lambda_min);
  const std::vector<ToyScene> scenes = gen_dataset(o.scenes, Rng(o.data_seed, 0xDA));
  std::vector<TrainingExample> data;
  data.reserve(scenes.size());
  for (const ToyScene& s : scenes) data.push_back({s.latent, encode(tokenize(s.prompt), encoder)});
  for (std::size_t i = 0; i < std::min<std::size_t>(4, scenes.size()); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "scene_%03zu.pgm", i);
    write_pgm(dir / name, latent_image(scenes[i].latent, mc.grid_h, mc.grid_w, kImageScale));
  }

  TrainConfig tc;
  tc.steps = o.train_steps;
  tc.batch = o.batch;
  tc.learning_rate = o.lr;
  tc.dropout = o.dropout;
  DenoiserParams params = DenoiserParams::init(mc, o.model_seed);
  Rng rng(o.seed, 0x7A);
  const int report_every = std::max(1, tc.steps / 20);
  const std::vector<double> losses = train(params, data, null_embeddings(encoder), tc, sched, rng, [&](int step, double loss) {
    if (step % report_every == 0) out << "step " << step << " loss " << loss << '\n';
  });

  std::ostringstream csv;
  csv << "step,loss\n";
  for (std::size_t i = 0; i < losses.size(); ++i) csv << i + 1 << ',' << format_real(losses[i]) << '\n';
  write_text(dir / "loss.csv", csv.str());

  ParamSet ckpt = params.to_params();
  ckpt.merge(encoder.to_params(), kEncoderPrefix);
  const fs::path path = o.checkpoint.empty() ? dir / "model.sfge" : fs::path(o.checkpoint);
  save_tensors(path, ckpt);
  out << "checkpoint " << path.string() << '\n';
}

void cmd_sample(const Options& o, const fs::path& dir, std::ostream& out) {
  const Model m = load_model(o);
  const TextEmbeddings c = encode(tokenize(o.prompt), m.encoder);
  const TextEmbeddings neg = encode(tokenize(o.neg), m.encoder);
  const GuidanceConfig g = guidance_config(o, parse_guidance_mode(o.mode));
  Rng rng(o.seed, 0x5A);
  SampleOptions so;
  so.variance_scale = o.variance_scale;
  const SampleResult r = sample(m.params, c, neg, g, m.sched, rng, so);
  write_sample_outputs(dir, r, m.params.config(), static_cast<int>(c.content_tokens()));
  out << "z0 " << (dir / "z0.pgm").string() << '\n';
}

void cmd_compare(const Options& o, const fs::path& dir, std::ostream& out) {
  const Model m = load_model(o);
  const TextEmbeddings c = encode(tokenize(o.prompt), m.encoder);
  const TextEmbeddings neg = encode(tokenize(o.neg), m.encoder);
  SampleOptions so;
  so.variance_scale = o.variance_scale;
  for (GuidanceMode mode : {GuidanceMode::kClassifierFree, GuidanceMode::kSegmentationFree}) {
    Rng rng(o.seed, 0x5A);
    const SampleResult r = sample(m.params, c, neg, guidance_config(o, mode), m.sched, rng, so);
    const std::string tag = mode == GuidanceMode::kClassifierFree ? "cf" : "sf";
    write_sample_outputs(dir / tag, r, m.params.config(), static_cast<int>(c.content_tokens()));
    out << tag << " " << (dir / tag / "z0.pgm").string() << '\n';
  }
}

void cmd_frechet(const Options& o, const fs::path& dir, std::ostream& out) {
  const double d = frechet(read_embeddings(o.frechet_a), read_embeddings(o.frechet_b));
  write_text(dir / "frechet.txt", format_real(d) + "\n");
  out << format_real(d) << '\n';
}

void cmd_subset(const Options& o, const fs::path& dir, std::ostream& out) {
  const std::vector<std::string> prompts = load_corpus(o);
  std::vector<double> scores;
  if (!o.scores.empty()) {
    scores = load_scores(o.scores);
    if (scores.size() != prompts.size()) {
      throw DimensionError("scores file has " + std::to_string(scores.size()) + " entries for " +
                           std::to_string(prompts.size()) + " prompts");
    }
  } else {
    // One guided sample per prompt, scored by the frozen alignment model.
    const Model m = load_model(o);
    const AlignmentModel align = fit_alignment_model(m.encoder, {}, o.seed);
    const TextEmbeddings neg = encode(tokenize(o.neg), m.encoder);
    const GuidanceConfig g = guidance_config(o, parse_guidance_mode(o.mode));
    const Rng base(o.seed, 0x5B);
    for (std::size_t i = 0; i < prompts.size(); ++i) {
      Rng rng = base.substream(i);
      const SampleResult r = sample(m.params, encode(tokenize(prompts[i]), m.encoder), neg, g, m.sched, rng);
      scores.push_back(alignment_score(r.z0, prompts[i], m.encoder, align));
    }
  }
  const std::vector<double> bands = parse_reals(o.bands, "bands");
  const SubsetReport report = subset_select(prompts, scores, o.total, bands);
  std::ofstream csv(dir / "subset.csv", std::ios::binary);
  if (!csv) throw FormatError("cannot write subset.csv");
  report.write_csv(csv);
  for (const SubsetBand& b : report.bands) {
    out << "band " << b.percentile << ": " << b.items.size() << " prompts around rank " << b.center_rank << '\n';
  }
}

void cmd_curve(const Options& o, const fs::path& dir, std::ostream& out) {
  EmbeddingSet set;
  if (!o.embeddings.empty()) {
    set = read_embeddings(o.embeddings);
  } else {
    Options corpus_opts = o;
    if (o.corpus.empty() && o.corpus_size == Options{}.corpus_size) corpus_opts.corpus_size = 3000;
    set = prompt_embeddings(load_corpus(corpus_opts), EncoderParams::random(encoder_config(o)));
  }
  const std::vector<std::size_t> sizes = parse_sizes(o.sizes);
  const std::vector<CurveRow> rows = diversity_curve(set, sizes, o.trials, Rng(o.seed, 0xCC));
  std::ofstream csv(dir / "curve.csv", std::ios::binary);
  if (!csv) throw FormatError("cannot write curve.csv");
  write_curve_csv(csv, rows);
  write_curve_csv(out, rows);
}

void cmd_bench(const Options& o, const fs::path& dir, std::ostream& out) {
  const Model m = load_model(o);
  const std::string prompt = o.prompt.empty() ? "a red square left of a blue circle" : o.prompt;
  const TextEmbeddings c = encode(tokenize(prompt), m.encoder);
  const TextEmbeddings neg = encode(tokenize(o.neg), m.encoder);
  const StepTiming t = step_benchmark(m.params, c, neg, guidance_config(o, GuidanceMode::kSegmentationFree), m.sched,
                                      o.repeats);
  std::ostringstream report;
  report << "mode,mean_seconds,passes\n"
         << "cf," << format_real(t.classifier_free_seconds) << ',' << t.classifier_free_passes << '\n'
         << "sf," << format_real(t.segmentation_free_seconds) << ',' << t.segmentation_free_passes << '\n';
  write_text(dir / "bench.csv", report.str());
  out << report.str() << "ratio " << t.segmentation_free_seconds / t.classifier_free_seconds << '\n';
}

void cmd_dump_attn(const Options& o, const fs::path& dir, std::ostream& out) {
  const Model m = load_model(o);
  const TextEmbeddings c = encode(tokenize(o.prompt), m.encoder);
  if (c.content_tokens() == 0) throw EmptyPromptError("dump-attn needs a non-empty prompt");
  const TextEmbeddings neg = encode(tokenize(o.neg), m.encoder);
  if (o.at_step < 1 || o.at_step > o.timesteps) throw ConfigError("at-step must lie in 1..timesteps");
  Rng rng(o.seed, 0x5A);
  SampleOptions so;
  so.capture_attention = true;
  so.variance_scale = o.variance_scale;
  const SampleResult r = sample(m.params, c, neg, guidance_config(o, parse_guidance_mode(o.mode)), m.sched, rng, so);
  const TraceEntry& entry = r.trace.steps[static_cast<std::size_t>(o.timesteps - o.at_step)];
  const ModelConfig& mc = m.params.config();
  for (std::size_t l = 0; l < entry.attention.size(); ++l) {
    const Tensor& wts = entry.attention[l].weights;
    for (std::size_t i = 0; i < wts.cols(); ++i) {
      write_pgm(dir / ("attn_l" + std::to_string(l) + "_tok" + std::to_string(i) + ".pgm"),
                attention_image(wts, i, mc.grid_h, mc.grid_w, kImageScale));
    }
    write_pgm(dir / ("semantic_l" + std::to_string(l) + ".pgm"),
              semantic_image(local_semantics(wts), static_cast<int>(c.content_tokens()), mc.grid_h, mc.grid_w,
                             kImageScale));
  }
  out << "dumped " << entry.attention.size() << " layers at t=" << entry.t << '\n';
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  Options o;
  CLI::App app{"Segmentation-free guidance toy diffusion tool"};
  app.name("sfg");
  app.config_formatter(std::make_shared<FlatConfig>());
  app.set_config("--config", "", "Flat key=value file; command-line flags override it");
  app.option_defaults()->always_capture_default();

  app.add_option("--seed", o.seed, "Sampling / training seed");
  app.add_option("--out", o.out, "Output directory")->envname("SFG_OUT_DIR");
  app.add_option("--checkpoint", o.checkpoint, "Model checkpoint (written by train, read by the others)");
  app.add_option("--layers", o.layers, "Transformer blocks");
  app.add_option("--width", o.width, "Model width");
  app.add_option("--heads", o.heads, "Attention heads");
  app.add_option("--mlp-hidden", o.mlp_hidden, "MLP hidden width");
  app.add_option("--text-dim", o.text_dim, "Text embedding width");
  app.add_option("--model-seed", o.model_seed, "Denoiser initialisation seed");
  app.add_option("--encoder-seed", o.encoder_seed, "Text encoder seed");
  app.add_option("--timesteps", o.timesteps, "Number of reverse steps T");
  app.add_option("--lambda-max", o.lambda_max, "log-SNR at t = 1");
  app.add_option("--lambda-min", o.lambda_min, "log-SNR at t = T");
  app.add_option("--prompt", o.prompt, "Prompt");
  app.add_option("--neg", o.neg, "Negative prompt (empty by default)");
  app.add_option("--mode", o.mode, "Guidance mode: segfree or cfg");
  app.add_option("--w", o.w, "Classifier-free scale w");
  app.add_option("--wbar", o.w_bar, "Segmentation-free scale w-bar");
  app.add_option("--a", o.a, "Attention override scale a");
  app.add_option("--ts", o.ts, "Classifier-free iterations t_s (-1 means T/2)");
  app.add_option("--variance-scale", o.variance_scale, "Multiplier of the posterior stddev");
  app.add_option("--at-step", o.at_step, "dump-attn: step to dump");
  app.add_option("--train-steps", o.train_steps, "Training steps");
  app.add_option("--batch", o.batch, "Minibatch size");
  app.add_option("--lr", o.lr, "Learning rate");
  app.add_option("--dropout", o.dropout, "Conditioning dropout probability");
  app.add_option("--scenes", o.scenes, "Training scenes");
  app.add_option("--data-seed", o.data_seed, "Toy data seed");
  app.add_option("--corpus", o.corpus, "Prompt corpus, one per line (default: toy prompts)");
  app.add_option("--corpus-size", o.corpus_size, "Toy corpus size when --corpus is absent");
  app.add_option("--scores", o.scores, "subset: precomputed scores, one per corpus line");
  app.add_option("--total", o.total, "subset: prompts to select");
  app.add_option("--bands", o.bands, "subset: comma-separated percentiles");
  app.add_option("--embeddings", o.embeddings, "curve: embedding file (SFGE or CSV)");
  app.add_option("--sizes", o.sizes, "curve: comma-separated subset sizes");
  app.add_option("--trials", o.trials, "curve: trials per size");
  app.add_option("--repeats", o.repeats, "bench: timed steps per mode");

  using Handler = std::function<void(const Options&, const fs::path&, std::ostream&)>;
  std::map<CLI::App*, std::pair<std::string, Handler>> handlers;
  auto add = [&](const char* name, const char* help, Handler h) {
    CLI::App* sub = app.add_subcommand(name, help)->fallthrough();
    handlers[sub] = {name, std::move(h)};
    return sub;
  };
  add("train", "Generate toy scenes and train a checkpoint", cmd_train);
  add("sample", "Sample one prompt: z0 PGM, tensor and trace", cmd_sample);
  add("compare", "Classifier-free and segmentation-free runs from one seed", cmd_compare);
  CLI::App* fr = add("frechet", "Frechet distance between two embedding files", cmd_frechet);
  fr->add_option("a", o.frechet_a, "First embedding file")->required();
  fr->add_option("b", o.frechet_b, "Second embedding file")->required();
  add("subset", "Percentile-band prompt subset selection", cmd_subset);
  add("curve", "Diversity curve: Frechet distance of random subsets to the full set", cmd_curve);
  add("bench", "Time classifier-free vs segmentation-free steps", cmd_bench);
  add("dump-attn", "Per-layer cross-attention and semantic maps as PGM", cmd_dump_attn);
  app.require_subcommand(1);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    for (const auto& [sub, entry] : handlers) {
      if (!sub->parsed()) continue;
      const fs::path dir = prepare_dir(o.out);
      write_text(dir / "run_config.ini", config_snapshot(app, entry.first));
      entry.second(o, dir, out);
    }
  } catch (const ConfigError& e) {
    err << "sfg: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "sfg: " << e.what() << '\n';
    return kExitData;
  }
  return kExitOk;
}

}  // namespace sfg::cli

#include "vfd/cli/commands.hpp"

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

#include "CLI11.hpp"

#include "vfd/cli/gradient_suite.hpp"
#include "vfd/datagen/datagen.hpp"
#include "vfd/detector/detector.hpp"
#include "vfd/errors.hpp"
#include "vfd/pipeline/checkpoint.hpp"

namespace vfd::cli {
namespace {

namespace fs = std::filesystem;

// Batch-draw streams under the run seed.
constexpr std::uint64_t kPretrainStream = 0xB47C0001ULL;
constexpr std::uint64_t kFinetuneStream = 0xB47C0002ULL;

void require_file(const fs::path& path, const std::string& what) {
  if (!fs::is_regular_file(path)) throw InputError(what + " not found: " + path.string());
}

std::string format_lambda(double lambda) {
  std::ostringstream s;
  s << std::setprecision(6) << lambda;
  return s.str();
}

class LossLog {
 public:
  LossLog(const fs::path& path, pipeline::Stage stage) : out_(path) {
    if (!out_) throw InputError("cannot write " + path.string());
    out_.precision(17);
    out_ << "step";
    for (const std::string& c : pipeline::loss_columns(stage)) out_ << ',' << c;
    out_ << ",lr\n";
  }
  void append(const pipeline::LossRow& row) {
    out_ << row.step;
    for (double v : row.terms) out_ << ',' << v;
    out_ << ',' << row.learning_rate << '\n';
    out_.flush();
  }

 private:
  std::ofstream out_;
};

int train(RunConfig& config, pipeline::Stage stage, std::ostream& out) {
  const pipeline::TrainConfig train_config = train_config_from(config, stage);
  const fs::path manifest = config.require("manifest");
  const fs::path dir = config.require("out");
  require_file(manifest, "manifest");
  const bool finetune = stage == pipeline::Stage::kFinetune;
  if (finetune && config.has("init") == config.flag("from-scratch")) {
    throw ConfigError(
        "finetune needs exactly one of --init <checkpoint> or --from-scratch");
  }
  if (finetune && config.has("init")) require_file(config.str("init"), "checkpoint");
  config.write(dir, pipeline::stage_name(stage));

  const pipeline::Dataset data = pipeline::Dataset::from_manifest(manifest);
  pipeline::Checkpoint ck;
  if (finetune && config.has("init")) {
    ck.model = pipeline::load_checkpoint(config.str("init")).model;
  } else {
    const auto identities = pipeline::training_identities(data, train_config.fraction, train_config.seed);
    encoder::EncoderConfig voice = voice_config_from(config);
    encoder::EncoderConfig face = face_config_from(config);
    // Fine-tuning never reads the heads; two classes keeps them valid.
    const std::size_t classes = finetune ? std::max<std::size_t>(2, identities.num_classes())
                                         : identities.num_classes();
    voice.num_identities = face.num_identities = classes;
    ck.model = encoder::VfdModel::create(voice, face, train_config.seed);
  }
  ck.rng = num::Rng(train_config.seed).fork(finetune ? kFinetuneStream : kPretrainStream);

  pipeline::Trainer trainer(data, ck.model, ck.optimizer, ck.rng, train_config);
  LossLog log(dir / "loss.csv", stage);
  const std::size_t save_every = config.count("save-every");
  const std::size_t report_every = std::max<std::size_t>(1, train_config.steps / 10);
  const fs::path checkpoint = dir / "checkpoint.vfd";
  trainer.run([&](const pipeline::LossRow& row) {
    log.append(row);
    if (save_every > 0 && row.step % save_every == 0) pipeline::save_checkpoint(checkpoint, ck);
    if (row.step % report_every == 0) {
      out << pipeline::stage_name(stage) << " step " << row.step << '/' << train_config.steps
          << " loss " << row.terms.back() << '\n'
          << std::flush;
    }
  });
  pipeline::save_checkpoint(checkpoint, ck);
  out << "wrote " << checkpoint.string() << '\n';
  return kExitOk;
}

}  // namespace

encoder::EncoderConfig face_config_from(const RunConfig& config) {
  encoder::EncoderConfig c = encoder::EncoderConfig::face_default();
  c.depth = config.count("depth");
  c.heads = config.count("heads");
  c.token_dim = config.count("dim");
  c.output_dim = config.count("embed-dim");
  c.patch_h = c.patch_w = config.count("face-patch");
  c.feed_forward = config.flag("feed-forward");
  c.literal_mode = config.flag("literal");
  if (c.literal_mode) c.heads = 1;
  return c;
}

encoder::EncoderConfig voice_config_from(const RunConfig& config) {
  encoder::EncoderConfig c = encoder::EncoderConfig::voice_default();
  c.depth = config.count("depth");
  c.heads = config.count("heads");
  c.token_dim = config.count("dim");
  c.output_dim = config.count("embed-dim");
  c.patch_h = config.count("voice-patch-h");
  c.patch_w = config.count("voice-patch-w");
  c.feed_forward = config.flag("feed-forward");
  c.literal_mode = config.flag("literal");
  if (c.literal_mode) c.heads = 1;
  return c;
}

pipeline::TrainConfig train_config_from(const RunConfig& config, pipeline::Stage stage) {
  pipeline::TrainConfig c = stage == pipeline::Stage::kPretrain
                                ? pipeline::TrainConfig::pretrain_defaults()
                                : pipeline::TrainConfig::finetune_defaults();
  if (config.has("steps")) c.steps = config.count("steps");
  if (config.has("lr")) c.learning_rate = config.real("lr");
  c.weight_decay = config.real("weight-decay");
  c.batch_size = config.count("batch-size");
  c.negatives_u = config.count("negatives-u");
  c.negatives_q = config.count("negatives-q");
  c.temperature = config.real("temperature");
  c.schedule = pipeline::parse_schedule(config.str("schedule"));
  c.fraction = config.real("fraction");
  c.seed = config.u64("seed");
  c.validate();
  return c;
}

int cmd_synth(RunConfig& config, std::ostream& out) {
  datagen::SynthSpec spec;
  spec.num_identities = config.count("identities");
  spec.real_videos_per_identity = config.count("real-per-id");
  spec.fake_videos = config.count("fakes");
  spec.observation_noise = config.real("noise");
  spec.train_fraction = config.real("train-fraction");
  spec.val_fraction = config.real("val-fraction");
  spec.seed = config.u64("seed");
  spec.output_directory = config.require("out");
  spec.validate();
  config.write(spec.output_directory, "synth");
  const datagen::GeneratedDataset data = datagen::generate(spec);
  std::size_t reals = 0;
  for (const auto& r : data.records) reals += r.real ? 1 : 0;
  out << "wrote " << data.records.size() << " records (" << reals << " real, "
      << data.records.size() - reals << " fake) to " << data.manifest.string() << '\n';
  return kExitOk;
}

int cmd_pretrain(RunConfig& config, std::ostream& out) {
  // Resolve stage defaults so the echoed config is the effective one.
  const auto defaults = pipeline::TrainConfig::pretrain_defaults();
  if (!config.has("steps")) config.set("steps", std::to_string(defaults.steps));
  if (!config.has("lr")) config.set("lr", "1e-4");
  return train(config, pipeline::Stage::kPretrain, out);
}

int cmd_finetune(RunConfig& config, std::ostream& out) {
  const auto defaults = pipeline::TrainConfig::finetune_defaults();
  if (!config.has("steps")) config.set("steps", std::to_string(defaults.steps));
  if (!config.has("lr")) config.set("lr", "5e-6");
  return train(config, pipeline::Stage::kFinetune, out);
}

int cmd_eval(RunConfig& config, std::ostream& out) {
  const fs::path checkpoint = config.require("checkpoint");
  const fs::path manifest = config.require("manifest");
  const fs::path dir = config.require("out");
  require_file(checkpoint, "checkpoint");
  require_file(manifest, "manifest");
  const datagen::Split split = datagen::parse_split(config.str("split"));
  const datagen::Split threshold_split = datagen::parse_split(config.str("threshold-split"));
  config.write(dir, "eval");

  const pipeline::Checkpoint ck = pipeline::load_checkpoint(checkpoint);
  const pipeline::Dataset data = pipeline::Dataset::from_manifest(manifest);
  const std::vector<std::size_t> records = data.select(split);
  if (records.empty()) throw DataError("split " + config.str("split") + " has no records");
  double lambda = 0.0;
  if (config.has("lambda")) {
    lambda = config.real("lambda");
  } else {
    const auto val = detector::score_records(data, data.select(threshold_split), ck.model);
    lambda = detector::select_threshold(val);
  }
  const auto scores = detector::score_records(data, records, ck.model);
  const detector::EvalReport report = detector::compute_metrics(scores, lambda);
  detector::write_report(dir, report);
  out << "split=" << config.str("split") << " n=" << scores.size() << " acc=" << report.acc
      << " auc=" << (report.auc ? std::to_string(*report.auc) : std::string("null"))
      << " lambda=" << format_lambda(lambda) << '\n';
  return kExitOk;
}

int cmd_detect(RunConfig& config, std::ostream& out) {
  const fs::path audio = config.require("audio");
  const fs::path image = config.require("image");
  const fs::path checkpoint = config.require("checkpoint");
  require_file(audio, "audio file");
  require_file(image, "image file");
  require_file(checkpoint, "checkpoint");
  const double lambda = config.has("lambda") ? config.real("lambda") : -0.1;
  if (config.has("out")) config.write(config.str("out"), "detect");

  const pipeline::Checkpoint ck = pipeline::load_checkpoint(checkpoint);
  const frontends::AudioClip clip = frontends::standardize_clip(frontends::read_wav(audio));
  const frontends::FaceImage face = frontends::load_face(image);
  const detector::DetectionDecision d = detector::decide(detector::score_pair(clip, face, ck.model), lambda);
  out << "score=" << std::setprecision(6) << d.similarity << " lambda=" << format_lambda(lambda)
      << " verdict=" << detector::verdict_name(d.verdict) << '\n';
  return d.verdict == detector::Verdict::kReal ? kExitOk : kExitFake;
}

int cmd_gradcheck(RunConfig& config, std::ostream& out) {
  GradientSuiteOptions options;
  options.instances = config.count("instances");
  options.seed = config.u64("seed");
  options.inject_fault = config.str("inject-fault");
  if (!options.inject_fault.empty()) {
    const auto names = gradient_check_names();
    if (std::find(names.begin(), names.end(), options.inject_fault) == names.end()) {
      throw ConfigError("--inject-fault: no gradient check named '" + options.inject_fault + "'");
    }
  }
  if (config.has("out")) config.write(config.str("out"), "gradcheck");
  const auto rows = run_gradient_suite(options);
  print_gradient_table(out, rows);
  const bool ok = std::all_of(rows.begin(), rows.end(), [](const GradientCheckRow& r) { return r.passed; });
  out << (ok ? "all gradient checks passed" : "gradient check FAILED") << '\n';
  return ok ? kExitOk : kExitNumeric;
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Voice-face matching deepfake detector"};
  app.require_subcommand(1);
  struct Command {
    const char* name;
    const char* help;
    int (*fn)(RunConfig&, std::ostream&);
  };
  const Command commands[] = {
      {"synth", "generate a synthetic paired dataset", cmd_synth},
      {"pretrain", "pre-train both encoders (identity + InfoNCE losses)", cmd_pretrain},
      {"finetune", "fine-tune with the real/fake contrastive loss", cmd_finetune},
      {"eval", "score a split and write ACC/AUC reports", cmd_eval},
      {"detect", "score one audio/image pair", cmd_detect},
      {"gradcheck", "finite-difference gradient suite", cmd_gradcheck},
  };
  std::string config_file;
  std::map<std::string, std::string> flag_values;
  std::map<std::string, std::vector<CLI::Option*>> flag_options;
  for (const Command& c : commands) {
    CLI::App* sub = app.add_subcommand(c.name, c.help);
    sub->add_option("--config", config_file, "key=value config file");
    for (const KeySpec& k : config_schema()) {
      const std::string name = "--" + k.name;
      CLI::Option* opt = k.is_flag ? sub->add_flag(name + "{true}", flag_values[k.name], k.help)
                                   : sub->add_option(name, flag_values[k.name], k.help);
      flag_options[k.name].push_back(opt);
    }
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitInput;
  }

  for (const Command& c : commands) {
    if (!app.got_subcommand(c.name)) continue;
    try {
      RunConfig config;
      config.apply_seed_environment();
      if (!config_file.empty()) config.load_file(config_file);
      for (const auto& [key, opts] : flag_options) {
        for (const CLI::Option* o : opts) {
          if (o->count() > 0) config.set(key, flag_values[key]);
        }
      }
      return c.fn(config, out);
    } catch (const NumericError& e) {
      err << "numeric error: " << e.what() << '\n';
      return kExitNumeric;
    } catch (const Error& e) {
      err << "error: " << e.what() << '\n';
      return kExitInput;
    } catch (const fs::filesystem_error& e) {
      err << "error: " << e.what() << '\n';
      return kExitInput;
    }
  }
  return kExitInput;
}

}  // namespace vfd::cli

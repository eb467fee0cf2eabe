#include "membridge/cli.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "membridge/bench.hpp"
#include "membridge/error.hpp"
#include "membridge/niavh.hpp"
#include "membridge/probe_train.hpp"
#include "membridge/scenetiling.hpp"
#include "membridge/stream_io.hpp"

namespace membridge {

namespace {

struct ModelFlags {
  std::size_t dim = 64;
  std::size_t memory_tokens = 8;
  std::size_t heads = 8;
  std::size_t layers = 1;
  std::size_t classes = 4;
  double alpha = 0.5;
  double needle_noise = 0.05;
  std::uint64_t signature_seed = 7;
  std::string retrieve_order = "before";

  ModelConfig model() const {
    ModelConfig m;
    m.bridge.hidden_size = dim;
    m.bridge.memory_tokens = memory_tokens;
    m.bridge.heads = heads;
    m.bridge.bridge_layers = layers;
    m.bridge.retrieve_order =
        retrieve_order == "after" ? RetrieveOrder::AfterBridge : RetrieveOrder::BeforeBridge;
    m.classes = classes;
    m.alpha = alpha;
    return m;
  }

  NeedleTask task() const {
    NeedleTask::Options o;
    o.haystack.dim = dim;
    o.classes = classes;
    o.needle_noise = needle_noise;
    o.signature_seed = signature_seed;
    return NeedleTask(o);
  }
};

void add_model_flags(CLI::App* app, ModelFlags& f) {
  app->add_option("--dim", f.dim, "embedding width");
  app->add_option("--memory-tokens", f.memory_tokens, "memory tokens M");
  app->add_option("--heads", f.heads, "attention heads");
  app->add_option("--layers", f.layers, "bridge layers");
  app->add_option("--classes", f.classes, "needle classes");
  app->add_option("--alpha", f.alpha, "threshold factor for segmentation");
  app->add_option("--needle-noise", f.needle_noise, "needle perturbation norm");
  app->add_option("--signature-seed", f.signature_seed, "seed of the class signatures");
  app->add_option("--retrieve-order", f.retrieve_order, "retrieval before or after each bridge step")
      ->check(CLI::IsMember({"before", "after"}));
}

// Model description stored next to the weights so a checkpoint is
// self-describing.
constexpr const char* kMetaName = "meta.model";

void attach_meta(ParamStore& params, Variant variant, const ModelFlags& f) {
  const double fields[] = {static_cast<double>(variant),  static_cast<double>(f.dim),
                           static_cast<double>(f.memory_tokens), static_cast<double>(f.heads),
                           static_cast<double>(f.layers), static_cast<double>(f.classes),
                           f.alpha, f.needle_noise, static_cast<double>(f.signature_seed),
                           f.retrieve_order == "after" ? 1.0 : 0.0};
  Tensor t({std::size(fields)}, 0.0);
  std::copy(std::begin(fields), std::end(fields), t.values().begin());
  params.add(kMetaName, std::move(t));
}

std::pair<Variant, ModelFlags> read_meta(const ParamStore& params) {
  require(params.contains(kMetaName), ErrorKind::Format, "checkpoint lacks model metadata");
  const Tensor& t = params.at(kMetaName);
  require(t.size() == 10, ErrorKind::Format, "malformed model metadata");
  const auto v = t.values();
  const auto variant_index = static_cast<std::size_t>(v[0]);
  require(variant_index < kAllVariants.size(), ErrorKind::Format, "unknown variant in checkpoint");
  ModelFlags f;
  f.dim = static_cast<std::size_t>(v[1]);
  f.memory_tokens = static_cast<std::size_t>(v[2]);
  f.heads = static_cast<std::size_t>(v[3]);
  f.layers = static_cast<std::size_t>(v[4]);
  f.classes = static_cast<std::size_t>(v[5]);
  f.alpha = v[6];
  f.needle_noise = v[7];
  f.signature_seed = static_cast<std::uint64_t>(v[8]);
  f.retrieve_order = v[9] != 0.0 ? "after" : "before";
  return {kAllVariants[variant_index], f};
}

SegmentPolicy parse_policy(const std::string& s) {
  if (s == "dynamic") return SegmentPolicy::Dynamic;
  if (s == "static") return SegmentPolicy::Static;
  fail(ErrorKind::Config, "unknown policy: " + s);
}

// Writes via `emit` to the --out path when given, else to `out`.
template <typename F>
void with_output(const std::string& path, std::ostream& out, F&& emit) {
  if (path.empty() || path == "-") {
    emit(out);
    out.flush();
    return;
  }
  std::ofstream file(path, std::ios::binary);
  if (!file) fail(ErrorKind::Io, path + ": cannot open for writing");
  emit(file);
  if (!file) fail(ErrorKind::Io, path + ": write failed");
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::map<std::string, std::string> read_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Io, path + ": not found");
  std::map<std::string, std::string> out;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      fail(ErrorKind::Config, path + ":" + std::to_string(number) + ": expected key=value");
    std::string key = trim(t.substr(0, eq));
    if (key.rfind("--", 0) == 0) key = key.substr(2);
    out[key] = trim(t.substr(eq + 1));
  }
  return out;
}

bool given_on_command_line(const std::vector<std::string>& args, const std::string& key) {
  const std::string flag = "--" + key;
  return std::any_of(args.begin(), args.end(), [&](const std::string& a) {
    return a == flag || a.rfind(flag + "=", 0) == 0;
  });
}

std::string option_value(const CLI::Option* opt) {
  if (opt->count() > 0) {
    std::string joined;
    for (const auto& r : opt->results()) joined += (joined.empty() ? "" : ",") + r;
    return joined;
  }
  return opt->get_default_str();
}

void print_resolved(const CLI::App* sub, std::ostream& err) {
  err << "# " << sub->get_name() << " resolved configuration\n";
  for (const CLI::Option* opt : sub->get_options()) {
    const std::string& name = opt->get_lnames().empty() ? opt->get_name() : opt->get_lnames()[0];
    if (name == "help" || name == "config") continue;
    err << name << '=' << option_value(opt) << '\n';
  }
  err.flush();
}

// ---- subcommands ------------------------------------------------------------

nlohmann::json segmentation_json(const Segmentation& s) {
  nlohmann::json j;
  j["cuts"] = s.cuts;
  j["depths"] = s.evidence.depths;
  j["mu"] = s.evidence.mean;
  j["sigma"] = s.evidence.stddev;
  j["threshold"] = s.threshold;
  auto& segs = j["segments"] = nlohmann::json::array();
  for (const auto& r : s.segments) segs.push_back({r.begin, r.end});
  return j;
}

int run_stream(std::istream& in, std::ostream& out, const StreamingConfig& config) {
  std::string line;
  std::size_t number = 0;
  std::optional<JsonlHeader> header;
  StreamingBoundaryDetector detector(config);
  while (std::getline(in, line)) {
    ++number;
    if (trim(line).empty()) continue;
    try {
      if (!header) {
        header = parse_jsonl_header(line);
        continue;
      }
      const auto frame = parse_jsonl_frame(line, header->dim);
      if (auto event = detector.push(frame)) {
        out << nlohmann::json{{"boundary_at", event->boundary_at}, {"depth", event->depth}}.dump()
            << '\n';
        out.flush();
      }
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::Domain) throw;
      fail(ErrorKind::Format, "line " + std::to_string(number) + ": " + e.what());
    }
  }
  if (!header) fail(ErrorKind::Format, "line 1: missing header");
  return kExitOk;
}

}  // namespace

int dispatch(const std::vector<std::string>& raw_args, std::istream& in, std::ostream& out,
             std::ostream& err) {
  CLI::App app{"membridge: scene segmentation, recurrent memory bridging and needle evaluation",
               "membridge"};
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();
  std::string config_path;
  app.add_option("--config", config_path, "key=value file; command-line flags take precedence");

  std::uint64_t seed = 0;
  std::string in_path, out_path, format = "csv", checkpoint, policy = "dynamic";
  ModelFlags model;

  // generate
  SceneSpec scene;
  auto* gen = app.add_subcommand("generate", "write a synthetic scene stream");
  gen->add_option("--out", out_path, "output path (.jsonl for JSON lines)")->required();
  gen->add_option("--scenes", scene.scene_count);
  gen->add_option("--min-frames", scene.min_frames_per_scene);
  gen->add_option("--max-frames", scene.max_frames_per_scene);
  gen->add_option("--dim", scene.dim);
  gen->add_option("--noise", scene.noise_sigma);
  gen->add_option("--separation", scene.min_center_separation);
  gen->add_option("--fps", scene.frame_rate);
  gen->add_option("--seed", seed);

  // segment
  double alpha = 0.5;
  std::string mode = "threshold";
  std::size_t k = 4, min_len = 1, max_segments = 0;
  auto* seg = app.add_subcommand("segment", "segment a stream and print the evidence as JSON");
  seg->add_option("--in", in_path)->required();
  seg->add_option("--out", out_path);
  seg->add_option("--alpha", alpha);
  seg->add_option("--mode", mode)->check(CLI::IsMember({"threshold", "fixed"}));
  seg->add_option("--k", k, "segment count in fixed mode");
  seg->add_option("--min-len", min_len);
  seg->add_option("--max-segments", max_segments, "0 = unlimited");

  // stream
  StreamingConfig streaming;
  auto* str = app.add_subcommand("stream", "online boundary detection on JSON lines from stdin");
  str->add_option("--alpha", streaming.alpha);
  str->add_option("--min-len", streaming.min_segment_len);
  str->add_option("--warmup", streaming.warmup);
  str->add_option("--min-depth", streaming.min_depth);

  // train
  TrainConfig train;
  std::string variant_name = "full";
  bool suite = false;
  std::vector<std::size_t> eval_lengths = AblationConfig{}.eval_lengths;
  std::size_t suite_seeds = 5, eval_size = 200;
  std::vector<std::string> variant_names;
  auto* tr = app.add_subcommand("train", "train one variant, or the ablation suite with --suite");
  add_model_flags(tr, model);
  tr->add_option("--variant", variant_name);
  tr->add_option("--lr", train.learning_rate);
  tr->add_option("--batch", train.batch_size);
  tr->add_option("--epochs", train.epochs);
  tr->add_option("--dataset-size", train.dataset_size);
  tr->add_option("--seed", seed);
  tr->add_option("--out", out_path, "checkpoint path, or CSV path with --suite");
  tr->add_flag("--suite", suite, "run every variant over paired seeds and print a CSV table");
  tr->add_option("--lengths", eval_lengths, "suite evaluation lengths")->delimiter(',');
  tr->add_option("--seeds", suite_seeds, "suite seed count");
  tr->add_option("--eval-size", eval_size, "suite evaluation streams per cell");
  tr->add_option("--variants", variant_names, "suite variants (default all)")->delimiter(',');

  // eval
  std::size_t length = 16, count = 200;
  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on fresh needle streams");
  ev->add_option("--checkpoint", checkpoint)->required();
  ev->add_option("--length", length);
  ev->add_option("--count", count);
  ev->add_option("--policy", policy)->check(CLI::IsMember({"dynamic", "static"}));
  ev->add_option("--seed", seed);

  // needle
  GridConfig grid;
  auto* nd = app.add_subcommand("needle", "needle-in-a-haystack grid for a checkpoint");
  nd->add_option("--checkpoint", checkpoint)->required();
  nd->add_option("--length-levels", grid.length_levels);
  nd->add_option("--depth-levels", grid.depth_levels);
  nd->add_option("--max-length", grid.max_length);
  nd->add_option("--seeds-per-cell", grid.seeds_per_cell);
  nd->add_option("--policy", policy)->check(CLI::IsMember({"dynamic", "static"}));
  nd->add_option("--seed", seed);
  nd->add_option("--format", format)->check(CLI::IsMember({"csv", "json"}));
  nd->add_option("--out", out_path);

  // bench
  BenchConfig bench;
  std::vector<std::size_t> lengths{32, 64, 128, 256, 512};
  std::vector<std::size_t> segment_counts{4, 8, 16, 32, 64};
  std::string bench_mode = "all";
  auto* bn = app.add_subcommand("bench", "peak memory and phase timing against stream length");
  bn->add_option("--dim", bench.bridge.hidden_size);
  bn->add_option("--memory-tokens", bench.bridge.memory_tokens);
  bn->add_option("--heads", bench.bridge.heads);
  bn->add_option("--segment-length", bench.segment_length);
  bn->add_option("--reps", bench.repetitions);
  bn->add_option("--lengths", lengths)->delimiter(',');
  bn->add_option("--segments", segment_counts)->delimiter(',');
  bn->add_option("--mode", bench_mode)->check(CLI::IsMember({"memory", "time", "all"}));
  bn->add_option("--seed", seed);
  bn->add_option("--format", format)->check(CLI::IsMember({"csv", "json"}));
  bn->add_option("--out", out_path);

  try {
    // --config may appear anywhere; it is applied by splicing the file's
    // entries in as flags that were not given explicitly.
    std::vector<std::string> args, config_paths;
    for (std::size_t i = 0; i < raw_args.size(); ++i) {
      if (raw_args[i] == "--config" && i + 1 < raw_args.size()) config_paths.push_back(raw_args[++i]);
      else if (raw_args[i].rfind("--config=", 0) == 0) config_paths.push_back(raw_args[i].substr(9));
      else args.push_back(raw_args[i]);
    }
    for (const std::string& path : config_paths) {
      CLI::App* target = nullptr;
      for (const auto& a : raw_args)
        if (!target) {
          for (CLI::App* s : app.get_subcommands({}))
            if (s->get_name() == a) target = s;
        }
      for (const auto& [key, value] : read_config_file(path)) {
        const CLI::App* owner = target ? target : &app;
        if (!owner->get_option_no_throw("--" + key))
          fail(ErrorKind::Config, "unknown config key: " + key);
        if (!given_on_command_line(raw_args, key)) args.push_back("--" + key + "=" + value);
      }
    }
    std::reverse(args.begin(), args.end());
    app.parse(args);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      app.exit(e, out, err);
      return kExitOk;
    }
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return e.kind() == ErrorKind::Domain ? kExitDomain : kExitUsage;
  }

  CLI::App* active = app.get_subcommands().front();
  print_resolved(active, err);

  try {
    if (active == gen) {
      scene.seed = seed;
      const EmbeddingStream s = generate_scene_stream(scene);
      save_stream(out_path, s);
      out << nlohmann::json{{"frames", s.size()}, {"dim", s.dim}, {"boundaries", *s.boundaries}}
                 .dump()
          << '\n';
    } else if (active == seg) {
      const EmbeddingStream s = load_stream(in_path);
      SegmentationConfig cfg = mode == "fixed" ? SegmentationConfig::fixed_count(k)
                                               : SegmentationConfig::threshold(alpha);
      cfg.min_segment_len = min_len;
      if (max_segments > 0) cfg.max_segments = max_segments;
      const Segmentation result = segment(s, cfg);
      with_output(out_path, out,
                  [&](std::ostream& o) { o << segmentation_json(result).dump() << '\n'; });
    } else if (active == str) {
      return run_stream(in, out, streaming);
    } else if (active == tr) {
      const NeedleTask task = model.task();
      train.seed = seed;
      if (suite) {
        AblationConfig ac;
        ac.model = model.model();
        ac.train = train;
        ac.eval_lengths = eval_lengths;
        ac.eval_size = eval_size;
        ac.seeds.clear();
        for (std::size_t i = 0; i < suite_seeds; ++i) ac.seeds.push_back(seed + i);
        if (!variant_names.empty()) {
          ac.variants.clear();
          for (const auto& n : variant_names) ac.variants.push_back(parse_variant(n));
        }
        const AblationTable table =
            ablation_suite(task, ac, [&](const std::string& msg) { err << msg << '\n'; });
        with_output(out_path, out, [&](std::ostream& o) { table.write_csv(o); });
      } else {
        const Variant variant = parse_variant(variant_name);
        const Pipeline pipeline = build_variant(variant, model.model());
        TrainResult result = train_probe(pipeline, task, train);
        nlohmann::json summary{{"variant", to_string(variant)},
                               {"steps", result.loss_curve.size()},
                               {"initial_loss", result.loss_curve.front()},
                               {"final_loss", result.loss_curve.back()},
                               {"train_accuracy", result.train_accuracy}};
        if (!out_path.empty()) {
          attach_meta(result.params, variant, model);
          save_checkpoint(out_path, result.params);
          summary["checkpoint"] = out_path;
        }
        out << summary.dump() << '\n';
      }
    } else if (active == ev || active == nd) {
      const ParamStore params = load_checkpoint(checkpoint);
      const auto [variant, flags] = read_meta(params);
      const Pipeline pipeline = build_variant(variant, flags.model());
      const NeedleTask task = flags.task();
      if (active == ev) {
        const auto data = task.dataset(count, length, seed);
        const EvalResult r = evaluate(pipeline, params, data, parse_policy(policy));
        out << nlohmann::json{{"variant", to_string(variant)}, {"length", length},
                              {"accuracy", r.accuracy}, {"mean_score", r.mean_score},
                              {"count", r.count}}
                   .dump()
            << '\n';
      } else {
        grid.seed = seed;
        grid.min_length = task.options().needle_duration;
        const GridReport report = run_grid(pipeline, params, task, grid, parse_policy(policy));
        with_output(out_path, out, [&](std::ostream& o) {
          if (format == "json") report.write_json(o);
          else report.write_csv(o);
        });
      }
    } else if (active == bn) {
      const ParamStore params = init_bridge_params(bench.bridge, seed);
      bench.seed = seed;
      MemoryReport memory;
      TimeReport time;
      if (bench_mode != "time") memory = measure_memory(params, lengths, bench);
      if (bench_mode != "memory") time = measure_time(params, segment_counts, bench);
      with_output(out_path, out, [&](std::ostream& o) {
        if (format == "json") write_scaling_json(memory, time, o);
        else write_scaling_csv(scaling_records(memory, time), o);
      });
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return e.kind() == ErrorKind::Domain ? kExitDomain : kExitUsage;
  }
  return kExitOk;
}

}  // namespace membridge

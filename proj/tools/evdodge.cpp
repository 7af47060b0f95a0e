// Command-line driver for the event-dodging pipeline: dataset synthesis,
// KEP filtering, offline training, evaluation sweeps and report conversion.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include "CLI11.hpp"
#include "evd/deploy.hpp"
#include "evd/error.hpp"
#include "evd/experiment.hpp"
#include "evd/kernels.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using namespace evd;
using ordered_json = nlohmann::ordered_json;

namespace {

int run_gen(const std::string& out_dir, int count, int window_ms,
            const std::string& object, const std::string& light, double balance,
            int width, int height, uint64_t seed) {
  DatasetConfig cfg;
  cfg.count = count;
  cfg.window_ms = window_ms;
  cfg.balance = balance;
  cfg.width = static_cast<uint16_t>(width);
  cfg.height = static_cast<uint16_t>(height);
  cfg.seed = seed;
  cfg.scene.kind = object_kind_from_name(object);
  if (light == "normal")
    cfg.light = normal_light();
  else if (light == "low")
    cfg.light = low_light();
  else
    throw_usage("light must be 'normal' or 'low'");

  const auto ds = make_dataset(cfg);
  write_dataset(ds, window_ms, out_dir);
  double mean = 0;
  for (const auto& s : ds) mean += static_cast<double>(s.sample.stream.size());
  std::printf("wrote %d %s scenes (%s light, window %d ms) to %s\n", count,
              object.c_str(), light.c_str(), window_ms, out_dir.c_str());
  std::printf("mean events per scene: %.0f\n", mean / count);
  return 0;
}

int run_kep(const std::string& in_path, const std::string& out_dir,
            const KepConfig& cfg) {
  std::vector<TaggedSample> samples;
  if (fs::is_directory(in_path)) {
    samples = load_dataset(in_path);
  } else {
    TaggedSample ts;
    ts.sample.stream = read_stream(in_path);
    ts.object_name = "stream";
    samples.push_back(std::move(ts));
  }

  const KepStats stats = kep_statistics(samples, cfg);
  std::printf("streams: %zu\n", samples.size());
  std::printf("average points   raw: %8.1f\n", stats.mean_raw);
  std::printf("average points  main: %8.1f\n", stats.mean_main);
  std::printf("average points   key: %8.1f\n", stats.mean_key);
  std::printf("key/raw ratio: %.3f\n", stats.key_raw_ratio);

  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    for (size_t i = 0; i < samples.size(); ++i) {
      KepConfig per = cfg;
      per.seed = cfg.seed + i;  // cascade matches kep_statistics
      const EventStream& raw = samples[i].sample.stream;
      EventStream key;
      if (!raw.empty()) {
        const EventStream main = extract_main(raw, per);
        key = main.empty() ? main : extract_key(main, per);
      }
      char name[64];
      std::snprintf(name, sizeof(name), "key_%05zu.evs", i);
      write_stream(key, (fs::path(out_dir) / name).string());
    }
    std::printf("filtered streams written to %s\n", out_dir.c_str());
  }
  return 0;
}

int run_train(const std::string& config_path, uint64_t seed,
              const std::string& out_path, const std::string& history_path) {
  TrainFileConfig cfg = parse_train_config(config_path);
  cfg.seed = seed;
  if (cfg.train_dir.empty()) throw_usage("config must set train_dir");

  const auto train_set = load_dataset(cfg.train_dir);
  std::printf("training on %zu scenes (T=%d, epochs=%d)\n", train_set.size(),
              cfg.window_ms, cfg.epochs);
  const TrainOutcome outcome = run_training(train_set, cfg);

  save_network(outcome.net, out_path);
  std::printf("checkpoint written to %s\n", out_path.c_str());

  if (!history_path.empty()) {
    ordered_json j;
    j["epochs"] = ordered_json::array();
    for (const auto& e : outcome.history.epochs) {
      ordered_json entry;
      entry["loss"] = e.loss;
      entry["accuracy"] = e.accuracy;
      j["epochs"].push_back(entry);
    }
    std::ofstream out(history_path, std::ios::trunc);
    if (!out) throw_data("cannot write " + history_path);
    out << j.dump(2) << "\n";
  }
  for (size_t e = 0; e < outcome.history.epochs.size(); ++e)
    std::printf("epoch %2zu: loss %.5f accuracy %.3f\n", e + 1,
                outcome.history.epochs[e].loss,
                outcome.history.epochs[e].accuracy);
  return 0;
}

int run_eval(const std::string& checkpoint, const std::string& data_dir,
             const std::string& mode_name, bool use_kep, bool quantized,
             int n_dt, uint64_t seed, bool timing, const std::string& out_path,
             const std::string& format) {
  Network net = load_network(checkpoint);
  const auto samples = load_dataset(data_dir);
  if (samples.empty()) throw_data("empty dataset in " + data_dir);

  // T must match the capture window under the 1 ms/step rule
  const double window_ms = samples.front().sample.stream.window_us / 1000.0;
  if (static_cast<int>(window_ms) != net.T)
    throw_data("checkpoint runs T=" + std::to_string(net.T) +
               " steps but the dataset window is " + std::to_string(window_ms) +
               " ms");

  if (quantized && !net.quantized) net = quantize_weights(net);

  EvalOptions opt;
  if (mode_name == "async")
    opt.mode = EvalMode::Async;
  else if (mode_name == "sync")
    opt.mode = EvalMode::Sync;
  else if (mode_name == "ef-snn")
    opt.mode = EvalMode::EfSnn;
  else
    throw_usage("mode must be async, sync or ef-snn");
  opt.use_kep = use_kep;
  opt.n_dt = n_dt;
  opt.seed = seed;
  opt.include_timing = timing;

  EvalReport report;
  report.T = net.T;
  report.mode = mode_name;
  report.kep = use_kep;
  report.quantized = quantized || net.quantized;
  report.seed = seed;
  const std::string condition =
      samples.front().object_name + "/" + fs::path(data_dir).filename().string();
  report.conditions.push_back(evaluate_condition(net, samples, condition, opt));

  const auto& c = report.conditions.back();
  std::printf("%s [%s]: success %.4f over %d scenes\n", condition.c_str(),
              mode_name.c_str(), c.success_rate, c.samples);
  if (!out_path.empty()) {
    write_report(report, out_path, format);
    std::printf("report written to %s\n", out_path.c_str());
  }
  return 0;
}

int run_report(const std::string& in_path, const std::string& format,
               const std::string& out_path) {
  std::ifstream in(in_path);
  if (!in) throw_data("cannot open " + in_path);
  std::string text((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  const EvalReport report = parse_report_json(text);
  if (out_path.empty()) {
    if (format == "json")
      std::fputs(report_json(report).c_str(), stdout);
    else if (format == "csv")
      std::fputs(report_csv(report).c_str(), stdout);
    else if (format == "markdown")
      std::fputs(report_markdown(report).c_str(), stdout);
    else
      throw_usage("unknown report format '" + format + "'");
  } else {
    write_report(report, out_path, format);
    std::printf("converted report written to %s\n", out_path.c_str());
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fully asynchronous event-stream dodging pipeline"};
  app.require_subcommand(1);

  std::string kernels;
  app.add_option("--kernels", kernels, "force kernel variant (scalar|avx2)");
  int threads = 0;
  app.add_option("--threads", threads, "worker threads for dense kernels");

  // gen
  auto* gen = app.add_subcommand("gen", "synthesize a labeled scene dataset");
  std::string gen_out = "dataset";
  int gen_count = 800, gen_window = 50, gen_width = 128, gen_height = 128;
  double gen_balance = 0.5;
  std::string gen_object = "ball", gen_light = "normal";
  uint64_t gen_seed = 0;
  gen->add_option("--out", gen_out, "output directory")->required();
  gen->add_option("--count", gen_count, "number of scenes");
  gen->add_option("--window", gen_window, "capture window in ms");
  gen->add_option("--object", gen_object, "ball | blob");
  gen->add_option("--light", gen_light, "normal | low");
  gen->add_option("--balance", gen_balance, "fraction approaching from the left");
  gen->add_option("--width", gen_width, "sensor width");
  gen->add_option("--height", gen_height, "sensor height");
  gen->add_option("--seed", gen_seed, "generator seed")->required();

  // kep
  auto* kep = app.add_subcommand("kep", "filter streams and print KEP stats");
  std::string kep_in, kep_out;
  KepConfig kep_cfg;
  kep->add_option("--in", kep_in, "dataset directory or .evs file")->required();
  kep->add_option("--out", kep_out, "write filtered streams here");
  kep->add_option("--radius", kep_cfg.radius, "cluster radius (normalized)");
  kep->add_option("--lambda1", kep_cfg.lambda1, "size rule constant");
  kep->add_option("--lambda2", kep_cfg.lambda2, "size rule constant");
  kep->add_option("--trials", kep_cfg.trials, "random subsets per stream");
  kep->add_option("--cells", kep_cfg.cells_per_axis, "histogram cells per axis");
  kep->add_option("--seed", kep_cfg.seed, "subsampling seed");

  // train
  auto* train = app.add_subcommand("train", "offline training from a config file");
  std::string train_config, train_out = "model.snn", train_history;
  uint64_t train_seed = 0;
  train->add_option("--config", train_config, "key = value config file")->required();
  train->add_option("--seed", train_seed, "training seed (overrides the config)")
      ->required();
  train->add_option("--out", train_out, "checkpoint path");
  train->add_option("--history", train_history, "write per-epoch history JSON");

  // eval
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a dataset");
  std::string eval_checkpoint, eval_data, eval_mode = "async";
  std::string eval_out, eval_format = "json";
  bool eval_kep = false, eval_quant = false, eval_no_timing = false;
  int eval_ndt = 30;
  uint64_t eval_seed = 1;
  eval->add_option("--checkpoint", eval_checkpoint, "SNN1 checkpoint")->required();
  eval->add_option("--data", eval_data, "dataset directory")->required();
  eval->add_option("--mode", eval_mode, "async | sync | ef-snn");
  eval->add_flag("--kep", eval_kep, "apply KEP filtering before inference");
  eval->add_flag("--quantized", eval_quant, "quantize weights before inference");
  eval->add_option("--n-dt", eval_ndt, "desired true-channel spikes (speed scale)");
  eval->add_option("--seed", eval_seed, "KEP subsampling seed");
  eval->add_flag("--no-timing", eval_no_timing, "omit wall-clock from the report");
  eval->add_option("--out", eval_out, "report path");
  eval->add_option("--format", eval_format, "json | csv | markdown");

  // report
  auto* rep = app.add_subcommand("report", "convert a JSON report");
  std::string rep_in, rep_format = "markdown", rep_out;
  rep->add_option("--in", rep_in, "JSON report")->required();
  rep->add_option("--format", rep_format, "json | csv | markdown");
  rep->add_option("--out", rep_out, "output path (stdout when omitted)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (!kernels.empty()) kern::select(kernels);
    if (threads > 0) kern::set_threads(threads);

    if (gen->parsed())
      return run_gen(gen_out, gen_count, gen_window, gen_object, gen_light,
                     gen_balance, gen_width, gen_height, gen_seed);
    if (kep->parsed()) return run_kep(kep_in, kep_out, kep_cfg);
    if (train->parsed())
      return run_train(train_config, train_seed, train_out, train_history);
    if (eval->parsed())
      return run_eval(eval_checkpoint, eval_data, eval_mode, eval_kep, eval_quant,
                      eval_ndt, eval_seed, !eval_no_timing, eval_out, eval_format);
    if (rep->parsed()) return run_report(rep_in, rep_format, rep_out);
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return static_cast<int>(e.kind());
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}

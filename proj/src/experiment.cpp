#include "evd/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "evd/error.hpp"
#include "evd/kernels.hpp"
#include "evd/rng.hpp"
#include "json.hpp"

namespace evd {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

LightCondition normal_light() { return {"normal", 0.0625, 1.0}; }

LightCondition low_light() { return {"low", 0.5, 0.6}; }

namespace {

uint64_t derive_seed(uint64_t seed, uint64_t index, uint64_t salt) {
  uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (index + 1) + salt;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace

std::string object_name(ObjectKind kind) {
  return kind == ObjectKind::Disk ? "ball" : "blob";
}

ObjectKind object_kind_from_name(const std::string& name) {
  if (name == "ball") return ObjectKind::Disk;
  if (name == "blob") return ObjectKind::TallBlob;
  throw_data("unknown object kind '" + name + "'");
}

std::vector<TaggedSample> make_dataset(const DatasetConfig& config) {
  if (config.count < 1) throw_data("dataset needs at least one scene");
  if (config.balance <= 0 || config.balance >= 1)
    throw_data("direction balance must lie in (0, 1)");

  const int n_left = static_cast<int>(std::lround(config.count * config.balance));
  const double window_s = config.window_ms / 1000.0;

  std::vector<TaggedSample> out;
  out.reserve(config.count);
  for (int i = 0; i < config.count; ++i) {
    Rng rng(derive_seed(config.seed, i, 0xd1ce));
    const SceneDistribution& d = config.scene;

    SceneConfig sc;
    sc.kind = d.kind;
    sc.width = config.width;
    sc.height = config.height;
    sc.window_us = static_cast<uint32_t>(config.window_ms) * 1000u;
    sc.radius = rng.uniform(d.radius_min, d.radius_max);
    sc.contrast = config.light.contrast;
    sc.noise_rate = config.light.noise_rate;
    sc.seed = derive_seed(config.seed, i, 0xb0b0);

    const double travel = rng.uniform(d.speed_min, d.speed_max) * window_s;
    const double entry = rng.uniform(d.entry_min, d.entry_max);
    const double y0 = rng.uniform(d.y_min, d.y_max);
    const double y1 = y0 + rng.uniform(-d.y_drift, d.y_drift);

    sc.direction = i < n_left ? 0 : 1;
    if (sc.direction == 0) {
      sc.start_x = entry;
      sc.end_x = entry + travel;
    } else {
      sc.start_x = config.width - 1 - entry;
      sc.end_x = sc.start_x - travel;
    }
    sc.start_y = y0;
    sc.end_y = y1;

    SceneResult scene = generate_scene(sc);
    TaggedSample ts;
    ts.sample.stream = std::move(scene.stream);
    ts.sample.label = scene.label;
    ts.is_object = std::move(scene.is_object);
    ts.object_name = object_name(d.kind);
    out.push_back(std::move(ts));
  }
  return out;
}

std::vector<Sample> strip_tags(const std::vector<TaggedSample>& tagged) {
  std::vector<Sample> out;
  out.reserve(tagged.size());
  for (const auto& t : tagged) out.push_back(t.sample);
  return out;
}

void write_dataset(const std::vector<TaggedSample>& samples, int window_ms,
                   const std::string& dir) {
  fs::create_directories(dir);
  ordered_json manifest;
  if (!samples.empty()) {
    manifest["width"] = samples.front().sample.stream.width;
    manifest["height"] = samples.front().sample.stream.height;
  } else {
    manifest["width"] = 128;
    manifest["height"] = 128;
  }
  manifest["window_ms"] = window_ms;
  manifest["scenes"] = ordered_json::array();

  char name[64];
  for (size_t i = 0; i < samples.size(); ++i) {
    std::snprintf(name, sizeof(name), "scene_%05zu.evs", i);
    write_stream(samples[i].sample.stream, (fs::path(dir) / name).string());
    ordered_json entry;
    entry["file"] = name;
    entry["label"] = samples[i].sample.label;
    entry["object"] = samples[i].object_name;
    manifest["scenes"].push_back(entry);
  }
  std::ofstream mf(fs::path(dir) / "manifest.json", std::ios::trunc);
  if (!mf) throw_data("cannot write manifest in " + dir);
  mf << manifest.dump(2) << "\n";
}

std::vector<TaggedSample> load_dataset(const std::string& dir) {
  std::ifstream mf(fs::path(dir) / "manifest.json");
  if (!mf) throw_data("no manifest.json in " + dir);
  ordered_json manifest;
  try {
    mf >> manifest;
  } catch (const std::exception& e) {
    throw_data(dir + "/manifest.json: " + e.what());
  }
  std::vector<TaggedSample> out;
  for (const auto& entry : manifest.at("scenes")) {
    TaggedSample ts;
    ts.sample.stream = read_stream((fs::path(dir) / entry.at("file").get<std::string>()).string());
    ts.sample.label = entry.at("label").get<int>();
    ts.object_name = entry.value("object", "ball");
    out.push_back(std::move(ts));
  }
  return out;
}

KepStats kep_statistics(const std::vector<TaggedSample>& samples,
                        const KepConfig& config) {
  if (samples.empty()) throw_data("KEP statistics need at least one sample");
  KepStats stats;
  double ratio_sum = 0;
  int64_t key_total = 0, key_object = 0;
  for (size_t i = 0; i < samples.size(); ++i) {
    const EventStream& raw = samples[i].sample.stream;
    if (raw.empty()) continue;
    KepConfig cfg = config;
    cfg.seed = derive_seed(config.seed, i, 0x6e7);
    const auto main_idx = extract_main_indices(raw, cfg);

    EventStream main;
    main.width = raw.width;
    main.height = raw.height;
    main.window_us = raw.window_us;
    for (uint32_t j : main_idx) main.events.push_back(raw.events[j]);

    const auto key_local = main.empty() ? std::vector<uint32_t>{}
                                        : extract_key_indices(main, cfg);
    stats.mean_raw += static_cast<double>(raw.size());
    stats.mean_main += static_cast<double>(main.size());
    stats.mean_key += static_cast<double>(key_local.size());
    ratio_sum += raw.size() ? static_cast<double>(key_local.size()) / raw.size() : 0.0;

    if (!samples[i].is_object.empty()) {
      for (uint32_t j : key_local) {
        ++key_total;
        if (samples[i].is_object[main_idx[j]]) ++key_object;
      }
    }
  }
  const auto n = static_cast<double>(samples.size());
  stats.mean_raw /= n;
  stats.mean_main /= n;
  stats.mean_key /= n;
  stats.key_raw_ratio = ratio_sum / n;
  stats.key_purity = key_total ? static_cast<double>(key_object) / key_total : 0.0;
  return stats;
}

std::string eval_mode_name(EvalMode mode) {
  switch (mode) {
    case EvalMode::Async:
      return "async";
    case EvalMode::Sync:
      return "sync";
    case EvalMode::EfSnn:
      return "ef-snn";
  }
  return "?";
}

ConditionReport evaluate_condition(const Network& net,
                                   const std::vector<TaggedSample>& samples,
                                   const std::string& condition_name,
                                   const EvalOptions& options) {
  if (samples.empty()) throw_data("evaluation needs at least one sample");

  ConditionReport report;
  report.condition = condition_name;
  report.object = samples.front().object_name;
  report.mode = eval_mode_name(options.mode);
  report.samples = static_cast<int>(samples.size());
  report.mean_output_counts.assign(net.dims.back().n_out(), 0.0);

  int correct = 0;
  double total_ms = 0;
  for (size_t i = 0; i < samples.size(); ++i) {
    const EventStream& raw = samples[i].sample.stream;
    report.mean_raw_events += static_cast<double>(raw.size());

    EventStream filtered;
    const EventStream* input = &raw;
    if (options.use_kep && !raw.empty()) {
      KepConfig cfg = options.kep;
      cfg.seed = derive_seed(options.seed, i, 0x6e7);
      const EventStream main = extract_main(raw, cfg);
      report.mean_main_events += static_cast<double>(main.size());
      filtered = main.empty() ? main : extract_key(main, cfg);
      report.mean_key_events += static_cast<double>(filtered.size());
      input = &filtered;
    } else {
      report.mean_main_events += static_cast<double>(raw.size());
      report.mean_key_events += static_cast<double>(raw.size());
    }

    const auto t0 = std::chrono::steady_clock::now();
    SpikeRecord record;
    switch (options.mode) {
      case EvalMode::Async:
        record = forward_async(net, *input);
        break;
      case EvalMode::Sync:
        record = forward_sync(net, to_event_field(*input, net.T));
        break;
      case EvalMode::EfSnn: {
        // One binary frame of the whole window, presented at every step.
        std::vector<int32_t> frame;
        {
          std::vector<uint8_t> seen(static_cast<size_t>(2) * net.in_h * net.in_w, 0);
          for (const Event& e : input->events) {
            const auto idx = (static_cast<int64_t>(e.p) * net.in_h + e.y) * net.in_w + e.x;
            if (!seen[idx]) {
              seen[idx] = 1;
              frame.push_back(static_cast<int32_t>(idx));
            }
          }
          std::sort(frame.begin(), frame.end());
        }
        record = forward_with_inputs(net, std::vector<std::vector<int32_t>>(net.T, frame));
        break;
      }
    }
    const auto t1 = std::chrono::steady_clock::now();
    total_ms += std::chrono::duration<double, std::milli>(t1 - t0).count();

    const DodgeAction action =
        decode_action(record.output_counts, options.n_dt, options.alpha);
    if (action.approach_channel == samples[i].sample.label) ++correct;
    report.mean_speed += action.speed;
    for (size_t j = 0; j < record.output_counts.size(); ++j)
      report.mean_output_counts[j] += static_cast<double>(record.output_counts[j]);
  }

  const auto n = static_cast<double>(samples.size());
  report.success_rate = correct / n;
  report.mean_raw_events /= n;
  report.mean_main_events /= n;
  report.mean_key_events /= n;
  report.mean_speed /= n;
  report.mean_inference_ms = options.include_timing ? total_ms / n : 0.0;
  for (double& v : report.mean_output_counts) v /= n;
  return report;
}

namespace {

ordered_json condition_to_json(const ConditionReport& c) {
  ordered_json j;
  j["condition"] = c.condition;
  j["object"] = c.object;
  j["mode"] = c.mode;
  j["samples"] = c.samples;
  j["success_rate"] = c.success_rate;
  j["mean_raw_events"] = c.mean_raw_events;
  j["mean_main_events"] = c.mean_main_events;
  j["mean_key_events"] = c.mean_key_events;
  j["mean_inference_ms"] = c.mean_inference_ms;
  j["mean_speed"] = c.mean_speed;
  j["mean_output_counts"] = c.mean_output_counts;
  return j;
}

ConditionReport condition_from_json(const ordered_json& j) {
  ConditionReport c;
  c.condition = j.at("condition").get<std::string>();
  c.object = j.at("object").get<std::string>();
  c.mode = j.at("mode").get<std::string>();
  c.samples = j.at("samples").get<int>();
  c.success_rate = j.at("success_rate").get<double>();
  c.mean_raw_events = j.at("mean_raw_events").get<double>();
  c.mean_main_events = j.at("mean_main_events").get<double>();
  c.mean_key_events = j.at("mean_key_events").get<double>();
  c.mean_inference_ms = j.at("mean_inference_ms").get<double>();
  c.mean_speed = j.at("mean_speed").get<double>();
  c.mean_output_counts = j.at("mean_output_counts").get<std::vector<double>>();
  return c;
}

}  // namespace

std::string report_json(const EvalReport& report) {
  ordered_json j;
  j["T"] = report.T;
  j["mode"] = report.mode;
  j["kep"] = report.kep;
  j["quantized"] = report.quantized;
  j["seed"] = report.seed;
  j["conditions"] = ordered_json::array();
  for (const auto& c : report.conditions) j["conditions"].push_back(condition_to_json(c));
  return j.dump(2) + "\n";
}

EvalReport parse_report_json(const std::string& text) {
  ordered_json j;
  try {
    j = ordered_json::parse(text);
  } catch (const std::exception& e) {
    throw_data(std::string("report parse error: ") + e.what());
  }
  EvalReport r;
  r.T = j.at("T").get<int>();
  r.mode = j.at("mode").get<std::string>();
  r.kep = j.at("kep").get<bool>();
  r.quantized = j.at("quantized").get<bool>();
  r.seed = j.at("seed").get<uint64_t>();
  for (const auto& c : j.at("conditions")) r.conditions.push_back(condition_from_json(c));
  return r;
}

std::string report_csv(const EvalReport& report) {
  std::ostringstream out;
  out << "condition,object,mode,samples,success_rate,mean_raw_events,"
         "mean_main_events,mean_key_events,mean_inference_ms,mean_speed\n";
  for (const auto& c : report.conditions) {
    char row[512];
    std::snprintf(row, sizeof(row), "%s,%s,%s,%d,%.6f,%.3f,%.3f,%.3f,%.6f,%.6f\n",
                  c.condition.c_str(), c.object.c_str(), c.mode.c_str(), c.samples,
                  c.success_rate, c.mean_raw_events, c.mean_main_events,
                  c.mean_key_events, c.mean_inference_ms, c.mean_speed);
    out << row;
  }
  return out.str();
}

std::string report_markdown(const EvalReport& report) {
  std::ostringstream out;
  out << "| Condition | Object | Mode | Samples | Success | Raw | Key |\n";
  out << "|---|---|---|---|---|---|---|\n";
  for (const auto& c : report.conditions) {
    char row[512];
    std::snprintf(row, sizeof(row), "| %s | %s | %s | %d | %.2f%% | %.0f | %.0f |\n",
                  c.condition.c_str(), c.object.c_str(), c.mode.c_str(), c.samples,
                  100.0 * c.success_rate, c.mean_raw_events, c.mean_key_events);
    out << row;
  }
  return out.str();
}

void write_report(const EvalReport& report, const std::string& path,
                  const std::string& format) {
  std::string text;
  if (format == "json")
    text = report_json(report);
  else if (format == "csv")
    text = report_csv(report);
  else if (format == "markdown")
    text = report_markdown(report);
  else
    throw_usage("unknown report format '" + format + "'");
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw_data("cannot open " + path + " for writing");
  out << text;
  if (!out) throw_data("short write to " + path);
}

TrainFileConfig parse_train_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw_data("cannot open " + path);
  TrainFileConfig cfg;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      bool blank = line.find_first_not_of(" \t\r") == std::string::npos;
      if (!blank)
        throw_data(path + ":" + std::to_string(lineno) + ": expected key = value");
      continue;
    }
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
    };
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    try {
      if (key == "epochs") cfg.epochs = std::stoi(value);
      else if (key == "batch") cfg.batch = std::stoi(value);
      else if (key == "lr") cfg.lr = std::stod(value);
      else if (key == "window_ms" || key == "T") cfg.window_ms = std::stoi(value);
      else if (key == "n_dt") cfg.n_dt = std::stoi(value);
      else if (key == "n_df") cfg.n_df = std::stoi(value);
      else if (key == "seed") cfg.seed = std::stoull(value);
      else if (key == "train_dir") cfg.train_dir = value;
      else if (key == "kep") cfg.kep = value == "on" || value == "true" || value == "1";
      else if (key == "kep_radius") cfg.kep_config.radius = std::stod(value);
      else if (key == "kep_trials") cfg.kep_config.trials = std::stoi(value);
      else if (key == "optimizer") cfg.optimizer = value;
      else if (key == "threads") cfg.threads = std::stoi(value);
      else throw_data(path + ":" + std::to_string(lineno) + ": unknown key '" + key + "'");
    } catch (const Error&) {
      throw;
    } catch (const std::exception&) {
      throw_data(path + ":" + std::to_string(lineno) + ": bad value for '" + key + "'");
    }
  }
  return cfg;
}

TrainOutcome run_training(const std::vector<TaggedSample>& train_set,
                          const TrainFileConfig& config) {
  if (train_set.empty()) throw_data("training set is empty");
  if (config.threads > 0) kern::set_threads(config.threads);

  std::vector<Sample> samples;
  samples.reserve(train_set.size());
  for (size_t i = 0; i < train_set.size(); ++i) {
    Sample s = train_set[i].sample;
    if (config.kep && !s.stream.empty()) {
      KepConfig cfg = config.kep_config;
      cfg.seed = derive_seed(config.seed, i, 0x6e7);
      const EventStream main = extract_main(s.stream, cfg);
      if (!main.empty()) s.stream = extract_key(main, cfg);
    }
    samples.push_back(std::move(s));
  }

  const int T = config.window_ms;  // 1 ms per step
  TrainConfig tc;
  tc.epochs = config.epochs;
  tc.batch_size = config.batch;
  tc.optimizer.lr = config.lr;
  tc.optimizer.kind = config.optimizer == "sgd" ? Optimizer::Sgd : Optimizer::Adam;
  tc.seed = config.seed;
  if (config.n_dt > 0 && config.n_df > 0) {
    tc.loss.n_dt = config.n_dt;
    tc.loss.n_df = config.n_df;
    tc.loss.steps = T;
    tc.loss.channels = 2;
  } else {
    tc.loss = loss_spec_for_window(config.window_ms);
  }
  tc.surrogate.u_th = NeuronParams{}.u_th;

  TrainOutcome outcome{
      build_network(default_arch(), T, NeuronParams{}, config.seed), {}};
  outcome.history = fit(outcome.net, samples, tc);
  return outcome;
}

}  // namespace evd

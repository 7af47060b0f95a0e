#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "evd/deploy.hpp"
#include "evd/kep.hpp"
#include "evd/network.hpp"
#include "evd/scene.hpp"
#include "evd/train.hpp"

namespace evd {

// Lighting presets: low light keeps the object dimmer and the background
// noisier, mirroring what the sensor sees at a few lux.
struct LightCondition {
  std::string name = "normal";
  double noise_rate = 0.0625;  // events/pixel/s
  double contrast = 1.0;
};

LightCondition normal_light();
LightCondition low_light();  // noise x8, contrast x0.6

// Ranges the per-scene parameters are drawn from.
struct SceneDistribution {
  ObjectKind kind = ObjectKind::Disk;
  double radius_min = 8, radius_max = 13;
  double speed_min = 900, speed_max = 1800;  // px/s across the frame
  double y_min = 40, y_max = 88;
  double y_drift = 8;         // max vertical drift over a window
  double entry_min = 6, entry_max = 26;  // start offset from the entry edge
};

struct DatasetConfig {
  int count = 800;
  double balance = 0.5;  // fraction approaching from the left
  SceneDistribution scene;
  LightCondition light;
  int window_ms = 50;
  uint16_t width = 128, height = 128;
  uint64_t seed = 1;
};

struct TaggedSample {
  Sample sample;
  std::vector<uint8_t> is_object;
  std::string object_name;
};

std::string object_name(ObjectKind kind);
ObjectKind object_kind_from_name(const std::string& name);

// Label-stratified scene synthesis (exact counts per direction), deterministic
// per seed.
std::vector<TaggedSample> make_dataset(const DatasetConfig& config);

std::vector<Sample> strip_tags(const std::vector<TaggedSample>& tagged);

// Dataset directory layout: scene_%05d.evs plus manifest.json.
void write_dataset(const std::vector<TaggedSample>& samples, int window_ms,
                   const std::string& dir);
std::vector<TaggedSample> load_dataset(const std::string& dir);

// Filter statistics over a tagged dataset (Table-V-style).
struct KepStats {
  double mean_raw = 0;
  double mean_main = 0;
  double mean_key = 0;
  double key_purity = 0;      // fraction of key events that are object events
  double key_raw_ratio = 0;   // mean over samples of key/raw
};

KepStats kep_statistics(const std::vector<TaggedSample>& samples,
                        const KepConfig& config);

enum class EvalMode { Async, Sync, EfSnn };

std::string eval_mode_name(EvalMode mode);

struct EvalOptions {
  EvalMode mode = EvalMode::Async;
  bool use_kep = false;
  KepConfig kep;
  int n_dt = 30;       // decode_action scale
  double alpha = 2.0;
  bool include_timing = true;
  uint64_t seed = 1;   // drives KEP subsampling
};

struct ConditionReport {
  std::string condition;
  std::string object;
  std::string mode;
  int samples = 0;
  double success_rate = 0;
  double mean_raw_events = 0;
  double mean_main_events = 0;
  double mean_key_events = 0;
  double mean_inference_ms = 0;
  double mean_speed = 0;
  std::vector<double> mean_output_counts;
};

struct EvalReport {
  int T = 0;
  std::string mode;
  bool kep = false;
  bool quantized = false;
  uint64_t seed = 0;
  std::vector<ConditionReport> conditions;
};

// Runs one test set through the checkpoint in the requested mode and decodes
// the dodge direction per sample. Async mode consumes the (optionally
// KEP-filtered) stream event-driven; ef-snn collapses the window into one
// binary frame and repeats it at every step; sync is the dense oracle path.
ConditionReport evaluate_condition(const Network& net,
                                   const std::vector<TaggedSample>& samples,
                                   const std::string& condition_name,
                                   const EvalOptions& options);

std::string report_json(const EvalReport& report);
std::string report_csv(const EvalReport& report);
std::string report_markdown(const EvalReport& report);
EvalReport parse_report_json(const std::string& text);
void write_report(const EvalReport& report, const std::string& path,
                  const std::string& format);

// Key-value training configuration file (see README for the keys).
struct TrainFileConfig {
  int epochs = 10;
  int batch = 16;
  double lr = 0.001;
  int window_ms = 50;
  int n_dt = -1;  // -1: derive from the window
  int n_df = -1;
  uint64_t seed = 1;
  std::string train_dir;
  bool kep = false;
  KepConfig kep_config;
  std::string optimizer = "adam";
  int threads = 0;
};

TrainFileConfig parse_train_config(const std::string& path);

struct TrainOutcome {
  Network net;
  TrainHistory history;
};

// Offline training entry: optional KEP preprocessing, fit on event fields,
// history per epoch.
TrainOutcome run_training(const std::vector<TaggedSample>& train_set,
                          const TrainFileConfig& config);

}  // namespace evd

#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "dimglo/camera_weighting.hpp"
#include "dimglo/common.hpp"
#include "dimglo/embedding.hpp"
#include "dimglo/evaluation.hpp"
#include "dimglo/label_prediction.hpp"
#include "dimglo/models.hpp"
#include "dimglo/objectives.hpp"
#include "dimglo/synthetic_bench.hpp"

namespace dimglo {

enum class Mode { Adaptive, Unsupervised, DirectTransfer };

std::string mode_name(Mode mode);
Mode mode_from_name(const std::string& name);

struct TrainConfig {
  double alpha = 0.5;
  double beta = 0.05;
  double lambda_go = 0.1;
  double lambda_lo = 1.0;
  double lambda_dim = 0.05;

  int source_batch = 32;
  int target_batch = 16;
  int augment_copies = 3;
  double augment_sigma = 0.05;

  int epochs = 60;
  double lr = 3.5e-4;
  double lr_decay = 0.1;
  int lr_decay_interval = 20;
  int go_start_epoch = 6;

  KReciprocalParams k_reciprocal;
  int min_cluster_size = 4;
  int min_samples = 0;         // 0 -> min_cluster_size
  double mmd_bandwidth = 0.0;  // 0 -> median heuristic

  int encoder_input = 0;  // 0 -> inferred from the benchmark
  std::vector<int> encoder_hidden = {64};
  int encoder_feature = 64;
  int dnet_hidden = 64;

  int eval_interval = 0;        // 0 -> final epoch only
  int checkpoint_interval = 0;  // 0 -> never
  std::uint64_t seed = 1;
  Mode mode = Mode::Adaptive;

  void validate() const;
};

/// lr0 * decay^(epoch / interval), epoch zero-based.
double lr_schedule(int epoch, const TrainConfig& config);

struct Batch {
  Matrix source_obs;
  IntVector source_labels;
  Matrix target_obs;           // originals followed by their augmented copies
  IntVector target_instances;  // per row: index of the bank row it updates
  IntVector target_cams;
};

/// Uniform without-replacement draw plus Gaussian-noise augmentation of
/// the target rows (renormalized in input space).
Batch sample_batch(const LabeledDataset& source, const LabeledDataset& target,
                   const TrainConfig& config, Rng& rng);

/// Deterministic assembly from explicit index choices; sample_batch and
/// the epoch loop both funnel through this.
Batch assemble_batch(const LabeledDataset& source, const IntVector& source_idx,
                     const LabeledDataset& target, const IntVector& target_idx,
                     const TrainConfig& config, Rng& rng);

struct EpochMetrics {
  int epoch = 0;
  double lr = 0.0;
  double loss_ce = 0.0;
  double loss_dim = 0.0;
  double loss_dnet = 0.0;
  double loss_go = 0.0;
  double loss_lo = 0.0;
  double loss_total = 0.0;
  double pair_precision = 0.0;
  double pair_recall = 0.0;
  std::optional<EvalResult> eval;
};

struct TrainState {
  EncoderModel encoder;
  DiscriminatorModel dnet;
  ClassifierHead classifier;
  AdamState adam_encoder;
  AdamState adam_dnet;
  AdamState adam_classifier;

  FeatureBank bank;
  AnnotationMatrix annotation;
  Eigen::Index annotation_pairs = 0;
  CameraGapTable gaps;
  int annotation_epoch = 0;  // epoch the annotation was predicted for

  EpochClock clock;
  Rng sample_rng;
  Rng augment_rng;

  IntVector bank_update_counts;  // per-epoch instrumentation

  static TrainState init(const Benchmark& bench, const TrainConfig& config);
};

struct IterationLosses {
  double ce = 0.0;
  double dim = 0.0;
  double dnet = 0.0;
  double go = 0.0;
  double lo = 0.0;
};

/// One coupled step: a discriminator step (encoder frozen), one combined
/// Adam step on the encoder and classifier (discriminator frozen), then a
/// memory-bank update from the live pre-step target features. Augmented
/// copies of an instance are averaged into one bank update. Returns the
/// loss values computed during the step.
IterationLosses train_iteration(TrainState& state, const Batch& batch,
                                const TrainConfig& config);

/// Label prediction on the bank, then a full pass over the epoch shuffle.
EpochMetrics train_epoch(TrainState& state, const Benchmark& bench,
                         const TrainConfig& config);

struct TrainOutcome {
  std::vector<EpochMetrics> history;
  EvalResult final_eval;
};

struct RunHooks {
  std::function<void(const EpochMetrics&)> on_epoch;  // e.g. CSV append
  std::function<void(int epoch, const TrainState&)> on_checkpoint;
};

TrainOutcome run_training(TrainState& state, const Benchmark& bench,
                          const TrainConfig& config,
                          const RunHooks& hooks = {});

/// Encoder features for a raw observation matrix.
Matrix encode(const EncoderModel& encoder, const Matrix& observations);

EvalResult evaluate_encoder(const EncoderModel& encoder, const EvalSplit& eval);

// Metrics CSV: one row per epoch; eval columns empty when absent.
std::string metrics_csv_header();
std::string metrics_csv_row(const EpochMetrics& m);
void write_metrics_csv(const std::string& path,
                       const std::vector<EpochMetrics>& history);

// Structured-text (JSON) run configuration: TrainConfig plus the two
// DomainSpec blocks, field names verbatim. Unknown keys are rejected.
struct RunConfig {
  TrainConfig train;
  DomainSpec source = default_source_spec();
  DomainSpec target = default_target_spec();
};

RunConfig load_run_config(const std::string& path);
RunConfig parse_run_config(const std::string& json_text);
std::string run_config_json(const RunConfig& config);
Benchmark build_benchmark(const RunConfig& config);

}  // namespace dimglo

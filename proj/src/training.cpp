#include "dimglo/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

namespace dimglo {

std::string mode_name(Mode mode) {
  switch (mode) {
    case Mode::Adaptive: return "adaptive";
    case Mode::Unsupervised: return "unsupervised";
    case Mode::DirectTransfer: return "direct-transfer";
  }
  return "adaptive";
}

Mode mode_from_name(const std::string& name) {
  if (name == "adaptive") return Mode::Adaptive;
  if (name == "unsupervised") return Mode::Unsupervised;
  if (name == "direct-transfer") return Mode::DirectTransfer;
  throw ConfigError("unknown mode: " + name);
}

void TrainConfig::validate() const {
  if (alpha <= 0.0) throw ConfigError("alpha must be > 0");
  if (beta <= 0.0) throw ConfigError("beta must be > 0");
  if (lambda_go < 0.0 || lambda_lo < 0.0 || lambda_dim < 0.0) {
    throw ConfigError("loss weights must be >= 0");
  }
  if (source_batch < 1 || target_batch < 1) {
    throw ConfigError("batch sizes must be >= 1");
  }
  if (augment_copies < 0) throw ConfigError("augment_copies must be >= 0");
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (lr <= 0.0) throw ConfigError("lr must be > 0");
  if (lr_decay <= 0.0 || lr_decay > 1.0) throw ConfigError("lr_decay in (0,1]");
  if (lr_decay_interval < 1) throw ConfigError("lr_decay_interval >= 1");
  if (go_start_epoch < 1) throw ConfigError("go_start_epoch >= 1");
  if (min_cluster_size < 2) throw ConfigError("min_cluster_size >= 2");
  if (encoder_feature < 1 || dnet_hidden < 1) {
    throw ConfigError("model dims must be >= 1");
  }
}

double lr_schedule(int epoch, const TrainConfig& config) {
  if (epoch < 0) throw ConfigError("lr_schedule: epoch must be >= 0");
  return config.lr *
         std::pow(config.lr_decay, static_cast<double>(epoch / config.lr_decay_interval));
}

namespace {

IntVector shuffled_indices(Eigen::Index n, Rng& rng) {
  IntVector idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  std::shuffle(idx.begin(), idx.end(), rng);
  return idx;
}

IntVector draw_without_replacement(Eigen::Index n, int count, Rng& rng) {
  IntVector idx = shuffled_indices(n, rng);
  idx.resize(static_cast<std::size_t>(count));
  return idx;
}

std::vector<std::vector<bool>> same_instance_mask(const IntVector& instances) {
  const std::size_t k = instances.size();
  std::vector<std::vector<bool>> mask(k, std::vector<bool>(k, false));
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      mask[i][j] = instances[i] == instances[j];
    }
  }
  return mask;
}

}  // namespace

Batch assemble_batch(const LabeledDataset& source, const IntVector& source_idx,
                     const LabeledDataset& target, const IntVector& target_idx,
                     const TrainConfig& config, Rng& rng) {
  Batch batch;
  batch.source_obs.resize(static_cast<Eigen::Index>(source_idx.size()),
                          source.size() > 0 ? source.observations.cols() : 0);
  for (std::size_t r = 0; r < source_idx.size(); ++r) {
    batch.source_obs.row(static_cast<Eigen::Index>(r)) =
        source.observations.row(source_idx[r]);
    batch.source_labels.push_back(
        source.identities[static_cast<std::size_t>(source_idx[r])]);
  }

  const int copies = config.augment_copies;
  const Eigen::Index rows_per_instance = 1 + copies;
  batch.target_obs.resize(
      static_cast<Eigen::Index>(target_idx.size()) * rows_per_instance,
      target.size() > 0 ? target.observations.cols() : 0);
  std::normal_distribution<double> noise(0.0, 1.0);
  Eigen::Index row = 0;
  for (int idx : target_idx) {
    const Vector original = target.observations.row(idx).transpose();
    batch.target_obs.row(row++) = original.transpose();
    batch.target_instances.push_back(idx);
    batch.target_cams.push_back(
        target.camera_ids[static_cast<std::size_t>(idx)]);
    for (int c = 0; c < copies; ++c) {
      Vector noisy = original;
      for (Eigen::Index d = 0; d < noisy.size(); ++d) {
        noisy(d) += config.augment_sigma * noise(rng);
      }
      batch.target_obs.row(row++) = l2_normalize(noisy).transpose();
      batch.target_instances.push_back(idx);
      batch.target_cams.push_back(
          target.camera_ids[static_cast<std::size_t>(idx)]);
    }
  }
  return batch;
}

Batch sample_batch(const LabeledDataset& source, const LabeledDataset& target,
                   const TrainConfig& config, Rng& rng) {
  if (source.size() > 0 && config.source_batch > source.size()) {
    throw BatchLargerThanSetError("sample_batch: source batch too large");
  }
  if (target.size() > 0 && config.target_batch > target.size()) {
    throw BatchLargerThanSetError("sample_batch: target batch too large");
  }
  const IntVector src = source.size() > 0
                            ? draw_without_replacement(source.size(),
                                                       config.source_batch, rng)
                            : IntVector{};
  const IntVector tgt = target.size() > 0
                            ? draw_without_replacement(target.size(),
                                                       config.target_batch, rng)
                            : IntVector{};
  return assemble_batch(source, src, target, tgt, config, rng);
}

TrainState TrainState::init(const Benchmark& bench, const TrainConfig& config) {
  config.validate();
  const bool has_source = bench.source.size() > 0;
  const bool has_target = bench.target_train.size() > 0;
  if (config.mode != Mode::Unsupervised && !has_source) {
    throw ConfigError("mode needs a source set");
  }
  if (config.mode != Mode::DirectTransfer && !has_target) {
    throw ConfigError("mode needs a target set");
  }

  const Eigen::Index input_dim = has_target ? bench.target_train.observations.cols()
                                            : bench.source.observations.cols();
  if (has_source && has_target &&
      bench.source.observations.cols() != input_dim) {
    throw DimensionMismatchError("benchmark input dimensions differ");
  }
  if (config.encoder_input != 0 && config.encoder_input != input_dim) {
    throw ConfigError("encoder_input does not match benchmark dimension");
  }

  int classes = 1;
  for (std::size_t i = 0; i < bench.source.identities.size(); ++i) {
    classes = std::max(classes, bench.source.identities[i] + 1);
  }

  TrainState state;
  Rng enc_rng = make_rng(config.seed, 0);
  Rng dnet_rng = make_rng(config.seed, 1);
  Rng cls_rng = make_rng(config.seed, 2);
  state.encoder = EncoderModel(static_cast<int>(input_dim),
                               config.encoder_hidden, config.encoder_feature,
                               enc_rng);
  state.dnet = DiscriminatorModel(config.encoder_feature, config.dnet_hidden,
                                  dnet_rng);
  state.classifier = ClassifierHead(config.encoder_feature, classes, cls_rng);
  state.adam_encoder = AdamState::for_params(
      static_cast<const EncoderModel&>(state.encoder).params(), config.lr);
  state.adam_dnet = AdamState::for_params(
      static_cast<const DiscriminatorModel&>(state.dnet).params(), config.lr);
  state.adam_classifier = AdamState::for_params(
      static_cast<const ClassifierHead&>(state.classifier).params(), config.lr);
  state.sample_rng = make_rng(config.seed, 3);
  state.augment_rng = make_rng(config.seed, 4);

  if (config.mode != Mode::DirectTransfer) {
    const Matrix features =
        state.encoder.forward(bench.target_train.observations);
    state.bank = FeatureBank::init(
        features, bench.target_train.camera_ids,
        std::vector<Domain>(static_cast<std::size_t>(features.rows()),
                            Domain::Target));
    state.gaps.gap = camera_gap_matrix(state.bank, config.mmd_bandwidth);
    state.gaps.base_weight = 1.0;
    state.gaps.mean_gap = 0.0;
    state.bank_update_counts.assign(
        static_cast<std::size_t>(state.bank.size()), 0);
  }
  return state;
}

IterationLosses train_iteration(TrainState& state, const Batch& batch,
                                const TrainConfig& config) {
  IterationLosses losses;
  const Mode mode = config.mode;
  const Eigen::Index rows_s = batch.source_obs.rows();
  const Eigen::Index rows_t = batch.target_obs.rows();
  const bool use_source = mode != Mode::Unsupervised && rows_s > 0;
  const bool use_target = mode != Mode::DirectTransfer && rows_t > 0;
  const bool adversarial =
      mode == Mode::Adaptive && config.lambda_dim > 0.0 && use_source && use_target;
  if (use_target && state.annotation_epoch != state.clock.epoch) {
    throw StaleAnnotationError("train_iteration: annotation is stale");
  }

  Matrix inputs(rows_s * use_source + rows_t * use_target,
                use_target ? batch.target_obs.cols() : batch.source_obs.cols());
  if (use_source) inputs.topRows(rows_s) = batch.source_obs;
  if (use_target) inputs.bottomRows(rows_t) = batch.target_obs;

  EncoderModel::Cache cache;
  const Matrix features = state.encoder.forward(inputs, &cache);
  const Eigen::Index live_s = use_source ? rows_s : 0;

  // Discriminator step, encoder frozen.
  if (adversarial) {
    DiscriminatorModel::Cache dcache;
    const Vector scores = state.dnet.forward(features, &dcache);
    LossResult loss = dnet_loss(scores.head(live_s), scores.tail(rows_t));
    losses.dnet = loss.value;
    Vector grad_scores(scores.size());
    grad_scores.head(live_s) = loss.gradients["scores_src"].col(0);
    grad_scores.tail(rows_t) = loss.gradients["scores_tgt"].col(0);
    const GradientBlocks grads = state.dnet.backward(dcache, grad_scores);
    adam_step(state.dnet.params(), grads, state.adam_dnet);
  }

  // Encoder (+ classifier) step, discriminator frozen.
  Matrix grad_features = Matrix::Zero(features.rows(), features.cols());
  GradientBlocks classifier_grads;
  if (use_source) {
    ClassifierHead::Cache ccache;
    const Matrix logits = state.classifier.forward(features.topRows(live_s), &ccache);
    LossResult loss = ce_loss(logits, batch.source_labels);
    losses.ce = loss.value;
    Matrix grad_src;
    classifier_grads =
        state.classifier.backward(ccache, loss.gradients["logits"], &grad_src);
    grad_features.topRows(live_s) += grad_src;
  }
  if (adversarial) {
    DiscriminatorModel::Cache dcache;
    const Vector scores = state.dnet.forward(features, &dcache);
    LossResult loss = dim_loss(scores.head(live_s), scores.tail(rows_t));
    losses.dim = loss.value;
    Vector grad_scores(scores.size());
    grad_scores.head(live_s) = loss.gradients["scores_src"].col(0);
    grad_scores.tail(rows_t) = loss.gradients["scores_tgt"].col(0);
    Matrix grad_dim;
    state.dnet.backward(dcache, grad_scores, &grad_dim);
    grad_features += config.lambda_dim * grad_dim;
  }
  if (use_target) {
    const Matrix target_feats = features.bottomRows(rows_t);
    if (state.clock.epoch >= config.go_start_epoch && config.lambda_go > 0.0 &&
        state.annotation_pairs > 0) {
      LossResult loss = go_loss(target_feats, batch.target_instances,
                                state.bank, state.annotation, state.gaps,
                                config.beta);
      losses.go = loss.value;
      grad_features.bottomRows(rows_t) +=
          config.lambda_go * loss.gradients["anchors"];
    }
    if (config.lambda_lo > 0.0 && rows_t > 1) {
      LossResult loss = lo_loss(target_feats,
                                same_instance_mask(batch.target_instances),
                                config.beta);
      losses.lo = loss.value;
      grad_features.bottomRows(rows_t) +=
          config.lambda_lo * loss.gradients["batch"];
    }
  }

  const GradientBlocks encoder_grads = state.encoder.backward(cache, grad_features);
  adam_step(state.encoder.params(), encoder_grads, state.adam_encoder);
  if (use_source) {
    adam_step(state.classifier.params(), classifier_grads, state.adam_classifier);
  }

  // Memory-bank refresh from the live (pre-step) target features, one
  // update per instance with same-instance copies averaged first.
  if (use_target) {
    IntVector unique;
    for (int idx : batch.target_instances) {
      if (unique.empty() || unique.back() != idx) unique.push_back(idx);
    }
    Matrix averaged(static_cast<Eigen::Index>(unique.size()), features.cols());
    const Matrix target_feats = features.bottomRows(rows_t);
    Eigen::Index at = 0;
    for (std::size_t u = 0; u < unique.size(); ++u) {
      Vector sum = Vector::Zero(features.cols());
      int count = 0;
      while (at < rows_t &&
             batch.target_instances[static_cast<std::size_t>(at)] == unique[u]) {
        sum += target_feats.row(at).transpose();
        ++count;
        ++at;
      }
      averaged.row(static_cast<Eigen::Index>(u)) =
          l2_normalize(sum / count).transpose();
    }
    state.bank.update(unique, averaged, state.clock);
    for (int idx : unique) {
      ++state.bank_update_counts[static_cast<std::size_t>(idx)];
    }
  }
  state.clock.advance_iteration();
  return losses;
}

namespace {

struct LossAccumulator {
  double ce = 0, dim = 0, dnet = 0, go = 0, lo = 0;
  int iterations = 0;

  void add(const IterationLosses& losses) {
    ce += losses.ce;
    dim += losses.dim;
    dnet += losses.dnet;
    go += losses.go;
    lo += losses.lo;
    ++iterations;
  }
};

}  // namespace

EpochMetrics train_epoch(TrainState& state, const Benchmark& bench,
                         const TrainConfig& config) {
  state.clock.advance_epoch();
  const int epoch = state.clock.epoch;
  const double lr = lr_schedule(epoch - 1, config);
  state.adam_encoder.lr = lr;
  state.adam_dnet.lr = lr;
  state.adam_classifier.lr = lr;

  EpochMetrics metrics;
  metrics.epoch = epoch;
  metrics.lr = lr;

  const bool use_target = config.mode != Mode::DirectTransfer;
  if (use_target) {
    const KReciprocalParams params =
        config.k_reciprocal.scaled_for(state.bank.size());
    const DistanceMatrix dist = k_reciprocal_from_distances(
        euclidean_distance_matrix(state.bank.rows()), params.k1, params.k2,
        params.lambda);
    const ClusterAssignment clusters = density_cluster(
        dist, config.min_cluster_size, config.min_samples);
    state.annotation = select_positive_pairs(clusters, dist, config.alpha);
    state.annotation_pairs = state.annotation.total_pairs();
    if (state.annotation_pairs > 0) {
      state.gaps.base_weight =
          base_weight(state.gaps.gap, state.annotation, state.bank.camera_ids());
      state.gaps.mean_gap = 1.0 - state.gaps.base_weight;
    } else {
      state.gaps.base_weight = 1.0;
      state.gaps.mean_gap = 0.0;
    }
    state.annotation_epoch = epoch;

    const PairMetrics pm =
        pair_metrics(state.annotation, bench.target_train.identities);
    metrics.pair_precision = pm.precision;
    metrics.pair_recall = pm.recall;
    std::fill(state.bank_update_counts.begin(), state.bank_update_counts.end(),
              0);
  }

  // Epoch shuffle: the target partition drives the iteration count; the
  // source side cycles through its own shuffle. Direct transfer iterates
  // the source partition instead.
  LossAccumulator acc;
  const bool use_source = config.mode != Mode::Unsupervised;
  IntVector source_queue =
      use_source ? shuffled_indices(bench.source.size(), state.sample_rng)
                 : IntVector{};
  std::size_t source_cursor = 0;
  auto next_source = [&](int count) {
    IntVector idx;
    idx.reserve(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) {
      if (source_cursor == source_queue.size()) {
        source_queue = shuffled_indices(bench.source.size(), state.sample_rng);
        source_cursor = 0;
      }
      idx.push_back(source_queue[source_cursor++]);
    }
    return idx;
  };

  if (use_target) {
    const IntVector target_order =
        shuffled_indices(bench.target_train.size(), state.sample_rng);
    for (std::size_t at = 0; at < target_order.size();
         at += static_cast<std::size_t>(config.target_batch)) {
      const std::size_t end = std::min(
          at + static_cast<std::size_t>(config.target_batch), target_order.size());
      const IntVector tgt(target_order.begin() + static_cast<std::ptrdiff_t>(at),
                          target_order.begin() + static_cast<std::ptrdiff_t>(end));
      const IntVector src =
          use_source ? next_source(config.source_batch) : IntVector{};
      const Batch batch = assemble_batch(bench.source, src, bench.target_train,
                                         tgt, config, state.augment_rng);
      acc.add(train_iteration(state, batch, config));
    }
  } else {
    const IntVector source_order =
        shuffled_indices(bench.source.size(), state.sample_rng);
    for (std::size_t at = 0; at < source_order.size();
         at += static_cast<std::size_t>(config.source_batch)) {
      const std::size_t end = std::min(
          at + static_cast<std::size_t>(config.source_batch), source_order.size());
      const IntVector src(source_order.begin() + static_cast<std::ptrdiff_t>(at),
                          source_order.begin() + static_cast<std::ptrdiff_t>(end));
      const Batch batch = assemble_batch(bench.source, src, LabeledDataset{},
                                         {}, config, state.augment_rng);
      acc.add(train_iteration(state, batch, config));
    }
  }

  if (acc.iterations > 0) {
    metrics.loss_ce = acc.ce / acc.iterations;
    metrics.loss_dim = acc.dim / acc.iterations;
    metrics.loss_dnet = acc.dnet / acc.iterations;
    metrics.loss_go = acc.go / acc.iterations;
    metrics.loss_lo = acc.lo / acc.iterations;
    metrics.loss_total = metrics.loss_ce + config.lambda_dim * metrics.loss_dim +
                         config.lambda_go * metrics.loss_go +
                         config.lambda_lo * metrics.loss_lo;
  }

  const bool eval_due =
      (config.eval_interval > 0 && epoch % config.eval_interval == 0) ||
      epoch == config.epochs;
  if (eval_due && bench.eval.query_obs.rows() > 0) {
    metrics.eval = evaluate_encoder(state.encoder, bench.eval);
  }
  return metrics;
}

TrainOutcome run_training(TrainState& state, const Benchmark& bench,
                          const TrainConfig& config, const RunHooks& hooks) {
  TrainOutcome outcome;
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    EpochMetrics metrics = train_epoch(state, bench, config);
    if (hooks.on_epoch) hooks.on_epoch(metrics);
    if (hooks.on_checkpoint && config.checkpoint_interval > 0 &&
        epoch % config.checkpoint_interval == 0) {
      hooks.on_checkpoint(epoch, state);
    }
    outcome.history.push_back(std::move(metrics));
  }
  if (outcome.history.back().eval.has_value()) {
    outcome.final_eval = *outcome.history.back().eval;
  }
  return outcome;
}

Matrix encode(const EncoderModel& encoder, const Matrix& observations) {
  return encoder.forward(observations);
}

EvalResult evaluate_encoder(const EncoderModel& encoder, const EvalSplit& eval) {
  const Matrix query = encoder.forward(eval.query_obs);
  const Matrix gallery = encoder.forward(eval.gallery_obs);
  return evaluate(query, eval.query_ids, eval.query_cams, gallery,
                  eval.gallery_ids, eval.gallery_cams);
}

std::string metrics_csv_header() {
  return "epoch,lr,loss_ce,loss_dim,loss_dnet,loss_go,loss_lo,loss_total,"
         "pair_precision,pair_recall,rank1,rank5,rank10,map";
}

std::string metrics_csv_row(const EpochMetrics& m) {
  std::ostringstream out;
  out.precision(17);
  out << m.epoch << "," << m.lr << "," << m.loss_ce << "," << m.loss_dim << ","
      << m.loss_dnet << "," << m.loss_go << "," << m.loss_lo << ","
      << m.loss_total << "," << m.pair_precision << "," << m.pair_recall;
  if (m.eval.has_value()) {
    out << "," << m.eval->rank1 << "," << m.eval->rank5 << "," << m.eval->rank10
        << "," << m.eval->mean_ap;
  } else {
    out << ",,,,";
  }
  return out.str();
}

void write_metrics_csv(const std::string& path,
                       const std::vector<EpochMetrics>& history) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for write: " + path);
  out << metrics_csv_header() << "\n";
  for (const EpochMetrics& m : history) out << metrics_csv_row(m) << "\n";
}

}  // namespace dimglo

#include "otfs/pretrain.hpp"

#include "otfs/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace otfs {

namespace {

Matrix gaussian_matrix(Index rows, Index cols, double std_dev, std::mt19937_64& rng) {
  std::normal_distribution<double> unit(0.0, 1.0);
  Matrix out(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    for (Index j = 0; j < cols; ++j) out(i, j) = std_dev * unit(rng);
  }
  return out;
}

void mask_rows(Matrix& rows, double mask_ratio, std::mt19937_64& rng) {
  const Index masked = static_cast<Index>(std::floor(mask_ratio * rows.cols()));
  if (masked == 0) return;
  std::vector<Index> coords(static_cast<std::size_t>(rows.cols()));
  std::iota(coords.begin(), coords.end(), Index{0});
  for (Index r = 0; r < rows.rows(); ++r) {
    for (Index i = 0; i < masked; ++i) {
      std::uniform_int_distribution<std::size_t> pick(static_cast<std::size_t>(i),
                                                      coords.size() - 1);
      std::swap(coords[static_cast<std::size_t>(i)], coords[pick(rng)]);
      rows(r, coords[static_cast<std::size_t>(i)]) = 0.0;
    }
  }
}

std::vector<int> doubled_labels(const std::vector<int>& labels) {
  std::vector<int> out = labels;
  out.insert(out.end(), labels.begin(), labels.end());
  return out;
}

}  // namespace

Matrix LinearEncoder::encode(const Matrix& x) const {
  if (x.cols() != weight.rows()) throw ShapeError("encode: input dimension mismatch");
  Matrix out = x * weight;
  out.rowwise() += bias;
  return out;
}

LinearEncoder LinearEncoder::init(Index d_in, Index d_out, std::uint64_t seed) {
  std::mt19937_64 rng(splitmix64(seed));
  LinearEncoder enc;
  enc.weight = gaussian_matrix(d_in, d_out, 1.0 / std::sqrt(static_cast<double>(d_in)), rng);
  enc.bias = RowVector::Zero(d_out);
  return enc;
}

void TrainConfig::validate() const {
  if (batch < 2) throw ConfigError("train config: batch must be >= 2");
  if (epochs < 1) throw ConfigError("train config: epochs must be >= 1");
  if (teacher_momentum < 0 || teacher_momentum > 1)
    throw ConfigError("train config: teacher momentum must be in [0, 1]");
  if (mask_ratio < 0 || mask_ratio > 1)
    throw ConfigError("train config: mask ratio must be in [0, 1]");
  if (noise_std < 0) throw ConfigError("train config: noise std must be >= 0");
  if (encoder_dim < 1) throw ConfigError("train config: encoder dim must be >= 1");
  if (dyce.capacity % (2 * batch) != 0)
    throw ConfigError("train config: memory capacity must be a multiple of 2B");
  loss.validate();
  dyce.validate();
  sinkhorn.validate();
}

LinearEncoder ema_update(const LinearEncoder& teacher, const LinearEncoder& student, double m) {
  if (teacher.weight.rows() != student.weight.rows() ||
      teacher.weight.cols() != student.weight.cols() ||
      teacher.bias.size() != student.bias.size())
    throw ShapeError("ema_update: parameter shapes differ");
  if (m < 0 || m > 1) throw ConfigError("ema_update: momentum must be in [0, 1]");
  LinearEncoder out;
  out.weight = m * teacher.weight + (1.0 - m) * student.weight;
  out.bias = m * teacher.bias + (1.0 - m) * student.bias;
  return out;
}

std::pair<View, View> two_views(const Matrix& batch, double mask_ratio, double noise_std,
                                std::mt19937_64& rng) {
  if (mask_ratio < 0 || mask_ratio > 1) throw ConfigError("two_views: mask ratio out of range");
  auto make_view = [&] {
    View view;
    view.teacher = batch + gaussian_matrix(batch.rows(), batch.cols(), noise_std, rng);
    view.student = view.teacher;
    mask_rows(view.student, mask_ratio, rng);
    return view;
  };
  View a = make_view();
  View b = make_view();
  return {std::move(a), std::move(b)};
}

StepResult train_step(LinearEncoder& student, LinearEncoder& teacher, MemoryState& memory,
                      const Matrix& batch, const std::vector<int>& batch_labels, int epoch,
                      const TrainConfig& cfg, std::mt19937_64& rng) {
  cfg.validate();
  if (batch.rows() != cfg.batch) throw ShapeError("train_step: batch row count mismatch");

  const auto [view_a, view_b] = two_views(batch, cfg.mask_ratio, cfg.noise_std, rng);
  Matrix student_in(2 * cfg.batch, batch.cols());
  student_in << view_a.student, view_b.student;
  Matrix teacher_in(2 * cfg.batch, batch.cols());
  teacher_in << view_a.teacher, view_b.teacher;

  const Matrix z_s = student.encode(student_in);
  const Matrix z_t = teacher.encode(teacher_in);
  const std::vector<int> labels2 = batch_labels.empty() ? batch_labels
                                                        : doubled_labels(batch_labels);

  StepResult result;
  Matrix enhanced_student = z_s;
  Matrix enhanced_teacher = z_t;
  Index k_effective = 0;

  // The memory sees the teacher stream: stable targets, and the mined rows
  // enter the loss as constants either way.
  if (memory.filled == cfg.dyce.capacity) {
    if (!memory.initialized && cfg.dyce.variant != DyceVariant::Fifo) {
      bootstrap_partitions(memory, cfg.dyce, splitmix64(cfg.seed + 0x5eedb001));
    }
    if (epoch >= cfg.dyce.epoch_threshold && cfg.dyce.neighbors > 0) {
      const EnhancedBatch enhanced = topk_enhance(memory, z_t, cfg.dyce);
      k_effective = cfg.dyce.neighbors;
      const Index extra = enhanced.rows.rows() - 2 * cfg.batch;
      enhanced_teacher = enhanced.rows;
      enhanced_student = Matrix(enhanced.rows.rows(), z_s.cols());
      enhanced_student.topRows(2 * cfg.batch) = z_s;
      enhanced_student.bottomRows(extra) = enhanced.rows.bottomRows(extra);
      if (memory.has_labels() && !labels2.empty()) {
        result.purity = positive_purity(memory, enhanced, labels2);
      }
    }
    update_memory(memory, z_t, cfg.dyce, cfg.sinkhorn, labels2);
  } else {
    ingest_fill(memory, z_t, cfg.dyce, labels2);
  }
  result.enhanced_rows = enhanced_student.rows();

  const PositivePairMap pairs = build_pair_map(cfg.batch, k_effective);
  result.loss = loss_value(enhanced_student, enhanced_teacher, pairs, cfg.loss);
  const Matrix grad = loss_grad_student(enhanced_student, enhanced_teacher, pairs, cfg.loss);

  // Only the live rows backpropagate into the encoder.
  const Matrix grad_live = grad.topRows(2 * cfg.batch);
  const Matrix grad_weight = student_in.transpose() * grad_live;
  const RowVector grad_bias = grad_live.colwise().sum();
  student.weight -= cfg.learning_rate * grad_weight;
  student.bias -= cfg.learning_rate * grad_bias;
  teacher = ema_update(teacher, student, cfg.teacher_momentum);
  return result;
}

PretrainResult run_pretraining(const TrainConfig& cfg, const LabeledEmbeddingSet& data) {
  cfg.validate();
  if (data.rows() < cfg.batch) throw CapacityError("run_pretraining: dataset smaller than batch");

  PretrainResult result;
  result.student = LinearEncoder::init(data.dim(), cfg.encoder_dim, splitmix64(cfg.seed));
  result.teacher = result.student;  // copy start makes the EMA closed form exact
  result.memory = MemoryState::create(cfg.dyce.capacity, cfg.encoder_dim);

  std::mt19937_64 shuffle_rng = seeded_stream(cfg.seed, 1);
  const auto batches = stream_batches(data, cfg.batch, cfg.epochs, shuffle_rng);
  const Index per_epoch = data.rows() / cfg.batch;

  std::size_t step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    double loss_sum = 0.0;
    double purity_sum = 0.0;
    int purity_count = 0;
    for (Index b = 0; b < per_epoch; ++b, ++step) {
      const auto& rows = batches[step];
      Matrix batch(cfg.batch, data.dim());
      std::vector<int> labels;
      labels.reserve(rows.size());
      for (Index i = 0; i < cfg.batch; ++i) {
        batch.row(i) = data.embeddings.row(rows[static_cast<std::size_t>(i)]);
        if (data.has_labels())
          labels.push_back(data.labels[static_cast<std::size_t>(rows[static_cast<std::size_t>(i)])]);
      }
      std::mt19937_64 step_rng = seeded_stream(cfg.seed, 1000 + static_cast<std::uint64_t>(step));
      const StepResult sr =
          train_step(result.student, result.teacher, result.memory, batch, labels, epoch, cfg,
                     step_rng);
      loss_sum += sr.loss;
      if (sr.purity) {
        purity_sum += *sr.purity;
        ++purity_count;
      }
    }

    EpochRecord record;
    record.epoch = epoch;
    record.mean_loss = loss_sum / static_cast<double>(per_epoch);
    if (purity_count > 0) record.mean_purity = purity_sum / purity_count;
    if (result.memory.initialized) {
      try {
        record.dbi = dbi(result.memory);
      } catch (const MetricUndefinedError&) {
        // an emptied partition leaves the metric undefined for this epoch
      }
    }
    result.trace.push_back(std::move(record));
  }
  return result;
}

}  // namespace otfs

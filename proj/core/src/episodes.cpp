#include "otfs/episodes.hpp"

#include "otfs/rng.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>

namespace otfs {

namespace {

Matrix l2_normalized_rows(const Matrix& rows) {
  Vector norms = rows.rowwise().norm().cwiseMax(1e-300);
  return rows.array().colwise() / norms.array();
}

std::vector<Index> sample_without_replacement(std::vector<Index> pool, std::size_t count,
                                              std::mt19937_64& rng) {
  for (std::size_t i = 0; i < count; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
    std::swap(pool[i], pool[pick(rng)]);
  }
  pool.resize(count);
  return pool;
}

}  // namespace

std::vector<int> LabeledEmbeddingSet::distinct_classes() const {
  std::set<int> classes(labels.begin(), labels.end());
  return {classes.begin(), classes.end()};
}

void LabeledEmbeddingSet::validate() const {
  if (has_labels() && static_cast<Index>(labels.size()) != rows())
    throw ShapeError("embedding set: label count does not match rows");
  if (!support_pool.empty() && static_cast<Index>(support_pool.size()) != rows())
    throw ShapeError("embedding set: support-pool mask does not match rows");
  for (int label : labels) {
    if (label < 0) throw ConfigError("embedding set: labels must be nonnegative");
  }
}

void EpisodeSpec::validate() const {
  if (ways < 2) throw ConfigError("episode spec: ways must be >= 2");
  if (shots < 1) throw ConfigError("episode spec: shots must be >= 1");
  if (queries_per_class <= shots)
    throw PreconditionError("episode spec: queries per class must exceed shots (Q > K)");
  if (episode_count < 1) throw ConfigError("episode spec: episode count must be >= 1");
}

void SyntheticSpec::validate() const {
  if (classes < 1 || dim < 1 || samples_per_class < 1)
    throw ConfigError("synthetic spec: classes, dim and samples_per_class must be positive");
  if (!(center_scale > 0) || !(within_std > 0))
    throw ConfigError("synthetic spec: center_scale and within_std must be positive");
  if (bias_shift < 0) throw ConfigError("synthetic spec: bias_shift must be >= 0");
}

LabeledEmbeddingSet gen_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  std::mt19937_64 rng = seeded_stream(spec.seed, 0);
  std::normal_distribution<double> unit(0.0, 1.0);

  Matrix centers(spec.classes, spec.dim);
  for (Index c = 0; c < spec.classes; ++c) {
    for (Index j = 0; j < spec.dim; ++j) centers(c, j) = spec.center_scale * unit(rng);
  }

  // With sample bias, a second per-class subpopulation feeds the supports,
  // mean-shifted along a fixed direction. Unbiased sets stay single-pool.
  const bool biased = spec.bias_shift > 0;
  RowVector shift = RowVector::Zero(spec.dim);
  shift[0] = spec.bias_shift * spec.within_std;

  const Index per_class = spec.samples_per_class;
  const Index total = (biased ? 2 : 1) * spec.classes * per_class;
  LabeledEmbeddingSet out;
  out.embeddings = Matrix(total, spec.dim);
  out.labels.reserve(static_cast<std::size_t>(total));
  if (biased) out.support_pool.reserve(static_cast<std::size_t>(total));

  Index row = 0;
  for (Index c = 0; c < spec.classes; ++c) {
    for (Index i = 0; i < per_class; ++i, ++row) {
      for (Index j = 0; j < spec.dim; ++j)
        out.embeddings(row, j) = centers(c, j) + spec.within_std * unit(rng);
      out.labels.push_back(static_cast<int>(c));
      if (biased) out.support_pool.push_back(0);
    }
    if (!biased) continue;
    for (Index i = 0; i < per_class; ++i, ++row) {
      for (Index j = 0; j < spec.dim; ++j)
        out.embeddings(row, j) = centers(c, j) + shift[j] + spec.within_std * unit(rng);
      out.labels.push_back(static_cast<int>(c));
      out.support_pool.push_back(1);
    }
  }
  return out;
}

Episode sample_episode(const LabeledEmbeddingSet& data, const EpisodeSpec& spec,
                       std::mt19937_64& rng) {
  spec.validate();
  data.validate();
  if (!data.has_labels()) throw PreconditionError("sample_episode: dataset has no labels");

  const bool pooled = !data.support_pool.empty();
  std::map<int, std::vector<Index>> support_rows;
  std::map<int, std::vector<Index>> query_rows;
  for (Index i = 0; i < data.rows(); ++i) {
    const int label = data.labels[static_cast<std::size_t>(i)];
    if (!pooled || data.support_pool[static_cast<std::size_t>(i)]) {
      support_rows[label].push_back(i);
    }
    if (!pooled || !data.support_pool[static_cast<std::size_t>(i)]) {
      query_rows[label].push_back(i);
    }
  }

  std::vector<int> eligible;
  for (const auto& [label, rows] : support_rows) {
    const auto query_it = query_rows.find(label);
    const std::size_t query_count = query_it == query_rows.end() ? 0 : query_it->second.size();
    const bool enough = pooled
        ? rows.size() >= static_cast<std::size_t>(spec.shots) &&
              query_count >= static_cast<std::size_t>(spec.queries_per_class)
        : rows.size() >= static_cast<std::size_t>(spec.shots + spec.queries_per_class);
    if (enough) eligible.push_back(label);
  }
  if (static_cast<int>(eligible.size()) < spec.ways)
    throw CapacityError("sample_episode: not enough populated classes for the requested ways");

  std::vector<Index> class_index(eligible.size());
  std::iota(class_index.begin(), class_index.end(), Index{0});
  const std::vector<Index> chosen =
      sample_without_replacement(class_index, static_cast<std::size_t>(spec.ways), rng);

  Episode episode;
  episode.support = Matrix(spec.ways * spec.shots, data.dim());
  episode.query = Matrix(spec.ways * spec.queries_per_class, data.dim());
  Index support_row = 0;
  Index query_row = 0;
  for (Index pick : chosen) {
    const int label = eligible[static_cast<std::size_t>(pick)];
    if (pooled) {
      const auto s = sample_without_replacement(support_rows[label],
                                                static_cast<std::size_t>(spec.shots), rng);
      const auto q = sample_without_replacement(
          query_rows[label], static_cast<std::size_t>(spec.queries_per_class), rng);
      for (Index i : s) {
        episode.support.row(support_row++) = data.embeddings.row(i);
        episode.support_labels.push_back(label);
      }
      for (Index i : q) {
        episode.query.row(query_row++) = data.embeddings.row(i);
        episode.query_labels.push_back(label);
      }
    } else {
      const auto rows = sample_without_replacement(
          support_rows[label], static_cast<std::size_t>(spec.shots + spec.queries_per_class),
          rng);
      for (int i = 0; i < spec.shots; ++i) {
        episode.support.row(support_row++) = data.embeddings.row(rows[static_cast<std::size_t>(i)]);
        episode.support_labels.push_back(label);
      }
      for (int i = 0; i < spec.queries_per_class; ++i) {
        episode.query.row(query_row++) =
            data.embeddings.row(rows[static_cast<std::size_t>(spec.shots + i)]);
        episode.query_labels.push_back(label);
      }
    }
  }
  return episode;
}

MetricsRecord evaluate(const LabeledEmbeddingSet& data, const EpisodeSpec& spec,
                       const EvalPipeline& pipeline) {
  spec.validate();
  // The Q > K gate above also enforces NQ > NK, the alignment requirement.
  OptaConfig opta = pipeline.opta;
  opta.passes = pipeline.opta_passes;
  opta.validate();

  MetricsRecord record;
  record.per_episode_accuracies.reserve(static_cast<std::size_t>(spec.episode_count));
  for (int e = 0; e < spec.episode_count; ++e) {
    std::mt19937_64 rng = seeded_stream(spec.seed, static_cast<std::uint64_t>(e) + 1);
    Episode episode = sample_episode(data, spec, rng);
    if (pipeline.normalize) {
      episode.support = l2_normalized_rows(episode.support);
      episode.query = l2_normalized_rows(episode.query);
    }

    PrototypeSet protos = class_prototypes(episode.support, episode.support_labels);
    protos = opta_iterate(protos, episode.query, opta);

    std::vector<int> predicted;
    if (pipeline.classifier == EvalPipeline::Classifier::LogReg) {
      const LogisticClassifier model =
          fit_logistic(protos, pipeline.logreg.reg, pipeline.logreg.iterations,
                       pipeline.logreg.learning_rate);
      predicted = predict(model, episode.query);
    } else {
      const Matrix d2 = [&] {
        Matrix d = -2.0 * (episode.query * protos.values.transpose());
        d.colwise() += episode.query.rowwise().squaredNorm();
        d.rowwise() += protos.values.rowwise().squaredNorm().transpose();
        return d;
      }();
      predicted.resize(static_cast<std::size_t>(episode.query.rows()));
      for (Index i = 0; i < episode.query.rows(); ++i) {
        Index best = 0;
        d2.row(i).minCoeff(&best);
        predicted[static_cast<std::size_t>(i)] =
            protos.class_order[static_cast<std::size_t>(best)];
      }
    }

    int correct = 0;
    for (std::size_t i = 0; i < predicted.size(); ++i) {
      if (predicted[i] == episode.query_labels[i]) ++correct;
    }
    record.per_episode_accuracies.push_back(static_cast<double>(correct) /
                                            static_cast<double>(predicted.size()));
  }

  const auto& acc = record.per_episode_accuracies;
  const double n = static_cast<double>(acc.size());
  double mean = 0.0;
  for (double a : acc) mean += a;
  mean /= n;
  double var = 0.0;
  for (double a : acc) var += (a - mean) * (a - mean);
  record.mean_accuracy = mean;
  record.std_dev = acc.size() > 1 ? std::sqrt(var / (n - 1.0)) : 0.0;
  record.ci95_half_width = 1.96 * record.std_dev / std::sqrt(n);
  return record;
}

std::vector<std::vector<Index>> stream_batches(const LabeledEmbeddingSet& data, Index batch_size,
                                               int epochs, std::mt19937_64& rng) {
  if (batch_size < 1) throw ConfigError("stream_batches: batch size must be >= 1");
  if (batch_size > data.rows())
    throw CapacityError("stream_batches: batch size exceeds dataset rows");

  std::vector<Index> order(static_cast<std::size_t>(data.rows()));
  std::iota(order.begin(), order.end(), Index{0});
  const Index per_epoch = data.rows() / batch_size;

  std::vector<std::vector<Index>> batches;
  batches.reserve(static_cast<std::size_t>(per_epoch) * static_cast<std::size_t>(epochs));
  for (int epoch = 0; epoch < epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (Index b = 0; b < per_epoch; ++b) {
      batches.emplace_back(order.begin() + b * batch_size,
                           order.begin() + (b + 1) * batch_size);
    }
  }
  return batches;
}

}  // namespace otfs

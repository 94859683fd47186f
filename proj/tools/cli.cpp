#include "cli.hpp"

#include "otfs/io.hpp"
#include "otfs/rng.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace otfs::cli {

namespace {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Resolved run configuration: every emitted record carries its hash and seed.

struct RunConfig {
  std::map<std::string, std::string> values;
  std::uint64_t seed = 0;

  std::string hash() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a over "key=value\n"
    auto mix = [&h](const std::string& s) {
      for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
      }
    };
    for (const auto& [key, value] : values) {
      mix(key);
      mix("=");
      mix(value);
      mix("\n");
    }
    std::ostringstream hex;
    hex << std::hex << h;
    return hex.str();
  }

  json echo() const {
    json out = json::object();
    for (const auto& [key, value] : values) out[key] = value;
    return out;
  }
};

RunConfig resolve_config(const CLI::App& app, std::uint64_t seed) {
  RunConfig rc;
  rc.seed = seed;
  for (const CLI::Option* opt : app.get_options()) {
    const std::string name = opt->get_single_name();
    if (name == "help" || name == "config") continue;
    if (opt->get_expected_min() == 0 && opt->get_expected_max() == 0) {
      rc.values[name] = opt->count() ? "true" : "false";  // plain flag
    } else if (opt->count() || !opt->get_default_str().empty()) {
      rc.values[name] = opt->count() ? opt->results().front() : opt->get_default_str();
    }
  }
  return rc;
}

void stamp(json& record, const RunConfig& rc) {
  record["config_hash"] = rc.hash();
  record["seed"] = rc.seed;
}

// ---------------------------------------------------------------------------
// Small input helpers.

Matrix read_text_matrix(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path, 0);
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    for (char& c : line) {
      if (c == ',') c = ' ';
    }
    std::istringstream fields(line);
    std::vector<double> row;
    double value;
    while (fields >> value) row.push_back(value);
    if (row.empty()) continue;
    if (!rows.empty() && row.size() != rows.front().size())
      throw FormatError(path + ": ragged row on line " + std::to_string(line_no), line_no);
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw FormatError(path + ": no numeric rows", line_no);
  Matrix out(static_cast<Index>(rows.size()), static_cast<Index>(rows.front().size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < rows.front().size(); ++j) {
      out(static_cast<Index>(i), static_cast<Index>(j)) = rows[i][j];
    }
  }
  return out;
}

Vector read_text_vector(const std::string& path) {
  const Matrix m = read_text_matrix(path);
  if (m.cols() == 1) return m.col(0);
  if (m.rows() == 1) return m.row(0).transpose();
  throw FormatError(path + ": expected a vector, got a matrix", 0);
}

json matrix_json(const Matrix& m) {
  json rows = json::array();
  for (Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

json optional_json(const std::optional<double>& value) {
  if (!value || !std::isfinite(*value)) return nullptr;
  return *value;
}

Matrix l2_rows(const Matrix& m) {
  Vector norms = m.rowwise().norm().cwiseMax(1e-300);
  return m.array().colwise() / norms.array();
}

const char* classify(const Error& error) {
  if (dynamic_cast<const ShapeError*>(&error)) return "shape";
  if (dynamic_cast<const ConvergenceError*>(&error)) return "convergence";
  if (dynamic_cast<const NumericalError*>(&error)) return "numerical";
  if (dynamic_cast<const DegeneratePlanError*>(&error)) return "degenerate-plan";
  if (dynamic_cast<const DegenerateClusteringError*>(&error)) return "degenerate-clustering";
  if (dynamic_cast<const PreconditionError*>(&error)) return "precondition";
  if (dynamic_cast<const MetricUndefinedError*>(&error)) return "metric-undefined";
  if (dynamic_cast<const CapacityError*>(&error)) return "capacity";
  if (dynamic_cast<const FormatError*>(&error)) return "format";
  if (dynamic_cast<const ConfigError*>(&error)) return "config";
  return "error";
}

// Shared seed option with the OTFS_SEED environment fallback.
CLI::Option* add_seed(CLI::App& app, std::uint64_t& seed) {
  return app.add_option("--seed", seed, "Master seed")
      ->envname("OTFS_SEED")
      ->capture_default_str();
}

std::string strip(const std::string& text) {
  const auto begin = text.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  return text.substr(begin, text.find_last_not_of(" \t\r") - begin + 1);
}

// Plain "key = value" configuration, keyed by long option name. Flags given
// on the command line (or through the environment) win; unknown keys are
// rejected outright.
void apply_config_file(CLI::App& app, const std::string& path) {
  if (path.empty()) return;
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line = line.substr(0, hash);
    line = strip(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(path + " line " + std::to_string(line_no) + ": expected key = value");
    const std::string key = strip(line.substr(0, eq));
    const std::string value = strip(line.substr(eq + 1));
    CLI::Option* opt = app.get_option_no_throw("--" + key);
    if (opt == nullptr || key == "config")
      throw ConfigError(path + " line " + std::to_string(line_no) +
                        ": unknown configuration key '" + key + "'");
    if (opt->count() > 0) continue;  // command line and environment take precedence
    opt->add_result(value);
    opt->run_callback();
  }
}

// ---------------------------------------------------------------------------
// Subcommand contexts. CLI11 callbacks run after parsing; each context holds
// the bound option storage plus the work itself.

struct SinkhornCmd {
  std::string cost_path, r_path, c_path;
  SinkhornConfig cfg;
  std::uint64_t seed = 0;

  std::string config_path;

  void bind(CLI::App& app) {
    app.add_option("--cost", cost_path, "Numeric text matrix of pairwise costs")->required();
    app.add_option("--r", r_path, "Row marginal (numeric text vector)")->required();
    app.add_option("--c", c_path, "Column marginal (numeric text vector)")->required();
    app.add_option("--epsilon", cfg.epsilon, "Entropic regularization")->capture_default_str();
    app.add_option("--tol", cfg.tolerance, "Max marginal violation")->capture_default_str();
    app.add_option("--max-iter", cfg.max_iterations, "Iteration budget")->capture_default_str();
    add_seed(app, seed);
    app.add_option("--config", config_path, "Plain 'key = value' configuration file");
  }

  void run(CLI::App& app, std::ostream& out) {
    apply_config_file(app, config_path);
    const CostMatrix cost{read_text_matrix(cost_path), Metric::SquaredEuclidean};
    const Marginals marginals{read_text_vector(r_path), read_text_vector(c_path)};
    const TransportPlan plan = sinkhorn(cost, marginals, cfg);

    const RunConfig rc = resolve_config(app, seed);
    json record;
    record["plan"] = matrix_json(plan.values);
    record["iterations_used"] = plan.iterations_used;
    record["max_marginal_violation"] = plan.max_marginal_violation;
    record["cost_min"] = plan.cost_min;
    record["cost_range"] = plan.cost_range;
    record["transport_cost"] = transport_cost(plan, cost);
    record["config"] = rc.echo();
    stamp(record, rc);
    out << record.dump() << "\n";
  }
};

struct GenSynthCmd {
  SyntheticSpec spec;
  std::string out_path = "embeddings.emb";
  std::string support_out;

  std::string config_path;

  void bind(CLI::App& app) {
    app.add_option("--classes", spec.classes, "Number of classes")->capture_default_str();
    app.add_option("--dim", spec.dim, "Embedding dimension")->capture_default_str();
    app.add_option("--per-class", spec.samples_per_class, "Samples per class")
        ->capture_default_str();
    app.add_option("--center-scale", spec.center_scale, "Center spread")->capture_default_str();
    app.add_option("--within-std", spec.within_std, "Within-class sigma")->capture_default_str();
    app.add_option("--bias-shift", spec.bias_shift,
                   "Support subpopulation shift, in units of sigma")
        ->capture_default_str();
    app.add_option("--out", out_path, "Output embedding file")->capture_default_str();
    app.add_option("--support-out", support_out,
                   "Where to write the shifted support pool (bias-shift > 0)");
    add_seed(app, spec.seed);
    app.add_option("--config", config_path, "Plain 'key = value' configuration file");
  }

  void run(CLI::App& app, std::ostream& out) {
    apply_config_file(app, config_path);
    const LabeledEmbeddingSet data = gen_synthetic(spec);
    const RunConfig rc = resolve_config(app, spec.seed);
    json record;
    if (data.support_pool.empty()) {
      write_embeddings(data, out_path);
      record["rows"] = data.rows();
    } else {
      // Split the pools into separate files; the format itself is pool-free.
      LabeledEmbeddingSet queries, supports;
      const Index half = data.rows() / 2;
      queries.embeddings = Matrix(half, data.dim());
      supports.embeddings = Matrix(half, data.dim());
      Index qi = 0, si = 0;
      for (Index i = 0; i < data.rows(); ++i) {
        if (data.support_pool[static_cast<std::size_t>(i)]) {
          supports.embeddings.row(si++) = data.embeddings.row(i);
          supports.labels.push_back(data.labels[static_cast<std::size_t>(i)]);
        } else {
          queries.embeddings.row(qi++) = data.embeddings.row(i);
          queries.labels.push_back(data.labels[static_cast<std::size_t>(i)]);
        }
      }
      write_embeddings(queries, out_path);
      record["rows"] = queries.rows();
      if (!support_out.empty()) {
        write_embeddings(supports, support_out);
        record["support_written"] = support_out;
        record["support_rows"] = supports.rows();
      }
    }
    record["written"] = out_path;
    record["dim"] = spec.dim;
    record["classes"] = spec.classes;
    record["config"] = rc.echo();
    stamp(record, rc);
    out << record.dump() << "\n";
  }
};

struct MemorySimCmd {
  std::string variant = "full";
  DyceConfig dyce;
  SinkhornConfig sinkhorn_cfg{0.15, 50000, 1e-6};
  int batches = 50;
  Index batch = 16;
  std::string labels_path;
  SyntheticSpec synth;
  std::uint64_t seed = 0;

  std::string config_path;

  void bind(CLI::App& app) {
    dyce.capacity = 256;
    dyce.partitions = 8;
    synth.classes = 8;
    synth.dim = 16;
    synth.center_scale = 2.0;
    synth.within_std = 1.0;
    app.add_option("--variant", variant, "Memory variant: full|fifo|kmeans")
        ->check(CLI::IsMember({"full", "fifo", "kmeans"}))
        ->capture_default_str();
    app.add_option("--capacity", dyce.capacity, "Memory capacity M")->capture_default_str();
    app.add_option("--partitions", dyce.partitions, "Partition count P")->capture_default_str();
    app.add_option("--k", dyce.neighbors, "Neighbors per row")->capture_default_str();
    app.add_option("--batches", batches, "Number of batches to stream")->capture_default_str();
    app.add_option("--batch", batch, "Rows per view (2B rows hit the memory per step)")
        ->capture_default_str();
    app.add_option("--labels", labels_path, "Labeled embedding file to stream instead");
    app.add_option("--classes", synth.classes, "Synthetic classes")->capture_default_str();
    app.add_option("--dim", synth.dim, "Synthetic dimension")->capture_default_str();
    app.add_option("--center-scale", synth.center_scale, "Synthetic center spread")
        ->capture_default_str();
    app.add_option("--within-std", synth.within_std, "Synthetic within-class sigma")
        ->capture_default_str();
    app.add_option("--epsilon", sinkhorn_cfg.epsilon, "Coupling regularization")
        ->capture_default_str();
    add_seed(app, seed);
    app.add_option("--config", config_path, "Plain 'key = value' configuration file");
  }

  void run(CLI::App& app, std::ostream& out) {
    apply_config_file(app, config_path);
    dyce.variant = variant_from_name(variant);
    if (dyce.capacity % (2 * batch) != 0)
      throw ConfigError("memory-sim: capacity must be a multiple of 2*batch");

    LabeledEmbeddingSet data;
    if (!labels_path.empty()) {
      data = read_embeddings(labels_path);
      if (!data.has_labels()) throw ConfigError("memory-sim: --labels file carries no labels");
    } else {
      const Index rows_needed = static_cast<Index>(batches) * 2 * batch;
      synth.samples_per_class =
          static_cast<int>((rows_needed + synth.classes - 1) / synth.classes);
      synth.seed = seed;
      data = gen_synthetic(synth);
    }

    const RunConfig rc = resolve_config(app, seed);
    json header;
    header["config"] = rc.echo();
    stamp(header, rc);
    out << header.dump() << "\n";

    std::mt19937_64 rng = seeded_stream(seed, 1);
    const int epochs =
        static_cast<int>((static_cast<Index>(batches) * 2 * batch + data.rows() - 1) / data.rows()) + 1;
    const auto stream = stream_batches(data, 2 * batch, epochs, rng);

    MemoryState memory = MemoryState::create(dyce.capacity, data.dim());
    for (int step = 0; step < batches; ++step) {
      Matrix rows(2 * batch, data.dim());
      std::vector<int> labels;
      for (Index i = 0; i < 2 * batch; ++i) {
        const Index src = stream[static_cast<std::size_t>(step)][static_cast<std::size_t>(i)];
        rows.row(i) = data.embeddings.row(src);
        if (data.has_labels()) labels.push_back(data.labels[static_cast<std::size_t>(src)]);
      }

      std::optional<double> step_dbi;
      std::optional<double> step_purity;
      if (memory.filled < dyce.capacity) {
        ingest_fill(memory, rows, dyce, labels);
      } else {
        if (!memory.initialized && dyce.variant != DyceVariant::Fifo) {
          bootstrap_partitions(memory, dyce, splitmix64(seed + 1));
        }
        if (dyce.neighbors > 0 && (memory.initialized || dyce.variant == DyceVariant::Fifo)) {
          const EnhancedBatch enhanced = topk_enhance(memory, rows, dyce);
          if (memory.has_labels() && !labels.empty()) {
            step_purity = positive_purity(memory, enhanced, labels);
          }
        }
        update_memory(memory, rows, dyce, sinkhorn_cfg, labels);
        if (memory.initialized) {
          try {
            step_dbi = dbi(memory);
          } catch (const MetricUndefinedError&) {
          }
        }
      }

      json record;
      record["step"] = step;
      record["filled"] = memory.filled;
      record["dbi"] = optional_json(step_dbi);
      record["purity"] = optional_json(step_purity);
      stamp(record, rc);
      out << record.dump() << "\n";
    }
  }
};

struct EvalCmd {
  std::string data_path;
  std::string support_data_path;
  EpisodeSpec spec;
  int opta_passes = 0;
  std::string classifier = "logreg";
  bool no_normalize = false;
  bool literal_plan = false;
  double epsilon = 0.05;

  std::string config_path;

  void bind(CLI::App& app) {
    spec.episode_count = 600;
    app.add_option("--data", data_path, "Embedding file (labeled)")->required();
    app.add_option("--ways", spec.ways, "Classes per episode")->capture_default_str();
    app.add_option("--shots", spec.shots, "Support shots per class")->capture_default_str();
    app.add_option("--queries", spec.queries_per_class, "Query shots per class")
        ->capture_default_str();
    app.add_option("--episodes", spec.episode_count, "Episode count")->capture_default_str();
    app.add_option("--opta", opta_passes, "OpTA passes (0 disables alignment)")
        ->check(CLI::Range(0, 5))
        ->capture_default_str();
    app.add_option("--classifier", classifier, "logreg|proto")
        ->check(CLI::IsMember({"logreg", "proto"}))
        ->capture_default_str();
    app.add_option("--support-data", support_data_path,
                   "Separate support-pool embedding file (sample-bias runs)");
    app.add_option("--epsilon", epsilon, "OpTA Sinkhorn regularization")->capture_default_str();
    app.add_flag("--no-normalize", no_normalize, "Skip L2 normalization before alignment");
    app.add_flag("--literal-plan", literal_plan, "Use the unrescaled plan-transpose transport");
    add_seed(app, spec.seed);
    app.add_option("--config", config_path, "Plain 'key = value' configuration file");
  }

  void run(CLI::App& app, std::ostream& out) {
    apply_config_file(app, config_path);
    LabeledEmbeddingSet data = read_embeddings(data_path);
    if (!data.has_labels()) throw ConfigError("eval: --data file carries no labels");
    if (!support_data_path.empty()) {
      const LabeledEmbeddingSet supports = read_embeddings(support_data_path);
      if (!supports.has_labels())
        throw ConfigError("eval: --support-data file carries no labels");
      if (supports.dim() != data.dim())
        throw ShapeError("eval: support pool dimension does not match the data");
      LabeledEmbeddingSet merged;
      merged.embeddings = Matrix(data.rows() + supports.rows(), data.dim());
      merged.embeddings.topRows(data.rows()) = data.embeddings;
      merged.embeddings.bottomRows(supports.rows()) = supports.embeddings;
      merged.labels = data.labels;
      merged.labels.insert(merged.labels.end(), supports.labels.begin(), supports.labels.end());
      merged.support_pool.assign(static_cast<std::size_t>(data.rows()), 0);
      merged.support_pool.insert(merged.support_pool.end(),
                                 static_cast<std::size_t>(supports.rows()), 1);
      data = std::move(merged);
    }

    EvalPipeline pipeline;
    pipeline.opta_passes = opta_passes;
    pipeline.classifier = classifier == "proto" ? EvalPipeline::Classifier::Proto
                                                : EvalPipeline::Classifier::LogReg;
    pipeline.normalize = !no_normalize;
    pipeline.opta.barycentric = !literal_plan;
    pipeline.opta.sinkhorn.epsilon = epsilon;
    const MetricsRecord record = evaluate(data, spec, pipeline);

    const RunConfig rc = resolve_config(app, spec.seed);
    json output;
    output["mean_accuracy"] = record.mean_accuracy;
    output["ci95_half_width"] = record.ci95_half_width;
    output["std_dev"] = record.std_dev;
    output["per_episode_accuracies"] = record.per_episode_accuracies;
    output["config"] = rc.echo();
    stamp(output, rc);
    out << output.dump() << "\n";
  }
};

struct AlignCmd {
  std::string support_path, query_path;
  OptaConfig cfg;
  bool no_normalize = false;
  bool literal_plan = false;
  std::uint64_t seed = 0;

  std::string config_path;

  void bind(CLI::App& app) {
    app.add_option("--support", support_path, "Labeled support embedding file")->required();
    app.add_option("--query", query_path, "Query embedding file")->required();
    app.add_option("--passes", cfg.passes, "Consecutive alignment passes")
        ->check(CLI::Range(0, 5))
        ->capture_default_str();
    app.add_option("--epsilon", cfg.sinkhorn.epsilon, "Sinkhorn regularization")
        ->capture_default_str();
    app.add_option("--tol", cfg.sinkhorn.tolerance, "Sinkhorn tolerance")->capture_default_str();
    app.add_option("--max-iter", cfg.sinkhorn.max_iterations, "Sinkhorn iteration budget")
        ->capture_default_str();
    app.add_flag("--no-normalize", no_normalize, "Skip L2 normalization");
    app.add_flag("--literal-plan", literal_plan, "Use the unrescaled plan-transpose transport");
    add_seed(app, seed);
    app.add_option("--config", config_path, "Plain 'key = value' configuration file");
  }

  void run(CLI::App& app, std::ostream& out) {
    apply_config_file(app, config_path);
    LabeledEmbeddingSet support = read_embeddings(support_path);
    if (!support.has_labels()) throw ConfigError("align: support file carries no labels");
    LabeledEmbeddingSet query = read_embeddings(query_path);
    if (query.rows() <= support.rows())
      throw PreconditionError("align: needs more query rows than support rows");

    Matrix support_rows = support.embeddings;
    Matrix query_rows = query.embeddings;
    if (!no_normalize) {
      support_rows = l2_rows(support_rows);
      query_rows = l2_rows(query_rows);
    }
    cfg.barycentric = !literal_plan;

    PrototypeSet protos = class_prototypes(support_rows, support.labels);
    protos = opta_iterate(protos, query_rows, cfg);
    const LogisticClassifier model = fit_logistic(protos, 1e-3, 500, 0.1);
    const std::vector<int> labels = predict(model, query_rows);

    const RunConfig rc = resolve_config(app, seed);
    json record;
    record["prototypes"] = matrix_json(protos.values);
    record["classes"] = protos.class_order;
    record["labels"] = labels;
    record["config"] = rc.echo();
    stamp(record, rc);
    out << record.dump() << "\n";
  }
};

struct PretrainCmd {
  std::string data_path;
  TrainConfig cfg;
  std::string variant = "full";
  std::string encoder_out = "encoder.bin";

  std::string config_path;

  void bind(CLI::App& app) {
    app.add_option("--data", data_path, "Embedding file to stream")->required();
    app.add_option("--epochs", cfg.epochs, "Training epochs")->capture_default_str();
    app.add_option("--batch", cfg.batch, "Batch size B (views make 2B rows)")
        ->capture_default_str();
    app.add_option("--mask", cfg.mask_ratio, "Student masking ratio")->capture_default_str();
    app.add_option("--momentum", cfg.teacher_momentum, "Teacher EMA momentum")
        ->capture_default_str();
    app.add_option("--epoch-thr", cfg.dyce.epoch_threshold,
                   "Adaptation epochs before enhancement")
        ->capture_default_str();
    app.add_option("--dyce-variant", variant, "full|fifo|kmeans")
        ->check(CLI::IsMember({"full", "fifo", "kmeans"}))
        ->capture_default_str();
    app.add_option("--capacity", cfg.dyce.capacity, "Memory capacity M")->capture_default_str();
    app.add_option("--partitions", cfg.dyce.partitions, "Partition count P")
        ->capture_default_str();
    app.add_option("--k", cfg.dyce.neighbors, "Mined neighbors per row")->capture_default_str();
    app.add_option("--lambda", cfg.loss.lambda, "Negative-term weight")->capture_default_str();
    app.add_option("--tau", cfg.loss.tau, "Loss temperature")->capture_default_str();
    app.add_option("--lr", cfg.learning_rate, "Student learning rate")->capture_default_str();
    app.add_option("--noise-std", cfg.noise_std, "View noise sigma")->capture_default_str();
    app.add_option("--encoder-dim", cfg.encoder_dim, "Encoder output dimension")
        ->capture_default_str();
    app.add_option("--epsilon", cfg.sinkhorn.epsilon, "Memory coupling regularization")
        ->capture_default_str();
    app.add_option("--out", encoder_out, "Final student encoder file")->capture_default_str();
    add_seed(app, cfg.seed);
    app.add_option("--config", config_path, "Plain 'key = value' configuration file");
  }

  void run(CLI::App& app, std::ostream& out) {
    apply_config_file(app, config_path);
    cfg.dyce.variant = variant_from_name(variant);
    const LabeledEmbeddingSet data = read_embeddings(data_path);

    const RunConfig rc = resolve_config(app, cfg.seed);
    json header;
    header["config"] = rc.echo();
    stamp(header, rc);
    out << header.dump() << "\n";

    const PretrainResult result = run_pretraining(cfg, data);
    for (const auto& epoch : result.trace) {
      json record;
      record["epoch"] = epoch.epoch;
      record["mean_loss"] = epoch.mean_loss;
      record["dbi"] = optional_json(epoch.dbi);
      record["purity"] = optional_json(epoch.mean_purity);
      stamp(record, rc);
      out << record.dump() << "\n";
    }

    write_encoder(result.student, encoder_out);
    json footer;
    footer["encoder_written"] = encoder_out;
    stamp(footer, rc);
    out << footer.dump() << "\n";
  }
};

struct AblateCmd {
  std::string axis;
  std::vector<std::string> cells;
  TrainConfig base;
  int eval_episodes = 200;
  std::uint64_t seed = 0;

  std::string config_path;

  void bind(CLI::App& app) {
    base.batch = 16;
    base.epochs = 8;
    base.encoder_dim = 8;
    base.dyce.capacity = 512;
    base.dyce.partitions = 16;
    base.dyce.epoch_threshold = 2;
    app.add_option("--axis", axis, "mask_ratio|lambda|k|P|M|variant")
        ->check(CLI::IsMember({"mask_ratio", "lambda", "k", "P", "M", "variant"}))
        ->required();
    app.add_option("--cells", cells, "Axis values to sweep (defaults to the standard grid)");
    app.add_option("--epochs", base.epochs, "Epochs per cell")->capture_default_str();
    app.add_option("--batch", base.batch, "Batch size per cell")->capture_default_str();
    app.add_option("--episodes", eval_episodes, "Evaluation episodes per cell")
        ->capture_default_str();
    add_seed(app, seed);
    app.add_option("--config", config_path, "Plain 'key = value' configuration file");
  }

  std::vector<std::string> default_cells() const {
    if (axis == "mask_ratio") return {"0.1", "0.3", "0.5", "0.7"};
    if (axis == "lambda") return {"0", "0.1", "0.3", "0.5"};
    if (axis == "k") return {"1", "3", "5", "10"};
    if (axis == "P") return {"100", "200", "300", "500"};
    if (axis == "M") return {"2048", "4096", "8192", "12288"};
    return {"fifo", "kmeans", "full"};
  }

  void run(CLI::App& app, std::ostream& out) {
    apply_config_file(app, config_path);
    const std::vector<std::string> grid = cells.empty() ? default_cells() : cells;
    const RunConfig rc = resolve_config(app, seed);
    json header;
    header["axis"] = axis;
    header["cells"] = grid;
    header["config"] = rc.echo();
    stamp(header, rc);
    out << header.dump() << "\n";

    for (const std::string& cell : grid) {
      TrainConfig cfg = base;
      cfg.seed = seed;
      if (axis == "mask_ratio") cfg.mask_ratio = std::stod(cell);
      else if (axis == "lambda") cfg.loss.lambda = std::stod(cell);
      else if (axis == "k") cfg.dyce.neighbors = std::stol(cell);
      else if (axis == "P") cfg.dyce.partitions = std::stol(cell);
      else if (axis == "M") cfg.dyce.capacity = std::stol(cell);
      else cfg.dyce.variant = variant_from_name(cell);
      if (cfg.dyce.partitions > cfg.dyce.capacity) cfg.dyce.capacity = cfg.dyce.partitions;
      cfg.dyce.capacity -= cfg.dyce.capacity % (2 * cfg.batch);  // keep the fill aligned

      // Stream sized so the memory can fill and still train afterwards.
      SyntheticSpec synth;
      synth.classes = 8;
      synth.dim = 16;
      synth.center_scale = 1.5;
      synth.within_std = 0.5;
      synth.seed = splitmix64(seed + 17);
      const Index fill_steps = cfg.dyce.capacity / (2 * cfg.batch);
      const Index steps_wanted = fill_steps + 64;
      synth.samples_per_class = static_cast<int>(
          (steps_wanted * cfg.batch + (synth.classes * cfg.epochs) - 1) /
          (synth.classes * cfg.epochs)) + 1;
      const LabeledEmbeddingSet train_data = gen_synthetic(synth);

      const PretrainResult result = run_pretraining(cfg, train_data);

      // Downstream probe: encode a fresh stream and run biased few-shot
      // episodes through one alignment pass.
      SyntheticSpec eval_synth = synth;
      eval_synth.seed = splitmix64(seed + 29);
      eval_synth.samples_per_class = 64;
      eval_synth.bias_shift = 1.0;
      LabeledEmbeddingSet eval_data = gen_synthetic(eval_synth);
      eval_data.embeddings = result.student.encode(eval_data.embeddings);

      EpisodeSpec episode_spec;
      episode_spec.ways = 5;
      episode_spec.shots = 1;
      episode_spec.queries_per_class = 15;
      episode_spec.episode_count = eval_episodes;
      episode_spec.seed = splitmix64(seed + 31);
      EvalPipeline pipeline;
      pipeline.opta_passes = 1;
      const MetricsRecord metrics = evaluate(eval_data, episode_spec, pipeline);

      std::optional<double> final_dbi;
      std::optional<double> mean_purity;
      for (auto it = result.trace.rbegin(); it != result.trace.rend(); ++it) {
        if (!final_dbi && it->dbi) final_dbi = it->dbi;
        if (!mean_purity && it->mean_purity) mean_purity = it->mean_purity;
        if (final_dbi && mean_purity) break;
      }

      json record;
      record["axis"] = axis;
      record["value"] = cell;
      record["accuracy"] = metrics.mean_accuracy;
      record["ci95_half_width"] = metrics.ci95_half_width;
      record["final_dbi"] = optional_json(final_dbi);
      record["purity"] = optional_json(mean_purity);
      record["final_loss"] = result.trace.back().mean_loss;
      stamp(record, rc);
      out << record.dump() << "\n";
    }
  }
};

}  // namespace

int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Optimal-transport tooling for clustered-memory contrastive pretraining "
               "and few-shot distribution alignment"};
  app.require_subcommand(1);

  SinkhornCmd sinkhorn_cmd;
  GenSynthCmd gen_synth_cmd;
  MemorySimCmd memory_sim_cmd;
  EvalCmd eval_cmd;
  AlignCmd align_cmd;
  PretrainCmd pretrain_cmd;
  AblateCmd ablate_cmd;

  CLI::App* sinkhorn_app =
      app.add_subcommand("sinkhorn", "Solve one entropic transport problem from files");
  sinkhorn_cmd.bind(*sinkhorn_app);
  CLI::App* gen_synth_app =
      app.add_subcommand("gen-synth", "Generate a synthetic labeled embedding file");
  gen_synth_cmd.bind(*gen_synth_app);
  CLI::App* memory_sim_app =
      app.add_subcommand("memory-sim", "Stream batches through the clustered memory");
  memory_sim_cmd.bind(*memory_sim_app);
  CLI::App* eval_app = app.add_subcommand("eval", "Episodic few-shot evaluation");
  eval_cmd.bind(*eval_app);
  CLI::App* align_app =
      app.add_subcommand("align", "Transport support prototypes onto a query set");
  align_cmd.bind(*align_app);
  CLI::App* pretrain_app =
      app.add_subcommand("pretrain", "Student/teacher contrastive pretraining run");
  pretrain_cmd.bind(*pretrain_app);
  CLI::App* ablate_app = app.add_subcommand("ablate", "Sweep one hyperparameter axis");
  ablate_cmd.bind(*ablate_app);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& help) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& parse_error) {
    err << parse_error.what() << "\n\n" << app.help();
    return 2;
  }

  try {
    if (sinkhorn_app->parsed()) sinkhorn_cmd.run(*sinkhorn_app, out);
    if (gen_synth_app->parsed()) gen_synth_cmd.run(*gen_synth_app, out);
    if (memory_sim_app->parsed()) memory_sim_cmd.run(*memory_sim_app, out);
    if (eval_app->parsed()) eval_cmd.run(*eval_app, out);
    if (align_app->parsed()) align_cmd.run(*align_app, out);
    if (pretrain_app->parsed()) pretrain_cmd.run(*pretrain_app, out);
    if (ablate_app->parsed()) ablate_cmd.run(*ablate_app, out);
  } catch (const ConfigError& config_error) {
    err << "configuration error: " << config_error.what() << "\n";
    return 2;
  } catch (const Error& error) {
    json record;
    record["error"] = {{"type", classify(error)}, {"message", error.what()}};
    out << record.dump() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace otfs::cli

#include "corrfield/embedding.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

#include "corrfield/version.hpp"

namespace corrfield::embed {

namespace {
[[noreturn]] void fail(const std::string& msg) { throw std::runtime_error(msg); }
}  // namespace

// --- model construction --------------------------------------------------------

EmbeddingModel EmbeddingModel::make_free_table(const std::vector<TableSpec>& tables,
                                               int dimension, std::uint64_t seed) {
  if (dimension < 1) fail("embedding dimension must be >= 1");
  if (tables.empty()) fail("free table needs at least one model");
  EmbeddingModel m;
  m.kind_ = ModelKind::kFreeTable;
  m.dimension_ = dimension;
  m.tables_ = tables;
  long total = 0;
  for (const auto& t : tables) {
    if (t.point_count < 1) fail("free table for '" + t.model_id + "' has no points");
    m.table_offset_.push_back(total);
    total += static_cast<long>(t.point_count) * dimension;
  }
  m.params_.resize(total);
  Rng rng(seed);
  // Small init so a pull-only run can collapse everything well below the
  // spread the push term maintains.
  for (long i = 0; i < total; ++i) m.params_[i] = rng.uniform(-0.001, 0.001);
  return m;
}

EmbeddingModel EmbeddingModel::make_coord_mlp(int dimension, std::uint64_t seed,
                                              int hidden) {
  if (dimension < 1) fail("embedding dimension must be >= 1");
  if (hidden < 1) fail("hidden width must be >= 1");
  EmbeddingModel m;
  m.kind_ = ModelKind::kCoordMlp;
  m.dimension_ = dimension;
  m.hidden_ = hidden;
  long n = static_cast<long>(hidden) * 3 + hidden +                  // W1, b1
           static_cast<long>(hidden) * hidden + hidden +             // W2, b2
           static_cast<long>(dimension) * hidden + dimension;        // W3, b3
  m.params_.setZero(n);
  Rng rng(seed);
  long off = 0;
  auto init_layer = [&](long weights, long biases, int fan_in) {
    double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (long i = 0; i < weights; ++i) m.params_[off + i] = rng.uniform(-bound, bound);
    off += weights + biases;  // biases stay zero
  };
  init_layer(static_cast<long>(hidden) * 3, hidden, 3);
  init_layer(static_cast<long>(hidden) * hidden, hidden, hidden);
  init_layer(static_cast<long>(dimension) * hidden, dimension, hidden);
  return m;
}

int EmbeddingModel::slot_of(const std::string& model_id) const {
  for (std::size_t i = 0; i < tables_.size(); ++i)
    if (tables_[i].model_id == model_id) return static_cast<int>(i);
  return -1;
}

// Parameter layout for the MLP: W1 (h x 3), b1, W2 (h x h), b2, W3 (D x h), b3,
// all matrices column-major.
namespace {
struct MlpView {
  Eigen::Map<const Eigen::MatrixXd> w1, w2, w3;
  Eigen::Map<const Eigen::VectorXd> b1, b2, b3;
};
MlpView mlp_view(const Eigen::VectorXd& p, int h, int d) {
  const double* base = p.data();
  long o1 = 0, ob1 = o1 + 3L * h;
  long o2 = ob1 + h, ob2 = o2 + static_cast<long>(h) * h;
  long o3 = ob2 + h, ob3 = o3 + static_cast<long>(d) * h;
  return {Eigen::Map<const Eigen::MatrixXd>(base + o1, h, 3),
          Eigen::Map<const Eigen::MatrixXd>(base + o2, h, h),
          Eigen::Map<const Eigen::MatrixXd>(base + o3, d, h),
          Eigen::Map<const Eigen::VectorXd>(base + ob1, h),
          Eigen::Map<const Eigen::VectorXd>(base + ob2, h),
          Eigen::Map<const Eigen::VectorXd>(base + ob3, d)};
}
struct MlpGradView {
  Eigen::Map<Eigen::MatrixXd> w1, w2, w3;
  Eigen::Map<Eigen::VectorXd> b1, b2, b3;
};
MlpGradView mlp_grad_view(Eigen::VectorXd& g, int h, int d) {
  double* base = g.data();
  long o1 = 0, ob1 = o1 + 3L * h;
  long o2 = ob1 + h, ob2 = o2 + static_cast<long>(h) * h;
  long o3 = ob2 + h, ob3 = o3 + static_cast<long>(d) * h;
  return {Eigen::Map<Eigen::MatrixXd>(base + o1, h, 3),
          Eigen::Map<Eigen::MatrixXd>(base + o2, h, h),
          Eigen::Map<Eigen::MatrixXd>(base + o3, d, h),
          Eigen::Map<Eigen::VectorXd>(base + ob1, h),
          Eigen::Map<Eigen::VectorXd>(base + ob2, h),
          Eigen::Map<Eigen::VectorXd>(base + ob3, d)};
}
}  // namespace

void EmbeddingModel::mlp_forward(const Eigen::MatrixXd& x, Eigen::MatrixXd& h1,
                                 Eigen::MatrixXd& h2, Eigen::MatrixXd& out) const {
  MlpView v = mlp_view(params_, hidden_, dimension_);
  h1 = ((x * v.w1.transpose()).rowwise() + v.b1.transpose()).array().tanh();
  h2 = ((h1 * v.w2.transpose()).rowwise() + v.b2.transpose()).array().tanh();
  out = (h2 * v.w3.transpose()).rowwise() + v.b3.transpose();
}

Eigen::MatrixXd EmbeddingModel::embed(const std::vector<PointRef>& refs) const {
  long n = static_cast<long>(refs.size());
  if (kind_ == ModelKind::kCoordMlp) {
    Eigen::MatrixXd x(n, 3);
    for (long i = 0; i < n; ++i) x.row(i) = refs[static_cast<std::size_t>(i)].xyz;
    Eigen::MatrixXd h1, h2, out;
    mlp_forward(x, h1, h2, out);
    return out;
  }
  Eigen::MatrixXd out(n, dimension_);
  for (long i = 0; i < n; ++i) {
    const PointRef& r = refs[static_cast<std::size_t>(i)];
    if (r.slot < 0 || r.slot >= static_cast<int>(tables_.size()) || r.index < 0 ||
        r.index >= tables_[static_cast<std::size_t>(r.slot)].point_count)
      fail("unresolvable point ref (slot " + std::to_string(r.slot) + ", index " +
           std::to_string(r.index) + ") for this free table");
    long off = table_offset_[static_cast<std::size_t>(r.slot)] +
               static_cast<long>(r.index) * dimension_;
    out.row(i) = params_.segment(off, dimension_);
  }
  return out;
}

void EmbeddingModel::accumulate_gradient(const std::vector<PointRef>& refs,
                                         const Eigen::MatrixXd& de,
                                         Eigen::VectorXd& grad) const {
  if (grad.size() != params_.size()) fail("gradient/parameter shape mismatch");
  if (de.rows() != static_cast<long>(refs.size()) || de.cols() != dimension_)
    fail("upstream gradient shape mismatch");
  if (kind_ == ModelKind::kFreeTable) {
    for (long i = 0; i < de.rows(); ++i) {
      const PointRef& r = refs[static_cast<std::size_t>(i)];
      long off = table_offset_[static_cast<std::size_t>(r.slot)] +
                 static_cast<long>(r.index) * dimension_;
      grad.segment(off, dimension_) += de.row(i);
    }
    return;
  }
  long n = static_cast<long>(refs.size());
  Eigen::MatrixXd x(n, 3);
  for (long i = 0; i < n; ++i) x.row(i) = refs[static_cast<std::size_t>(i)].xyz;
  Eigen::MatrixXd h1, h2, out;
  mlp_forward(x, h1, h2, out);
  MlpView v = mlp_view(params_, hidden_, dimension_);
  MlpGradView g = mlp_grad_view(grad, hidden_, dimension_);
  g.w3 += de.transpose() * h2;
  g.b3 += de.colwise().sum();
  Eigen::MatrixXd da2 =
      (de * v.w3).array() * (1.0 - h2.array().square());  // tanh'
  g.w2 += da2.transpose() * h1;
  g.b2 += da2.colwise().sum();
  Eigen::MatrixXd da1 = (da2 * v.w2).array() * (1.0 - h1.array().square());
  g.w1 += da1.transpose() * x;
  g.b1 += da1.colwise().sum();
}

// --- persistence ------------------------------------------------------------------

void EmbeddingModel::save(const std::filesystem::path& path) const {
  nlohmann::ordered_json header;
  header["format"] = "corrfield-embedding";
  header["version"] = kToolVersion;
  header["kind"] = kind_ == ModelKind::kFreeTable ? "free_table" : "coord_mlp";
  header["dimension"] = dimension_;
  if (kind_ == ModelKind::kCoordMlp) header["hidden"] = hidden_;
  header["category"] = category;
  header["sampling"] = {{"cloud_seed", sampling.cloud_seed},
                        {"n_points", sampling.n_points},
                        {"knn", sampling.knn}};
  header["tables"] = nlohmann::ordered_json::array();
  for (const auto& t : tables_)
    header["tables"].push_back({{"id", t.model_id}, {"points", t.point_count}});
  header["param_count"] = static_cast<long>(params_.size());
  header["layout"] = "float64-le";

  std::ofstream out(path, std::ios::binary);
  if (!out) fail("cannot write model file: " + path.string());
  out << header.dump() << '\n';
  out.write(reinterpret_cast<const char*>(params_.data()),
            static_cast<std::streamsize>(params_.size() * sizeof(double)));
  if (!out) fail("failed writing model file: " + path.string());
}

EmbeddingModel EmbeddingModel::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail("cannot open model file: " + path.string());
  std::string line;
  if (!std::getline(in, line)) fail("corrupt model file (no header): " + path.string());
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(line);
  } catch (const std::exception& e) {
    fail("corrupt model file header in " + path.string() + ": " + e.what());
  }
  if (header.value("format", "") != "corrfield-embedding")
    fail("not an embedding model file: " + path.string());

  std::string kind = header.at("kind").get<std::string>();
  int dimension = header.at("dimension").get<int>();
  EmbeddingModel m;
  if (kind == "free_table") {
    std::vector<TableSpec> tables;
    for (const auto& jt : header.at("tables"))
      tables.push_back({jt.at("id").get<std::string>(), jt.at("points").get<int>()});
    m = make_free_table(tables, dimension, 0);
  } else if (kind == "coord_mlp") {
    m = make_coord_mlp(dimension, 0, header.value("hidden", 64));
  } else {
    fail("unknown model kind '" + kind + "' in " + path.string());
  }
  m.category = header.value("category", "");
  if (header.contains("sampling")) {
    const auto& js = header["sampling"];
    m.sampling.cloud_seed = js.value("cloud_seed", 0ull);
    m.sampling.n_points = js.value("n_points", 0);
    m.sampling.knn = js.value("knn", 0);
  }
  long count = header.at("param_count").get<long>();
  if (count != m.params_.size())
    fail("model file " + path.string() + " has " + std::to_string(count) +
         " parameters, expected " + std::to_string(m.params_.size()));
  in.read(reinterpret_cast<char*>(m.params_.data()),
          static_cast<std::streamsize>(count * sizeof(double)));
  if (in.gcount() != static_cast<std::streamsize>(count * sizeof(double)))
    fail("corrupt model file (truncated parameters): " + path.string());
  return m;
}

// --- batches ------------------------------------------------------------------------

PairBatch make_batch(const corr::Dataset& dataset,
                     const std::map<std::string, geom::PointCloud>& clouds,
                     const corr::MarginTable& margins,
                     const std::vector<std::string>& pool, int batch_models, Rng& rng,
                     bool same_model_negatives_only) {
  if (pool.empty()) fail("make_batch: empty model pool");
  if (batch_models < 2) fail("make_batch: batch_models must be >= 2");
  std::vector<std::string> drawn = pool;
  rng.shuffle(drawn);
  if (static_cast<int>(drawn.size()) > batch_models) drawn.resize(batch_models);

  PairBatch batch;
  batch.models = drawn;

  auto ref_for = [&](const std::string& model_id, const corr::SemanticPoint& sp) {
    if (sp.cloud_index < 0)
      fail("make_batch: annotation on '" + model_id + "' is not attached to a cloud");
    PointRef r;
    r.slot = dataset.model_index(model_id);
    r.index = sp.cloud_index;
    r.xyz = clouds.at(model_id).points[static_cast<std::size_t>(sp.cloud_index)];
    return r;
  };

  // resolved[set][k]: the member chosen for drawn model k (or unset)
  int n_sets = static_cast<int>(dataset.sets.size());
  int n_drawn = static_cast<int>(drawn.size());
  std::vector<std::vector<int>> has(n_sets);
  std::vector<std::vector<PointRef>> resolved(n_sets,
                                              std::vector<PointRef>(n_drawn));
  std::vector<int> sets_on_model(n_drawn, 0);
  for (int s = 0; s < n_sets; ++s) {
    for (int k = 0; k < n_drawn; ++k) {
      auto it = dataset.sets[s].entries.find(drawn[static_cast<std::size_t>(k)]);
      if (it == dataset.sets[s].entries.end()) continue;
      const corr::SemanticPoint& sp = corr::resolve_hyperpoint(it->second, rng);
      resolved[s][static_cast<std::size_t>(k)] =
          ref_for(drawn[static_cast<std::size_t>(k)], sp);
      has[s].push_back(k);
      ++sets_on_model[static_cast<std::size_t>(k)];
    }
  }
  for (int k = 0; k < n_drawn; ++k)
    if (sets_on_model[static_cast<std::size_t>(k)] == 0)
      fail("make_batch: model '" + drawn[static_cast<std::size_t>(k)] +
           "' has no annotated sets");

  // positives: same set, distinct models
  for (int s = 0; s < n_sets; ++s)
    for (std::size_t a = 0; a < has[s].size(); ++a)
      for (std::size_t b = a + 1; b < has[s].size(); ++b)
        batch.positives.push_back(
            {resolved[s][static_cast<std::size_t>(has[s][a])],
             resolved[s][static_cast<std::size_t>(has[s][b])]});

  // negatives: distinct sets with a positive margin
  for (int si = 0; si < n_sets; ++si) {
    for (int sj = si + 1; sj < n_sets; ++sj) {
      auto margin =
          margins.between(dataset.sets[si].set_id, dataset.sets[sj].set_id);
      if (!margin || *margin <= 0.0) continue;
      for (int a : has[si])
        for (int b : has[sj]) {
          if (same_model_negatives_only && a != b) continue;
          batch.negatives.push_back({resolved[si][static_cast<std::size_t>(a)],
                                     resolved[sj][static_cast<std::size_t>(b)],
                                     *margin});
        }
    }
  }
  return batch;
}

// --- losses ---------------------------------------------------------------------------

namespace {
void split_refs(const std::vector<PosPair>& pairs, std::vector<PointRef>& ps,
                std::vector<PointRef>& qs) {
  ps.reserve(pairs.size());
  qs.reserve(pairs.size());
  for (const auto& pr : pairs) {
    ps.push_back(pr.p);
    qs.push_back(pr.q);
  }
}
}  // namespace

double pull_loss(const PairBatch& batch, const EmbeddingModel& model,
                 Eigen::VectorXd* grad) {
  if (batch.positives.empty()) fail("pull_loss: batch has no positive pairs");
  std::vector<PointRef> ps, qs;
  split_refs(batch.positives, ps, qs);
  Eigen::MatrixXd ep = model.embed(ps);
  Eigen::MatrixXd eq = model.embed(qs);
  long n = ep.rows();
  double inv_n = 1.0 / static_cast<double>(n);
  double loss = 0.0;
  Eigen::MatrixXd dp, dq;
  if (grad) {
    dp.setZero(n, model.dimension());
    dq.setZero(n, model.dimension());
  }
  for (long i = 0; i < n; ++i) {
    Eigen::RowVectorXd diff = ep.row(i) - eq.row(i);
    double d = diff.norm();
    loss += d;
    if (grad && d > 0.0) {
      Eigen::RowVectorXd g = diff * (inv_n / d);
      dp.row(i) = g;
      dq.row(i) = -g;
    }
  }
  loss *= inv_n;
  if (grad) {
    model.accumulate_gradient(ps, dp, *grad);
    model.accumulate_gradient(qs, dq, *grad);
  }
  return loss;
}

double push_loss(const PairBatch& batch, const EmbeddingModel& model,
                 Eigen::VectorXd* grad, int* active_count) {
  if (active_count) *active_count = 0;
  if (batch.negatives.empty()) return 0.0;
  std::vector<PointRef> ps, qs;
  ps.reserve(batch.negatives.size());
  qs.reserve(batch.negatives.size());
  for (const auto& ng : batch.negatives) {
    ps.push_back(ng.p);
    qs.push_back(ng.q);
  }
  Eigen::MatrixXd ep = model.embed(ps);
  Eigen::MatrixXd eq = model.embed(qs);
  long n = ep.rows();
  double inv_n = 1.0 / static_cast<double>(n);
  double loss = 0.0;
  int active = 0;
  Eigen::MatrixXd dp, dq;
  if (grad) {
    dp.setZero(n, model.dimension());
    dq.setZero(n, model.dimension());
  }
  for (long i = 0; i < n; ++i) {
    Eigen::RowVectorXd diff = ep.row(i) - eq.row(i);
    double d = diff.norm();
    double hinge = batch.negatives[static_cast<std::size_t>(i)].margin - d;
    if (hinge <= 0.0) continue;
    loss += hinge;
    ++active;
    if (grad && d > 0.0) {
      Eigen::RowVectorXd g = diff * (-inv_n / d);
      dp.row(i) = g;
      dq.row(i) = -g;
    }
  }
  loss *= inv_n;
  if (active_count) *active_count = active;
  if (grad) {
    model.accumulate_gradient(ps, dp, *grad);
    model.accumulate_gradient(qs, dq, *grad);
  }
  return loss;
}

LossReport total_loss(const PairBatch& batch, const EmbeddingModel& model,
                      double lambda, Eigen::VectorXd* grad) {
  LossReport report;
  report.pull = pull_loss(batch, model, grad);
  if (grad && lambda != 0.0) {
    Eigen::VectorXd push_grad = Eigen::VectorXd::Zero(grad->size());
    report.push = push_loss(batch, model, &push_grad, &report.active_negatives);
    *grad += lambda * push_grad;
  } else {
    report.push = push_loss(batch, model, nullptr, &report.active_negatives);
  }
  report.total = report.pull + lambda * report.push;
  return report;
}

PairBatch mine_hard_negatives(const PairBatch& candidates, const EmbeddingModel& model,
                              int n_keep) {
  int n = static_cast<int>(candidates.negatives.size());
  if (n_keep < 0) fail("mine_hard_negatives: n_keep must be >= 0");
  if (n_keep > n)
    fail("mine_hard_negatives: n_keep " + std::to_string(n_keep) + " exceeds the " +
         std::to_string(n) + " candidates");
  if (n_keep == n) return candidates;
  std::vector<PointRef> ps, qs;
  ps.reserve(candidates.negatives.size());
  qs.reserve(candidates.negatives.size());
  for (const auto& ng : candidates.negatives) {
    ps.push_back(ng.p);
    qs.push_back(ng.q);
  }
  Eigen::MatrixXd ep = model.embed(ps);
  Eigen::MatrixXd eq = model.embed(qs);
  std::vector<std::pair<double, int>> order(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i)
    order[static_cast<std::size_t>(i)] = {(ep.row(i) - eq.row(i)).norm(), i};
  std::sort(order.begin(), order.end());  // (distance, candidate index)
  std::vector<char> keep(static_cast<std::size_t>(n), 0);
  for (int i = 0; i < n_keep; ++i) keep[static_cast<std::size_t>(order[i].second)] = 1;
  PairBatch out;
  out.models = candidates.models;
  out.positives = candidates.positives;
  out.negatives.reserve(static_cast<std::size_t>(n_keep));
  for (int i = 0; i < n; ++i)
    if (keep[static_cast<std::size_t>(i)])
      out.negatives.push_back(candidates.negatives[static_cast<std::size_t>(i)]);
  return out;
}

// --- optimization -----------------------------------------------------------------------

double adam_step(EmbeddingModel& model, const Eigen::VectorXd& grad, AdamState& state,
                 const AdamConfig& config, int epoch) {
  Eigen::VectorXd& p = model.parameters();
  if (grad.size() != p.size()) fail("adam_step: gradient/parameter shape mismatch");
  if (state.m.size() == 0) {
    state.m = Eigen::VectorXd::Zero(p.size());
    state.v = Eigen::VectorXd::Zero(p.size());
  } else if (state.m.size() != p.size() || state.v.size() != p.size()) {
    fail("adam_step: optimizer state shape mismatch");
  }
  state.t += 1;
  state.m = config.beta1 * state.m + (1.0 - config.beta1) * grad;
  state.v.array() =
      config.beta2 * state.v.array() + (1.0 - config.beta2) * grad.array().square();
  double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.t));
  double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.t));
  double eff = config.lr *
               std::pow(config.lr_decay, static_cast<double>(epoch / config.decay_every));
  p.array() -= eff * (state.m.array() / bc1) /
               ((state.v.array() / bc2).sqrt() + config.eps);
  return eff;
}

TrainResult train(EmbeddingModel model, const TrainData& data, const TrainConfig& config) {
  if (!data.dataset || !data.clouds || !data.margins)
    fail("train: dataset, clouds and margins are required");
  if (data.pool.empty()) fail("train: empty model pool");
  if (config.epochs < 1) fail("train: epochs must be >= 1");

  Rng rng(config.seed);
  AdamState state;
  TrainResult result;
  int steps = config.steps_per_epoch > 0
                  ? config.steps_per_epoch
                  : std::max(1, static_cast<int>(data.pool.size()) / config.batch_models);

  double best = std::numeric_limits<double>::infinity();
  Eigen::VectorXd best_params;
  Eigen::VectorXd grad(model.parameters().size());
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    for (int step = 0; step < steps; ++step) {
      PairBatch batch = make_batch(*data.dataset, *data.clouds, *data.margins,
                                   data.pool, config.batch_models, rng,
                                   config.same_model_negatives_only);
      int n_keep = static_cast<int>(batch.positives.size());
      if (config.mine && static_cast<int>(batch.negatives.size()) > n_keep)
        batch = mine_hard_negatives(batch, model, n_keep);
      grad.setZero();
      LossReport report = total_loss(batch, model, config.lambda, &grad);
      double eff = adam_step(model, grad, state, config.adam, epoch);
      result.history.push_back({epoch, step, report.pull, report.push, report.total,
                                report.active_negatives, eff});
    }
    if (data.validation &&
        ((epoch + 1) % config.eval_every == 0 || epoch + 1 == config.epochs)) {
      double v = data.validation(model);
      if (v < best) {
        best = v;
        best_params = model.parameters();
        result.best_epoch = epoch;
        result.best_validation = v;
      }
    }
  }
  if (data.validation && best_params.size() > 0) model.parameters() = best_params;
  result.model = std::move(model);
  return result;
}

void write_history_csv(std::ostream& os, const std::vector<StepRecord>& history) {
  os << "epoch,step,pull,push,total,active_negatives,lr\n";
  char buf[160];
  for (const auto& r : history) {
    std::snprintf(buf, sizeof(buf), "%d,%d,%.17g,%.17g,%.17g,%d,%.17g\n", r.epoch,
                  r.step, r.pull, r.push, r.total, r.active_negatives, r.lr);
    os << buf;
  }
}

}  // namespace corrfield::embed

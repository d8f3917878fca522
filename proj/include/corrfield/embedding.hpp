#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "corrfield/corrset.hpp"
#include "corrfield/geometry.hpp"
#include "corrfield/rng.hpp"

namespace corrfield::embed {

enum class ModelKind { kFreeTable, kCoordMlp };

// Reference to one point to embed. A free table reads row (slot, index); the
// coordinate MLP reads xyz. Both fields are filled whenever available so the
// same batch works with either model kind.
struct PointRef {
  int slot = -1;   // position of the model in the table list (dataset order)
  int index = -1;  // cloud point index within that model
  geom::Vec3 xyz = geom::Vec3::Zero();
};

struct TableSpec {
  std::string model_id;
  int point_count = 0;
};

// Point-level embedding f: either one learnable D-vector per cloud point
// (transductive free table) or a small 3 -> 64 -> 64 -> D tanh MLP over
// coordinates (inductive; embeds arbitrary point sets).
class EmbeddingModel {
 public:
  // Rows initialized uniform(-0.001, 0.001). Table order fixes the slot ids.
  static EmbeddingModel make_free_table(const std::vector<TableSpec>& tables,
                                        int dimension, std::uint64_t seed);
  // Weights uniform(-1,1)/sqrt(fan_in), biases zero.
  static EmbeddingModel make_coord_mlp(int dimension, std::uint64_t seed,
                                       int hidden = 64);

  ModelKind kind() const { return kind_; }
  int dimension() const { return dimension_; }
  int hidden() const { return hidden_; }
  const std::vector<TableSpec>& tables() const { return tables_; }
  int slot_of(const std::string& model_id) const;  // -1 if absent

  // One row per ref; throws on unresolvable refs (bad slot/index for a free
  // table).
  Eigen::MatrixXd embed(const std::vector<PointRef>& refs) const;

  // grad += d(sum_i de.row(i) . f(refs[i])) / d(parameters)
  void accumulate_gradient(const std::vector<PointRef>& refs,
                           const Eigen::MatrixXd& de, Eigen::VectorXd& grad) const;

  Eigen::VectorXd& parameters() { return params_; }
  const Eigen::VectorXd& parameters() const { return params_; }

  // Metadata persisted alongside the parameters so evaluation can rebuild the
  // exact clouds the model was trained against.
  struct Sampling {
    std::uint64_t cloud_seed = 0;
    int n_points = 0;
    int knn = 0;
  };
  std::string category;
  Sampling sampling;

  // JSON header line + little-endian float64 parameter blob.
  void save(const std::filesystem::path& path) const;
  static EmbeddingModel load(const std::filesystem::path& path);

 private:
  ModelKind kind_ = ModelKind::kFreeTable;
  int dimension_ = 0;
  int hidden_ = 0;
  std::vector<TableSpec> tables_;
  std::vector<long> table_offset_;  // flat offset of each table
  Eigen::VectorXd params_;

  void mlp_forward(const Eigen::MatrixXd& x, Eigen::MatrixXd& h1, Eigen::MatrixXd& h2,
                   Eigen::MatrixXd& out) const;
};

// --- pair batches -------------------------------------------------------------

struct PosPair {
  PointRef p, q;
};
struct NegPair {
  PointRef p, q;
  double margin = 0.0;  // geodesic set distance between the two sets
};
struct PairBatch {
  std::vector<std::string> models;  // models drawn into this batch
  std::vector<PosPair> positives;
  std::vector<NegPair> negatives;
};

// Draw up to batch_models distinct models from `pool`, resolve each annotated
// hyperpoint to one member, and enumerate positive pairs (same set, distinct
// models) and negative candidates (distinct sets, margin > 0; cross-model
// pairs included unless same_model_negatives_only). The dataset must be
// attached to the given clouds. Throws if a drawn model has no annotations.
PairBatch make_batch(const corr::Dataset& dataset,
                     const std::map<std::string, geom::PointCloud>& clouds,
                     const corr::MarginTable& margins,
                     const std::vector<std::string>& pool, int batch_models, Rng& rng,
                     bool same_model_negatives_only = false);

// --- losses --------------------------------------------------------------------

// Mean embedding distance over positive pairs. Throws on an empty positive
// list. If grad is non-null, accumulates d(loss)/d(parameters).
double pull_loss(const PairBatch& batch, const EmbeddingModel& model,
                 Eigen::VectorXd* grad = nullptr);

// Mean hinge max(0, margin - ||f(p) - f(q)||) over negative candidates (0 if
// none). active_count receives the number of pairs with a positive hinge.
double push_loss(const PairBatch& batch, const EmbeddingModel& model,
                 Eigen::VectorXd* grad = nullptr, int* active_count = nullptr);

struct LossReport {
  double pull = 0.0;
  double push = 0.0;
  double total = 0.0;
  int active_negatives = 0;
};

// total = pull + lambda * push (lambda defaults to 1 everywhere).
LossReport total_loss(const PairBatch& batch, const EmbeddingModel& model,
                      double lambda, Eigen::VectorXd* grad = nullptr);

// Keep the n_keep negative candidates with the smallest embedding distance
// (ties broken by candidate index), preserving candidate order. Positives are
// untouched. Throws if n_keep exceeds the candidate count.
PairBatch mine_hard_negatives(const PairBatch& candidates, const EmbeddingModel& model,
                              int n_keep);

// --- optimization ----------------------------------------------------------------

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double lr_decay = 0.9;  // effective lr = lr * lr_decay^(epoch / decay_every)
  int decay_every = 10;
};

struct AdamState {
  Eigen::VectorXd m, v;
  long t = 0;
};

// One Adam update with bias correction; returns the effective learning rate.
double adam_step(EmbeddingModel& model, const Eigen::VectorXd& grad, AdamState& state,
                 const AdamConfig& config, int epoch);

struct TrainConfig {
  int epochs = 200;
  int batch_models = 4;
  int steps_per_epoch = 0;  // 0 -> max(1, pool_size / batch_models)
  double lambda = 1.0;
  bool mine = true;  // keep the N_pos hardest negatives per batch
  bool same_model_negatives_only = false;
  AdamConfig adam;
  int eval_every = 10;  // validation cadence, in epochs
  std::uint64_t seed = 0;
};

struct StepRecord {
  int epoch = 0;
  int step = 0;
  double pull = 0.0, push = 0.0, total = 0.0;
  int active_negatives = 0;
  double lr = 0.0;
};

struct TrainData {
  const corr::Dataset* dataset = nullptr;
  const std::map<std::string, geom::PointCloud>* clouds = nullptr;
  const corr::MarginTable* margins = nullptr;
  std::vector<std::string> pool;  // models batches draw from
  // optional: returns validation mGE; the best snapshot is returned
  std::function<double(const EmbeddingModel&)> validation;
};

struct TrainResult {
  EmbeddingModel model;
  std::vector<StepRecord> history;
  double best_validation = std::numeric_limits<double>::quiet_NaN();
  int best_epoch = -1;
};

// Deterministic for fixed config, data and seed (bit-identical history).
TrainResult train(EmbeddingModel model, const TrainData& data, const TrainConfig& config);

// CSV: epoch,step,pull,push,total,active_negatives,lr
void write_history_csv(std::ostream& os, const std::vector<StepRecord>& history);

}  // namespace corrfield::embed

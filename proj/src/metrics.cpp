#include "corrfield/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <limits>
#include <stdexcept>

#include "json.hpp"

#include "corrfield/parallel.hpp"
#include "corrfield/rng.hpp"

namespace corrfield::metrics {

namespace {
[[noreturn]] void fail(const std::string& msg) { throw std::runtime_error(msg); }

struct Query {
  int set_idx;     // index into dataset.sets
  int source;      // index into inputs.split
  int target;      // index into inputs.split
  int member;      // member of the source hyperpoint
};
}  // namespace

EvalReport evaluate_mge(const embed::EmbeddingModel& model, const EvalInputs& inputs,
                        int threads) {
  if (!inputs.dataset || !inputs.clouds || !inputs.geodesics)
    fail("evaluate_mge: dataset, clouds and geodesics are required");
  const corr::Dataset& ds = *inputs.dataset;
  if (inputs.split.empty()) fail("evaluate_mge: empty evaluation split");
  for (const auto& id : inputs.split) {
    if (ds.model_index(id) < 0) fail("evaluate_mge: split references unknown model '" + id + "'");
    if (!inputs.clouds->count(id)) fail("evaluate_mge: no cloud for model '" + id + "'");
    if (!inputs.geodesics->count(id))
      fail("evaluate_mge: no geodesics for model '" + id + "'");
  }

  // Embed every cloud point of every split model once. A free table defines
  // its own model->slot mapping, so resolve slots through the model.
  int n_split = static_cast<int>(inputs.split.size());
  std::vector<Eigen::MatrixXd> cloud_emb(static_cast<std::size_t>(n_split));
  for (int m = 0; m < n_split; ++m) {
    const auto& id = inputs.split[static_cast<std::size_t>(m)];
    const auto& cloud = inputs.clouds->at(id);
    int slot = ds.model_index(id);
    if (model.kind() == embed::ModelKind::kFreeTable) {
      slot = model.slot_of(id);
      if (slot < 0) fail("evaluate_mge: model has no embedding table for '" + id + "'");
      if (model.tables()[static_cast<std::size_t>(slot)].point_count !=
          static_cast<int>(cloud.points.size()))
        fail("evaluate_mge: table for '" + id + "' holds " +
             std::to_string(model.tables()[static_cast<std::size_t>(slot)].point_count) +
             " points but the cloud has " + std::to_string(cloud.points.size()));
    }
    std::vector<embed::PointRef> refs(cloud.points.size());
    for (std::size_t i = 0; i < cloud.points.size(); ++i)
      refs[i] = {slot, static_cast<int>(i), cloud.points[i]};
    cloud_emb[static_cast<std::size_t>(m)] = model.embed(refs);
  }

  // Enumerate queries in deterministic order: set, source model, target
  // model, source member.
  std::vector<Query> queries;
  std::vector<char> set_used(ds.sets.size(), 0);
  for (std::size_t s = 0; s < ds.sets.size(); ++s) {
    std::vector<int> present;
    for (int m = 0; m < n_split; ++m)
      if (ds.sets[s].entries.count(inputs.split[static_cast<std::size_t>(m)]))
        present.push_back(m);
    if (present.size() < 2) continue;
    set_used[s] = 1;
    for (int a : present)
      for (int b : present) {
        if (a == b) continue;
        const auto& hp =
            ds.sets[s].entries.at(inputs.split[static_cast<std::size_t>(a)]);
        for (std::size_t mi = 0; mi < hp.members.size(); ++mi)
          queries.push_back({static_cast<int>(s), a, b, static_cast<int>(mi)});
      }
  }
  if (queries.empty()) fail("evaluate_mge: no evaluable correspondence pairs in split");

  std::vector<double> geo_err(queries.size()), euc_err(queries.size());
  parallel_for(static_cast<int>(queries.size()), threads, [&](int qi) {
    const Query& q = queries[static_cast<std::size_t>(qi)];
    const auto& src_id = inputs.split[static_cast<std::size_t>(q.source)];
    const auto& tgt_id = inputs.split[static_cast<std::size_t>(q.target)];
    const auto& src_hp = ds.sets[static_cast<std::size_t>(q.set_idx)].entries.at(src_id);
    const auto& tgt_hp = ds.sets[static_cast<std::size_t>(q.set_idx)].entries.at(tgt_id);
    const corr::SemanticPoint& sp = src_hp.members[static_cast<std::size_t>(q.member)];
    if (sp.cloud_index < 0) fail("evaluate_mge: annotations are not attached");
    const Eigen::MatrixXd& src_emb = cloud_emb[static_cast<std::size_t>(q.source)];
    const Eigen::MatrixXd& tgt_emb = cloud_emb[static_cast<std::size_t>(q.target)];
    Eigen::RowVectorXd query = src_emb.row(sp.cloud_index);

    // retrieval: embedding nearest neighbor, ties -> lowest index
    int best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (long i = 0; i < tgt_emb.rows(); ++i) {
      double d = (tgt_emb.row(i) - query).squaredNorm();
      if (d < best_d) {
        best_d = d;
        best = static_cast<int>(i);
      }
    }

    const auto& tgt_cloud = inputs.clouds->at(tgt_id);
    const auto& tgt_geo = inputs.geodesics->at(tgt_id);
    double geo = std::numeric_limits<double>::infinity();
    double euc = std::numeric_limits<double>::infinity();
    for (const auto& member : tgt_hp.members) {
      if (member.cloud_index < 0) fail("evaluate_mge: annotations are not attached");
      geo = std::min(geo, tgt_geo.from(member.cloud_index, best));
      euc = std::min(euc,
                     (tgt_cloud.points[static_cast<std::size_t>(member.cloud_index)] -
                      tgt_cloud.points[static_cast<std::size_t>(best)])
                         .norm());
    }
    geo_err[static_cast<std::size_t>(qi)] = geo;
    euc_err[static_cast<std::size_t>(qi)] = euc;
  });

  // Ordered reduction (queries are grouped by set).
  EvalReport report;
  report.category = ds.category;
  std::map<int, SetError> per_set;
  for (std::size_t i = 0; i < queries.size(); ++i) {
    int set_id = ds.sets[static_cast<std::size_t>(queries[i].set_idx)].set_id;
    SetError& se = per_set[set_id];
    se.set_id = set_id;
    se.pairs += 1;
    se.geodesic_sum += geo_err[i];
    se.euclidean_sum += euc_err[i];
  }
  double geo_total = 0.0, euc_total = 0.0;
  long pair_count = 0;
  for (const auto& [sid, se] : per_set) {
    report.per_set.push_back(se);
    geo_total += se.geodesic_sum;
    euc_total += se.euclidean_sum;
    pair_count += se.pairs;
  }
  long sets_evaluated =
      static_cast<long>(std::count(set_used.begin(), set_used.end(), 1));
  report.pair_count = pair_count;
  report.mge = geo_total / static_cast<double>(pair_count);
  report.mee = euc_total / static_cast<double>(pair_count);
  report.literal_denominator =
      sets_evaluated * static_cast<long>(n_split) * static_cast<long>(n_split);
  report.mge_literal = geo_total / static_cast<double>(report.literal_denominator);
  return report;
}

EvalReport random_baseline(const EvalInputs& inputs, int trials, std::uint64_t seed,
                           int dimension, int threads) {
  if (trials < 1) fail("random_baseline: trials must be >= 1");
  if (!inputs.dataset || !inputs.clouds) fail("random_baseline: missing inputs");
  std::vector<embed::TableSpec> tables;
  for (const auto& id : inputs.split) {
    auto it = inputs.clouds->find(id);
    if (it == inputs.clouds->end()) fail("random_baseline: no cloud for model '" + id + "'");
    tables.push_back({id, static_cast<int>(it->second.points.size())});
  }
  Rng root(seed);
  EvalReport avg;
  for (int t = 0; t < trials; ++t) {
    embed::EmbeddingModel model = embed::EmbeddingModel::make_free_table(
        tables, dimension, root.fork(7000 + static_cast<std::uint64_t>(t)).next_u64());
    // amplitude uniform(-1, 1); the scale is irrelevant to retrieval but this
    // matches the "random embedding" convention
    Eigen::VectorXd& p = model.parameters();
    Rng fill(root.fork(8000 + static_cast<std::uint64_t>(t)).next_u64());
    for (long i = 0; i < p.size(); ++i) p[i] = fill.uniform(-1.0, 1.0);

    EvalReport r = evaluate_mge(model, inputs, threads);
    avg.mge += r.mge;
    avg.mee += r.mee;
    avg.mge_literal += r.mge_literal;
    if (t == 0) {
      avg.category = r.category;
      avg.pair_count = r.pair_count;
      avg.literal_denominator = r.literal_denominator;
      avg.per_set = r.per_set;
    } else {
      for (std::size_t s = 0; s < avg.per_set.size(); ++s) {
        avg.per_set[s].geodesic_sum += r.per_set[s].geodesic_sum;
        avg.per_set[s].euclidean_sum += r.per_set[s].euclidean_sum;
      }
    }
  }
  double inv = 1.0 / static_cast<double>(trials);
  avg.mge *= inv;
  avg.mee *= inv;
  avg.mge_literal *= inv;
  for (auto& se : avg.per_set) {
    se.geodesic_sum *= inv;
    se.euclidean_sum *= inv;
  }
  return avg;
}

void write_eval_csv(std::ostream& os, const EvalReport& report) {
  os << "category,mge,mge_literal_denominator,mee,pair_count\n";
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%s,%.17g,%.17g,%.17g,%ld\n", report.category.c_str(),
                report.mge, report.mge_literal, report.mee, report.pair_count);
  os << buf;
}

void write_eval_json(std::ostream& os, const EvalReport& report) {
  nlohmann::ordered_json j;
  j["category"] = report.category;
  j["mge"] = report.mge;
  j["mee"] = report.mee;
  j["mge_literal"] = report.mge_literal;
  j["pair_count"] = report.pair_count;
  j["literal_denominator"] = report.literal_denominator;
  j["per_set"] = nlohmann::ordered_json::array();
  for (const auto& se : report.per_set) {
    nlohmann::ordered_json js;
    js["set_id"] = se.set_id;
    js["pairs"] = se.pairs;
    js["mge"] = se.geodesic_sum / static_cast<double>(se.pairs);
    js["mee"] = se.euclidean_sum / static_cast<double>(se.pairs);
    j["per_set"].push_back(js);
  }
  os << j.dump(2) << '\n';
}

}  // namespace corrfield::metrics

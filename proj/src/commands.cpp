#include "corrfield/commands.hpp"

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <deque>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "corrfield/config.hpp"
#include "corrfield/corrset.hpp"
#include "corrfield/embedding.hpp"
#include "corrfield/geometry.hpp"
#include "corrfield/metrics.hpp"
#include "corrfield/pipeline.hpp"
#include "corrfield/registration.hpp"
#include "corrfield/rng.hpp"
#include "corrfield/synth.hpp"
#include "corrfield/version.hpp"

namespace corrfield::cli {
namespace {

namespace fs = std::filesystem;

[[noreturn]] void fail(const std::string& msg) { throw std::runtime_error(msg); }

std::string flag_for(const std::string& key) {
  std::string f = "--";
  for (char c : key) f.push_back(c == '_' ? '-' : c);
  return f;
}

// One subcommand's option table. Precedence: built-in defaults, then the
// --config file (unknown keys rejected), then explicit command-line flags.
class OptionSet {
 public:
  explicit OptionSet(CLI::App* cmd) : cmd_(cmd) {
    config_opt_ = cmd->add_option("--config", config_path_,
                                  "key = value file overriding the defaults");
  }

  void add(const std::string& key, const std::string& help) {
    add_impl(key, help, std::nullopt);
  }
  void add(const std::string& key, const std::string& help, std::string def) {
    add_impl(key, help, std::move(def));
  }

  KeyValues resolve() const {
    KeyValues kv = defaults_;
    if (config_opt_->count() > 0) {
      KeyValues file = KeyValues::from_file(config_path_);
      file.restrict_keys(allowed_);
      kv.merge(file);
    }
    for (const Bound& b : bound_)
      if (b.opt->count() > 0) kv.set(b.key, b.value);
    for (const std::string& key : required_)
      if (!kv.has(key))
        fail("missing required option " + flag_for(key) + " (config key '" + key + "')");
    return kv;
  }

 private:
  struct Bound {
    std::string key;
    std::string value;
    CLI::Option* opt = nullptr;
  };

  void add_impl(const std::string& key, const std::string& help,
                std::optional<std::string> def) {
    allowed_.push_back(key);
    if (def)
      defaults_.set(key, *def);
    else
      required_.push_back(key);
    bound_.emplace_back();  // deque: stable address for the CLI11 binding
    Bound& b = bound_.back();
    b.key = key;
    std::string h = help;
    if (def && !def->empty()) h += " [" + *def + "]";
    b.opt = cmd_->add_option(flag_for(key), b.value, h);
  }

  CLI::App* cmd_;
  std::string config_path_;
  CLI::Option* config_opt_ = nullptr;
  std::deque<Bound> bound_;
  std::vector<std::string> allowed_;
  std::vector<std::string> required_;
  KeyValues defaults_;
};

std::string num(double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double median(std::vector<double> v) {
  if (v.empty()) fail("median of an empty sample");
  std::sort(v.begin(), v.end());
  std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::vector<int> parse_int_list(const std::string& s) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (tok.empty()) continue;
    const char* begin = tok.c_str();
    char* end = nullptr;
    long v = std::strtol(begin, &end, 10);
    if (end == begin || *end != '\0')
      fail("expected a comma-separated integer list, got '" + s + "'");
    out.push_back(static_cast<int>(v));
  }
  if (out.empty()) fail("expected a comma-separated integer list, got '" + s + "'");
  return out;
}

fs::path ensure_out_dir(const KeyValues& kv) {
  fs::path out = kv.str("out");
  fs::create_directories(out);
  return out;
}

corr::Dataset load_dataset(const std::string& data_dir) {
  fs::path ann = fs::path(data_dir) / "annotations.json";
  if (!fs::exists(ann)) fail("no annotation file at " + ann.string());
  return corr::parse_dataset(ann, data_dir);
}

// Clouds must match the ones the model was trained against, so sampling
// parameters come from the model header.
pipeline::PreparedCategory prepare_for_model(const embed::EmbeddingModel& model,
                                             const corr::Dataset& dataset,
                                             int threads) {
  pipeline::PrepareOptions popt;
  popt.n_points = model.sampling.n_points > 0 ? model.sampling.n_points : 2048;
  popt.knn = model.sampling.knn > 0 ? model.sampling.knn : 8;
  popt.cloud_seed = model.sampling.cloud_seed;
  popt.threads = threads;
  return pipeline::prepare_category(dataset, popt);
}

corr::Split load_split(const KeyValues& kv, const fs::path& fallback_dir) {
  std::string sf = kv.str("split_file");
  fs::path path = sf.empty() ? fallback_dir / "split.json" : fs::path(sf);
  if (!fs::exists(path)) fail("split file not found: " + path.string());
  return corr::parse_split_json(path);
}

// mGE needs two split models carrying the same set; tiny splits may have none.
bool has_eval_pairs(const corr::Dataset& ds, const std::vector<std::string>& ids) {
  for (const auto& set : ds.sets) {
    int present = 0;
    for (const auto& id : ids)
      if (set.entries.count(id)) ++present;
    if (present >= 2) return true;
  }
  return false;
}

void check_category(const embed::EmbeddingModel& model, const corr::Dataset& ds) {
  if (!model.category.empty() && model.category != ds.category)
    fail("model was trained on category '" + model.category + "' but the dataset is '" +
         ds.category + "'");
}

void require_coord_mlp(const embed::EmbeddingModel& model) {
  if (model.kind() != embed::ModelKind::kCoordMlp)
    fail("a free_table cannot embed novel point sets; use a coord_mlp model");
}

Eigen::MatrixXd embed_cloud(const embed::EmbeddingModel& model,
                            const geom::PointCloud& cloud) {
  std::vector<embed::PointRef> refs(cloud.points.size());
  int slot = 0;
  if (model.kind() == embed::ModelKind::kFreeTable) {
    slot = model.slot_of(cloud.model_id);
    if (slot < 0) fail("model has no embedding table for '" + cloud.model_id + "'");
  }
  for (std::size_t i = 0; i < cloud.points.size(); ++i) {
    refs[i].slot = slot;
    refs[i].index = static_cast<int>(i);
    refs[i].xyz = cloud.points[i];
  }
  return model.embed(refs);
}

// --- synth ---------------------------------------------------------------------

void cmd_synth(const KeyValues& kv) {
  fs::path out = ensure_out_dir(kv);
  corr::SymmetryMode mode = corr::symmetry_mode_from_string(kv.str("symmetry"));
  synth::SynthesisResult result = synth::synthesize_category(
      kv.str("family"), static_cast<int>(kv.integer("models")),
      static_cast<int>(kv.integer("sets")), kv.uinteger("seed"), mode, out);
  kv.write(out / "config.resolved.toml", "synth");
  std::cout << "synth: category '" << result.dataset.category << "', "
            << result.dataset.models.size() << " models, " << result.dataset.sets.size()
            << " sets, " << result.files.size() << " files in " << out.string() << "\n";
}

// --- train ---------------------------------------------------------------------

void cmd_train(const KeyValues& kv) {
  fs::path out = ensure_out_dir(kv);
  corr::Dataset raw = load_dataset(kv.str("data"));

  pipeline::PrepareOptions popt;
  popt.n_points = static_cast<int>(kv.integer("n_points"));
  popt.knn = static_cast<int>(kv.integer("knn"));
  popt.cloud_seed = kv.uinteger("cloud_seed");
  popt.threads = static_cast<int>(kv.integer("threads"));
  pipeline::PreparedCategory prep = pipeline::prepare_category(raw, popt);

  corr::Split split = corr::split_models(prep.dataset, kv.uinteger("split_seed"));
  corr::write_split_json(out / "split.json", split);

  const std::string kind = kv.str("kind");
  int dim = static_cast<int>(kv.integer("dimension"));
  std::uint64_t seed = kv.uinteger("seed");

  embed::TrainData data;
  data.dataset = &prep.dataset;
  data.clouds = &prep.clouds;
  data.margins = &prep.margins;

  embed::EmbeddingModel model;
  if (kind == "free_table") {
    // Transductive: every model owns a table, so batches draw from all of
    // them; the split only controls which annotations score the result.
    model = pipeline::make_free_table_for(prep, dim, seed);
    for (const auto& m : prep.dataset.models) data.pool.push_back(m.id);
  } else if (kind == "coord_mlp") {
    model = embed::EmbeddingModel::make_coord_mlp(dim, seed,
                                                  static_cast<int>(kv.integer("hidden")));
    data.pool = split.train;
  } else {
    fail("unknown model kind '" + kind + "' (expected free_table or coord_mlp)");
  }

  metrics::EvalInputs val_inputs = pipeline::eval_inputs(prep, split.val);
  if (has_eval_pairs(prep.dataset, split.val)) {
    data.validation = [&](const embed::EmbeddingModel& m) {
      return metrics::evaluate_mge(m, val_inputs, popt.threads).mge;
    };
  } else {
    std::cout << "train: validation split has no correspondence pairs; "
                 "keeping the final model\n";
  }

  embed::TrainConfig tc;
  tc.epochs = static_cast<int>(kv.integer("epochs"));
  tc.batch_models = static_cast<int>(kv.integer("batch_models"));
  tc.steps_per_epoch = static_cast<int>(kv.integer("steps_per_epoch"));
  tc.lambda = kv.number("lambda");
  tc.mine = kv.boolean("mine");
  tc.same_model_negatives_only = kv.boolean("same_model_negatives");
  tc.adam.lr = kv.number("lr");
  tc.adam.lr_decay = kv.number("lr_decay");
  tc.adam.decay_every = static_cast<int>(kv.integer("decay_every"));
  tc.eval_every = static_cast<int>(kv.integer("eval_every"));
  tc.seed = seed;

  embed::TrainResult result = embed::train(std::move(model), data, tc);
  result.model.category = prep.dataset.category;
  result.model.sampling.cloud_seed = popt.cloud_seed;
  result.model.sampling.n_points = popt.n_points;
  result.model.sampling.knn = popt.knn;
  result.model.save(out / "model.bin");

  std::ofstream hist(out / "history.csv");
  embed::write_history_csv(hist, result.history);
  if (!hist) fail("cannot write " + (out / "history.csv").string());
  hist.close();

  kv.write(out / "config.resolved.toml", "train");
  std::cout << "train: " << kind << " d=" << dim << ", best validation mge="
            << num(result.best_validation) << " at epoch " << result.best_epoch << "\n";
}

// --- eval ----------------------------------------------------------------------

void cmd_eval(const KeyValues& kv) {
  fs::path out = ensure_out_dir(kv);
  fs::path model_path = kv.str("model");
  embed::EmbeddingModel model = embed::EmbeddingModel::load(model_path);
  corr::Dataset raw = load_dataset(kv.str("data"));
  check_category(model, raw);

  int threads = static_cast<int>(kv.integer("threads"));
  pipeline::PreparedCategory prep = prepare_for_model(model, raw, threads);
  corr::Split split = load_split(kv, model_path.parent_path());

  const std::string which = kv.str("split");
  std::vector<std::string> ids;
  if (which == "train") {
    ids = split.train;
  } else if (which == "val") {
    ids = split.val;
  } else if (which == "test") {
    ids = split.test;
  } else if (which == "all") {
    for (const auto& m : prep.dataset.models) ids.push_back(m.id);
  } else {
    fail("unknown split '" + which + "' (expected train, val, test or all)");
  }

  metrics::EvalInputs inputs = pipeline::eval_inputs(prep, ids);
  metrics::EvalReport report = metrics::evaluate_mge(model, inputs, threads);
  {
    std::ofstream f(out / "report.csv");
    metrics::write_eval_csv(f, report);
  }
  {
    std::ofstream f(out / "report.json");
    metrics::write_eval_json(f, report);
  }

  if (kv.boolean("random_baseline")) {
    int trials = static_cast<int>(kv.integer("trials"));
    metrics::EvalReport base = metrics::random_baseline(inputs, trials, kv.uinteger("seed"),
                                                        model.dimension(), threads);
    {
      std::ofstream f(out / "baseline.csv");
      metrics::write_eval_csv(f, base);
    }
    {
      std::ofstream f(out / "baseline.json");
      metrics::write_eval_json(f, base);
    }
    std::cout << "eval: random baseline mge=" << num(base.mge) << " over " << trials
              << " trials\n";
  }

  if (kv.boolean("ply")) {
    for (const std::string& id : ids) {
      const geom::PointCloud& cloud = prep.clouds.at(id);
      Eigen::MatrixXd emb = embed_cloud(model, cloud);
      pipeline::write_colored_ply(out / (id + ".ply"), cloud.points,
                                  pipeline::pca_colors(emb, emb));
    }
  }

  kv.write(out / "config.resolved.toml", "eval");
  std::cout << "eval: split=" << which << " mge=" << num(report.mge)
            << " mee=" << num(report.mee) << " pairs=" << report.pair_count << "\n";
}

// --- register ------------------------------------------------------------------

void cmd_register(const KeyValues& kv) {
  fs::path out = ensure_out_dir(kv);
  fs::path model_path = kv.str("model");
  embed::EmbeddingModel model = embed::EmbeddingModel::load(model_path);
  require_coord_mlp(model);
  corr::Dataset raw = load_dataset(kv.str("data"));
  check_category(model, raw);

  int threads = static_cast<int>(kv.integer("threads"));
  pipeline::PreparedCategory prep = prepare_for_model(model, raw, threads);
  corr::Split split = load_split(kv, model_path.parent_path());
  if (split.test.size() < 2)
    fail("registration needs at least 2 test models, got " +
         std::to_string(split.test.size()));

  reg::PerturbLevel level = reg::perturb_level(kv.str("level"));
  int pairs = static_cast<int>(kv.integer("pairs"));
  if (pairs < 1) fail("pairs must be >= 1");

  std::vector<std::pair<std::string, std::string>> combos;
  for (const std::string& a : split.test)
    for (const std::string& b : split.test)
      if (a != b) combos.emplace_back(a, b);

  reg::RegisterConfig rc;
  rc.ransac_iterations = static_cast<int>(kv.integer("ransac_iterations"));
  rc.inlier_threshold = kv.number("inlier_threshold");
  rc.icp_max_iters = static_cast<int>(kv.integer("icp_iterations"));
  rc.icp_tolerance = kv.number("icp_tolerance");
  rc.max_corr_points = static_cast<int>(kv.integer("max_corr_points"));
  rc.threads = threads;

  Rng root(kv.uinteger("seed"));
  std::ofstream csv(out / "registration.csv");
  csv << "category,pair_id,level,rot_error_deg,trans_error,inliers,method\n";
  std::vector<double> rot_icp, trans_icp, rot_ransac, trans_ransac;
  for (int k = 0; k < pairs; ++k) {
    const auto& [src_id, tgt_id] = combos[static_cast<std::size_t>(k) % combos.size()];
    Rng perturb_rng = root.fork(2000 + static_cast<std::uint64_t>(k));
    auto [tgt, gt] = reg::perturb(prep.clouds.at(tgt_id), level, perturb_rng);
    Rng pair_rng = root.fork(4000 + static_cast<std::uint64_t>(k));
    reg::RegistrationResult res =
        reg::register_pair(prep.clouds.at(src_id), tgt, model, gt, rc, pair_rng.next_u64());
    csv << raw.category << ',' << k << ',' << level.name << ','
        << num(res.ransac_errors.rot_deg) << ',' << num(res.ransac_errors.translation)
        << ',' << res.inliers << ",ransac\n";
    csv << raw.category << ',' << k << ',' << level.name << ','
        << num(res.errors.rot_deg) << ',' << num(res.errors.translation) << ','
        << res.inliers << ",ransac+icp\n";
    rot_ransac.push_back(res.ransac_errors.rot_deg);
    trans_ransac.push_back(res.ransac_errors.translation);
    rot_icp.push_back(res.errors.rot_deg);
    trans_icp.push_back(res.errors.translation);
  }
  if (!csv) fail("cannot write " + (out / "registration.csv").string());
  csv.close();

  nlohmann::ordered_json summary;
  summary["category"] = raw.category;
  summary["level"] = level.name;
  summary["pairs"] = pairs;
  summary["median_rot_error_deg"] = median(rot_icp);
  summary["median_trans_error"] = median(trans_icp);
  summary["median_ransac_rot_error_deg"] = median(rot_ransac);
  summary["median_ransac_trans_error"] = median(trans_ransac);
  std::ofstream js(out / "summary.json");
  js << summary.dump(2) << "\n";

  kv.write(out / "config.resolved.toml", "register");
  std::cout << "register: level=" << level.name << " pairs=" << pairs
            << " median rot=" << num(median(rot_icp))
            << " deg, median trans=" << num(median(trans_icp)) << "\n";
}

// --- match-partial ---------------------------------------------------------------

void cmd_match_partial(const KeyValues& kv) {
  fs::path out = ensure_out_dir(kv);
  fs::path model_path = kv.str("model");
  embed::EmbeddingModel model = embed::EmbeddingModel::load(model_path);
  require_coord_mlp(model);
  corr::Dataset raw = load_dataset(kv.str("data"));
  check_category(model, raw);

  double keep = kv.number("keep");
  if (!(keep > 0.0 && keep < 1.0))
    fail("keep fraction must be in (0, 1), got " + kv.str("keep"));

  int threads = static_cast<int>(kv.integer("threads"));
  pipeline::PreparedCategory prep = prepare_for_model(model, raw, threads);
  corr::Split split = load_split(kv, model_path.parent_path());
  if (split.test.size() < 2)
    fail("partial matching needs at least 2 test models, got " +
         std::to_string(split.test.size()));

  bool ply = kv.boolean("ply");
  Rng root(kv.uinteger("seed"));
  std::ofstream csv(out / "matches.csv");
  csv << "partial_model,complete_model,set_id,member,partial_point,retrieved_point,"
         "geodesic_error\n";
  std::vector<double> errors;

  for (std::size_t i = 0; i < split.test.size(); ++i) {
    const std::string& partial_id = split.test[i];
    const std::string& complete_id = split.test[(i + 1) % split.test.size()];
    const geom::PointCloud& full = prep.clouds.at(partial_id);
    const geom::PointCloud& complete = prep.clouds.at(complete_id);

    Rng crop_rng = root.fork(3000 + static_cast<std::uint64_t>(i));
    corr::CropResult crop = corr::crop_partial(full, keep, crop_rng.next_u64());
    std::vector<int> new_index(full.points.size(), -1);
    for (std::size_t j = 0; j < crop.kept.size(); ++j)
      new_index[static_cast<std::size_t>(crop.kept[j])] = static_cast<int>(j);

    Eigen::MatrixXd partial_emb = embed_cloud(model, crop.cloud);
    Eigen::MatrixXd complete_emb = embed_cloud(model, complete);
    Eigen::VectorXd complete_sq = complete_emb.rowwise().squaredNorm();
    const geom::DistanceMatrix& dm = prep.geodesics.at(complete_id);

    for (const corr::CorrespondenceSet& set : prep.dataset.sets) {
      auto pit = set.entries.find(partial_id);
      auto cit = set.entries.find(complete_id);
      if (pit == set.entries.end() || cit == set.entries.end()) continue;
      for (std::size_t m = 0; m < pit->second.members.size(); ++m) {
        const corr::SemanticPoint& member = pit->second.members[m];
        int ni = new_index[static_cast<std::size_t>(member.cloud_index)];
        if (ni < 0) continue;  // cropped away
        Eigen::VectorXd q = partial_emb.row(ni);
        Eigen::VectorXd score = complete_sq - 2.0 * (complete_emb * q);
        int best = 0;
        for (long r = 1; r < score.size(); ++r)
          if (score[r] < score[best]) best = static_cast<int>(r);
        double err = std::numeric_limits<double>::infinity();
        for (const corr::SemanticPoint& target : cit->second.members)
          err = std::min(err, dm.from(target.cloud_index, best));
        csv << partial_id << ',' << complete_id << ',' << set.set_id << ',' << m << ','
            << member.cloud_index << ',' << best << ',' << num(err) << "\n";
        errors.push_back(err);
      }
    }

    if (ply) {
      pipeline::write_colored_ply(out / (partial_id + "_partial.ply"), crop.cloud.points,
                                  pipeline::pca_colors(partial_emb, complete_emb));
      pipeline::write_colored_ply(out / (complete_id + "_complete.ply"), complete.points,
                                  pipeline::pca_colors(complete_emb, complete_emb));
    }
  }
  if (!csv) fail("cannot write " + (out / "matches.csv").string());
  csv.close();

  if (errors.empty()) fail("no annotated points survived the crop");
  nlohmann::ordered_json summary;
  summary["category"] = raw.category;
  summary["keep_fraction"] = keep;
  summary["pairs"] = split.test.size();
  summary["points_evaluated"] = errors.size();
  summary["median_geodesic_error"] = median(errors);
  std::ofstream js(out / "summary.json");
  js << summary.dump(2) << "\n";

  kv.write(out / "config.resolved.toml", "match-partial");
  std::cout << "match-partial: keep=" << num(keep) << " points=" << errors.size()
            << " median geodesic error=" << num(median(errors)) << "\n";
}

// --- geodesic --------------------------------------------------------------------

void cmd_geodesic(const KeyValues& kv) {
  fs::path out = ensure_out_dir(kv);
  geom::Mesh mesh = geom::load_mesh(kv.str("obj"));
  std::vector<int> sources = parse_int_list(kv.str("sources"));
  int threads = static_cast<int>(kv.integer("threads"));

  const std::string mode = kv.str("mode");
  geom::SurfaceGraph graph;
  if (mode == "cloud") {
    geom::PointCloud cloud = geom::sample_cloud(
        mesh, static_cast<int>(kv.integer("n_points")), {}, kv.uinteger("seed"));
    graph = geom::build_graph(cloud, static_cast<int>(kv.integer("knn")));
    // Node ids refer to sampled points; export them so the ids mean something.
    std::ofstream pts(out / "points.obj");
    char buf[128];
    for (const auto& p : cloud.points) {
      std::snprintf(buf, sizeof buf, "v %.17g %.17g %.17g\n", p.x(), p.y(), p.z());
      pts << buf;
    }
  } else if (mode == "mesh") {
    graph = geom::build_graph(mesh);
  } else {
    fail("unknown mode '" + mode + "' (expected cloud or mesh)");
  }

  geom::DistanceMatrix dm = geom::geodesics_from(graph, sources, threads);
  std::ofstream csv(out / "distances.csv");
  geom::write_distance_csv(csv, dm);
  if (!csv) fail("cannot write " + (out / "distances.csv").string());
  csv.close();

  kv.write(out / "config.resolved.toml", "geodesic");
  std::cout << "geodesic: " << sources.size() << " sources x " << graph.node_count
            << " nodes -> " << (out / "distances.csv").string() << "\n";
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
  CLI::App app{"corrfield: dense point-level semantic embeddings for 3D shape "
               "categories, learned from sparse correspondence-set annotations"};
  app.set_version_flag("--version", version_string());
  app.require_subcommand(1);

  std::deque<OptionSet> sets;
  auto command = [&](const char* name, const char* help,
                     void (*fn)(const KeyValues&)) -> OptionSet& {
    CLI::App* sub = app.add_subcommand(name, help);
    sets.emplace_back(sub);
    OptionSet& os = sets.back();
    sub->callback([&os, fn] { fn(os.resolve()); });
    return os;
  };

  {
    OptionSet& o = command("synth", "generate a synthetic annotated category", cmd_synth);
    o.add("family", "shape family: tables, mugs or rockets");
    o.add("out", "output directory");
    o.add("models", "number of models to generate", "10");
    o.add("sets", "number of correspondence sets", "6");
    o.add("symmetry", "annotation mode: none, central, rotational or both", "none");
    o.add("seed", "random seed", "0");
    o.add("threads", "worker threads (0 = auto)", "0");
  }
  {
    OptionSet& o = command("train", "train an embedding on an annotated category", cmd_train);
    o.add("data", "dataset directory (annotations.json + OBJ meshes)");
    o.add("out", "output directory");
    o.add("kind", "model kind: free_table or coord_mlp", "free_table");
    o.add("dimension", "embedding dimension", "128");
    o.add("hidden", "hidden width of the coordinate network", "64");
    o.add("epochs", "training epochs", "200");
    o.add("batch_models", "models drawn per batch", "4");
    o.add("steps_per_epoch", "batches per epoch (0 = pool size / batch_models)", "0");
    o.add("lambda", "weight of the push term", "1");
    o.add("lr", "Adam learning rate", "0.001");
    o.add("lr_decay", "learning-rate decay factor", "0.9");
    o.add("decay_every", "epochs between decay steps", "10");
    o.add("mine", "keep only the hardest negatives per batch", "true");
    o.add("same_model_negatives", "restrict negative pairs to one model", "false");
    o.add("eval_every", "validation cadence in epochs", "10");
    o.add("n_points", "cloud points per model", "2048");
    o.add("knn", "neighbors in the proximity graph", "8");
    o.add("cloud_seed", "cloud sampling seed", "0");
    o.add("split_seed", "train/val/test split seed", "0");
    o.add("seed", "training seed", "0");
    o.add("threads", "worker threads (0 = auto)", "0");
  }
  {
    OptionSet& o = command("eval", "score a trained embedding", cmd_eval);
    o.add("model", "trained model file");
    o.add("data", "dataset directory");
    o.add("out", "output directory");
    o.add("split_file", "split JSON (default: split.json next to the model)", "");
    o.add("split", "which models to score: train, val, test or all", "test");
    o.add("random_baseline", "also score random embeddings", "false");
    o.add("trials", "random-baseline trials", "5");
    o.add("ply", "export colorized point clouds", "false");
    o.add("seed", "random-baseline seed", "0");
    o.add("threads", "worker threads (0 = auto)", "0");
  }
  {
    OptionSet& o = command("register", "rigid registration of perturbed test pairs",
                           cmd_register);
    o.add("model", "trained coord_mlp model file");
    o.add("data", "dataset directory");
    o.add("out", "output directory");
    o.add("split_file", "split JSON (default: split.json next to the model)", "");
    o.add("level", "perturbation level: easy, medium or hard", "medium");
    o.add("pairs", "number of test pairs", "30");
    o.add("ransac_iterations", "RANSAC iterations", "1000");
    o.add("inlier_threshold", "RANSAC inlier distance", "0.05");
    o.add("icp_iterations", "ICP iteration cap", "50");
    o.add("icp_tolerance", "ICP convergence tolerance", "1e-06");
    o.add("max_corr_points", "points kept per cloud for correspondences", "512");
    o.add("seed", "perturbation/RANSAC seed", "0");
    o.add("threads", "worker threads (0 = auto)", "0");
  }
  {
    OptionSet& o = command("match-partial", "match cropped test clouds to complete ones",
                           cmd_match_partial);
    o.add("model", "trained coord_mlp model file");
    o.add("data", "dataset directory");
    o.add("out", "output directory");
    o.add("split_file", "split JSON (default: split.json next to the model)", "");
    o.add("keep", "fraction of points the crop keeps", "0.7");
    o.add("ply", "export colorized point clouds", "true");
    o.add("seed", "crop seed", "0");
    o.add("threads", "worker threads (0 = auto)", "0");
  }
  {
    OptionSet& o = command("geodesic", "export a geodesic distance field for a mesh",
                           cmd_geodesic);
    o.add("obj", "input OBJ mesh");
    o.add("out", "output directory");
    o.add("mode", "graph source: cloud (sampled points) or mesh (vertices)", "cloud");
    o.add("n_points", "cloud points (cloud mode)", "2048");
    o.add("knn", "neighbors in the proximity graph (cloud mode)", "8");
    o.add("sources", "comma-separated source node ids", "0");
    o.add("seed", "cloud sampling seed", "0");
    o.add("threads", "worker threads (0 = auto)", "0");
  }

  try {
    std::vector<const char*> argv;
    argv.reserve(args.size() + 1);
    argv.push_back("corrfield");
    for (const std::string& a : args) argv.push_back(a.c_str());
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace corrfield::cli

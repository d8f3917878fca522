#pragma once

#include <cstdint>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "corrfield/corrset.hpp"
#include "corrfield/embedding.hpp"
#include "corrfield/geometry.hpp"

namespace corrfield::metrics {

struct EvalInputs {
  const corr::Dataset* dataset = nullptr;
  const std::map<std::string, geom::PointCloud>* clouds = nullptr;
  // Per model, geodesics whose sources cover every annotated cloud index.
  const std::map<std::string, geom::DistanceMatrix>* geodesics = nullptr;
  std::vector<std::string> split;  // model ids to evaluate over
};

struct SetError {
  int set_id = 0;
  long pairs = 0;
  double geodesic_sum = 0.0;
  double euclidean_sum = 0.0;
};

struct EvalReport {
  std::string category;
  double mge = 0.0;          // geodesic error / evaluated pair count
  double mee = 0.0;          // straight-line error / evaluated pair count
  double mge_literal = 0.0;  // same numerator / (sets x split_size^2)
  long pair_count = 0;
  long literal_denominator = 0;
  std::vector<SetError> per_set;
};

// Mean Geodesic Error: for every set and every ordered pair of split models
// carrying it, each member of the source hyperpoint queries its embedding
// nearest neighbor in the target cloud (ties -> lowest index); the error is
// the smallest geodesic distance from any target member to the retrieved
// point. mEE is the same with straight-line distance, computed in the same
// pass.
EvalReport evaluate_mge(const embed::EmbeddingModel& model, const EvalInputs& inputs,
                        int threads = 1);

// mGE averaged over `trials` random embeddings: free tables filled with
// uniform(-1, 1) entries.
EvalReport random_baseline(const EvalInputs& inputs, int trials, std::uint64_t seed,
                           int dimension = 128, int threads = 1);

// CSV row: category,mge,mge_literal_denominator,mee,pair_count
void write_eval_csv(std::ostream& os, const EvalReport& report);
void write_eval_json(std::ostream& os, const EvalReport& report);

}  // namespace corrfield::metrics

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "trinet/evalkit.hpp"
#include "trinet/fusion_head.hpp"
#include "trinet/probe.hpp"
#include "trinet/synthgen.hpp"

namespace trinet::experiment {

/// Which branch output feeds the probe.
enum class FeatureSource { wtcr, backbone, fused };
FeatureSource parse_feature_source(std::string_view s);
std::string_view to_string(FeatureSource s);

/// Pooled (V, C_f) features for every clip, computed in batches.
probe::Features extract_features(const std::vector<synth::TextureVideo>& videos, const fusion::ModelParams& model,
                                 FeatureSource source, std::size_t batch = 16);

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

/// Rows whose patient is in fold `test_fold` form the test set.
Split split_by_fold(std::span<const std::string> patient_of_row, const eval::FoldAssignment& folds,
                    std::size_t test_fold);

struct ProbeRun {
  probe::ProbeParams params;
  probe::Standardizer standardizer;
  eval::MetricsReport train;
  eval::MetricsReport test;
  std::vector<eval::Prediction> test_predictions;
  std::vector<double> loss_log;
};

/// Standardises on the train rows, trains, evaluates both sides.
ProbeRun run_probe(const probe::Features& x, std::span<const int> labels, std::span<const std::string> video_ids,
                   std::span<const std::string> patient_ids, const Split& split, const probe::TrainOptions& opts);

probe::Features select_rows(const probe::Features& x, std::span<const std::size_t> rows);

struct SeparabilityResult {
  ProbeRun real;
  ProbeRun shuffled;  // same split, labels permuted across videos
};

/// Texture dataset -> pooled features -> patient-level stratified 5-fold
/// split, fold 0 held out -> probe on true and on shuffled labels.
SeparabilityResult separability(const synth::TextureSpec& spec, const fusion::ModelParams& model,
                                FeatureSource source, const probe::TrainOptions& opts, std::uint64_t seed);

}  // namespace trinet::experiment

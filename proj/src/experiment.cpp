#include "trinet/experiment.hpp"

#include <algorithm>
#include <stdexcept>

namespace trinet::experiment {

FeatureSource parse_feature_source(std::string_view s) {
  if (s == "wtcr") return FeatureSource::wtcr;
  if (s == "backbone" || s == "spatiotemporal") return FeatureSource::backbone;
  if (s == "fused") return FeatureSource::fused;
  throw std::invalid_argument("unknown feature source '" + std::string(s) + "' (wtcr|backbone|fused)");
}

std::string_view to_string(FeatureSource s) {
  switch (s) {
    case FeatureSource::wtcr: return "wtcr";
    case FeatureSource::backbone: return "backbone";
    case FeatureSource::fused: return "fused";
  }
  return "?";
}

probe::Features extract_features(const std::vector<synth::TextureVideo>& videos, const fusion::ModelParams& model,
                                 FeatureSource source, std::size_t batch) {
  if (videos.empty()) throw std::invalid_argument("extract_features: no videos");
  if (batch == 0) batch = 1;
  const auto provider = backbone::FrameFeatureProvider::stub(model.encoder);
  probe::Features out;
  out.cols = model.shape.channels;
  for (std::size_t begin = 0; begin < videos.size(); begin += batch) {
    const std::size_t count = std::min(batch, videos.size() - begin);
    const Tensor clip = synth::stack_clips(videos, begin, count);
    Tensor branch;
    switch (source) {
      case FeatureSource::wtcr: branch = wavelet::wtcr_forward(clip, model.wtcr); break;
      case FeatureSource::backbone: branch = backbone::backbone_forward(clip, model.backbone); break;
      case FeatureSource::fused: {
        const auto f = fusion::branch_features(clip, model, provider);
        branch = fusion::pyramid_fuse(f.spatiotemporal, f.attended, f.frequency, model.fusion);
        break;
      }
    }
    const Tensor pooled = probe::pool_features(branch);
    out.data.insert(out.data.end(), pooled.values().begin(), pooled.values().end());
    out.rows += count;
  }
  return out;
}

Split split_by_fold(std::span<const std::string> patient_of_row, const eval::FoldAssignment& folds,
                    std::size_t test_fold) {
  if (test_fold >= folds.folds.size()) throw std::invalid_argument("split_by_fold: fold out of range");
  Split s;
  for (std::size_t i = 0; i < patient_of_row.size(); ++i)
    (folds.fold_of(patient_of_row[i]) == test_fold ? s.test : s.train).push_back(i);
  return s;
}

probe::Features select_rows(const probe::Features& x, std::span<const std::size_t> rows) {
  probe::Features out;
  out.cols = x.cols;
  out.rows = rows.size();
  out.data.reserve(rows.size() * x.cols);
  for (auto r : rows) {
    const auto row = x.row(r);
    out.data.insert(out.data.end(), row.begin(), row.end());
  }
  return out;
}

ProbeRun run_probe(const probe::Features& x, std::span<const int> labels, std::span<const std::string> video_ids,
                   std::span<const std::string> patient_ids, const Split& split, const probe::TrainOptions& opts) {
  auto pick = [&](const std::vector<std::size_t>& rows) {
    std::vector<int> y;
    y.reserve(rows.size());
    for (auto r : rows) y.push_back(labels[r]);
    return y;
  };
  const auto y_train = pick(split.train);
  const auto y_test = pick(split.test);
  ProbeRun run;
  const auto raw_train = select_rows(x, split.train);
  run.standardizer = probe::Standardizer::fit(raw_train);
  const auto x_train = run.standardizer.apply(raw_train);
  const auto x_test = run.standardizer.apply(select_rows(x, split.test));
  run.params = probe::train_logistic(x_train, y_train, opts, &run.loss_log);
  run.train = probe::evaluate_probe(run.params, x_train, y_train);
  run.test = probe::evaluate_probe(run.params, x_test, y_test);
  const auto probs = probe::predict_proba(run.params, x_test);
  for (std::size_t i = 0; i < split.test.size(); ++i) {
    const auto r = split.test[i];
    run.test_predictions.push_back({video_ids[r], patient_ids[r], labels[r], probs[i]});
  }
  return run;
}

SeparabilityResult separability(const synth::TextureSpec& spec, const fusion::ModelParams& model,
                                FeatureSource source, const probe::TrainOptions& opts, std::uint64_t seed) {
  const auto videos = synth::gen_texture_dataset(spec);
  const auto x = extract_features(videos, model, source);

  std::vector<int> labels;
  std::vector<std::string> ids, patients;
  std::vector<eval::PatientLabel> patient_labels;
  for (const auto& v : videos) {
    labels.push_back(v.label);
    ids.push_back(v.video_id);
    patients.push_back(v.patient_id);
    patient_labels.push_back({v.patient_id, v.label});
  }
  Rng rng(derive_seed(seed, seed_domain::eval));
  const auto folds = eval::kfold_split(patient_labels, 5, rng);
  const Split split = split_by_fold(patients, folds, 0);

  SeparabilityResult result;
  result.real = run_probe(x, labels, ids, patients, split, opts);

  std::vector<int> shuffled = labels;
  Rng perm(derive_seed(seed, seed_domain::probe));
  perm.shuffle(shuffled.begin(), shuffled.end());
  result.shuffled = run_probe(x, shuffled, ids, patients, split, opts);
  return result;
}

}  // namespace trinet::experiment

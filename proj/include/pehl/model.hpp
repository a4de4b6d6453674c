#pragma once

#include <filesystem>
#include <span>
#include <string_view>
#include <variant>
#include <vector>

#include "json.hpp"
#include "pehl/artifact.hpp"
#include "pehl/attn_lstm.hpp"
#include "pehl/elastic_net.hpp"
#include "pehl/fc_net.hpp"
#include "pehl/forest.hpp"
#include "pehl/header_extract.hpp"
#include "pehl/ngram.hpp"

namespace pehl {

enum class Method { fields_trees, ngram_linear, fc, attn_lstm };

std::string_view to_string(Method method);
Method method_from_string(std::string_view s);  // throws DataError

struct NgramLinear {
  NGramVocabulary vocab;
  LinearModel model;
};

/// A trained scorer of header regions plus the metadata stamped into its
/// artifact (schema hash, hyperparameters, seed, training-trace digest).
struct TrainedModel {
  using Impl = std::variant<TreeEnsemble, NgramLinear, FcNet, AttnLstmNet>;

  Impl impl;
  nlohmann::json metadata;

  Method method() const;
  // Malicious-class probability per region.
  std::vector<double> score(std::span<const HeaderRegion> regions) const;
};

ArtifactBlob to_artifact(const TrainedModel& model);
// Throws ArtifactError when the payload disagrees with the metadata or the
// feature schema hash differs from this build's.
TrainedModel from_artifact(const ArtifactBlob& blob);

void save_model(const TrainedModel& model, const std::filesystem::path& path);
TrainedModel load_model(const std::filesystem::path& path);

std::vector<nn::ByteSeq> region_views(std::span<const HeaderRegion> regions);

}  // namespace pehl

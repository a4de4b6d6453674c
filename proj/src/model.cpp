#include "pehl/model.hpp"

#include <cstdio>

#include "pehl/error.hpp"
#include "pehl/header_features.hpp"

namespace pehl {

std::string_view to_string(Method method) {
  switch (method) {
    case Method::fields_trees: return "fields-trees";
    case Method::ngram_linear: return "ngram-linear";
    case Method::fc: return "fc";
    case Method::attn_lstm: return "attn-lstm";
  }
  return "fields-trees";
}

Method method_from_string(std::string_view s) {
  if (s == "fields-trees") return Method::fields_trees;
  if (s == "ngram-linear") return Method::ngram_linear;
  if (s == "fc") return Method::fc;
  if (s == "attn-lstm") return Method::attn_lstm;
  throw DataError("unknown method '" + std::string(s) +
                  "' (expected fields-trees, ngram-linear, fc or attn-lstm)");
}

Method TrainedModel::method() const { return static_cast<Method>(impl.index()); }

std::vector<nn::ByteSeq> region_views(std::span<const HeaderRegion> regions) {
  std::vector<nn::ByteSeq> out;
  out.reserve(regions.size());
  for (const auto& r : regions) out.push_back(r.view());
  return out;
}

std::vector<double> TrainedModel::score(std::span<const HeaderRegion> regions) const {
  std::vector<double> out;
  out.reserve(regions.size());
  if (const auto* forest = std::get_if<TreeEnsemble>(&impl)) {
    for (const auto& r : regions) out.push_back(predict_proba(*forest, parse_features(r)));
  } else if (const auto* lin = std::get_if<NgramLinear>(&impl)) {
    for (const auto& r : regions) out.push_back(predict_score(lin->model, vectorize(r, lin->vocab)));
  } else if (const auto* fc = std::get_if<FcNet>(&impl)) {
    out = fc->predict(region_views(regions));
  } else {
    out = std::get<AttnLstmNet>(impl).predict(region_views(regions));
  }
  return out;
}

namespace {

ModelKind kind_of(Method m) {
  switch (m) {
    case Method::fields_trees: return ModelKind::forest;
    case Method::ngram_linear: return ModelKind::linear;
    case Method::fc: return ModelKind::fc;
    case Method::attn_lstm: return ModelKind::attn_lstm;
  }
  return ModelKind::forest;
}

std::string hex_gram(const Gram& g) {
  std::string s;
  char buf[3];
  for (int k = g.n - 1; k >= 0; --k) {
    std::snprintf(buf, sizeof buf, "%02x", static_cast<unsigned>((g.bytes >> (8 * k)) & 0xff));
    s += buf;
  }
  return s;
}

Gram parse_gram(const std::string& hex) {
  if (hex.size() % 2 != 0 || hex.size() < 4 || hex.size() > 12) throw ArtifactError("bad gram '" + hex + "'");
  Gram g;
  g.n = static_cast<int>(hex.size() / 2);
  g.bytes = std::stoull(hex, nullptr, 16);
  return g;
}

template <class Net>
void write_net(PayloadWriter& w, Net& net) {
  for (nn::Param* p : net.parameters()) w.matrix(p->value);
  for (nn::RowVector* b : net.buffers()) w.row_vector(*b);
}

template <class Net>
void read_net(PayloadReader& r, Net& net) {
  for (nn::Param* p : net.parameters()) r.matrix_into(p->value);
  for (nn::RowVector* b : net.buffers()) r.row_vector_into(*b);
}

}  // namespace

ArtifactBlob to_artifact(const TrainedModel& model) {
  ArtifactBlob blob;
  blob.kind = kind_of(model.method());
  blob.metadata = model.metadata;
  blob.metadata["schema_hash"] = schema_hash();
  blob.metadata["method"] = to_string(model.method());
  PayloadWriter w;
  if (const auto* forest = std::get_if<TreeEnsemble>(&model.impl)) {
    nlohmann::json kinds = nlohmann::json::array();
    for (auto k : forest->feature_kinds) kinds.push_back(to_string(k));
    blob.metadata["forest"] = {{"kind", to_string(forest->kind)},
                               {"n_trees", forest->n_trees},
                               {"seed", forest->seed},
                               {"feature_names", forest->feature_names},
                               {"feature_kinds", kinds}};
    w.u32(static_cast<std::uint32_t>(forest->trees.size()));
    for (const auto& tree : forest->trees) {
      w.u32(static_cast<std::uint32_t>(tree.nodes.size()));
      for (const auto& n : tree.nodes) {
        w.u8(static_cast<std::uint8_t>(n.split));
        w.i32(n.feature);
        w.f64(n.value);
        w.f64(n.class_counts[0]);
        w.f64(n.class_counts[1]);
        w.f64(n.p_t);
        w.f64(n.gini);
        w.i32(n.left);
        w.i32(n.right);
        w.f64(n.p_left);
        w.f64(n.p_right);
      }
    }
  } else if (const auto* lin = std::get_if<NgramLinear>(&model.impl)) {
    nlohmann::json grams = nlohmann::json::array();
    for (const auto& g : lin->vocab.grams()) grams.push_back(hex_gram(g));
    blob.metadata["vocabulary"] = {{"n_values", lin->vocab.n_values()},
                                   {"grams", grams},
                                   {"doc_freq", lin->vocab.doc_freq()},
                                   {"corpus_size", lin->vocab.corpus_size()},
                                   {"min_doc_frac", lin->vocab.min_doc_frac()}};
    w.u64(lin->model.w.size());
    for (double v : lin->model.w) w.f64(v);
    w.f64(lin->model.intercept);
    w.f64(lin->model.C);
  } else if (const auto* fc = std::get_if<FcNet>(&model.impl)) {
    blob.metadata["architecture"] = fc->config().to_json();
    write_net(w, const_cast<FcNet&>(*fc));
  } else {
    const auto& net = std::get<AttnLstmNet>(model.impl);
    blob.metadata["architecture"] = net.config().to_json();
    write_net(w, const_cast<AttnLstmNet&>(net));
  }
  blob.payload = w.take();
  return blob;
}

TrainedModel from_artifact(const ArtifactBlob& blob) {
  const auto& meta = blob.metadata;
  if (!meta.contains("schema_hash") || meta["schema_hash"] != schema_hash()) {
    throw ArtifactError("artifact was built against a different feature schema");
  }
  TrainedModel model;
  model.metadata = meta;
  PayloadReader r(blob.payload);
  try {
    switch (blob.kind) {
      case ModelKind::forest: {
        TreeEnsemble e;
        const auto& f = meta.at("forest");
        e.kind = forest_kind_from_string(f.at("kind").get<std::string>());
        e.n_trees = f.at("n_trees").get<int>();
        e.seed = f.at("seed").get<std::uint64_t>();
        e.feature_names = f.at("feature_names").get<std::vector<std::string>>();
        for (const auto& k : f.at("feature_kinds")) {
          const auto s = k.get<std::string>();
          e.feature_kinds.push_back(s == "categorical" ? FeatureKind::categorical
                                    : s == "flag"      ? FeatureKind::flag
                                                       : FeatureKind::numeric);
        }
        const std::uint32_t n_trees = r.u32();
        for (std::uint32_t t = 0; t < n_trees; ++t) {
          Tree tree;
          const std::uint32_t n_nodes = r.u32();
          for (std::uint32_t k = 0; k < n_nodes; ++k) {
            TreeNode n;
            const std::uint8_t split = r.u8();
            if (split > 2) throw ArtifactError("bad split kind");
            n.split = static_cast<SplitKind>(split);
            n.feature = r.i32();
            n.value = r.f64();
            n.class_counts[0] = r.f64();
            n.class_counts[1] = r.f64();
            n.p_t = r.f64();
            n.gini = r.f64();
            n.left = r.i32();
            n.right = r.i32();
            n.p_left = r.f64();
            n.p_right = r.f64();
            const auto limit = static_cast<std::int32_t>(n_nodes);
            if (!n.is_leaf() && (n.left <= 0 || n.right <= 0 || n.left >= limit || n.right >= limit ||
                                 n.feature < 0 ||
                                 static_cast<std::size_t>(n.feature) >= e.feature_kinds.size())) {
              throw ArtifactError("tree node references out of range");
            }
            tree.nodes.push_back(n);
          }
          e.trees.push_back(std::move(tree));
        }
        model.impl = std::move(e);
        break;
      }
      case ModelKind::linear: {
        const auto& v = meta.at("vocabulary");
        std::vector<Gram> grams;
        for (const auto& g : v.at("grams")) grams.push_back(parse_gram(g.get<std::string>()));
        NgramLinear lin;
        lin.vocab = NGramVocabulary(v.at("n_values").get<std::vector<int>>(), std::move(grams),
                                    v.at("doc_freq").get<std::vector<std::uint32_t>>(),
                                    v.at("corpus_size").get<std::size_t>(),
                                    v.at("min_doc_frac").get<double>());
        const std::uint64_t dim = r.u64();
        if (dim != lin.vocab.dim()) throw ArtifactError("weight count does not match the vocabulary");
        lin.model.w.resize(dim);
        for (auto& x : lin.model.w) x = r.f64();
        lin.model.intercept = r.f64();
        lin.model.C = r.f64();
        model.impl = std::move(lin);
        break;
      }
      case ModelKind::fc: {
        FcNet net(FcConfig::from_json(meta.at("architecture")), 0);
        read_net(r, net);
        model.impl = std::move(net);
        break;
      }
      case ModelKind::attn_lstm: {
        AttnLstmNet net(AttnConfig::from_json(meta.at("architecture")), 0);
        read_net(r, net);
        model.impl = std::move(net);
        break;
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ArtifactError(std::string("artifact metadata incomplete: ") + e.what());
  } catch (const DataError& e) {
    throw ArtifactError(std::string("artifact metadata invalid: ") + e.what());
  }
  if (!r.at_end()) throw ArtifactError("trailing bytes in artifact payload");
  return model;
}

void save_model(const TrainedModel& model, const std::filesystem::path& path) {
  write_artifact_file(path, to_artifact(model));
}

TrainedModel load_model(const std::filesystem::path& path) {
  return from_artifact(read_artifact_file(path));
}

}  // namespace pehl

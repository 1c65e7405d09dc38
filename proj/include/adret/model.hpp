#pragma once

// Edge-weight model: training samples mined from network paths, sparse ID +
// continuous statistic features, weighted logistic regression, AUC.

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "adret/clicklog.hpp"
#include "adret/network.hpp"

namespace adret::model {

using network::EdgeStats;
using network::HierNetwork;

enum class Objective { Ctr, Rpm };

std::string_view to_string(Objective objective) noexcept;
std::optional<Objective> objective_from_string(std::string_view name) noexcept;

/// One impression expanded into the network edges that connect its signals to
/// its shown ad. Both edge lists are sorted and duplicate-free.
struct TrainingSample {
    EntityId request_id = 0;
    NodeId ad;
    std::vector<Edge> rewriting_edges;
    std::vector<Edge> selecting_edges;
    int label = 0;
    double ad_price = 0.0;
    double weight = 1.0;
};

struct ExtractResult {
    std::vector<TrainingSample> samples;
    std::size_t dropped = 0;  ///< impressions whose ad is unreachable from their signals
};

/// For every impression, keeps every selecting edge key -> ad whose key is
/// reached by at least one record signal, and every such signal -> key edge.
ExtractResult extract_samples(const HierNetwork& net, std::span<const clicklog::ImpressionRecord> log);

/// CTR: every weight 1. RPM: clicked samples weigh their ad price, unclicked 1.
/// Throws DataError on a clicked sample with nonpositive price in RPM mode.
void weight_samples(std::span<TrainingSample> samples, Objective objective);

// ---- features ----

/// Per edge layer: clicks, presents, CTR, log1p(clicks), log1p(presents).
inline constexpr std::size_t kLayerStats = 5;
inline constexpr std::size_t kContinuousDim = 2 * kLayerStats;
using ContinuousVector = std::array<double, kContinuousDim>;

/// Offset of a layer's block inside the continuous vector.
constexpr std::size_t block_offset(EdgeLayer layer) noexcept
{
    return layer == EdgeLayer::Rewriting ? 0 : kLayerStats;
}

struct FeatureOptions {
    bool sparse = true;
    bool continuous = true;
    bool log_transforms = true;

    friend bool operator==(const FeatureOptions&, const FeatureOptions&) = default;
};

/// Writes one layer's block from the layer's summed edge stats.
void fill_layer_block(ContinuousVector& out, EdgeLayer layer, const EdgeStats& sum, const FeatureOptions& options);

/// Explicit, ordered mapping from node and edge identity to a feature index.
/// Nodes come first in node order, then rewriting and selecting edges in edge order.
class FeatureDictionary {
public:
    FeatureDictionary() = default;

    static FeatureDictionary build(const HierNetwork& net);

    /// Rebuilds from the identity strings in index order ("S:query:1", "S:query:1>K:item:2", ...).
    static FeatureDictionary from_identities(std::span<const std::string> identities);

    std::optional<std::uint32_t> node_index(NodeId node) const;
    std::optional<std::uint32_t> edge_index(const Edge& edge) const;

    std::size_t size() const noexcept { return identities_.size(); }
    const std::string& identity(std::uint32_t index) const { return identities_.at(index); }
    /// Fingerprint of the ordered identity list.
    std::uint64_t version() const noexcept { return version_; }

private:
    void add_node(NodeId node);
    void add_edge(const Edge& edge);
    void seal();

    std::vector<std::string> identities_;
    std::unordered_map<NodeId, std::uint32_t, NodeIdHash> nodes_;
    std::unordered_map<Edge, std::uint32_t, EdgeHash> edges_;
    std::uint64_t version_ = 0;
};

struct FeatureVector {
    std::vector<std::uint32_t> sparse_ids;  ///< sorted, distinct
    ContinuousVector continuous{};

    friend bool operator==(const FeatureVector&, const FeatureVector&) = default;
};

/// Sparse ids of every node and edge of the sample plus per-layer aggregate
/// statistics. Throws IntegrityError if an edge is missing from `net` or `dict`.
FeatureVector featurize(const TrainingSample& sample, const HierNetwork& net, const FeatureDictionary& dict,
                        const FeatureOptions& options = {});

struct EncodedSample {
    FeatureVector features;
    double label = 0.0;
    double weight = 1.0;
};

std::vector<EncodedSample> encode(std::span<const TrainingSample> samples, const HierNetwork& net,
                                  const FeatureDictionary& dict, const FeatureOptions& options = {});

// ---- logistic regression ----

struct Hyper {
    double learning_rate = 0.1;
    std::size_t epochs = 20;
    double l2 = 1e-4;
    std::size_t batch_size = 256;
    std::uint64_t seed = 0;
};

double sigmoid(double x) noexcept;

/// Linear logit over sparse indicator weights and standardized continuous
/// features: score = sigmoid(bias + sum of active weights + sum_j c_j (z_j - mean_j) / scale_j),
/// where z_j is x_j clamped to the range seen in training.
class LrModel {
public:
    LrModel() = default;
    LrModel(FeatureDictionary dictionary, Objective objective, Hyper hyper, FeatureOptions features);

    double margin(const FeatureVector& x) const;
    double score(const FeatureVector& x) const { return sigmoid(margin(x)); }

    /// Self-contained ranking weight of a single edge: its sparse weight plus
    /// the continuous contribution of its own stats in its layer block
    /// (centering constants omitted; they are shared by every edge of a layer).
    double edge_weight(const Edge& edge, const EdgeStats& stats) const;

    /// Weight of a sparse feature id, honoring the feature switches.
    double sparse_weight(std::uint32_t id) const;
    double sparse_weight(std::optional<std::uint32_t> id) const { return id ? sparse_weight(*id) : 0.0; }

    const FeatureDictionary& dictionary() const noexcept { return dictionary_; }
    Objective objective() const noexcept { return objective_; }
    const Hyper& hyper() const noexcept { return hyper_; }
    const FeatureOptions& features() const noexcept { return features_; }

    std::vector<double> weights;  ///< one per dictionary entry
    ContinuousVector continuous_weights{};
    ContinuousVector continuous_mean{};
    ContinuousVector continuous_scale{};
    ContinuousVector continuous_min{};  ///< training range, set by train_lr
    ContinuousVector continuous_max{};
    double bias = 0.0;

private:
    FeatureDictionary dictionary_;
    Objective objective_ = Objective::Ctr;
    Hyper hyper_;
    FeatureOptions features_;
};

/// Weighted mean logistic loss plus l2/2 times the squared norm of all
/// weights except the bias.
double objective_value(const LrModel& model, std::span<const EncodedSample> data);

struct Gradient {
    std::vector<double> sparse;
    ContinuousVector continuous{};
    double bias = 0.0;
};

/// Exact gradient of `objective_value` with respect to every parameter.
Gradient gradient(const LrModel& model, std::span<const EncodedSample> data);

struct TrainReport {
    double initial_loss = 0.0;
    std::vector<double> epoch_loss;  ///< objective after each epoch
};

/// Mini-batch gradient descent with exact L2 decay. Deterministic for a fixed
/// seed. Throws TrainingError when the data holds a single class.
LrModel train_lr(std::span<const EncodedSample> data, FeatureDictionary dictionary, Objective objective,
                 const Hyper& hyper, const FeatureOptions& features = {}, TrainReport* report = nullptr);

// ---- evaluation ----

struct ScoredLabel {
    double score = 0.0;
    int label = 0;
};

/// Rank-based area under the ROC curve with tied scores sharing the average
/// rank. Throws DomainError unless both classes are present.
double auc(std::span<const ScoredLabel> input);

// ---- persistence ----

void write_model(std::ostream& out, const LrModel& model);
void write_model(const std::filesystem::path& path, const LrModel& model);
LrModel read_model(std::istream& in);
LrModel read_model(const std::filesystem::path& path);

}  // namespace adret::model

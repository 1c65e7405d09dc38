#include <algorithm>
#include <cmath>

#include "adret/error.hpp"
#include "adret/io.hpp"
#include "adret/model.hpp"

namespace adret::model {

void fill_layer_block(ContinuousVector& out, EdgeLayer layer, const EdgeStats& sum, const FeatureOptions& options)
{
    const std::size_t at = block_offset(layer);
    if (!options.continuous) {
        std::fill_n(out.begin() + static_cast<std::ptrdiff_t>(at), kLayerStats, 0.0);
        return;
    }
    const auto clicks = static_cast<double>(sum.clicks);
    const auto presents = static_cast<double>(sum.presents);
    out[at + 0] = clicks;
    out[at + 1] = presents;
    out[at + 2] = sum.presents == 0 ? 0.0 : clicks / presents;
    out[at + 3] = options.log_transforms ? std::log1p(clicks) : 0.0;
    out[at + 4] = options.log_transforms ? std::log1p(presents) : 0.0;
}

FeatureDictionary FeatureDictionary::build(const HierNetwork& net)
{
    FeatureDictionary dict;
    for (auto node : net.nodes()) dict.add_node(node);
    for (const auto& [edge, stats] : net.rewriting()) dict.add_edge(edge);
    for (const auto& [edge, stats] : net.selecting()) dict.add_edge(edge);
    dict.seal();
    return dict;
}

FeatureDictionary FeatureDictionary::from_identities(std::span<const std::string> identities)
{
    FeatureDictionary dict;
    for (const auto& text : identities) {
        if (text.find('>') != std::string::npos) {
            auto edge = Edge::parse(text);
            if (!edge || !edge->layer()) {
                throw ParseError(0, "bad edge identity '" + text + "'");
            }
            dict.add_edge(*edge);
        } else {
            auto node = NodeId::parse(text);
            if (!node) {
                throw ParseError(0, "bad node identity '" + text + "'");
            }
            dict.add_node(*node);
        }
    }
    dict.seal();
    return dict;
}

void FeatureDictionary::add_node(NodeId node)
{
    if (!nodes_.emplace(node, static_cast<std::uint32_t>(identities_.size())).second) {
        throw IntegrityError("duplicate dictionary node " + node.str());
    }
    identities_.push_back(node.str());
}

void FeatureDictionary::add_edge(const Edge& edge)
{
    if (!edges_.emplace(edge, static_cast<std::uint32_t>(identities_.size())).second) {
        throw IntegrityError("duplicate dictionary edge " + edge.str());
    }
    identities_.push_back(edge.str());
}

void FeatureDictionary::seal()
{
    std::string joined;
    for (const auto& id : identities_) {
        joined += id;
        joined += '\n';
    }
    version_ = fingerprint64(joined);
}

std::optional<std::uint32_t> FeatureDictionary::node_index(NodeId node) const
{
    auto it = nodes_.find(node);
    return it == nodes_.end() ? std::nullopt : std::optional(it->second);
}

std::optional<std::uint32_t> FeatureDictionary::edge_index(const Edge& edge) const
{
    auto it = edges_.find(edge);
    return it == edges_.end() ? std::nullopt : std::optional(it->second);
}

FeatureVector featurize(const TrainingSample& sample, const HierNetwork& net, const FeatureDictionary& dict,
                        const FeatureOptions& options)
{
    FeatureVector fv;
    EdgeStats sums[2];
    auto require_index = [](std::optional<std::uint32_t> index, const std::string& what) {
        if (!index) {
            throw IntegrityError(what + " is not in the feature dictionary");
        }
        return *index;
    };
    auto visit = [&](const Edge& edge, EdgeLayer layer) {
        const auto stats = net.stats(edge);
        if (!stats || edge.layer() != layer) {
            throw IntegrityError("sample edge " + edge.str() + " is not in the network");
        }
        auto& sum = sums[static_cast<int>(layer)];
        sum.clicks += stats->clicks;
        sum.presents += stats->presents;
        if (options.sparse) {
            fv.sparse_ids.push_back(require_index(dict.edge_index(edge), "edge " + edge.str()));
            fv.sparse_ids.push_back(require_index(dict.node_index(edge.src), "node " + edge.src.str()));
            fv.sparse_ids.push_back(require_index(dict.node_index(edge.dst), "node " + edge.dst.str()));
        }
    };
    for (const auto& e : sample.rewriting_edges) visit(e, EdgeLayer::Rewriting);
    for (const auto& e : sample.selecting_edges) visit(e, EdgeLayer::Selecting);
    std::sort(fv.sparse_ids.begin(), fv.sparse_ids.end());
    fv.sparse_ids.erase(std::unique(fv.sparse_ids.begin(), fv.sparse_ids.end()), fv.sparse_ids.end());
    fill_layer_block(fv.continuous, EdgeLayer::Rewriting, sums[0], options);
    fill_layer_block(fv.continuous, EdgeLayer::Selecting, sums[1], options);
    return fv;
}

std::vector<EncodedSample> encode(std::span<const TrainingSample> samples, const HierNetwork& net,
                                  const FeatureDictionary& dict, const FeatureOptions& options)
{
    std::vector<EncodedSample> out;
    out.reserve(samples.size());
    for (const auto& s : samples) {
        out.push_back({featurize(s, net, dict, options), static_cast<double>(s.label), s.weight});
    }
    return out;
}

}  // namespace adret::model

#include "adret/network.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include "adret/error.hpp"
#include "adret/io.hpp"
#include "json.hpp"

namespace adret::network {

using clicklog::ActionKind;
using clicklog::Catalog;
using clicklog::ImpressionRecord;
using clicklog::Session;
using nlohmann::json;

HierNetwork::HierNetwork(EdgeMap rewriting, EdgeMap selecting)
    : rewriting_(std::move(rewriting))
    , selecting_(std::move(selecting))
{
    auto absorb = [this](const EdgeMap& map, EdgeLayer expected, LayerTotals& totals) {
        for (const auto& [edge, stats] : map) {
            if (edge.layer() != expected) {
                throw IntegrityError("edge " + edge.str() + " does not belong to layer "
                                     + std::string(to_string(expected)));
            }
            if (stats.clicks > stats.presents) {
                throw IntegrityError("edge " + edge.str() + " has more clicks than presents");
            }
            totals.clicks += stats.clicks;
            totals.presents += stats.presents;
            nodes_.insert(edge.src);
            nodes_.insert(edge.dst);
        }
    };
    absorb(rewriting_, EdgeLayer::Rewriting, rewriting_totals_);
    absorb(selecting_, EdgeLayer::Selecting, selecting_totals_);

    // Map iteration is ordered by (src, dst), so forward lists come out sorted.
    for (const auto& [edge, stats] : rewriting_) signal_keys_[edge.src].push_back(edge.dst);
    for (const auto& [edge, stats] : selecting_) {
        key_ads_[edge.src].push_back(edge.dst);
        ad_keys_[edge.dst].push_back(edge.src);
    }
}

std::optional<EdgeStats> HierNetwork::stats(const Edge& edge) const
{
    const auto& map = edge.layer() == EdgeLayer::Selecting ? selecting_ : rewriting_;
    auto it = map.find(edge);
    if (it == map.end()) {
        return std::nullopt;
    }
    return it->second;
}

bool HierNetwork::contains(const Edge& edge) const { return stats(edge).has_value(); }

std::span<const NodeId> HierNetwork::lookup(const Adjacency& adj, NodeId node)
{
    auto it = adj.find(node);
    if (it == adj.end()) {
        return {};
    }
    return it->second;
}

std::span<const NodeId> HierNetwork::keys_of_signal(NodeId signal) const { return lookup(signal_keys_, signal); }
std::span<const NodeId> HierNetwork::ads_of_key(NodeId key) const { return lookup(key_ads_, key); }
std::span<const NodeId> HierNetwork::keys_of_ad(NodeId ad) const { return lookup(ad_keys_, ad); }

std::uint64_t HierNetwork::fingerprint() const
{
    std::ostringstream out;
    write_network(out, *this);
    return fingerprint64(out.str());
}

std::vector<NodeId> ad_keys(const ImpressionRecord& record, const Catalog& catalog)
{
    const auto& ad = catalog.ads.at(record.ad_id);
    std::vector<NodeId> keys{NodeId::key(KeyKind::Item, ad.item), NodeId::key(KeyKind::Shop, ad.shop),
                             NodeId::key(KeyKind::Brand, ad.brand)};
    if (auto q = record.query()) {
        keys.push_back(NodeId::key(KeyKind::Query, *q));
    }
    return keys;
}

HierNetwork count_edge_stats(std::span<const ImpressionRecord> log, const Catalog& catalog)
{
    std::unordered_map<Edge, EdgeStats, EdgeHash> rewriting;
    std::unordered_map<Edge, EdgeStats, EdgeHash> selecting;
    auto bump = [](EdgeStats& s, bool clicked) {
        ++s.presents;
        s.clicks += clicked ? 1 : 0;
    };
    for (const auto& rec : log) {
        const auto keys = ad_keys(rec, catalog);
        const auto ad = NodeId::ad(rec.ad_id);
        for (auto key : keys) {
            bump(selecting[{key, ad}], rec.clicked);
            for (const auto& signal : rec.signals) {
                bump(rewriting[{signal.node(), key}], rec.clicked);
            }
        }
    }
    return HierNetwork(EdgeMap(rewriting.begin(), rewriting.end()), EdgeMap(selecting.begin(), selecting.end()));
}

EdgeSet init_by_click_count(const HierNetwork& net, std::uint64_t threshold)
{
    EdgeSet out;
    for (auto layer : {EdgeLayer::Rewriting, EdgeLayer::Selecting}) {
        for (const auto& [edge, stats] : net.edges(layer)) {
            if (stats.clicks > threshold) {
                out.insert(out.end(), edge);
            }
        }
    }
    return out;
}

double modified_iv(const EdgeStats& stats, const LayerTotals& totals)
{
    if (totals.clicks == 0 || totals.presents == 0) {
        throw DomainError("modified_iv: layer totals must be positive");
    }
    if (stats.clicks == 0) {
        return 0.0;
    }
    if (stats.presents == 0) {
        throw DomainError("modified_iv: edge has clicks but no presents");
    }
    const double click_share = static_cast<double>(stats.clicks) / static_cast<double>(totals.clicks);
    const double present_share = static_cast<double>(stats.presents) / static_cast<double>(totals.presents);
    return click_share * std::log(click_share / present_share);
}

EdgeSet init_by_iv(const HierNetwork& net, const IvSelection& selection)
{
    if (!selection.min_iv && !selection.top_k) {
        throw ConfigError("init_by_iv: set min_iv, top_k or both");
    }
    struct Scored {
        double iv;
        std::uint64_t clicks;
        Edge edge;
    };
    const auto better = [](const Scored& a, const Scored& b) {
        if (a.iv != b.iv) return a.iv > b.iv;
        if (a.clicks != b.clicks) return a.clicks > b.clicks;
        return a.edge < b.edge;
    };
    EdgeSet out;
    auto take = [&](std::vector<Scored>& group) {
        if (selection.top_k && group.size() > *selection.top_k) {
            std::partial_sort(group.begin(), group.begin() + static_cast<std::ptrdiff_t>(*selection.top_k), group.end(),
                              better);
            group.resize(*selection.top_k);
        }
        for (const auto& s : group) out.insert(s.edge);
        group.clear();
    };

    for (auto layer : {EdgeLayer::Rewriting, EdgeLayer::Selecting}) {
        const auto totals = net.totals(layer);
        if (totals.clicks == 0 || totals.presents == 0) {
            continue;  // nothing clicked in this layer: every IV is undefined
        }
        std::vector<Scored> group;
        std::optional<NodeId> source;
        for (const auto& [edge, stats] : net.edges(layer)) {
            const double iv = stats.presents == 0 ? 0.0 : modified_iv(stats, totals);
            if (selection.min_iv && iv < *selection.min_iv) {
                continue;
            }
            if (selection.scope == IvScope::PerSource && source && *source != edge.src) {
                take(group);
            }
            source = edge.src;
            group.push_back({iv, stats.clicks, edge});
        }
        take(group);
    }
    return out;
}

SessionOccurrence::SessionOccurrence(std::span<const Session> sessions, const Catalog& catalog,
                                     OccurrenceWeighting weighting)
{
    session_nodes_.reserve(sessions.size());
    for (std::uint32_t s = 0; s < sessions.size(); ++s) {
        std::map<NodeId, double> counts;
        for (const auto& action : sessions[s].actions) {
            switch (action.kind) {
            case ActionKind::SubmitQuery:
                counts[NodeId::signal(SignalKind::Query, action.entity)] += 1;
                counts[NodeId::key(KeyKind::Query, action.entity)] += 1;
                break;
            case ActionKind::ClickItem: {
                const auto& item = catalog.items.at(action.entity);
                counts[NodeId::signal(SignalKind::RealTimeClickItem, item.id)] += 1;
                counts[NodeId::signal(SignalKind::LongTimeClickItem, item.id)] += 1;
                counts[NodeId::key(KeyKind::Item, item.id)] += 1;
                counts[NodeId::key(KeyKind::Shop, item.shop)] += 1;
                counts[NodeId::key(KeyKind::Brand, item.brand)] += 1;
                break;
            }
            case ActionKind::ClickAd:
                counts[NodeId::ad(action.entity)] += 1;
                break;
            }
        }
        std::vector<NodeId> nodes;
        nodes.reserve(counts.size());
        for (const auto& [node, count] : counts) {
            nodes.push_back(node);
            by_node_[node].push_back({s, weighting == OccurrenceWeighting::Binary ? 1.0 : count});
        }
        session_nodes_.push_back(std::move(nodes));
    }
}

std::span<const SessionOccurrence::Entry> SessionOccurrence::occurrences(NodeId node) const
{
    auto it = by_node_.find(node);
    if (it == by_node_.end()) {
        return {};
    }
    return it->second;
}

double session_cosine(NodeId a, NodeId b, const SessionOccurrence& occurrence)
{
    const auto va = occurrence.occurrences(a);
    const auto vb = occurrence.occurrences(b);
    if (va.empty() || vb.empty()) {
        throw DomainError("session_cosine: node " + (va.empty() ? a : b).str() + " occurs in no session");
    }
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (const auto& e : va) na += e.weight * e.weight;
    for (const auto& e : vb) nb += e.weight * e.weight;
    std::size_t i = 0, j = 0;
    while (i < va.size() && j < vb.size()) {
        if (va[i].session < vb[j].session) {
            ++i;
        } else if (vb[j].session < va[i].session) {
            ++j;
        } else {
            dot += va[i++].weight * vb[j++].weight;
        }
    }
    return std::clamp(dot / std::sqrt(na * nb), 0.0, 1.0);
}

EdgeSet init_by_session_relevance(const SessionOccurrence& occurrence, double min_cos)
{
    if (!(min_cos > 0.0 && min_cos <= 1.0)) {
        throw ConfigError("min_cos must lie in (0,1]");
    }
    std::unordered_set<Edge, EdgeHash> candidates;
    for (std::size_t s = 0; s < occurrence.session_count(); ++s) {
        const auto nodes = occurrence.nodes_of_session(s);
        // nodes are sorted by layer: signals, then keys, then ads
        const auto first_key = std::find_if(nodes.begin(), nodes.end(), [](NodeId n) { return !n.is_signal(); });
        const auto first_ad = std::find_if(first_key, nodes.end(), [](NodeId n) { return n.is_ad(); });
        for (auto k = first_key; k != first_ad; ++k) {
            for (auto sig = nodes.begin(); sig != first_key; ++sig) candidates.insert({*sig, *k});
            for (auto ad = first_ad; ad != nodes.end(); ++ad) candidates.insert({*k, *ad});
        }
    }
    EdgeSet out;
    for (const auto& edge : candidates) {
        if (session_cosine(edge.src, edge.dst, occurrence) >= min_cos) {
            out.insert(edge);
        }
    }
    return out;
}

MergeResult merge_initializations(const EdgeSet& by_clicks, const EdgeSet& by_iv, const EdgeSet& by_session,
                                  const HierNetwork& counts, std::size_t max_key_fanout)
{
    EdgeSet all = by_clicks;
    all.insert(by_iv.begin(), by_iv.end());
    all.insert(by_session.begin(), by_session.end());

    std::map<NodeId, std::size_t> fanout;
    for (const auto& edge : all) {
        if (edge.layer() == EdgeLayer::Selecting) {
            ++fanout[edge.src];
        }
    }
    MergeResult result;
    std::set<NodeId> dropped;
    for (const auto& [key, n] : fanout) {
        if (n > max_key_fanout) {
            dropped.insert(key);
            result.dropped_keys.push_back(key);
        }
    }

    EdgeMap rewriting, selecting;
    for (const auto& edge : all) {
        const auto layer = edge.layer();
        if (!layer) {
            throw IntegrityError("edge " + edge.str() + " is neither signal->key nor key->ad");
        }
        const NodeId key = *layer == EdgeLayer::Rewriting ? edge.dst : edge.src;
        if (dropped.contains(key)) {
            continue;
        }
        const auto stats = counts.stats(edge).value_or(EdgeStats{});
        (*layer == EdgeLayer::Rewriting ? rewriting : selecting).emplace_hint(
            (*layer == EdgeLayer::Rewriting ? rewriting : selecting).end(), edge, stats);
    }
    result.network = HierNetwork(std::move(rewriting), std::move(selecting));
    return result;
}

MergeResult initialize_network(std::span<const ImpressionRecord> log, std::span<const Session> sessions,
                               const Catalog& catalog, const InitConfig& config, InitReport* report)
{
    if (log.empty()) {
        throw DataError("initialize_network: empty log");
    }
    const auto counts = count_edge_stats(log, catalog);
    const auto by_clicks = init_by_click_count(counts, config.click_threshold);
    const auto by_iv = init_by_iv(counts, config.iv);
    EdgeSet by_session;
    if (!sessions.empty()) {
        const SessionOccurrence occurrence(sessions, catalog, config.weighting);
        by_session = init_by_session_relevance(occurrence, config.min_cos);
    }
    if (report) {
        report->candidate_edges = counts.edge_count();
        report->by_clicks = by_clicks.size();
        report->by_iv = by_iv.size();
        report->by_session = by_session.size();
    }
    return merge_initializations(by_clicks, by_iv, by_session, counts, config.max_key_fanout);
}

void write_network(std::ostream& out, const HierNetwork& net)
{
    for (auto node : net.nodes()) {
        out << json{{"type", "node"}, {"id", node.str()}}.dump() << '\n';
    }
    for (auto layer : {EdgeLayer::Rewriting, EdgeLayer::Selecting}) {
        for (const auto& [edge, stats] : net.edges(layer)) {
            out << json{{"type", "edge"},
                        {"src", edge.src.str()},
                        {"dst", edge.dst.str()},
                        {"layer_pair", to_string(layer)},
                        {"clicks", stats.clicks},
                        {"presents", stats.presents}}
                       .dump()
                << '\n';
        }
    }
}

void write_network(const std::filesystem::path& path, const HierNetwork& net)
{
    write_file_atomic(path, [&](std::ostream& out) { write_network(out, net); });
}

HierNetwork read_network(std::istream& in)
{
    std::set<NodeId> declared;
    EdgeMap rewriting, selecting;
    std::string line;
    std::size_t n = 0;
    auto node_field = [&](const json& j, const char* name) {
        auto node = NodeId::parse(j.at(name).get<std::string>());
        if (!node) {
            throw ParseError(n, std::string("bad node id in '") + name + "'");
        }
        return *node;
    };
    while (std::getline(in, line)) {
        ++n;
        if (line.empty()) continue;
        try {
            const json j = json::parse(line);
            const auto type = j.at("type").get<std::string>();
            if (type == "node") {
                declared.insert(node_field(j, "id"));
            } else if (type == "edge") {
                const Edge edge{node_field(j, "src"), node_field(j, "dst")};
                const auto layer = edge.layer();
                if (!layer || to_string(*layer) != j.at("layer_pair").get<std::string>()) {
                    throw ParseError(n, "edge " + edge.str() + ": layer_pair does not match its endpoints");
                }
                if (!declared.contains(edge.src) || !declared.contains(edge.dst)) {
                    throw ParseError(n, "edge " + edge.str() + " references an undeclared node");
                }
                const EdgeStats stats{j.at("clicks").get<std::uint64_t>(), j.at("presents").get<std::uint64_t>()};
                auto& map = *layer == EdgeLayer::Rewriting ? rewriting : selecting;
                if (!map.emplace(edge, stats).second) {
                    throw ParseError(n, "duplicate edge " + edge.str());
                }
            } else {
                throw ParseError(n, "unknown record type '" + type + "'");
            }
        } catch (const json::exception& e) {
            throw ParseError(n, e.what());
        }
    }
    return HierNetwork(std::move(rewriting), std::move(selecting));
}

HierNetwork read_network(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) {
        throw Error("cannot open " + path.string());
    }
    return read_network(in);
}

}  // namespace adret::network

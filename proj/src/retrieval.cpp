#include "adret/retrieval.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <tuple>

#include "adret/error.hpp"
#include "json.hpp"

namespace adret::retrieval {

using Hits = std::span<const Activation::AdHit>;

void validate(const RetrievalRequest& request, const RetrievalConfig& config)
{
    if (request.n < 1 || request.n > config.max_results) {
        throw DomainError("n must lie in [1, " + std::to_string(config.max_results) + "]");
    }
    if (request.signals.empty()) {
        throw DomainError("request has no signals");
    }
    if (request.signals.size() > config.max_signals) {
        throw DomainError("request has more than " + std::to_string(config.max_signals) + " signals");
    }
}

Activation activate(std::span<const SignalRef> signals, const InvertedIndex& rewriting, const InvertedIndex& selecting,
                    RetrievalStats* stats)
{
    if (rewriting.kind() != index::IndexKind::Rewriting || selecting.kind() != index::IndexKind::Selecting) {
        throw IntegrityError("retrieval needs a rewriting and an ad-selecting index");
    }
    RetrievalStats local;
    auto& st = stats ? *stats : local;

    std::vector<NodeId> nodes;
    nodes.reserve(signals.size());
    for (const auto& s : signals) nodes.push_back(s.node());
    std::sort(nodes.begin(), nodes.end());
    nodes.erase(std::unique(nodes.begin(), nodes.end()), nodes.end());

    Activation act;
    std::map<NodeId, std::uint32_t> key_slot;
    for (NodeId signal : nodes) {
        ++st.index_lookups;
        const auto* list = rewriting.find(signal);
        if (!list) {
            ++st.skipped_signals;
            continue;
        }
        for (const auto& e : list->entries) key_slot.emplace(e.term, 0);
    }
    act.keys.reserve(key_slot.size());
    for (auto& [key, slot] : key_slot) {
        slot = static_cast<std::uint32_t>(act.keys.size());
        act.keys.push_back({key, {}});
    }
    for (NodeId signal : nodes) {
        const auto* list = rewriting.find(signal);
        if (!list) continue;
        for (const auto& e : list->entries) act.keys[key_slot[e.term]].rewrites.push_back({signal, &e});
    }

    for (std::uint32_t k = 0; k < act.keys.size(); ++k) {
        ++st.index_lookups;
        const auto* list = selecting.find(act.keys[k].key);
        if (!list) continue;
        for (const auto& e : list->entries) {
            ++st.candidates_examined;
            act.ads.push_back({e.term, k, &e});
        }
    }
    std::sort(act.ads.begin(), act.ads.end(),
              [](const auto& a, const auto& b) { return std::tie(a.ad, a.key) < std::tie(b.ad, b.key); });
    return act;
}

std::vector<RetrievalResult> rank(const Activation& activation, std::size_t n, const AdScorer& scorer,
                                  const pricing::Pricer* pricer, std::optional<double> min_score)
{
    std::vector<RetrievalResult> out;
    const auto& ads = activation.ads;
    for (std::size_t i = 0; i < ads.size();) {
        std::size_t j = i;
        while (j < ads.size() && ads[j].ad == ads[i].ad) ++j;
        const Hits hits(ads.data() + i, j - i);
        const double score = scorer(hits, activation);
        if (!min_score || score >= *min_score) {
            out.push_back({ads[i].ad.entity(), score, {}, 0.0});
        }
        i = j;
    }
    auto order = [](const RetrievalResult& a, const RetrievalResult& b) {
        return a.score != b.score ? a.score > b.score : a.ad_id < b.ad_id;
    };
    if (out.size() > n) {
        std::partial_sort(out.begin(), out.begin() + static_cast<std::ptrdiff_t>(n), out.end(), order);
        out.resize(n);
    } else {
        std::sort(out.begin(), out.end(), order);
    }
    for (auto& r : out) {
        const NodeId ad = NodeId::ad(r.ad_id);
        auto lo = std::lower_bound(ads.begin(), ads.end(), ad, [](const auto& h, NodeId a) { return h.ad < a; });
        for (; lo != ads.end() && lo->ad == ad; ++lo) {
            const auto& key = activation.keys[lo->key];
            for (const auto& rw : key.rewrites) r.paths.push_back({rw.signal, key.key});
        }
        r.ocpc_price = pricer ? pricer->price(r.ad_id) : 0.0;
    }
    return out;
}

model::FeatureVector ad_features(Hits hits, const Activation& activation, const model::LrModel& model)
{
    const auto& dict = model.dictionary();
    const auto& options = model.features();
    auto node_id = [&](NodeId node) {
        auto id = dict.node_index(node);
        if (!id) {
            throw IntegrityError("node " + node.str() + " is not in the model's feature dictionary");
        }
        return *id;
    };
    auto edge_id = [](const PostingEntry& e) {
        if (e.feature_id == index::kNoFeature) {
            throw IntegrityError("index entry without a feature id");
        }
        return e.feature_id;
    };

    model::FeatureVector fv;
    network::EdgeStats rw_sum, sel_sum;
    if (options.sparse && !hits.empty()) fv.sparse_ids.push_back(node_id(hits.front().ad));
    // Keys are distinct within an ad and each key's rewrites have distinct
    // signals, so every edge below is visited once.
    for (const auto& h : hits) {
        const auto& key = activation.keys[h.key];
        sel_sum.clicks += h.entry->stats.clicks;
        sel_sum.presents += h.entry->stats.presents;
        if (options.sparse) {
            fv.sparse_ids.push_back(edge_id(*h.entry));
            fv.sparse_ids.push_back(node_id(key.key));
        }
        for (const auto& rw : key.rewrites) {
            rw_sum.clicks += rw.entry->stats.clicks;
            rw_sum.presents += rw.entry->stats.presents;
            if (options.sparse) {
                fv.sparse_ids.push_back(edge_id(*rw.entry));
                fv.sparse_ids.push_back(node_id(rw.signal));
            }
        }
    }
    std::sort(fv.sparse_ids.begin(), fv.sparse_ids.end());
    fv.sparse_ids.erase(std::unique(fv.sparse_ids.begin(), fv.sparse_ids.end()), fv.sparse_ids.end());
    model::fill_layer_block(fv.continuous, EdgeLayer::Rewriting, rw_sum, options);
    model::fill_layer_block(fv.continuous, EdgeLayer::Selecting, sel_sum, options);
    return fv;
}

std::vector<RetrievalResult> retrieve(const RetrievalRequest& request, const InvertedIndex& rewriting,
                                      const InvertedIndex& selecting, const model::LrModel& model,
                                      const pricing::Pricer* pricer, const RetrievalConfig& config,
                                      RetrievalStats* stats)
{
    validate(request, config);
    const auto act = activate(request.signals, rewriting, selecting, stats);
    return rank(
        act, request.n, [&](Hits hits, const Activation& a) { return model.score(ad_features(hits, a, model)); }, pricer,
        config.min_score);
}

std::vector<RetrievalResult> Snapshot::retrieve(const RetrievalRequest& request, RetrievalStats* stats) const
{
    return retrieval::retrieve(request, *rewriting, *selecting, *model, pricer.get(), config, stats);
}

std::vector<SignalRef> extract_signals(const RawRequest& raw, std::size_t max_signals)
{
    std::vector<SignalRef> out;
    std::set<SignalRef> seen;
    auto push = [&](SignalRef s) {
        if (out.size() < max_signals && seen.insert(s).second) out.push_back(s);
    };
    if (raw.query) push({SignalKind::Query, *raw.query});

    struct Click {
        std::int64_t ts;
        int source;  // 0 session, 1 history
        EntityId item;
    };
    std::vector<Click> clicks;
    for (const auto& c : raw.session_clicks) clicks.push_back({c.ts, 0, c.item});
    for (const auto& c : raw.history_clicks) clicks.push_back({c.ts, 1, c.item});
    std::stable_sort(clicks.begin(), clicks.end(), [](const Click& a, const Click& b) {
        return a.ts != b.ts ? a.ts > b.ts : a.source < b.source;
    });
    for (const auto& c : clicks) {
        push({c.source == 0 ? SignalKind::RealTimeClickItem : SignalKind::LongTimeClickItem, c.item});
    }
    for (auto seg : raw.profile_segments) push({SignalKind::UserProfile, seg});
    return out;
}

RawRequest parse_raw_request(std::string_view json_text)
{
    using nlohmann::json;
    RawRequest raw;
    std::string field;
    try {
        const json j = json::parse(json_text);
        if (!j.is_object()) {
            throw ParseError(0, "request must be a JSON object");
        }
        auto clicks = [&](const json& arr, std::vector<TimedClick>& out) {
            for (const auto& c : arr) {
                out.push_back({c.at("item").get<EntityId>(), c.at("ts").get<std::int64_t>()});
            }
        };
        for (const auto& [k, v] : j.items()) {
            field = k;
            if (k == "query") {
                raw.query = v.get<EntityId>();
            } else if (k == "session_clicks") {
                clicks(v, raw.session_clicks);
            } else if (k == "history_clicks") {
                clicks(v, raw.history_clicks);
            } else if (k == "profile") {
                raw.profile_segments = v.get<std::vector<EntityId>>();
            } else {
                throw ParseError(0, "unknown field '" + k + "'");
            }
        }
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(0, (field.empty() ? std::string() : field + ": ") + e.what());
    }
    return raw;
}

}  // namespace adret::retrieval

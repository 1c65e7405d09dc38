#pragma once

// Shared fixtures for the unit and acceptance tests.

#include <algorithm>
#include <filesystem>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "adret/model.hpp"
#include "adret/network.hpp"
#include "adret/retrieval.hpp"

namespace testing {

using namespace adret;

class TempDir {
public:
    TempDir()
    {
        std::random_device rd;
        path_ = std::filesystem::temp_directory_path() / ("adret-test-" + std::to_string(rd()) + std::to_string(rd()));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() { std::filesystem::remove_all(path_); }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

inline NodeId node(const std::string& text) { return *NodeId::parse(text); }
inline Edge edge(const std::string& src, const std::string& dst) { return {node(src), node(dst)}; }

struct EdgeSpec {
    std::string src, dst;
    std::uint64_t clicks = 1, presents = 10;
};

inline network::HierNetwork make_net(const std::vector<EdgeSpec>& specs)
{
    network::EdgeMap rw, sel;
    for (const auto& s : specs) {
        const auto e = edge(s.src, s.dst);
        (e.src.is_signal() ? rw : sel)[e] = {s.clicks, s.presents};
    }
    return network::HierNetwork(std::move(rw), std::move(sel));
}

/// Random signal/key/ad network with at most `max_edges` edges.
inline network::HierNetwork random_network(std::mt19937_64& rng, std::size_t max_edges, std::size_t signals = 12,
                                           std::size_t keys = 20, std::size_t ads = 30)
{
    std::uniform_int_distribution<std::uint64_t> s(0, signals - 1), k(0, keys - 1), a(0, ads - 1), kind(0, 3);
    std::uniform_int_distribution<std::uint64_t> presents(0, 200);
    auto sig = [&] { return NodeId::signal(static_cast<SignalKind>(kind(rng)), s(rng)); };
    auto key = [&] { return NodeId::key(static_cast<KeyKind>(kind(rng)), k(rng)); };
    network::EdgeMap rw, sel;
    const std::size_t n_rw = max_edges / 2, n_sel = max_edges - n_rw;
    auto stats = [&] {
        const auto p = presents(rng);
        return network::EdgeStats{p == 0 ? 0 : std::uniform_int_distribution<std::uint64_t>(0, p)(rng), p};
    };
    for (std::size_t i = 0; i < n_rw; ++i) rw[{sig(), key()}] = stats();
    for (std::size_t i = 0; i < n_sel; ++i) sel[{key(), NodeId::ad(a(rng))}] = stats();
    return network::HierNetwork(std::move(rw), std::move(sel));
}

/// Model over the network's dictionary with random parameters.
inline model::LrModel random_model(const network::HierNetwork& net, std::mt19937_64& rng,
                                   model::FeatureOptions features = {})
{
    model::LrModel m(model::FeatureDictionary::build(net), model::Objective::Ctr, {}, features);
    std::normal_distribution<double> w(0.0, 0.5);
    std::uniform_real_distribution<double> pos(0.5, 50.0);
    for (auto& x : m.weights) x = w(rng);
    for (std::size_t j = 0; j < model::kContinuousDim; ++j) {
        m.continuous_weights[j] = w(rng);
        m.continuous_mean[j] = pos(rng);
        m.continuous_scale[j] = pos(rng);
    }
    m.bias = w(rng);
    return m;
}

struct Scored {
    EntityId ad;
    double score;
};

/// Full-graph path enumeration: every signal -> key -> ad path, edges
/// collected as sets per ad, scored through `featurize`.
inline std::vector<Scored> brute_force_retrieve(const network::HierNetwork& net, const model::LrModel& model,
                                                const std::vector<clicklog::SignalRef>& signals)
{
    std::map<NodeId, std::pair<std::set<Edge>, std::set<Edge>>> per_ad;
    std::set<NodeId> distinct;
    for (const auto& s : signals) distinct.insert(s.node());
    for (const auto& [e, st] : net.rewriting()) {
        if (!distinct.count(e.src)) continue;
        for (const auto& [e2, st2] : net.selecting()) {
            if (e2.src != e.dst) continue;
            per_ad[e2.dst].first.insert(e);
            per_ad[e2.dst].second.insert(e2);
        }
    }
    std::vector<Scored> out;
    for (const auto& [ad, edges] : per_ad) {
        model::TrainingSample sample;
        sample.ad = ad;
        sample.rewriting_edges.assign(edges.first.begin(), edges.first.end());
        sample.selecting_edges.assign(edges.second.begin(), edges.second.end());
        out.push_back({ad.entity(), model.score(model::featurize(sample, net, model.dictionary(), model.features()))});
    }
    std::sort(out.begin(), out.end(), [](const Scored& a, const Scored& b) {
        return a.score != b.score ? a.score > b.score : a.ad < b.ad;
    });
    return out;
}

/// Signals of the network drawn at random, possibly including unknown ones.
inline std::vector<clicklog::SignalRef> random_signals(std::mt19937_64& rng, std::size_t n, std::size_t signals = 12)
{
    std::uniform_int_distribution<std::uint64_t> s(0, signals), kind(0, 3);
    std::vector<clicklog::SignalRef> out;
    for (std::size_t i = 0; i < n; ++i) out.push_back({static_cast<SignalKind>(kind(rng)), s(rng)});
    return out;
}

}  // namespace testing

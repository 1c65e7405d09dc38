#include <fstream>
#include <random>
#include <sstream>

#include "adret/error.hpp"
#include "adret/index.hpp"
#include "doctest.h"
#include "support.hpp"

using namespace adret;
using namespace adret::index;
using testing::edge;
using testing::node;

namespace {

network::HierNetwork fan_out_net(std::size_t keys_per_signal, std::size_t ads_per_key)
{
    network::EdgeMap rw, sel;
    for (EntityId k = 0; k < keys_per_signal; ++k) {
        rw[{NodeId::signal(SignalKind::Query, 1), NodeId::key(KeyKind::Item, k)}] = {k % 7, 10 + k};
    }
    for (EntityId a = 0; a < ads_per_key; ++a) {
        sel[{NodeId::key(KeyKind::Item, 0), NodeId::ad(a)}] = {a % 5, 20 + a % 13};
    }
    return network::HierNetwork(std::move(rw), std::move(sel));
}

void check_index_invariants(const InvertedIndex& idx)
{
    for (const auto* list : idx.sorted_lists()) {
        CHECK(list->entries.size() <= idx.cap());
        for (std::size_t i = 1; i < list->entries.size(); ++i) {
            CHECK(ranks_before(list->entries[i - 1], list->entries[i]));
        }
    }
}

InvertedIndex big_index(std::size_t triggers)
{
    std::mt19937_64 rng(5);
    std::uniform_int_distribution<int> len(1, 6);
    std::normal_distribution<double> w(0.0, 1.0);
    InvertedIndex idx(IndexKind::Selecting, 8, {11, 22, 0});
    for (EntityId t = 0; t < triggers; ++t) {
        PostingList list{NodeId::key(KeyKind::Query, t), {}};
        const int n = len(rng);
        for (int i = 0; i < n; ++i) {
            const std::uint64_t presents = rng() % 100;
            list.entries.push_back({NodeId::ad(t * 10 + static_cast<EntityId>(i)), w(rng),
                                    static_cast<std::uint32_t>(rng() % 1000), {presents / 2, presents}});
        }
        std::sort(list.entries.begin(), list.entries.end(), ranks_before);
        idx.add(std::move(list));
    }
    return idx;
}

}  // namespace

TEST_CASE("caps bound every posting list")
{
    std::mt19937_64 rng(1);
    const auto net = fan_out_net(150, 500);
    const auto model = testing::random_model(net, rng);

    const auto rw = build_rewriting_index(net, model);
    REQUIRE(rw.find(node("S:query:1")));
    CHECK(rw.find(node("S:query:1"))->entries.size() == 100);
    CHECK(rw.cap() == 100);

    const auto sel = build_selecting_index(net, model);
    REQUIRE(sel.find(node("K:item:0")));
    CHECK(sel.find(node("K:item:0"))->entries.size() == 300);
    CHECK(sel.cap() == 300);
    check_index_invariants(rw);
    check_index_invariants(sel);

    const auto small = fan_out_net(3, 1);
    const auto small_rw = build_rewriting_index(small, testing::random_model(small, rng));
    CHECK(small_rw.find(node("S:query:1"))->entries.size() == 3);

    CHECK_THROWS_AS(build_rewriting_index(net, model, 0), ConfigError);
}

TEST_CASE("equal weights order by term id")
{
    const auto net = testing::make_net(
        {{"S:query:1", "K:item:9"}, {"S:query:1", "K:item:2"}, {"S:query:1", "K:query:4"}, {"K:item:2", "A:1"}});
    const auto idx = build_index(net, IndexKind::Rewriting, 2, [](const Edge&, const EdgeStats&) { return 1.0; },
                                 nullptr);
    const auto& entries = idx.find(node("S:query:1"))->entries;
    REQUIRE(entries.size() == 2);
    CHECK(entries[0].term < entries[1].term);
    CHECK(entries[0].term == std::min({node("K:item:9"), node("K:item:2"), node("K:query:4")}));
    CHECK(entries[0].feature_id == kNoFeature);
}

TEST_CASE("entries carry the model's edge weight, feature id and raw stats")
{
    std::mt19937_64 rng(2);
    const auto net = testing::make_net({{"S:query:1", "K:item:2", 3, 40}, {"K:item:2", "A:1", 2, 9}});
    const auto model = testing::random_model(net, rng);
    const auto rw = build_rewriting_index(net, model);
    const auto& e = rw.find(node("S:query:1"))->entries.at(0);
    CHECK(e.weight == model.edge_weight(edge("S:query:1", "K:item:2"), {3, 40}));
    CHECK(e.feature_id == *model.dictionary().edge_index(edge("S:query:1", "K:item:2")));
    CHECK(e.stats == EdgeStats{3, 40});
    CHECK(rw.meta().model_id == model_id(model));
    CHECK(rw.meta().network_id == net.fingerprint());
}

TEST_CASE("a key dropped by the fanout guard has no posting list")
{
    network::EdgeMap counts_rw, counts_sel;
    network::EdgeSet picked;
    for (EntityId a = 0; a < 4; ++a) {
        const Edge e{NodeId::key(KeyKind::Brand, 1), NodeId::ad(a)};
        counts_sel[e] = {1, 5};
        picked.insert(e);
    }
    const Edge kept{NodeId::key(KeyKind::Item, 2), NodeId::ad(0)};
    const Edge into_brand{NodeId::signal(SignalKind::Query, 3), NodeId::key(KeyKind::Brand, 1)};
    const Edge into_item{NodeId::signal(SignalKind::Query, 3), NodeId::key(KeyKind::Item, 2)};
    counts_sel[kept] = {1, 5};
    counts_rw[into_brand] = {1, 5};
    counts_rw[into_item] = {1, 5};
    picked.insert(kept);
    picked.insert(into_brand);
    picked.insert(into_item);
    const network::HierNetwork counts(std::move(counts_rw), std::move(counts_sel));
    const auto merged = network::merge_initializations(picked, {}, {}, counts, 3);
    REQUIRE(merged.dropped_keys == std::vector{NodeId::key(KeyKind::Brand, 1)});

    std::mt19937_64 rng(3);
    const auto model = testing::random_model(merged.network, rng);
    const auto sel = build_selecting_index(merged.network, model);
    const auto rw = build_rewriting_index(merged.network, model);
    CHECK(sel.find(NodeId::key(KeyKind::Brand, 1)) == nullptr);
    CHECK(sel.find(NodeId::key(KeyKind::Item, 2)) != nullptr);
    for (const auto& e : rw.find(NodeId::signal(SignalKind::Query, 3))->entries) {
        CHECK(e.term != NodeId::key(KeyKind::Brand, 1));
    }
}

TEST_CASE("posting lists equal the brute-force top-k")
{
    std::mt19937_64 rng(4);
    for (int trial = 0; trial < 40; ++trial) {
        const auto net = testing::random_network(rng, 400, 6, 8, 40);
        const auto model = testing::random_model(net, rng);
        const std::size_t cap = 1 + rng() % 12;
        for (auto kind : {IndexKind::Rewriting, IndexKind::Selecting}) {
            const auto layer = kind == IndexKind::Rewriting ? EdgeLayer::Rewriting : EdgeLayer::Selecting;
            const auto idx = kind == IndexKind::Rewriting ? build_rewriting_index(net, model, cap)
                                                          : build_selecting_index(net, model, cap);
            std::map<NodeId, std::vector<std::pair<double, NodeId>>> expect;
            for (const auto& [e, st] : net.edges(layer)) expect[e.src].push_back({model.edge_weight(e, st), e.dst});
            CHECK(idx.size() == expect.size());
            for (auto& [trigger, cands] : expect) {
                std::sort(cands.begin(), cands.end(), [](const auto& a, const auto& b) {
                    return a.first != b.first ? a.first > b.first : a.second < b.second;
                });
                cands.resize(std::min(cands.size(), cap));
                const auto* list = idx.find(trigger);
                REQUIRE(list);
                REQUIRE(list->entries.size() == cands.size());
                for (std::size_t i = 0; i < cands.size(); ++i) {
                    CHECK(list->entries[i].term == cands[i].second);
                    CHECK(list->entries[i].weight == cands[i].first);
                }
            }
            check_index_invariants(idx);
        }
    }
}

TEST_CASE("a model from another network is rejected")
{
    std::mt19937_64 rng(6);
    const auto net = testing::make_net({{"S:query:1", "K:item:2"}, {"K:item:2", "A:1"}});
    const auto other = testing::make_net({{"S:query:1", "K:item:2"}, {"K:item:2", "A:2"}});
    const auto model = testing::random_model(other, rng);
    CHECK_THROWS_AS(build_rewriting_index(net, model), IntegrityError);
    CHECK_THROWS_AS(build_selecting_index(net, model), IntegrityError);
}

TEST_CASE("add rejects invalid lists")
{
    InvertedIndex idx(IndexKind::Rewriting, 2, {});
    CHECK_THROWS_AS(idx.add({node("K:item:1"), {{node("K:item:2"), 1.0}}}), IntegrityError);
    CHECK_THROWS_AS(idx.add({node("S:query:1"), {{node("A:2"), 1.0}}}), IntegrityError);
    CHECK_THROWS_AS(idx.add({node("S:query:1"), {{node("K:item:2"), 0.0}, {node("K:item:3"), 1.0}}}), IntegrityError);
    CHECK_THROWS_AS(idx.add({node("S:query:1"),
                             {{node("K:item:2"), 3.0}, {node("K:item:3"), 2.0}, {node("K:item:4"), 1.0}}}),
                    IntegrityError);
    CHECK_THROWS_AS(idx.add({node("S:query:1"), {{node("K:item:2"), 1.0, 0, {5, 4}}}}), IntegrityError);
    idx.add({node("S:query:1"), {{node("K:item:2"), 1.0}}});
    CHECK_THROWS_AS(idx.add({node("S:query:1"), {}}), IntegrityError);
    CHECK_THROWS_AS(InvertedIndex(IndexKind::Rewriting, 0, {}), ConfigError);
}

TEST_CASE("serialization round trips byte-identically")
{
    const auto idx = big_index(10000);
    const auto bytes = serialize_index(idx);
    const auto back = deserialize_index(bytes);
    CHECK(back == idx);
    CHECK(back.meta() == idx.meta());
    CHECK(serialize_index(back) == bytes);

    testing::TempDir dir;
    serialize_index(idx, dir / "sel.idx");
    CHECK(load_index(dir / "sel.idx") == idx);
}

TEST_CASE("damaged files fail to load")
{
    const auto idx = big_index(50);
    const auto bytes = serialize_index(idx);

    SUBCASE("truncated mid-list")
    {
        for (std::size_t cut : {bytes.size() - 1, bytes.size() / 2, std::size_t{60}, std::size_t{3}}) {
            CHECK_THROWS_AS(deserialize_index(bytes.substr(0, cut)), LoadError);
        }
        try {
            deserialize_index(bytes.substr(0, bytes.size() / 2));
        } catch (const LoadError& e) {
            CHECK(std::string(e.what()).find("K:query:") != std::string::npos);
        }
    }
    SUBCASE("wrong magic")
    {
        auto bad = bytes;
        bad[0] = 'X';
        CHECK_THROWS_AS(deserialize_index(bad), VersionError);
    }
    SUBCASE("wrong version")
    {
        auto bad = bytes;
        bad[8] = 9;
        CHECK_THROWS_AS(deserialize_index(bad), VersionError);
    }
    SUBCASE("trailing bytes")
    {
        CHECK_THROWS_AS(deserialize_index(bytes + "x"), LoadError);
    }
    SUBCASE("unsorted list names its trigger")
    {
        InvertedIndex two(IndexKind::Rewriting, 5, {});
        two.add({node("S:query:7"), {{node("K:item:1"), 2.0}, {node("K:item:2"), 1.0}}});
        auto raw = serialize_index(two);
        // header is 8 + 4 + 4 + 5 * 8 bytes; then trigger (8) and count (4); the
        // first entry's weight sits 8 bytes into it
        const std::size_t first_weight = 56 + 12 + 8;
        const std::size_t second_weight = first_weight + 36;
        for (int i = 0; i < 8; ++i) std::swap(raw[first_weight + i], raw[second_weight + i]);
        try {
            deserialize_index(raw);
            FAIL("expected a load error");
        } catch (const LoadError& e) {
            CHECK(std::string(e.what()).find("S:query:7") != std::string::npos);
        }
    }
}

TEST_CASE("dump writes one line per entry")
{
    InvertedIndex idx(IndexKind::Rewriting, 5, {});
    idx.add({node("S:query:7"), {{node("K:item:1"), 0.5, 3, {1, 4}}, {node("K:item:2"), 0.25}}});
    std::ostringstream out;
    dump_index(out, idx);
    const std::string text = out.str();
    CHECK(text.find("S:query:7\t0\tK:item:1\t0.5\t3\t1\t4\n") != std::string::npos);
    CHECK(text.find("S:query:7\t1\tK:item:2\t0.25\t-\t0\t0\n") != std::string::npos);
    CHECK(std::count(text.begin(), text.end(), '\n') == 3);
}

#include "adret/index.hpp"

#include <algorithm>
#include <bit>
#include <cstdio>
#include <cstring>
#include <ostream>
#include <sstream>

#include "adret/error.hpp"
#include "adret/io.hpp"

namespace adret::index {

namespace {

constexpr char kMagic[8] = {'A', 'D', 'R', 'E', 'T', 'I', 'D', 'X'};
constexpr std::uint32_t kVersion = 1;

Layer trigger_layer(IndexKind kind) { return kind == IndexKind::Rewriting ? Layer::Signal : Layer::Key; }
Layer term_layer(IndexKind kind) { return kind == IndexKind::Rewriting ? Layer::Key : Layer::Ad; }
EdgeLayer edge_layer(IndexKind kind) { return kind == IndexKind::Rewriting ? EdgeLayer::Rewriting : EdgeLayer::Selecting; }

void put_u32(std::string& out, std::uint32_t v)
{
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, std::uint64_t v)
{
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

class Reader {
public:
    explicit Reader(std::string_view bytes) : bytes_(bytes) {}

    bool has(std::size_t n) const noexcept { return bytes_.size() - at_ >= n; }
    bool done() const noexcept { return at_ == bytes_.size(); }

    std::uint32_t u32() { return static_cast<std::uint32_t>(take(4)); }
    std::uint64_t u64() { return take(8); }
    std::string_view raw(std::size_t n)
    {
        auto s = bytes_.substr(at_, n);
        at_ += n;
        return s;
    }

private:
    std::uint64_t take(int n)
    {
        std::uint64_t v = 0;
        for (int i = 0; i < n; ++i) {
            v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[at_ + i])) << (8 * i);
        }
        at_ += n;
        return v;
    }

    std::string_view bytes_;
    std::size_t at_ = 0;
};

}  // namespace

std::uint64_t model_id(const model::LrModel& model)
{
    std::ostringstream out;
    model::write_model(out, model);
    return fingerprint64(out.str());
}

std::string_view to_string(IndexKind kind) noexcept { return kind == IndexKind::Rewriting ? "rewriting" : "selecting"; }

bool ranks_before(const PostingEntry& a, const PostingEntry& b) noexcept
{
    if (a.weight != b.weight) return a.weight > b.weight;
    return a.term < b.term;
}

InvertedIndex::InvertedIndex(IndexKind kind, std::size_t cap, BuildMeta meta)
    : kind_(kind)
    , cap_(cap)
    , meta_(meta)
{
    if (cap == 0) {
        throw ConfigError("index cap must be at least 1");
    }
}

void InvertedIndex::add(PostingList list)
{
    const auto& t = list.trigger;
    if (t.layer() != trigger_layer(kind_)) {
        throw IntegrityError(std::string(to_string(kind_)) + " index: trigger " + t.str() + " has the wrong layer");
    }
    if (position_.count(t) != 0) {
        throw IntegrityError("duplicate trigger " + t.str());
    }
    if (list.entries.size() > cap_) {
        throw IntegrityError("posting list of " + t.str() + " exceeds the cap");
    }
    for (std::size_t i = 0; i < list.entries.size(); ++i) {
        const auto& e = list.entries[i];
        if (e.term.layer() != term_layer(kind_)) {
            throw IntegrityError("posting list of " + t.str() + ": term " + e.term.str() + " has the wrong layer");
        }
        if (e.stats.clicks > e.stats.presents) {
            throw IntegrityError("posting list of " + t.str() + ": clicks exceed presents");
        }
        if (i > 0 && !ranks_before(list.entries[i - 1], e)) {
            throw IntegrityError("posting list of " + t.str() + " is not sorted");
        }
    }
    position_.emplace(t, lists_.size());
    lists_.push_back(std::move(list));
}

const PostingList* InvertedIndex::find(NodeId trigger) const
{
    auto it = position_.find(trigger);
    return it == position_.end() ? nullptr : &lists_[it->second];
}

std::size_t InvertedIndex::entry_count() const noexcept
{
    std::size_t n = 0;
    for (const auto& l : lists_) n += l.entries.size();
    return n;
}

std::vector<const PostingList*> InvertedIndex::sorted_lists() const
{
    std::vector<const PostingList*> out;
    out.reserve(lists_.size());
    for (const auto& l : lists_) out.push_back(&l);
    std::sort(out.begin(), out.end(), [](auto* a, auto* b) { return a->trigger < b->trigger; });
    return out;
}

bool operator==(const InvertedIndex& a, const InvertedIndex& b)
{
    if (a.kind_ != b.kind_ || a.cap_ != b.cap_ || !(a.meta_ == b.meta_) || a.lists_.size() != b.lists_.size()) {
        return false;
    }
    for (const auto& l : a.lists_) {
        const auto* other = b.find(l.trigger);
        if (!other || !(*other == l)) return false;
    }
    return true;
}

InvertedIndex build_index(const HierNetwork& net, IndexKind kind, std::size_t cap, const EdgeWeightFn& weight,
                          const model::FeatureDictionary* dict, BuildMeta meta)
{
    InvertedIndex index(kind, cap, meta);
    // Edges are ordered by (src, dst), so each trigger's candidates are contiguous.
    const auto& edges = net.edges(edge_layer(kind));
    auto it = edges.begin();
    while (it != edges.end()) {
        PostingList list{it->first.src, {}};
        for (; it != edges.end() && it->first.src == list.trigger; ++it) {
            std::uint32_t fid = kNoFeature;
            if (dict) {
                auto id = dict->edge_index(it->first);
                if (!id) {
                    throw IntegrityError("edge " + it->first.str() + " missing from the feature dictionary");
                }
                fid = *id;
            }
            list.entries.push_back({it->first.dst, weight(it->first, it->second), fid, it->second});
        }
        auto& e = list.entries;
        if (e.size() > cap) {
            std::partial_sort(e.begin(), e.begin() + static_cast<std::ptrdiff_t>(cap), e.end(), ranks_before);
            e.resize(cap);
        } else {
            std::sort(e.begin(), e.end(), ranks_before);
        }
        index.add(std::move(list));
    }
    return index;
}

namespace {

InvertedIndex build_scored(const HierNetwork& net, const model::LrModel& model, IndexKind kind, std::size_t cap)
{
    if (model.dictionary().version() != model::FeatureDictionary::build(net).version()) {
        throw IntegrityError("model was trained over a different network (feature dictionary mismatch)");
    }
    BuildMeta meta{model_id(model), net.fingerprint(), 0};
    return build_index(
        net, kind, cap, [&](const Edge& e, const EdgeStats& s) { return model.edge_weight(e, s); }, &model.dictionary(),
        meta);
}

}  // namespace

InvertedIndex build_rewriting_index(const HierNetwork& net, const model::LrModel& model, std::size_t cap)
{
    return build_scored(net, model, IndexKind::Rewriting, cap);
}

InvertedIndex build_selecting_index(const HierNetwork& net, const model::LrModel& model, std::size_t cap)
{
    return build_scored(net, model, IndexKind::Selecting, cap);
}

std::string serialize_index(const InvertedIndex& index)
{
    std::string out(kMagic, sizeof kMagic);
    put_u32(out, kVersion);
    put_u32(out, static_cast<std::uint32_t>(index.kind()));
    put_u64(out, index.cap());
    put_u64(out, index.meta().model_id);
    put_u64(out, index.meta().network_id);
    put_u64(out, index.meta().build_tick);
    put_u64(out, index.size());
    for (const auto* list : index.sorted_lists()) {
        put_u64(out, list->trigger.raw());
        put_u32(out, static_cast<std::uint32_t>(list->entries.size()));
        for (const auto& e : list->entries) {
            put_u64(out, e.term.raw());
            put_u64(out, std::bit_cast<std::uint64_t>(e.weight));
            put_u32(out, e.feature_id);
            put_u64(out, e.stats.clicks);
            put_u64(out, e.stats.presents);
        }
    }
    return out;
}

void serialize_index(const InvertedIndex& index, const std::filesystem::path& path)
{
    const auto bytes = serialize_index(index);
    write_file_atomic(path, [&](std::ostream& out) { out.write(bytes.data(), static_cast<std::streamsize>(bytes.size())); });
}

InvertedIndex deserialize_index(std::string_view bytes)
{
    Reader r(bytes);
    constexpr std::size_t header = 8 + 4 + 4 + 8 * 5;
    if (!r.has(8) || std::memcmp(r.raw(8).data(), kMagic, 8) != 0) {
        throw VersionError("not an index file (bad magic bytes)");
    }
    if (!r.has(header - 8)) {
        throw LoadError("index file truncated in header");
    }
    const auto version = r.u32();
    if (version != kVersion) {
        throw VersionError("unsupported index version " + std::to_string(version));
    }
    const auto kind_raw = r.u32();
    if (kind_raw > 1) {
        throw LoadError("unknown index kind " + std::to_string(kind_raw));
    }
    const auto kind = static_cast<IndexKind>(kind_raw);
    const auto cap = r.u64();
    BuildMeta meta;
    meta.model_id = r.u64();
    meta.network_id = r.u64();
    meta.build_tick = r.u64();
    const auto count = r.u64();

    constexpr std::size_t entry_bytes = 8 + 8 + 4 + 8 + 8;
    InvertedIndex index(kind, static_cast<std::size_t>(cap), meta);
    std::optional<NodeId> previous;
    for (std::uint64_t i = 0; i < count; ++i) {
        if (!r.has(12)) {
            throw LoadError("index file truncated after " + std::to_string(i) + " of " + std::to_string(count) + " lists");
        }
        const auto trigger_raw = r.u64();
        const auto trigger = NodeId::from_raw(trigger_raw);
        if (!trigger) {
            throw LoadError("invalid trigger id " + std::to_string(trigger_raw));
        }
        PostingList list{*trigger, {}};
        const auto n = r.u32();
        const std::string who = "trigger " + list.trigger.str();
        if (!r.has(static_cast<std::size_t>(n) * entry_bytes)) {
            throw LoadError("index file truncated inside the list of " + who);
        }
        if (previous && !(*previous < list.trigger)) {
            throw LoadError("lists out of order at " + who);
        }
        previous = list.trigger;
        list.entries.reserve(n);
        for (std::uint32_t k = 0; k < n; ++k) {
            PostingEntry e;
            const auto term = NodeId::from_raw(r.u64());
            if (!term) {
                throw LoadError("invalid term id in the list of " + who);
            }
            e.term = *term;
            e.weight = std::bit_cast<double>(r.u64());
            e.feature_id = r.u32();
            e.stats.clicks = r.u64();
            e.stats.presents = r.u64();
            list.entries.push_back(e);
        }
        try {
            index.add(std::move(list));
        } catch (const IntegrityError& e) {
            throw LoadError("invalid list for " + who + ": " + e.what());
        }
    }
    if (!r.done()) {
        throw LoadError("trailing bytes after the last list");
    }
    return index;
}

InvertedIndex load_index(const std::filesystem::path& path)
{
    std::string bytes;
    try {
        bytes = read_file(path);
    } catch (const Error& e) {
        throw LoadError(e.what());
    }
    return deserialize_index(bytes);
}

void dump_index(std::ostream& out, const InvertedIndex& index)
{
    out << "# " << to_string(index.kind()) << " cap=" << index.cap() << " triggers=" << index.size() << '\n';
    char weight[32];
    for (const auto* list : index.sorted_lists()) {
        std::size_t rank = 0;
        for (const auto& e : list->entries) {
            std::snprintf(weight, sizeof weight, "%.17g", e.weight);
            out << list->trigger.str() << '\t' << rank++ << '\t' << e.term.str() << '\t' << weight << '\t';
            if (e.feature_id == kNoFeature) {
                out << '-';
            } else {
                out << e.feature_id;
            }
            out << '\t' << e.stats.clicks << '\t' << e.stats.presents << '\n';
        }
    }
}

}  // namespace adret::index

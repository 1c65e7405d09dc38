#include "adret/evalsim.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>

#include "adret/error.hpp"
#include "json.hpp"

namespace adret::evalsim {

namespace {

std::vector<double> average_ranks(std::span<const double> v)
{
    std::vector<std::size_t> order(v.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> ranks(v.size());
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j < order.size() && v[order[j]] == v[order[i]]) ++j;
        const double r = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
        for (std::size_t k = i; k < j; ++k) ranks[order[k]] = r;
        i = j;
    }
    return ranks;
}

}  // namespace

SampleScorer click_count_scorer(const network::HierNetwork& net)
{
    return [&net](const model::TrainingSample& s) {
        double sum = 0.0;
        for (const auto* edges : {&s.rewriting_edges, &s.selecting_edges}) {
            for (const auto& e : *edges) {
                if (auto st = net.stats(e)) sum += static_cast<double>(st->clicks);
            }
        }
        return sum;
    };
}

SampleScorer lr_scorer(const model::LrModel& model, const network::HierNetwork& net)
{
    return [&model, &net](const model::TrainingSample& s) {
        return model.score(model::featurize(s, net, model.dictionary(), model.features()));
    };
}

std::optional<double> split_auc(const SampleScorer& scorer, std::span<const model::TrainingSample> samples)
{
    std::vector<model::ScoredLabel> scored;
    scored.reserve(samples.size());
    bool pos = false, neg = false;
    for (const auto& s : samples) {
        scored.push_back({scorer(s), s.label});
        pos = pos || s.label == 1;
        neg = neg || s.label == 0;
    }
    if (!pos || !neg) return std::nullopt;
    return model::auc(scored);
}

std::vector<AucRow> offline_eval(std::span<const std::pair<std::string, SampleScorer>> scorers, const Splits& splits)
{
    std::vector<AucRow> rows;
    for (const auto& [name, scorer] : scorers) {
        rows.push_back({name, {split_auc(scorer, splits.train), split_auc(scorer, splits.test),
                               split_auc(scorer, splits.next)}});
    }
    return rows;
}

void print_auc_table(std::ostream& out, std::span<const AucRow> rows)
{
    char buf[128];
    std::snprintf(buf, sizeof buf, "%-24s %10s %10s %10s\n", "model", "train", "test", "next");
    out << buf;
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%-24s", r.name.c_str());
        out << buf;
        for (const auto& a : r.auc) {
            if (a) {
                std::snprintf(buf, sizeof buf, " %10.4f", *a);
            } else {
                std::snprintf(buf, sizeof buf, " %10s", "n/a");
            }
            out << buf;
        }
        out << '\n';
    }
}

double spearman(std::span<const double> a, std::span<const double> b)
{
    if (a.size() != b.size() || a.size() < 2) {
        throw DomainError("spearman: need two equally sized samples of size >= 2");
    }
    const auto ra = average_ranks(a), rb = average_ranks(b);
    const double n = static_cast<double>(a.size());
    const double mean = (n + 1.0) / 2.0;
    double cov = 0.0, va = 0.0, vb = 0.0;
    for (std::size_t i = 0; i < ra.size(); ++i) {
        cov += (ra[i] - mean) * (rb[i] - mean);
        va += (ra[i] - mean) * (ra[i] - mean);
        vb += (rb[i] - mean) * (rb[i] - mean);
    }
    if (va == 0.0 || vb == 0.0) {
        throw DomainError("spearman: constant sample");
    }
    return cov / std::sqrt(va * vb);
}

ClickCountEngine::ClickCountEngine(const network::HierNetwork& net, std::size_t cap_rewrite, std::size_t cap_select,
                                   std::shared_ptr<const pricing::Pricer> pricer, retrieval::RetrievalConfig config)
    : pricer_(std::move(pricer))
    , config_(config)
{
    auto clicks = [](const Edge&, const network::EdgeStats& s) { return static_cast<double>(s.clicks); };
    index::BuildMeta meta{0, net.fingerprint(), 0};
    rewriting_ = index::build_index(net, index::IndexKind::Rewriting, cap_rewrite, clicks, nullptr, meta);
    selecting_ = index::build_index(net, index::IndexKind::Selecting, cap_select, clicks, nullptr, meta);
}

std::vector<RetrievalResult> ClickCountEngine::retrieve(const RetrievalRequest& request,
                                                        retrieval::RetrievalStats* stats) const
{
    using retrieval::Activation;
    retrieval::validate(request, config_);
    const auto act = retrieval::activate(request.signals, rewriting_, selecting_, stats);
    auto score = [](std::span<const Activation::AdHit> hits, const Activation& a) {
        double sum = 0.0;
        for (const auto& h : hits) {
            sum += static_cast<double>(h.entry->stats.clicks);
            for (const auto& rw : a.keys[h.key].rewrites) sum += static_cast<double>(rw.entry->stats.clicks);
        }
        return sum;
    };
    return retrieval::rank(act, request.n, score, pricer_.get(), config_.min_score);
}

std::vector<RetrievalResult> baseline_retrieve(const network::HierNetwork& net, const RetrievalRequest& request,
                                               std::size_t cap_rewrite, std::size_t cap_select,
                                               const pricing::Pricer* pricer)
{
    std::shared_ptr<const pricing::Pricer> p;
    if (pricer) p = std::shared_ptr<const pricing::Pricer>(pricer, [](const pricing::Pricer*) {});
    return ClickCountEngine(net, cap_rewrite, cap_select, p).retrieve(request);
}

void SimMetrics::finalize()
{
    ctr = present_counts == 0 ? 0.0 : static_cast<double>(click_counts) / static_cast<double>(present_counts);
    rpm = present_counts == 0 ? 0.0 : revenue / static_cast<double>(present_counts) * 1000.0;
    pr = request_counts == 0 ? 0.0 : static_cast<double>(presented_requests) / static_cast<double>(request_counts);
}

double lift(double metric_new, double metric_base) noexcept
{
    if (metric_base == 0.0) {
        return metric_new == 0.0 ? 0.0 : std::copysign(INFINITY, metric_new);
    }
    return (metric_new - metric_base) / metric_base;
}

namespace {

void serve_one(const Engine& engine, const clicklog::Request& request, const clicklog::UserOracle& oracle,
               std::size_t slate, SimRun& run)
{
    auto results = engine(RetrievalRequest{request.signals, slate});
    if (results.size() > slate) results.resize(slate);
    auto& m = run.metrics;
    ++m.request_counts;
    if (!results.empty()) ++m.presented_requests;
    for (const auto& r : results) {
        const bool clicked = oracle.clicks(request, r.ad_id);
        ++m.present_counts;
        if (clicked) {
            ++m.click_counts;
            m.revenue += r.ocpc_price;
        }
        run.trace.push_back({request.request_id, r.ad_id, r.ocpc_price, clicked});
    }
}

}  // namespace

SimReport simulate_online(const Engine& engine, const Engine& baseline, const clicklog::Catalog& catalog,
                          const clicklog::UserOracle& oracle, std::uint64_t n_requests, std::uint64_t seed,
                          const SimConfig& config)
{
    if (n_requests == 0) {
        throw DomainError("simulate_online: n_requests must be positive");
    }
    if (config.slate == 0) {
        throw DomainError("simulate_online: slate must be positive");
    }
    clicklog::RequestStream stream(catalog, seed, config.start_tick, config.first_request_id);
    SimReport report;
    for (std::uint64_t i = 0; i < n_requests; ++i) {
        const auto request = stream.next();
        serve_one(engine, request, oracle, config.slate, report.engine);
        serve_one(baseline, request, oracle, config.slate, report.baseline);
    }
    report.engine.metrics.finalize();
    report.baseline.metrics.finalize();
    report.lift = {lift(report.engine.metrics.ctr, report.baseline.metrics.ctr),
                   lift(report.engine.metrics.rpm, report.baseline.metrics.rpm),
                   lift(report.engine.metrics.pr, report.baseline.metrics.pr)};
    return report;
}

std::vector<std::string> check_identities(const SimRun& run)
{
    std::vector<std::string> bad;
    const auto& m = run.metrics;
    if (m.present_counts == 0) {
        if (m.ctr != 0.0 || m.rpm != 0.0) bad.push_back("ctr and rpm must be 0 without presents");
    } else {
        if (m.ctr != static_cast<double>(m.click_counts) / static_cast<double>(m.present_counts)) {
            bad.push_back("ctr != clicks / presents");
        }
        const double clicks = static_cast<double>(m.click_counts);
        if (std::abs(m.ctr * static_cast<double>(m.present_counts) - clicks) > 1e-12 * std::max(1.0, clicks)) {
            bad.push_back("ctr * presents != clicks");
        }
        if (m.rpm != m.revenue / static_cast<double>(m.present_counts) * 1000.0) {
            bad.push_back("rpm != revenue / presents * 1000");
        }
    }
    if (m.pr > 1.0 || m.presented_requests > m.request_counts) bad.push_back("pr > 1");
    if (m.click_counts > m.present_counts) bad.push_back("clicks > presents");

    double revenue = 0.0;
    std::uint64_t clicks = 0, presents = 0;
    for (const auto& p : run.trace) {
        ++presents;
        if (p.clicked) {
            ++clicks;
            revenue += p.ocpc_price;
        }
    }
    if (!run.trace.empty() || m.present_counts != 0) {
        if (revenue != m.revenue) bad.push_back("revenue != sum of prices over clicked presents");
        if (clicks != m.click_counts || presents != m.present_counts) bad.push_back("trace disagrees with counts");
    }
    return bad;
}

std::string to_json(const SimMetrics& m)
{
    return nlohmann::json{{"click_counts", m.click_counts},
                          {"present_counts", m.present_counts},
                          {"request_counts", m.request_counts},
                          {"presented_requests", m.presented_requests},
                          {"revenue", m.revenue},
                          {"ctr", m.ctr},
                          {"rpm", m.rpm},
                          {"pr", m.pr}}
        .dump();
}

void print_sim_table(std::ostream& out, const SimReport& report)
{
    char buf[160];
    std::snprintf(buf, sizeof buf, "%-10s %10s %10s %10s\n", "", "ctr", "rpm", "pr");
    out << buf;
    auto row = [&](const char* name, double a, double b, double c, bool percent) {
        if (percent) {
            std::snprintf(buf, sizeof buf, "%-10s %+9.2f%% %+9.2f%% %+9.2f%%\n", name, 100 * a, 100 * b, 100 * c);
        } else {
            std::snprintf(buf, sizeof buf, "%-10s %10.5f %10.4f %10.4f\n", name, a, b, c);
        }
        out << buf;
    };
    const auto& e = report.engine.metrics;
    const auto& b = report.baseline.metrics;
    row("model", e.ctr, e.rpm, e.pr, false);
    row("baseline", b.ctr, b.rpm, b.pr, false);
    row("lift", report.lift.ctr, report.lift.rpm, report.lift.pr, true);
}

}  // namespace adret::evalsim

#include "adret/pricing.hpp"

#include <cmath>
#include <fstream>

#include "adret/error.hpp"
#include "adret/io.hpp"
#include "json.hpp"

namespace adret::pricing {

using nlohmann::json;

double estimate_cvr(const AdCommerceStats& stats, const Smoothing& smoothing)
{
    if (!(smoothing.alpha >= 0.0) || !(smoothing.beta >= 0.0)) {
        throw DomainError("estimate_cvr: smoothing counts must be >= 0");
    }
    if (stats.trade_count > stats.click_count) {
        throw DomainError("estimate_cvr: more trades than clicks");
    }
    const double denom = static_cast<double>(stats.click_count) + smoothing.alpha + smoothing.beta;
    if (denom == 0.0) {
        return 0.0;
    }
    return (static_cast<double>(stats.trade_count) + smoothing.alpha) / denom;
}

double ocpc_price(double cvr, double item_price, double taking_rate)
{
    if (!(cvr >= 0.0 && cvr <= 1.0)) {
        throw DomainError("ocpc_price: cvr must lie in [0,1]");
    }
    if (!(item_price > 0.0) || !std::isfinite(item_price)) {
        throw DomainError("ocpc_price: item price must be positive");
    }
    if (!(taking_rate > 0.0 && taking_rate < 1.0)) {
        throw DomainError("ocpc_price: taking rate must lie in (0,1)");
    }
    return cvr * item_price * taking_rate;
}

Pricer::Pricer(std::vector<AdCommerceStats> by_ad, const Smoothing& smoothing, std::optional<double> taking_rate_override)
    : stats_(std::move(by_ad))
    , smoothing_(smoothing)
    , override_(taking_rate_override)
{
    prices_.reserve(stats_.size());
    for (const auto& s : stats_) {
        prices_.push_back(ocpc_price(estimate_cvr(s, smoothing_), s.item_price, override_.value_or(s.taking_rate)));
    }
}

Pricer Pricer::from_log(const clicklog::Catalog& catalog, std::span<const clicklog::ImpressionRecord> log,
                        const Smoothing& smoothing, std::optional<double> taking_rate_override)
{
    std::vector<AdCommerceStats> stats(catalog.ads.size());
    for (const auto& ad : catalog.ads) {
        stats[ad.id].item_price = ad.item_price;
        stats[ad.id].taking_rate = ad.taking_rate;
    }
    for (const auto& rec : log) {
        auto& s = stats.at(rec.ad_id);
        s.click_count += rec.clicked ? 1 : 0;
        s.trade_count += rec.converted ? 1 : 0;
    }
    return Pricer(std::move(stats), smoothing, taking_rate_override);
}

void write_pricing(std::ostream& out, const Pricer& pricer)
{
    json header{{"type", "pricing"}, {"alpha", pricer.smoothing().alpha}, {"beta", pricer.smoothing().beta}};
    header["taking_rate_override"] = pricer.taking_rate_override() ? json(*pricer.taking_rate_override()) : json(nullptr);
    out << header.dump() << '\n';
    for (std::size_t ad = 0; ad < pricer.stats().size(); ++ad) {
        const auto& s = pricer.stats()[ad];
        out << json{{"ad", ad},
                    {"trades", s.trade_count},
                    {"clicks", s.click_count},
                    {"item_price", s.item_price},
                    {"taking_rate", s.taking_rate}}
                   .dump()
            << '\n';
    }
}

void write_pricing(const std::filesystem::path& path, const Pricer& pricer)
{
    write_file_atomic(path, [&](std::ostream& out) { write_pricing(out, pricer); });
}

Pricer read_pricing(std::istream& in)
{
    std::string line;
    std::size_t n = 0;
    try {
        if (!std::getline(in, line)) {
            throw ParseError(1, "empty pricing file");
        }
        ++n;
        const json header = json::parse(line);
        if (header.at("type") != "pricing") {
            throw ParseError(1, "not a pricing file");
        }
        Smoothing smoothing{header.at("alpha").get<double>(), header.at("beta").get<double>()};
        std::optional<double> override;
        if (!header.at("taking_rate_override").is_null()) {
            override = header.at("taking_rate_override").get<double>();
        }
        std::vector<AdCommerceStats> stats;
        while (std::getline(in, line)) {
            ++n;
            if (line.empty()) continue;
            const json j = json::parse(line);
            if (j.at("ad").get<std::size_t>() != stats.size()) {
                throw ParseError(n, "ad ids must be dense and ordered");
            }
            stats.push_back({j.at("trades").get<std::uint64_t>(), j.at("clicks").get<std::uint64_t>(),
                             j.at("item_price").get<double>(), j.at("taking_rate").get<double>()});
        }
        return Pricer(std::move(stats), smoothing, override);
    } catch (const json::exception& e) {
        throw ParseError(n, e.what());
    }
}

Pricer read_pricing(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) {
        throw Error("cannot open " + path.string());
    }
    return read_pricing(in);
}

}  // namespace adret::pricing

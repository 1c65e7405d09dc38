#include <algorithm>

#include "adret/error.hpp"
#include "adret/model.hpp"

namespace adret::model {

std::string_view to_string(Objective objective) noexcept { return objective == Objective::Ctr ? "ctr" : "rpm"; }

std::optional<Objective> objective_from_string(std::string_view name) noexcept
{
    if (name == "ctr") return Objective::Ctr;
    if (name == "rpm") return Objective::Rpm;
    return std::nullopt;
}

ExtractResult extract_samples(const HierNetwork& net, std::span<const clicklog::ImpressionRecord> log)
{
    ExtractResult out;
    for (const auto& rec : log) {
        TrainingSample sample;
        sample.request_id = rec.request_id;
        sample.ad = NodeId::ad(rec.ad_id);
        sample.label = rec.clicked ? 1 : 0;
        sample.ad_price = rec.ad_price;
        for (NodeId key : net.keys_of_ad(sample.ad)) {
            bool reached = false;
            for (const auto& signal : rec.signals) {
                const Edge rewrite{signal.node(), key};
                if (net.contains(rewrite)) {
                    sample.rewriting_edges.push_back(rewrite);
                    reached = true;
                }
            }
            if (reached) {
                sample.selecting_edges.push_back({key, sample.ad});
            }
        }
        if (sample.selecting_edges.empty()) {
            ++out.dropped;
            continue;
        }
        std::sort(sample.rewriting_edges.begin(), sample.rewriting_edges.end());
        sample.rewriting_edges.erase(std::unique(sample.rewriting_edges.begin(), sample.rewriting_edges.end()),
                                     sample.rewriting_edges.end());
        out.samples.push_back(std::move(sample));
    }
    return out;
}

void weight_samples(std::span<TrainingSample> samples, Objective objective)
{
    for (auto& s : samples) {
        if (objective == Objective::Rpm && s.label == 1) {
            if (!(s.ad_price > 0.0)) {
                throw DataError("clicked sample of request " + std::to_string(s.request_id)
                                + " has nonpositive price under the RPM objective");
            }
            s.weight = s.ad_price;
        } else {
            s.weight = 1.0;
        }
    }
}

}  // namespace adret::model

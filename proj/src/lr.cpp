#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "adret/error.hpp"
#include "adret/model.hpp"

namespace adret::model {

namespace {

// log(1 + exp(m)) without overflow
double softplus(double m) noexcept { return m > 0 ? m + std::log1p(std::exp(-m)) : std::log1p(std::exp(m)); }

double standardized(const LrModel& model, const FeatureVector& x, std::size_t j)
{
    const double z = std::clamp(x.continuous[j], model.continuous_min[j], model.continuous_max[j]);
    return (z - model.continuous_mean[j]) / model.continuous_scale[j];
}

void check_classes(std::span<const EncodedSample> data)
{
    bool pos = false, neg = false;
    for (const auto& s : data) {
        if (s.weight <= 0.0 || !std::isfinite(s.weight)) {
            throw TrainingError("sample weights must be positive and finite");
        }
        pos = pos || s.label == 1.0;
        neg = neg || s.label == 0.0;
    }
    if (!pos || !neg) {
        throw TrainingError("training data must contain both clicked and unclicked samples");
    }
}

}  // namespace

double sigmoid(double x) noexcept
{
    if (x >= 0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

LrModel::LrModel(FeatureDictionary dictionary, Objective objective, Hyper hyper, FeatureOptions features)
    : weights(dictionary.size(), 0.0)
    , dictionary_(std::move(dictionary))
    , objective_(objective)
    , hyper_(hyper)
    , features_(features)
{
    continuous_scale.fill(1.0);
    continuous_min.fill(std::numeric_limits<double>::lowest());
    continuous_max.fill(std::numeric_limits<double>::max());
}

double LrModel::sparse_weight(std::uint32_t id) const { return features_.sparse ? weights.at(id) : 0.0; }

double LrModel::margin(const FeatureVector& x) const
{
    double m = bias;
    for (auto id : x.sparse_ids) {
        m += weights[id];
    }
    for (std::size_t j = 0; j < kContinuousDim; ++j) {
        m += continuous_weights[j] * standardized(*this, x, j);
    }
    return m;
}

double LrModel::edge_weight(const Edge& edge, const EdgeStats& stats) const
{
    const auto layer = edge.layer();
    if (!layer) {
        throw IntegrityError("edge " + edge.str() + " has no layer");
    }
    double w = sparse_weight(dictionary_.edge_index(edge));
    ContinuousVector v{};
    fill_layer_block(v, *layer, stats, features_);
    const auto at = block_offset(*layer);
    for (std::size_t j = at; j < at + kLayerStats; ++j) {
        w += continuous_weights[j] * v[j] / continuous_scale[j];
    }
    return w;
}

double objective_value(const LrModel& model, std::span<const EncodedSample> data)
{
    double loss = 0.0, total = 0.0;
    for (const auto& s : data) {
        const double m = model.margin(s.features);
        loss += s.weight * (softplus(m) - s.label * m);
        total += s.weight;
    }
    double norm = 0.0;
    for (double w : model.weights) norm += w * w;
    for (double w : model.continuous_weights) norm += w * w;
    return (total > 0 ? loss / total : 0.0) + 0.5 * model.hyper().l2 * norm;
}

Gradient gradient(const LrModel& model, std::span<const EncodedSample> data)
{
    Gradient g;
    g.sparse.assign(model.weights.size(), 0.0);
    double total = 0.0;
    for (const auto& s : data) total += s.weight;
    for (const auto& s : data) {
        const double r = s.weight * (sigmoid(model.margin(s.features)) - s.label) / total;
        for (auto id : s.features.sparse_ids) g.sparse[id] += r;
        for (std::size_t j = 0; j < kContinuousDim; ++j) g.continuous[j] += r * standardized(model, s.features, j);
        g.bias += r;
    }
    const double l2 = model.hyper().l2;
    for (std::size_t i = 0; i < g.sparse.size(); ++i) g.sparse[i] += l2 * model.weights[i];
    for (std::size_t j = 0; j < kContinuousDim; ++j) g.continuous[j] += l2 * model.continuous_weights[j];
    return g;
}

LrModel train_lr(std::span<const EncodedSample> data, FeatureDictionary dictionary, Objective objective,
                 const Hyper& hyper, const FeatureOptions& features, TrainReport* report)
{
    if (hyper.batch_size == 0 || !(hyper.learning_rate > 0.0) || hyper.l2 < 0.0 || hyper.learning_rate * hyper.l2 >= 1.0) {
        throw TrainingError("invalid hyperparameters");
    }
    check_classes(data);
    LrModel model(std::move(dictionary), objective, hyper, features);
    for (const auto& s : data) {
        for (auto id : s.features.sparse_ids) {
            if (id >= model.weights.size()) {
                throw IntegrityError("feature id " + std::to_string(id) + " outside the dictionary");
            }
        }
    }

    // Standardize continuous columns; constant columns are centered on their value.
    for (std::size_t j = 0; j < kContinuousDim; ++j) {
        double lo = data[0].features.continuous[j], hi = lo, sum = 0.0;
        for (const auto& s : data) {
            lo = std::min(lo, s.features.continuous[j]);
            hi = std::max(hi, s.features.continuous[j]);
            sum += s.features.continuous[j];
        }
        model.continuous_min[j] = lo;
        model.continuous_max[j] = hi;
        if (lo == hi) {
            model.continuous_mean[j] = lo;
            model.continuous_scale[j] = 1.0;
            continue;
        }
        const double mean = sum / static_cast<double>(data.size());
        double var = 0.0;
        for (const auto& s : data) var += (s.features.continuous[j] - mean) * (s.features.continuous[j] - mean);
        model.continuous_mean[j] = mean;
        model.continuous_scale[j] = std::sqrt(var / static_cast<double>(data.size()));
    }

    if (report) {
        report->initial_loss = objective_value(model, data);
        report->epoch_loss.clear();
    }

    // Sparse weights are stored as scale * v so the L2 decay of every weight
    // is one multiplication per step.
    std::vector<double> v(model.weights.size(), 0.0);
    double scale = 1.0;
    const double lr = hyper.learning_rate;
    const double decay = 1.0 - lr * hyper.l2;

    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 rng(hyper.seed);
    std::vector<double> residual;

    for (std::size_t epoch = 0; epoch < hyper.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t start = 0; start < order.size(); start += hyper.batch_size) {
            const std::size_t end = std::min(order.size(), start + hyper.batch_size);
            residual.assign(end - start, 0.0);
            double batch_weight = 0.0;
            for (std::size_t b = start; b < end; ++b) batch_weight += data[order[b]].weight;
            for (std::size_t b = start; b < end; ++b) {
                const auto& s = data[order[b]];
                double m = model.bias;
                for (auto id : s.features.sparse_ids) m += scale * v[id];
                for (std::size_t j = 0; j < kContinuousDim; ++j) {
                    m += model.continuous_weights[j] * standardized(model, s.features, j);
                }
                residual[b - start] = s.weight * (sigmoid(m) - s.label) / batch_weight;
            }

            scale *= decay;
            ContinuousVector cgrad{};
            double bgrad = 0.0;
            for (std::size_t b = start; b < end; ++b) {
                const auto& s = data[order[b]];
                const double r = residual[b - start];
                for (auto id : s.features.sparse_ids) v[id] -= lr * r / scale;
                for (std::size_t j = 0; j < kContinuousDim; ++j) cgrad[j] += r * standardized(model, s.features, j);
                bgrad += r;
            }
            for (std::size_t j = 0; j < kContinuousDim; ++j) {
                model.continuous_weights[j] = decay * model.continuous_weights[j] - lr * cgrad[j];
            }
            model.bias -= lr * bgrad;

            if (scale < 1e-100) {
                for (auto& x : v) x *= scale;
                scale = 1.0;
            }
        }
        for (std::size_t i = 0; i < v.size(); ++i) model.weights[i] = scale * v[i];
        if (report) {
            report->epoch_loss.push_back(objective_value(model, data));
        }
    }
    for (std::size_t i = 0; i < v.size(); ++i) model.weights[i] = scale * v[i];
    return model;
}

double auc(std::span<const ScoredLabel> input)
{
    std::size_t positives = 0;
    for (const auto& s : input) {
        if (s.label != 0 && s.label != 1) {
            throw DomainError("auc: labels must be 0 or 1");
        }
        if (std::isnan(s.score)) {
            throw DomainError("auc: NaN score");
        }
        positives += static_cast<std::size_t>(s.label);
    }
    const std::size_t negatives = input.size() - positives;
    if (positives == 0 || negatives == 0) {
        throw DomainError("auc: need at least one positive and one negative");
    }
    std::vector<std::size_t> order(input.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return input[a].score < input[b].score; });

    double rank_sum = 0.0;
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        std::size_t tied_pos = 0;
        while (j < order.size() && input[order[j]].score == input[order[i]].score) {
            tied_pos += static_cast<std::size_t>(input[order[j]].label);
            ++j;
        }
        // 1-based ranks i+1 .. j share their average
        const double avg_rank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
        rank_sum += avg_rank * static_cast<double>(tied_pos);
        i = j;
    }
    const auto m = static_cast<double>(positives);
    const auto n = static_cast<double>(negatives);
    return (rank_sum - m * (m + 1.0) / 2.0) / (m * n);
}

}  // namespace adret::model

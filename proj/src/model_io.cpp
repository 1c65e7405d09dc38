#include <fstream>
#include <sstream>

#include "adret/error.hpp"
#include "adret/io.hpp"
#include "adret/model.hpp"
#include "json.hpp"

namespace adret::model {

using nlohmann::json;

namespace {

constexpr const char* kFormat = "adret-lr";
constexpr int kVersion = 1;

std::string hex64(std::uint64_t v)
{
    std::ostringstream out;
    out << std::hex << v;
    return out.str();
}

}  // namespace

void write_model(std::ostream& out, const LrModel& model)
{
    const auto& h = model.hyper();
    const auto& f = model.features();
    json header{{"format", kFormat},
                {"version", kVersion},
                {"objective", to_string(model.objective())},
                {"learning_rate", h.learning_rate},
                {"epochs", h.epochs},
                {"l2", h.l2},
                {"batch_size", h.batch_size},
                {"seed", h.seed},
                {"features", {{"sparse", f.sparse}, {"continuous", f.continuous}, {"log_transforms", f.log_transforms}}},
                {"dictionary_version", hex64(model.dictionary().version())},
                {"dictionary_size", model.dictionary().size()},
                {"bias", model.bias},
                {"continuous_weights", model.continuous_weights},
                {"continuous_mean", model.continuous_mean},
                {"continuous_scale", model.continuous_scale},
                {"continuous_min", model.continuous_min},
                {"continuous_max", model.continuous_max}};
    out << header.dump() << '\n';
    for (std::uint32_t i = 0; i < model.weights.size(); ++i) {
        out << json{{"f", model.dictionary().identity(i)}, {"w", model.weights[i]}}.dump() << '\n';
    }
}

void write_model(const std::filesystem::path& path, const LrModel& model)
{
    write_file_atomic(path, [&](std::ostream& out) { write_model(out, model); });
}

LrModel read_model(std::istream& in)
{
    std::string line;
    std::size_t n = 1;
    if (!std::getline(in, line)) {
        throw ParseError(1, "empty model file");
    }
    try {
        const json header = json::parse(line);
        if (header.at("format") != kFormat || header.at("version") != kVersion) {
            throw ParseError(1, "not an adret-lr v1 model");
        }
        const auto objective = objective_from_string(header.at("objective").get<std::string>());
        if (!objective) {
            throw ParseError(1, "unknown objective");
        }
        Hyper h;
        h.learning_rate = header.at("learning_rate").get<double>();
        h.epochs = header.at("epochs").get<std::size_t>();
        h.l2 = header.at("l2").get<double>();
        h.batch_size = header.at("batch_size").get<std::size_t>();
        h.seed = header.at("seed").get<std::uint64_t>();
        FeatureOptions f;
        f.sparse = header.at("features").at("sparse").get<bool>();
        f.continuous = header.at("features").at("continuous").get<bool>();
        f.log_transforms = header.at("features").at("log_transforms").get<bool>();
        const auto size = header.at("dictionary_size").get<std::size_t>();

        std::vector<std::string> identities;
        std::vector<double> weights;
        identities.reserve(size);
        weights.reserve(size);
        while (std::getline(in, line)) {
            ++n;
            if (line.empty()) continue;
            const json entry = json::parse(line);
            identities.push_back(entry.at("f").get<std::string>());
            weights.push_back(entry.at("w").get<double>());
        }
        if (identities.size() != size) {
            throw ParseError(0, "model file truncated: expected " + std::to_string(size) + " weights, found "
                                    + std::to_string(identities.size()));
        }
        auto dict = FeatureDictionary::from_identities(identities);
        if (hex64(dict.version()) != header.at("dictionary_version").get<std::string>()) {
            throw IntegrityError("model dictionary version does not match its identities");
        }
        LrModel model(std::move(dict), *objective, h, f);
        model.weights = std::move(weights);
        model.bias = header.at("bias").get<double>();
        model.continuous_weights = header.at("continuous_weights").get<ContinuousVector>();
        model.continuous_mean = header.at("continuous_mean").get<ContinuousVector>();
        model.continuous_scale = header.at("continuous_scale").get<ContinuousVector>();
        model.continuous_min = header.at("continuous_min").get<ContinuousVector>();
        model.continuous_max = header.at("continuous_max").get<ContinuousVector>();
        return model;
    } catch (const json::exception& e) {
        throw ParseError(n, e.what());
    }
}

LrModel read_model(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) {
        throw Error("cannot open " + path.string());
    }
    return read_model(in);
}

}  // namespace adret::model

#pragma once

// Pipeline stages behind the `adret` command:
//   gen -> init-net -> train -> build-index -> eval / simulate / serve
// Every stage reads its inputs from --in, writes artifacts atomically into
// --out and appends a line to <out>/manifest.jsonl.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>

#include "adret/clicklog.hpp"
#include "adret/error.hpp"
#include "adret/model.hpp"
#include "adret/network.hpp"
#include "adret/pipeline.hpp"
#include "adret/pricing.hpp"
#include "adret/retrieval.hpp"

namespace adret::cli {

namespace artifact {
inline constexpr const char* kCatalog = "catalog.jsonl";
inline constexpr const char* kTrain = "train.jsonl";
inline constexpr const char* kTest = "test.jsonl";
inline constexpr const char* kNext = "next.jsonl";
inline constexpr const char* kSessions = "sessions.jsonl";
inline constexpr const char* kNetwork = "network.jsonl";
inline constexpr const char* kModel = "model.json";
inline constexpr const char* kRewriteIndex = "rewrite.idx";
inline constexpr const char* kSelectIndex = "select.idx";
inline constexpr const char* kPricing = "pricing.jsonl";
inline constexpr const char* kManifest = "manifest.jsonl";
}  // namespace artifact

struct PipelineConfig {
    std::filesystem::path in = ".";
    std::filesystem::path out = ".";
    std::uint64_t seed = 42;
    model::Objective objective = model::Objective::Ctr;

    pipeline::DataConfig data;
    network::InitConfig init;
    model::Hyper hyper;
    pipeline::ServeConfig serve;

    std::uint64_t sim_requests = 10000;
    std::size_t slate = 1;
    std::string host = "127.0.0.1";
    std::uint16_t port = 7070;

    /// Throws ConfigError on caps of 0 or out-of-range values.
    void validate() const;
    /// SHA-256 of the canonical JSON form of every setting.
    std::string hash() const;
};

/// Raised when an upstream artifact is missing or differs from its manifest record.
class StageError : public Error {
public:
    using Error::Error;
};

/// SHA-256 of `dir/name`, checked against the newest manifest record in `dir`
/// that produced it.
std::string check_upstream(const std::filesystem::path& dir, const std::string& name);

/// Loads the served snapshot from `dir`, verifying the indexes were built from
/// the model found there.
std::shared_ptr<const retrieval::Snapshot> load_snapshot(const std::filesystem::path& dir,
                                                         const retrieval::RetrievalConfig& config);

/// Entry point of the `adret` executable. Returns the process exit status.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace adret::cli

#pragma once

#include <Eigen/Core>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "sparseview/feature_map.hpp"
#include "sparseview/image.hpp"

namespace sparseview {

/// Per-view feature encoder: (image, scale) -> FeatureMap at 1/scale resolution.
class FeatureExtractor {
public:
    virtual ~FeatureExtractor() = default;
    virtual FeatureMap extract(const Image &image, int scale) const = 0;
    virtual int channels() const = 0;
    virtual std::string name() const = 0;
};

/// Built-in deterministic extractor. Channels per block of scale×scale pixels:
///   0-2  mean color
///   3-4  mean |d/dx luma|, mean |d/dy luma| (central differences, clamped edges)
///   5-7  color variance
class BlockStatsExtractor final : public FeatureExtractor {
public:
    FeatureMap extract(const Image &image, int scale) const override;
    int channels() const override { return 8; }
    std::string name() const override { return "block-stats"; }
};

using ExtractorFactory = std::function<std::unique_ptr<FeatureExtractor>()>;

/// Name-keyed registry; "block-stats" is always present.
void register_extractor(const std::string &name, ExtractorFactory factory);
std::unique_ptr<FeatureExtractor> make_extractor(const std::string &name);
std::vector<std::string> registered_extractors();

FeatureMap extract_features(const Image &image, int scale = 4);

/// Matching descriptors for the cost volume: each channel is standardised over
/// the map, then every pixel vector is scaled to L2 norm `gain` (zero vectors
/// stay zero). Raw extractor outputs are non-negative, so their dot products
/// reward brightness rather than agreement; this removes that bias.
FeatureMap normalize_descriptors(const FeatureMap &features, double gain);

/// Per-view neighbour lists, nearest first.
struct LocalGroup {
    std::vector<std::vector<int>> neighbors;
};

/// k nearest other views by camera-center distance, ties broken by lower index.
/// Coincident centers are allowed and resolved by the same tie rule.
LocalGroup local_group(const std::vector<Eigen::Vector3d> &camera_positions, int k = 2);

}  // namespace sparseview

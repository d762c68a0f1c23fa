#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace selfscore {

enum class Split { train, val, test };

Split split_from_string(const std::string& s);
const char* to_string(Split split);

// One dataset record: image reference plus continuous ground-truth score.
struct ScoredImage {
    std::string image_id;
    std::string image_uri;
    double raw_score = 0.0;
    Split split = Split::train;

    bool operator==(const ScoredImage&) const = default;
};

struct SplitCounts {
    std::size_t train = 0;
    std::size_t val = 0;
    std::size_t test = 0;

    std::size_t total() const { return train + val + test; }
};

struct DatasetManifest {
    std::string name;
    std::vector<ScoredImage> records;
    SplitCounts counts;
};

enum class ManifestFormat { csv, jsonl };

double compute_mean_score(const std::vector<double>& ratings);

DatasetManifest load_manifest(const std::string& path, ManifestFormat format);
DatasetManifest load_manifest(const std::string& path);  // format from extension

void save_manifest(const DatasetManifest& manifest, const std::string& path, ManifestFormat format);
void save_manifest(const DatasetManifest& manifest, const std::string& path);

std::vector<ScoredImage> split_filter(const DatasetManifest& manifest, Split split);

}  // namespace selfscore

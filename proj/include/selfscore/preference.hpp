#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "selfscore/backend.hpp"
#include "selfscore/dataset.hpp"
#include "selfscore/rng.hpp"
#include "selfscore/score_codec.hpp"

namespace selfscore {

enum class PairKind { score, consistency };

const char* to_string(PairKind kind);
PairKind pair_kind_from_string(const std::string& s);

// One preference sample. For kind=score the rejected text declares
// rejected_bin; for kind=consistency both texts declare gt_bin and
// rejected_bin records which incorrect bin the rejected text was
// originally generated under.
struct PreferencePair {
    std::string image_id;
    std::string image_uri;
    std::string prompt;
    std::string chosen;
    std::string rejected;
    int gt_bin = 0;
    int rejected_bin = 0;
    PairKind kind = PairKind::score;

    bool operator==(const PreferencePair&) const = default;
};

// Uniform draw from {b : |b - gt_bin| >= min_distance}.
int sample_incorrect_bin(int gt_bin, Rng& rng, int min_distance = 3);

struct PairBuildOptions {
    int min_distance = 3;
    int max_retries = 1;  // regeneration attempts after a parse failure
    GenerationParams gen;
};

PreferencePair build_score_pair(Backend& backend, const ScoredImage& image,
                                const BinningScheme& scheme, Rng& rng,
                                const PairBuildOptions& opt = {});

// Retrospectively replaces the rejected text's score with gt_bin.
PreferencePair derive_consistency_pair(const PreferencePair& pair);

struct BuildStats {
    std::size_t sampled = 0;
    std::size_t written_score = 0;
    std::size_t written_consistency = 0;
    std::size_t dropped = 0;  // format failures after the retry budget
    std::size_t failed = 0;   // backend errors
};

struct DatasetBuildOptions {
    double fraction = 1.0;
    PairBuildOptions pair;
    bool write_consistency = true;
    std::string generator = "base";  // provenance note stored in the file header
};

// Subsamples ceil(fraction * N) records, builds score pairs with the backend,
// derives consistency pairs, and writes one JSONL file per kind.
// consistency_path is ignored when opt.write_consistency is false.
BuildStats build_dataset(Backend& backend, const std::vector<ScoredImage>& records,
                         const BinningScheme& scheme, std::uint64_t seed,
                         const DatasetBuildOptions& opt, const std::string& score_path,
                         const std::string& consistency_path);

void save_pairs(const std::vector<PreferencePair>& pairs, const std::string& path,
                const std::string& generator = "base");
std::vector<PreferencePair> load_pairs(const std::string& path);

// Generator note recorded in a pair file's header record.
std::string pair_file_generator(const std::string& path);

// Rounded-up share of n, clamped to [1, n]; fraction must lie in (0, 1].
std::size_t ceil_fraction(double fraction, std::size_t n);

}  // namespace selfscore

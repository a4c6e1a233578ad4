#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "tablefuse/detail/rng.hpp"
#include "tablefuse/table.hpp"

namespace tablefuse {

// Desk-scale multimodal dataset: one numerical, one categorical (3 levels),
// one text and one image-path column plus a binary label. The label is a
// fixed linear rule over age and species, so the task is exactly separable
// and a logistic-regression oracle can certify attainable accuracy.
struct SyntheticDataset {
    StructuredTable table;
    // Sidecar feature vectors, keyed by the filename stored in the photo cell.
    std::map<std::string, std::vector<double>> sidecars;
};

namespace synth {

inline constexpr int kAgeMax = 12;
inline constexpr int kLabelThreshold = 10;
inline constexpr std::size_t kSidecarDim = 8;

inline const std::vector<std::string>& species_levels() {
    static const std::vector<std::string> levels = {"finch", "gecko", "otter"};
    return levels;
}

inline int species_bonus(const std::string& species) {
    if (species == "finch") return 0;
    if (species == "gecko") return 4;
    if (species == "otter") return 8;
    throw std::invalid_argument("unknown species: " + species);
}

// The generating rule the label column is computed from.
inline int label_rule(int age, const std::string& species) {
    return age + species_bonus(species) >= kLabelThreshold ? 1 : 0;
}

inline std::string notes_for(const std::string& species, detail::Rng& rng) {
    static const std::vector<std::string> finch_words = {"sings", "perches", "feathered", "flits"};
    static const std::vector<std::string> gecko_words = {"climbs", "basks", "scaled", "darts"};
    static const std::vector<std::string> otter_words = {"swims", "dives", "sleek", "paddles"};
    static const std::vector<std::string> filler = {"calm", "curious", "gentle", "lively", "shy"};
    const auto& pool = species == "finch" ? finch_words : species == "gecko" ? gecko_words : otter_words;
    std::string text = filler[rng.bounded(filler.size())];
    text += " " + species + " that " + pool[rng.bounded(pool.size())];
    if (rng.bounded(2) == 0) text += " and " + pool[rng.bounded(pool.size())];
    return text;
}

}  // namespace synth

inline SyntheticDataset generate_synthetic_dataset(std::size_t n_rows, std::uint64_t seed) {
    if (n_rows < 2) throw std::invalid_argument("synthetic dataset needs at least 2 rows");
    detail::Rng rng(seed);

    SyntheticDataset ds;
    ds.table.columns = {"age", "species", "notes", "photo", "adopted"};
    ds.table.label_column = "adopted";

    for (std::size_t r = 0; r < n_rows; ++r) {
        const int age = static_cast<int>(rng.bounded(synth::kAgeMax + 1));
        const std::string species = synth::species_levels()[rng.bounded(3)];
        const std::string notes = synth::notes_for(species, rng);
        const int label = synth::label_rule(age, species);

        std::ostringstream name;
        name << "img_" << std::setw(6) << std::setfill('0') << r << ".vec";

        // Weak label-correlated image features; the strong signal stays tabular.
        std::vector<double> feat(synth::kSidecarDim);
        const double shift = label == 1 ? 0.2 : -0.2;
        for (auto& v : feat) v = shift + rng.normal();
        ds.sidecars[name.str()] = std::move(feat);

        ds.table.cells.push_back({std::to_string(age), species, notes, name.str(),
                                  std::to_string(label)});
    }
    ds.table.validate();
    return ds;
}

// One whitespace-separated real vector per file, filename equal to the cell.
inline void write_sidecar_files(const SyntheticDataset& ds, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    for (const auto& [name, vec] : ds.sidecars) {
        std::ofstream out(dir / name);
        if (!out) throw std::runtime_error("cannot write sidecar: " + (dir / name).string());
        out.precision(17);
        for (std::size_t i = 0; i < vec.size(); ++i) {
            if (i > 0) out << ' ';
            out << vec[i];
        }
        out << '\n';
    }
}

inline std::vector<double> read_sidecar_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("missing sidecar feature file: " + path.string());
    std::vector<double> vec;
    double v = 0.0;
    while (in >> v) vec.push_back(v);
    if (vec.empty()) throw std::runtime_error("empty sidecar feature file: " + path.string());
    return vec;
}

// Writes table.csv plus sidecar files under dir; the CSV keeps relative
// sidecar names so the directory is relocatable.
inline void write_dataset(const SyntheticDataset& ds, const std::filesystem::path& dir,
                          const std::string& csv_name = "table.csv") {
    std::filesystem::create_directories(dir);
    save_table(ds.table, dir / csv_name);
    write_sidecar_files(ds, dir);
}

}  // namespace tablefuse

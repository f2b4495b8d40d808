#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "c2f/matrix.hpp"

namespace c2f {

struct VideoRecord {
    std::string id;
    Matrix features;                 // T x d
    std::vector<int> frame_labels;   // length T
    int activity = 0;                // in [0, K)
};

struct ClassMapping {
    std::vector<std::string> names;  // index -> name
    std::map<std::string, int> index;

    int size() const { return static_cast<int>(names.size()); }
    int require(const std::string& name, int line) const;
};

// Binary feature container: "C2FF", version u32=1, T u32, d u32,
// then T*d little-endian float32, row-major.
Matrix load_features(const std::string& path);
void write_features(const std::string& path, const Matrix& f);

ClassMapping load_mapping(const std::string& path);
void write_mapping(const std::string& path, const std::vector<std::string>& names);

// One action name per line, line t = frame t.
std::vector<int> load_labels(const std::string& path, const ClassMapping& mapping);
void write_labels(const std::string& path, const std::vector<int>& labels, const ClassMapping& mapping);

std::vector<std::string> load_split(const std::string& path);
void write_split(const std::string& path, const std::vector<std::string>& ids);

// Lines "<video id> <activity index>".
std::map<std::string, int> load_activities(const std::string& path);
void write_activities(const std::string& path, const std::vector<VideoRecord>& records);

struct SyntheticSpec {
    std::uint64_t seed = 0;
    int num_videos = 20;
    int num_classes = 6;
    int num_activities = 3;
    int d = 16;
    int t_min = 480;  // video duration range
    int t_max = 544;
    int actions_min = 3;  // segments per video
    int actions_max = 8;
    double noise_scale = 0.1;
    std::vector<std::vector<int>> activity_subsets;  // per activity, nonempty in [0, C)
    std::vector<std::vector<double>> class_means;    // C vectors of length d, pairwise distinct

    void validate() const;
};

// Fills subsets (classes dealt round-robin, disjoint) and separated class means.
SyntheticSpec default_synthetic_spec(int num_videos, int num_classes, int num_activities, int d,
                                     std::uint64_t seed);

std::vector<VideoRecord> make_synthetic(const SyntheticSpec& spec);

// Writes features/<id>.bin, labels/<id>.txt, mapping.txt, activities.txt.
void write_dataset(const std::string& dir, const std::vector<VideoRecord>& records,
                   const ClassMapping& mapping);
struct Dataset {
    std::vector<VideoRecord> videos;
    ClassMapping mapping;
    int num_activities = 0;
};
Dataset load_dataset(const std::string& dir);

struct Fold {
    std::vector<std::string> train;
    std::vector<std::string> test;
};
std::vector<Fold> kfold_splits(const std::vector<std::string>& ids, int k, std::uint64_t seed);

}  // namespace c2f

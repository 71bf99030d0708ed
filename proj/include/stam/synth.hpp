#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "stam/tensor.hpp"

namespace stam {

struct TextureClass {
    int class_id = 0;
    double weave_period_u = 4.0;  // pixels
    double weave_period_v = 6.0;
    double ridge_amplitude = 0.9;  // [0,1]
    double orientation = 0.0;      // radians
    double phase_jitter = 0.5;     // [0,1]
    double micro_noise = 0.06;     // [0,1]
};

// Palette with pairwise-distinct dominant frequency bins; k <= 16.
std::vector<TextureClass> default_texture_classes(int k);

enum class Motion { Press, Slip, Twist };

std::string to_string(Motion m);
Motion motion_from_string(const std::string& s);

struct RenderParams {
    double background_level = 0.40;
    double contact_level = 0.72;   // mean brightness inside contact
    double contact_gain = 0.40;    // texture contrast inside contact
    double sensor_noise = 0.01;    // gaussian sigma outside contact
    double illumination_gain = 0.03;
    int marker_pitch = 8;          // dark dot lattice spacing, px
    double marker_darkness = 0.35; // multiplier at marker pixels
    double press_radius_start = 8.5;
    double press_radius_growth = 0.9;  // px per step
    double press_radius_max = 14.0;
    double slide_radius = 10.0;    // slip/twist contact radius
    double slip_velocity = 2.0;    // px per step along +x
    double twist_step_deg = 5.0;
};

// Sum of two oriented gratings plus jittered phase and a gaussian micro
// field, clamped to [0,1]; zero amplitude and noise give a flat 0.5 map.
TensorPtr generate_texture(const TextureClass& cls, int h, int w, std::uint64_t seed);

struct FramePair {
    TensorPtr frame;  // [H,W,1] in [0,1]
    TensorPtr mask;   // [H,W], binary
};

class Rng;

// Circular contact window over the motion-transformed heightmap with a
// fixed illumination gradient and marker lattice; background elsewhere.
FramePair render_contact_frame(const TensorPtr& heightmap, Motion motion, int t,
                               const RenderParams& params, Rng& noise_rng,
                               double center_y, double center_x);

// noise-free idle sensor frame (background + illumination + markers)
TensorPtr idle_background(int h, int w, const RenderParams& params);

// mean |frame - idle background|
double frame_energy(const TensorPtr& frame, const TensorPtr& background);

struct SequenceSample {
    std::vector<TensorPtr> frames;  // [H,W,1]
    int label = 0;
    Motion motion = Motion::Press;
    int onset_index = 0;
    std::vector<TensorPtr> contact_masks;  // [H,W]
};

SequenceSample generate_sequence(const TextureClass& cls, Motion motion, int n_total,
                                 int noise_prefix, int h, int w, std::uint64_t seed,
                                 const RenderParams& params = {});

// First index whose mean absolute deviation from the per-pixel temporal
// minimum exceeds tau; frames count if never exceeded.
int detect_first_contact(const std::vector<TensorPtr>& frames, double tau = 0.05);

// --- dataset ------------------------------------------------------------

enum class Split { Train, Val, Test };
enum class WindowMode { FromOnset, FromStart };

std::string to_string(Split s);
Split split_from_string(const std::string& s);
std::string to_string(WindowMode w);
WindowMode window_from_string(const std::string& s);

struct DatasetManifest {
    std::uint64_t seed = 1;
    int classes = 10;
    int sequences_per_class = 60;
    int frame_h = 32;
    int frame_w = 32;
    int frames_per_sequence = 12;
    int noise_prefix_min = 1;  // 0/0 disables the noisy prefix
    int noise_prefix_max = 3;
    int motion_press = 7;
    int motion_slip = 1;
    int motion_twist = 2;
    RenderParams render;

    std::string echo() const;           // canonical key = value text
    std::uint64_t hash() const;         // FNV-1a over echo()
    void validate() const;
};

struct SequenceRecord {
    int id = 0;
    int label = 0;
    Motion motion = Motion::Press;
    int onset_index = 0;
    Split split = Split::Train;
    std::string path;  // frame file, relative to the dataset dir
};

struct DatasetIndex {
    std::filesystem::path dir;
    DatasetManifest manifest;
    std::vector<SequenceRecord> records;

    std::vector<int> split_ids(Split s) const;
};

// Writes per-sequence TSEQ1 files, index.tsv and manifest.txt; 7:2:1
// stratified split, deterministic per seed.
void build_dataset(const DatasetManifest& manifest, const std::filesystem::path& dir);

DatasetIndex load_dataset_index(const std::filesystem::path& dir);

void save_sequence_file(const SequenceSample& sample, const std::filesystem::path& path);
SequenceSample load_sequence_file(const std::filesystem::path& path);

// Fully decoded dataset; sequences align with index.records.
struct Dataset {
    DatasetIndex index;
    std::vector<SequenceSample> sequences;
};

Dataset load_dataset(const std::filesystem::path& dir);

struct LoadedSample {
    int sequence_id = 0;
    int label = 0;
    std::vector<TensorPtr> frames;
    std::vector<TensorPtr> masks;
};

// Slices n frames per id; ids without enough frames are reported in
// `skipped` (when given) instead of failing the whole batch.
std::vector<LoadedSample> load_batch(const Dataset& dataset, const std::vector<int>& ids,
                                     WindowMode window, int n,
                                     std::vector<int>* skipped = nullptr);

}  // namespace stam

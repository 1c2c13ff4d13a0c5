#pragma once

#include "uwstereo/bubbles.hpp"
#include "uwstereo/image.hpp"
#include "uwstereo/matcher.hpp"
#include "uwstereo/nn/train.hpp"
#include "uwstereo/pipeline.hpp"
#include "uwstereo/recon3d.hpp"
#include "uwstereo/segmenter.hpp"
#include "uwstereo/texture.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace uwstereo::harness {

/// Invalid configuration or command line (exit code 1).
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Non-finite values during training or inference (exit code 3).
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum ExitCode { kOk = 0, kUsage = 1, kData = 2, kNumerical = 3 };

/// Independent stream seed for a named consumer of the root seed.
std::uint64_t derive_seed(std::uint64_t root, std::string_view stream);

/// Every section with its defaults. Unknown keys in user configs are rejected.
nlohmann::json default_config();

/// "a.b.c=value"; the value is parsed as JSON when possible, else taken as a string.
void apply_override(nlohmann::json& cfg, const std::string& assignment);

struct PipelineConfig {
    nlohmann::json raw;  // merged and validated
    std::uint64_t seed = 1;

    std::optional<std::filesystem::path> calibration, matcher, segmenter, restorer, detector, dataset;
    double depth_hint = 0.6;  // m, for rectification

    stereo::StereoConfig stereo;
    stereo::MatcherConfig matcher_net;
    stereo::PairSamplingConfig sampling;
    seg::SegConfig seg;
    seg::AugmentConfig seg_augment;
    texture::TextureConfig texture;
    bubbles::ClassParams bubbles;
    std::vector<bubbles::Condition> conditions;
    nn::TrainConfig train_matcher, train_transfer, train_segmenter, train_texture;
    double eval_threshold = 1.0;  // bad-pixel threshold, px

    /// Parses and validates a merged config; errors name the field.
    static PipelineConfig from_json(const nlohmann::json& j);
    /// FNV-1a of the canonical dump, hex.
    std::string hash() const;
};

/// default_config() <- file (when given) <- overrides, validated. Referenced
/// input files must exist.
PipelineConfig load_config(const std::optional<std::filesystem::path>& file,
                           const std::vector<std::string>& overrides);

struct LoadedFrame {
    StereoFrame frame;
    std::string condition = "clean";
    std::filesystem::path dir;
    bool mask_defaulted = false;  // no mask0.png: full mask substituted
};

struct Dataset {
    std::vector<LoadedFrame> frames;
    std::vector<std::pair<std::string, std::string>> skipped;  // id, reason
};

/// A manifest.json (or a directory holding one), a single frame directory, or
/// a tree of frame directories (any directory with im0.png). Frames that
/// cannot be read are skipped with a warning and the reason recorded.
Dataset load_dataset(const std::filesystem::path& manifest_or_dir);

/// Writes im0/im1.png, mask0/mask1.png, disp0/disp1.pfm for what is present.
void save_frame(const std::filesystem::path& dir, const StereoFrame& frame);

/// Base dataset of rendered random scenes, one directory per frame plus a manifest.
std::vector<StereoFrame> synth_frames(int count, int width, int height, double d_min, double d_max,
                                      std::uint64_t seed);

/// Pixels scored by eval: non-occluded GT pixels inside the target mask (when
/// one was supplied with the frame).
Mask evaluation_mask(const LoadedFrame& f);

struct Method {
    std::string name;
    stereo::Matcher matcher;
};

struct FrameResult {
    std::string entry;
    std::string condition;
    std::string method;
    std::string disparity_file;  // relative to the report directory
    recon::DisparityErrors errors;
    double seconds = 0;
};

struct ReportCell {
    std::string condition;
    std::string method;
    std::size_t frames = 0;
    double rmse = 0;      // pooled over the cell's compared pixels
    double bad_rate = 0;  // pooled over the cell's GT pixels
    double coverage = 0;
};

struct ExperimentReport {
    std::vector<std::string> conditions;
    std::vector<std::string> methods;
    std::vector<FrameResult> frames;
    std::vector<ReportCell> cells;  // condition-major
    std::string config_hash;
    double threshold = 1.0;
    double seconds = 0;

    const ReportCell& cell(const std::string& condition, const std::string& method) const;
    nlohmann::json to_json() const;
    static ExperimentReport from_json(const nlohmann::json& j);
    /// report.json and report.csv (one row per cell).
    void write(const std::filesystem::path& dir) const;
};

/// Pools frame results into condition x method cells.
std::vector<ReportCell> aggregate(const std::vector<FrameResult>& frames, const std::vector<std::string>& conditions,
                                  const std::vector<std::string>& methods);

struct EvalOptions {
    stereo::StereoConfig stereo;
    double threshold = 1.0;
    const seg::Segmenter* segmenter = nullptr;  // masks for the search; else the frame's own masks
    std::vector<std::string> conditions;        // empty: every condition present
};

/// Runs every method on every frame, stores out_dir/<method>/<entry>/disp0.pfm,
/// and writes the report there.
ExperimentReport run_experiment(const Dataset& data, const std::vector<Method>& methods, const EvalOptions& opt,
                                const std::filesystem::path& out_dir, const std::string& config_hash);

/// Re-scores every stored disparity file of a report against the dataset.
ExperimentReport rescore(const ExperimentReport& report, const Dataset& data, const std::filesystem::path& report_dir);

}  // namespace uwstereo::harness

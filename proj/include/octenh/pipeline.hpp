#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "octenh/image.hpp"
#include "octenh/maskgen.hpp"
#include "octenh/net.hpp"
#include "octenh/objectives.hpp"
#include "octenh/simulate.hpp"

namespace octenh {

enum class Regime { KnownPsf, UnknownPsf };

// Unknown-PSF regime trains two models from the same estimated kernel:
// Sharp uses it as-is, Narrow shrinks its width by narrow_factor.
enum class ModelVariant { Sharp, Narrow };

struct PsfSpec {
    std::string type = "gaussian"; // gaussian | sidelobe | delta
    double fwhm_um = 7.0;
    double lobe_ratio = 0.0;
    std::ptrdiff_t lobe_offset_px = 0;
    std::size_t support_px = 21;

    Psf make(double pitch_z_um, double width_scale = 1.0) const;
    void validate() const;
};

struct TrainConfig {
    Regime regime = Regime::KnownPsf;
    ModelVariant variant = ModelVariant::Sharp;
    LossWeights weights{1.0, 1.0, 0.0}; // regime defaults applied on parse
    double lr = 5e-4;
    std::size_t epochs = 100;
    std::size_t batch_size = 4;
    std::size_t g = 4; // shifts per frame per step
    PsfSpec psf;
    std::size_t interp_factor = 1; // 1 = acquisition already at target sampling
    std::uint64_t seed = 1;
    std::size_t depth = 3;
    std::size_t base_channels = 16;
    std::string precision = "f32"; // f32 | f64
    double narrow_factor = 0.5;
    double mask_tau = 3.0;
    BilateralParams bilateral;
    double noise_sigma = 0.0; // synthetic measurement noise (known-PSF regime)

    void validate() const;
};

// JSON round trip. Parsing applies regime-dependent defaults for `weights`
// and `lr` when the document omits them: known-psf (1,1,0) lr 5e-4;
// unknown-psf (1,10,10), lr 5e-4 sharp / 1e-3 narrow.
TrainConfig train_config_from_json(const std::string& text);
std::string train_config_to_json(const TrainConfig& c);

PhantomSpec phantom_spec_from_json(const std::string& text);
std::string phantom_spec_to_json(const PhantomSpec& s);
PsfSpec psf_spec_from_json(const std::string& text);
std::string psf_spec_to_json(const PsfSpec& p);

struct EpochStats {
    std::size_t epoch = 0;
    double l1 = 0.0, l2 = 0.0, l3 = 0.0, total = 0.0;
};

struct TrainOutput {
    Checkpoint checkpoint;
    std::vector<EpochStats> history;
};

// Self-supervised training. Known-PSF regime: `frames` are clean ground truth,
// degraded (+ optional noise) internally. Unknown-PSF regime: `frames` are the
// measured inputs. Masks come from the surface finder in both regimes.
// Passing `resume` continues an interrupted run bit-exactly.
TrainOutput train(const TrainConfig& cfg, const std::vector<BFrame>& frames,
                  const Checkpoint* resume = nullptr);

// Supervised reference: identical plumbing, mean-squared error against the
// clean frames (known-PSF regime only).
TrainOutput train_supervised_reference(const TrainConfig& cfg, const std::vector<BFrame>& gt);

// Single forward pass (double precision). Frames whose dims are not divisible
// by 2^depth are circularly padded and cropped back.
BFrame enhance(const Checkpoint& ckpt, const BFrame& frame);

struct RecurrentResult {
    std::vector<BFrame> steps; // steps[k] = output after k+1 applications
    BFrame final;              // == input when step count is 0
};

// out_k = net(blend_input * input + (1 - blend_input) * out_{k-1}), out_0 = input.
RecurrentResult enhance_recurrent(const Checkpoint& ckpt, const BFrame& frame,
                                  std::size_t steps, double blend_input = 0.3);

struct DatasetSplit {
    std::vector<std::size_t> train, val, test;
};

// Shuffled ratio split; sizes by largest remainder so they sum to n exactly.
DatasetSplit split_dataset(std::size_t n, const std::array<double, 3>& ratios,
                           std::uint64_t seed);

// Shuffled k-fold partition; folds are disjoint, sizes differ by at most 1.
std::vector<std::vector<std::size_t>> k_fold_split(std::size_t n, std::size_t k,
                                                   std::uint64_t seed);

// CSV: epoch,l1,l2,l3,total (precision 10).
void write_history_csv(const std::vector<EpochStats>& h, const std::filesystem::path& path);

// `count` phantoms from one spec: per-frame sub-seed, optional uniform jitter
// of free_space_rows by up to +-jitter_px.
std::vector<PhantomResult> make_phantom_dataset(const PhantomSpec& spec, std::size_t count,
                                                std::uint64_t seed, std::size_t jitter_px = 0);

// FNV-1a 64-bit, used for artifact digests in run manifests.
std::uint64_t fnv1a(const void* data, std::size_t n, std::uint64_t h = 0xcbf29ce484222325ull);
std::uint64_t fnv1a_file(const std::filesystem::path& path);
std::string hex64(std::uint64_t v);

} // namespace octenh

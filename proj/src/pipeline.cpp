#include "octenh/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "json_detail.hpp"

namespace octenh {

// --- PSF / config ------------------------------------------------------------

void PsfSpec::validate() const {
    if (type != "gaussian" && type != "sidelobe" && type != "delta")
        throw BadConfig("unknown psf type: " + type);
    if (type != "delta" && !(fwhm_um > 0)) throw BadConfig("psf fwhm must be positive");
    if (support_px < 3 || support_px % 2 == 0) throw BadConfig("psf support must be odd and >= 3");
}

Psf PsfSpec::make(double pitch_z_um, double width_scale) const {
    validate();
    if (type == "delta") return delta_psf(support_px, pitch_z_um);
    if (type == "sidelobe")
        return sidelobe_psf(fwhm_um * width_scale, pitch_z_um, lobe_ratio, lobe_offset_px,
                            support_px);
    return gaussian_psf(fwhm_um * width_scale, pitch_z_um, support_px);
}

void TrainConfig::validate() const {
    weights.validate();
    psf.validate();
    bilateral.validate();
    if (!(lr > 0) || !std::isfinite(lr)) throw BadConfig("lr must be positive");
    if (epochs == 0) throw BadConfig("epochs must be >= 1");
    if (batch_size == 0) throw BadConfig("batch_size must be >= 1");
    if (g == 0) throw BadConfig("g must be >= 1");
    if (interp_factor == 0) throw BadConfig("interp_factor must be >= 1");
    if (depth < 1 || depth > 4) throw BadConfig("depth must be in [1,4]");
    if (base_channels < 4 || base_channels > 64) throw BadConfig("base_channels must be in [4,64]");
    if (precision != "f32" && precision != "f64") throw BadConfig("precision must be f32 or f64");
    if (!(narrow_factor > 0) || narrow_factor > 1) throw BadConfig("narrow_factor must be in (0,1]");
    if (!(mask_tau > 0)) throw BadConfig("mask_tau must be positive");
    if (noise_sigma < 0 || !std::isfinite(noise_sigma)) throw BadConfig("noise_sigma must be >= 0");
    if (regime == Regime::KnownPsf && weights.lambda1 <= 0)
        throw BadConfig("known-psf regime needs a positive measurement-consistency weight");
}

namespace {

Regime regime_from_string(const std::string& s) {
    if (s == "known_psf") return Regime::KnownPsf;
    if (s == "unknown_psf") return Regime::UnknownPsf;
    throw BadConfig("regime must be known_psf or unknown_psf");
}

std::string regime_to_string(Regime r) {
    return r == Regime::KnownPsf ? "known_psf" : "unknown_psf";
}

ModelVariant variant_from_string(const std::string& s) {
    if (s == "sharp") return ModelVariant::Sharp;
    if (s == "narrow") return ModelVariant::Narrow;
    throw BadConfig("variant must be sharp or narrow");
}

std::string variant_to_string(ModelVariant v) {
    return v == ModelVariant::Sharp ? "sharp" : "narrow";
}

} // namespace

namespace detail {

TrainConfig parse_train_config(const nlohmann::json& j) {
    TrainConfig c;
    try {
        c.regime = regime_from_string(j.value("regime", std::string("known_psf")));
        c.variant = variant_from_string(j.value("variant", std::string("sharp")));
        // regime defaults, overridable per field
        if (c.regime == Regime::KnownPsf) {
            c.weights = {1.0, 1.0, 0.0};
            c.lr = 5e-4;
        } else {
            c.weights = {1.0, 10.0, 10.0};
            c.lr = c.variant == ModelVariant::Narrow ? 1e-3 : 5e-4;
        }
        if (j.contains("weights")) {
            const auto& w = j.at("weights");
            c.weights.lambda1 = w.value("lambda1", c.weights.lambda1);
            c.weights.lambda2 = w.value("lambda2", c.weights.lambda2);
            c.weights.lambda3 = w.value("lambda3", c.weights.lambda3);
        }
        c.lr = j.value("lr", c.lr);
        c.epochs = j.value("epochs", c.epochs);
        c.batch_size = j.value("batch_size", c.batch_size);
        c.g = j.value("g", c.g);
        if (j.contains("psf")) parse_psf_spec(j.at("psf"), c.psf);
        c.interp_factor = j.value("interp_factor", c.interp_factor);
        c.seed = j.value("seed", c.seed);
        c.depth = j.value("depth", c.depth);
        c.base_channels = j.value("base_channels", c.base_channels);
        c.precision = j.value("precision", c.precision);
        c.narrow_factor = j.value("narrow_factor", c.narrow_factor);
        c.mask_tau = j.value("mask_tau", c.mask_tau);
        if (j.contains("bilateral")) parse_bilateral(j.at("bilateral"), c.bilateral);
        c.noise_sigma = j.value("noise_sigma", c.noise_sigma);
    } catch (const nlohmann::json::exception& e) {
        throw BadConfig(std::string("bad config field: ") + e.what());
    }
    c.validate();
    return c;
}

nlohmann::json dump_train_config(const TrainConfig& c) {
    nlohmann::json j;
    j["regime"] = regime_to_string(c.regime);
    j["variant"] = variant_to_string(c.variant);
    j["weights"] = {{"lambda1", c.weights.lambda1},
                    {"lambda2", c.weights.lambda2},
                    {"lambda3", c.weights.lambda3}};
    j["lr"] = c.lr;
    j["epochs"] = c.epochs;
    j["batch_size"] = c.batch_size;
    j["g"] = c.g;
    j["psf"] = dump_psf_spec(c.psf);
    j["interp_factor"] = c.interp_factor;
    j["seed"] = c.seed;
    j["depth"] = c.depth;
    j["base_channels"] = c.base_channels;
    j["precision"] = c.precision;
    j["narrow_factor"] = c.narrow_factor;
    j["mask_tau"] = c.mask_tau;
    j["bilateral"] = dump_bilateral(c.bilateral);
    j["noise_sigma"] = c.noise_sigma;
    return j;
}

} // namespace detail

TrainConfig train_config_from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw BadConfig(std::string("config is not valid json: ") + e.what());
    }
    return detail::parse_train_config(j);
}

std::string train_config_to_json(const TrainConfig& c) {
    return detail::dump_train_config(c).dump(2);
}

PhantomSpec phantom_spec_from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw BadConfig(std::string("phantom spec is not valid json: ") + e.what());
    }
    try {
        PhantomSpec s = detail::parse_phantom_spec(j);
        s.validate();
        return s;
    } catch (const nlohmann::json::exception& e) {
        throw BadConfig(std::string("bad phantom spec field: ") + e.what());
    }
}

std::string phantom_spec_to_json(const PhantomSpec& s) {
    return detail::dump_phantom_spec(s).dump(2);
}

PsfSpec psf_spec_from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw BadConfig(std::string("psf spec is not valid json: ") + e.what());
    }
    try {
        PsfSpec p;
        detail::parse_psf_spec(j, p);
        p.validate();
        return p;
    } catch (const nlohmann::json::exception& e) {
        throw BadConfig(std::string("bad psf spec field: ") + e.what());
    }
}

std::string psf_spec_to_json(const PsfSpec& p) {
    return detail::dump_psf_spec(p).dump(2);
}

// --- training ----------------------------------------------------------------

namespace {

// Streams used to derive independent deterministic sub-seeds.
constexpr std::uint64_t kStreamModelInit = 0x6d6f64656cull;
constexpr std::uint64_t kStreamNoise = 0x6e6f697365ull;
constexpr std::uint64_t kStreamEpoch = 0x65706f6368ull;

std::string config_digest(const TrainConfig& cfg) {
    const std::string s = train_config_to_json(cfg);
    return hex64(fnv1a(s.data(), s.size()));
}

struct Prepared {
    std::vector<BFrame> inputs;
    std::vector<BFrame> targets; // supervised reference only
    std::vector<Mask> masks;
    Psf psf;
    double pitch = 1.0;
};

Prepared prepare_frames(const TrainConfig& cfg, const std::vector<BFrame>& frames,
                        bool supervised) {
    if (frames.empty()) throw TooFewFrames("training needs at least one frame");
    for (const BFrame& f : frames) {
        f.validate(8);
        if (!f.same_dims(frames.front())) throw DimMismatch("training frames must share dims");
    }
    if (supervised && cfg.regime != Regime::KnownPsf)
        throw BadConfig("supervised reference needs clean frames (known-psf regime)");

    Prepared p;
    std::vector<BFrame> work;
    work.reserve(frames.size());
    for (const BFrame& f : frames)
        work.push_back(cfg.interp_factor >= 2 ? axial_interpolate(f, cfg.interp_factor) : f);
    p.pitch = work.front().pitch_z_um;

    const double scale = cfg.regime == Regime::UnknownPsf && cfg.variant == ModelVariant::Narrow
                             ? cfg.narrow_factor
                             : 1.0;
    p.psf = cfg.psf.make(p.pitch, scale);

    if (cfg.regime == Regime::KnownPsf) {
        for (std::size_t i = 0; i < work.size(); ++i) {
            BFrame in = degrade(work[i], p.psf);
            if (cfg.noise_sigma > 0)
                in = add_noise(in, cfg.noise_sigma, mix_seed(cfg.seed, kStreamNoise + i));
            p.inputs.push_back(std::move(in));
        }
        if (supervised) p.targets = std::move(work);
    } else {
        p.inputs = std::move(work);
    }

    const bool need_masks = supervised ? false : (cfg.weights.lambda1 > 0 || cfg.weights.lambda3 > 0);
    if (need_masks)
        for (const BFrame& in : p.inputs)
            p.masks.push_back(generate_mask(in, cfg.bilateral, cfg.mask_tau));
    return p;
}

// divisibility guard so training fails fast with a clear message
void check_divisible(const BFrame& f, std::size_t depth) {
    const std::size_t d = std::size_t(1) << depth;
    if (f.rows() % d != 0 || f.cols() % d != 0)
        throw DimNotDivisible("frame dims must be divisible by " + std::to_string(d) +
                              " for depth " + std::to_string(depth));
}

template <class T>
TrainOutput run_training(const TrainConfig& cfg, const Prepared& prep, const Checkpoint* resume,
                         bool supervised) {
    const std::size_t n_frames = prep.inputs.size();
    check_divisible(prep.inputs.front(), cfg.depth);

    std::vector<Tensor<T>> inputs, masks, targets;
    for (const BFrame& f : prep.inputs) inputs.push_back(tensor_from_frame<T>(f));
    for (const Mask& m : prep.masks) masks.push_back(tensor_from_frame<T>(m.to_frame()));
    for (const BFrame& f : prep.targets) targets.push_back(tensor_from_frame<T>(f));

    Model<T> model;
    AdamState<T> adam;
    adam.lr = cfg.lr;
    std::uint64_t start_epoch = 0;
    if (resume) {
        if (resume->depth != cfg.depth || resume->base_channels != cfg.base_channels)
            throw BadCheckpoint("resume checkpoint does not match the configured architecture");
        model = resume->to_model<T>();
        if (resume->has_adam) resume->restore_adam(adam);
        start_epoch = resume->epoch;
        if (start_epoch >= cfg.epochs)
            throw BadConfig("resume checkpoint is already at or past the target epoch count");
    } else {
        model = build_model<T>(cfg.depth, cfg.base_channels, mix_seed(cfg.seed, kStreamModelInit));
    }

    const std::string digest = config_digest(cfg);
    GradStore<T> batch_grads, frame_grads;
    batch_grads.reset(model.param_count());
    frame_grads.reset(model.param_count());

    TrainOutput out;
    for (std::uint64_t epoch = start_epoch; epoch < cfg.epochs; ++epoch) {
        Rng erng(mix_seed(cfg.seed, kStreamEpoch + epoch));
        std::vector<std::size_t> order(n_frames);
        std::iota(order.begin(), order.end(), std::size_t(0));
        for (std::size_t i = n_frames; i > 1; --i) // Fisher-Yates
            std::swap(order[i - 1], order[erng.uniform_index(i)]);

        EpochStats stats;
        stats.epoch = epoch + 1;
        std::size_t done = 0;
        while (done < n_frames) {
            const std::size_t bsz = std::min(cfg.batch_size, n_frames - done);
            batch_grads.zero();
            for (std::size_t b = 0; b < bsz; ++b) {
                const std::size_t fi = order[done + b];
                frame_grads.zero();
                double l1 = 0, l2 = 0, l3 = 0, total = 0;
                if (supervised) {
                    LossResult<T> r = supervised_loss(inputs[fi], model, targets[fi]);
                    total = r.value;
                    l1 = r.value;
                    frame_grads = std::move(r.grads);
                } else {
                    ShiftBatch shifts = ShiftBatch::draw(cfg.g, inputs[fi].rows, inputs[fi].cols, erng);
                    TotalLossResult<T> r =
                        total_loss<T>(inputs[fi], model, prep.psf,
                                      masks.empty() ? nullptr : &masks[fi],
                                      cfg.weights.lambda2 > 0 ? &shifts : nullptr, cfg.weights);
                    l1 = r.l1;
                    l2 = r.l2;
                    l3 = r.l3;
                    total = r.value;
                    frame_grads = std::move(r.grads);
                }
                if (!std::isfinite(total)) throw NonFiniteLoss("loss diverged at epoch " +
                                                               std::to_string(epoch + 1));
                stats.l1 += l1;
                stats.l2 += l2;
                stats.l3 += l3;
                stats.total += total;
                for (std::size_t k = 0; k < batch_grads.g.size(); ++k)
                    batch_grads.g[k] += frame_grads.g[k];
            }
            const T inv = static_cast<T>(1.0 / static_cast<double>(bsz));
            for (std::size_t k = 0; k < batch_grads.g.size(); ++k) batch_grads.g[k] *= inv;
            adam_step(model, batch_grads, adam);
            done += bsz;
        }
        const double invn = 1.0 / static_cast<double>(n_frames);
        stats.l1 *= invn;
        stats.l2 *= invn;
        stats.l3 *= invn;
        stats.total *= invn;
        out.history.push_back(stats);
    }

    out.checkpoint = Checkpoint::capture(model, &adam, cfg.epochs, digest);
    return out;
}

} // namespace

TrainOutput train(const TrainConfig& cfg, const std::vector<BFrame>& frames,
                  const Checkpoint* resume) {
    cfg.validate();
    Prepared prep = prepare_frames(cfg, frames, /*supervised=*/false);
    // g * (measured rows) must reach the target row count after interpolation
    if (cfg.weights.lambda2 > 0 &&
        !coverage_check(cfg.g, prep.inputs.front().rows() / cfg.interp_factor,
                        prep.inputs.front().rows()))
        throw BadConfig("equivariance shift count fails the range coverage condition");
    if (cfg.precision == "f64") return run_training<double>(cfg, prep, resume, false);
    return run_training<float>(cfg, prep, resume, false);
}

TrainOutput train_supervised_reference(const TrainConfig& cfg, const std::vector<BFrame>& gt) {
    cfg.validate();
    Prepared prep = prepare_frames(cfg, gt, /*supervised=*/true);
    if (cfg.precision == "f64") return run_training<double>(cfg, prep, nullptr, true);
    return run_training<float>(cfg, prep, nullptr, true);
}

// --- inference -----------------------------------------------------------------

namespace {

// circular pad rows/cols up to multiples of 2^depth, run, crop back
BFrame forward_padded(const Model<double>& model, const BFrame& frame) {
    const std::size_t d = std::size_t(1) << model.depth;
    const std::size_t R = frame.rows(), C = frame.cols();
    const std::size_t Rp = (R + d - 1) / d * d;
    const std::size_t Cp = (C + d - 1) / d * d;
    Workspace<double> ws;
    if (Rp == R && Cp == C) {
        const Tensor<double>& y = model.forward(tensor_from_frame<double>(frame), ws);
        return frame_from_tensor(y, frame.pitch_z_um);
    }
    Tensor<double> x(1, Rp, Cp);
    for (std::size_t r = 0; r < Rp; ++r)
        for (std::size_t c = 0; c < Cp; ++c)
            x.at(0, r, c) = frame.at(r % R, c % C);
    const Tensor<double>& y = model.forward(x, ws);
    BFrame out(R, C, frame.pitch_z_um);
    for (std::size_t r = 0; r < R; ++r)
        for (std::size_t c = 0; c < C; ++c)
            out.at(r, c) = std::max(0.0, y.at(0, r, c));
    return out;
}

} // namespace

BFrame enhance(const Checkpoint& ckpt, const BFrame& frame) {
    frame.validate();
    Model<double> model = ckpt.to_model<double>();
    return forward_padded(model, frame);
}

RecurrentResult enhance_recurrent(const Checkpoint& ckpt, const BFrame& frame, std::size_t steps,
                                  double blend_input) {
    frame.validate();
    if (!(blend_input >= 0.0 && blend_input <= 1.0))
        throw BadConfig("blend_input must be in [0,1]");
    Model<double> model = ckpt.to_model<double>();
    RecurrentResult res;
    res.final = frame;
    for (std::size_t k = 0; k < steps; ++k) {
        BFrame blended(frame.rows(), frame.cols(), frame.pitch_z_um);
        for (std::size_t i = 0; i < blended.size(); ++i)
            blended.data[i] = blend_input * frame.data[i] + (1.0 - blend_input) * res.final.data[i];
        res.final = forward_padded(model, blended);
        res.steps.push_back(res.final);
    }
    return res;
}

// --- dataset splits --------------------------------------------------------------

namespace {

std::vector<std::size_t> shuffled_indices(std::size_t n, std::uint64_t seed) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t(0));
    Rng rng(mix_seed(seed, 0x73706c6974ull));
    for (std::size_t i = n; i > 1; --i) std::swap(idx[i - 1], idx[rng.uniform_index(i)]);
    return idx;
}

} // namespace

DatasetSplit split_dataset(std::size_t n, const std::array<double, 3>& ratios,
                           std::uint64_t seed) {
    double sum = 0;
    for (double r : ratios) {
        if (r < 0 || !std::isfinite(r)) throw BadConfig("split ratios must be non-negative");
        sum += r;
    }
    if (!(sum > 0)) throw BadConfig("split ratios must not all be zero");
    if (n == 0) throw TooFewFrames("cannot split an empty dataset");

    // largest-remainder apportionment so the sizes sum to n exactly
    std::array<double, 3> exact{};
    std::array<std::size_t, 3> sizes{};
    std::size_t assigned = 0;
    for (int i = 0; i < 3; ++i) {
        exact[i] = static_cast<double>(n) * ratios[i] / sum;
        sizes[i] = static_cast<std::size_t>(std::floor(exact[i]));
        assigned += sizes[i];
    }
    std::array<int, 3> by_rem{0, 1, 2};
    std::sort(by_rem.begin(), by_rem.end(), [&](int a, int b) {
        const double ra = exact[a] - std::floor(exact[a]);
        const double rb = exact[b] - std::floor(exact[b]);
        if (ra != rb) return ra > rb;
        return a < b;
    });
    for (std::size_t k = 0; assigned < n; ++k, ++assigned) sizes[by_rem[k % 3]] += 1;

    const std::vector<std::size_t> idx = shuffled_indices(n, seed);
    DatasetSplit s;
    s.train.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(sizes[0]));
    s.val.assign(idx.begin() + static_cast<std::ptrdiff_t>(sizes[0]),
                 idx.begin() + static_cast<std::ptrdiff_t>(sizes[0] + sizes[1]));
    s.test.assign(idx.begin() + static_cast<std::ptrdiff_t>(sizes[0] + sizes[1]), idx.end());
    return s;
}

std::vector<std::vector<std::size_t>> k_fold_split(std::size_t n, std::size_t k,
                                                   std::uint64_t seed) {
    if (k == 0 || k > n) throw BadConfig("fold count must be in [1, n]");
    const std::vector<std::size_t> idx = shuffled_indices(n, seed);
    std::vector<std::vector<std::size_t>> folds(k);
    for (std::size_t i = 0; i < n; ++i) folds[i % k].push_back(idx[i]);
    return folds;
}

// --- misc helpers ---------------------------------------------------------------

void write_history_csv(const std::vector<EpochStats>& h, const std::filesystem::path& path) {
    std::ofstream os(path);
    if (!os) throw IoFailure("cannot open for write: " + path.string());
    os << "epoch,l1,l2,l3,total\n";
    os.precision(10);
    for (const EpochStats& e : h)
        os << e.epoch << ',' << e.l1 << ',' << e.l2 << ',' << e.l3 << ',' << e.total << '\n';
    if (!os) throw IoFailure("write failed: " + path.string());
}

std::vector<PhantomResult> make_phantom_dataset(const PhantomSpec& spec, std::size_t count,
                                                std::uint64_t seed, std::size_t jitter_px) {
    if (count == 0) throw BadConfig("phantom count must be >= 1");
    std::vector<PhantomResult> out;
    out.reserve(count);
    Rng jrng(mix_seed(seed, 0x6a697474ull));
    for (std::size_t i = 0; i < count; ++i) {
        PhantomSpec s = spec;
        s.seed = mix_seed(seed, i);
        if (jitter_px > 0) {
            const std::ptrdiff_t j =
                static_cast<std::ptrdiff_t>(jrng.uniform_index(2 * jitter_px + 1)) -
                static_cast<std::ptrdiff_t>(jitter_px);
            const std::ptrdiff_t fsr = static_cast<std::ptrdiff_t>(spec.free_space_rows) + j;
            s.free_space_rows = static_cast<std::size_t>(std::max<std::ptrdiff_t>(4, fsr));
        }
        out.push_back(make_phantom(s));
    }
    return out;
}

std::uint64_t fnv1a(const void* data, std::size_t n, std::uint64_t h) {
    const unsigned char* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

std::uint64_t fnv1a_file(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoFailure("cannot open: " + path.string());
    std::uint64_t h = 0xcbf29ce484222325ull;
    char buf[65536];
    while (is.read(buf, sizeof buf) || is.gcount() > 0)
        h = fnv1a(buf, static_cast<std::size_t>(is.gcount()), h);
    return h;
}

std::string hex64(std::uint64_t v) {
    static const char* digits = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i) {
        s[static_cast<std::size_t>(i)] = digits[v & 0xf];
        v >>= 4;
    }
    return s;
}

} // namespace octenh

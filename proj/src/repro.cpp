#include "octenh/repro.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <vector>

#include <json.hpp>

#include "json_detail.hpp"
#include "octenh/image.hpp"
#include "octenh/maskgen.hpp"
#include "octenh/parallel.hpp"
#include "octenh/pipeline.hpp"
#include "octenh/quality.hpp"
#include "octenh/rldeconv.hpp"

namespace octenh {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr std::uint64_t kStreamPhantom = 0x7068616eull;
constexpr std::uint64_t kStreamAcquire = 0x61637175ull;

std::string frame_name(const std::string& stem, std::size_t i, const std::string& ext) {
    std::ostringstream os;
    os << stem << '_' << std::setw(4) << std::setfill('0') << i << ext;
    return os.str();
}

Roi parse_roi(const json& j) {
    if (!j.is_array() || j.size() != 4) throw BadConfig("roi must be [row0,col0,rows,cols]");
    return Roi{j.at(0).get<std::size_t>(), j.at(1).get<std::size_t>(),
               j.at(2).get<std::size_t>(), j.at(3).get<std::size_t>()};
}

struct Artifacts {
    fs::path dir;
    std::map<std::string, std::string> digests; // name -> fnv1a hex
    std::mutex mu;

    void record(const std::string& name) {
        const std::string h = hex64(fnv1a_file(dir / name));
        std::lock_guard<std::mutex> lk(mu);
        digests[name] = h;
    }
    void save_frame(const BFrame& f, const std::string& name, double lo, double hi) {
        write_octb(f, dir / name);
        record(name);
        const std::string pgm = name.substr(0, name.size() - 5) + ".pgm";
        export_pgm16(f, dir / pgm, lo, hi);
        record(pgm);
    }
    void save_text(const std::string& text, const std::string& name) {
        std::ofstream os(dir / name, std::ios::binary);
        if (!os) throw IoFailure("cannot open for write: " + (dir / name).string());
        os << text;
        os.close();
        record(name);
    }
};

} // namespace

ReproResult run_repro(const std::string& manifest_text, const std::filesystem::path& out_dir,
                      std::size_t threads) {
    json m;
    try {
        m = json::parse(manifest_text);
    } catch (const json::exception& e) {
        throw BadConfig(std::string("manifest is not valid json: ") + e.what());
    }
    fs::create_directories(out_dir);

    Artifacts art;
    art.dir = out_dir;
    std::vector<std::pair<std::string, std::string>> errors; // artifact, message
    std::mutex err_mu;
    auto note_error = [&](const std::string& what, const std::string& msg) {
        std::lock_guard<std::mutex> lk(err_mu);
        errors.emplace_back(what, msg);
    };

    const std::uint64_t seed = m.value("seed", std::uint64_t(1));
    const double db_floor = m.value("export_db_floor", -60.0);
    const double db_ceil = m.value("export_db_ceil", 0.0);

    // --- phantoms ---
    if (!m.contains("phantom")) throw BadConfig("manifest needs a phantom stage");
    const json& jp = m.at("phantom");
    const std::size_t count = jp.value("count", std::size_t(1));
    PhantomSpec spec = detail::parse_phantom_spec(jp.value("spec", json::object()));
    spec.validate();
    std::vector<PhantomResult> phantoms = make_phantom_dataset(
        spec, count, mix_seed(seed, kStreamPhantom), jp.value("free_space_jitter_px", std::size_t(0)));

    std::vector<BFrame> gts;
    for (std::size_t i = 0; i < count; ++i) {
        gts.push_back(phantoms[i].gt);
        art.save_frame(gts[i], frame_name("gt", i, ".octb"), db_floor, db_ceil);
    }
    {
        std::ostringstream os;
        os << "frame,col,surface_row\n";
        for (std::size_t i = 0; i < count; ++i)
            for (std::size_t c = 0; c < phantoms[i].surface_rows.size(); ++c)
                os << i << ',' << c << ',' << phantoms[i].surface_rows[c] << '\n';
        art.save_text(os.str(), "surfaces_true.csv");
    }

    // --- acquisition ---
    std::vector<BFrame> inputs = gts;
    std::optional<Psf> acq_psf;
    if (m.contains("acquire")) {
        const json& ja = m.at("acquire");
        PsfSpec ps;
        if (ja.contains("psf")) detail::parse_psf_spec(ja.at("psf"), ps);
        acq_psf = ps.make(gts.front().pitch_z_um);
        const double sigma = ja.value("noise_sigma", 0.0);
        parallel_for_ordered(count, threads, [&](std::size_t i) {
            BFrame in = degrade(gts[i], *acq_psf);
            if (sigma > 0) in = add_noise(in, sigma, mix_seed(seed, kStreamAcquire + i));
            inputs[i] = std::move(in);
            art.save_frame(inputs[i], frame_name("input", i, ".octb"), db_floor, db_ceil);
        });
    }

    // --- masks ---
    if (m.contains("mask")) {
        const json& jm = m.at("mask");
        const double tau = jm.value("tau", 3.0);
        BilateralParams bp;
        if (jm.contains("bilateral")) detail::parse_bilateral(jm.at("bilateral"), bp);
        std::vector<std::optional<Mask>> masks(count);
        parallel_for_ordered(count, threads, [&](std::size_t i) {
            const std::string name = frame_name("mask", i, ".pgm");
            try {
                masks[i] = generate_mask(inputs[i], bp, tau);
                write_mask_pgm(*masks[i], art.dir / name);
                art.record(name);
            } catch (const Error& e) {
                note_error(name, e.what());
            }
        });
        std::ostringstream os;
        os << "frame,col,surface_row\n";
        for (std::size_t i = 0; i < count; ++i)
            if (masks[i])
                for (std::size_t c = 0; c < masks[i]->surface_rows.size(); ++c)
                    os << i << ',' << c << ',' << masks[i]->surface_rows[c] << '\n';
        art.save_text(os.str(), "surfaces_detected.csv");
    }

    // --- training ---
    std::optional<Checkpoint> ckpt;
    if (m.contains("train")) {
        TrainConfig cfg = detail::parse_train_config(m.at("train"));
        if (!m.at("train").contains("seed")) cfg.seed = seed;
        const std::vector<BFrame>& frames = cfg.regime == Regime::KnownPsf ? gts : inputs;
        TrainOutput to = train(cfg, frames);
        ckpt = std::move(to.checkpoint);
        save_checkpoint(*ckpt, (art.dir / "model.octc").string());
        art.record("model.octc");
        write_history_csv(to.history, art.dir / "history.csv");
        art.record("history.csv");
        art.save_text(train_config_to_json(cfg), "train_config.json");
    }

    // --- inference ---
    std::vector<BFrame> enhanced;
    if (m.contains("infer")) {
        if (!ckpt) throw BadConfig("infer stage needs a train stage");
        const json& ji = m.at("infer");
        const std::size_t steps = ji.value("steps", std::size_t(1));
        const double blend = ji.value("blend_input", 0.3);
        enhanced.assign(count, BFrame());
        parallel_for_ordered(count, threads, [&](std::size_t i) {
            enhanced[i] = enhance_recurrent(*ckpt, inputs[i], steps, blend).final;
            art.save_frame(enhanced[i], frame_name("out", i, ".octb"), db_floor, db_ceil);
        });
    }

    // --- richardson-lucy baseline ---
    std::vector<BFrame> rl_frames;
    if (m.contains("rl")) {
        const json& jr = m.at("rl");
        Psf psf;
        if (jr.contains("psf")) {
            PsfSpec ps;
            detail::parse_psf_spec(jr.at("psf"), ps);
            psf = ps.make(inputs.front().pitch_z_um);
        } else if (acq_psf) {
            psf = *acq_psf;
        } else {
            throw BadConfig("rl stage needs a psf (own or from acquire)");
        }
        const std::size_t iters = jr.value("iterations", std::size_t(30));
        rl_frames.assign(count, BFrame());
        parallel_for_ordered(count, threads, [&](std::size_t i) {
            rl_frames[i] = richardson_lucy(inputs[i], psf, iters);
            art.save_frame(rl_frames[i], frame_name("rl", i, ".octb"), db_floor, db_ceil);
        });
    }

    // --- metrics ---
    if (m.contains("eval")) {
        const json& je = m.at("eval");
        std::optional<Roi> signal_roi, bg_roi;
        if (je.contains("signal_roi")) signal_roi = parse_roi(je.at("signal_roi"));
        if (je.contains("bg_roi")) bg_roi = parse_roi(je.at("bg_roi"));

        MetricsReport rep;
        auto add_series = [&](const std::string& stem, const std::vector<BFrame>& series) {
            for (std::size_t i = 0; i < series.size(); ++i) {
                FrameMetrics fm;
                fm.name = frame_name(stem, i, "");
                fm.psnr_db = psnr(series[i], gts[i], 1.0);
                fm.ssim_val = ssim(series[i], gts[i]);
                fm.epi_val = epi(series[i], gts[i]);
                if (bg_roi) {
                    bg_roi->validate_within(series[i]);
                    fm.enl_val = enl(series[i], *bg_roi);
                    if (signal_roi) {
                        try {
                            SnrCnr sc = snr_cnr(series[i], *signal_roi, *bg_roi);
                            fm.snr_db = sc.snr_db;
                            fm.cnr_db = sc.cnr_db;
                        } catch (const ZeroBackgroundVariance&) {
                            // leave snr/cnr cells empty
                        }
                    }
                }
                rep.frames.push_back(std::move(fm));
            }
        };
        add_series("input", inputs);
        if (!enhanced.empty()) add_series("out", enhanced);
        if (!rl_frames.empty()) add_series("rl", rl_frames);
        rep.write_csv(art.dir / "metrics.csv");
        art.record("metrics.csv");
    }

    // --- error log + output manifest ---
    if (!errors.empty()) {
        std::sort(errors.begin(), errors.end()); // thread-order independent
        json je = json::array();
        for (const auto& [name, msg] : errors) je.push_back({{"artifact", name}, {"message", msg}});
        art.save_text(json{{"errors", je}}.dump(2) + "\n", "errors.json");
    }

    json out;
    out["seed"] = seed;
    out["manifest_digest"] = hex64(fnv1a(manifest_text.data(), manifest_text.size()));
    json ja = json::object();
    for (const auto& [name, digest] : art.digests) ja[name] = digest;
    out["artifacts"] = ja;
    ReproResult res;
    res.ok = errors.empty();
    res.manifest_out = out.dump(2) + "\n";
    {
        std::ofstream os(out_dir / "manifest_out.json", std::ios::binary);
        if (!os) throw IoFailure("cannot write manifest_out.json");
        os << res.manifest_out;
    }
    return res;
}

} // namespace octenh

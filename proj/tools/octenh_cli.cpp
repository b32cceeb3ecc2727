// Command-line front end: stage-by-stage tools plus a one-shot deterministic
// `repro` runner. Every command exits non-zero on failure and keeps per-frame
// problems in errors.json next to its outputs.

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "octenh/image.hpp"
#include "octenh/maskgen.hpp"
#include "octenh/parallel.hpp"
#include "octenh/pipeline.hpp"
#include "octenh/quality.hpp"
#include "octenh/repro.hpp"
#include "octenh/rldeconv.hpp"

namespace fs = std::filesystem;
using namespace octenh;

namespace {

std::size_t default_threads() {
    if (const char* env = std::getenv("OCTENH_THREADS")) {
        char* end = nullptr;
        const unsigned long v = std::strtoul(env, &end, 10);
        if (end && *end == '\0' && v > 0) return static_cast<std::size_t>(v);
        std::cerr << "warning: ignoring invalid OCTENH_THREADS value '" << env << "'\n";
    }
    return 1;
}

std::string read_text(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    if (!is) throw IoFailure("cannot open: " + p.string());
    std::ostringstream os;
    os << is.rdbuf();
    return os.str();
}

std::vector<fs::path> list_octb(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw IoFailure("not a directory: " + dir.string());
    std::vector<fs::path> v;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() == ".octb") v.push_back(e.path());
    std::sort(v.begin(), v.end());
    if (v.empty()) throw IoFailure("no .octb frames in " + dir.string());
    return v;
}

struct OutDir {
    fs::path dir;
    std::map<std::string, std::string> digests;
    std::mutex mu;

    explicit OutDir(const fs::path& d) : dir(d) { fs::create_directories(d); }

    void record(const std::string& name) {
        const std::string h = hex64(fnv1a_file(dir / name));
        std::lock_guard<std::mutex> lk(mu);
        digests[name] = h;
    }
    void frame(const BFrame& f, const std::string& stem, double lo, double hi) {
        write_octb(f, dir / (stem + ".octb"));
        record(stem + ".octb");
        export_pgm16(f, dir / (stem + ".pgm"), lo, hi);
        record(stem + ".pgm");
    }
    void text(const std::string& body, const std::string& name) {
        std::ofstream os(dir / name, std::ios::binary);
        if (!os) throw IoFailure("cannot open for write: " + (dir / name).string());
        os << body;
        os.close();
        record(name);
    }
    void manifest() {
        nlohmann::json a = nlohmann::json::object();
        for (const auto& [n, h] : digests) a[n] = h;
        std::ofstream os(dir / "manifest.json", std::ios::binary);
        os << nlohmann::json{{"artifacts", a}}.dump(2) << "\n";
    }
};

// returns the exit code contribution: 0 when the error list is empty
int flush_errors(OutDir& out, std::vector<std::pair<std::string, std::string>>& errors) {
    if (errors.empty()) return 0;
    std::sort(errors.begin(), errors.end());
    nlohmann::json je = nlohmann::json::array();
    for (const auto& [name, msg] : errors) {
        je.push_back({{"artifact", name}, {"message", msg}});
        std::cerr << "error: " << name << ": " << msg << "\n";
    }
    out.text(nlohmann::json{{"errors", je}}.dump(2) + "\n", "errors.json");
    return 1;
}

struct DbWindow {
    double floor_db = -60.0, ceil_db = 0.0;
    void attach(CLI::App* cmd) {
        cmd->add_option("--db-floor", floor_db, "PGM export window floor, dB");
        cmd->add_option("--db-ceil", ceil_db, "PGM export window ceiling, dB");
    }
};

std::optional<Roi> parse_roi_arg(const std::string& s) {
    if (s.empty()) return std::nullopt;
    Roi r;
    if (std::sscanf(s.c_str(), "%zu,%zu,%zu,%zu", &r.row0, &r.col0, &r.rows, &r.cols) != 4)
        throw BadConfig("roi must be row0,col0,rows,cols");
    return r;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Self-supervised axial resolution enhancement for OCT B-frames"};
    app.require_subcommand(1);
    app.fallthrough(); // accept global options (--threads) after the subcommand too

    std::size_t threads = default_threads();
    app.add_option("--threads", threads, "Worker threads (env OCTENH_THREADS)")
        ->capture_default_str();

    // --- phantom ---
    auto* cmd_ph = app.add_subcommand("phantom", "Generate layered-tissue ground-truth frames");
    fs::path ph_spec, ph_out;
    std::size_t ph_count = 8, ph_jitter = 0;
    std::uint64_t ph_seed = 1;
    DbWindow ph_db;
    cmd_ph->add_option("--spec", ph_spec, "Phantom spec JSON")->required();
    cmd_ph->add_option("--out", ph_out, "Output directory")->required();
    cmd_ph->add_option("--count", ph_count, "Number of frames");
    cmd_ph->add_option("--seed", ph_seed, "Base seed");
    cmd_ph->add_option("--jitter", ph_jitter, "Free-space row jitter, px");
    ph_db.attach(cmd_ph);

    // --- acquire ---
    auto* cmd_ac = app.add_subcommand("acquire", "Degrade frames with the axial PSF plus noise");
    fs::path ac_in, ac_out, ac_psf;
    double ac_sigma = 0.0;
    std::uint64_t ac_seed = 1;
    DbWindow ac_db;
    cmd_ac->add_option("--in", ac_in, "Input directory (.octb)")->required();
    cmd_ac->add_option("--out", ac_out, "Output directory")->required();
    cmd_ac->add_option("--psf", ac_psf, "PSF spec JSON")->required();
    cmd_ac->add_option("--sigma", ac_sigma, "Gaussian noise sigma");
    cmd_ac->add_option("--seed", ac_seed, "Noise seed");
    ac_db.attach(cmd_ac);

    // --- mask ---
    auto* cmd_mk = app.add_subcommand("mask", "Detect the tissue surface and emit binary masks");
    fs::path mk_in, mk_out;
    double mk_tau = 3.0;
    BilateralParams mk_bp;
    cmd_mk->add_option("--in", mk_in, "Input directory (.octb)")->required();
    cmd_mk->add_option("--out", mk_out, "Output directory")->required();
    cmd_mk->add_option("--tau", mk_tau, "Gradient threshold, 8-bit units");
    cmd_mk->add_option("--sigma-spatial", mk_bp.sigma_spatial, "Bilateral spatial sigma, px");
    cmd_mk->add_option("--sigma-range", mk_bp.sigma_range, "Bilateral range sigma");
    cmd_mk->add_option("--radius", mk_bp.radius, "Bilateral window radius, px");

    // --- train ---
    auto* cmd_tr = app.add_subcommand("train", "Self-supervised training");
    fs::path tr_cfg, tr_data, tr_out, tr_resume;
    bool tr_supervised = false;
    cmd_tr->add_option("--config", tr_cfg, "Training config JSON")->required();
    cmd_tr->add_option("--data", tr_data, "Frame directory (.octb)")->required();
    cmd_tr->add_option("--out", tr_out, "Output directory")->required();
    cmd_tr->add_option("--resume", tr_resume, "Checkpoint to resume from");
    cmd_tr->add_flag("--supervised-reference", tr_supervised,
                     "Train the supervised baseline instead (clean frames required)");

    // --- infer ---
    auto* cmd_in = app.add_subcommand("infer", "Recurrent enhancement of frames");
    fs::path in_ckpt, in_in, in_out;
    std::size_t in_steps = 1;
    double in_blend = 0.3;
    bool in_save_steps = false;
    DbWindow in_db;
    cmd_in->add_option("--checkpoint", in_ckpt, "Model checkpoint")->required();
    cmd_in->add_option("--in", in_in, "Input directory (.octb)")->required();
    cmd_in->add_option("--out", in_out, "Output directory")->required();
    cmd_in->add_option("--steps", in_steps, "Recurrent applications (0 copies the input)");
    cmd_in->add_option("--blend", in_blend, "Input weight of the recurrent blend");
    cmd_in->add_flag("--save-steps", in_save_steps, "Also write every intermediate step");
    in_db.attach(cmd_in);

    // --- rl ---
    auto* cmd_rl = app.add_subcommand("rl", "Richardson-Lucy baseline");
    fs::path rl_in, rl_out, rl_psf;
    std::size_t rl_iters = 30;
    DbWindow rl_db;
    cmd_rl->add_option("--in", rl_in, "Input directory (.octb)")->required();
    cmd_rl->add_option("--out", rl_out, "Output directory")->required();
    cmd_rl->add_option("--psf", rl_psf, "PSF spec JSON")->required();
    cmd_rl->add_option("--iters", rl_iters, "Iteration count");
    rl_db.attach(cmd_rl);

    // --- eval ---
    auto* cmd_ev = app.add_subcommand("eval", "Frame metrics against a reference set");
    fs::path ev_ref, ev_test, ev_out_csv;
    std::string ev_signal, ev_bg;
    cmd_ev->add_option("--ref", ev_ref, "Reference directory (.octb)")->required();
    cmd_ev->add_option("--test", ev_test, "Test directory (.octb)")->required();
    cmd_ev->add_option("--out", ev_out_csv, "Metrics CSV path")->required();
    cmd_ev->add_option("--signal-roi", ev_signal, "row0,col0,rows,cols");
    cmd_ev->add_option("--bg-roi", ev_bg, "row0,col0,rows,cols");

    // --- repro ---
    auto* cmd_rp = app.add_subcommand("repro", "Run a full manifest end to end, deterministically");
    fs::path rp_manifest, rp_out;
    cmd_rp->add_option("--manifest", rp_manifest, "Run manifest JSON")->required();
    cmd_rp->add_option("--out", rp_out, "Output directory")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (*cmd_ph) {
            PhantomSpec spec = phantom_spec_from_json(read_text(ph_spec));
            OutDir out(ph_out);
            auto phantoms = make_phantom_dataset(spec, ph_count, ph_seed, ph_jitter);
            std::ostringstream os;
            os << "frame,col,surface_row\n";
            for (std::size_t i = 0; i < phantoms.size(); ++i) {
                std::ostringstream stem;
                stem << "gt_" << std::setw(4) << std::setfill('0') << i;
                out.frame(phantoms[i].gt, stem.str(), ph_db.floor_db, ph_db.ceil_db);
                for (std::size_t c = 0; c < phantoms[i].surface_rows.size(); ++c)
                    os << i << ',' << c << ',' << phantoms[i].surface_rows[c] << '\n';
            }
            out.text(os.str(), "surfaces_true.csv");
            out.manifest();
            return 0;
        }
        if (*cmd_ac) {
            const auto files = list_octb(ac_in);
            PsfSpec ps = psf_spec_from_json(read_text(ac_psf));
            OutDir out(ac_out);
            parallel_for_ordered(files.size(), threads, [&](std::size_t i) {
                BFrame f = read_octb(files[i]);
                BFrame g = degrade(f, ps.make(f.pitch_z_um));
                if (ac_sigma > 0) g = add_noise(g, ac_sigma, mix_seed(ac_seed, i));
                out.frame(g, files[i].stem().string(), ac_db.floor_db, ac_db.ceil_db);
            });
            out.manifest();
            return 0;
        }
        if (*cmd_mk) {
            const auto files = list_octb(mk_in);
            OutDir out(mk_out);
            std::vector<std::pair<std::string, std::string>> errors;
            std::mutex err_mu;
            std::vector<std::optional<Mask>> masks(files.size());
            parallel_for_ordered(files.size(), threads, [&](std::size_t i) {
                const std::string name = files[i].stem().string() + "_mask.pgm";
                try {
                    masks[i] = generate_mask(read_octb(files[i]), mk_bp, mk_tau);
                    write_mask_pgm(*masks[i], out.dir / name);
                    out.record(name);
                } catch (const Error& e) {
                    std::lock_guard<std::mutex> lk(err_mu);
                    errors.emplace_back(name, e.what());
                }
            });
            std::ostringstream os;
            os << "frame,col,surface_row\n";
            for (std::size_t i = 0; i < files.size(); ++i)
                if (masks[i])
                    for (std::size_t c = 0; c < masks[i]->surface_rows.size(); ++c)
                        os << files[i].stem().string() << ',' << c << ','
                           << masks[i]->surface_rows[c] << '\n';
            out.text(os.str(), "surfaces_detected.csv");
            const int rc = flush_errors(out, errors);
            out.manifest();
            return rc;
        }
        if (*cmd_tr) {
            TrainConfig cfg = train_config_from_json(read_text(tr_cfg));
            std::vector<BFrame> frames;
            for (const fs::path& p : list_octb(tr_data)) frames.push_back(read_octb(p));
            std::optional<Checkpoint> resume;
            if (!tr_resume.empty()) resume = load_checkpoint(tr_resume.string());
            OutDir out(tr_out);
            TrainOutput to = tr_supervised
                                 ? train_supervised_reference(cfg, frames)
                                 : train(cfg, frames, resume ? &*resume : nullptr);
            save_checkpoint(to.checkpoint, (out.dir / "model.octc").string());
            out.record("model.octc");
            write_history_csv(to.history, out.dir / "history.csv");
            out.record("history.csv");
            out.text(train_config_to_json(cfg), "train_config.json");
            out.manifest();
            return 0;
        }
        if (*cmd_in) {
            const auto files = list_octb(in_in);
            const Checkpoint ckpt = load_checkpoint(in_ckpt.string());
            OutDir out(in_out);
            parallel_for_ordered(files.size(), threads, [&](std::size_t i) {
                const BFrame f = read_octb(files[i]);
                const std::string stem = files[i].stem().string();
                if (in_steps == 0) {
                    out.frame(f, stem + "_out", in_db.floor_db, in_db.ceil_db);
                    return;
                }
                RecurrentResult rec = enhance_recurrent(ckpt, f, in_steps, in_blend);
                if (in_save_steps)
                    for (std::size_t k = 0; k < rec.steps.size(); ++k) {
                        std::ostringstream ss;
                        ss << stem << "_step" << std::setw(2) << std::setfill('0') << k + 1;
                        out.frame(rec.steps[k], ss.str(), in_db.floor_db, in_db.ceil_db);
                    }
                out.frame(rec.final, stem + "_out", in_db.floor_db, in_db.ceil_db);
            });
            out.manifest();
            return 0;
        }
        if (*cmd_rl) {
            const auto files = list_octb(rl_in);
            PsfSpec ps = psf_spec_from_json(read_text(rl_psf));
            OutDir out(rl_out);
            parallel_for_ordered(files.size(), threads, [&](std::size_t i) {
                const BFrame f = read_octb(files[i]);
                out.frame(richardson_lucy(f, ps.make(f.pitch_z_um), rl_iters),
                          files[i].stem().string() + "_rl", rl_db.floor_db, rl_db.ceil_db);
            });
            out.manifest();
            return 0;
        }
        if (*cmd_ev) {
            const auto refs = list_octb(ev_ref);
            const auto tests = list_octb(ev_test);
            if (refs.size() != tests.size())
                throw BadConfig("reference and test sets differ in size");
            const std::optional<Roi> signal = parse_roi_arg(ev_signal);
            const std::optional<Roi> bg = parse_roi_arg(ev_bg);
            MetricsReport rep;
            rep.frames.resize(tests.size());
            std::vector<std::pair<std::string, std::string>> errors;
            std::mutex err_mu;
            parallel_for_ordered(tests.size(), threads, [&](std::size_t i) {
                FrameMetrics& fm = rep.frames[i];
                fm.name = tests[i].stem().string();
                try {
                    const BFrame ref = read_octb(refs[i]);
                    const BFrame tst = read_octb(tests[i]);
                    fm.psnr_db = psnr(tst, ref, 1.0);
                    fm.ssim_val = ssim(tst, ref);
                    fm.epi_val = epi(tst, ref);
                    if (bg) {
                        bg->validate_within(tst);
                        fm.enl_val = enl(tst, *bg);
                        if (signal) {
                            SnrCnr sc = snr_cnr(tst, *signal, *bg);
                            fm.snr_db = sc.snr_db;
                            fm.cnr_db = sc.cnr_db;
                        }
                    }
                } catch (const Error& e) {
                    std::lock_guard<std::mutex> lk(err_mu);
                    errors.emplace_back(fm.name, e.what());
                }
            });
            rep.write_csv(ev_out_csv);
            OutDir out(ev_out_csv.parent_path().empty() ? "." : ev_out_csv.parent_path());
            return flush_errors(out, errors);
        }
        if (*cmd_rp) {
            ReproResult r = run_repro(read_text(rp_manifest), rp_out, threads);
            return r.ok ? 0 : 1;
        }
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}

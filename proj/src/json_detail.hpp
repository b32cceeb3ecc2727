#pragma once

// Shared JSON (de)serializers for the config structs. Internal to the library
// sources; public APIs take/return strings so nlohmann stays out of the ABI.

#include <json.hpp>

#include "octenh/maskgen.hpp"
#include "octenh/pipeline.hpp"
#include "octenh/simulate.hpp"

namespace octenh::detail {

inline void parse_bilateral(const nlohmann::json& j, BilateralParams& b) {
    b.sigma_spatial = j.value("sigma_spatial", b.sigma_spatial);
    b.sigma_range = j.value("sigma_range", b.sigma_range);
    b.radius = j.value("radius", b.radius);
}

inline nlohmann::json dump_bilateral(const BilateralParams& b) {
    return {{"sigma_spatial", b.sigma_spatial},
            {"sigma_range", b.sigma_range},
            {"radius", b.radius}};
}

inline void parse_psf_spec(const nlohmann::json& j, PsfSpec& p) {
    p.type = j.value("type", p.type);
    p.fwhm_um = j.value("fwhm_um", p.fwhm_um);
    p.lobe_ratio = j.value("lobe_ratio", p.lobe_ratio);
    p.lobe_offset_px = j.value("lobe_offset_px", p.lobe_offset_px);
    p.support_px = j.value("support_px", p.support_px);
}

inline nlohmann::json dump_psf_spec(const PsfSpec& p) {
    return {{"type", p.type},
            {"fwhm_um", p.fwhm_um},
            {"lobe_ratio", p.lobe_ratio},
            {"lobe_offset_px", p.lobe_offset_px},
            {"support_px", p.support_px}};
}

inline PhantomSpec parse_phantom_spec(const nlohmann::json& j) {
    PhantomSpec s;
    s.rows = j.value("rows", s.rows);
    s.cols = j.value("cols", s.cols);
    s.pitch_z_um = j.value("pitch_z_um", s.pitch_z_um);
    s.free_space_rows = j.value("free_space_rows", s.free_space_rows);
    s.surface_wave_amp_px = j.value("surface_wave_amp_px", s.surface_wave_amp_px);
    s.surface_wave_period_cols = j.value("surface_wave_period_cols", s.surface_wave_period_cols);
    if (j.contains("layers"))
        for (const auto& l : j.at("layers"))
            s.layers.push_back({l.value("start_offset_px", std::size_t(0)),
                                l.value("mean_amplitude", 0.5)});
    if (j.contains("reflectors"))
        for (const auto& r : j.at("reflectors"))
            s.reflectors.push_back({r.value("row", std::size_t(0)), r.value("col", std::size_t(0)),
                                    r.value("amplitude", 1.0)});
    s.speckle_sigma = j.value("speckle_sigma", s.speckle_sigma);
    s.amp_jitter = j.value("amp_jitter", s.amp_jitter);
    s.noise_floor_sigma = j.value("noise_floor_sigma", s.noise_floor_sigma);
    s.seed = j.value("seed", s.seed);
    return s;
}

inline nlohmann::json dump_phantom_spec(const PhantomSpec& s) {
    nlohmann::json layers = nlohmann::json::array();
    for (const auto& l : s.layers)
        layers.push_back({{"start_offset_px", l.start_offset_px},
                          {"mean_amplitude", l.mean_amplitude}});
    nlohmann::json refl = nlohmann::json::array();
    for (const auto& r : s.reflectors)
        refl.push_back({{"row", r.row}, {"col", r.col}, {"amplitude", r.amplitude}});
    return {{"rows", s.rows},
            {"cols", s.cols},
            {"pitch_z_um", s.pitch_z_um},
            {"free_space_rows", s.free_space_rows},
            {"surface_wave_amp_px", s.surface_wave_amp_px},
            {"surface_wave_period_cols", s.surface_wave_period_cols},
            {"layers", layers},
            {"reflectors", refl},
            {"speckle_sigma", s.speckle_sigma},
            {"amp_jitter", s.amp_jitter},
            {"noise_floor_sigma", s.noise_floor_sigma},
            {"seed", s.seed}};
}

TrainConfig parse_train_config(const nlohmann::json& j);
nlohmann::json dump_train_config(const TrainConfig& c);

} // namespace octenh::detail

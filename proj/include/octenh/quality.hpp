#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "octenh/image.hpp"

namespace octenh {

// 10*log10(peak^2/MSE); identical frames report the documented 160 dB cap.
double psnr(const BFrame& a, const BFrame& b, double peak);

// Mean local SSIM. Gaussian window sigma 1.5, nominal size 11 (shrunk to the
// largest odd size fitting the frame), K1=0.01, K2=0.03, dynamic range 1;
// population covariances over fully-contained windows.
double ssim(const BFrame& a, const BFrame& b);

// Edge preservation: sum|d_z net| / sum|d_z orig| over axial first differences.
double epi(const BFrame& net_frame, const BFrame& orig_frame);

// mu^2/sigma^2 over the ROI (population variance); zero variance reports the
// 1e9 cap.
double enl(const BFrame& frame, const Roi& roi);

struct SnrCnr {
    double snr_db = 0.0;
    std::optional<double> cnr_db; // absent when the contrast is non-positive
};

SnrCnr snr_cnr(const BFrame& frame, const Roi& signal_roi, const Roi& bg_roi);

// Linear-interpolated full width at half maximum around a local peak, pixels.
double fwhm_of_peak(const std::vector<double>& samples, std::size_t peak_index);
double fwhm_of_peak(const ALine& aline, std::size_t peak_index);

// |DFT| of the mean of avg_cols adjacent columns centred on col; bins
// 0..rows/2, normalized so the largest bin is 1 (all-zero input stays zero).
std::vector<double> aline_spectrum(const BFrame& frame, std::size_t col, std::size_t avg_cols);

struct FrameMetrics {
    std::string name;
    double psnr_db = 0.0;
    double ssim_val = 0.0;
    double epi_val = 0.0;
    std::optional<double> enl_val;
    std::optional<double> snr_db;
    std::optional<double> cnr_db;
};

struct MetricsReport {
    std::vector<FrameMetrics> frames;

    // CSV: header frame,psnr,ssim,epi,enl,snr,cnr; one row per frame, then
    // aggregate rows "mean" and "std" (population) over present values.
    void write_csv(const std::filesystem::path& path) const;
};

} // namespace octenh

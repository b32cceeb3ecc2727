#include "octenh/quality.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>

#include "octenh/errors.hpp"

namespace octenh {

namespace {

constexpr double kPsnrCapDb = 160.0;
constexpr double kEnlCap = 1e9;

struct RoiStats {
    double mean = 0.0;
    double var = 0.0; // population
};

RoiStats roi_stats(const BFrame& frame, const Roi& roi) {
    roi.validate_within(frame);
    double mean = 0.0;
    const double n = static_cast<double>(roi.rows * roi.cols);
    for (std::size_t r = roi.row0; r < roi.row0 + roi.rows; ++r)
        for (std::size_t c = roi.col0; c < roi.col0 + roi.cols; ++c) mean += frame.at(r, c);
    mean /= n;
    double var = 0.0;
    for (std::size_t r = roi.row0; r < roi.row0 + roi.rows; ++r)
        for (std::size_t c = roi.col0; c < roi.col0 + roi.cols; ++c) {
            const double d = frame.at(r, c) - mean;
            var += d * d;
        }
    return {mean, var / n};
}

} // namespace

double psnr(const BFrame& a, const BFrame& b, double peak) {
    if (!a.same_dims(b)) throw DimMismatch("psnr needs equal dims");
    if (!(peak > 0.0)) throw InvariantViolation("psnr peak must be positive");
    double mse = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a.data[i] - b.data[i];
        mse += d * d;
    }
    mse /= static_cast<double>(a.size());
    if (mse == 0.0) return kPsnrCapDb;
    return std::min(kPsnrCapDb, 10.0 * std::log10(peak * peak / mse));
}

double ssim(const BFrame& a, const BFrame& b) {
    if (!a.same_dims(b)) throw DimMismatch("ssim needs equal dims");
    const std::size_t min_dim = std::min(a.rows(), a.cols());
    if (min_dim < 3) throw FrameTooSmall("ssim needs at least 3x3 frames");
    std::size_t win = std::min<std::size_t>(11, min_dim);
    if (win % 2 == 0) --win;
    const std::ptrdiff_t half = static_cast<std::ptrdiff_t>(win / 2);

    const double sigma = 1.5;
    std::vector<double> w(win * win);
    double wsum = 0.0;
    for (std::ptrdiff_t di = -half; di <= half; ++di)
        for (std::ptrdiff_t dj = -half; dj <= half; ++dj) {
            const double v = std::exp(-0.5 * static_cast<double>(di * di + dj * dj) / (sigma * sigma));
            w[static_cast<std::size_t>((di + half) * static_cast<std::ptrdiff_t>(win) + dj + half)] = v;
            wsum += v;
        }
    for (double& v : w) v /= wsum;

    constexpr double c1 = 0.01 * 0.01; // (K1*L)^2, L = 1
    constexpr double c2 = 0.03 * 0.03;
    double acc = 0.0;
    std::size_t count = 0;
    const std::ptrdiff_t rows = static_cast<std::ptrdiff_t>(a.rows());
    const std::ptrdiff_t cols = static_cast<std::ptrdiff_t>(a.cols());
    for (std::ptrdiff_t i = half; i < rows - half; ++i)
        for (std::ptrdiff_t j = half; j < cols - half; ++j) {
            double mx = 0.0, my = 0.0, sxx = 0.0, syy = 0.0, sxy = 0.0;
            for (std::ptrdiff_t di = -half; di <= half; ++di)
                for (std::ptrdiff_t dj = -half; dj <= half; ++dj) {
                    const double ww =
                        w[static_cast<std::size_t>((di + half) * static_cast<std::ptrdiff_t>(win) +
                                                   dj + half)];
                    const double xa = a.at(static_cast<std::size_t>(i + di),
                                           static_cast<std::size_t>(j + dj));
                    const double xb = b.at(static_cast<std::size_t>(i + di),
                                           static_cast<std::size_t>(j + dj));
                    mx += ww * xa;
                    my += ww * xb;
                    sxx += ww * xa * xa;
                    syy += ww * xb * xb;
                    sxy += ww * xa * xb;
                }
            const double vx = sxx - mx * mx;
            const double vy = syy - my * my;
            const double cxy = sxy - mx * my;
            acc += ((2.0 * mx * my + c1) * (2.0 * cxy + c2)) /
                   ((mx * mx + my * my + c1) * (vx + vy + c2));
            ++count;
        }
    return acc / static_cast<double>(count);
}

double epi(const BFrame& net_frame, const BFrame& orig_frame) {
    if (!net_frame.same_dims(orig_frame)) throw DimMismatch("epi needs equal dims");
    if (net_frame.rows() < 2) throw InvariantViolation("epi needs at least 2 rows");
    double num = 0.0, den = 0.0;
    for (std::size_t r = 0; r + 1 < net_frame.rows(); ++r)
        for (std::size_t c = 0; c < net_frame.cols(); ++c) {
            num += std::abs(net_frame.at(r + 1, c) - net_frame.at(r, c));
            den += std::abs(orig_frame.at(r + 1, c) - orig_frame.at(r, c));
        }
    if (den == 0.0) throw ZeroDenominator("reference frame has no axial gradient energy");
    return num / den;
}

double enl(const BFrame& frame, const Roi& roi) {
    const RoiStats s = roi_stats(frame, roi);
    if (s.var == 0.0) return kEnlCap;
    return std::min(kEnlCap, s.mean * s.mean / s.var);
}

SnrCnr snr_cnr(const BFrame& frame, const Roi& signal_roi, const Roi& bg_roi) {
    const RoiStats sig = roi_stats(frame, signal_roi);
    const RoiStats bg = roi_stats(frame, bg_roi);
    if (bg.var == 0.0) throw ZeroBackgroundVariance("background ROI has zero variance");
    SnrCnr out;
    out.snr_db = 10.0 * std::log10(sig.mean * sig.mean / bg.var);
    if (sig.mean > bg.mean)
        out.cnr_db = 10.0 * std::log10((sig.mean - bg.mean) / std::sqrt(sig.var + bg.var));
    return out;
}

double fwhm_of_peak(const std::vector<double>& samples, std::size_t peak_index) {
    if (peak_index >= samples.size()) throw ColOutOfRange("peak index outside the profile");
    const double peak = samples[peak_index];
    if (!(peak > 0.0)) throw InvariantViolation("peak value must be positive");
    if ((peak_index > 0 && samples[peak_index - 1] > peak) ||
        (peak_index + 1 < samples.size() && samples[peak_index + 1] > peak))
        throw InvariantViolation("peak index is not a local maximum");
    const double half = peak / 2.0;

    double left = -1.0, right = -1.0;
    for (std::size_t i = peak_index; i-- > 0;) {
        if (samples[i] <= half) {
            // linear interpolation between i and i+1
            left = static_cast<double>(i) + (half - samples[i]) / (samples[i + 1] - samples[i]);
            break;
        }
    }
    for (std::size_t i = peak_index + 1; i < samples.size(); ++i) {
        if (samples[i] <= half) {
            right = static_cast<double>(i) - (half - samples[i]) / (samples[i - 1] - samples[i]);
            break;
        }
    }
    if (left < 0.0 || right < 0.0)
        throw NoHalfCrossing("profile never falls to half maximum on both sides");
    return right - left;
}

double fwhm_of_peak(const ALine& aline, std::size_t peak_index) {
    aline.validate();
    return fwhm_of_peak(aline.depth_samples, peak_index);
}

std::vector<double> aline_spectrum(const BFrame& frame, std::size_t col, std::size_t avg_cols) {
    frame.validate_finite();
    if (avg_cols % 2 == 0 || avg_cols == 0) throw InvariantViolation("avg_cols must be odd");
    const std::size_t half = avg_cols / 2;
    if (col < half || col + half >= frame.cols())
        throw ColOutOfRange("column window extends outside the frame");

    const std::size_t m = frame.rows();
    std::vector<double> mean_col(m, 0.0);
    for (std::size_t r = 0; r < m; ++r) {
        double acc = 0.0;
        for (std::size_t c = col - half; c <= col + half; ++c) acc += frame.at(r, c);
        mean_col[r] = acc / static_cast<double>(avg_cols);
    }

    std::vector<double> mag(m / 2 + 1);
    for (std::size_t q = 0; q < mag.size(); ++q) {
        double re = 0.0, im = 0.0;
        for (std::size_t r = 0; r < m; ++r) {
            const double ph = 2.0 * std::numbers::pi * static_cast<double>(q) *
                              static_cast<double>(r) / static_cast<double>(m);
            re += mean_col[r] * std::cos(ph);
            im -= mean_col[r] * std::sin(ph);
        }
        mag[q] = std::hypot(re, im);
    }
    const double mx = *std::max_element(mag.begin(), mag.end());
    if (mx > 0.0)
        for (double& v : mag) v /= mx;
    return mag;
}

void MetricsReport::write_csv(const std::filesystem::path& path) const {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw IoFailure("cannot open " + path.string() + " for writing");
    os << "frame,psnr,ssim,epi,enl,snr,cnr\n";
    os.precision(10);

    auto put_opt = [&os](const std::optional<double>& v) {
        os << ',';
        if (v) os << *v;
    };
    for (const auto& f : frames) {
        os << f.name << ',' << f.psnr_db << ',' << f.ssim_val << ',' << f.epi_val;
        put_opt(f.enl_val);
        put_opt(f.snr_db);
        put_opt(f.cnr_db);
        os << '\n';
    }

    // aggregates over present values, population std
    auto agg = [this](auto getter) {
        double mean = 0.0, var = 0.0;
        std::size_t n = 0;
        for (const auto& f : frames) {
            auto v = getter(f);
            if (v) {
                mean += *v;
                ++n;
            }
        }
        if (n == 0) return std::pair<std::optional<double>, std::optional<double>>{{}, {}};
        mean /= static_cast<double>(n);
        for (const auto& f : frames) {
            auto v = getter(f);
            if (v) {
                const double d = *v - mean;
                var += d * d;
            }
        }
        var /= static_cast<double>(n);
        return std::pair<std::optional<double>, std::optional<double>>{mean, std::sqrt(var)};
    };

    auto psnr_a = agg([](const FrameMetrics& f) { return std::optional<double>(f.psnr_db); });
    auto ssim_a = agg([](const FrameMetrics& f) { return std::optional<double>(f.ssim_val); });
    auto epi_a = agg([](const FrameMetrics& f) { return std::optional<double>(f.epi_val); });
    auto enl_a = agg([](const FrameMetrics& f) { return f.enl_val; });
    auto snr_a = agg([](const FrameMetrics& f) { return f.snr_db; });
    auto cnr_a = agg([](const FrameMetrics& f) { return f.cnr_db; });

    auto put_row = [&](const char* name, const auto& sel) {
        os << name;
        put_opt(sel(psnr_a));
        put_opt(sel(ssim_a));
        put_opt(sel(epi_a));
        put_opt(sel(enl_a));
        put_opt(sel(snr_a));
        put_opt(sel(cnr_a));
        os << '\n';
    };
    put_row("mean", [](const auto& p) { return p.first; });
    put_row("std", [](const auto& p) { return p.second; });
    if (!os) throw IoFailure("write failed for " + path.string());
}

} // namespace octenh

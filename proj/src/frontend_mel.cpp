#include <cmath>

#include "sfac/frontend.hpp"

namespace sfac::frontend {

void MelConfig::validate() const {
    if (sample_rate_hz < 1) throw ValueError("mel: sample rate must be positive");
    if (window_samples != n_fft) throw ValueError("mel: window must equal n_fft");
    if (n_fft < 2 || (n_fft & (n_fft - 1)) != 0) {
        throw ValueError("mel: n_fft must be a power of two");
    }
    if (hop_samples < 1 || clip_samples() % hop_samples != 0) {
        throw ValueError("mel: hop must divide the clip length");
    }
    if (n_mels < 1) throw ValueError("mel: n_mels must be >= 1");
    if (!(f_min_hz < f_max_hz) || f_max_hz > sample_rate_hz / 2.0) {
        throw ValueError("mel: need f_min < f_max <= sample_rate/2");
    }
    if (log_floor <= 0.0) throw ValueError("mel: log floor must be positive");
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

void fft_radix2(std::vector<std::complex<double>>& a) {
    const std::size_t n = a.size();
    if (n == 0 || (n & (n - 1)) != 0) throw ValueError("fft: size must be a power of two");
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j |= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const double ang = -2.0 * M_PI / static_cast<double>(len);
        const std::complex<double> wlen(std::cos(ang), std::sin(ang));
        for (std::size_t i = 0; i < n; i += len) {
            std::complex<double> w(1.0, 0.0);
            for (std::size_t k = 0; k < len / 2; ++k) {
                const std::complex<double> u = a[i + k];
                const std::complex<double> v = a[i + k + len / 2] * w;
                a[i + k] = u + v;
                a[i + k + len / 2] = u - v;
                w *= wlen;
            }
        }
    }
}

Tensor mel_filterbank(const MelConfig& cfg) {
    cfg.validate();
    const int bins = cfg.n_bins();
    const double hz_per_bin = static_cast<double>(cfg.sample_rate_hz) / cfg.n_fft;
    const double mel_lo = hz_to_mel(cfg.f_min_hz);
    const double mel_hi = hz_to_mel(cfg.f_max_hz);
    // n_mels + 2 equally spaced mel points: left edge, centers, right edge.
    std::vector<double> edges(static_cast<std::size_t>(cfg.n_mels) + 2);
    for (std::size_t i = 0; i < edges.size(); ++i) {
        edges[i] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * static_cast<double>(i) /
                                          static_cast<double>(cfg.n_mels + 1));
    }
    Tensor fb({cfg.n_mels, bins});
    for (int m = 0; m < cfg.n_mels; ++m) {
        const double fl = edges[static_cast<std::size_t>(m)];
        const double fc = edges[static_cast<std::size_t>(m) + 1];
        const double fr = edges[static_cast<std::size_t>(m) + 2];
        bool any = false;
        for (int k = 0; k < bins; ++k) {
            const double f = k * hz_per_bin;
            double w = 0.0;
            if (f > fl && f < fc) {
                w = (f - fl) / (fc - fl);
            } else if (f >= fc && f < fr) {
                w = (fr - f) / (fr - fc);
            }
            if (w > 0.0) any = true;
            fb.at(m, k) = w;
        }
        if (!any) {
            throw ValueError("mel: filter " + std::to_string(m) +
                             " has no positive weight; n_mels too large for the FFT resolution");
        }
    }
    return fb;
}

MelExtractor::MelExtractor(MelConfig cfg) : cfg_(cfg), fb_(mel_filterbank(cfg)) {
    window_.resize(static_cast<std::size_t>(cfg_.window_samples));
    for (int i = 0; i < cfg_.window_samples; ++i) {
        // periodic Hann
        window_[static_cast<std::size_t>(i)] =
            0.5 - 0.5 * std::cos(2.0 * M_PI * i / cfg_.window_samples);
    }
    fft_buf_.resize(static_cast<std::size_t>(cfg_.n_fft));
}

Tensor MelExtractor::log_mel(const Clip& clip) {
    const int n = cfg_.clip_samples();
    if (static_cast<int>(clip.samples.size()) != n) {
        throw ShapeError("log_mel: clip has " + std::to_string(clip.samples.size()) +
                         " samples, expected " + std::to_string(n));
    }
    const int frames = cfg_.frame_count();
    const int bins = cfg_.n_bins();
    const int pad = cfg_.n_fft / 2;

    // reflect padding (no edge duplication)
    auto sample_at = [&](int idx) -> double {
        if (idx < 0) idx = -idx;
        if (idx >= n) idx = 2 * (n - 1) - idx;
        return clip.samples[static_cast<std::size_t>(idx)];
    };

    Tensor out({1, cfg_.n_mels, frames});
    std::vector<double> mag(static_cast<std::size_t>(bins));
    for (int t = 0; t < frames; ++t) {
        const int start = t * cfg_.hop_samples - pad;
        for (int i = 0; i < cfg_.n_fft; ++i) {
            fft_buf_[static_cast<std::size_t>(i)] = {
                sample_at(start + i) * window_[static_cast<std::size_t>(i)], 0.0};
        }
        fft_radix2(fft_buf_);
        for (int k = 0; k < bins; ++k) mag[static_cast<std::size_t>(k)] = std::abs(fft_buf_[static_cast<std::size_t>(k)]);
        for (int m = 0; m < cfg_.n_mels; ++m) {
            const double* row = fb_.data() + static_cast<std::size_t>(m) * bins;
            double acc = 0.0;
            for (int k = 0; k < bins; ++k) acc += row[k] * mag[static_cast<std::size_t>(k)];
            out.at(0, m, t) = std::log(acc + cfg_.log_floor);
        }
    }
    return out;
}

Tensor log_mel(const Clip& clip, const MelConfig& cfg) {
    MelExtractor ex(cfg);
    return ex.log_mel(clip);
}

}  // namespace sfac::frontend

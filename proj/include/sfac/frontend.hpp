#pragma once

#include <complex>
#include <string>
#include <vector>

#include "sfac/tensor.hpp"

namespace sfac::frontend {

// Log-Mel extraction settings. The defaults produce a (1, 128, 24) feature
// tensor from a 3-s clip at 16 kHz: 256-ms Hann window (4096 samples),
// 128-ms hop (2048 samples), centered framing with reflect padding, HTK mel
// scale between 0 and 8 kHz, magnitude spectrum, natural log with floor eps.
struct MelConfig {
    int sample_rate_hz = 16000;
    double clip_seconds = 3.0;
    int window_samples = 4096;
    int hop_samples = 2048;
    int n_fft = 4096;
    int n_mels = 128;
    double f_min_hz = 0.0;
    double f_max_hz = 8000.0;
    double log_floor = 1e-10;

    int clip_samples() const {
        return static_cast<int>(clip_seconds * sample_rate_hz + 0.5);
    }
    int n_bins() const { return n_fft / 2 + 1; }
    int frame_count() const { return 1 + clip_samples() / hop_samples; }
    void validate() const;
};

// A 3-s mono segment traceable to one source recording.
struct Clip {
    std::vector<double> samples;
    std::string recording_id;
    int offset_index = 0;
};

struct WavData {
    std::vector<double> samples;  // mono, normalized to [-1, 1]
    int sample_rate = 0;
};

enum class WavEncoding { Pcm16, Float32 };

// PCM 16-bit or IEEE float 32-bit; multichannel input is downmixed by mean.
WavData read_wav(const std::string& path);
void write_wav(const std::string& path, const std::vector<double>& samples, int sample_rate,
               WavEncoding enc = WavEncoding::Pcm16);

// Linear-interpolation resampling; no anti-alias filter (adequate at this
// scale, documented limitation).
std::vector<double> resample_to_16k(const std::vector<double>& samples, int src_rate);

// Non-overlapping consecutive clips; trailing remainder is discarded.
// Shorter than one clip yields an empty list.
std::vector<Clip> segment(const std::vector<double>& samples, const std::string& recording_id,
                          const MelConfig& cfg = {});

// In-place iterative radix-2 FFT; size must be a power of two.
void fft_radix2(std::vector<std::complex<double>>& a);

// Triangular mel filters, rows = mel channels, cols = FFT bins. Every filter
// must end up with at least one strictly positive weight.
Tensor mel_filterbank(const MelConfig& cfg);

double hz_to_mel(double hz);
double mel_to_hz(double mel);

class MelExtractor {
public:
    explicit MelExtractor(MelConfig cfg = {});

    // (1, n_mels, frames) log-Mel tensor; clip must hold exactly
    // cfg.clip_samples() samples. Not thread-safe (scratch buffers); use one
    // extractor per thread.
    Tensor log_mel(const Clip& clip);

    const MelConfig& config() const { return cfg_; }
    const Tensor& filterbank() const { return fb_; }

private:
    MelConfig cfg_;
    Tensor fb_;
    std::vector<double> window_;
    std::vector<std::complex<double>> fft_buf_;
};

// One-shot convenience.
Tensor log_mel(const Clip& clip, const MelConfig& cfg = {});

}  // namespace sfac::frontend

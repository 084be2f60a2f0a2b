#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <fstream>
#include <random>

#include "sfac/frontend.hpp"
#include "test_util.hpp"

using namespace sfac;
using namespace sfac::frontend;

namespace {

std::vector<double> sine(double freq_hz, double amp, int n, int rate, double phase = 0.0) {
    std::vector<double> s(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        s[static_cast<std::size_t>(i)] = amp * std::sin(2.0 * M_PI * freq_hz * i / rate + phase);
    }
    return s;
}

// independently computed HTK mel scale for oracle use
double oracle_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double oracle_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

}  // namespace

TEST_CASE("wav: pcm16 normalization and stereo mean downmix") {
    test_util::TempDir tmp("wav");

    SUBCASE("pcm16 full-scale value") {
        // hand-write a tiny pcm16 file holding +32767
        std::vector<double> s = {32767.0 / 32768.0};
        write_wav(tmp.path("one.wav"), s, 16000, WavEncoding::Pcm16);
        WavData back = read_wav(tmp.path("one.wav"));
        CHECK(back.sample_rate == 16000);
        CHECK(back.samples.size() == 1);
        CHECK(back.samples[0] == doctest::Approx(0.99997).epsilon(1e-4));
    }

    SUBCASE("opposite stereo channels cancel") {
        // write a stereo pcm16 file manually: frames (x, -x)
        std::ofstream os(tmp.path("st.wav"), std::ios::binary);
        auto u32 = [&](std::uint32_t v) { os.write(reinterpret_cast<const char*>(&v), 4); };
        auto u16 = [&](std::uint16_t v) { os.write(reinterpret_cast<const char*>(&v), 2); };
        const int n = 64;
        u32(0x46464952);  // "RIFF"
        u32(36 + n * 4);
        u32(0x45564157);  // "WAVE"
        u32(0x20746d66);  // "fmt "
        u32(16);
        u16(1);
        u16(2);
        u32(8000);
        u32(8000 * 4);
        u16(4);
        u16(16);
        u32(0x61746164);  // "data"
        u32(static_cast<std::uint32_t>(n * 4));
        for (int i = 0; i < n; ++i) {
            const std::int16_t v = static_cast<std::int16_t>(1000 + 13 * i);
            const std::int16_t neg = static_cast<std::int16_t>(-v);
            os.write(reinterpret_cast<const char*>(&v), 2);
            os.write(reinterpret_cast<const char*>(&neg), 2);
        }
        os.close();
        WavData back = read_wav(tmp.path("st.wav"));
        CHECK(back.sample_rate == 8000);
        for (double v : back.samples) CHECK(v == 0.0);
    }

    SUBCASE("float32 round trip is exact at f32 precision") {
        std::vector<double> s = sine(440.0, 0.7, 256, 16000);
        write_wav(tmp.path("f.wav"), s, 16000, WavEncoding::Float32);
        WavData back = read_wav(tmp.path("f.wav"));
        for (std::size_t i = 0; i < s.size(); ++i) {
            CHECK(back.samples[i] == doctest::Approx(s[i]).epsilon(1e-7));
        }
    }

    SUBCASE("pcm16 round trip within 1 LSB") {
        std::vector<double> s = sine(220.0, 0.5, 512, 16000);
        write_wav(tmp.path("p.wav"), s, 16000, WavEncoding::Pcm16);
        WavData back = read_wav(tmp.path("p.wav"));
        for (std::size_t i = 0; i < s.size(); ++i) {
            CHECK(std::abs(back.samples[i] - s[i]) <= 1.0 / 32768.0);
        }
    }

    SUBCASE("rejects truncation and unsupported encodings") {
        std::vector<double> s = sine(100.0, 0.5, 64, 16000);
        write_wav(tmp.path("t.wav"), s, 16000, WavEncoding::Pcm16);
        std::error_code ec;
        const auto size = std::filesystem::file_size(tmp.path("t.wav"), ec);
        std::filesystem::resize_file(tmp.path("t.wav"), size - 32, ec);
        CHECK_THROWS_AS(read_wav(tmp.path("t.wav")), FormatError);

        // 8-bit PCM is unsupported
        std::ofstream os(tmp.path("u.wav"), std::ios::binary);
        auto u32 = [&](std::uint32_t v) { os.write(reinterpret_cast<const char*>(&v), 4); };
        auto u16 = [&](std::uint16_t v) { os.write(reinterpret_cast<const char*>(&v), 2); };
        u32(0x46464952);
        u32(36 + 4);
        u32(0x45564157);
        u32(0x20746d66);
        u32(16);
        u16(1);
        u16(1);
        u32(8000);
        u32(8000);
        u16(1);
        u16(8);
        u32(0x61746164);
        u32(4);
        u32(0);
        os.close();
        CHECK_THROWS_AS(read_wav(tmp.path("u.wav")), FormatError);

        CHECK_THROWS_AS(read_wav(tmp.path("missing.wav")), FormatError);
    }
}

TEST_CASE("resample: identity, constants, and a 32 kHz sine") {
    std::vector<double> s16 = sine(100.0, 0.5, 160, 16000);
    CHECK(resample_to_16k(s16, 16000) == s16);

    std::vector<double> c(500, 0.321);
    auto rc = resample_to_16k(c, 44100);
    for (double v : rc) CHECK(v == doctest::Approx(0.321).epsilon(1e-12));

    auto s32 = sine(100.0, 0.8, 3200, 32000);
    auto down = resample_to_16k(s32, 32000);
    CHECK(down.size() == 1600);
    for (std::size_t i = 0; i < down.size(); ++i) {
        const double expect = 0.8 * std::sin(2.0 * M_PI * 100.0 * static_cast<double>(i) / 16000.0);
        CHECK(std::abs(down[i] - expect) < 1e-3);
    }

    CHECK_THROWS_AS(resample_to_16k(s16, 4000), ValueError);
}

TEST_CASE("segment: non-overlapping 3-s clips, remainder discarded") {
    MelConfig cfg;
    std::vector<double> ten_seconds(160000, 0.0);
    for (std::size_t i = 0; i < ten_seconds.size(); ++i) {
        ten_seconds[i] = static_cast<double>(i);
    }
    auto clips = segment(ten_seconds, "rec0", cfg);
    CHECK(clips.size() == 3);
    for (std::size_t k = 0; k < clips.size(); ++k) {
        CHECK(clips[k].samples.size() == 48000);
        CHECK(clips[k].recording_id == "rec0");
        CHECK(clips[k].offset_index == static_cast<int>(k));
        CHECK(clips[k].samples[0] == static_cast<double>(48000 * k));
    }

    std::vector<double> exact(48000, 1.0);
    CHECK(segment(exact, "r", cfg).size() == 1);

    std::vector<double> tiny(47999, 1.0);
    CHECK(segment(tiny, "r", cfg).empty());
}

TEST_CASE("fft matches a naive DFT") {
    std::mt19937_64 rng(42);
    const int n = 64;
    std::vector<std::complex<double>> a(n);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    for (auto& v : a) v = {dist(rng), dist(rng)};
    auto fft = a;
    fft_radix2(fft);
    for (int k = 0; k < n; ++k) {
        std::complex<double> want(0.0, 0.0);
        for (int i = 0; i < n; ++i) {
            const double ang = -2.0 * M_PI * k * i / n;
            want += a[static_cast<std::size_t>(i)] * std::complex<double>(std::cos(ang), std::sin(ang));
        }
        CHECK(std::abs(fft[static_cast<std::size_t>(k)] - want) < 1e-9);
    }
    std::vector<std::complex<double>> bad(12);
    CHECK_THROWS_AS(fft_radix2(bad), ValueError);
}

TEST_CASE("mel filterbank: validity, monotone centers, 3-mel oracle") {
    MelConfig cfg;
    Tensor fb = mel_filterbank(cfg);
    CHECK(fb.shape() == std::vector<int>{128, 2049});

    // every row has a strictly positive sum and weights >= 0
    for (int m = 0; m < 128; ++m) {
        double sum = 0.0;
        for (int k = 0; k < 2049; ++k) {
            CHECK(fb.at(m, k) >= 0.0);
            sum += fb.at(m, k);
        }
        CHECK(sum > 0.0);
    }

    // center (argmax) bins strictly increase with filter index
    int prev = -1;
    for (int m = 0; m < 128; ++m) {
        int arg = 0;
        for (int k = 1; k < 2049; ++k) {
            if (fb.at(m, k) > fb.at(m, arg)) arg = k;
        }
        CHECK(arg > prev);
        prev = arg;
    }

    // 3-mel configuration: centers match independently computed mel points
    MelConfig small;
    small.n_mels = 3;
    Tensor fb3 = mel_filterbank(small);
    const double mel_hi = oracle_mel(8000.0);
    for (int m = 0; m < 3; ++m) {
        const double center_hz = oracle_hz(mel_hi * (m + 1) / 4.0);
        int arg = 0;
        for (int k = 1; k < small.n_bins(); ++k) {
            if (fb3.at(m, k) > fb3.at(m, arg)) arg = k;
        }
        const double bin_hz = 16000.0 * arg / 4096.0;
        CHECK(std::abs(bin_hz - center_hz) <= 16000.0 / 4096.0);  // within one bin
    }

    MelConfig too_many;
    too_many.n_mels = 4000;
    CHECK_THROWS_AS(mel_filterbank(too_many), ValueError);
}

TEST_CASE("log_mel: shape, silence, tone placement") {
    MelConfig cfg;
    MelExtractor ex(cfg);

    SUBCASE("any valid clip gives (1,128,24)") {
        Clip clip{sine(350.0, 0.4, 48000, 16000), "r", 0};
        Tensor t = ex.log_mel(clip);
        CHECK(t.shape() == std::vector<int>{1, 128, 24});
        CHECK(t.all_finite());
    }

    SUBCASE("digital silence is the log floor everywhere") {
        Clip clip{std::vector<double>(48000, 0.0), "r", 0};
        Tensor t = ex.log_mel(clip);
        const double want = std::log(cfg.log_floor);
        for (std::size_t i = 0; i < t.numel(); ++i) CHECK(t[i] == want);
    }

    SUBCASE("1 kHz tone peaks at the mel bin whose center is nearest 1 kHz") {
        Clip clip{sine(1000.0, 0.5, 48000, 16000), "r", 0};
        Tensor t = ex.log_mel(clip);
        // oracle: nearest center under the HTK scale, computed independently
        const double mel_hi = oracle_mel(8000.0);
        int nearest = 0;
        double best = 1e9;
        for (int m = 0; m < 128; ++m) {
            const double center = oracle_hz(mel_hi * (m + 1) / 129.0);
            if (std::abs(center - 1000.0) < best) {
                best = std::abs(center - 1000.0);
                nearest = m;
            }
        }
        for (int frame = 0; frame < 24; ++frame) {
            int arg = 0;
            for (int m = 1; m < 128; ++m) {
                if (t.at(0, m, frame) > t.at(0, arg, frame)) arg = m;
            }
            CHECK(arg == nearest);
        }
    }

    SUBCASE("wrong clip length is rejected") {
        Clip clip{std::vector<double>(1000, 0.0), "r", 0};
        CHECK_THROWS_AS(ex.log_mel(clip), ShapeError);
    }
}

TEST_CASE("log_mel properties: frame count, gain shift, quasi-stationarity") {
    MelConfig cfg;
    CHECK(cfg.frame_count() == 1 + 48000 / 2048);
    CHECK(cfg.frame_count() == 24);

    MelExtractor ex(cfg);
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);

    // alpha-scaling shifts log features by ~log(alpha) when energies dominate eps
    std::vector<double> noise(48000);
    for (auto& v : noise) v = 0.05 * dist(rng);
    Clip base{noise, "r", 0};
    std::vector<double> scaled = noise;
    for (auto& v : scaled) v *= 10.0;
    Clip loud{scaled, "r", 0};
    Tensor a = ex.log_mel(base);
    Tensor b = ex.log_mel(loud);
    for (std::size_t i = 0; i < a.numel(); ++i) {
        CHECK(std::abs((b[i] - a[i]) - std::log(10.0)) < 1e-3);
    }

    // stationary noise: interior frames 8..16 fluctuate mildly per bin
    for (int m = 0; m < 128; ++m) {
        double mean = 0.0, var = 0.0;
        for (int f = 8; f <= 16; ++f) mean += a.at(0, m, f);
        mean /= 9.0;
        for (int f = 8; f <= 16; ++f) {
            const double d = a.at(0, m, f) - mean;
            var += d * d;
        }
        var /= 9.0;
        CHECK(std::sqrt(var) < 0.1 * std::abs(mean));
    }
}

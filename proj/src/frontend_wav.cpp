#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "sfac/frontend.hpp"

namespace sfac::frontend {

namespace {

struct Reader {
    std::ifstream is;
    std::string path;

    void bytes(void* dst, std::size_t n, const char* what) {
        is.read(reinterpret_cast<char*>(dst), static_cast<std::streamsize>(n));
        if (!is) throw FormatError("WAV: truncated while reading " + std::string(what) + " in " + path);
    }
    std::uint32_t u32(const char* what) {
        std::uint32_t v;
        bytes(&v, 4, what);
        return v;
    }
    std::uint16_t u16(const char* what) {
        std::uint16_t v;
        bytes(&v, 2, what);
        return v;
    }
};

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

}  // namespace

WavData read_wav(const std::string& path) {
    Reader r{std::ifstream(path, std::ios::binary), path};
    if (!r.is) throw FormatError("WAV: cannot open " + path);

    char id[4];
    r.bytes(id, 4, "RIFF id");
    if (std::memcmp(id, "RIFF", 4) != 0) throw FormatError("WAV: not a RIFF file: " + path);
    r.u32("RIFF size");
    r.bytes(id, 4, "WAVE id");
    if (std::memcmp(id, "WAVE", 4) != 0) throw FormatError("WAV: not a WAVE file: " + path);

    std::uint16_t format = 0, channels = 0, bits = 0;
    std::uint32_t rate = 0;
    bool have_fmt = false;
    std::vector<char> payload;

    while (r.is.peek() != EOF) {
        r.bytes(id, 4, "chunk id");
        const std::uint32_t size = r.u32("chunk size");
        if (std::memcmp(id, "fmt ", 4) == 0) {
            if (size < 16) throw FormatError("WAV: fmt chunk too small in " + path);
            format = r.u16("format tag");
            channels = r.u16("channel count");
            rate = r.u32("sample rate");
            r.u32("byte rate");
            r.u16("block align");
            bits = r.u16("bits per sample");
            std::uint32_t consumed = 16;
            if (format == kFormatExtensible) {
                if (size < 40) throw FormatError("WAV: extensible fmt chunk too small in " + path);
                r.u16("extension size");
                r.u16("valid bits");
                r.u32("channel mask");
                format = r.u16("subformat tag");
                char guid_rest[14];
                r.bytes(guid_rest, 14, "subformat guid");
                consumed = 40;
            }
            for (std::uint32_t i = consumed; i < size; ++i) r.is.get();
            have_fmt = true;
        } else if (std::memcmp(id, "data", 4) == 0) {
            payload.resize(size);
            r.bytes(payload.data(), size, "sample data");
            break;
        } else {
            r.is.seekg(size + (size & 1), std::ios::cur);  // chunks are word-aligned
            if (!r.is) throw FormatError("WAV: truncated chunk in " + path);
        }
    }

    if (!have_fmt) throw FormatError("WAV: missing fmt chunk in " + path);
    if (payload.empty()) throw FormatError("WAV: missing or empty data chunk in " + path);
    if (channels < 1) throw FormatError("WAV: zero channels in " + path);

    const bool pcm16 = format == kFormatPcm && bits == 16;
    const bool f32 = format == kFormatFloat && bits == 32;
    if (!pcm16 && !f32) {
        throw FormatError("WAV: unsupported encoding (format tag " + std::to_string(format) +
                          ", " + std::to_string(bits) + " bits) in " + path +
                          "; expected 16-bit PCM or 32-bit float");
    }

    const std::size_t bytes_per_sample = pcm16 ? 2 : 4;
    const std::size_t frame_bytes = bytes_per_sample * channels;
    if (payload.size() % frame_bytes != 0) {
        throw FormatError("WAV: data chunk is not a whole number of frames in " + path);
    }
    const std::size_t frames = payload.size() / frame_bytes;

    WavData out;
    out.sample_rate = static_cast<int>(rate);
    out.samples.resize(frames);
    for (std::size_t f = 0; f < frames; ++f) {
        double acc = 0.0;
        for (std::uint16_t c = 0; c < channels; ++c) {
            const char* p = payload.data() + f * frame_bytes + c * bytes_per_sample;
            if (pcm16) {
                std::int16_t v;
                std::memcpy(&v, p, 2);
                acc += static_cast<double>(v) / 32768.0;
            } else {
                float v;
                std::memcpy(&v, p, 4);
                acc += static_cast<double>(v);
            }
        }
        out.samples[f] = acc / channels;
    }
    return out;
}

void write_wav(const std::string& path, const std::vector<double>& samples, int sample_rate,
               WavEncoding enc) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw FormatError("WAV: cannot open for writing: " + path);

    const std::uint16_t channels = 1;
    const std::uint16_t bits = enc == WavEncoding::Pcm16 ? 16 : 32;
    const std::uint16_t format = enc == WavEncoding::Pcm16 ? kFormatPcm : kFormatFloat;
    const std::uint32_t data_size =
        static_cast<std::uint32_t>(samples.size() * (bits / 8));
    const std::uint32_t byte_rate = static_cast<std::uint32_t>(sample_rate) * channels * (bits / 8);
    const std::uint16_t block_align = channels * (bits / 8);

    auto u32 = [&](std::uint32_t v) { os.write(reinterpret_cast<const char*>(&v), 4); };
    auto u16 = [&](std::uint16_t v) { os.write(reinterpret_cast<const char*>(&v), 2); };

    os.write("RIFF", 4);
    u32(36 + data_size);
    os.write("WAVE", 4);
    os.write("fmt ", 4);
    u32(16);
    u16(format);
    u16(channels);
    u32(static_cast<std::uint32_t>(sample_rate));
    u32(byte_rate);
    u16(block_align);
    u16(bits);
    os.write("data", 4);
    u32(data_size);

    if (enc == WavEncoding::Pcm16) {
        for (double v : samples) {
            double clamped = v < -1.0 ? -1.0 : (v > 1.0 ? 1.0 : v);
            double scaled = clamped * 32768.0;
            if (scaled > 32767.0) scaled = 32767.0;
            const std::int16_t q = static_cast<std::int16_t>(std::lround(scaled));
            os.write(reinterpret_cast<const char*>(&q), 2);
        }
    } else {
        for (double v : samples) {
            const float f = static_cast<float>(v);
            os.write(reinterpret_cast<const char*>(&f), 4);
        }
    }
    if (!os) throw FormatError("WAV: write failed: " + path);
}

std::vector<double> resample_to_16k(const std::vector<double>& samples, int src_rate) {
    if (src_rate < 8000) throw ValueError("resample: source rate must be >= 8000 Hz");
    constexpr int kTarget = 16000;
    if (src_rate == kTarget || samples.empty()) return samples;
    const double ratio = static_cast<double>(src_rate) / kTarget;
    const std::size_t n_out =
        static_cast<std::size_t>(static_cast<double>(samples.size()) / ratio);
    std::vector<double> out(n_out);
    for (std::size_t i = 0; i < n_out; ++i) {
        const double pos = static_cast<double>(i) * ratio;
        const std::size_t i0 = static_cast<std::size_t>(pos);
        const double frac = pos - static_cast<double>(i0);
        const double a = samples[i0];
        const double b = i0 + 1 < samples.size() ? samples[i0 + 1] : a;
        out[i] = a + frac * (b - a);
    }
    return out;
}

std::vector<Clip> segment(const std::vector<double>& samples, const std::string& recording_id,
                          const MelConfig& cfg) {
    const std::size_t len = static_cast<std::size_t>(cfg.clip_samples());
    std::vector<Clip> clips;
    for (std::size_t start = 0; start + len <= samples.size(); start += len) {
        Clip c;
        c.samples.assign(samples.begin() + static_cast<std::ptrdiff_t>(start),
                         samples.begin() + static_cast<std::ptrdiff_t>(start + len));
        c.recording_id = recording_id;
        c.offset_index = static_cast<int>(start / len);
        clips.push_back(std::move(c));
    }
    return clips;
}

}  // namespace sfac::frontend

#include "sfac/model.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>
#include <zlib.h>

namespace sfac {

namespace {

constexpr char kMagic[4] = {'S', 'F', 'A', 'C'};
constexpr std::uint32_t kVersion = 1;
constexpr std::uint8_t kDtypeF64 = 1;

enum class Init { Zero, One, FanIn, PosEnc };

struct ParamDef {
    std::string name;
    std::vector<int> shape;
    Init init;
    int fan_in = 0;
    bool is_buffer = false;
};

// Architecture walk shared by build(), load() and the cost model. Order here
// fixes the RNG draw order, so identical seeds give identical stores.
std::vector<ParamDef> enumerate_params(const ShuffleFACConfig& cfg) {
    std::vector<ParamDef> defs;
    const bool mix = cfg.fa_gate == blocks::FAGateMode::ChannelMix;

    auto fa = [&](const std::string& prefix, int c, int f) {
        defs.push_back({prefix + ".fa.pos", {f}, Init::PosEnc, 0, false});
        if (mix) {
            defs.push_back({prefix + ".fa.att_w", {c, c}, Init::Zero, 0, false});
            defs.push_back({prefix + ".fa.att_b", {c}, Init::Zero, 0, false});
        } else {
            defs.push_back({prefix + ".fa.att_w", {1, f}, Init::Zero, 0, false});
            defs.push_back({prefix + ".fa.att_b", {1}, Init::Zero, 0, false});
        }
    };
    auto bn = [&](const std::string& prefix, int c) {
        defs.push_back({prefix + ".bn.gamma", {c}, Init::One, 0, false});
        defs.push_back({prefix + ".bn.beta", {c}, Init::Zero, 0, false});
        defs.push_back({prefix + ".bn.running_mean", {c}, Init::Zero, 0, true});
        defs.push_back({prefix + ".bn.running_var", {c}, Init::One, 0, true});
    };

    fa("expand", cfg.in_channels, cfg.in_freq);
    defs.push_back({"expand.conv.weight",
                    {cfg.gamma, cfg.in_channels, cfg.k_first, cfg.k_first},
                    Init::FanIn,
                    cfg.in_channels * cfg.k_first * cfg.k_first,
                    false});
    defs.push_back({"expand.conv.bias", {cfg.gamma}, Init::Zero, 0, false});
    bn("expand", cfg.gamma);

    const auto channels = cfg.stage_channels();
    int c_in = channels[0];
    int f = cfg.in_freq / 2;
    for (std::size_t s = 1; s < channels.size(); ++s) {
        const std::string prefix = "stage" + std::to_string(s);
        const int c_out = channels[s];
        const int c_mid = c_in / 2;
        const int g1 = fasc_group_count(c_in, c_mid);
        const int g2 = fasc_group_count(c_mid, c_out);
        fa(prefix, c_in, f);
        defs.push_back({prefix + ".pw1.weight", {c_mid, c_in / g1, 1, 1}, Init::FanIn,
                        c_in / g1, false});
        defs.push_back({prefix + ".pw1.bias", {c_mid}, Init::Zero, 0, false});
        defs.push_back({prefix + ".dw.weight", {c_mid, 1, cfg.k_dw, cfg.k_dw}, Init::FanIn,
                        cfg.k_dw * cfg.k_dw, false});
        defs.push_back({prefix + ".dw.bias", {c_mid}, Init::Zero, 0, false});
        defs.push_back({prefix + ".pw2.weight", {c_out, c_mid / g2, 1, 1}, Init::FanIn,
                        c_mid / g2, false});
        defs.push_back({prefix + ".pw2.bias", {c_out}, Init::Zero, 0, false});
        bn(prefix, c_out);
        c_in = c_out;
        f /= cfg.stage_pool()[s].first;
    }

    defs.push_back({"classifier.linear.weight", {cfg.n_classes, c_in}, Init::FanIn, c_in, false});
    defs.push_back({"classifier.linear.bias", {cfg.n_classes}, Init::Zero, 0, false});
    return defs;
}

void write_u32(std::string& buf, std::uint32_t v) {
    buf.append(reinterpret_cast<const char*>(&v), 4);
}

nlohmann::json config_to_json(const ShuffleFACConfig& cfg) {
    nlohmann::json j;
    j["gamma"] = cfg.gamma;
    j["k_first"] = cfg.k_first;
    j["k_dw"] = cfg.k_dw;
    j["n_classes"] = cfg.n_classes;
    j["fa_gate"] = blocks::to_string(cfg.fa_gate);
    j["bn_before_act"] = cfg.bn_before_act;
    j["in_channels"] = cfg.in_channels;
    j["in_freq"] = cfg.in_freq;
    j["in_time"] = cfg.in_time;
    j["bn_eps"] = cfg.bn_eps;
    j["bn_momentum"] = cfg.bn_momentum;
    return j;
}

ShuffleFACConfig config_from_json(const nlohmann::json& j) {
    ShuffleFACConfig cfg;
    cfg.gamma = j.at("gamma").get<int>();
    cfg.k_first = j.at("k_first").get<int>();
    cfg.k_dw = j.at("k_dw").get<int>();
    cfg.n_classes = j.at("n_classes").get<int>();
    cfg.fa_gate = blocks::fa_gate_from_string(j.at("fa_gate").get<std::string>());
    cfg.bn_before_act = j.at("bn_before_act").get<bool>();
    cfg.in_channels = j.at("in_channels").get<int>();
    cfg.in_freq = j.at("in_freq").get<int>();
    cfg.in_time = j.at("in_time").get<int>();
    cfg.bn_eps = j.at("bn_eps").get<double>();
    cfg.bn_momentum = j.at("bn_momentum").get<double>();
    return cfg;
}

}  // namespace

int fasc_group_count(int c_a, int c_b) {
    return (c_a % 2 == 0 && c_b % 2 == 0) ? 2 : 1;
}

void ShuffleFACConfig::validate() const {
    if (gamma < 2 || gamma % 2 != 0) {
        throw ValueError("gamma must be even and >= 2 so every channel count stays integral, got " +
                         std::to_string(gamma));
    }
    if (k_first < 1 || k_first % 2 == 0 || k_dw < 1 || k_dw % 2 == 0) {
        throw ValueError("kernel sizes must be odd and >= 1");
    }
    if (n_classes < 2) throw ValueError("n_classes must be >= 2");
    if (in_channels != 1) throw ValueError("input must be single-channel");
    int f = in_freq, t = in_time;
    for (const auto& [pf, pt] : stage_pool()) {
        if (f % pf != 0 || t % pt != 0) {
            throw ValueError("input " + std::to_string(in_freq) + "x" + std::to_string(in_time) +
                             " is not divisible by the pooling plan");
        }
        f /= pf;
        t /= pt;
    }
}

std::vector<int> ShuffleFACConfig::stage_channels() const {
    return {gamma, 2 * gamma, 4 * gamma, 8 * gamma, 8 * gamma, 8 * gamma, 8 * gamma};
}

std::vector<std::pair<int, int>> ShuffleFACConfig::stage_pool() const {
    return {{2, 2}, {2, 2}, {2, 1}, {2, 1}, {2, 1}, {2, 1}, {2, 1}};
}

Model Model::build(const ShuffleFACConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    Model m;
    m.cfg_ = cfg;
    std::mt19937_64 rng(seed);
    for (const ParamDef& def : enumerate_params(cfg)) {
        Tensor t;
        switch (def.init) {
            case Init::Zero:
                t = Tensor(def.shape);
                break;
            case Init::One:
                t = Tensor::full(def.shape, 1.0);
                break;
            case Init::FanIn: {
                const double s = std::sqrt(1.0 / def.fan_in);
                t = Tensor::uniform(def.shape, -s, s, rng);
                break;
            }
            case Init::PosEnc:
                t = Tensor::uniform(def.shape, -0.1, 0.1, rng);
                break;
        }
        (def.is_buffer ? m.buffers_ : m.params_).emplace(def.name, std::move(t));
    }
    return m;
}

std::uint64_t Model::parameter_count() const {
    std::uint64_t n = 0;
    for (const auto& [name, t] : params_) n += t.numel();
    return n;
}

std::vector<Model::StageDesc> Model::stage_descs() const {
    std::vector<StageDesc> out;
    const auto channels = cfg_.stage_channels();
    const auto pools = cfg_.stage_pool();
    int c = cfg_.in_channels, f = cfg_.in_freq, t = cfg_.in_time;

    auto pool_str = [](std::pair<int, int> p) {
        std::ostringstream os;
        os << "AvgPool(f" << p.first << ",t" << p.second << ")";
        return os.str();
    };
    const std::string norm_act = cfg_.bn_before_act ? "BN, ReLU" : "ReLU, BN";

    StageDesc expand;
    expand.name = "expand";
    expand.c_in = c;
    expand.f_in = f;
    expand.t_in = t;
    expand.pool = pools[0];
    expand.c_out = channels[0];
    expand.f_out = f / pools[0].first;
    expand.t_out = t / pools[0].second;
    {
        std::ostringstream os;
        os << "FA, Conv2D(" << channels[0] << ") " << cfg_.k_first << "x" << cfg_.k_first << ", "
           << norm_act << ", " << pool_str(pools[0]);
        expand.ops_desc = os.str();
    }
    out.push_back(expand);
    c = expand.c_out;
    f = expand.f_out;
    t = expand.t_out;

    for (std::size_t s = 1; s < channels.size(); ++s) {
        StageDesc d;
        d.name = "stage" + std::to_string(s);
        d.is_fasc = true;
        d.c_in = c;
        d.f_in = f;
        d.t_in = t;
        d.pool = pools[s];
        d.c_out = channels[s];
        d.f_out = f / pools[s].first;
        d.t_out = t / pools[s].second;
        const int c_mid = c / 2;
        d.fasc = blocks::FASCSpec{c, channels[s], cfg_.k_dw, fasc_group_count(c, c_mid),
                                  fasc_group_count(c_mid, channels[s])};
        std::ostringstream os;
        os << "FASC(" << channels[s] << "), " << norm_act << ", " << pool_str(pools[s]);
        d.ops_desc = os.str();
        out.push_back(d);
        c = d.c_out;
        f = d.f_out;
        t = d.t_out;
    }

    StageDesc cls;
    cls.name = "classifier";
    cls.c_in = c;
    cls.f_in = f;
    cls.t_in = t;
    cls.c_out = cfg_.n_classes;
    cls.f_out = 1;
    cls.t_out = 1;
    {
        std::ostringstream os;
        os << "GlobalAvgPool, Linear(" << c << "," << cfg_.n_classes << ")";
        cls.ops_desc = os.str();
    }
    out.push_back(cls);
    return out;
}

ops::Value Model::forward(ops::Context& ctx, const ops::Value& x, bool training_mode) {
    const kernels::Nchw d = kernels::nchw(x.tensor());
    if (d.c != cfg_.in_channels || d.h != cfg_.in_freq || d.w != cfg_.in_time) {
        throw ShapeError("forward: input " + x.tensor().shape_str() + " does not match expected " +
                         std::to_string(cfg_.in_channels) + "x" + std::to_string(cfg_.in_freq) +
                         "x" + std::to_string(cfg_.in_time));
    }

    auto P = [&](const std::string& name) -> ops::Value {
        auto it = params_.find(name);
        if (it == params_.end()) throw ValueError("forward: missing parameter " + name);
        if (ctx.tape) return ctx.tape->param(name, it->second);
        // Borrow without copying; the store outlives this call.
        return {std::shared_ptr<const Tensor>(&it->second, [](const Tensor*) {}), nullptr};
    };

    auto norm_act = [&](ops::Value h, const std::string& prefix, int) -> ops::Value {
        ops::Value g = P(prefix + ".bn.gamma");
        ops::Value b = P(prefix + ".bn.beta");
        Tensor& rm = buffers_.at(prefix + ".bn.running_mean");
        Tensor& rv = buffers_.at(prefix + ".bn.running_var");
        if (cfg_.bn_before_act) {
            h = ops::batch_norm(ctx, h, g, b, rm, rv, training_mode, cfg_.bn_eps,
                                cfg_.bn_momentum);
            return ops::relu(ctx, h);
        }
        h = ops::relu(ctx, h);
        return ops::batch_norm(ctx, h, g, b, rm, rv, training_mode, cfg_.bn_eps, cfg_.bn_momentum);
    };

    const auto descs = stage_descs();

    // Expansion stage
    blocks::FAParamRefs fa0{P("expand.fa.pos"), P("expand.fa.att_w"), P("expand.fa.att_b")};
    ops::Value h = blocks::fa_forward(ctx, x, fa0, cfg_.fa_gate);
    kernels::ConvSpec first{cfg_.in_channels, cfg_.gamma, cfg_.k_first, cfg_.k_first, 1, true};
    ops::Value cw = P("expand.conv.weight");
    ops::Value cb = P("expand.conv.bias");
    h = ops::conv2d(ctx, h, first, cw, &cb);
    h = norm_act(std::move(h), "expand", cfg_.gamma);
    h = ops::avg_pool2d(ctx, h, descs[0].pool.first, descs[0].pool.second);

    // FASC stages
    for (std::size_t s = 1; s + 1 < descs.size(); ++s) {
        const auto& d2 = descs[s];
        const std::string& prefix = d2.name;
        blocks::FASCParamRefs p{
            {P(prefix + ".fa.pos"), P(prefix + ".fa.att_w"), P(prefix + ".fa.att_b")},
            P(prefix + ".pw1.weight"), P(prefix + ".pw1.bias"),
            P(prefix + ".dw.weight"),  P(prefix + ".dw.bias"),
            P(prefix + ".pw2.weight"), P(prefix + ".pw2.bias"),
        };
        h = blocks::fasc_forward(ctx, h, p, d2.fasc, cfg_.fa_gate);
        h = norm_act(std::move(h), prefix, d2.c_out);
        h = ops::avg_pool2d(ctx, h, d2.pool.first, d2.pool.second);
    }

    // Classifier
    h = ops::global_avg_pool(ctx, h);
    ops::Value lw = P("classifier.linear.weight");
    ops::Value lb = P("classifier.linear.bias");
    return ops::linear(ctx, h, lw, &lb);
}

Tensor Model::forward(const Tensor& x) const {
    ops::Context ctx;
    // Inference never writes to the store; the const_cast only satisfies the
    // shared graph-forward signature.
    Model* self = const_cast<Model*>(this);
    return self->forward(ctx, ops::Value::raw(x), false).tensor();
}

void Model::save(const std::string& path) const {
    std::string buf;
    write_u32(buf, kVersion);
    const std::string cfg_json = config_to_json(cfg_).dump();
    write_u32(buf, static_cast<std::uint32_t>(cfg_json.size()));
    buf += cfg_json;

    auto write_record = [&](const std::string& name, const Tensor& t) {
        write_u32(buf, static_cast<std::uint32_t>(name.size()));
        buf += name;
        buf.push_back(static_cast<char>(kDtypeF64));
        write_u32(buf, static_cast<std::uint32_t>(t.rank()));
        for (int i = 0; i < t.rank(); ++i) write_u32(buf, static_cast<std::uint32_t>(t.dim(i)));
        buf.append(reinterpret_cast<const char*>(t.data()), t.numel() * sizeof(double));
    };
    for (const auto& [name, t] : params_) write_record(name, t);
    for (const auto& [name, t] : buffers_) write_record(name, t);

    const std::uint32_t crc = static_cast<std::uint32_t>(
        crc32(0L, reinterpret_cast<const Bytef*>(buf.data()), static_cast<uInt>(buf.size())));

    std::ofstream os(path, std::ios::binary);
    if (!os) throw FormatError("model save: cannot open " + path);
    os.write(kMagic, 4);
    os.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    os.write(reinterpret_cast<const char*>(&crc), 4);
    if (!os) throw FormatError("model save: write failed: " + path);
}

Model Model::load(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FormatError("model load: cannot open " + path);
    std::string file((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    if (file.size() < 12 || std::memcmp(file.data(), kMagic, 4) != 0) {
        throw FormatError("model load: bad magic in " + path);
    }
    const std::size_t body_len = file.size() - 8;
    const char* body = file.data() + 4;
    std::uint32_t stored_crc;
    std::memcpy(&stored_crc, file.data() + file.size() - 4, 4);
    const std::uint32_t crc = static_cast<std::uint32_t>(
        crc32(0L, reinterpret_cast<const Bytef*>(body), static_cast<uInt>(body_len)));
    if (crc != stored_crc) throw FormatError("model load: CRC mismatch in " + path);

    std::size_t pos = 0;
    auto need = [&](std::size_t n, const char* what) {
        if (pos + n > body_len) {
            throw FormatError("model load: truncated while reading " + std::string(what));
        }
    };
    auto read_u32 = [&](const char* what) {
        need(4, what);
        std::uint32_t v;
        std::memcpy(&v, body + pos, 4);
        pos += 4;
        return v;
    };

    const std::uint32_t version = read_u32("version");
    if (version != kVersion) {
        throw FormatError("model load: unsupported version " + std::to_string(version));
    }
    const std::uint32_t cfg_len = read_u32("config length");
    need(cfg_len, "config");
    ShuffleFACConfig cfg;
    try {
        cfg = config_from_json(nlohmann::json::parse(std::string(body + pos, cfg_len)));
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("model load: invalid config JSON: ") + e.what());
    }
    pos += cfg_len;
    cfg.validate();

    std::map<std::string, ParamDef> expected;
    for (ParamDef& def : enumerate_params(cfg)) expected.emplace(def.name, def);

    Model m;
    m.cfg_ = cfg;
    std::size_t records = 0;
    while (pos < body_len) {
        const std::uint32_t name_len = read_u32("name length");
        need(name_len, "name");
        std::string name(body + pos, name_len);
        pos += name_len;
        need(1, "dtype");
        const std::uint8_t dtype = static_cast<std::uint8_t>(body[pos++]);
        if (dtype != kDtypeF64) {
            throw FormatError("model load: unsupported dtype tag " + std::to_string(dtype) +
                              " for " + name);
        }
        const std::uint32_t rank = read_u32("rank");
        if (rank < 1 || rank > 4) throw FormatError("model load: bad rank for " + name);
        std::vector<int> dims(rank);
        std::size_t numel = 1;
        for (auto& dd : dims) {
            dd = static_cast<int>(read_u32("dim"));
            numel *= static_cast<std::size_t>(dd);
        }
        auto it = expected.find(name);
        if (it == expected.end()) throw FormatError("model load: unknown parameter \"" + name + "\"");
        if (it->second.shape != dims) {
            throw FormatError("model load: shape mismatch for \"" + name + "\"");
        }
        need(numel * sizeof(double), "payload");
        Tensor t(dims);
        std::memcpy(t.data(), body + pos, numel * sizeof(double));
        pos += numel * sizeof(double);
        (it->second.is_buffer ? m.buffers_ : m.params_).emplace(name, std::move(t));
        expected.erase(it);
        ++records;
    }
    if (!expected.empty()) {
        throw FormatError("model load: missing parameter \"" + expected.begin()->first + "\" (+" +
                          std::to_string(expected.size() - 1) + " more)");
    }
    (void)records;
    return m;
}

Summary summarize(const Model& model) {
    Summary s;
    s.report = complexity::model_cost(model);
    for (const auto& d : model.stage_descs()) {
        SummaryRow row;
        row.stage = d.name;
        row.config_desc = d.ops_desc;
        if (d.name == "classifier") {
            row.out_shape = std::to_string(d.c_out);
        } else {
            row.out_shape = std::to_string(d.c_out) + "x" + std::to_string(d.f_out) + "x" +
                            std::to_string(d.t_out);
        }
        for (const auto& e : s.report.entries) {
            if (e.name.rfind(d.name + ".", 0) == 0) {
                row.params += e.params;
                row.macs += e.macs;
            }
        }
        s.rows.push_back(std::move(row));
    }
    return s;
}

}  // namespace sfac

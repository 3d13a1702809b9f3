#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include "sgsr/blocks.hpp"

namespace sgsr {

static_assert(std::endian::native == std::endian::little,
              "parameter files are little-endian; big-endian hosts need byte swaps");

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

struct NetworkConfig {
    int scale = 2;
    int in_channels = 1;
    int width = 32; // channel width c; must be divisible by 4
    int fem_count = 3;
    int dfcm_per_fem = 3;
    int mco_count = 1;
    int msc_count = 1;
    double alpha = 0.75;
    int patch = 8;
    bool use_bicubic_skip = true;
    bool use_asgnn = true;
    int lsh_planes = 4;

    bool operator==(const NetworkConfig&) const = default;

    void validate() const {
        if (scale != 2 && scale != 4) throw ConfigError("config: scale must be 2 or 4");
        if (in_channels < 1) throw ConfigError("config: in_channels must be >= 1");
        if (width < 4 || width % 4 != 0)
            throw ConfigError("config: width must be a positive multiple of 4");
        if (fem_count < 1) throw ConfigError("config: fem_count must be >= 1");
        if (dfcm_per_fem < 1) throw ConfigError("config: dfcm_per_fem must be >= 1");
        if (mco_count < 0 || msc_count < 0)
            throw ConfigError("config: block counts must be >= 0");
        if (!(alpha > 0.0 && alpha <= 1.0)) throw ConfigError("config: alpha must be in (0, 1]");
        if (patch < 1) throw ConfigError("config: patch size must be >= 1");
        if (lsh_planes < 1 || lsh_planes > 30)
            throw ConfigError("config: lsh_planes must be in [1, 30]");
    }
};

// ---------------------------------------------------------------------------
// Parameters
// ---------------------------------------------------------------------------

struct TransitionParams { // conv-relu-conv between feature extraction stages
    ConvLayer first;
    ConvLayer second;

    ag::Var operator()(const ag::Var& x) const { return second(ag::relu(first(x))); }
};

struct ModelParams {
    NetworkConfig config;
    FixedKernelBank bank;
    ConvLayer shallow; // in_ch -> c, 3x3
    std::vector<FemParams> fems;
    std::vector<TransitionParams> transitions; // one per FEM; last feeds aggregation
    ConvLayer agg_att;  // 1x1 c -> c over the summed attention outputs
    ConvLayer agg_main; // 1x1 (fem_count + 1)c -> c
    ConvLayer recon;    // 3x3 c -> scale^2 * in_ch
    ConvLayer tail;     // 3x3 in_ch -> in_ch, zero-initialized
};

// All weights are drawn from one seeded stream in declaration order, so a
// seed fully determines the parameter bytes. The tail conv starts at zero,
// which makes the initial network output exactly the bicubic skip.
inline ModelParams param_init(const NetworkConfig& config, std::uint64_t seed) {
    config.validate();
    Rng rng(seed, rng_stream::kParamInit);
    const int c = config.width;

    ModelParams mp;
    mp.config = config;
    mp.shallow = make_conv(config.in_channels, c, 3, 1, 1, rng);
    for (int f = 0; f < config.fem_count; ++f) {
        FemParams fem;
        for (int d = 0; d < config.dfcm_per_fem; ++d) {
            DfcmParams dfcm;
            for (int i = 0; i < config.mco_count; ++i) dfcm.mco.push_back(make_mco_params(c, rng));
            for (int i = 0; i < config.msc_count; ++i) dfcm.msc.push_back(make_msc_params(c, rng));
            if (config.use_asgnn)
                dfcm.asgnn = make_asgnn_params(c, config.lsh_planes, rng, seed);
            fem.dfcms.push_back(std::move(dfcm));
        }
        if (config.use_asgnn) fem.fuse_att = make_conv(config.dfcm_per_fem * c, c, 1, 0, 1, rng);
        fem.fuse_main = make_conv((config.dfcm_per_fem + 1) * c, c, 1, 0, 1, rng);
        mp.fems.push_back(std::move(fem));
        TransitionParams tr;
        tr.first = make_conv(c, c, 3, 1, 1, rng);
        tr.second = make_conv(c, c, 3, 1, 1, rng);
        mp.transitions.push_back(std::move(tr));
    }
    if (config.use_asgnn) mp.agg_att = make_conv(c, c, 1, 0, 1, rng);
    mp.agg_main = make_conv((config.fem_count + 1) * c, c, 1, 0, 1, rng);
    mp.recon = make_conv(c, config.scale * config.scale * config.in_channels, 3, 1, 1, rng);
    mp.tail = make_conv(config.in_channels, config.in_channels, 3, 1, 1, rng, /*zero_init=*/true);
    return mp;
}

// ---------------------------------------------------------------------------
// Parameter enumeration (declaration order)
// ---------------------------------------------------------------------------

struct NamedParam {
    std::string name;
    ag::Var var;
    bool trainable = true;
};

namespace detail {

inline void visit_conv(std::vector<NamedParam>& out, const std::string& name, const ConvLayer& l) {
    out.push_back({name + ".w", l.weight, true});
    if (l.bias) out.push_back({name + ".b", l.bias, true});
}

} // namespace detail

inline std::vector<NamedParam> named_params(const ModelParams& mp) {
    std::vector<NamedParam> out;
    detail::visit_conv(out, "shallow", mp.shallow);
    for (std::size_t f = 0; f < mp.fems.size(); ++f) {
        const std::string fp = "fem" + std::to_string(f);
        const FemParams& fem = mp.fems[f];
        for (std::size_t d = 0; d < fem.dfcms.size(); ++d) {
            const std::string dp = fp + ".dfcm" + std::to_string(d);
            const DfcmParams& dfcm = fem.dfcms[d];
            for (std::size_t i = 0; i < dfcm.mco.size(); ++i) {
                const std::string mpfx = dp + ".mco" + std::to_string(i);
                detail::visit_conv(out, mpfx + ".adjust", dfcm.mco[i].adjust_1x1);
                detail::visit_conv(out, mpfx + ".b3", dfcm.mco[i].branch_3x3);
                detail::visit_conv(out, mpfx + ".b5", dfcm.mco[i].branch_5x5);
                detail::visit_conv(out, mpfx + ".fuse", dfcm.mco[i].fuse_3x3);
            }
            for (std::size_t i = 0; i < dfcm.msc.size(); ++i) {
                const std::string mpfx = dp + ".msc" + std::to_string(i);
                detail::visit_conv(out, mpfx + ".dconv", dfcm.msc[i].dconv);
                detail::visit_conv(out, mpfx + ".fuse", dfcm.msc[i].fuse);
            }
            if (mp.config.use_asgnn) out.push_back({dp + ".asgnn.w_g", dfcm.asgnn.w_g, true});
        }
        if (mp.config.use_asgnn) detail::visit_conv(out, fp + ".fuse_att", fem.fuse_att);
        detail::visit_conv(out, fp + ".fuse_main", fem.fuse_main);
        detail::visit_conv(out, "transition" + std::to_string(f) + ".first",
                           mp.transitions[f].first);
        detail::visit_conv(out, "transition" + std::to_string(f) + ".second",
                           mp.transitions[f].second);
    }
    if (mp.config.use_asgnn) detail::visit_conv(out, "agg_att", mp.agg_att);
    detail::visit_conv(out, "agg_main", mp.agg_main);
    detail::visit_conv(out, "recon", mp.recon);
    detail::visit_conv(out, "tail", mp.tail);
    return out;
}

// Every serialized blob: trainable parameters plus the fixed hash planes.
inline std::vector<Tensor*> param_blobs(ModelParams& mp) {
    std::vector<Tensor*> out;
    for (const NamedParam& p : named_params(mp)) out.push_back(&p.var->value);
    if (mp.config.use_asgnn)
        for (FemParams& fem : mp.fems)
            for (DfcmParams& dfcm : fem.dfcms) out.push_back(&dfcm.asgnn.planes);
    return out;
}

// ---------------------------------------------------------------------------
// Forward pass
// ---------------------------------------------------------------------------

inline ag::Var forward(const ModelParams& mp, const ag::Var& i_lr) {
    const NetworkConfig& cfg = mp.config;
    const Shape4 s = i_lr->value.shape;
    if (s.c != cfg.in_channels)
        throw ConfigError("forward: input has " + std::to_string(s.c) + " channels, config says " +
                          std::to_string(cfg.in_channels));
    if (s.h < cfg.patch || s.w < cfg.patch)
        throw ConfigError("forward: input " + s.str() + " smaller than patch window " +
                          std::to_string(cfg.patch));

    ag::Var cur = mp.shallow(i_lr);
    std::vector<ag::Var> ys;
    std::vector<ag::Var> yatts;
    ag::Var last_transition;
    for (int f = 0; f < cfg.fem_count; ++f) {
        FemOut fo = fem_forward(cur, mp.fems[f], mp.bank, cfg.patch, cfg.alpha, cfg.use_asgnn);
        ys.push_back(fo.y);
        if (cfg.use_asgnn) yatts.push_back(fo.y_att);
        last_transition = mp.transitions[f](fo.y);
        cur = last_transition;
    }

    std::vector<ag::Var> cat = ys;
    cat.push_back(last_transition);
    ag::Var i_de = mp.agg_main(ag::concat_channels(cat));
    if (cfg.use_asgnn) {
        ag::Var att_sum = yatts[0];
        for (std::size_t k = 1; k < yatts.size(); ++k) att_sum = ag::add(att_sum, yatts[k]);
        i_de = ag::add(mp.agg_att(att_sum), i_de);
    }

    ag::Var out = mp.tail(ag::pixel_shuffle(mp.recon(i_de), cfg.scale));
    if (cfg.use_bicubic_skip) out = ag::add(out, ag::bicubic_upsample(i_lr, cfg.scale));
    return out;
}

// ---------------------------------------------------------------------------
// Checkpoint format: magic, version, config fields, then raw 64-bit blobs in
// declaration order (little endian)
// ---------------------------------------------------------------------------

namespace detail {

inline constexpr char kParamMagic[8] = {'S', 'G', 'S', 'R', 'N', 'E', 'T', '1'};
inline constexpr std::uint32_t kParamVersion = 1;

template <typename T>
inline void put(std::string& buf, T v) {
    char raw[sizeof(T)];
    std::memcpy(raw, &v, sizeof(T));
    buf.append(raw, sizeof(T));
}

struct Reader {
    const std::string& buf;
    std::size_t pos = 0;

    template <typename T>
    T get(const char* what) {
        if (pos + sizeof(T) > buf.size())
            throw IntegrityError(std::string("parameter file truncated while reading ") + what);
        T v;
        std::memcpy(&v, buf.data() + pos, sizeof(T));
        pos += sizeof(T);
        return v;
    }
};

} // namespace detail

inline void save_params(ModelParams& mp, const std::filesystem::path& path) {
    std::string buf;
    buf.append(detail::kParamMagic, sizeof(detail::kParamMagic));
    detail::put<std::uint32_t>(buf, detail::kParamVersion);
    const NetworkConfig& c = mp.config;
    for (int v : {c.scale, c.in_channels, c.width, c.fem_count, c.dfcm_per_fem, c.mco_count,
                  c.msc_count, c.patch, c.lsh_planes})
        detail::put<std::int32_t>(buf, v);
    detail::put<double>(buf, c.alpha);
    detail::put<std::uint8_t>(buf, c.use_bicubic_skip ? 1 : 0);
    detail::put<std::uint8_t>(buf, c.use_asgnn ? 1 : 0);

    std::vector<Tensor*> blobs = param_blobs(mp);
    detail::put<std::uint32_t>(buf, static_cast<std::uint32_t>(blobs.size()));
    for (const Tensor* t : blobs) {
        detail::put<std::uint64_t>(buf, t->size());
        buf.append(reinterpret_cast<const char*>(t->data.data()), t->size() * sizeof(double));
    }

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw IoError("short write to '" + path.string() + "'");
}

inline ModelParams load_params(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
    std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

    detail::Reader r{buf};
    if (buf.size() < sizeof(detail::kParamMagic) ||
        std::memcmp(buf.data(), detail::kParamMagic, sizeof(detail::kParamMagic)) != 0)
        throw FormatError("parameter file '" + path.string() + "': bad magic");
    r.pos = sizeof(detail::kParamMagic);
    const auto version = r.get<std::uint32_t>("version");
    if (version != detail::kParamVersion)
        throw FormatError("parameter file version " + std::to_string(version) + " unsupported");

    NetworkConfig c;
    c.scale = r.get<std::int32_t>("scale");
    c.in_channels = r.get<std::int32_t>("in_channels");
    c.width = r.get<std::int32_t>("width");
    c.fem_count = r.get<std::int32_t>("fem_count");
    c.dfcm_per_fem = r.get<std::int32_t>("dfcm_per_fem");
    c.mco_count = r.get<std::int32_t>("mco_count");
    c.msc_count = r.get<std::int32_t>("msc_count");
    c.patch = r.get<std::int32_t>("patch");
    c.lsh_planes = r.get<std::int32_t>("lsh_planes");
    c.alpha = r.get<double>("alpha");
    c.use_bicubic_skip = r.get<std::uint8_t>("use_bicubic_skip") != 0;
    c.use_asgnn = r.get<std::uint8_t>("use_asgnn") != 0;
    c.validate();

    ModelParams mp = param_init(c, 0);
    std::vector<Tensor*> blobs = param_blobs(mp);
    const auto blob_count = r.get<std::uint32_t>("blob count");
    if (blob_count != blobs.size())
        throw IntegrityError("parameter file has " + std::to_string(blob_count) +
                             " blobs, config implies " + std::to_string(blobs.size()));
    for (Tensor* t : blobs) {
        const auto count = r.get<std::uint64_t>("blob size");
        if (count != t->size())
            throw IntegrityError("parameter blob length " + std::to_string(count) +
                                 " does not match expected " + std::to_string(t->size()));
        if (r.pos + count * sizeof(double) > buf.size())
            throw IntegrityError("parameter file truncated inside a blob");
        std::memcpy(t->data.data(), buf.data() + r.pos, count * sizeof(double));
        r.pos += count * sizeof(double);
    }
    if (r.pos != buf.size())
        throw IntegrityError("parameter file has trailing bytes after last blob");
    return mp;
}

inline ModelParams load_params(const std::filesystem::path& path, const NetworkConfig& expected) {
    ModelParams mp = load_params(path);
    if (!(mp.config == expected))
        throw ConfigError("checkpoint config does not match requested config");
    return mp;
}

} // namespace sgsr

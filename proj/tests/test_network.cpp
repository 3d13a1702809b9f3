#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "sgsr/degrade.hpp"
#include "sgsr/grad_check.hpp"
#include "sgsr/metrics.hpp"
#include "sgsr/model.hpp"
#include "support/reference.hpp"

using namespace sgsr;
namespace fs = std::filesystem;

namespace {

NetworkConfig tiny_config() {
    NetworkConfig cfg;
    cfg.scale = 2;
    cfg.width = 4;
    cfg.fem_count = 1;
    cfg.dfcm_per_fem = 1;
    cfg.patch = 2;
    cfg.alpha = 1.0;
    return cfg;
}

bool params_equal(ModelParams& a, ModelParams& b) {
    std::vector<Tensor*> ba = param_blobs(a);
    std::vector<Tensor*> bb = param_blobs(b);
    if (ba.size() != bb.size()) return false;
    for (std::size_t i = 0; i < ba.size(); ++i) {
        if (ba[i]->size() != bb[i]->size()) return false;
        if (std::memcmp(ba[i]->data.data(), bb[i]->data.data(),
                        ba[i]->size() * sizeof(double)) != 0)
            return false;
    }
    return true;
}

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("sgsr_test_" + std::to_string(::getpid()) + "_" +
                std::to_string(reinterpret_cast<std::uintptr_t>(this)));
        fs::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
};

} // namespace

TEST_CASE("forward: output shape is (b, in_ch, sH, sW)") {
    NetworkConfig cfg = tiny_config();
    ModelParams mp = param_init(cfg, 1);
    Rng rng(211, rng_stream::kTest);
    ag::Var x = ag::constant(random_tensor(Shape4(1, 1, 16, 16), rng, 0.0, 1.0));
    CHECK(forward(mp, x)->value.shape == Shape4(1, 1, 32, 32));

    NetworkConfig cfg4 = tiny_config();
    cfg4.scale = 4;
    ModelParams mp4 = param_init(cfg4, 1);
    ag::Var x4 = ag::constant(random_tensor(Shape4(2, 1, 8, 12), rng, 0.0, 1.0));
    CHECK(forward(mp4, x4)->value.shape == Shape4(2, 1, 32, 48));
}

TEST_CASE("forward: zero tail conv makes output exactly the bicubic upsample") {
    NetworkConfig cfg = tiny_config();
    ModelParams mp = param_init(cfg, 7);
    Rng rng(223, rng_stream::kTest);
    Tensor xv = random_tensor(Shape4(1, 1, 12, 12), rng, 0.0, 1.0);
    Tensor out = forward(mp, ag::constant(xv))->value;
    Tensor skip = ag::bicubic_upsample(ag::constant(xv), 2)->value;
    CHECK(std::memcmp(out.data.data(), skip.data.data(), out.size() * sizeof(double)) == 0);

    // PSNR of the clamped output equals the PSNR of the clamped resample
    Tensor target = random_tensor(Shape4(1, 1, 24, 24), rng, 0.0, 1.0);
    Tensor clamped = out;
    for (double& v : clamped.data) v = std::clamp(v, 0.0, 1.0);
    CHECK(psnr(clamped, target) == psnr(bicubic_resample(xv, 24, 24), target));
}

TEST_CASE("forward: disabling the bicubic skip changes only the skip term") {
    NetworkConfig cfg = tiny_config();
    cfg.use_bicubic_skip = false;
    ModelParams mp = param_init(cfg, 7);
    Rng rng(227, rng_stream::kTest);
    Tensor xv = random_tensor(Shape4(1, 1, 8, 8), rng, 0.0, 1.0);
    Tensor out = forward(mp, ag::constant(xv))->value;
    // zero tail and no skip: all zeros
    for (double v : out.data) CHECK(v == 0.0);
}

TEST_CASE("forward: attention-free arm stays well-formed and drops att params") {
    NetworkConfig cfg = tiny_config();
    cfg.use_asgnn = false;
    ModelParams mp = param_init(cfg, 3);
    Rng rng(229, rng_stream::kTest);
    ag::Var x = ag::constant(random_tensor(Shape4(1, 1, 8, 8), rng, 0.0, 1.0));
    CHECK(forward(mp, x)->value.shape == Shape4(1, 1, 16, 16));
    for (const NamedParam& p : named_params(mp)) {
        CHECK(p.name.find("asgnn") == std::string::npos);
        CHECK(p.name.find("att") == std::string::npos);
    }

    NetworkConfig cfg_on = tiny_config();
    ModelParams mp_on = param_init(cfg_on, 3);
    bool has_att = false;
    for (const NamedParam& p : named_params(mp_on))
        has_att = has_att || p.name.find("asgnn") != std::string::npos;
    CHECK(has_att);
}

TEST_CASE("forward: config violations rejected before compute") {
    ModelParams mp = param_init(tiny_config(), 1);
    Rng rng(233, rng_stream::kTest);
    ag::Var wrong_c = ag::constant(random_tensor(Shape4(1, 2, 8, 8), rng));
    CHECK_THROWS_AS(forward(mp, wrong_c), ConfigError);
    ag::Var too_small = ag::constant(random_tensor(Shape4(1, 1, 1, 1), rng));
    CHECK_THROWS_AS(forward(mp, too_small), ConfigError);
    NetworkConfig bad = tiny_config();
    bad.scale = 3;
    CHECK_THROWS_AS(param_init(bad, 1), ConfigError);
    bad = tiny_config();
    bad.width = 6;
    CHECK_THROWS_AS(param_init(bad, 1), ConfigError);
    bad = tiny_config();
    bad.alpha = 0.0;
    CHECK_THROWS_AS(param_init(bad, 1), ConfigError);
}

TEST_CASE("param_init: deterministic, zero tail, fan-in bounds") {
    NetworkConfig cfg;
    cfg.width = 32;
    cfg.fem_count = 1;
    cfg.dfcm_per_fem = 1;
    ModelParams a = param_init(cfg, 99);
    ModelParams b = param_init(cfg, 99);
    CHECK(params_equal(a, b));
    ModelParams c = param_init(cfg, 100);
    CHECK(!params_equal(a, c));

    for (double v : a.tail.weight->value.data) CHECK(v == 0.0);
    for (double v : a.tail.bias->value.data) CHECK(v == 0.0);

    // every 3x3 conv with 32 input channels stays inside +-sqrt(1/288)
    const double bound = std::sqrt(1.0 / 288.0);
    for (const NamedParam& p : named_params(a)) {
        const Shape4 s = p.var->value.shape;
        if (p.name.ends_with(".w") && s.h == 3 && s.w == 3 && s.c == 32)
            for (double v : p.var->value.data) {
                CHECK(v >= -bound);
                CHECK(v <= bound);
            }
    }
}

TEST_CASE("forward: deterministic across repeated evaluation") {
    ModelParams mp = param_init(tiny_config(), 21);
    Rng rng(239, rng_stream::kTest);
    Tensor xv = random_tensor(Shape4(1, 1, 8, 8), rng, 0.0, 1.0);
    Tensor o1 = forward(mp, ag::constant(xv))->value;
    Tensor o2 = forward(mp, ag::constant(xv))->value;
    CHECK(std::memcmp(o1.data.data(), o2.data.data(), o1.size() * sizeof(double)) == 0);
}

TEST_CASE("save/load: bit-exact round trip") {
    TempDir tmp;
    NetworkConfig cfg = tiny_config();
    ModelParams mp = param_init(cfg, 5);
    // move away from the all-zero tail so the round trip is non-trivial
    Rng rng(241, rng_stream::kTest);
    for (Tensor* t : param_blobs(mp))
        for (double& v : t->data) v += rng.uniform(-0.5, 0.5);

    const fs::path file = tmp.path / "model.bin";
    save_params(mp, file);
    ModelParams back = load_params(file);
    CHECK(back.config == cfg);
    CHECK(params_equal(mp, back));

    ModelParams checked = load_params(file, cfg);
    CHECK(params_equal(mp, checked));
}

TEST_CASE("save/load: error paths") {
    TempDir tmp;
    ModelParams mp = param_init(tiny_config(), 5);
    const fs::path file = tmp.path / "model.bin";
    save_params(mp, file);

    { // wrong magic
        std::string bytes;
        {
            std::ifstream in(file, std::ios::binary);
            bytes.assign((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        }
        bytes[0] = 'X';
        const fs::path bad = tmp.path / "bad_magic.bin";
        std::ofstream(bad, std::ios::binary).write(bytes.data(), bytes.size());
        CHECK_THROWS_AS(load_params(bad), FormatError);
    }
    { // truncated
        std::string bytes;
        {
            std::ifstream in(file, std::ios::binary);
            bytes.assign((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        }
        bytes.resize(bytes.size() / 2);
        const fs::path bad = tmp.path / "truncated.bin";
        std::ofstream(bad, std::ios::binary).write(bytes.data(), bytes.size());
        CHECK_THROWS_AS(load_params(bad), IntegrityError);
    }
    { // config mismatch
        NetworkConfig other = tiny_config();
        other.width = 8;
        CHECK_THROWS_AS(load_params(file, other), ConfigError);
    }
    CHECK_THROWS_AS(load_params(tmp.path / "missing.bin"), IoError);
}

TEST_CASE("forward: end-to-end gradient check at the tiny config") {
    NetworkConfig cfg = tiny_config();
    ModelParams mp = param_init(cfg, 11);
    Rng rng(251, rng_stream::kTest);
    ag::Var x = ag::leaf(random_tensor(Shape4(1, 1, 8, 8), rng, 0.0, 1.0));
    std::vector<ag::Var> leaves{x};
    for (const NamedParam& p : named_params(mp)) leaves.push_back(p.var);
    double err = grad_check([&] { return ag::sum(forward(mp, x)); }, leaves);
    CHECK(err <= 1e-6);
}

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <string>
#include <vector>

#include "sgsr/degrade.hpp"
#include "sgsr/grad_check.hpp"
#include "sgsr/metrics.hpp"
#include "sgsr/model.hpp"
#include "sgsr/optim.hpp"

namespace sgsr {

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

struct TrainRunConfig {
    int epochs = 50;
    long long max_steps = 0; // 0 = bounded by epochs only
    int batch_size = 6;
    int crop = 96; // HR crop edge; must be divisible by scale and >= patch*scale
    std::uint64_t seed = 0;
    int eval_every = 1; // in epochs
    std::string checkpoint_path;
};

struct SamplePair {
    Tensor lr;
    Tensor hr;
};

struct EvalResult {
    double psnr = 0.0;
    double ssim = 0.0;
};

struct TrainResult {
    EvalResult final;
    EvalResult baseline;
    std::vector<std::string> log_lines; // "epoch\tloss\tpsnr\tssim"
    long long steps = 0;
};

inline Tensor clamp01(Tensor t) {
    for (double& v : t.data) v = std::clamp(v, 0.0, 1.0);
    return t;
}

// Mean held-out PSNR/SSIM of the model output clamped to [0,1].
inline EvalResult evaluate(const ModelParams& mp, const std::vector<SamplePair>& pairs) {
    if (pairs.empty()) throw ConfigError("evaluate: empty pair list");
    EvalResult r;
    for (const SamplePair& p : pairs) {
        Tensor sr = clamp01(forward(mp, ag::constant(p.lr))->value);
        r.psnr += psnr(sr, p.hr);
        r.ssim += ssim(sr, p.hr);
    }
    r.psnr /= static_cast<double>(pairs.size());
    r.ssim /= static_cast<double>(pairs.size());
    return r;
}

inline EvalResult bicubic_baseline(const std::vector<SamplePair>& pairs, int scale) {
    if (pairs.empty()) throw ConfigError("bicubic_baseline: empty pair list");
    EvalResult r;
    for (const SamplePair& p : pairs) {
        Tensor up = bicubic_resample(p.lr, p.lr.shape.h * scale, p.lr.shape.w * scale);
        r.psnr += psnr(up, p.hr);
        r.ssim += ssim(up, p.hr);
    }
    r.psnr /= static_cast<double>(pairs.size());
    r.ssim /= static_cast<double>(pairs.size());
    return r;
}

namespace detail {

inline std::string format_log_line(int epoch, double loss, const EvalResult* eval) {
    char buf[160];
    if (eval) {
        if (std::isnan(loss))
            std::snprintf(buf, sizeof(buf), "%d\t-\t%.6f\t%.6f", epoch, eval->psnr, eval->ssim);
        else
            std::snprintf(buf, sizeof(buf), "%d\t%.8f\t%.6f\t%.6f", epoch, loss, eval->psnr,
                          eval->ssim);
    } else {
        std::snprintf(buf, sizeof(buf), "%d\t%.8f\t-\t-", epoch, loss);
    }
    return buf;
}

} // namespace detail

// Deterministic patch-crop training: the seed fixes the epoch shuffles, the
// crop offsets, and therefore every logged number.
inline TrainResult train(ModelParams& mp, const std::vector<SamplePair>& train_pairs,
                         const std::vector<SamplePair>& eval_pairs, const TrainRunConfig& run,
                         const AdamWConfig& opt = {}) {
    if (train_pairs.empty()) throw ConfigError("train: empty training set");
    if (run.batch_size < 1) throw ConfigError("train: batch size must be >= 1");
    const int scale = mp.config.scale;
    if (run.crop % scale != 0)
        throw ConfigError("train: crop size must be divisible by the scale");
    if (run.crop < mp.config.patch * scale)
        throw ConfigError("train: crop size must be >= patch * scale");
    for (const SamplePair& p : train_pairs)
        if (p.hr.shape.h < run.crop || p.hr.shape.w < run.crop)
            throw ConfigError("train: crop size larger than a training image");

    std::vector<NamedParam> params = named_params(mp);
    OptimState state;
    state.init(params);
    Rng crop_rng(run.seed, rng_stream::kCrops);
    Rng shuffle_rng(run.seed, rng_stream::kShuffle);

    TrainResult result;
    result.baseline = bicubic_baseline(eval_pairs, scale);
    EvalResult eval = evaluate(mp, eval_pairs);
    result.log_lines.push_back(detail::format_log_line(0, std::nan(""), &eval));

    const int lr_crop = run.crop / scale;
    std::vector<int> order(train_pairs.size());
    std::iota(order.begin(), order.end(), 0);

    bool done = false;
    for (int epoch = 1; epoch <= run.epochs && !done; ++epoch) {
        shuffle_rng.shuffle(order.begin(), order.end());
        double loss_sum = 0.0;
        int batches = 0;
        for (std::size_t pos = 0; pos < order.size() && !done; pos += run.batch_size) {
            const int bsz = static_cast<int>(
                std::min<std::size_t>(run.batch_size, order.size() - pos));
            Tensor lr_batch(Shape4(bsz, mp.config.in_channels, lr_crop, lr_crop));
            Tensor hr_batch(Shape4(bsz, mp.config.in_channels, run.crop, run.crop));
            for (int b = 0; b < bsz; ++b) {
                const SamplePair& p = train_pairs[order[pos + b]];
                const int ylim = (p.hr.shape.h - run.crop) / scale;
                const int xlim = (p.hr.shape.w - run.crop) / scale;
                const int hy = scale * static_cast<int>(crop_rng.next_below(ylim + 1));
                const int hx = scale * static_cast<int>(crop_rng.next_below(xlim + 1));
                for (int c = 0; c < mp.config.in_channels; ++c) {
                    for (int y = 0; y < run.crop; ++y)
                        for (int x = 0; x < run.crop; ++x)
                            hr_batch.at(b, c, y, x) = p.hr.at(0, c, hy + y, hx + x);
                    for (int y = 0; y < lr_crop; ++y)
                        for (int x = 0; x < lr_crop; ++x)
                            lr_batch.at(b, c, y, x) = p.lr.at(0, c, hy / scale + y, hx / scale + x);
                }
            }

            ag::Var loss = ag::l1_loss(forward(mp, ag::constant(std::move(lr_batch))),
                                       ag::constant(std::move(hr_batch)));
            const double loss_val = loss->value[0];
            if (!std::isfinite(loss_val))
                throw NumericError("train: non-finite loss in epoch " + std::to_string(epoch) +
                                   " batch " + std::to_string(batches));
            for (NamedParam& p : params) ag::zero_grad(p.var);
            ag::backward(loss);
            adamw_step(params, state, opt);
            loss_sum += loss_val;
            ++batches;
            ++result.steps;
            if (run.max_steps > 0 && result.steps >= run.max_steps) done = true;
        }
        const double mean_loss = loss_sum / std::max(1, batches);
        if (epoch % run.eval_every == 0 || epoch == run.epochs || done) {
            eval = evaluate(mp, eval_pairs);
            result.log_lines.push_back(detail::format_log_line(epoch, mean_loss, &eval));
        } else {
            result.log_lines.push_back(detail::format_log_line(epoch, mean_loss, nullptr));
        }
    }

    result.final = evaluate(mp, eval_pairs);
    if (!run.checkpoint_path.empty()) save_params(mp, run.checkpoint_path);
    return result;
}

// ---------------------------------------------------------------------------
// Gradient-check suite over every block family
// ---------------------------------------------------------------------------

struct BlockGradReport {
    std::string name;
    double max_rel_error = 0.0;
    bool pass = false;
};

struct GradcheckOptions {
    double tolerance = 1e-6;
    double step = 1e-6;
    std::uint64_t seed = 20240501;
    std::string corrupt_block; // test hook: inflate this block's analytic grads
};

namespace detail {

// Runs one block and optionally corrupts the first analytic gradient after
// backward, which a healthy suite must flag.
inline BlockGradReport run_block(const std::string& name, const GradcheckOptions& opts,
                                 const std::function<ag::Var()>& build,
                                 const std::vector<ag::Var>& leaves) {
    double err = grad_check(build, leaves, opts.step);
    if (opts.corrupt_block == name) {
        // recompute with a biased analytic gradient
        for (const ag::Var& l : leaves) ag::zero_grad(l);
        ag::Var out = build();
        ag::backward(out);
        leaves[0]->ensure_grad();
        leaves[0]->grad[0] += 1e-2;
        Tensor saved = leaves[0]->grad;
        // report the discrepancy of the corrupted gradient against central diff
        const double h = opts.step;
        Tensor& x = leaves[0]->value;
        const double keep = x[0];
        x[0] = keep + h;
        const double fp = build()->value[0];
        x[0] = keep - h;
        const double fm = build()->value[0];
        x[0] = keep;
        const double central = (fp - fm) / (2.0 * h);
        err = std::max(err, std::fabs(saved[0] - central) / std::max(1.0, std::fabs(central)));
    }
    BlockGradReport r;
    r.name = name;
    r.max_rel_error = err;
    r.pass = err <= opts.tolerance;
    return r;
}

} // namespace detail

inline std::vector<BlockGradReport> gradcheck_suite(const GradcheckOptions& opts = {}) {
    std::vector<BlockGradReport> reports;
    FixedKernelBank bank;

    { // fixed edge operators
        Rng rng(opts.seed, rng_stream::kTest);
        ag::Var x = ag::leaf(random_tensor(Shape4(1, 3, 5, 5), rng));
        reports.push_back(detail::run_block(
            "fixed_operators", opts, [&] { return ag::sum(edge_magnitude(x, bank)); }, {x}));
    }
    { // multi-operator conv block
        Rng rng(opts.seed + 1, rng_stream::kTest);
        McoParams p = make_mco_params(4, rng);
        ag::Var x = ag::leaf(random_tensor(Shape4(1, 4, 5, 5), rng));
        std::vector<ag::Var> leaves{x,
                                    p.adjust_1x1.weight,
                                    p.adjust_1x1.bias,
                                    p.branch_3x3.weight,
                                    p.branch_3x3.bias,
                                    p.branch_5x5.weight,
                                    p.branch_5x5.bias,
                                    p.fuse_3x3.weight,
                                    p.fuse_3x3.bias};
        reports.push_back(detail::run_block(
            "mco", opts, [&] { return ag::sum(mco_forward(x, p, bank)); }, leaves));
    }
    { // softmax-cascade block
        Rng rng(opts.seed + 2, rng_stream::kTest);
        MscParams p = make_msc_params(4, rng);
        ag::Var x = ag::leaf(random_tensor(Shape4(1, 4, 4, 4), rng));
        std::vector<ag::Var> leaves{x, p.dconv.weight, p.dconv.bias, p.fuse.weight, p.fuse.bias};
        reports.push_back(detail::run_block(
            "msc", opts, [&] { return ag::sum(msc_forward(x, p)); }, leaves));
    }
    { // graph attention at alpha = 1 (no discrete selection in the path)
        Rng rng(opts.seed + 3, rng_stream::kTest);
        AsgnnParams p = make_asgnn_params(4, 4, rng);
        ag::Var x = ag::leaf(random_tensor(Shape4(1, 4, 4, 4), rng));
        reports.push_back(detail::run_block(
            "asgnn", opts, [&] { return ag::sum(asgnn_forward(x, p, 2, 1.0)); }, {x, p.w_g}));
    }
    { // full tiny network
        NetworkConfig cfg;
        cfg.scale = 2;
        cfg.width = 4;
        cfg.fem_count = 1;
        cfg.dfcm_per_fem = 1;
        cfg.mco_count = 1;
        cfg.msc_count = 1;
        cfg.patch = 2;
        cfg.alpha = 1.0;
        ModelParams mp = param_init(cfg, opts.seed + 4);
        Rng rng(opts.seed + 4, rng_stream::kTest);
        ag::Var x = ag::leaf(random_tensor(Shape4(1, 1, 8, 8), rng, 0.0, 1.0));
        std::vector<ag::Var> leaves{x};
        for (const NamedParam& p : named_params(mp)) leaves.push_back(p.var);
        reports.push_back(detail::run_block(
            "network", opts, [&] { return ag::sum(forward(mp, x)); }, leaves));
    }
    { // l1 loss away from ties
        Rng rng(opts.seed + 5, rng_stream::kTest);
        ag::Var pred = ag::leaf(random_tensor(Shape4(1, 2, 3, 3), rng));
        Tensor offset = random_tensor_away_from_zero(Shape4(1, 2, 3, 3), rng, 0.05);
        Tensor target_v = pred->value;
        for (std::size_t i = 0; i < target_v.size(); ++i) target_v[i] += offset[i];
        ag::Var target = ag::constant(std::move(target_v));
        reports.push_back(detail::run_block(
            "l1_loss", opts, [&] { return ag::l1_loss(pred, target); }, {pred}));
    }
    return reports;
}

// Convex sanity probe: one linear layer trained with L1 to a fixed target
// must reduce the loss.
inline std::pair<double, double> linear_probe_losses(int steps, std::uint64_t seed) {
    Rng rng(seed, rng_stream::kTest);
    ConvLayer layer = make_conv(2, 2, 1, 0, 1, rng);
    ag::Var x = ag::constant(random_tensor(Shape4(1, 2, 4, 4), rng));
    ag::Var target = ag::constant(random_tensor(Shape4(1, 2, 4, 4), rng));
    std::vector<NamedParam> params{{"probe.w", layer.weight, true}, {"probe.b", layer.bias, true}};
    OptimState st;
    st.init(params);
    AdamWConfig cfg;
    cfg.lr = 1e-2;
    cfg.weight_decay = 0.0;
    double first = 0.0, last = 0.0;
    for (int i = 0; i < steps; ++i) {
        ag::Var loss = ag::l1_loss(layer(x), target);
        if (i == 0) first = loss->value[0];
        last = loss->value[0];
        for (NamedParam& p : params) ag::zero_grad(p.var);
        ag::backward(loss);
        adamw_step(params, st, cfg);
    }
    return {first, last};
}

} // namespace sgsr

// Command-line surface: dataset degradation, toy training, inference,
// evaluation, gradient checks, and ablation sweeps.

#include <CLI11.hpp>

#include "sgsr/pipeline.hpp"

using namespace sgsr;

namespace {

void add_network_flags(CLI::App* app, NetworkConfig& net) {
    app->add_option("--scale", net.scale, "upscaling factor (2 or 4)");
    app->add_option("--width", net.width, "channel width c (multiple of 4)");
    app->add_option("--fem", net.fem_count, "feature extraction module count");
    app->add_option("--dfcm", net.dfcm_per_fem, "DFCM count per FEM");
    app->add_option("--mco", net.mco_count, "MCO blocks per DFCM");
    app->add_option("--msc", net.msc_count, "MSC blocks per DFCM");
    app->add_option("--alpha", net.alpha, "sparsity fraction in (0,1]");
    app->add_option("--patch", net.patch, "attention window size");
    app->add_option("--lsh-planes", net.lsh_planes, "hash hyperplane count");
    app->add_flag("--no-bicubic-skip{false},--bicubic-skip{true}", net.use_bicubic_skip,
                  "toggle the bicubic skip connection");
    app->add_flag("--no-attention{false},--attention{true}", net.use_asgnn,
                  "toggle the sparse graph attention path");
}

void add_degrade_flags(CLI::App* app, DegradeOptions& deg) {
    app->add_option("--blur-size", deg.blur_kernel_size, "Gaussian kernel size (odd)");
    app->add_option("--blur-sigma", deg.blur_sigma, "Gaussian sigma");
    app->add_option("--noise-std", deg.noise_std, "additive noise std on [0,1]");
    app->add_flag("--blur-first", deg.blur_before_downsample,
                  "blur before downsampling instead of after");
}

void add_optim_flags(CLI::App* app, AdamWConfig& opt) {
    app->add_option("--lr", opt.lr, "learning rate");
    app->add_option("--beta1", opt.beta1, "first-moment decay");
    app->add_option("--beta2", opt.beta2, "second-moment decay");
    app->add_option("--weight-decay", opt.weight_decay, "decoupled weight decay");
    app->add_option("--adam-eps", opt.epsilon, "optimizer epsilon");
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"MRI super-resolution with windowed sparse graph attention"};
    app.require_subcommand(1);
    app.set_config("--config", "", "flat key/value config file with per-command sections");

    cli::DegradeCmd degrade_cmd;
    CLI::App* degrade = app.add_subcommand("degrade", "build an LR dataset from HR images");
    degrade->add_option("--hr-dir", degrade_cmd.hr_dir, "directory of HR .pgm files")->required();
    degrade->add_option("--out", degrade_cmd.out_dir, "output directory")
        ->envname("SGSR_OUT")
        ->required();
    degrade->add_option("--scale", degrade_cmd.scale, "downsampling factor");
    degrade->add_option("--seed", degrade_cmd.seed, "base RNG seed");
    degrade->add_option("--holdout", degrade_cmd.holdout, "trailing images for manifest_test.txt");
    degrade->add_option("--maxval", degrade_cmd.write_maxval, "PGM maxval (255 or 65535)");
    add_degrade_flags(degrade, degrade_cmd.deg);

    cli::TrainCmd train_cmd;
    CLI::App* train = app.add_subcommand("train", "train a model on a degraded dataset");
    train->add_option("--manifest", train_cmd.manifest, "training manifest")->required();
    train->add_option("--eval-manifest", train_cmd.eval_manifest, "held-out manifest");
    train->add_option("--out", train_cmd.out_dir, "output directory")
        ->envname("SGSR_OUT")
        ->required();
    train->add_option("--init-checkpoint", train_cmd.init_checkpoint, "resume from checkpoint");
    train->add_option("--epochs", train_cmd.run.epochs, "epoch count");
    train->add_option("--steps", train_cmd.run.max_steps, "hard cap on optimizer steps");
    train->add_option("--batch", train_cmd.run.batch_size, "batch size");
    train->add_option("--crop", train_cmd.run.crop, "HR crop size");
    train->add_option("--seed", train_cmd.run.seed, "training seed");
    train->add_option("--eval-every", train_cmd.run.eval_every, "epochs between evaluations");
    add_network_flags(train, train_cmd.net);
    add_optim_flags(train, train_cmd.optim);

    cli::InferCmd infer_cmd;
    CLI::App* infer = app.add_subcommand("infer", "super-resolve a directory of LR images");
    infer->add_option("--checkpoint", infer_cmd.checkpoint, "model checkpoint")->required();
    infer->add_option("--lr-dir", infer_cmd.lr_dir, "directory of LR .pgm files")->required();
    infer->add_option("--out", infer_cmd.out_dir, "output directory")
        ->envname("SGSR_OUT")
        ->required();
    infer->add_option("--maxval", infer_cmd.write_maxval, "PGM maxval for outputs");

    cli::EvalCmd eval_cmd;
    CLI::App* eval = app.add_subcommand("eval", "PSNR/SSIM report against ground truth");
    eval->add_option("--hr-dir", eval_cmd.hr_dir, "ground-truth directory")->required();
    eval->add_option("--sr-dir", eval_cmd.sr_dir, "super-resolved directory")->required();
    eval->add_option("--lr-dir", eval_cmd.lr_dir, "LR directory for the bicubic baseline row");
    eval->add_option("--out", eval_cmd.out_dir, "directory for report.txt")->envname("SGSR_OUT");
    eval->add_option("--scale", eval_cmd.scale, "scale column value");
    eval->add_option("--method", eval_cmd.method_name, "method row label");

    cli::GradcheckCmd gradcheck_cmd;
    CLI::App* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient suite");
    gradcheck->add_option("--tolerance", gradcheck_cmd.tolerance, "max relative error allowed");
    gradcheck->add_option("--out", gradcheck_cmd.out_dir, "directory for gradcheck.txt")
        ->envname("SGSR_OUT");

    cli::AblateCmd ablate_cmd;
    CLI::App* ablate = app.add_subcommand("ablate", "toy-scale sweep along one ablation axis");
    ablate->add_option("--axis", ablate_cmd.axis, "alpha|fem|bicubic|attention|mco-msc")
        ->required();
    ablate->add_option("--hr-dir", ablate_cmd.hr_dir, "directory of HR .pgm files")->required();
    ablate->add_option("--out", ablate_cmd.out_dir, "output directory")->envname("SGSR_OUT");
    ablate->add_option("--seed", ablate_cmd.seed, "shared seed across arms");
    ablate->add_option("--steps", ablate_cmd.run.max_steps, "optimizer steps per arm");
    ablate->add_option("--batch", ablate_cmd.run.batch_size, "batch size");
    ablate->add_option("--crop", ablate_cmd.run.crop, "HR crop size");
    ablate->add_option("--holdout", ablate_cmd.holdout, "held-out image count");
    add_network_flags(ablate, ablate_cmd.net);
    add_degrade_flags(ablate, ablate_cmd.deg);
    add_optim_flags(ablate, ablate_cmd.optim);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return cli::exit_code::usage;
    }

    return cli::guarded([&]() -> int {
        if (degrade->parsed()) return cli::cmd_degrade(degrade_cmd);
        if (train->parsed()) return cli::cmd_train(train_cmd);
        if (infer->parsed()) return cli::cmd_infer(infer_cmd);
        if (eval->parsed()) return cli::cmd_eval(eval_cmd);
        if (gradcheck->parsed()) return cli::cmd_gradcheck(gradcheck_cmd);
        if (ablate->parsed()) return cli::cmd_ablate(ablate_cmd);
        return cli::exit_code::usage;
    });
}

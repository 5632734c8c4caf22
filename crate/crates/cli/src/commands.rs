use std::path::{Path, PathBuf};

use scsnet::eval::{evaluate, predict_pair, EvalOptions};
use scsnet::gradcheck::{format_table, run, GradcheckOptions};
use scsnet::imaging::{
    load_rgb, read_manifest, resize_bicubic, save_rgb, synth_dataset, write_manifest, LabImage,
    Planar, RgbImage,
};
use scsnet::model::{Generator, Mode};
use scsnet::training::{load_pairs, Checkpoint, StepLog, Trainer};
use scsnet::{RunConfig, ScsError};

use crate::failure::Failure;
use crate::{ColorizeArgs, DatagenArgs, EvalArgs, GradcheckArgs, TrainArgs};

type CmdResult = Result<(), Failure>;

const SEED_VAR: &str = "SCS_SEED";
const LAST_CHECKPOINT: &str = "last.scs";

/// `SCS_SEED` when set, else `fallback`.
fn seed_override(fallback: u64) -> Result<u64, Failure> {
    match std::env::var(SEED_VAR) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| Failure::Usage(format!("{SEED_VAR}=`{v}` is not an unsigned integer"))),
        Err(std::env::VarError::NotPresent) => Ok(fallback),
        Err(e) => Err(Failure::Usage(format!("{SEED_VAR}: {e}"))),
    }
}

fn check_image_path(flag: &str, path: &Path) -> CmdResult {
    match path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .as_deref()
    {
        Some("png" | "ppm" | "pnm") => Ok(()),
        _ => Err(Failure::Usage(format!(
            "{flag} {}: expected a .png or .ppm file",
            path.display()
        ))),
    }
}

fn check_scale(scale: f64, min_exclusive: f64) -> CmdResult {
    if scale.is_finite() && scale > min_exclusive {
        Ok(())
    } else {
        Err(Failure::Usage(format!(
            "--scale {scale} must be a finite number above {min_exclusive}"
        )))
    }
}

/// Rejects inputs the network cannot consume as a data error.
fn check_source(gen: &Generator, h: usize, w: usize) -> Result<(), ScsError> {
    gen.config()
        .check_input(h, w)
        .map_err(|e| ScsError::Data(format!("source image: {e}")))
}

pub fn datagen(args: &DatagenArgs) -> CmdResult {
    if args.n == 0 {
        return Err(Failure::Usage("--n must be at least 1".into()));
    }
    if args.size == 0 {
        return Err(Failure::Usage("--size must be at least 1".into()));
    }
    let seed = seed_override(args.seed)?;
    let images = synth_dataset(seed, args.n, args.size)?;
    std::fs::create_dir_all(&args.out).map_err(|e| ScsError::Io {
        path: args.out.clone(),
        source: e,
    })?;
    let mut files = Vec::with_capacity(images.len());
    for (i, img) in images.iter().enumerate() {
        let name = PathBuf::from(format!("shape_{i:05}.png"));
        save_rgb(img, &args.out.join(&name))?;
        files.push(name);
    }
    let manifest = write_manifest(&args.out, &files)?;
    println!(
        "wrote {} images, manifest {}",
        files.len(),
        manifest.display()
    );
    Ok(())
}

pub fn train(args: &TrainArgs) -> CmdResult {
    let mut cfg = RunConfig::load(&args.config)?;
    cfg.seed = seed_override(cfg.seed)?;
    let mut trainer = if args.resume {
        let ck = Checkpoint::load(&args.out.join(LAST_CHECKPOINT))?;
        let mut saved = ck.meta.config.clone();
        (saved.epochs, saved.max_steps, saved.checkpoint_every) =
            (cfg.epochs, cfg.max_steps, cfg.checkpoint_every);
        if saved != cfg {
            eprintln!("warning: configuration differs from the checkpoint; only the schedule keys are taken from it");
        }
        let mut t = Trainer::resume(&ck, load_pairs(&ck.meta.config)?)?;
        t.set_schedule(cfg.epochs, cfg.max_steps, cfg.checkpoint_every)?;
        println!("resuming at step {}", t.step());
        t
    } else {
        Trainer::new(cfg.clone(), load_pairs(&cfg)?)?
    };
    println!("{}", StepLog::HEADER);
    trainer.run(Some(&args.out), |entry| println!("{entry}"))?;
    println!(
        "finished at step {}; checkpoint {}",
        trainer.step(),
        args.out.join(LAST_CHECKPOINT).display()
    );
    Ok(())
}

pub fn colorize(args: &ColorizeArgs) -> CmdResult {
    check_scale(args.scale, 0.0)?;
    check_image_path("--input", &args.input)?;
    check_image_path("--out", &args.out)?;
    if let Some(r) = &args.reference {
        check_image_path("--ref", r)?;
    }
    let reference_path = match (args.mode, &args.reference) {
        (Mode::Ref, None) => return Err(Failure::Usage("--mode ref requires --ref".into())),
        (Mode::Ref, Some(r)) => Some(r),
        (Mode::Auto, Some(r)) => {
            eprintln!("warning: --ref {} is ignored in auto mode", r.display());
            None
        }
        (Mode::Auto, None) => None,
    };

    let (gen, params) = Checkpoint::load(&args.ckpt)?.generator()?;
    let source = load_rgb(&args.input)?.to_lab().l_channel();
    let (h, w) = (source.height(), source.width());
    check_source(&gen, h, w)?;
    let reference = match reference_path {
        Some(path) => {
            let rgb = load_rgb(path)?;
            let resized = RgbImage::clamped(resize_bicubic(rgb.planar(), h, w)?)?;
            Some(resized.to_lab().to_tensor())
        }
        None => None,
    };
    let out = gen.predict(
        &params,
        &source.to_tensor(),
        reference.as_ref(),
        args.mode,
        args.scale,
    )?;
    let lab = LabImage::from_planar(Planar::from_batch(&out)?.remove(0))?;
    save_rgb(&lab.to_rgb(), &args.out)?;
    println!(
        "{}x{} -> {}x{} {}",
        h,
        w,
        lab.height(),
        lab.width(),
        args.out.display()
    );
    Ok(())
}

pub fn eval(args: &EvalArgs) -> CmdResult {
    check_scale(args.scale, 1.0)?;
    if let Some(csv) = &args.csv {
        if csv.as_os_str().is_empty() {
            return Err(Failure::Usage("--csv needs a file name".into()));
        }
    }
    let seed = seed_override(args.seed)?;
    let ck = Checkpoint::load(&args.ckpt)?;
    let (gen, params) = ck.generator()?;
    let files = read_manifest(&args.dataset)?;
    let images = files
        .iter()
        .map(|f| {
            let name = f.file_name().map_or_else(
                || f.display().to_string(),
                |n| n.to_string_lossy().into_owned(),
            );
            Ok((name, load_rgb(f)?))
        })
        .collect::<Result<Vec<_>, ScsError>>()?;
    let opts = EvalOptions {
        scale: args.scale,
        mode: args.mode,
        seed,
        elastic: ck.meta.config.elastic,
    };
    let report = evaluate(&images, &opts, |pair, reference| {
        check_source(&gen, pair.source.height(), pair.source.width())?;
        predict_pair(&gen, &params, pair, reference, args.mode)
    })?;
    print!("{}", report.to_text());
    if let Some(csv) = &args.csv {
        std::fs::write(csv, report.to_csv()).map_err(|e| ScsError::Io {
            path: csv.clone(),
            source: e,
        })?;
    }
    Ok(())
}

pub fn gradcheck(args: &GradcheckArgs) -> CmdResult {
    if args.seeds == 0 {
        return Err(Failure::Usage("--seeds must be at least 1".into()));
    }
    let opts = GradcheckOptions {
        seed: seed_override(args.seed)?,
        seeds: args.seeds,
        adjoint_fault: args.corrupt_adjoint.clone(),
    };
    let rows = run(&opts)?;
    print!("{}", format_table(&rows));
    let failed: Vec<&str> = rows
        .iter()
        .filter(|r| !r.passed())
        .map(|r| r.name.as_str())
        .collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Check(format!(
            "gradient check failed for: {}",
            failed.join(", ")
        )))
    }
}

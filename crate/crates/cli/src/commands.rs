use std::path::{Path, PathBuf};
use std::time::Duration;

use roixai::engine::EngineFailure;
use roixai::exec::{default_jobs, try_parallel_map};
use roixai::io::{read_image, read_mask, write_image, write_mask, IMPORTANCE_MAGIC};
use roixai::lime::{self, LimeConfig, LimeScore};
use roixai::occlusion::{self, OcclusionConfig};
use roixai::preprocess::{enhance, to_grayscale, PreprocessConfig};
use roixai::report::{write_comparison, write_delta, write_heatmap, write_report, CompareDelta};
use roixai::rise::{self, RiseConfig};
use roixai::roi::{binarize_importance, resize_mask_nn, RoiConfig};
use roixai::{
    BinaryMask, ExplainReport, Fill, FloatMap, ImageU8, Predictor, RunOptions, SaliencyMap,
};

use crate::args::{Command, ExplainArgs, LimeScoreArg, MethodArg, PreprocessArgs, RoiArgs};
use crate::spec::PredictorSpec;
use crate::{Cli, CliError, EXIT_INPUT};

pub fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Preprocess(a) => cmd_preprocess(&a),
        Command::Roi(a) => cmd_roi(&a),
        Command::Explain(a) => cmd_explain(&a),
        Command::Compare(a) => cmd_compare(&a),
    }
}

fn with_path(path: &Path) -> impl Fn(roixai::Error) -> CliError + '_ {
    move |e| {
        let mut err = CliError::from(e);
        err.message = format!("{}: {}", path.display(), err.message);
        err
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    std::fs::write(path, bytes).map_err(|e| CliError::input(format!("{}: {e}", path.display())))
}

fn create_dir(path: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(path).map_err(|e| CliError::input(format!("{}: {e}", path.display())))
}

/// `ROWSxCOLS` or `WIDTHxHEIGHT`.
pub fn parse_pair(s: &str, what: &str) -> Result<(usize, usize), CliError> {
    let bad = || CliError::input(format!("{what} '{s}': expected AxB"));
    let (a, b) = s.split_once(['x', 'X']).ok_or_else(bad)?;
    Ok((
        a.trim().parse().map_err(|_| bad())?,
        b.trim().parse().map_err(|_| bad())?,
    ))
}

fn jobs(n: usize) -> usize {
    if n == 0 {
        default_jobs()
    } else {
        n
    }
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "image".into())
}

fn is_image_file(path: &Path) -> bool {
    path.is_file()
        && path.extension().and_then(|e| e.to_str()).is_some_and(|e| {
            ["png", "pgm", "ppm", "pnm"].contains(&e.to_ascii_lowercase().as_str())
        })
}

// ---------------------------------------------------------------------------

pub fn cmd_preprocess(a: &PreprocessArgs) -> Result<(), CliError> {
    let cfg = PreprocessConfig {
        t_bg: a.t_bg,
        pct_low: a.pct_low,
        pct_high: a.pct_high,
        clahe_clip: a.clahe_clip,
        tile_grid: parse_pair(&a.tile_grid, "tile grid")?,
        target_size: a.target_size,
    };
    cfg.validate()?;

    if a.input.is_dir() {
        let mut inputs: Vec<PathBuf> = std::fs::read_dir(&a.input)
            .map_err(|e| CliError::input(format!("{}: {e}", a.input.display())))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| is_image_file(p))
            .collect();
        inputs.sort();
        create_dir(&a.out)?;
        try_parallel_map(inputs.len(), jobs(a.jobs), |i| {
            let src = &inputs[i];
            let img = read_image(src).map_err(with_path(src))?;
            let out = enhance(&img, &cfg).map_err(with_path(src))?;
            let dst = a.out.join(format!("{}.png", stem(src)));
            write_image(&dst, &out).map_err(with_path(&dst))
        })
        .map_err(|aborted| aborted.error)?;
        println!(
            "enhanced {} image(s) into {}",
            inputs.len(),
            a.out.display()
        );
        return Ok(());
    }

    let img = read_image(&a.input).map_err(with_path(&a.input))?;
    let out = enhance(&img, &cfg).map_err(with_path(&a.input))?;
    let dst = if is_image_path(&a.out) {
        a.out.clone()
    } else {
        create_dir(&a.out)?;
        a.out.join(format!("{}.png", stem(&a.input)))
    };
    write_image(&dst, &out).map_err(with_path(&dst))?;
    println!("{}", dst.display());
    Ok(())
}

fn is_image_path(p: &Path) -> bool {
    p.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| ["png", "pgm"].contains(&e.to_ascii_lowercase().as_str()))
}

// ---------------------------------------------------------------------------

/// Raw XIMP files are recognized by their magic; anything else is decoded as
/// an image whose gray levels are scaled to `[0, 1]`.
pub fn read_importance_any(path: &Path) -> Result<FloatMap, CliError> {
    let bytes =
        std::fs::read(path).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
    if bytes.starts_with(&IMPORTANCE_MAGIC) {
        return roixai::io::decode_importance(&bytes).map_err(with_path(path));
    }
    let img = roixai::io::decode_image(&bytes).map_err(with_path(path))?;
    let gray = to_grayscale(&img)?;
    let (w, h) = gray.dims();
    Ok(FloatMap::new(
        w,
        h,
        gray.data().iter().map(|&v| f64::from(v) / 255.0).collect(),
    )?)
}

pub fn cmd_roi(a: &RoiArgs) -> Result<(), CliError> {
    let cfg = RoiConfig {
        gauss_sigma: a.gauss_sigma,
        threshold: a.threshold,
        top_fraction: a.top_fraction,
    };
    let map = read_importance_any(&a.importance)?;
    let mut mask = binarize_importance(&map, &cfg).map_err(with_path(&a.importance))?;
    if let Some(size) = &a.resize {
        let (w, h) = parse_pair(size, "resize")?;
        mask = resize_mask_nn(&mask, w, h)?;
    }
    write_mask(&a.out, &mask).map_err(with_path(&a.out))?;
    println!(
        "{}: {} of {} pixels selected",
        a.out.display(),
        mask.count(),
        mask.data().len()
    );
    Ok(())
}

// ---------------------------------------------------------------------------

/// Heatmaps (file suffix, map) and report of one engine run.
pub struct Outcome {
    pub report: ExplainReport,
    pub maps: Vec<(String, SaliencyMap)>,
}

pub struct Prepared {
    pub image: ImageU8,
    pub predictor: Box<dyn Predictor>,
    pub roi: Option<BinaryMask>,
    pub stem: String,
}

fn method_name(m: MethodArg) -> &'static str {
    match m {
        MethodArg::Occlusion => "occlusion",
        MethodArg::Rise => "rise",
        MethodArg::Lime => "lime",
    }
}

pub fn prepare(a: &ExplainArgs) -> Result<Prepared, CliError> {
    let raw = read_image(&a.image).map_err(with_path(&a.image))?;
    let mut image = to_grayscale(&raw)?;
    if a.enhance {
        image = enhance(&image, &PreprocessConfig::default())?;
    }
    let roi = match &a.roi {
        Some(p) => {
            let m = read_mask(p).map_err(with_path(p))?;
            m.ensure_dims(image.width(), image.height())
                .map_err(with_path(p))?;
            Some(m)
        }
        None => None,
    };
    if !a.timeout_secs.is_finite() || a.timeout_secs <= 0.0 {
        return Err(CliError::input("timeout must be positive"));
    }
    let spec = PredictorSpec::parse(&a.predictor)?;
    let predictor = spec.build(&image, Duration::from_secs_f64(a.timeout_secs))?;
    Ok(Prepared {
        image,
        predictor,
        roi,
        stem: stem(&a.image),
    })
}

fn scales(s: &str) -> Result<Vec<f64>, CliError> {
    s.split(',')
        .map(|v| v.trim().parse::<f64>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|_| CliError::input(format!("scales '{s}': expected comma-separated numbers")))
}

/// Runs the configured engine. On failure the partial report, if any, is
/// returned alongside the error.
pub fn run_engine(
    a: &ExplainArgs,
    p: &Prepared,
    roi: Option<&BinaryMask>,
) -> Result<Outcome, (CliError, Option<Box<ExplainReport>>)> {
    let pre = |e: CliError| (e, None);
    let fill: Fill = a.fill.parse().map_err(|e: roixai::Error| pre(e.into()))?;
    let opts = RunOptions {
        jobs: jobs(a.jobs),
        roi_flops: a.roi_flops,
    };
    let engine_err = |f: EngineFailure| (CliError::from(f.error), f.partial);
    let image = &p.image;
    let predictor = p.predictor.as_ref();

    match a.method {
        MethodArg::Occlusion => {
            let cfg = OcclusionConfig {
                patch: a.patch,
                stride: a.stride,
                fill,
                t_bg: a.t_bg,
            };
            occlusion::validate_config(&cfg).map_err(|e| pre(e.into()))?;
            let mut out = occlusion::run(image, predictor, roi, &cfg, &opts).map_err(|mut f| {
                if let Some(r) = f.partial.as_mut() {
                    r.seed = a.seed;
                }
                engine_err(f)
            })?;
            out.report.seed = a.seed;
            Ok(Outcome {
                report: out.report,
                maps: vec![(String::new(), out.saliency)],
            })
        }
        MethodArg::Rise => {
            let cfg = RiseConfig {
                n_masks: a.n_masks,
                p1: a.p1,
                base_grid: parse_pair(&a.base_grid, "base grid").map_err(pre)?,
                random_shift: !a.no_shift,
                seed: a.seed,
            };
            let out = rise::run(image, predictor, roi, &cfg, &opts).map_err(engine_err)?;
            Ok(Outcome {
                report: out.report,
                maps: vec![
                    ("_fidelity".into(), out.fidelity),
                    ("_relevance".into(), out.relevance),
                ],
            })
        }
        MethodArg::Lime => {
            let cfg = LimeConfig {
                n_samples: a.n_samples,
                scales: scales(&a.scales).map_err(pre)?,
                kernel_width: a.kernel_width,
                ridge_lambda: a.ridge_lambda,
                fill,
                t_bg: a.t_bg,
                score: match a.lime_score {
                    LimeScoreArg::Dice => LimeScore::Dice,
                    LimeScoreArg::Mean => LimeScore::MeanScore,
                },
                seed: a.seed,
                ..Default::default()
            };
            let out = lime::run(image, predictor, roi, &cfg, &opts).map_err(engine_err)?;
            let mut maps = vec![(String::new(), out.saliency)];
            if a.debug_scales {
                for (i, s) in out.scales.iter().enumerate() {
                    if s.map.is_empty() {
                        continue;
                    }
                    let coverage = s.labels.labels.iter().map(|&l| u32::from(l > 0)).collect();
                    let map = SaliencyMap::from_raw(
                        image.width(),
                        image.height(),
                        s.map.clone(),
                        coverage,
                    );
                    maps.push((format!("_scale{i}"), map));
                }
            }
            Ok(Outcome {
                report: out.report,
                maps,
            })
        }
    }
}

fn write_outcome(dir: &Path, prefix: &str, outcome: &Outcome) -> Result<Vec<PathBuf>, CliError> {
    let mut written = Vec::new();
    for (suffix, map) in &outcome.maps {
        let path = dir.join(format!("{prefix}{suffix}.png"));
        write_file(&path, &write_heatmap(map)?)?;
        written.push(path);
    }
    let path = dir.join(format!("{prefix}_report.json"));
    write_file(&path, &write_report(&outcome.report))?;
    written.push(path);
    Ok(written)
}

fn fail_with_partial(
    dir: &Path,
    prefix: &str,
    (err, partial): (CliError, Option<Box<ExplainReport>>),
) -> CliError {
    if let Some(report) = partial {
        let path = dir.join(format!("{prefix}_report.json"));
        if write_file(&path, &write_report(&report)).is_ok() {
            eprintln!("partial report written to {}", path.display());
        }
    }
    err
}

pub fn cmd_explain(a: &ExplainArgs) -> Result<(), CliError> {
    let p = prepare(a)?;
    create_dir(&a.out)?;
    let prefix = format!("{}_{}", p.stem, method_name(a.method));
    let outcome =
        run_engine(a, &p, p.roi.as_ref()).map_err(|e| fail_with_partial(&a.out, &prefix, e))?;
    for path in write_outcome(&a.out, &prefix, &outcome)? {
        println!("{}", path.display());
    }
    for w in &outcome.report.warnings {
        eprintln!("warning: {w}");
    }
    Ok(())
}

pub fn cmd_compare(a: &ExplainArgs) -> Result<(), CliError> {
    if a.roi.is_none() {
        return Err(CliError {
            code: EXIT_INPUT,
            message: "compare needs --roi".into(),
        });
    }
    let p = prepare(a)?;
    create_dir(&a.out)?;
    let base = format!("{}_{}", p.stem, method_name(a.method));
    let trad_prefix = format!("{base}_traditional");
    let gated_prefix = format!("{base}_gated");

    let traditional =
        run_engine(a, &p, None).map_err(|e| fail_with_partial(&a.out, &trad_prefix, e))?;
    let gated = run_engine(a, &p, p.roi.as_ref())
        .map_err(|e| fail_with_partial(&a.out, &gated_prefix, e))?;

    let mut written = write_outcome(&a.out, &trad_prefix, &traditional)?;
    written.extend(write_outcome(&a.out, &gated_prefix, &gated)?);
    let delta = CompareDelta::between(&traditional.report, &gated.report);
    let delta_path = a.out.join(format!("{base}_delta.json"));
    write_file(&delta_path, &write_delta(&delta))?;
    let combined = a.out.join(format!("{base}_compare.json"));
    write_file(
        &combined,
        &write_comparison(&traditional.report, &gated.report, &delta),
    )?;
    written.push(delta_path);
    written.push(combined);
    for path in written {
        println!("{}", path.display());
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pair_parsing() {
        assert_eq!(parse_pair("8x8", "g").unwrap(), (8, 8));
        assert_eq!(parse_pair("224X112", "g").unwrap(), (224, 112));
        assert!(parse_pair("8", "g").is_err());
        assert!(parse_pair("ax2", "g").is_err());
    }

    #[test]
    fn scale_list_parsing() {
        assert_eq!(scales("50, 100,200").unwrap(), vec![50.0, 100.0, 200.0]);
        assert!(scales("50,,1").is_err());
    }
}

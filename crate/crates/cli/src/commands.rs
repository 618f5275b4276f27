use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use alprs::eval::{parse_manifest, summarize};
use alprs::image::load_image;
use alprs::matchdb::{build_template_db, load_db, save_db, DIGITS};
use alprs::ocr::{self, ClassifierModel, GridSpec, DEFAULT_NOISE_FRACTION, PLATE_CLASSES};
use alprs::pipeline::{self, glyph_to_grid, parse_grid_size, PipelineConfig, Status};
use alprs::synth;
use anyhow::{bail, Context, Result};
use rayon::prelude::*;

pub const CONFIG_ENV: &str = "ALPRS_CONFIG";

pub fn load_config() -> Result<PipelineConfig> {
    match std::env::var_os(CONFIG_ENV) {
        Some(path) if !path.is_empty() => {
            PipelineConfig::from_file(&path).with_context(|| format!("{CONFIG_ENV} config"))
        }
        _ => Ok(PipelineConfig::default()),
    }
}

pub fn build_templates(dir: &Path, out: &Path, cfg: &PipelineConfig) -> Result<ExitCode> {
    let mut images = BTreeMap::new();
    for d in DIGITS {
        let path = dir.join(format!("{d}.pgm"));
        if !path.exists() {
            bail!("missing template for digit {d}: {}", path.display());
        }
        images.insert(d, load_image(&path)?);
    }
    let db = build_template_db(&images, &cfg.sift)?;
    for e in db.entries() {
        println!("{}\t{} keypoints", e.ch, e.keypoints.len());
    }
    for ch in db.empty_templates() {
        eprintln!("warning: template {ch} has no keypoints");
    }
    save_db(&db, out)?;
    Ok(ExitCode::SUCCESS)
}

fn image_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| matches!(e, "pgm" | "ppm" | "pnm"))
        })
        .collect();
    files.sort();
    Ok(files)
}

pub fn train_ocr(
    dir: &Path,
    grid: Option<&str>,
    order: Option<usize>,
    noise_fraction: Option<f64>,
    out: &Path,
    cfg: PipelineConfig,
) -> Result<ExitCode> {
    let (w, h) = match grid {
        Some(g) => parse_grid_size(g).with_context(|| format!("--grid must be WxH, got {g:?}"))?,
        None => (cfg.grid.width, cfg.grid.height),
    };
    let grid = GridSpec::new(w, h, order.unwrap_or(cfg.grid.order))?;
    let noise = noise_fraction
        .or(cfg.noise_fraction)
        .unwrap_or(DEFAULT_NOISE_FRACTION);

    let mut samples = BTreeMap::new();
    for label in PLATE_CLASSES {
        let class_dir = dir.join(label.to_string());
        let files = if class_dir.is_dir() {
            image_files(&class_dir)?
        } else {
            Vec::new()
        };
        if files.is_empty() {
            bail!("class {label} has no samples in {}", class_dir.display());
        }
        let mut grids = Vec::with_capacity(files.len());
        for f in files {
            let img = load_image(&f)?;
            grids.push(
                glyph_to_grid(&img, &grid, cfg.polarity)
                    .with_context(|| format!("sample {}", f.display()))?,
            );
        }
        samples.insert(label, grids);
    }
    let model = ocr::train(&samples, grid, noise)?;
    for c in &model.classes {
        println!("{}\t{} restrictions", c.label, c.restriction_count);
    }
    model.save(out)?;
    Ok(ExitCode::SUCCESS)
}

pub struct RecognizeOpts {
    pub pattern: Option<String>,
    pub omit_timings: bool,
    pub json: bool,
}

fn apply_pattern(cfg: &mut PipelineConfig, pattern: Option<&str>) -> Result<()> {
    if let Some(p) = pattern {
        cfg.plate_pattern = Some(p.parse()?);
    }
    Ok(())
}

pub fn recognize(
    db: &Path,
    model: &Path,
    images: &[PathBuf],
    opts: &RecognizeOpts,
    mut cfg: PipelineConfig,
) -> Result<ExitCode> {
    apply_pattern(&mut cfg, opts.pattern.as_deref())?;
    let db = load_db(db)?;
    let model = ClassifierModel::load(model)?;
    let mut found_all = true;
    for path in images {
        let img = load_image(path)?;
        let mut report = pipeline::recognize(&path.display().to_string(), &img, &db, &model, &cfg)?;
        if opts.omit_timings {
            report = report.without_timings();
        }
        if opts.json {
            println!("{}", serde_json::to_string(&report)?);
        } else {
            println!("{}", report.to_line());
        }
        found_all &= matches!(report.status, Status::Ok | Status::Partial);
    }
    Ok(if found_all {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

pub fn evaluate(
    db: &Path,
    model: &Path,
    manifest: &Path,
    pattern: Option<String>,
    jobs: Option<usize>,
    omit_timings: bool,
    mut cfg: PipelineConfig,
) -> Result<ExitCode> {
    apply_pattern(&mut cfg, pattern.as_deref())?;
    let text = fs::read_to_string(manifest)
        .with_context(|| format!("reading manifest {}", manifest.display()))?;
    let rows = parse_manifest(&text)?;
    let db = load_db(db)?;
    let model = ClassifierModel::load(model)?;
    let base = manifest.parent().unwrap_or(Path::new("."));

    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = jobs {
        pool = pool.num_threads(n.max(1));
    }
    let reports = pool.build()?.install(|| {
        rows.par_iter()
            .map(|row| {
                let img = load_image(base.join(&row.path))?;
                let r = pipeline::recognize(&row.path, &img, &db, &model, &cfg)?;
                Ok(if omit_timings { r.without_timings() } else { r })
            })
            .collect::<Result<Vec<_>>>()
    })?;
    for r in &reports {
        println!("{}", r.to_line());
    }
    println!("{}", summarize(&rows, &reports)?);
    Ok(ExitCode::SUCCESS)
}

pub fn gen_corpus(
    out: &Path,
    count: usize,
    samples_per_class: usize,
    seed: u64,
) -> Result<ExitCode> {
    let templates = out.join("templates");
    let train = out.join("train");
    let plates = out.join("plates");
    fs::create_dir_all(&templates)?;
    fs::create_dir_all(&plates)?;
    for d in DIGITS {
        synth::render_template(d)
            .context("digit glyph")?
            .save_pgm(templates.join(format!("{d}.pgm")))?;
    }
    for c in PLATE_CLASSES {
        let dir = train.join(c.to_string());
        fs::create_dir_all(&dir)?;
        let glyphs = synth::training_glyphs(c, samples_per_class, seed).context("glyph")?;
        for (i, g) in glyphs.iter().enumerate() {
            g.save_pgm(dir.join(format!("{i:03}.pgm")))?;
        }
    }
    let mut manifest = String::new();
    for i in 0..count {
        let scene = synth::corpus_scene(seed, i);
        let name = format!("plates/{i:04}.pgm");
        scene.image.save_pgm(out.join(&name))?;
        manifest.push_str(&format!(
            "{name}\t{}-{}\n",
            &scene.text[..3],
            &scene.text[3..]
        ));
    }
    fs::write(out.join("manifest.tsv"), manifest)?;
    println!(
        "wrote {count} plates, {} training samples per class to {}",
        samples_per_class,
        out.display()
    );
    Ok(ExitCode::SUCCESS)
}

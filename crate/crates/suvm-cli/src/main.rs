//! Command-line pipeline: dictionary learning, model learning, detection,
//! part localization, synthetic corpora, evaluation and visualization.
//!
//! Exit codes: 0 success, 2 usage error, 3 no category discovered,
//! 4 I/O failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use suvm::detection::{detect_objects, localize_part, DetectParams, ObjectDetection};
use suvm::error::Error;
use suvm::eval::{match_corpus, threshold_sweep, ConfusionMatrix, GroundTruth, ScoredBox};
use suvm::modelfile::{ModelFile, RunConfig};
use suvm::pipeline;
use suvm::raster::GrayRaster;
use suvm::synth;
use suvm::viz;

#[derive(Parser)]
#[command(name = "suvm", version, about = "Unsupervised part-aware object prototypes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags that override the run configuration (file defaults < flags).
#[derive(Args, Clone, Debug, Default)]
struct ConfigFlags {
    /// JSON file with a full run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    stride: Option<usize>,
    #[arg(long)]
    pyramid_ratio: Option<f64>,
    /// Assignment-distance cutoff percentile for detection scans.
    #[arg(long)]
    distance_cutoff: Option<f64>,
    #[arg(long)]
    window_w: Option<usize>,
    #[arg(long)]
    window_h: Option<usize>,
    #[arg(long)]
    pca_dim: Option<usize>,
    #[arg(long)]
    dict_patches: Option<usize>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    variance_threshold: Option<f64>,
    #[arg(long)]
    min_pair_support: Option<u64>,
    #[arg(long)]
    min_component_size: Option<usize>,
    #[arg(long)]
    part_threshold: Option<usize>,
    #[arg(long)]
    compatibility_threshold: Option<f64>,
    #[arg(long)]
    nms_iou: Option<f64>,
    #[arg(long)]
    eval_iou: Option<f64>,
    #[arg(long)]
    part_inclusion: Option<f64>,
}

impl ConfigFlags {
    fn resolve(&self) -> Result<RunConfig, Error> {
        let mut config = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
                    path: path.clone(),
                    source,
                })?;
                serde_json::from_str(&text)
                    .map_err(|e| Error::ModelFormat(format!("config file: {e}")))?
            }
            None => RunConfig::default(),
        };
        macro_rules! over {
            ($($field:ident),*) => {
                $(if let Some(v) = self.$field { config.$field = v; })*
            };
        }
        over!(
            k,
            seed,
            stride,
            pyramid_ratio,
            window_w,
            window_h,
            pca_dim,
            dict_patches,
            lambda,
            variance_threshold,
            min_pair_support,
            min_component_size,
            part_threshold,
            compatibility_threshold,
            nms_iou,
            eval_iou,
            part_inclusion
        );
        if let Some(v) = self.distance_cutoff {
            config.distance_cutoff_percentile = if v < 0.0 { None } else { Some(v) };
        }
        Ok(config)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Learn a visual dictionary from a corpus directory.
    Dict {
        /// Directory of images (one directory = one corpus).
        #[arg(long)]
        corpus: PathBuf,
        /// Output model file (dictionary only).
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        flags: ConfigFlags,
    },
    /// Learn object models from a corpus with an existing dictionary.
    Learn {
        #[arg(long)]
        corpus: PathBuf,
        /// Model file holding the dictionary (from `dict`).
        #[arg(long)]
        dict: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also dump the pair statistics table here.
        #[arg(long)]
        stats_out: Option<PathBuf>,
        #[command(flatten)]
        flags: ConfigFlags,
    },
    /// Detect object instances in images.
    Detect {
        #[arg(long)]
        model: PathBuf,
        /// Images to process (order preserved in the output).
        images: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Write annotated copies of the inputs into this directory.
        #[arg(long)]
        overlay_dir: Option<PathBuf>,
        /// Model index inside the file (default: the largest).
        #[arg(long, default_value_t = 0)]
        model_index: usize,
        #[command(flatten)]
        flags: ConfigFlags,
    },
    /// Detect objects, then localize one target part in each detection.
    Localize {
        #[arg(long)]
        model: PathBuf,
        images: Vec<PathBuf>,
        /// Target part id (see `viz` for the part table).
        #[arg(long)]
        part: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        model_index: usize,
        #[command(flatten)]
        flags: ConfigFlags,
    },
    /// Render a synthetic corpus with ground truth from a model.
    Synth {
        /// Output directory (images + ground_truth.json + model.suvm).
        #[arg(long)]
        out_dir: PathBuf,
        /// Sample exemplars from this model file instead of the built-in
        /// planted object.
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long, default_value_t = 50)]
        images: usize,
        #[arg(long, default_value_t = 1)]
        min_instances: usize,
        #[arg(long, default_value_t = 3)]
        max_instances: usize,
        #[arg(long, default_value_t = 1.0)]
        scale_min: f64,
        #[arg(long, default_value_t = 1.5)]
        scale_max: f64,
        #[command(flatten)]
        flags: ConfigFlags,
    },
    /// Score a detection run against ground truth.
    Eval {
        /// Detection JSON produced by `detect`.
        #[arg(long)]
        detections: PathBuf,
        /// Ground-truth JSON (same schema as `synth` writes).
        #[arg(long)]
        truth: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        iou: f64,
        /// Comma-separated score cutoffs for a precision/recall sweep.
        #[arg(long)]
        sweep: Option<String>,
    },
    /// Cross-category confusion matrix: run every model over every corpus.
    Confuse {
        /// JSON manifest: [{"label": ..., "model": ..., "corpus": ...}].
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        flags: ConfigFlags,
    },
    /// Export the embedding map (SVG + text) and the model as JSON.
    Viz {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out_svg: Option<PathBuf>,
        /// Write the full model structure as JSON here.
        #[arg(long)]
        out_json: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        model_index: usize,
    },
}

#[derive(Serialize, Deserialize)]
struct DetectionsFile {
    config: RunConfig,
    images: Vec<ImageDetections>,
}

#[derive(Serialize, Deserialize)]
struct ImageDetections {
    file: String,
    detections: Vec<ObjectDetection>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            let code = match &err {
                Error::Io { .. } | Error::Image { .. } => 4,
                Error::NoCategory(_) => 3,
                Error::RejectedInput(_) => 2,
                _ => 1,
            };
            ExitCode::from(code)
        }
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Dict { corpus, out, flags } => {
            let config = flags.resolve()?;
            let dictionary = pipeline::build_dictionary(&corpus, &config)?;
            let mf = ModelFile {
                config,
                dictionary,
                models: vec![],
            };
            mf.save(&out)?;
            println!("dictionary: k={} dim={} -> {}", mf.dictionary.k(), mf.dictionary.dim(), out.display());
            println!("checksum: {}", mf.checksum_hex());
            Ok(())
        }
        Command::Learn {
            corpus,
            dict,
            out,
            stats_out,
            flags,
        } => {
            let config = flags.resolve()?;
            let dict_file = ModelFile::load(&dict)?;
            let paths = pipeline::corpus_paths(&corpus)?;
            let images: Vec<GrayRaster> = paths
                .iter()
                .map(|p| GrayRaster::load(p))
                .collect::<Result<_, _>>()?;
            let stats = pipeline::scan_corpus(&images, &dict_file.dictionary, &config)?;
            if let Some(path) = stats_out {
                std::fs::write(&path, stats.to_table()).map_err(|source| Error::Io {
                    path,
                    source,
                })?;
            }
            let models =
                pipeline::learn_models_from_stats(&stats, &dict_file.dictionary, &config)?;
            for m in &models {
                println!(
                    "model '{}': {} viewlets, {} springs, {} parts (gpe stress {:.4})",
                    m.name,
                    m.srn.len(),
                    m.srn.edges.len(),
                    m.cipc.part_count,
                    m.gpe.stress
                );
            }
            let mf = ModelFile {
                config,
                dictionary: dict_file.dictionary,
                models,
            };
            mf.save(&out)?;
            println!("model file: {}", out.display());
            println!("checksum: {}", mf.checksum_hex());
            Ok(())
        }
        Command::Detect {
            model,
            images,
            out,
            overlay_dir,
            model_index,
            flags,
        } => {
            let config = flags.resolve()?;
            let mf = ModelFile::load(&model)?;
            let m = pick_model(&mf, model_index)?;
            let params = detect_params(&config);
            let mut results = Vec::new();
            for path in &images {
                let img = GrayRaster::load(path)?;
                let dets = detect_objects(&img, m, &mf.dictionary, &params)?;
                if let Some(dir) = &overlay_dir {
                    std::fs::create_dir_all(dir).map_err(|source| Error::Io {
                        path: dir.clone(),
                        source,
                    })?;
                    let name = path.file_name().unwrap_or_default();
                    viz::save_overlay(&img, &dets, &dir.join(name))?;
                }
                println!("{}: {} detections", path.display(), dets.len());
                results.push(ImageDetections {
                    file: path.display().to_string(),
                    detections: dets,
                });
            }
            write_json(
                &out,
                &DetectionsFile {
                    config,
                    images: results,
                },
            )
        }
        Command::Localize {
            model,
            images,
            part,
            out,
            model_index,
            flags,
        } => {
            let config = flags.resolve()?;
            let mf = ModelFile::load(&model)?;
            let m = pick_model(&mf, model_index)?;
            let params = detect_params(&config);
            let mut results = Vec::new();
            for path in &images {
                let img = GrayRaster::load(path)?;
                let dets = detect_objects(&img, m, &mf.dictionary, &params)?;
                let parts: Vec<_> = dets
                    .iter()
                    .filter_map(|d| localize_part(d, m, part))
                    .collect();
                println!("{}: {} part instances", path.display(), parts.len());
                results.push(serde_json::json!({
                    "file": path.display().to_string(),
                    "part": part,
                    "localizations": parts,
                }));
            }
            write_json(&out, &results)
        }
        Command::Synth {
            out_dir,
            model,
            images,
            min_instances,
            max_instances,
            scale_min,
            scale_max,
            flags,
        } => {
            let config = flags.resolve()?;
            std::fs::create_dir_all(&out_dir).map_err(|source| Error::Io {
                path: out_dir.clone(),
                source,
            })?;
            let (m, dict) = match model {
                Some(path) => {
                    let mf = ModelFile::load(&path)?;
                    let m = pick_model(&mf, 0)?.clone();
                    (m, mf.dictionary)
                }
                None => synth::demo_model(config.seed)?,
            };
            let corpus = synth::generate_corpus(
                &m,
                &synth::CorpusParams {
                    n_images: images,
                    min_instances,
                    max_instances,
                    min_scale: scale_min,
                    max_scale: scale_max,
                    seed: config.seed,
                    background: 0.5,
                    background_noise: 0.10,
                },
            )?;
            for (img, gt) in corpus.images.iter().zip(&corpus.truth.images) {
                img.save_png(&out_dir.join(&gt.file))?;
            }
            corpus.truth.save(&out_dir.join("ground_truth.json"))?;
            let mf = ModelFile {
                config,
                dictionary: dict,
                models: vec![m],
            };
            mf.save(&out_dir.join("model.suvm"))?;
            println!(
                "synthetic corpus: {} images, model + ground truth in {}",
                images,
                out_dir.display()
            );
            Ok(())
        }
        Command::Eval {
            detections,
            truth,
            iou,
            sweep,
        } => {
            let det_file: DetectionsFile = read_json(&detections)?;
            let gt = GroundTruth::load(&truth)?;
            let (dets, truths) = align_eval_inputs(&det_file, &gt)?;
            let report = match_corpus(&dets, &truths, iou);
            println!("{}", serde_json::to_string_pretty(&report).unwrap());
            if let Some(s) = sweep {
                let cutoffs: Vec<f64> = s
                    .split(',')
                    .map(|t| {
                        t.trim()
                            .parse::<f64>()
                            .map_err(|e| Error::RejectedInput(format!("bad cutoff '{t}': {e}")))
                    })
                    .collect::<Result<_, _>>()?;
                let curve = threshold_sweep(&dets, &truths, iou, &cutoffs);
                println!("{}", serde_json::to_string_pretty(&curve).unwrap());
            }
            Ok(())
        }
        Command::Confuse {
            manifest,
            out,
            flags,
        } => {
            let config = flags.resolve()?;
            #[derive(Deserialize)]
            struct Entry {
                label: String,
                model: PathBuf,
                corpus: PathBuf,
            }
            let entries: Vec<Entry> = read_json(&manifest)?;
            let params = detect_params(&config);
            let mut hits = vec![vec![0usize; entries.len()]; entries.len()];
            let mut totals = vec![0usize; entries.len()];
            let loaded: Vec<(ModelFile, usize)> = entries
                .iter()
                .map(|e| ModelFile::load(&e.model).map(|mf| (mf, 0usize)))
                .collect::<Result<_, _>>()?;
            for (qi, query) in entries.iter().enumerate() {
                let paths = pipeline::corpus_paths(&query.corpus)?;
                totals[qi] = paths.len();
                for path in &paths {
                    let img = GrayRaster::load(path)?;
                    for (mj, (mf, _)) in loaded.iter().enumerate() {
                        let m = pick_model(mf, 0)?;
                        let dets = detect_objects(&img, m, &mf.dictionary, &params)?;
                        if !dets.is_empty() {
                            hits[qi][mj] += 1;
                        }
                    }
                }
            }
            let matrix = ConfusionMatrix::from_hits(
                entries.iter().map(|e| e.label.clone()).collect(),
                &hits,
                &totals,
            );
            println!("{}", matrix.to_table());
            if let Some(path) = out {
                write_json(&path, &matrix)?;
            }
            Ok(())
        }
        Command::Viz {
            model,
            out_svg,
            out_json,
            model_index,
        } => {
            let mf = ModelFile::load(&model)?;
            let m = pick_model(&mf, model_index)?;
            if let Some(path) = &out_svg {
                std::fs::write(path, viz::gpe_svg(m)).map_err(|source| Error::Io {
                    path: path.clone(),
                    source,
                })?;
                println!("embedding map: {}", path.display());
            }
            if let Some(path) = &out_json {
                write_json(path, &mf.to_json())?;
                println!("model json: {}", path.display());
            }
            print!("{}", viz::gpe_table(m));
            Ok(())
        }
    }
}

fn detect_params(config: &RunConfig) -> DetectParams {
    DetectParams {
        stride: config.stride,
        pyramid_ratio: config.pyramid_ratio,
        distance_cutoff_percentile: config.distance_cutoff_percentile,
        compatibility_threshold: config.compatibility_threshold,
        part_threshold: config.part_threshold,
        nms_iou: config.nms_iou,
    }
}

fn pick_model(mf: &ModelFile, index: usize) -> Result<&suvm::generative::SuvModel, Error> {
    mf.models.get(index).ok_or_else(|| {
        Error::RejectedInput(format!(
            "model file holds {} models; index {index} is out of range",
            mf.models.len()
        ))
    })
}

/// Pair detection output with ground truth by file name (basename match).
fn align_eval_inputs(
    dets: &DetectionsFile,
    gt: &GroundTruth,
) -> Result<(Vec<Vec<ScoredBox>>, Vec<Vec<suvm::detection::BoxF>>), Error> {
    let base = |s: &str| {
        Path::new(s)
            .file_name()
            .map(|f| f.to_string_lossy().to_string())
            .unwrap_or_else(|| s.to_string())
    };
    let mut truth_by_file: std::collections::HashMap<String, Vec<suvm::detection::BoxF>> =
        Default::default();
    for img in &gt.images {
        truth_by_file.insert(base(&img.file), img.objects.iter().map(|o| o.bbox).collect());
    }
    let mut det_rows = Vec::new();
    let mut truth_rows = Vec::new();
    for img in &dets.images {
        let key = base(&img.file);
        let truths = truth_by_file.remove(&key).ok_or_else(|| {
            Error::RejectedInput(format!("no ground truth entry for image '{key}'"))
        })?;
        det_rows.push(
            img.detections
                .iter()
                .map(|d| ScoredBox {
                    bbox: d.bbox,
                    score: d.score,
                })
                .collect(),
        );
        truth_rows.push(truths);
    }
    // ground-truth images with no detection entry count as all-missed
    for (_, truths) in truth_by_file {
        det_rows.push(Vec::new());
        truth_rows.push(truths);
    }
    Ok((det_rows, truth_rows))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), Error> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::ModelFormat(format!("serializing output: {e}")))?;
    std::fs::write(path, text).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, Error> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|e| Error::ModelFormat(format!("{}: {e}", path.display())))
}

//! One function per subcommand. Each is a thin wrapper over library calls
//! and returns a human summary plus a JSON summary.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde_json::{json, Value};

use gazedpm::data::{generate_synthetic, Dataset, GazeRecipe, SyntheticSpec};
use gazedpm::dpm::{load_model, save_model, visualize_model, Model};
use gazedpm::eval::{
    class_ap, class_samples, detect_all, load_images, read_detections, run_experiment, write_detections, write_outcome,
    ExperimentSpec,
};
use gazedpm::features::pyramid::{DEFAULT_CELL_SIZE, DEFAULT_LEVELS_PER_OCTAVE};
use gazedpm::features::{build_detection_pyramid, write_pyramid_dump};
use gazedpm::gaze::{write_fixations, DensityMap, FixationRecord, ScreenGeometry};
use gazedpm::train::{train, TrainConfig};
use gazedpm::{Error, Result};

use crate::args::*;
use crate::variant::{parse_strategy, parse_variant};

pub struct Outcome {
    pub text: String,
    pub json: Value,
}

/// Global options every subcommand may consult.
pub struct Globals {
    pub seed: Option<u64>,
    pub config: Option<PathBuf>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |e| Error::io(path, e)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    Ok(BufWriter::new(File::create(path).map_err(io_err(path))?))
}

/// Reads a YAML or JSON config; errors carry the path of the offending field.
pub fn load_config<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    let Some(path) = path else {
        return Ok(T::default());
    };
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
    let located = |p: String, m: String| Error::Config(format!("{}: at '{p}': {m}", path.display()));
    if is_json {
        let de = &mut serde_json::Deserializer::from_str(&text);
        serde_path_to_error::deserialize(de).map_err(|e| located(e.path().to_string(), e.inner().to_string()))
    } else {
        let de = serde_yaml::Deserializer::from_str(&text);
        serde_path_to_error::deserialize(de).map_err(|e| located(e.path().to_string(), e.inner().to_string()))
    }
}

fn variant(s: &str) -> Result<gazedpm::eval::Variant> {
    parse_variant(s).map_err(Error::Config)
}

fn split_ids(ds: &Dataset, split: SplitArg) -> Vec<String> {
    match split {
        SplitArg::Train => ds.train_ids().to_vec(),
        SplitArg::Test => ds.test_ids().to_vec(),
        SplitArg::All => ds.manifest.images.iter().map(|i| i.id.clone()).collect(),
    }
}

/// The gaze recipe a model was trained with.
fn model_recipe(model: &Model) -> Result<GazeRecipe> {
    match &model.metadata.gaze_recipe {
        Some(text) => serde_json::from_str(text).map_err(|e| {
            Error::Config(format!(
                "model '{}' carries an unreadable gaze recipe: {e}",
                model.class_name
            ))
        }),
        None if model.gaze_channels == 0 => Ok(GazeRecipe::default()),
        None => Err(Error::Config(format!(
            "model '{}' has {} gaze channels but records no gaze recipe",
            model.class_name, model.gaze_channels
        ))),
    }
}

fn write_maps(maps: &[DensityMap], out: &Path, id: &str, format: MapFormat) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    match format {
        MapFormat::Grid => {
            let p = out.join(format!("{id}.grid"));
            DensityMap::save(maps, &p)?;
            written.push(p);
        }
        MapFormat::Png if maps.len() == 1 => {
            let p = out.join(format!("{id}.png"));
            maps[0].save_png16(&p)?;
            written.push(p);
        }
        MapFormat::Png => {
            for (j, m) in maps.iter().enumerate() {
                let p = out.join(format!("{id}_{j}.png"));
                m.save_png16(&p)?;
                written.push(p);
            }
        }
    }
    Ok(written)
}

fn render_maps(manifest: &Path, recipe: GazeRecipe, ids: &[String], out: &Path, format: MapFormat) -> Result<Outcome> {
    let ds = Dataset::load(manifest)?;
    let mapper = recipe.prepare(&ds)?;
    std::fs::create_dir_all(out).map_err(io_err(out))?;
    let mut files = 0;
    for id in ids {
        files += write_maps(&mapper.maps(&ds, id)?, out, id, format)?.len();
    }
    let centroids = mapper.centroids().map(|c| c.values());
    Ok(Outcome {
        text: format!("wrote {files} map files for {} images to {}", ids.len(), out.display()),
        json: json!({ "images": ids.len(), "files": files, "out": out, "channels": mapper.channels(), "centroids": centroids }),
    })
}

fn gaze_recipe(g: &Globals, v: &str) -> Result<GazeRecipe> {
    Ok(variant(v)?.recipe(g.seed.unwrap_or(0), ScreenGeometry::default()))
}

fn write_transformed_log(manifest: &Path, recipe: GazeRecipe, out: &Path) -> Result<Outcome> {
    let ds = Dataset::load(manifest)?;
    let mapper = recipe.prepare(&ds)?;
    let mut records = Vec::new();
    for img in &ds.manifest.images {
        for f in mapper.noisy_fixations(&ds, &img.id)? {
            records.push(FixationRecord {
                image_id: img.id.clone(),
                fixation: f,
            });
        }
    }
    let mut w = create(out)?;
    write_fixations(&mut w, &records)?;
    w.flush().map_err(io_err(out))?;
    Ok(Outcome {
        text: format!("wrote {} fixations to {}", records.len(), out.display()),
        json: json!({ "fixations": records.len(), "out": out }),
    })
}

pub fn fixmap(g: &Globals, cmd: &Fixmap) -> Result<Outcome> {
    match cmd {
        Fixmap::Build(a) => {
            let ds = Dataset::load(&a.manifest)?;
            let ids = split_ids(&ds, a.split);
            render_maps(&a.manifest, gaze_recipe(g, &a.variant)?, &ids, &a.out, a.format)
        }
        Fixmap::Noise(a) => {
            let recipe = GazeRecipe {
                noise_scale: a.sigma_scale,
                ..gaze_recipe(g, "gazedpm")?
            };
            write_transformed_log(&a.manifest, recipe, &a.out)
        }
        Fixmap::Subsample(a) => {
            let recipe = GazeRecipe {
                subsample: Some(parse_strategy(&a.strategy).map_err(Error::Config)?),
                ..gaze_recipe(g, "gazedpm")?
            };
            write_transformed_log(&a.manifest, recipe, &a.out)
        }
        Fixmap::Softbin(a) => {
            let ds = Dataset::load(&a.manifest)?;
            let ids = split_ids(&ds, SplitArg::All);
            let recipe = GazeRecipe {
                soft_bins: Some(a.k),
                ..gaze_recipe(g, "gazedpm")?
            };
            render_maps(&a.manifest, recipe, &ids, &a.out, a.format)
        }
    }
}

pub fn synth(g: &Globals, a: &SynthArgs) -> Result<Outcome> {
    let mut spec: SyntheticSpec = match (&g.config, a.hard) {
        (Some(p), _) => load_config(Some(p))?,
        (None, true) => SyntheticSpec::hard(),
        (None, false) => SyntheticSpec::default(),
    };
    if let Some(n) = a.n_train {
        spec.n_train = n;
    }
    if let Some(n) = a.n_test {
        spec.n_test = n;
    }
    if let Some(s) = g.seed {
        spec.seed = s;
    }
    let manifest = generate_synthetic(&spec, &a.out)?;
    let path = a.out.join("manifest.json");
    Ok(Outcome {
        text: format!(
            "wrote {} images with {} annotations; manifest at {}",
            manifest.images.len(),
            manifest.annotations.len(),
            path.display()
        ),
        json: json!({ "manifest": path, "images": manifest.images.len(), "annotations": manifest.annotations.len() }),
    })
}

pub fn train_cmd(g: &Globals, a: &TrainArgs) -> Result<Outcome> {
    let mut config: TrainConfig = load_config(g.config.as_deref())?;
    if let Some(s) = g.seed {
        config.sgd.seed = s;
    }
    let ds = Dataset::load(&a.manifest)?;
    if !ds.classes().contains(&a.class) {
        return Err(Error::NotFound(format!(
            "class '{}' in the dataset annotations",
            a.class
        )));
    }
    let recipe = gaze_recipe(g, &a.variant)?;
    let mapper = recipe.prepare(&ds)?;
    let images = load_images(&ds, &mapper, ds.train_ids())?;
    let (positives, negatives) = class_samples(&ds, &images, &a.class);
    let outcome = train(&a.class, mapper.channels(), &positives, &negatives, &[], &config)?;
    let mut model = outcome.model;
    model.metadata.gaze_recipe = Some(recipe.to_json());
    save_model(&model, &a.out)?;
    if let Some(path) = &a.telemetry {
        let mut w = create(path)?;
        for t in &outcome.telemetry {
            let line = serde_json::to_string(t).expect("telemetry serializes");
            writeln!(w, "{line}").map_err(io_err(path))?;
        }
        w.flush().map_err(io_err(path))?;
    }
    let last = outcome.telemetry.last().map(|t| t.objective);
    Ok(Outcome {
        text: format!(
            "trained '{}' on {} positive and {} negative images ({} rounds, final objective {}); model at {}",
            a.class,
            positives.len(),
            negatives.len(),
            outcome.telemetry.len(),
            last.map_or("n/a".to_string(), |o| format!("{o:.6}")),
            a.out.display()
        ),
        json: json!({
            "class": a.class,
            "model": a.out,
            "rounds": outcome.telemetry.len(),
            "final_objective": last,
            "positive_images": positives.len(),
            "negative_images": negatives.len(),
        }),
    })
}

pub fn detect_cmd(_g: &Globals, a: &DetectArgs) -> Result<Outcome> {
    let model = load_model(&a.model)?;
    let ds = Dataset::load(&a.manifest)?;
    let ids = split_ids(&ds, a.split);
    let dets = if a.threshold == f64::INFINITY {
        Vec::new()
    } else {
        let mapper = model_recipe(&model)?.prepare(&ds)?;
        let images = load_images(&ds, &mapper, &ids)?;
        detect_all(&model, &images, a.threshold)?
    };
    let mut w = create(&a.out)?;
    write_detections(&mut w, &dets)?;
    w.flush().map_err(io_err(&a.out))?;
    Ok(Outcome {
        text: format!(
            "{} detections on {} images written to {}",
            dets.len(),
            ids.len(),
            a.out.display()
        ),
        json: json!({ "detections": dets.len(), "images": ids.len(), "out": a.out }),
    })
}

pub fn eval_cmd(_g: &Globals, a: &EvalArgs) -> Result<Outcome> {
    let ds = Dataset::load(&a.manifest)?;
    let file = File::open(&a.detections).map_err(io_err(&a.detections))?;
    let dets = read_detections(BufReader::new(file))?;
    let ids = split_ids(&ds, a.split);
    let classes = if a.classes.is_empty() {
        ds.classes()
    } else {
        a.classes.clone()
    };
    let mut rows = Vec::new();
    let mut text = String::from("class\tAP\tpositives\n");
    for class in &classes {
        let (ap, n_positive) = class_ap(&ds, &ids, class, &dets, a.iou, a.eleven_point)?;
        text.push_str(&format!("{class}\t{:.2}\t{n_positive}\n", 100.0 * ap));
        rows.push(json!({ "class": class, "ap": ap, "n_positive": n_positive }));
    }
    let map = if rows.is_empty() {
        0.0
    } else {
        rows.iter().map(|r| r["ap"].as_f64().unwrap_or(0.0)).sum::<f64>() / rows.len() as f64
    };
    text.push_str(&format!("mAP\t{:.2}", 100.0 * map));
    Ok(Outcome {
        text,
        json: json!({ "classes": rows, "map": map }),
    })
}

pub fn experiment(g: &Globals, a: &ExperimentArgs) -> Result<Outcome> {
    let mut spec: ExperimentSpec = load_config(g.config.as_deref())?;
    if let Some(v) = &a.variant {
        spec.variant = variant(v)?;
    }
    if let Some(s) = g.seed {
        spec.train.sgd.seed = s;
        spec.gaze_seed = s;
    }
    let ds = Dataset::load(&a.manifest)?;
    let outcome = run_experiment(&ds, &spec)?;
    write_outcome(&outcome, &a.out)?;
    Ok(Outcome {
        text: outcome.report.to_markdown(),
        json: serde_json::to_value(&outcome.report).expect("report serializes"),
    })
}

pub fn viz(_g: &Globals, a: &VizArgs) -> Result<Outcome> {
    let model = a.model.as_deref().map(load_model).transpose()?;
    if !a.dump_pyramid {
        let model = model.ok_or_else(|| Error::invalid("viz needs --model unless --dump-pyramid is given"))?;
        let files = visualize_model(&model, &a.out)?;
        return Ok(Outcome {
            text: format!("wrote {} images to {}", files.len(), a.out.display()),
            json: json!({ "files": files }),
        });
    }
    let (manifest, id) = match (&a.manifest, &a.id) {
        (Some(m), Some(i)) => (m, i),
        _ => return Err(Error::invalid("--dump-pyramid needs --manifest and --id")),
    };
    let ds = Dataset::load(manifest)?;
    let recipe = match &model {
        Some(m) => model_recipe(m)?,
        None => GazeRecipe::default(),
    };
    let mapper = recipe.prepare(&ds)?;
    let image = ds.image(id)?;
    let maps = mapper.maps(&ds, id)?;
    let (cell, lpo, min_cells) = match &model {
        Some(m) => (m.cell_size, m.levels_per_octave, m.min_root_cells()),
        None => (DEFAULT_CELL_SIZE, DEFAULT_LEVELS_PER_OCTAVE, 1),
    };
    let pyramid = build_detection_pyramid(&image, &maps, cell, lpo, min_cells)?;
    let mut w = create(&a.out)?;
    write_pyramid_dump(&pyramid, &mut w).map_err(io_err(&a.out))?;
    w.flush().map_err(io_err(&a.out))?;
    Ok(Outcome {
        text: format!(
            "dumped {} pyramid levels of '{id}' to {}",
            pyramid.levels.len(),
            a.out.display()
        ),
        json: json!({ "levels": pyramid.levels.len(), "channels": pyramid.channels(), "out": a.out }),
    })
}

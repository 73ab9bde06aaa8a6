use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use nalgebra::DMatrix;
use rfcd_core::scenarios::{default_gamma, default_lambda, scenario_id, ScenarioPlan};
use rfcd_core::synthesis::upsample_blocks;
use rfcd_core::{
    classify_scenario, evaluate, export_energy, export_map, generate_latent_scene, noise_for_snr,
    plant_changes, read_image, robust_fusion_cd, simulate_observation, wc_baseline, write_image,
    ChangeResult, ChangeSpec, DegradationModel, MetricsReport, MultiBandImage,
    RegularizationParams, ScenarioId, SceneSpec, ThresholdRule,
};
use serde::Serialize;

use crate::config::{Loaded, RunConfig};

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").with_context(|| format!("cannot write {}", path.display()))
}

fn single_band(values: &[f64], width: usize, height: usize) -> MultiBandImage {
    MultiBandImage::new(
        width,
        height,
        DMatrix::from_row_slice(1, values.len(), values),
    )
    .expect("one value per pixel")
}

fn as_mask(values: &[f64]) -> Vec<bool> {
    values.iter().map(|v| *v > 0.5).collect()
}

/// Writes energy and map as images and as rasters.
fn write_detection(out: &Path, result: &ChangeResult, config: &RunConfig) -> Result<()> {
    let (w, h) = (result.width(), result.height());
    let ext = config.format.extension();
    let map: Vec<f64> = result.map.iter().map(|&d| d as u8 as f64).collect();
    write_image(&single_band(&result.energy, w, h), out.join("energy"))?;
    write_image(&single_band(&map, w, h), out.join("map"))?;
    export_energy(
        &result.energy,
        w,
        h,
        out.join(format!("energy.{ext}")),
        config.format,
    )?;
    export_map(
        &result.map,
        w,
        h,
        out.join(format!("map.{ext}")),
        config.format,
    )?;
    Ok(())
}

#[derive(Serialize)]
struct Grid {
    width: usize,
    height: usize,
    bands: usize,
}

#[derive(Serialize)]
struct DetectReport {
    scenario: ScenarioId,
    swapped: bool,
    latent: Grid,
    latent_pitch: u32,
    seed: u64,
    lambda: f64,
    gamma: f64,
    iterations: usize,
    converged: bool,
    inner_nonconverged: usize,
    rejected_steps: usize,
    final_objective: f64,
    threshold: ThresholdRule,
    tau: f64,
    changed_pixels: usize,
    objective_trace: Vec<f64>,
}

pub fn detect(loaded: &Loaded, out: &Path, seed: u64) -> Result<()> {
    let c = &loaded.config;
    let y1_path = loaded.input(&c.inputs.y1, "y1")?;
    let y2_path = loaded.input(&c.inputs.y2, "y2")?;
    let y1 =
        read_image(&y1_path).with_context(|| format!("cannot read Y1 {}", y1_path.display()))?;
    let y2 =
        read_image(&y2_path).with_context(|| format!("cannot read Y2 {}", y2_path.display()))?;
    let s1 = c.sensor1.spec(y1.band_count());
    let s2 = c.sensor2.spec(y2.band_count());
    let n1 = c.sensor1.noise("sensor1", y1.band_count())?;
    let n2 = c.sensor2.noise("sensor2", y2.band_count())?;
    let plan = classify_scenario(
        &s1,
        (y1.width(), y1.height()),
        &s2,
        (y2.width(), y2.height()),
    )?;
    let lambda = match c.regularization.lambda {
        Some(l) => l,
        None => default_lambda(&n1, &n2)?,
    };
    let gamma = match c.regularization.gamma {
        Some(g) => g,
        None => default_gamma(plan.canonical(&n1, &n2).1)?,
    };
    let params = RegularizationParams::new(lambda, gamma)?;
    let state = robust_fusion_cd(&y1, &y2, &plan, &n1, &n2, &params, &c.am)?;
    let trace = state.objective_trace.clone();
    let result = ChangeResult::from_change(state.dx.clone(), c.threshold, trace.clone())?;

    fs::create_dir_all(out).with_context(|| format!("cannot create {}", out.display()))?;
    write_image(&state.x1, out.join("x1"))?;
    write_image(&state.dx, out.join("dx"))?;
    write_detection(out, &result, c)?;
    let report = DetectReport {
        scenario: plan.id,
        swapped: plan.swapped,
        latent: Grid {
            width: plan.latent.width,
            height: plan.latent.height,
            bands: plan.latent.bands,
        },
        latent_pitch: plan.latent_pitch,
        seed,
        lambda,
        gamma,
        iterations: state.iteration,
        converged: state.converged,
        inner_nonconverged: state.inner_nonconverged,
        rejected_steps: state.rejected_steps,
        final_objective: *trace.last().expect("trace has the initial value"),
        threshold: c.threshold,
        tau: result.tau,
        changed_pixels: result.map.iter().filter(|d| **d).count(),
        objective_trace: trace,
    };
    write_json(&out.join("report.json"), &report)?;
    let mut effective = c.clone();
    effective.seed = seed;
    effective.out = None;
    effective.regularization.lambda = Some(lambda);
    effective.regularization.gamma = Some(gamma);
    fs::write(
        out.join("effective.toml"),
        toml::to_string_pretty(&effective)?,
    )?;
    println!(
        "{}: {} iterations, converged {}, J = {:.6e}, tau = {:.6e}, {} changed pixels",
        report.scenario,
        report.iterations,
        report.converged,
        report.final_objective,
        report.tau,
        report.changed_pixels
    );
    if !report.converged {
        eprintln!(
            "warning: stopped after {} outer iterations without converging",
            report.iterations
        );
    }
    Ok(())
}

#[derive(Serialize)]
struct BaselineReport {
    common_bands: Vec<Vec<usize>>,
    pitch: u32,
    block: usize,
    width: usize,
    height: usize,
    threshold: ThresholdRule,
    tau: f64,
    changed_pixels: usize,
}

pub fn baseline(loaded: &Loaded, out: &Path) -> Result<()> {
    let c = &loaded.config;
    let y1_path = loaded.input(&c.inputs.y1, "y1")?;
    let y2_path = loaded.input(&c.inputs.y2, "y2")?;
    let y1 =
        read_image(&y1_path).with_context(|| format!("cannot read Y1 {}", y1_path.display()))?;
    let y2 =
        read_image(&y2_path).with_context(|| format!("cannot read Y2 {}", y2_path.display()))?;
    let s1 = c.sensor1.spec(y1.band_count());
    let s2 = c.sensor2.spec(y2.band_count());
    let wc = wc_baseline(&y1, &y2, &s1, &s2, c.threshold)?;
    fs::create_dir_all(out).with_context(|| format!("cannot create {}", out.display()))?;
    write_image(&wc.result.dx, out.join("dx"))?;
    write_detection(out, &wc.result, c)?;
    let report = BaselineReport {
        common_bands: wc.common_bands.clone(),
        pitch: wc.pitch,
        block: wc.block,
        width: wc.result.width(),
        height: wc.result.height(),
        threshold: c.threshold,
        tau: wc.result.tau,
        changed_pixels: wc.result.map.iter().filter(|d| **d).count(),
    };
    write_json(&out.join("report.json"), &report)?;
    println!(
        "baseline: {}x{} common grid at pitch {}, {} common bands, {} changed pixels",
        report.width,
        report.height,
        report.pitch,
        report.common_bands.len(),
        report.changed_pixels
    );
    Ok(())
}

pub fn simulate(loaded: &Loaded, out: &Path, seed: u64) -> Result<()> {
    let c = &loaded.config;
    let sim = &c.simulation;
    let s1 = c.sensor1.spec(sim.bands);
    let s2 = c.sensor2.spec(sim.bands);
    let g = gcd(s1.pitch, s2.pitch);
    let dims = |pitch: u32| -> Result<(usize, usize)> {
        let d = (pitch / g) as usize;
        if sim.width % d != 0 || sim.height % d != 0 {
            bail!(
                "simulation grid {}x{} is not divisible by {d}",
                sim.width,
                sim.height
            );
        }
        Ok((sim.width / d, sim.height / d))
    };
    let plan = classify_scenario(&s1, dims(s1.pitch)?, &s2, dims(s2.pitch)?)?;
    let (m1, m2) = caller_models(&plan);
    let scene = SceneSpec {
        width: plan.latent.width,
        height: plan.latent.height,
        band_count: plan.latent.bands,
        region_count: sim.regions,
        signature_scale: sim.signature_scale,
        seed,
    };
    let x1 = generate_latent_scene(&scene)?;
    let change = ChangeSpec {
        changed_fraction: sim.changed_fraction,
        blob_count: sim.blob_count,
        magnitude: sim.magnitude,
    };
    let (x2, truth) = plant_changes(&x1, &change, seed.wrapping_add(1))?;
    let noise = |cfg: &crate::config::SensorConfig,
                 which: &str,
                 model: &DegradationModel,
                 x: &MultiBandImage| {
        let clean = rfcd_core::apply_forward(model, x)?;
        match cfg.noise_variances {
            Some(_) => cfg.noise(which, clean.band_count()),
            None => Ok(noise_for_snr(&clean, sim.snr_db)?),
        }
    };
    let n1 = noise(&c.sensor1, "sensor1", m1, &x1)?;
    let n2 = noise(&c.sensor2, "sensor2", m2, &x2)?;
    let y1 = simulate_observation(&x1, m1, &n1, seed.wrapping_add(2))?;
    let y2 = simulate_observation(&x2, m2, &n2, seed.wrapping_add(3))?;

    fs::create_dir_all(out).with_context(|| format!("cannot create {}", out.display()))?;
    write_image(&y1, out.join("y1"))?;
    write_image(&y2, out.join("y2"))?;
    write_image(&x1, out.join("x1"))?;
    write_image(&x2, out.join("x2"))?;
    let truth_values: Vec<f64> = truth.iter().map(|&t| t as u8 as f64).collect();
    write_image(
        &single_band(&truth_values, scene.width, scene.height),
        out.join("truth"),
    )?;
    let ext = c.format.extension();
    export_map(
        &truth,
        scene.width,
        scene.height,
        out.join(format!("truth.{ext}")),
        c.format,
    )?;

    let mut run = c.clone();
    run.seed = seed;
    run.out = None;
    run.inputs.y1 = Some(PathBuf::from("y1"));
    run.inputs.y2 = Some(PathBuf::from("y2"));
    run.inputs.truth = Some(PathBuf::from("truth"));
    run.sensor1.noise_variances = Some(n1.band_variances().to_vec());
    run.sensor2.noise_variances = Some(n2.band_variances().to_vec());
    run.sensor1.band_groups = Some(s1.band_groups.clone());
    run.sensor2.band_groups = Some(s2.band_groups.clone());
    fs::write(out.join("run.toml"), toml::to_string_pretty(&run)?)?;
    println!(
        "simulated {} on a {}x{}x{} latent grid, {} changed pixels",
        plan.id,
        scene.width,
        scene.height,
        scene.band_count,
        truth.iter().filter(|t| **t).count()
    );
    Ok(())
}

/// Models in the caller's labelling.
fn caller_models(plan: &ScenarioPlan) -> (&DegradationModel, &DegradationModel) {
    plan.canonical(&plan.model1, &plan.model2)
}

fn gcd(a: u32, b: u32) -> u32 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

#[derive(Serialize)]
struct EvaluationReport {
    width: usize,
    height: usize,
    /// Replication factor applied to the scored map.
    block: usize,
    #[serde(flatten)]
    metrics: MetricsReport,
}

pub fn evaluate_outputs(loaded: &Loaded, input: &Path, out: &Path) -> Result<()> {
    let c = &loaded.config;
    let truth_path = loaded.input(&c.inputs.truth, "truth")?;
    let truth = read_image(&truth_path)
        .with_context(|| format!("cannot read truth {}", truth_path.display()))?;
    let map = read_image(input.join("map"))?;
    let energy = match read_image(input.join("energy")) {
        Ok(e) => Some(e),
        Err(rfcd_core::Error::MissingHeader(_)) => None,
        Err(e) => return Err(e.into()),
    };
    let (tw, th) = (truth.width(), truth.height());
    let block = tw / map.width();
    if block == 0 || map.width() * block != tw || map.height() * block != th {
        bail!(
            "a {}x{} map cannot be aligned with a {tw}x{th} truth grid",
            map.width(),
            map.height()
        );
    }
    let align =
        |img: &MultiBandImage| upsample_blocks(&img.band(0), img.width(), img.height(), block);
    let map_values = as_mask(&align(&map));
    let scores = energy.as_ref().map(align);
    let metrics = evaluate(&map_values, scores.as_deref(), &as_mask(&truth.band(0)))?;
    fs::create_dir_all(out).with_context(|| format!("cannot create {}", out.display()))?;
    let report = EvaluationReport {
        width: tw,
        height: th,
        block,
        metrics,
    };
    write_json(&out.join("evaluation.json"), &report)?;
    let m = &report.metrics;
    match m.auc {
        Some(auc) => println!(
            "precision {:.4}, recall {:.4}, F1 {:.4}, AUC {:.4}",
            m.precision, m.recall, m.f1, auc
        ),
        None => println!(
            "precision {:.4}, recall {:.4}, F1 {:.4}",
            m.precision, m.recall, m.f1
        ),
    }
    Ok(())
}

pub fn classify(loaded: &Loaded) -> Result<()> {
    let c = &loaded.config;
    let bands = c.simulation.bands;
    let (id, swapped) = scenario_id(&c.sensor1.spec(bands), &c.sensor2.spec(bands))?;
    if swapped {
        println!("{id} (sensor 1 plays the role of side 2)");
    } else {
        println!("{id}");
    }
    Ok(())
}
